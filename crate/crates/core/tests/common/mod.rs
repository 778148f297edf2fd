#![allow(dead_code)]

use num_complex::Complex64;
use nalgebra::DMatrix;
use qcbb::blp::BlpInstance;
use qcbb::bound::WeightedGraph;
use qcbb::ising::IsingModel;
use rand::Rng;

/// `c.x + M |Ax - b|^2`, straight from the definition.
pub fn oracle_penalized(inst: &BlpInstance, x: &[u8], big_m: f64) -> f64 {
    let cost: f64 = inst.c.iter().zip(x).map(|(c, &v)| c * f64::from(v)).sum();
    let pen: f64 = inst
        .a
        .iter()
        .zip(&inst.b)
        .map(|(row, b)| {
            let r: f64 = row.iter().zip(x).map(|(a, &v)| a * f64::from(v)).sum::<f64>() - b;
            r * r
        })
        .sum();
    cost + big_m * pen
}

pub fn bits(z: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((z >> i) & 1) as u8).collect()
}

pub fn spins(z: usize, n: usize) -> Vec<i8> {
    (0..n).map(|i| if (z >> i) & 1 == 1 { 1 } else { -1 }).collect()
}

/// Energy without the constant, summed term by term.
pub fn oracle_energy(model: &IsingModel, s: &[i8]) -> f64 {
    let mut e = 0.0;
    for (&(i, j), &w) in &model.couplings {
        e += w * f64::from(s[i]) * f64::from(s[j]);
    }
    for (f, &si) in model.fields.iter().zip(s) {
        e += f * f64::from(si);
    }
    e
}

pub fn exhaustive_min_energy(model: &IsingModel) -> f64 {
    let n = model.n_spins;
    (0..1usize << n)
        .map(|z| oracle_energy(model, &spins(z, n)))
        .fold(f64::INFINITY, f64::min)
}

pub fn brute_max_cut(g: &WeightedGraph) -> f64 {
    let n = g.n_vertices;
    if n <= 1 {
        return 0.0;
    }
    // vertex 0 pinned to one side
    (0..1usize << (n - 1))
        .map(|z| {
            let side: Vec<bool> = std::iter::once(true)
                .chain((0..n - 1).map(|i| (z >> i) & 1 == 1))
                .collect();
            g.edges
                .iter()
                .filter(|(u, v, _)| side[*u] != side[*v])
                .map(|e| e.2)
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Random Ising model with sparse couplings and fields.
pub fn random_ising<R: Rng>(rng: &mut R, n: usize) -> IsingModel {
    let mut m = IsingModel::zero(n);
    let density = rng.gen_range(0.2..1.0);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                m.add_coupling(i, j, rng.gen_range(-3.0..3.0));
            }
        }
        if rng.gen_bool(0.7) {
            m.fields[i] = rng.gen_range(-3.0..3.0);
        }
    }
    m
}

/// Dense integer A with both signs; `b = A x0` for a random `x0` so the
/// instance is feasible.
pub fn random_dense<R: Rng>(rng: &mut R, n: usize, m: usize) -> BlpInstance {
    let a: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(-2..=2) as f64).collect())
        .collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=1) as f64).collect();
    let b = a
        .iter()
        .map(|row| row.iter().zip(&x0).map(|(a, x)| a * x).sum())
        .collect();
    let c = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    BlpInstance::new(c, a, b).unwrap()
}

/// Random 0/1 partitioning rows with no planted solution; often infeasible
/// or with very few feasible points.
pub fn random_unplanted_spp<R: Rng>(rng: &mut R, n: usize, m: usize) -> BlpInstance {
    let mut a = vec![vec![0.0; n]; m];
    for i in 0..n {
        let mut any = false;
        for row in a.iter_mut() {
            if rng.gen_bool(0.35) {
                row[i] = 1.0;
                any = true;
            }
        }
        if !any {
            a[rng.gen_range(0..m)][i] = 1.0;
        }
    }
    let c = (0..n).map(|_| rng.gen_range(1..=20) as f64).collect();
    BlpInstance::new(c, a, vec![1.0; m]).unwrap()
}

/// QAOA state by dense matrix products: diagonal phase, then the full
/// `2^n x 2^n` mixer built as a Kronecker power.
pub fn dense_qaoa_expectation(energies: &[f64], n: usize, gammas: &[f64], betas: &[f64]) -> f64 {
    let dim = 1usize << n;
    assert_eq!(energies.len(), dim);
    let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let mut psi = DMatrix::<Complex64>::from_element(dim, 1, amp);
    for (&g, &b) in gammas.iter().zip(betas) {
        let phase = DMatrix::<Complex64>::from_diagonal(&nalgebra::DVector::from_iterator(
            dim,
            energies.iter().map(|e| Complex64::from_polar(1.0, -g * e)),
        ));
        let (s, c) = b.sin_cos();
        let single = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(c, 0.0),
                Complex64::new(0.0, -s),
                Complex64::new(0.0, -s),
                Complex64::new(c, 0.0),
            ],
        );
        let mut mixer = DMatrix::<Complex64>::identity(1, 1);
        for _ in 0..n {
            mixer = mixer.kronecker(&single);
        }
        psi = mixer * (phase * psi);
    }
    psi.iter()
        .zip(energies)
        .map(|(a, e)| a.norm_sqr() * e)
        .sum()
}

/// Partitioning rows where three rows restricted to three columns form an
/// odd cycle (`xa + xb = xb + xc = xa + xc = 1`). The other columns join
/// those rows rarely, so the instance is infeasible or nearly so, and
/// propagation from the root sees nothing.
pub fn odd_cycle_spp<R: Rng>(rng: &mut R, n: usize, m: usize) -> BlpInstance {
    assert!(n >= 3 && m >= 3);
    let mut a = vec![vec![0.0; n]; m];
    let tri = [(0, 0, 1), (1, 1, 2), (2, 0, 2)];
    for &(row, u, v) in &tri {
        a[row][u] = 1.0;
        a[row][v] = 1.0;
    }
    for i in 3..n {
        for (j, row) in a.iter_mut().enumerate() {
            let p = if j < 3 { 0.1 } else { 0.5 };
            if rng.gen_bool(p) {
                row[i] = 1.0;
            }
        }
    }
    for row in a.iter_mut().skip(3) {
        if row.iter().all(|v| *v == 0.0) {
            row[rng.gen_range(3..n)] = 1.0;
        }
    }
    let c = (0..n).map(|_| rng.gen_range(1..=20) as f64).collect();
    BlpInstance::new(c, a, vec![1.0; m]).unwrap()
}
