//! Statevector QAOA over diagonal cost Hamiltonians.
//!
//! Basis index `z` encodes spin `i` in bit `i` (LSB first): bit set means
//! `s_i = +1` (`x_i = 1`).

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::IsingModel;

/// Default largest register the simulator will allocate.
pub const DEFAULT_MAX_SPINS: usize = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct CostDiagonal {
    pub n_spins: usize,
    pub energies: Vec<f64>,
}

impl CostDiagonal {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        let len = energies.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Parameter(format!(
                "diagonal length {len} is not a power of two"
            )));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Parameter("non-finite diagonal entry".into()));
        }
        Ok(CostDiagonal {
            n_spins: len.trailing_zeros() as usize,
            energies,
        })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    fn min_max(&self) -> (f64, f64) {
        self.energies
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)))
    }
}

/// Energies of every basis state, optionally including the model constant.
pub fn build_diagonal(model: &IsingModel, include_constant: bool) -> Result<CostDiagonal> {
    build_diagonal_limited(model, include_constant, DEFAULT_MAX_SPINS)
}

pub fn build_diagonal_limited(
    model: &IsingModel,
    include_constant: bool,
    max_spins: usize,
) -> Result<CostDiagonal> {
    let n = model.n_spins;
    if n > max_spins {
        return Err(Error::TooLarge { n, limit: max_spins });
    }
    let offset = if include_constant { model.constant() } else { 0.0 };
    let spin = |z: usize, i: usize| if (z >> i) & 1 == 1 { 1.0 } else { -1.0 };
    let energies = (0..1usize << n)
        .map(|z| {
            let pair: f64 = model
                .couplings
                .iter()
                .map(|(&(i, j), w)| w * spin(z, i) * spin(z, j))
                .sum();
            let lin: f64 = model
                .fields
                .iter()
                .enumerate()
                .map(|(i, f)| f * spin(z, i))
                .sum();
            pair + lin + offset
        })
        .collect();
    CostDiagonal::new(energies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaParams {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl QaoaParams {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() || gammas.len() != betas.len() {
            return Err(Error::Parameter(format!(
                "need p >= 1 gammas and betas of equal length, got {} and {}",
                gammas.len(),
                betas.len()
            )));
        }
        Ok(QaoaParams { gammas, betas })
    }

    pub fn zeros(p: usize) -> Self {
        QaoaParams {
            gammas: vec![0.0; p],
            betas: vec![0.0; p],
        }
    }

    pub fn p(&self) -> usize {
        self.gammas.len()
    }
}

/// Applies `p` phase/mixer layers to the uniform superposition.
pub fn qaoa_state(diag: &CostDiagonal, params: &QaoaParams) -> Vec<Complex64> {
    let dim = diag.len();
    let amp = 1.0 / (dim as f64).sqrt();
    let mut state = vec![Complex64::new(amp, 0.0); dim];
    for (&gamma, &beta) in params.gammas.iter().zip(&params.betas) {
        for (a, &e) in state.iter_mut().zip(&diag.energies) {
            *a *= Complex64::from_polar(1.0, -gamma * e);
        }
        apply_mixer(&mut state, diag.n_spins, beta);
    }
    state
}

/// `exp(-i beta X)` on every qubit.
fn apply_mixer(state: &mut [Complex64], n_spins: usize, beta: f64) {
    let (s, c) = beta.sin_cos();
    let mis = Complex64::new(0.0, -s);
    for q in 0..n_spins {
        let bit = 1usize << q;
        for z in 0..state.len() {
            if z & bit == 0 {
                let a0 = state[z];
                let a1 = state[z | bit];
                state[z] = a0 * c + a1 * mis;
                state[z | bit] = a0 * mis + a1 * c;
            }
        }
    }
}

/// `sum_z |a_z|^2 diag[z]`.
pub fn expectation(state: &[Complex64], diag: &CostDiagonal) -> f64 {
    state
        .iter()
        .zip(&diag.energies)
        .map(|(a, e)| a.norm_sqr() * e)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub bits: Vec<u8>,
    pub count: u64,
}

/// Distinct measured bitstrings with their multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub n_bits: usize,
    pub samples: Vec<Sample>,
    pub shots: u64,
}

impl SampleSet {
    pub fn from_counts(n_bits: usize, counts: &BTreeMap<usize, u64>) -> Self {
        let samples: Vec<Sample> = counts
            .iter()
            .map(|(&z, &count)| Sample {
                bits: (0..n_bits).map(|i| ((z >> i) & 1) as u8).collect(),
                count,
            })
            .collect();
        let shots = samples.iter().map(|s| s.count).sum();
        SampleSet {
            n_bits,
            samples,
            shots,
        }
    }

    pub fn distinct(&self) -> usize {
        self.samples.len()
    }
}

/// Draws `shots` measurements from `|state|^2`.
pub fn sample<R: Rng + ?Sized>(state: &[Complex64], shots: u64, rng: &mut R) -> Result<SampleSet> {
    if shots == 0 {
        return Err(Error::Parameter("need at least one shot".into()));
    }
    let n_bits = state.len().trailing_zeros() as usize;
    let mut cumulative = Vec::with_capacity(state.len());
    let mut acc = 0.0;
    for a in state {
        acc += a.norm_sqr();
        cumulative.push(acc);
    }
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let u = rng.gen::<f64>() * acc;
        let z = cumulative
            .partition_point(|&c| c <= u)
            .min(state.len() - 1);
        *counts.entry(z).or_insert(0u64) += 1;
    }
    Ok(SampleSet::from_counts(n_bits, &counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_index: usize,
    pub expectation: f64,
}

/// Every objective evaluation made by the angle optimizer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub queries: Vec<QueryRecord>,
}

impl OptimizerTrace {
    pub fn total_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn best(&self) -> Option<f64> {
        self.queries.iter().map(|q| q.expectation).reduce(f64::min)
    }
}

/// Ramp schedule with a small seeded perturbation, in normalized units.
fn initial_point(p: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * p);
    for l in 0..p {
        let frac = (l as f64 + 0.5) / p as f64;
        x.push(0.8 * frac + rng.gen_range(-0.05..0.05));
    }
    for l in 0..p {
        let frac = (l as f64 + 0.5) / p as f64;
        x.push(0.5 * (1.0 - frac) + rng.gen_range(-0.05..0.05));
    }
    x
}

/// Minimizes the QAOA expectation of `diag` over `2p` angles with COBYLA,
/// using at most `max_queries` evaluations. Returns the best angles seen.
///
/// The phase angles are optimized in units scaled by the spread of the
/// diagonal so one trust-region radius suits both angle families.
pub fn optimize_angles(
    diag: &CostDiagonal,
    p: usize,
    max_queries: usize,
    seed: u64,
) -> Result<(QaoaParams, OptimizerTrace)> {
    optimize_angles_from(diag, p, max_queries, seed, None)
}

/// As [`optimize_angles`], optionally starting from `warm` angles.
pub fn optimize_angles_from(
    diag: &CostDiagonal,
    p: usize,
    max_queries: usize,
    seed: u64,
    warm: Option<&QaoaParams>,
) -> Result<(QaoaParams, OptimizerTrace)> {
    if p == 0 {
        return Err(Error::Parameter("QAOA depth must be >= 1".into()));
    }
    if max_queries == 0 {
        return Err(Error::Parameter("need at least one optimizer query".into()));
    }
    let (lo, hi) = diag.min_max();
    let spread = hi - lo;
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let to_params = |u: &[f64]| QaoaParams {
        gammas: u[..p].iter().map(|g| g / scale).collect(),
        betas: u[p..].to_vec(),
    };

    let x0 = match warm {
        Some(w) if w.p() == p => w
            .gammas
            .iter()
            .map(|g| g * scale)
            .chain(w.betas.iter().copied())
            .collect(),
        _ => initial_point(p, seed),
    };

    struct Tracker {
        trace: OptimizerTrace,
        best: (f64, Vec<f64>),
    }
    let tracker = RefCell::new(Tracker {
        trace: OptimizerTrace::default(),
        best: (f64::INFINITY, x0.clone()),
    });
    let objective = |u: &[f64], _: &mut ()| -> f64 {
        let mut t = tracker.borrow_mut();
        if t.trace.queries.len() >= max_queries {
            return t.best.0;
        }
        let value = expectation(&qaoa_state(diag, &to_params(u)), diag);
        let query_index = t.trace.queries.len();
        t.trace.queries.push(QueryRecord {
            query_index,
            expectation: value,
        });
        if value < t.best.0 {
            t.best = (value, u.to_vec());
        }
        value
    };

    let bounds: Vec<(f64, f64)> = (0..p)
        .map(|_| (-2.0 * PI, 2.0 * PI))
        .chain((0..p).map(|_| (-PI, PI)))
        .collect();
    let cons: Vec<&dyn cobyla::Func<()>> = vec![];
    // The result is read from the tracker; COBYLA's own status (including
    // budget exhaustion) carries no extra information here.
    let _ = cobyla::minimize(
        objective,
        &x0,
        &bounds,
        &cons,
        (),
        max_queries,
        cobyla::RhoBeg::All(0.25),
        Some(cobyla::StopTols {
            ftol_rel: 1e-10,
            ..cobyla::StopTols::default()
        }),
    );
    let tracker = tracker.into_inner();
    Ok((to_params(&tracker.best.1), tracker.trace))
}

/// A variational routine that turns an Ising model into measured samples.
pub trait Sampler: Sync {
    fn solve_and_sample(
        &self,
        model: &IsingModel,
        shots: u64,
        seed: u64,
        warm: Option<&QaoaParams>,
    ) -> Result<VqaRun>;
}

/// Output of one variational solve.
#[derive(Debug, Clone)]
pub struct VqaRun {
    pub params: QaoaParams,
    /// Expectations exclude the model constant.
    pub trace: OptimizerTrace,
    pub samples: SampleSet,
    /// Statevector work units (amplitude updates) spent, for logical clocks.
    pub work: f64,
}

/// QAOA with COBYLA-optimized angles.
#[derive(Debug, Clone)]
pub struct Qaoa {
    pub p: usize,
    pub max_queries: usize,
    pub max_spins: usize,
}

impl Qaoa {
    pub fn new(p: usize, max_queries: usize) -> Self {
        Qaoa {
            p,
            max_queries,
            max_spins: DEFAULT_MAX_SPINS,
        }
    }
}

impl Sampler for Qaoa {
    fn solve_and_sample(
        &self,
        model: &IsingModel,
        shots: u64,
        seed: u64,
        warm: Option<&QaoaParams>,
    ) -> Result<VqaRun> {
        let diag = build_diagonal_limited(model, false, self.max_spins)?;
        let (params, trace) = optimize_angles_from(&diag, self.p, self.max_queries, seed, warm)?;
        let state = qaoa_state(&diag, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_d5a3_f1e5_u64);
        let samples = sample(&state, shots, &mut rng)?;
        let work = (trace.total_queries() + 1) as f64
            * self.p as f64
            * diag.len() as f64
            * (diag.n_spins.max(1)) as f64;
        Ok(VqaRun {
            params,
            trace,
            samples,
            work,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blp::BlpInstance;
    use crate::ising::encode;
    use approx::assert_relative_eq;

    fn norm(state: &[Complex64]) -> f64 {
        state.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn diagonal_examples() {
        let mut one = IsingModel::zero(1);
        one.fields[0] = 2.5;
        one.ledger.transform_part = 2.5;
        assert_eq!(build_diagonal(&one, true).unwrap().energies, vec![0.0, 5.0]);

        let inst = BlpInstance::new(vec![1.0, 2.0], vec![vec![1.0, 1.0]], vec![1.0]).unwrap();
        let model = encode(&inst, 10.0).unwrap();
        let d = build_diagonal(&model, true).unwrap();
        for (got, want) in d.energies.iter().zip([10.0, 1.0, 2.0, 13.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }

        assert_eq!(build_diagonal(&IsingModel::zero(3), true).unwrap().energies, vec![0.0; 8]);
        assert!(matches!(
            build_diagonal_limited(&IsingModel::zero(5), false, 4),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn zero_angles_give_uniform_state() {
        let d = CostDiagonal::new(vec![3.0, -1.0, 0.5, 7.0]).unwrap();
        let state = qaoa_state(&d, &QaoaParams::zeros(3));
        for a in &state {
            assert_relative_eq!(a.re, 0.5, epsilon = 1e-15);
            assert_relative_eq!(a.im, 0.0, epsilon = 1e-15);
        }
        assert_relative_eq!(expectation(&state, &d), 9.5 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn mixer_only_keeps_uniform_magnitudes() {
        let d = CostDiagonal::new(vec![0.0, 0.0]).unwrap();
        let params = QaoaParams::new(vec![0.3], vec![PI / 2.0]).unwrap();
        let state = qaoa_state(&d, &params);
        for a in &state {
            assert_relative_eq!(a.norm_sqr(), 0.5, epsilon = 1e-12);
        }
        assert_relative_eq!(norm(&state), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let d = CostDiagonal::new(vec![0.0, 1.0]).unwrap();
        let uniform = qaoa_state(&d, &QaoaParams::zeros(1));
        assert_relative_eq!(expectation(&uniform, &d), 0.5, epsilon = 1e-12);

        let d = CostDiagonal::new(vec![4.0, -2.0, 9.0, 1.0]).unwrap();
        let mut basis = vec![Complex64::new(0.0, 0.0); 4];
        basis[2] = Complex64::new(0.0, 1.0);
        assert_eq!(expectation(&basis, &d), 9.0);
    }

    #[test]
    fn sampling_basis_state_is_deterministic() {
        let mut basis = vec![Complex64::new(0.0, 0.0); 4];
        basis[0b10] = Complex64::new(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample(&basis, 100, &mut rng).unwrap();
        assert_eq!(s.samples, vec![Sample { bits: vec![0, 1], count: 100 }]);
        assert_eq!(s.shots, 100);
        assert!(sample(&basis, 0, &mut rng).is_err());
    }

    #[test]
    fn sampling_uniform_single_spin_is_balanced() {
        let d = CostDiagonal::new(vec![0.0, 0.0]).unwrap();
        let state = qaoa_state(&d, &QaoaParams::zeros(1));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = 100_000u64;
        let s = sample(&state, q, &mut rng).unwrap();
        assert_eq!(s.samples.iter().map(|x| x.count).sum::<u64>(), q);
        let ones = s.samples.iter().find(|x| x.bits == [1]).unwrap().count as f64;
        let sigma = (q as f64 * 0.25).sqrt();
        assert!((ones - 0.5 * q as f64).abs() < 5.0 * sigma);
    }

    #[test]
    fn optimizer_budget_of_one() {
        let d = CostDiagonal::new(vec![3.0, 1.0, 2.0, 0.0]).unwrap();
        let (params, trace) = optimize_angles(&d, 2, 1, 5).unwrap();
        assert_eq!(trace.total_queries(), 1);
        let start = initial_point(2, 5);
        let scale = 3.0;
        assert_relative_eq!(params.gammas[0], start[0] / scale);
        assert_relative_eq!(params.betas[1], start[3]);
    }

    #[test]
    fn optimizer_constant_diagonal() {
        let d = CostDiagonal::new(vec![2.0; 8]).unwrap();
        let (_, trace) = optimize_angles(&d, 2, 30, 1).unwrap();
        assert!(trace.total_queries() <= 30);
        for q in &trace.queries {
            assert_relative_eq!(q.expectation, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn optimizer_improves_on_start() {
        let inst = BlpInstance::new(vec![1.0, 2.0], vec![vec![1.0, 1.0]], vec![1.0]).unwrap();
        let d = build_diagonal(&encode(&inst, 10.0).unwrap(), true).unwrap();
        let (params, trace) = optimize_angles(&d, 3, 200, 11).unwrap();
        assert!(trace.total_queries() <= 200);
        let first = trace.queries[0].expectation;
        let final_value = expectation(&qaoa_state(&d, &params), &d);
        assert!(final_value <= first + 1e-12);
        assert_relative_eq!(final_value, trace.best().unwrap(), epsilon = 1e-12);
        for (k, q) in trace.queries.iter().enumerate() {
            assert_eq!(q.query_index, k);
        }
    }
}
