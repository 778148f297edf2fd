//! Exact encoding of a penalized BLP as an Ising energy function, and the
//! reduction of that encoding under variable fixing.
//!
//! Storage convention: a model holds the energy
//!
//! ```text
//! H(s) = sum_{i<j} w_ij s_i s_j + sum_i f_i s_i + C
//! ```
//!
//! over spins `s_i = 2 x_i - 1`. With the usual `H = -sum J s s - mu sum h s`
//! form this is `w = -J` and `f = -mu h = h / 2`. The coefficients are chosen
//! so that `H(s(x))` equals `c^T x + M |Ax - b|^2` for every binary `x`.

use std::collections::BTreeMap;

use crate::blp::{BlpInstance, Fixings};
use crate::error::{Error, Result};

/// Couplings smaller than this multiple of `M` are treated as zero.
const DROP_TOL: f64 = 1e-12;

/// Split of the constant energy offset.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConstantLedger {
    /// Constant produced by the spin substitution of the free sub-problem.
    pub transform_part: f64,
    /// `sum c_k x_k` over fixed variables.
    pub objective_part: f64,
}

impl ConstantLedger {
    pub fn total(&self) -> f64 {
        self.transform_part + self.objective_part
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    pub n_spins: usize,
    /// `(i, j)` with `i < j` to the coefficient of `s_i s_j`.
    pub couplings: BTreeMap<(usize, usize), f64>,
    /// Coefficient of `s_i`.
    pub fields: Vec<f64>,
    pub ledger: ConstantLedger,
    /// Penalty weight used at encoding time.
    pub penalty: f64,
}

impl IsingModel {
    /// A model with no terms.
    pub fn zero(n_spins: usize) -> Self {
        IsingModel {
            n_spins,
            couplings: BTreeMap::new(),
            fields: vec![0.0; n_spins],
            ledger: ConstantLedger::default(),
            penalty: 1.0,
        }
    }

    pub fn constant(&self) -> f64 {
        self.ledger.total()
    }

    /// Inserts `w * s_i s_j`; zero weights are not stored.
    pub fn add_coupling(&mut self, i: usize, j: usize, w: f64) {
        assert!(i != j && i < self.n_spins && j < self.n_spins);
        let key = if i < j { (i, j) } else { (j, i) };
        let v = self.couplings.entry(key).or_insert(0.0);
        *v += w;
        if *v == 0.0 {
            self.couplings.remove(&key);
        }
    }

    /// Energy without the constant offset.
    pub fn energy_without_constant(&self, spins: &[i8]) -> Result<f64> {
        if spins.len() != self.n_spins {
            return Err(Error::Dimension {
                expected: self.n_spins,
                got: spins.len(),
            });
        }
        if let Some(s) = spins.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::Domain(format!("spin must be +-1, got {s}")));
        }
        let pair: f64 = self
            .couplings
            .iter()
            .map(|(&(i, j), w)| w * f64::from(spins[i] * spins[j]))
            .sum();
        let lin: f64 = self
            .fields
            .iter()
            .zip(spins)
            .map(|(f, &s)| f * f64::from(s))
            .sum();
        Ok(pair + lin)
    }

    /// Sum of absolute coefficients (couplings and fields).
    pub fn abs_weight(&self) -> f64 {
        self.couplings.values().map(|w| w.abs()).sum::<f64>()
            + self.fields.iter().map(|f| f.abs()).sum::<f64>()
    }
}

/// `H(s)` including the constant.
pub fn energy(model: &IsingModel, spins: &[i8]) -> Result<f64> {
    Ok(model.energy_without_constant(spins)? + model.constant())
}

pub fn sigma_of_x(x: &[u8]) -> Result<Vec<i8>> {
    x.iter()
        .map(|&v| match v {
            0 => Ok(-1),
            1 => Ok(1),
            _ => Err(Error::Domain(format!("binary entry expected, got {v}"))),
        })
        .collect()
}

pub fn x_of_sigma(spins: &[i8]) -> Result<Vec<u8>> {
    spins
        .iter()
        .map(|&s| match s {
            -1 => Ok(0),
            1 => Ok(1),
            _ => Err(Error::Domain(format!("spin must be +-1, got {s}"))),
        })
        .collect()
}

/// Number of stored nonzero couplings.
pub fn many_body_count(model: &IsingModel) -> usize {
    model.couplings.len()
}

/// Encodes `c^T x + M |Ax - b|^2` given column-sliced data.
fn encode_parts(a: &[Vec<f64>], b: &[f64], c: &[f64], big_m: f64) -> IsingModel {
    let n = c.len();
    // Q = M A^T A, l = c - 2 M A^T b, q0 = M b^T b
    let mut q = vec![vec![0.0; n]; n];
    let mut lin: Vec<f64> = c.to_vec();
    let mut q0 = 0.0;
    for (row, &bj) in a.iter().zip(b) {
        q0 += big_m * bj * bj;
        let support: Vec<usize> = (0..n).filter(|&i| row[i] != 0.0).collect();
        for &i in &support {
            lin[i] -= 2.0 * big_m * bj * row[i];
            for &k in &support {
                q[i][k] += big_m * row[i] * row[k];
            }
        }
    }

    // x_i = (s_i + 1) / 2, x_i^2 = x_i:
    //   Q_ii x_i          -> Q_ii/2 s_i + Q_ii/2
    //   2 Q_ij x_i x_j    -> Q_ij/2 (s_i s_j + s_i + s_j + 1)
    //   l_i x_i           -> l_i/2 s_i + l_i/2
    let mut model = IsingModel::zero(n);
    model.penalty = big_m;
    let mut constant = q0;
    for i in 0..n {
        model.fields[i] = 0.5 * (q[i].iter().sum::<f64>() + lin[i]);
        constant += 0.5 * (q[i][i] + lin[i]);
        for j in (i + 1)..n {
            let w = 0.5 * q[i][j];
            constant += w;
            if w.abs() > DROP_TOL * big_m {
                model.couplings.insert((i, j), w);
            }
        }
    }
    model.ledger.transform_part = constant;
    model
}

/// Encodes the penalized objective of `instance` with penalty `big_m`.
pub fn encode(instance: &BlpInstance, big_m: f64) -> Result<IsingModel> {
    instance.validate()?;
    if !(big_m.is_finite() && big_m > 0.0) {
        return Err(Error::Parameter(format!("penalty must be positive, got {big_m}")));
    }
    Ok(encode_parts(&instance.a, &instance.b, &instance.c, big_m))
}

/// The sub-problem left after fixing some variables of a master instance:
/// the free columns of `A` and `c`, the residual right-hand side and the
/// objective contribution of the fixed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedCore {
    /// Row-major, `m` rows by `index_map.len()` columns.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Reduced index to master index.
    pub index_map: Vec<usize>,
    /// Fixings over master indices that produced this core.
    pub fixings: Fixings,
    pub objective_part: f64,
    pub n_master: usize,
}

impl ReducedCore {
    pub fn from_instance(instance: &BlpInstance) -> Self {
        ReducedCore {
            a: instance.a.clone(),
            b: instance.b.clone(),
            c: instance.c.clone(),
            index_map: (0..instance.n).collect(),
            fixings: Fixings::new(),
            objective_part: 0.0,
            n_master: instance.n,
        }
    }

    pub fn n_free(&self) -> usize {
        self.index_map.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// Fixes further master variables. Fixings already present must agree;
    /// indices outside the master range are rejected.
    pub fn reduce(&self, fixings: &Fixings) -> Result<ReducedCore> {
        let merged = self.fixings.merged(fixings)?;
        if let Some((k, _)) = fixings.iter().find(|(k, _)| *k >= self.n_master) {
            return Err(Error::Dimension {
                expected: self.n_master,
                got: k + 1,
            });
        }
        let mut b = self.b.clone();
        let mut objective_part = self.objective_part;
        let mut keep = Vec::with_capacity(self.n_free());
        for (col, &orig) in self.index_map.iter().enumerate() {
            match fixings.get(orig) {
                Some(v) => {
                    if v == 1 {
                        for (bj, row) in b.iter_mut().zip(&self.a) {
                            *bj -= row[col];
                        }
                        objective_part += self.c[col];
                    }
                }
                None => keep.push(col),
            }
        }
        let a = self
            .a
            .iter()
            .map(|row| keep.iter().map(|&col| row[col]).collect())
            .collect();
        Ok(ReducedCore {
            a,
            b,
            c: keep.iter().map(|&col| self.c[col]).collect(),
            index_map: keep.iter().map(|&col| self.index_map[col]).collect(),
            fixings: merged,
            objective_part,
            n_master: self.n_master,
        })
    }

    /// Ising model of the free sub-problem, with the fixed objective carried
    /// in the ledger.
    pub fn model(&self, big_m: f64) -> IsingModel {
        let mut model = encode_parts(&self.a, &self.b, &self.c, big_m);
        model.ledger.objective_part = self.objective_part;
        model
    }

    /// Merges values of the free variables (reduced order) with the fixings
    /// into a master assignment.
    pub fn complete(&self, free_values: &[u8]) -> Result<Vec<u8>> {
        if free_values.len() != self.n_free() {
            return Err(Error::Dimension {
                expected: self.n_free(),
                got: free_values.len(),
            });
        }
        let mut x = vec![0u8; self.n_master];
        for (k, v) in self.fixings.iter() {
            x[k] = v;
        }
        for (&orig, &v) in self.index_map.iter().zip(free_values) {
            x[orig] = v;
        }
        Ok(x)
    }

    /// `Ã x - b̃` for free values `x`.
    pub fn residual(&self, free_values: &[u8]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bj)| {
                row.iter()
                    .zip(free_values)
                    .map(|(a, &v)| if v == 1 { *a } else { 0.0 })
                    .sum::<f64>()
                    - bj
            })
            .collect()
    }
}

/// Reduces `instance` by `fixings` and encodes the result.
pub fn reduce(
    instance: &BlpInstance,
    big_m: f64,
    fixings: &Fixings,
) -> Result<(ReducedCore, IsingModel)> {
    instance.validate()?;
    let core = ReducedCore::from_instance(instance).reduce(fixings)?;
    let model = core.model(big_m);
    Ok((core, model))
}
