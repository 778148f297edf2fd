//! Binary linear programs `min { c^T x | Ax = b, x binary }`, the penalized
//! objective used by the Ising encoding, set-partitioning instance
//! generation and an exhaustive reference solver.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest instance [`brute_force_optimum`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

fn default_kappa() -> f64 {
    1.0
}

/// A binary linear program with equality constraints.
///
/// `a` is stored row-major: `a[j][i]` is the coefficient of variable `i` in
/// constraint `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlpInstance {
    pub n: usize,
    pub m: usize,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimum: Option<f64>,
}

impl BlpInstance {
    pub fn new(c: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let instance = BlpInstance {
            n: c.len(),
            m: b.len(),
            c,
            a,
            b,
            name: None,
            kappa: 1.0,
            optimum: None,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidInstance(format!(
                "need n >= 1 and m >= 1, got n={} m={}",
                self.n, self.m
            )));
        }
        if self.c.len() != self.n {
            return Err(Error::InvalidInstance(format!(
                "|c| = {} but n = {}",
                self.c.len(),
                self.n
            )));
        }
        if self.b.len() != self.m {
            return Err(Error::InvalidInstance(format!(
                "|b| = {} but m = {}",
                self.b.len(),
                self.m
            )));
        }
        if self.a.len() != self.m {
            return Err(Error::InvalidInstance(format!(
                "A has {} rows but m = {}",
                self.a.len(),
                self.m
            )));
        }
        for (j, row) in self.a.iter().enumerate() {
            if row.len() != self.n {
                return Err(Error::InvalidInstance(format!(
                    "row {j} of A has {} entries but n = {}",
                    row.len(),
                    self.n
                )));
            }
        }
        let finite = self.c.iter().chain(self.b.iter()).chain(self.a.iter().flatten());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite coefficient".into()));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    fn check_len(&self, x: &[u8]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        if let Some(v) = x.iter().find(|&&v| v > 1) {
            return Err(Error::Domain(format!("binary entry expected, got {v}")));
        }
        Ok(())
    }

    /// `c^T x`.
    pub fn objective(&self, x: &[u8]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self
            .c
            .iter()
            .zip(x)
            .map(|(c, &v)| if v == 1 { *c } else { 0.0 })
            .sum())
    }

    /// `Ax - b`.
    pub fn residual(&self, x: &[u8]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(self
            .a
            .iter()
            .zip(&self.b)
            .map(|(row, b)| {
                row.iter()
                    .zip(x)
                    .map(|(a, &v)| if v == 1 { *a } else { 0.0 })
                    .sum::<f64>()
                    - b
            })
            .collect())
    }

    pub fn is_feasible(&self, x: &[u8]) -> Result<bool> {
        Ok(self.residual(x)?.iter().all(|r| r.abs() <= FEAS_TOL))
    }
}

/// Absolute tolerance on a constraint residual to count as satisfied.
pub const FEAS_TOL: f64 = 1e-9;

/// A partial assignment: variable index to fixed binary value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fixings(BTreeMap<usize, u8>);

impl Fixings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fix `var` to `value`. Re-fixing to the same value is a no-op; a
    /// different value is an error.
    pub fn fix(&mut self, var: usize, value: u8) -> Result<()> {
        if value > 1 {
            return Err(Error::Domain(format!("binary value expected, got {value}")));
        }
        match self.0.insert(var, value) {
            Some(old) if old != value => {
                self.0.insert(var, old);
                Err(Error::InconsistentFixing { var })
            }
            _ => Ok(()),
        }
    }

    pub fn with(mut self, var: usize, value: u8) -> Result<Self> {
        self.fix(var, value)?;
        Ok(self)
    }

    pub fn get(&self, var: usize) -> Option<u8> {
        self.0.get(&var).copied()
    }

    pub fn contains(&self, var: usize) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    /// Union of two fixing sets; errors if they disagree on a variable.
    pub fn merged(&self, other: &Fixings) -> Result<Fixings> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.fix(k, v)?;
        }
        Ok(out)
    }

    pub fn is_superset_of(&self, other: &Fixings) -> bool {
        other.iter().all(|(k, v)| self.get(k) == Some(v))
    }

    /// Fills every unfixed index in `0..n` from `free_values`, in index order.
    pub fn complete(&self, n: usize, free_values: &[u8]) -> Result<Vec<u8>> {
        let mut free = free_values.iter();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            match self.get(i) {
                Some(v) => out.push(v),
                None => out.push(*free.next().ok_or(Error::Dimension {
                    expected: n - self.len(),
                    got: free_values.len(),
                })?),
            }
        }
        if free.next().is_some() {
            return Err(Error::Dimension {
                expected: n - self.len(),
                got: free_values.len(),
            });
        }
        Ok(out)
    }
}

impl FromIterator<(usize, u8)> for Fixings {
    fn from_iter<T: IntoIterator<Item = (usize, u8)>>(iter: T) -> Self {
        Fixings(iter.into_iter().collect())
    }
}

/// Penalty weight `M = (1/kappa) * sum |c_i|`, floored at `1/kappa` when the
/// objective is identically zero.
pub fn compute_big_m(instance: &BlpInstance) -> Result<f64> {
    if !(instance.kappa.is_finite() && instance.kappa > 0.0) {
        return Err(Error::InvalidInstance(format!(
            "kappa must be positive, got {}",
            instance.kappa
        )));
    }
    if instance.c.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInstance("non-finite objective coefficient".into()));
    }
    let total: f64 = instance.c.iter().map(|c| c.abs()).sum();
    if total == 0.0 {
        Ok(1.0 / instance.kappa)
    } else {
        Ok(total / instance.kappa)
    }
}

/// `c^T x + M (Ax - b)^T (Ax - b)` for a full binary assignment.
pub fn penalized_cost(instance: &BlpInstance, x: &[u8], big_m: f64) -> Result<f64> {
    let obj = instance.objective(x)?;
    let penalty: f64 = instance.residual(x)?.iter().map(|r| r * r).sum();
    Ok(obj + big_m * penalty)
}

/// Parameters for [`generate_spp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SppParams {
    pub n: usize,
    pub m: usize,
    pub cost_low: i64,
    pub cost_high: i64,
}

impl SppParams {
    pub fn new(n: usize, m: usize) -> Self {
        SppParams {
            n,
            m,
            cost_low: 1,
            cost_high: 100,
        }
    }
}

/// Random set-partitioning instance with a planted feasible partition.
///
/// The `m` elements are shuffled and cut into `k >= 2` nonempty blocks which
/// become `k` of the columns; the other `n - k` columns are random nonempty
/// proper subsets. Column order is shuffled. Costs are uniform integers in
/// `[cost_low, cost_high]`.
pub fn generate_spp(params: SppParams, seed: u64) -> Result<BlpInstance> {
    let SppParams {
        n,
        m,
        cost_low,
        cost_high,
    } = params;
    if m < 2 {
        return Err(Error::Parameter(format!("need m >= 2, got m={m}")));
    }
    if n <= m {
        return Err(Error::Parameter(format!("need n > m, got n={n} m={m}")));
    }
    if cost_low > cost_high {
        return Err(Error::Parameter(format!(
            "cost_low {cost_low} > cost_high {cost_high}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut elements: Vec<usize> = (0..m).collect();
    elements.shuffle(&mut rng);
    let blocks = rng.gen_range(2..=m);
    // choose blocks-1 distinct cut points in 1..m
    let mut cuts: Vec<usize> = (1..m).collect();
    cuts.shuffle(&mut rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(blocks - 1).collect();
    cuts.sort_unstable();

    let mut columns: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut start = 0;
    for &cut in cuts.iter().chain(std::iter::once(&m)) {
        columns.push(elements[start..cut].to_vec());
        start = cut;
    }
    while columns.len() < n {
        let size = rng.gen_range(1..m);
        let mut pool: Vec<usize> = (0..m).collect();
        pool.shuffle(&mut rng);
        pool.truncate(size);
        columns.push(pool);
    }
    columns.shuffle(&mut rng);

    let mut a = vec![vec![0.0; n]; m];
    for (i, col) in columns.iter().enumerate() {
        for &j in col {
            a[j][i] = 1.0;
        }
    }
    let c = (0..n)
        .map(|_| rng.gen_range(cost_low..=cost_high) as f64)
        .collect();
    let instance = BlpInstance::new(c, a, vec![1.0; m])?
        .with_name(format!("spp_n{n}_m{m}_s{seed}"));
    Ok(instance)
}

/// Result of exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    /// Optimal value and a minimizer, `None` if infeasible.
    pub optimum: Option<(f64, Vec<u8>)>,
    /// Cost of the most expensive feasible assignment.
    pub worst_feasible: Option<f64>,
    pub feasible_count: u64,
}

impl BruteForce {
    pub fn value(&self) -> Option<f64> {
        self.optimum.as_ref().map(|(v, _)| *v)
    }
}

/// Enumerates all `2^n` assignments. Refuses `n > BRUTE_FORCE_LIMIT`.
pub fn brute_force_optimum(instance: &BlpInstance) -> Result<BruteForce> {
    enumerate_completions(instance, &Fixings::new())
}

/// Exhaustively enumerates every completion of `fixings`.
pub fn enumerate_completions(instance: &BlpInstance, fixings: &Fixings) -> Result<BruteForce> {
    instance.validate()?;
    let free: Vec<usize> = (0..instance.n).filter(|i| !fixings.contains(*i)).collect();
    if free.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n: free.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut x = vec![0u8; instance.n];
    for (k, v) in fixings.iter() {
        if k >= instance.n {
            return Err(Error::Dimension {
                expected: instance.n,
                got: k + 1,
            });
        }
        x[k] = v;
    }
    let mut activity = instance.residual(&x)?;

    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut worst: Option<f64> = None;
    let mut count = 0u64;
    let total = 1u64 << free.len();
    // Gray-code walk: step t flips the lowest set bit of t.
    for t in 0..total {
        if t > 0 {
            let var = free[t.trailing_zeros() as usize];
            let sign = if x[var] == 0 { 1.0 } else { -1.0 };
            x[var] ^= 1;
            for (r, row) in activity.iter_mut().zip(&instance.a) {
                *r += sign * row[var];
            }
        }
        if activity.iter().all(|r| r.abs() <= FEAS_TOL) {
            count += 1;
            let value = instance.objective(&x)?;
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, x.clone()));
            }
            if worst.is_none_or(|w| value > w) {
                worst = Some(value);
            }
        }
    }
    Ok(BruteForce {
        optimum: best,
        worst_feasible: worst,
        feasible_count: count,
    })
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<BlpInstance> {
    let text = fs::read_to_string(path)?;
    let instance: BlpInstance = serde_json::from_str(&text)?;
    instance.validate()?;
    Ok(instance)
}

pub fn save_instance(instance: &BlpInstance, path: impl AsRef<Path>) -> Result<()> {
    instance.validate()?;
    let text = serde_json::to_string_pretty(instance)?;
    fs::write(path, text)?;
    Ok(())
}
