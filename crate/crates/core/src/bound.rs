//! Lower bounds on the ground-state energy of an Ising model through its
//! MaxCut reformulation.
//!
//! Spins map to vertices `1..=n`; vertex 0 carries the linear terms and is
//! always on the `+1` side. Edge weights are the stored model coefficients,
//! for which `min H = W - 2 z*` holds exactly (constant excluded), where `z*`
//! is the maximum cut and `W` the total edge weight.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ising::IsingModel;

/// Average worst-case approximation ratio of hyperplane rounding.
pub const GW_ALPHA: f64 = 0.87856;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub n_vertices: usize,
    /// `(u, v, w)` with `u < v`, `w != 0`, sorted by `(u, v)`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    /// Total edge weight.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// Total negative edge weight (`<= 0`).
    pub fn negative_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).filter(|w| *w < 0.0).sum()
    }

    /// Sum of `|w|`, equal to `W - 2 W-`.
    pub fn abs_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2.abs()).sum()
    }

    /// Value of the cut separating `side[u] == true` from the rest.
    pub fn cut_value(&self, side: &[bool]) -> f64 {
        self.edges
            .iter()
            .filter(|(u, v, _)| side[*u] != side[*v])
            .map(|e| e.2)
            .sum()
    }

    fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n_vertices, self.n_vertices);
        for &(u, v, w) in &self.edges {
            l[(u, u)] += w;
            l[(v, v)] += w;
            l[(u, v)] -= w;
            l[(v, u)] -= w;
        }
        l
    }
}

pub fn ising_to_maxcut(model: &IsingModel) -> WeightedGraph {
    let mut edges: Vec<(usize, usize, f64)> = model
        .fields
        .iter()
        .enumerate()
        .filter(|(_, f)| **f != 0.0)
        .map(|(i, &f)| (0, i + 1, f))
        .collect();
    edges.extend(
        model
            .couplings
            .iter()
            .filter(|(_, w)| **w != 0.0)
            .map(|(&(i, j), &w)| (i + 1, j + 1, w)),
    );
    edges.sort_by_key(|a| (a.0, a.1));
    WeightedGraph {
        n_vertices: model.n_spins + 1,
        edges,
    }
}

/// Converts a cut (vertex 0 on the `+1` side) back to spins.
pub fn cut_to_spins(side: &[bool]) -> Vec<i8> {
    side[1..]
        .iter()
        .map(|&s| if s == side[0] { 1 } else { -1 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    /// Factorization rank; `None` picks `ceil(sqrt(2 |V|))`.
    pub rank: Option<usize>,
    pub max_iters: usize,
    pub rounds: usize,
    /// Relative objective change that stops the ascent.
    pub tol: f64,
    pub seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            rank: None,
            max_iters: 2000,
            rounds: 64,
            tol: 1e-7,
            seed: 0,
        }
    }
}

pub fn default_rank(n_vertices: usize) -> usize {
    ((2.0 * n_vertices as f64).sqrt().ceil() as usize).max(2)
}

/// Unit-row factor `V` of a low-rank MaxCut SDP iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub vectors: Vec<Vec<f64>>,
    /// Relaxed cut value at `vectors`.
    pub z_sdp: f64,
    pub iterations: usize,
    /// Objective after every accepted step; nondecreasing.
    pub history: Vec<f64>,
}

fn sdp_objective(graph: &WeightedGraph, v: &[Vec<f64>]) -> f64 {
    graph
        .edges
        .iter()
        .map(|&(a, b, w)| w * (1.0 - dot(&v[a], &v[b])) * 0.5)
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        v[0] = 1.0;
    }
}

/// Burer-Monteiro ascent on `sum w_uv (1 - <v_u, v_v>) / 2` over unit rows:
/// Riemannian gradient steps with row renormalization and Armijo
/// backtracking.
pub fn solve_sdp(graph: &WeightedGraph, rank: usize, max_iters: usize, tol: f64, seed: u64) -> SdpSolution {
    let n = graph.n_vertices;
    let k = rank.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            normalize(&mut row);
            row
        })
        .collect();
    let mut f = sdp_objective(graph, &v);
    let mut history = vec![f];
    if graph.edges.is_empty() {
        return SdpSolution {
            vectors: v,
            z_sdp: 0.0,
            iterations: 0,
            history,
        };
    }

    let max_degree = (0..n)
        .map(|u| {
            graph
                .edges
                .iter()
                .filter(|e| e.0 == u || e.1 == u)
                .map(|e| e.2.abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let mut step = 1.0 / max_degree.max(f64::MIN_POSITIVE);
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        // Euclidean gradient: d/dv_u = -1/2 sum_v w_uv v_v
        let mut grad = vec![vec![0.0; k]; n];
        for &(a, b, w) in &graph.edges {
            for d in 0..k {
                grad[a][d] -= 0.5 * w * v[b][d];
                grad[b][d] -= 0.5 * w * v[a][d];
            }
        }
        // project onto the tangent space of each sphere
        let mut gnorm2 = 0.0;
        for (g, row) in grad.iter_mut().zip(&v) {
            let radial = dot(g, row);
            for (gd, rd) in g.iter_mut().zip(row) {
                *gd -= radial * rd;
            }
            gnorm2 += dot(g, g);
        }
        if gnorm2.sqrt() <= tol * max_degree {
            break;
        }

        let mut accepted = None;
        let mut t = step * 2.0;
        for _ in 0..60 {
            let trial: Vec<Vec<f64>> = v
                .iter()
                .zip(&grad)
                .map(|(row, g)| {
                    let mut r: Vec<f64> = row.iter().zip(g).map(|(x, gd)| x + t * gd).collect();
                    normalize(&mut r);
                    r
                })
                .collect();
            let ft = sdp_objective(graph, &trial);
            if ft >= f + 0.25 * t * gnorm2 {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else { break };
        step = t;
        v = trial;
        f = ft;
        history.push(f);
    }
    SdpSolution {
        vectors: v,
        z_sdp: f,
        iterations,
        history,
    }
}

/// Certified upper bound on the SDP value (and hence on the maximum cut)
/// from the dual `min sum y  s.t.  Diag(y) - L/4 >= 0`, with `y` read off the
/// primal factor and shifted by the most negative eigenvalue.
pub fn dual_bound(graph: &WeightedGraph, sdp: &SdpSolution) -> f64 {
    let n = graph.n_vertices;
    if graph.edges.is_empty() {
        return 0.0;
    }
    let l = graph.laplacian();
    let mut y = vec![0.0; n];
    for (u, yu) in y.iter_mut().enumerate() {
        *yu = 0.25
            * (0..n)
                .map(|v| l[(u, v)] * dot(&sdp.vectors[u], &sdp.vectors[v]))
                .sum::<f64>();
    }
    let mut s = -0.25 * l;
    for (u, yu) in y.iter().enumerate() {
        s[(u, u)] += yu;
    }
    let lambda_min = SymmetricEigen::new(s).eigenvalues.min();
    let shift = (-lambda_min).max(0.0);
    let scale = graph.abs_weight();
    y.iter().sum::<f64>() + n as f64 * shift + 1e-10 * scale.max(1.0)
}

/// Random-hyperplane rounding; returns the best cut value and its sides.
pub fn gw_round(vectors: &[Vec<f64>], graph: &WeightedGraph, rounds: usize, seed: u64) -> (f64, Vec<bool>) {
    let n = graph.n_vertices;
    let mut best = (0.0, vec![true; n]);
    if n == 0 || graph.edges.is_empty() {
        return best;
    }
    let k = vectors[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..rounds.max(1) {
        let r: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let mut side: Vec<bool> = vectors.iter().map(|row| dot(row, &r) >= 0.0).collect();
        if !side[0] {
            side.iter_mut().for_each(|s| *s = !*s);
        }
        let value = graph.cut_value(&side);
        if value > best.0 {
            best = (value, side);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub z_gw: f64,
    pub z_sdp: f64,
    /// Certified upper bound on the maximum cut.
    pub z_dual: f64,
    pub w_total: f64,
    pub w_minus: f64,
    /// `-(2/a) z_gw + (2/a - 2) W- + W`.
    pub alpha_bound: f64,
    /// `-2 z_dual + W`.
    pub sdp_bound: f64,
    /// Lower bound on `min H` without the constant.
    pub lb_value: f64,
    pub alpha: f64,
    /// Spins of the best rounded cut.
    pub best_spins: Vec<i8>,
}

/// Lower bound on the ground-state energy of `model`, constant excluded.
pub fn lower_bound(model: &IsingModel, cfg: &BoundConfig) -> BoundResult {
    let graph = ising_to_maxcut(model);
    let w_total = graph.total_weight();
    let w_minus = graph.negative_weight();
    if graph.edges.is_empty() {
        return BoundResult {
            z_gw: 0.0,
            z_sdp: 0.0,
            z_dual: 0.0,
            w_total,
            w_minus,
            alpha_bound: 0.0,
            sdp_bound: 0.0,
            lb_value: 0.0,
            alpha: GW_ALPHA,
            best_spins: vec![1; model.n_spins],
        };
    }
    let rank = cfg.rank.unwrap_or_else(|| default_rank(graph.n_vertices));
    let sdp = solve_sdp(&graph, rank, cfg.max_iters, cfg.tol, cfg.seed);
    let z_dual = dual_bound(&graph, &sdp);
    let (z_gw, side) = gw_round(&sdp.vectors, &graph, cfg.rounds, cfg.seed.wrapping_add(1));
    let alpha_bound = gw_alpha_bound(z_gw, w_total, w_minus);
    let sdp_bound = -2.0 * z_dual + w_total;
    BoundResult {
        z_gw,
        z_sdp: sdp.z_sdp,
        z_dual,
        w_total,
        w_minus,
        alpha_bound,
        sdp_bound,
        lb_value: alpha_bound.max(sdp_bound),
        alpha: GW_ALPHA,
        best_spins: cut_to_spins(&side),
    }
}

pub fn gw_alpha_bound(z_gw: f64, w_total: f64, w_minus: f64) -> f64 {
    -(2.0 / GW_ALPHA) * z_gw + (2.0 / GW_ALPHA - 2.0) * w_minus + w_total
}

/// Worst case of the alpha bound given the true ground-state energy:
/// `min_h / a - ((1 - a) / a) (W - 2 W-)`.
pub fn bound_floor(model: &IsingModel, min_h: f64) -> f64 {
    let abs_weight = model.abs_weight();
    min_h / GW_ALPHA - ((1.0 - GW_ALPHA) / GW_ALPHA) * abs_weight
}

/// `lb + C >= M`: every completion pays at least one unit of penalty.
pub fn infeasible_by_bound(lb_value: f64, constant: f64, big_m: f64) -> bool {
    lb_value + constant >= big_m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_coupling() -> IsingModel {
        // H = -2 s1 s2, i.e. J12 = 2
        let mut m = IsingModel::zero(2);
        m.add_coupling(0, 1, -2.0);
        m
    }

    fn triangle() -> WeightedGraph {
        WeightedGraph {
            n_vertices: 3,
            edges: vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)],
        }
    }

    #[test]
    fn reduction_single_coupling() {
        let g = ising_to_maxcut(&single_coupling());
        assert_eq!(g.n_vertices, 3);
        assert_eq!(g.edges, vec![(1, 2, -2.0)]);
        assert_eq!(g.total_weight(), -2.0);
        assert_eq!(g.negative_weight(), -2.0);
        assert_eq!(g.abs_weight(), 2.0);
    }

    #[test]
    fn reduction_single_field() {
        // h = 4, mu = -1/2: H = 2 s
        let mut m = IsingModel::zero(1);
        m.fields[0] = 2.0;
        let g = ising_to_maxcut(&m);
        assert_eq!(g.edges, vec![(0, 1, 2.0)]);
        // min H = -2 = W - 2 z* with z* = 2
        assert_eq!(g.total_weight() - 2.0 * g.cut_value(&[true, false]), -2.0);
    }

    #[test]
    fn reduction_zero_model() {
        let g = ising_to_maxcut(&IsingModel::zero(3));
        assert!(g.edges.is_empty());
        assert_eq!(g.total_weight(), 0.0);
        assert_eq!(g.negative_weight(), 0.0);
    }

    #[test]
    fn sdp_single_edge() {
        let g = WeightedGraph {
            n_vertices: 2,
            edges: vec![(0, 1, 2.0)],
        };
        let sol = solve_sdp(&g, 2, 2000, 1e-12, 3);
        assert!((sol.z_sdp - 2.0).abs() < 1e-4, "z_sdp = {}", sol.z_sdp);
        for row in &sol.vectors {
            assert_relative_eq!(dot(row, row), 1.0, epsilon = 1e-8);
        }
        assert!(sol.history.windows(2).all(|w| w[1] >= w[0]));
        let (z, side) = gw_round(&sol.vectors, &g, 8, 1);
        assert_eq!(z, 2.0);
        assert_ne!(side[0], side[1]);
    }

    #[test]
    fn sdp_triangle() {
        let g = triangle();
        let sol = solve_sdp(&g, 2, 2000, 1e-12, 9);
        assert!(sol.z_sdp >= 2.0 && sol.z_sdp <= 2.25 + 1e-9, "{}", sol.z_sdp);
        assert!(dual_bound(&g, &sol) >= 2.25 - 1e-9);
        let (z, _) = gw_round(&sol.vectors, &g, 64, 4);
        assert!(z <= 2.0);
        assert_eq!(z, 2.0);
    }

    #[test]
    fn empty_graph() {
        let g = WeightedGraph {
            n_vertices: 4,
            edges: vec![],
        };
        let sol = solve_sdp(&g, 3, 100, 1e-7, 0);
        assert_eq!(sol.z_sdp, 0.0);
        assert_eq!(gw_round(&sol.vectors, &g, 4, 0).0, 0.0);
    }

    #[test]
    fn lower_bound_single_coupling() {
        let r = lower_bound(&single_coupling(), &BoundConfig::default());
        assert_relative_eq!(r.alpha_bound, 2.0 - 4.0 / GW_ALPHA, epsilon = 1e-9);
        assert!((r.sdp_bound + 2.0).abs() < 1e-6);
        assert!(r.lb_value <= -2.0 + 1e-9);
        assert!((r.lb_value + 2.0).abs() < 1e-6);
    }

    #[test]
    fn lower_bound_zero_model() {
        let r = lower_bound(&IsingModel::zero(4), &BoundConfig::default());
        assert_eq!(r.lb_value, 0.0);
    }

    #[test]
    fn floor_examples() {
        let floor = bound_floor(&single_coupling(), -2.0);
        assert_relative_eq!(floor, -2.0 / GW_ALPHA - (1.0 - GW_ALPHA) / GW_ALPHA * 2.0);
        assert_relative_eq!(floor, 2.0 - 4.0 / GW_ALPHA, epsilon = 1e-12);
        assert_eq!(bound_floor(&IsingModel::zero(2), 0.0), 0.0);
    }

    #[test]
    fn infeasibility_rule() {
        assert!(infeasible_by_bound(0.0, 100.0, 100.0));
        assert!(!infeasible_by_bound(-5.0, 0.0, 100.0));
    }

    #[test]
    fn spins_follow_vertex_zero() {
        assert_eq!(cut_to_spins(&[false, false, true]), vec![1, -1]);
        assert_eq!(cut_to_spins(&[true, false, true]), vec![-1, 1]);
    }
}
