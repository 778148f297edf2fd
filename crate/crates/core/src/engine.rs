//! Branch and bound over Ising sub-problems.
//!
//! Each node fixes some master variables. Evaluating a node propagates the
//! equality constraints, bounds the reduced Ising model through MaxCut,
//! samples the model with a variational routine to improve the incumbent and
//! to score constraint conflicts, and branches on the most conflicting
//! variable. Nodes are explored lowest-bound first.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blp::{compute_big_m, penalized_cost, BlpInstance, Fixings, FEAS_TOL};
use crate::bound::{infeasible_by_bound, lower_bound, BoundConfig, BoundResult};
use crate::error::{Error, Result};
use crate::ising::{encode, many_body_count, IsingModel, ReducedCore};
use crate::metrics::{many_body_fraction, EventKind, TraceEvent, TraceRecorder};
use crate::vqa::{OptimizerTrace, Qaoa, QaoaParams, SampleSet, Sampler, VqaRun};

/// Absolute tolerance for the lower bound meeting the best feasible value.
pub const OPTIMALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Elapsed wall-clock seconds.
    Wall,
    /// Simulated statevector work converted to seconds at 1e9 amplitude
    /// updates per second. Reproducible across runs.
    Logical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// QAOA depth.
    pub p: usize,
    pub shots: u64,
    /// Optimizer query budget per node.
    pub node_queries: usize,
    pub node_limit: Option<usize>,
    /// Wall-clock seconds.
    pub time_limit: Option<f64>,
    /// Relative gap `(UB - LB) / max(1, |UB|)` at which to stop.
    pub gap_target: Option<f64>,
    pub seed: u64,
    /// Start each child's angle search from its parent's optimized angles.
    pub warm_start: bool,
    pub bound: BoundConfig,
    /// Prune nodes whose bound reaches the incumbent, and stop once the
    /// global bound meets the best feasible value. When off, the tree is
    /// explored until the frontier is empty.
    pub bound_pruning: bool,
    /// Prune nodes whose bound plus constant reaches the penalty weight.
    pub big_m_pruning: bool,
    /// Run the sampler even on nodes the bound is about to prune.
    pub vqa_on_pruned_nodes: bool,
    /// Nodes evaluated per batch.
    pub workers: usize,
    pub clock: ClockMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            p: 3,
            shots: 1024,
            node_queries: 50,
            node_limit: None,
            time_limit: None,
            gap_target: None,
            seed: 0,
            warm_start: false,
            bound: BoundConfig::default(),
            bound_pruning: true,
            big_m_pruning: true,
            vqa_on_pruned_nodes: false,
            workers: 1,
            clock: ClockMode::Logical,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Parameter("p must be >= 1".into()));
        }
        if self.shots == 0 {
            return Err(Error::Parameter("shots must be >= 1".into()));
        }
        if self.node_queries == 0 {
            return Err(Error::Parameter("node query budget must be >= 1".into()));
        }
        if self.node_limit == Some(0) {
            return Err(Error::Parameter("node limit must be positive".into()));
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(Error::Parameter("time limit must be positive".into()));
            }
        }
        if let Some(g) = self.gap_target {
            if !(g >= 0.0) {
                return Err(Error::Parameter("gap target must be nonnegative".into()));
            }
        }
        if self.workers == 0 {
            return Err(Error::Parameter("workers must be >= 1".into()));
        }
        if self.bound.rounds == 0 {
            return Err(Error::Parameter("rounding rounds must be >= 1".into()));
        }
        Ok(())
    }
}

/// splitmix64, for deriving per-node seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// propagation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationStatus {
    Ok,
    /// Constraint `row` cannot be met by any completion.
    Infeasible { row: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub fixings: Fixings,
    pub status: PropagationStatus,
}

/// Activity-based fixpoint propagation of `Ax = b` over the free binaries.
pub fn propagate(instance: &BlpInstance, fixings: &Fixings) -> Result<Propagation> {
    if let Some((k, _)) = fixings.iter().find(|(k, _)| *k >= instance.n) {
        return Err(Error::Dimension {
            expected: instance.n,
            got: k + 1,
        });
    }
    let mut fixed = fixings.clone();
    loop {
        let mut changed = false;
        for (j, row) in instance.a.iter().enumerate() {
            let mut residual = instance.b[j];
            let mut min_act = 0.0;
            let mut max_act = 0.0;
            for (i, &a) in row.iter().enumerate() {
                match fixed.get(i) {
                    Some(v) => residual -= a * f64::from(v),
                    None if a > 0.0 => max_act += a,
                    None => min_act += a,
                }
            }
            if min_act > residual + FEAS_TOL || max_act < residual - FEAS_TOL {
                return Ok(Propagation {
                    fixings: fixed,
                    status: PropagationStatus::Infeasible { row: j },
                });
            }
            let at_min = (min_act - residual).abs() <= FEAS_TOL;
            let at_max = (max_act - residual).abs() <= FEAS_TOL;
            if at_min == at_max {
                // both extremes reachable only when no free coefficient is nonzero
                continue;
            }
            for (i, &a) in row.iter().enumerate() {
                if a == 0.0 || fixed.contains(i) {
                    continue;
                }
                let value = match (at_min, a > 0.0) {
                    (true, true) | (false, false) => 0,
                    _ => 1,
                };
                fixed.fix(i, value)?;
                changed = true;
            }
        }
        if !changed {
            return Ok(Propagation {
                fixings: fixed,
                status: PropagationStatus::Ok,
            });
        }
    }
}

// ---------------------------------------------------------------------------
// conflict values

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictData {
    /// `violations[j][l]`: sample `l` violates constraint `j`.
    pub violations: Vec<Vec<bool>>,
    /// Share of shots violating each constraint.
    pub nu: Vec<f64>,
    /// `incidence[j][i]`: variable `i` appears in constraint `j`.
    pub incidence: Vec<Vec<bool>>,
    /// `nu P`, per free variable.
    pub gamma: Vec<f64>,
}

pub fn conflict_values(core: &ReducedCore, samples: &SampleSet) -> Result<ConflictData> {
    let n = core.n_free();
    if samples.n_bits != n {
        return Err(Error::Dimension {
            expected: n,
            got: samples.n_bits,
        });
    }
    let q = samples.shots.max(1) as f64;
    let residuals: Vec<Vec<f64>> = samples.samples.iter().map(|s| core.residual(&s.bits)).collect();
    let violations: Vec<Vec<bool>> = (0..core.m())
        .map(|j| residuals.iter().map(|r| r[j].abs() > FEAS_TOL).collect())
        .collect();
    let nu: Vec<f64> = violations
        .iter()
        .map(|row| {
            row.iter()
                .zip(&samples.samples)
                .filter(|(v, _)| **v)
                .map(|(_, s)| s.count as f64)
                .sum::<f64>()
                / q
        })
        .collect();
    let incidence: Vec<Vec<bool>> = core
        .a
        .iter()
        .map(|row| row.iter().map(|a| *a != 0.0).collect())
        .collect();
    let gamma = (0..n)
        .map(|i| {
            incidence
                .iter()
                .zip(&nu)
                .filter(|(row, _)| row[i])
                .map(|(_, nu)| nu)
                .sum()
        })
        .collect();
    Ok(ConflictData {
        violations,
        nu,
        incidence,
        gamma,
    })
}

/// Index of the largest conflict value, lowest index on ties. An all-zero
/// conflict vector falls back to the largest `|field|`.
pub fn select_branching_variable(gamma: &[f64], fields: &[f64]) -> Result<usize> {
    if gamma.is_empty() {
        return Err(Error::Parameter("no free variable to branch on".into()));
    }
    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
    };
    if gamma.iter().all(|g| *g == 0.0) {
        let abs: Vec<f64> = fields.iter().map(|f| f.abs()).collect();
        if abs.len() == gamma.len() {
            return Ok(argmax(&abs));
        }
        return Ok(0);
    }
    Ok(argmax(gamma))
}

// ---------------------------------------------------------------------------
// incumbent

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub value: f64,
    pub x: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    /// Lowest penalized master cost seen; the pruning upper bound.
    pub best_penalized: Option<Solution>,
    pub best_penalized_feasible: bool,
    /// Lowest objective among feasible assignments seen; the answer.
    pub best_feasible: Option<Solution>,
}

impl Incumbent {
    /// Offers an assignment; returns whether either record improved.
    pub fn offer(&mut self, x: &[u8], penalized: f64, objective: f64, feasible: bool) -> bool {
        let mut improved = false;
        if self.best_penalized.as_ref().is_none_or(|b| penalized < b.value) {
            self.best_penalized = Some(Solution {
                value: penalized,
                x: x.to_vec(),
            });
            self.best_penalized_feasible = feasible;
            improved = true;
        }
        if feasible && self.best_feasible.as_ref().is_none_or(|b| objective < b.value) {
            self.best_feasible = Some(Solution {
                value: objective,
                x: x.to_vec(),
            });
            improved = true;
        }
        improved
    }

    pub fn upper_bound(&self) -> Option<f64> {
        self.best_penalized.as_ref().map(|s| s.value)
    }

    /// Whether a region with lower bound `lb` cannot beat the incumbent. An
    /// infeasible incumbent only dominates strictly, so ties never hide a
    /// feasible optimum.
    pub fn dominates(&self, lb: f64) -> bool {
        match &self.best_penalized {
            Some(s) if self.best_penalized_feasible => lb >= s.value,
            Some(s) => lb > s.value,
            None => false,
        }
    }
}

// ---------------------------------------------------------------------------
// nodes

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub fixings: Fixings,
    /// Lower bound on the penalized cost of the subtree, constant included.
    pub local_lb: f64,
    pub seed: u64,
    pub warm: Option<QaoaParams>,
}

impl Node {
    pub fn root(seed: u64) -> Self {
        Node {
            id: 0,
            parent: None,
            depth: 0,
            fixings: Fixings::new(),
            local_lb: f64::NEG_INFINITY,
            seed: mix_seed(seed, 0),
            warm: None,
        }
    }
}

struct QueueEntry(Node);

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    // BinaryHeap pops the maximum: lowest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .local_lb
            .total_cmp(&self.0.local_lb)
            .then(self.0.depth.cmp(&other.0.depth))
            .then(other.0.id.cmp(&self.0.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    Propagation,
    BigM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOutcome {
    PrunedInfeasible(InfeasibleReason),
    PrunedBound,
    FathomedLeaf,
    Branched,
}

impl NodeOutcome {
    fn label(&self) -> &'static str {
        match self {
            NodeOutcome::PrunedInfeasible(InfeasibleReason::Propagation) => "infeasible_propagation",
            NodeOutcome::PrunedInfeasible(InfeasibleReason::BigM) => "infeasible_big_m",
            NodeOutcome::PrunedBound => "bound",
            NodeOutcome::FathomedLeaf => "leaf",
            NodeOutcome::Branched => "branched",
        }
    }
}

/// A child created by branching, after propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildSpec {
    pub var: usize,
    pub value: u8,
    pub fixings: Fixings,
    pub infeasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<u8>,
    pub penalized: f64,
    pub objective: f64,
    pub feasible: bool,
}

/// Everything computed while evaluating one node.
#[derive(Debug, Clone)]
pub struct NodeEvaluation {
    pub node_id: usize,
    pub outcome: NodeOutcome,
    /// Fixings after propagation.
    pub fixings: Fixings,
    pub local_lb: f64,
    pub n_free: usize,
    pub constant: Option<f64>,
    pub bound: Option<BoundResult>,
    pub many_body: Option<usize>,
    pub many_body_fraction: Option<f64>,
    pub vqa: Option<VqaRun>,
    pub candidates: Vec<Candidate>,
    pub conflict: Option<ConflictData>,
    pub branch_var: Option<usize>,
    pub children: Vec<ChildSpec>,
}

/// Master problem data shared by all nodes.
#[derive(Debug, Clone)]
pub struct Master {
    pub instance: BlpInstance,
    pub big_m: f64,
    pub model: IsingModel,
}

impl Master {
    pub fn new(instance: BlpInstance) -> Result<Self> {
        instance.validate()?;
        let big_m = compute_big_m(&instance)?;
        let model = encode(&instance, big_m)?;
        Ok(Master {
            instance,
            big_m,
            model,
        })
    }

    fn candidate(&self, x: Vec<u8>) -> Result<Candidate> {
        Ok(Candidate {
            penalized: penalized_cost(&self.instance, &x, self.big_m)?,
            objective: self.instance.objective(&x)?,
            feasible: self.instance.is_feasible(&x)?,
            x,
        })
    }
}

/// Evaluates one node against a snapshot of the incumbent, which is updated
/// in place with anything the node finds.
pub fn evaluate_node(
    node: &Node,
    config: &SolverConfig,
    incumbent: &mut Incumbent,
    master: &Master,
    sampler: &dyn Sampler,
) -> Result<NodeEvaluation> {
    let mut eval = NodeEvaluation {
        node_id: node.id,
        outcome: NodeOutcome::PrunedInfeasible(InfeasibleReason::Propagation),
        fixings: node.fixings.clone(),
        local_lb: node.local_lb,
        n_free: master.instance.n - node.fixings.len(),
        constant: None,
        bound: None,
        many_body: None,
        many_body_fraction: None,
        vqa: None,
        candidates: Vec::new(),
        conflict: None,
        branch_var: None,
        children: Vec::new(),
    };

    // (1) propagation
    let prop = propagate(&master.instance, &node.fixings)?;
    eval.fixings = prop.fixings;
    if let PropagationStatus::Infeasible { .. } = prop.status {
        return Ok(eval);
    }

    // (2) reduction and bounding
    let core = ReducedCore::from_instance(&master.instance).reduce(&eval.fixings)?;
    let model = core.model(master.big_m);
    eval.n_free = core.n_free();
    eval.constant = Some(model.constant());
    eval.many_body = Some(many_body_count(&model));
    eval.many_body_fraction = Some(many_body_fraction(&model, &master.model));

    let bound_cfg = BoundConfig {
        seed: mix_seed(node.seed, 1),
        ..config.bound
    };
    let bound = lower_bound(&model, &bound_cfg);
    eval.local_lb = node.local_lb.max(bound.lb_value + model.constant());
    eval.bound = Some(bound);

    if config.big_m_pruning && infeasible_by_bound(eval.local_lb, 0.0, master.big_m) {
        eval.outcome = NodeOutcome::PrunedInfeasible(InfeasibleReason::BigM);
        return Ok(eval);
    }
    let bound_prunes = config.bound_pruning && incumbent.dominates(eval.local_lb);
    if bound_prunes && !(config.vqa_on_pruned_nodes && core.n_free() > 0) {
        eval.outcome = NodeOutcome::PrunedBound;
        return Ok(eval);
    }

    // (3) leaf
    if core.n_free() == 0 {
        let cand = master.candidate(core.complete(&[])?)?;
        incumbent.offer(&cand.x, cand.penalized, cand.objective, cand.feasible);
        eval.candidates.push(cand);
        eval.outcome = NodeOutcome::FathomedLeaf;
        return Ok(eval);
    }

    // (4) variational solve and sampling
    let run = sampler.solve_and_sample(&model, config.shots, mix_seed(node.seed, 2), node.warm.as_ref())?;
    let mut best_pen: Option<Candidate> = None;
    let mut best_feas: Option<Candidate> = None;
    for s in &run.samples.samples {
        let cand = master.candidate(core.complete(&s.bits)?)?;
        if best_pen.as_ref().is_none_or(|b| cand.penalized < b.penalized) {
            best_pen = Some(cand.clone());
        }
        if cand.feasible && best_feas.as_ref().is_none_or(|b| cand.objective < b.objective) {
            best_feas = Some(cand);
        }
    }
    for cand in best_pen.into_iter().chain(best_feas) {
        incumbent.offer(&cand.x, cand.penalized, cand.objective, cand.feasible);
        eval.candidates.push(cand);
    }
    let conflict = conflict_values(&core, &run.samples)?;
    eval.vqa = Some(run);

    if bound_prunes || (config.bound_pruning && incumbent.dominates(eval.local_lb)) {
        eval.conflict = Some(conflict);
        eval.outcome = NodeOutcome::PrunedBound;
        return Ok(eval);
    }

    // (5) branching
    let k = select_branching_variable(&conflict.gamma, &model.fields)?;
    let var = core.index_map[k];
    eval.branch_var = Some(var);
    for value in [0u8, 1] {
        let fixings = eval.fixings.clone().with(var, value)?;
        let prop = propagate(&master.instance, &fixings)?;
        eval.children.push(ChildSpec {
            var,
            value,
            infeasible: matches!(prop.status, PropagationStatus::Infeasible { .. }),
            fixings: prop.fixings,
        });
    }
    eval.conflict = Some(conflict);
    eval.outcome = NodeOutcome::Branched;
    Ok(eval)
}

// ---------------------------------------------------------------------------
// solve loop

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    GapReached,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapReached => "gap_reached",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
        })
    }
}

/// Per-node summary kept for analysis of the search tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub fixings: Fixings,
    /// `None` for children dropped at creation and for the unbounded root
    /// when it is pruned before bounding.
    pub local_lb: Option<f64>,
    pub n_free: usize,
    pub many_body: Option<usize>,
    pub outcome: NodeOutcome,
    /// Whether the node was popped and evaluated (as opposed to dropped at
    /// creation by propagation).
    pub evaluated: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub best_feasible: Option<Solution>,
    pub best_penalized: Option<Solution>,
    pub global_lb: Option<f64>,
    pub nodes_evaluated: usize,
    pub total_queries: usize,
    pub big_m: f64,
    pub trace: Vec<TraceEvent>,
    pub nodes: Vec<NodeRecord>,
}

struct Clock {
    mode: ClockMode,
    start: Instant,
    logical: f64,
}

impl Clock {
    fn now(&self) -> f64 {
        match self.mode {
            ClockMode::Wall => self.start.elapsed().as_secs_f64(),
            ClockMode::Logical => self.logical,
        }
    }

    fn advance(&mut self, work: f64) {
        self.logical += work * 1e-9;
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Solves `instance` with the default QAOA sampler.
pub fn solve(instance: &BlpInstance, config: &SolverConfig) -> Result<SolveResult> {
    let sampler = Qaoa::new(config.p, config.node_queries);
    solve_with(instance, config, &sampler)
}

pub fn solve_with(instance: &BlpInstance, config: &SolverConfig, sampler: &dyn Sampler) -> Result<SolveResult> {
    config.validate()?;
    let master = Master::new(instance.clone())?;
    let recorder = TraceRecorder::new();
    let mut clock = Clock {
        mode: config.clock,
        start: Instant::now(),
        logical: 0.0,
    };
    let wall_start = Instant::now();

    let mut incumbent = Incumbent::default();
    let mut queue = BinaryHeap::new();
    let mut records: Vec<NodeRecord> = Vec::new();
    let mut next_id = 1usize;
    let mut evaluated = 0usize;
    let mut total_queries = 0usize;
    let mut global_lb: Option<f64> = None;

    // root, propagated before it enters the queue like every other node
    let mut root = Node::root(config.seed);
    let root_prop = propagate(&master.instance, &root.fixings)?;
    root.fixings = root_prop.fixings;
    if let PropagationStatus::Infeasible { .. } = root_prop.status {
        records.push(NodeRecord {
            id: 0,
            parent: None,
            depth: 0,
            fixings: root.fixings.clone(),
            local_lb: None,
            n_free: master.instance.n - root.fixings.len(),
            many_body: None,
            outcome: NodeOutcome::PrunedInfeasible(InfeasibleReason::Propagation),
            evaluated: false,
        });
        let mut prune = TraceEvent::new(EventKind::Prune, clock.now(), 0);
        prune.status = Some(NodeOutcome::PrunedInfeasible(InfeasibleReason::Propagation).label().into());
        recorder.record(prune);
    } else {
        queue.push(QueueEntry(root));
    }

    let status = loop {
        if queue.is_empty() {
            break if incumbent.best_feasible.is_some() {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            };
        }
        if let (true, Some(lb), Some(best)) = (config.bound_pruning, global_lb, incumbent.best_feasible.as_ref()) {
            if lb >= best.value - OPTIMALITY_TOL {
                // proven within tolerance: close the bound onto the answer
                global_lb = Some(lb.max(best.value.min(incumbent.upper_bound().unwrap_or(best.value))));
                break SolveStatus::Optimal;
            }
        }
        if let (Some(target), Some(lb), Some(ub)) = (config.gap_target, global_lb, incumbent.upper_bound()) {
            if (ub - lb) / ub.abs().max(1.0) <= target {
                break SolveStatus::GapReached;
            }
        }
        if config.node_limit.is_some_and(|limit| evaluated >= limit) {
            break SolveStatus::NodeLimit;
        }
        if config
            .time_limit
            .is_some_and(|limit| wall_start.elapsed().as_secs_f64() >= limit)
        {
            break SolveStatus::TimeLimit;
        }

        let mut batch = Vec::with_capacity(config.workers);
        while batch.len() < config.workers {
            match queue.pop() {
                Some(QueueEntry(node)) => batch.push(node),
                None => break,
            }
            if config.node_limit.is_some_and(|limit| evaluated + batch.len() >= limit) {
                break;
            }
        }

        let results: Vec<(Result<NodeEvaluation>, Incumbent)> = if batch.len() == 1 {
            let mut snapshot = incumbent.clone();
            let r = evaluate_node(&batch[0], config, &mut snapshot, &master, sampler);
            vec![(r, snapshot)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|node| {
                        let mut snapshot = incumbent.clone();
                        let master = &master;
                        scope.spawn(move || {
                            let r = evaluate_node(node, config, &mut snapshot, master, sampler);
                            (r, snapshot)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("node evaluation panicked"))
                    .collect()
            })
        };

        for (node, (result, _)) in batch.into_iter().zip(results) {
            let eval = result?;
            evaluated += 1;

            let mut start = TraceEvent::new(EventKind::NodeStart, clock.now(), evaluated);
            start.lb = finite(node.local_lb);
            recorder.record(start);

            if let Some(run) = &eval.vqa {
                let constant = eval.constant.unwrap_or(0.0);
                let per_query = run.work / (run.trace.total_queries() + 1) as f64;
                for q in &run.trace.queries {
                    clock.advance(per_query);
                    let mut ev = TraceEvent::new(EventKind::OptimizerQuery, clock.now(), evaluated);
                    ev.expectation = Some(q.expectation + constant);
                    ev.query_index = Some(total_queries);
                    total_queries += 1;
                    recorder.record(ev);
                }
                clock.advance(per_query);
            }

            let mut improved = false;
            for cand in &eval.candidates {
                improved |= incumbent.offer(&cand.x, cand.penalized, cand.objective, cand.feasible);
            }
            if improved {
                let mut ev = TraceEvent::new(EventKind::IncumbentUpdate, clock.now(), evaluated);
                ev.ub = incumbent.upper_bound();
                ev.lb = global_lb;
                recorder.record(ev);
            }

            let bounded = eval.bound.is_some();
            records.push(NodeRecord {
                id: node.id,
                parent: node.parent,
                depth: node.depth,
                fixings: eval.fixings.clone(),
                local_lb: if bounded { finite(eval.local_lb) } else { finite(node.local_lb) },
                n_free: eval.n_free,
                many_body: eval.many_body,
                outcome: eval.outcome,
                evaluated: true,
            });

            let kind = match eval.outcome {
                NodeOutcome::PrunedInfeasible(_) | NodeOutcome::PrunedBound => EventKind::Prune,
                NodeOutcome::FathomedLeaf => EventKind::Fathom,
                NodeOutcome::Branched => EventKind::Branch,
            };
            let mut ev = TraceEvent::new(kind, clock.now(), evaluated);
            ev.lb = if bounded { finite(eval.local_lb) } else { None };
            ev.many_body_fraction = eval.many_body_fraction;
            ev.status = Some(eval.outcome.label().into());
            recorder.record(ev);

            if eval.outcome == NodeOutcome::Branched {
                let warm = if config.warm_start {
                    eval.vqa.as_ref().map(|r| r.params.clone())
                } else {
                    None
                };
                for child in eval.children {
                    let id = next_id;
                    next_id += 1;
                    if child.infeasible {
                        records.push(NodeRecord {
                            id,
                            parent: Some(node.id),
                            depth: node.depth + 1,
                            n_free: master.instance.n - child.fixings.len(),
                            fixings: child.fixings,
                            local_lb: None,
                            many_body: None,
                            outcome: NodeOutcome::PrunedInfeasible(InfeasibleReason::Propagation),
                            evaluated: false,
                        });
                        continue;
                    }
                    queue.push(QueueEntry(Node {
                        id,
                        parent: Some(node.id),
                        depth: node.depth + 1,
                        fixings: child.fixings,
                        local_lb: eval.local_lb,
                        seed: mix_seed(config.seed, id as u64),
                        warm: warm.clone(),
                    }));
                }
            }

            // global bound: the cheapest open node, capped by the incumbent
            let frontier = queue.peek().map(|e| e.0.local_lb);
            let cap = match (incumbent.upper_bound(), incumbent.best_feasible.as_ref()) {
                (Some(ub), Some(f)) => Some(ub.min(f.value)),
                (Some(ub), None) => Some(ub),
                _ => None,
            };
            let candidate = match (frontier, cap) {
                (Some(f), Some(c)) => Some(f.min(c)),
                (Some(f), None) => Some(f),
                (None, Some(c)) if incumbent.best_feasible.is_some() => Some(c),
                _ => None,
            };
            if let Some(c) = candidate.and_then(finite) {
                global_lb = Some(global_lb.map_or(c, |g: f64| g.max(c)));
            }
            let mut ev = TraceEvent::new(EventKind::BoundUpdate, clock.now(), evaluated);
            ev.lb = global_lb;
            ev.ub = incumbent.upper_bound();
            recorder.record(ev);
        }
    };

    let mut done = TraceEvent::new(EventKind::Done, clock.now(), evaluated);
    done.lb = global_lb;
    done.ub = incumbent.upper_bound();
    done.status = Some(status.to_string());
    recorder.record(done);

    Ok(SolveResult {
        status,
        best_feasible: incumbent.best_feasible,
        best_penalized: incumbent.best_penalized,
        global_lb,
        nodes_evaluated: evaluated,
        total_queries,
        big_m: master.big_m,
        trace: recorder.into_events(),
        nodes: records,
    })
}

// ---------------------------------------------------------------------------
// plain QAOA baseline

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub best_penalized: Solution,
    pub best_feasible: Option<Solution>,
    pub optimizer: OptimizerTrace,
    pub trace: Vec<TraceEvent>,
    pub big_m: f64,
}

/// QAOA on the master model with a flat query budget, then `config.shots`
/// samples from the optimized state.
pub fn run_plain_qaoa(instance: &BlpInstance, config: &SolverConfig, queries: usize) -> Result<BaselineResult> {
    let sampler = Qaoa::new(config.p, queries);
    run_plain_with(instance, config, &sampler)
}

pub fn run_plain_with(instance: &BlpInstance, config: &SolverConfig, sampler: &dyn Sampler) -> Result<BaselineResult> {
    config.validate()?;
    let master = Master::new(instance.clone())?;
    let mut clock = Clock {
        mode: config.clock,
        start: Instant::now(),
        logical: 0.0,
    };
    let run = sampler.solve_and_sample(&master.model, config.shots, mix_seed(config.seed, 2), None)?;
    let constant = master.model.constant();
    let recorder = TraceRecorder::new();
    let per_query = run.work / (run.trace.total_queries() + 1) as f64;
    for q in &run.trace.queries {
        clock.advance(per_query);
        let mut ev = TraceEvent::new(EventKind::OptimizerQuery, clock.now(), 1);
        ev.expectation = Some(q.expectation + constant);
        ev.query_index = Some(q.query_index);
        recorder.record(ev);
    }
    clock.advance(per_query);

    let mut incumbent = Incumbent::default();
    for s in &run.samples.samples {
        let cand = master.candidate(s.bits.clone())?;
        incumbent.offer(&cand.x, cand.penalized, cand.objective, cand.feasible);
    }
    let best_penalized = incumbent
        .best_penalized
        .clone()
        .expect("at least one shot is sampled");
    let mut ev = TraceEvent::new(EventKind::IncumbentUpdate, clock.now(), 1);
    ev.ub = Some(best_penalized.value);
    recorder.record(ev);
    let mut done = TraceEvent::new(EventKind::Done, clock.now(), 1);
    done.ub = Some(best_penalized.value);
    done.status = Some("baseline".into());
    recorder.record(done);

    Ok(BaselineResult {
        best_penalized,
        best_feasible: incumbent.best_feasible,
        optimizer: run.trace,
        trace: recorder.into_events(),
        big_m: master.big_m,
    })
}
