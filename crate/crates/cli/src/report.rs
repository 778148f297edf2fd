use anyhow::{bail, Result};
use qcbb::metrics::{primal_dual_integral, Axis, BoundPoint, BoundSeries, EventKind, TraceEvent};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct FractionPoint {
    pub node_index: usize,
    pub fraction: f64,
}

#[derive(Debug, Serialize)]
pub struct QueryPoint {
    pub query_index: usize,
    pub expectation: f64,
}

#[derive(Debug, Serialize)]
pub struct Integrals {
    pub nodes: Option<f64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TraceReport {
    pub label: String,
    pub status: Option<String>,
    pub final_lb: Option<f64>,
    pub final_ub: Option<f64>,
    pub bounds_vs_nodes: Vec<BoundPoint>,
    pub bounds_vs_time: Vec<BoundPoint>,
    pub many_body_fraction: Vec<FractionPoint>,
    pub expected_cost_vs_queries: Vec<QueryPoint>,
    pub pd_integral: Integrals,
    /// Objective of the worst feasible assignment, for scaling plots.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_feasible: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimum: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub qcbb: TraceReport,
    pub baseline: TraceReport,
}

fn integral(series: &BoundSeries) -> Result<Option<f64>> {
    if series.is_empty() {
        return Ok(None);
    }
    Ok(Some(primal_dual_integral(series)?))
}

pub fn build(label: &str, events: &[TraceEvent]) -> Result<TraceReport> {
    if events.is_empty() {
        bail!("trace {label:?} has no events");
    }
    let nodes = BoundSeries::from_trace(events, Axis::Nodes);
    let time = BoundSeries::from_trace(events, Axis::Seconds);
    let done = events.iter().rev().find(|e| e.kind == EventKind::Done);
    let last_ub = events.iter().rev().find_map(|e| e.ub);
    let last_lb = events
        .iter()
        .rev()
        .filter(|e| matches!(e.kind, EventKind::BoundUpdate | EventKind::Done))
        .find_map(|e| e.lb);
    Ok(TraceReport {
        label: label.to_string(),
        status: done.and_then(|e| e.status.clone()),
        final_lb: done.and_then(|e| e.lb).or(last_lb),
        final_ub: done.and_then(|e| e.ub).or(last_ub),
        pd_integral: Integrals {
            nodes: integral(&nodes)?,
            seconds: integral(&time)?,
        },
        bounds_vs_nodes: nodes.points,
        bounds_vs_time: time.points,
        many_body_fraction: events
            .iter()
            .filter_map(|e| {
                e.many_body_fraction.map(|fraction| FractionPoint {
                    node_index: e.node_index,
                    fraction,
                })
            })
            .collect(),
        expected_cost_vs_queries: events
            .iter()
            .filter(|e| e.kind == EventKind::OptimizerQuery)
            .filter_map(|e| {
                Some(QueryPoint {
                    query_index: e.query_index?,
                    expectation: e.expectation?,
                })
            })
            .collect(),
        worst_feasible: None,
        optimum: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_an_error() {
        assert!(build("x", &[]).is_err());
    }

    #[test]
    fn series_are_extracted() {
        let mut q = TraceEvent::new(EventKind::OptimizerQuery, 0.0, 1);
        q.query_index = Some(0);
        q.expectation = Some(3.5);
        let mut b = TraceEvent::new(EventKind::BoundUpdate, 0.1, 1);
        b.lb = Some(1.0);
        b.ub = Some(2.0);
        let mut d = TraceEvent::new(EventKind::Done, 0.2, 2);
        d.lb = Some(2.0);
        d.ub = Some(2.0);
        d.status = Some("optimal".into());
        let mut b2 = b.clone();
        b2.node_index = 2;
        b2.lb = Some(2.0);
        let r = build("qcbb", &[q, b, b2, d]).unwrap();
        assert_eq!(r.expected_cost_vs_queries.len(), 1);
        assert_eq!(r.bounds_vs_nodes.len(), 2);
        assert_eq!(r.pd_integral.nodes, Some(1.0));
        assert_eq!((r.final_lb, r.final_ub), (Some(2.0), Some(2.0)));
        assert_eq!(r.status.as_deref(), Some("optimal"));
    }
}
