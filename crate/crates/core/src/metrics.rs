//! Solve traces, bound series, the primal-dual integral and trace files.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{many_body_count, IsingModel};

/// Column order of the CSV trace format.
pub const CSV_HEADER: [&str; 9] = [
    "wall_time_s",
    "node_index",
    "kind",
    "lb",
    "ub",
    "expectation",
    "query_index",
    "many_body_fraction",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    NodeStart,
    BoundUpdate,
    IncumbentUpdate,
    OptimizerQuery,
    Prune,
    Fathom,
    Branch,
    Done,
}

/// One row of a solve trace. Fields that do not apply to a kind are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub wall_time_s: f64,
    pub node_index: usize,
    pub kind: EventKind,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub expectation: Option<f64>,
    pub query_index: Option<usize>,
    pub many_body_fraction: Option<f64>,
    pub status: Option<String>,
}

impl TraceEvent {
    pub fn new(kind: EventKind, wall_time_s: f64, node_index: usize) -> Self {
        TraceEvent {
            wall_time_s,
            node_index,
            kind,
            lb: None,
            ub: None,
            expectation: None,
            query_index: None,
            many_body_fraction: None,
            status: None,
        }
    }
}

/// Append-only event sink. Appends are serialized through a mutex so the
/// recorder can be shared with evaluation workers.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    events: Mutex<Vec<TraceEvent>>,
}

impl TraceRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, event: TraceEvent) {
        self.events.lock().expect("trace lock poisoned").push(event);
    }

    pub fn len(&self) -> usize {
        self.events.lock().expect("trace lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events.into_inner().expect("trace lock poisoned")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Nodes,
    Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub t: f64,
    pub ub: f64,
    pub lb: f64,
}

/// Step functions of the upper and lower bound; point `k` holds on
/// `[t_k, t_{k+1})`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub points: Vec<BoundPoint>,
}

impl BoundSeries {
    /// Bound updates carrying both bounds, on the chosen axis.
    pub fn from_trace(events: &[TraceEvent], axis: Axis) -> Self {
        let points = events
            .iter()
            .filter(|e| e.kind == EventKind::BoundUpdate)
            .filter_map(|e| {
                let (ub, lb) = (e.ub?, e.lb?);
                let t = match axis {
                    Axis::Nodes => e.node_index as f64,
                    Axis::Seconds => e.wall_time_s,
                };
                Some(BoundPoint { t, ub, lb })
            })
            .collect();
        BoundSeries { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area between the upper and lower bound step functions over the span of
/// the series.
pub fn primal_dual_integral(series: &BoundSeries) -> Result<f64> {
    if series.points.is_empty() {
        return Err(Error::EmptyTrace);
    }
    for p in &series.points {
        if p.ub < p.lb - 1e-9 * p.ub.abs().max(1.0) {
            return Err(Error::CrossedBounds {
                t: p.t,
                ub: p.ub,
                lb: p.lb,
            });
        }
    }
    Ok(series
        .points
        .windows(2)
        .map(|w| (w[1].t - w[0].t) * (w[0].ub - w[0].lb).max(0.0))
        .sum())
}

/// Share of the master model's couplings still present in `node_model`.
/// A master without couplings yields 1.0.
pub fn many_body_fraction(node_model: &IsingModel, master_model: &IsingModel) -> f64 {
    let master = many_body_count(master_model);
    if master == 0 {
        log::warn!("master model has no couplings; many-body fraction reported as 1.0");
        return 1.0;
    }
    many_body_count(node_model) as f64 / master as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Json,
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            other => Err(Error::Parameter(format!("unknown trace format {other:?}"))),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Json => "json",
        })
    }
}

impl TraceFormat {
    /// Guesses from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => TraceFormat::Json,
            _ => TraceFormat::Csv,
        }
    }
}

pub fn trace_to_csv(events: &[TraceEvent]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for e in events {
        writer.serialize(e)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn trace_from_csv(text: &str) -> Result<Vec<TraceEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Parameter(format!("unexpected trace header {header:?}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn export_trace(events: &[TraceEvent], path: impl AsRef<Path>, format: TraceFormat) -> Result<()> {
    let text = match format {
        TraceFormat::Csv => trace_to_csv(events)?,
        TraceFormat::Json => serde_json::to_string_pretty(events)?,
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn import_trace(path: impl AsRef<Path>, format: TraceFormat) -> Result<Vec<TraceEvent>> {
    let text = fs::read_to_string(path)?;
    match format {
        TraceFormat::Csv => trace_from_csv(&text),
        TraceFormat::Json => Ok(serde_json::from_str(&text)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::IsingModel;

    fn series(points: &[(f64, f64, f64)]) -> BoundSeries {
        BoundSeries {
            points: points
                .iter()
                .map(|&(t, ub, lb)| BoundPoint { t, ub, lb })
                .collect(),
        }
    }

    #[test]
    fn integral_examples() {
        assert_eq!(primal_dual_integral(&series(&[(0.0, 5.0, 3.0), (2.0, 5.0, 3.0)])).unwrap(), 4.0);
        assert_eq!(primal_dual_integral(&series(&[(0.0, 4.0, 4.0), (3.0, 4.0, 4.0)])).unwrap(), 0.0);
        assert_eq!(
            primal_dual_integral(&series(&[(0.0, 5.0, 3.0), (1.0, 3.0, 3.0), (2.0, 3.0, 3.0)]))
                .unwrap(),
            2.0
        );
    }

    #[test]
    fn integral_errors() {
        assert!(matches!(primal_dual_integral(&series(&[])), Err(Error::EmptyTrace)));
        assert!(matches!(
            primal_dual_integral(&series(&[(0.0, 1.0, 2.0)])),
            Err(Error::CrossedBounds { .. })
        ));
    }

    #[test]
    fn fraction_examples() {
        let mut master = IsingModel::zero(6);
        let pairs = [(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2), (1, 3), (1, 4), (1, 5), (2, 3)];
        for (i, j) in pairs {
            master.add_coupling(i, j, 1.0);
        }
        let mut node = IsingModel::zero(4);
        for (i, j) in [(0, 1), (0, 2), (1, 2), (2, 3)] {
            node.add_coupling(i, j, 1.0);
        }
        assert_eq!(many_body_fraction(&node, &master), 0.4);
        assert_eq!(many_body_fraction(&master, &master), 1.0);
        assert_eq!(many_body_fraction(&IsingModel::zero(0), &master), 0.0);
        assert_eq!(many_body_fraction(&node, &IsingModel::zero(3)), 1.0);
    }

    #[test]
    fn empty_trace_csv_is_header_only() {
        let text = trace_to_csv(&[]).unwrap();
        assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));
        assert!(trace_from_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_keeps_empty_cells() {
        let mut a = TraceEvent::new(EventKind::BoundUpdate, 0.25, 3);
        a.lb = Some(-1.5);
        a.ub = Some(1e300);
        let mut b = TraceEvent::new(EventKind::Done, 0.5, 3);
        b.status = Some("optimal".into());
        let text = trace_to_csv(&[a.clone(), b.clone()]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "0.25,3,bound_update,-1.5,1e300,,,,");
        assert_eq!(trace_from_csv(&text).unwrap(), vec![a, b]);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<TraceFormat>().unwrap(), TraceFormat::Csv);
        assert!("xml".parse::<TraceFormat>().is_err());
        assert_eq!(TraceFormat::from_path(Path::new("t.json")), TraceFormat::Json);
    }
}
