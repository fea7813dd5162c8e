//! Schedule traces and batch utilization.
//!
//! A trace records, per executed block, how many lanes were active. Every
//! execution of a block launches the same primitives, so primitive counts are
//! stored once per block and expanded on export.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace has no steps")]
    EmptyTrace,
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("no counted primitive was launched")]
    NothingCounted,
    #[error("traces have different batch sizes ({0} vs {1})")]
    MismatchedZ(usize, usize),
}

/// Lowest and highest call depth among a step's active lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthRange(pub u32, pub u32);

impl DepthRange {
    pub fn is_mixed(self) -> bool {
        self.0 != self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub block: usize,
    pub active: usize,
    pub depth: Option<DepthRange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StackCounts {
    pub push: u64,
    pub pop: u64,
    pub update: u64,
}

impl StackCounts {
    pub fn total(&self) -> u64 {
        self.push + self.pop + self.update
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleTrace {
    pub engine: String,
    pub z: usize,
    pub steps: Vec<Step>,
    /// Primitive launches per execution of each block.
    pub block_prims: BTreeMap<usize, BTreeMap<String, u64>>,
    pub stacks: BTreeMap<String, StackCounts>,
}

impl ScheduleTrace {
    pub fn new(engine: impl Into<String>, z: usize) -> Self {
        ScheduleTrace { engine: engine.into(), z, steps: Vec::new(), block_prims: BTreeMap::new(), stacks: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn record(&mut self, block: usize, active: usize, depth: Option<DepthRange>) {
        self.steps.push(Step { block, active, depth });
    }

    /// Register the primitives a block launches; later calls for the same
    /// block are ignored.
    pub fn set_block_prims<'a>(&mut self, block: usize, prims: impl IntoIterator<Item = &'a str>) {
        self.block_prims.entry(block).or_insert_with(|| {
            let mut m = BTreeMap::new();
            for p in prims {
                *m.entry(p.to_string()).or_insert(0) += 1;
            }
            m
        });
    }

    pub fn stack_mut(&mut self, var: &str) -> &mut StackCounts {
        self.stacks.entry(var.to_string()).or_default()
    }

    pub fn prims_of(&self, step: &Step) -> Option<&BTreeMap<String, u64>> {
        self.block_prims.get(&step.block)
    }

    /// Launches of any primitive in `counted` in one execution of `block`.
    pub fn counted_in_block(&self, block: usize, counted: &[&str]) -> u64 {
        self.block_prims.get(&block).map_or(0, |m| counted.iter().filter_map(|c| m.get(*c)).sum())
    }

    /// Total launches of the counted primitives over the whole trace.
    pub fn launches(&self, counted: &[&str]) -> u64 {
        self.steps.iter().map(|s| self.counted_in_block(s.block, counted)).sum()
    }

    /// Total useful lane-evaluations of the counted primitives.
    pub fn lane_evaluations(&self, counted: &[&str]) -> u64 {
        self.steps.iter().map(|s| self.counted_in_block(s.block, counted) * s.active as u64).sum()
    }

    pub fn block_sequence(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.block).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TraceJson::from(self)).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        let raw: TraceJson = serde_json::from_str(text)?;
        ScheduleTrace::try_from(raw)
    }

    /// `step,block,active` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,block,active\n");
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", s.block, s.active));
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct StepJson {
    block: usize,
    active: usize,
    prims: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<DepthRange>,
}

#[derive(Serialize, Deserialize)]
struct TraceJson {
    engine: String,
    #[serde(rename = "Z")]
    z: usize,
    steps: Vec<StepJson>,
    stacks: BTreeMap<String, StackCounts>,
}

impl From<&ScheduleTrace> for TraceJson {
    fn from(t: &ScheduleTrace) -> Self {
        TraceJson {
            engine: t.engine.clone(),
            z: t.z,
            steps: t
                .steps
                .iter()
                .map(|s| StepJson {
                    block: s.block,
                    active: s.active,
                    prims: t.block_prims.get(&s.block).cloned().unwrap_or_default(),
                    depth: s.depth,
                })
                .collect(),
            stacks: t.stacks.clone(),
        }
    }
}

impl TryFrom<TraceJson> for ScheduleTrace {
    type Error = MetricsError;

    fn try_from(raw: TraceJson) -> Result<Self, MetricsError> {
        if raw.steps.is_empty() {
            return Err(MetricsError::EmptyTrace);
        }
        if raw.z == 0 {
            return Err(MetricsError::Invalid("Z must be at least 1".into()));
        }
        let mut t = ScheduleTrace::new(raw.engine, raw.z);
        t.stacks = raw.stacks;
        for (i, s) in raw.steps.into_iter().enumerate() {
            if s.active == 0 || s.active > t.z {
                return Err(MetricsError::Invalid(format!("step {i} has {} active lanes with Z = {}", s.active, t.z)));
            }
            match t.block_prims.get(&s.block) {
                Some(known) if *known != s.prims => {
                    return Err(MetricsError::Invalid(format!("step {i}: block {} launches differ", s.block)))
                }
                Some(_) => {}
                None => {
                    t.block_prims.insert(s.block, s.prims);
                }
            }
            t.steps.push(Step { block: s.block, active: s.active, depth: s.depth });
        }
        Ok(t)
    }
}

pub fn export_trace(trace: &ScheduleTrace, path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, trace.to_json())?;
    Ok(())
}

pub fn import_trace(path: &Path) -> Result<ScheduleTrace, MetricsError> {
    ScheduleTrace::from_json(&std::fs::read_to_string(path)?)
}

/// Useful lane-evaluations of the counted primitives over the lane-evaluations
/// launched (`Z` per launch).
pub fn utilization(trace: &ScheduleTrace, counted: &[&str]) -> Result<f64, MetricsError> {
    let launches = trace.launches(counted);
    if launches == 0 {
        return Err(MetricsError::NothingCounted);
    }
    Ok(trace.lane_evaluations(counted) as f64 / (trace.z as f64 * launches as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSummary {
    pub engine: String,
    pub steps: usize,
    pub launches: u64,
    pub lane_evaluations: u64,
    pub utilization: f64,
}

/// Side-by-side summary of two runs of the same program and batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub z: usize,
    pub a: EngineSummary,
    pub b: EngineSummary,
    /// `b.steps / a.steps`.
    pub step_ratio: f64,
    /// `b.launches / a.launches`.
    pub launch_ratio: f64,
    /// `b.utilization / a.utilization`.
    pub utilization_ratio: f64,
}

fn summarize(t: &ScheduleTrace, counted: &[&str]) -> Result<EngineSummary, MetricsError> {
    Ok(EngineSummary {
        engine: t.engine.clone(),
        steps: t.steps.len(),
        launches: t.launches(counted),
        lane_evaluations: t.lane_evaluations(counted),
        utilization: utilization(t, counted)?,
    })
}

pub fn compare(a: &ScheduleTrace, b: &ScheduleTrace, counted: &[&str]) -> Result<CompareReport, MetricsError> {
    if a.z != b.z {
        return Err(MetricsError::MismatchedZ(a.z, b.z));
    }
    let sa = summarize(a, counted)?;
    let sb = summarize(b, counted)?;
    Ok(CompareReport {
        z: a.z,
        step_ratio: sb.steps as f64 / sa.steps as f64,
        launch_ratio: sb.launches as f64 / sa.launches as f64,
        utilization_ratio: sb.utilization / sa.utilization,
        a: sa,
        b: sb,
    })
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "engine,steps,launches,lane_evaluations,utilization")?;
        for s in [&self.a, &self.b] {
            writeln!(f, "{},{},{},{},{:.16e}", s.engine, s.steps, s.launches, s.lane_evaluations, s.utilization)?;
        }
        writeln!(f, "step_ratio,{:.16e}", self.step_ratio)?;
        writeln!(f, "launch_ratio,{:.16e}", self.launch_ratio)?;
        write!(f, "utilization_ratio,{:.16e}", self.utilization_ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScheduleTrace {
        let mut t = ScheduleTrace::new("pc", 4);
        t.set_block_prims(0, ["grad", "add"]);
        t.set_block_prims(1, ["add"]);
        t.record(0, 4, None);
        t.record(1, 2, Some(DepthRange(1, 3)));
        t.record(0, 1, None);
        t.stack_mut("x").push += 2;
        t
    }

    #[test]
    fn utilization_counts_only_counted_steps() {
        let u = utilization(&sample(), &["grad"]).unwrap();
        assert_eq!(u, 5.0 / 8.0);
        assert!(matches!(utilization(&sample(), &["mul"]), Err(MetricsError::NothingCounted)));
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let back = ScheduleTrace::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["Z"], 4);
        assert_eq!(v["steps"][0]["prims"]["grad"], 1);
        assert_eq!(v["stacks"]["x"]["push"], 2);
    }

    #[test]
    fn empty_trace_rejected() {
        let t = ScheduleTrace::new("local", 2);
        assert!(matches!(ScheduleTrace::from_json(&t.to_json()), Err(MetricsError::EmptyTrace)));
    }

    #[test]
    fn csv_projection() {
        assert_eq!(sample().to_csv(), "step,block,active\n0,0,4\n1,1,2\n2,0,1\n");
    }

    #[test]
    fn compare_ratios() {
        let a = sample();
        let r = compare(&a, &a, &["grad"]).unwrap();
        assert_eq!(r.utilization_ratio, 1.0);
        assert!(matches!(compare(&a, &ScheduleTrace::new("x", 3), &["grad"]), Err(MetricsError::MismatchedZ(4, 3))));
    }
}
