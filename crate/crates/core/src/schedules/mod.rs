//! Trace generators for the tiling schedules and the two exact baselines.
//!
//! | kind | strips | output column tiles | aggregation tiles |
//! |------|--------|---------------------|-------------------|
//! | `case1` | `M/4d` rows | all `d` | one tile holding the whole basis |
//! | `keylemma` | `M/4w` rows | `w` | one per combination of `g` groups of size `w/g` |
//! | `case3special` | `M/4g` rows | `g` | one per combination of `g` variables, H split into sub-tiles of `M/4g` columns |
//! | `generic-square` | `sqrt(M)/4` rows | `sqrt(M)/4` | consecutive runs of `sqrt(M)/4` basis columns |
//! | `generic-wide` | `M/4d` rows | all `d` | consecutive runs of `M/4d` basis columns |
//!
//! Every approximate schedule computes `H = U2^T V` and then the numerator
//! `U1 H`; U1 and U2 entries are regenerated from resident Q and K cells at no
//! I/O cost. `flash` and `naive` compute exact attention.

mod baseline;
pub mod geometry;
mod tiled;

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

pub use geometry::{assign_tile, plan_schedule, AggregationTile, FlashPlan, GroupPartition, NaivePlan, SchedulePlan, TilePlan};

use crate::error::{Error, Result};
use crate::featuremap::{enumerate_basis, FeatureMap};
use crate::iosim::{IoStats, Kind, Registry, ReplayMode, Replayer, SimError, Simulator, Tag, Tee, TraceOp, TraceSink, ValueId};
use crate::planner::Params;
use crate::polyapprox::PolyApprox;
use crate::problem::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScheduleKind {
    Case1,
    KeyLemma,
    Case3Special,
    GenericSquare,
    GenericWide,
    Flash,
    Naive,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 7] = [
        ScheduleKind::Case1,
        ScheduleKind::KeyLemma,
        ScheduleKind::Case3Special,
        ScheduleKind::GenericSquare,
        ScheduleKind::GenericWide,
        ScheduleKind::Flash,
        ScheduleKind::Naive,
    ];

    /// Kinds that compute the approximate numerator.
    pub const APPROXIMATE: [ScheduleKind; 5] = [
        ScheduleKind::Case1,
        ScheduleKind::KeyLemma,
        ScheduleKind::Case3Special,
        ScheduleKind::GenericSquare,
        ScheduleKind::GenericWide,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Case1 => "case1",
            ScheduleKind::KeyLemma => "keylemma",
            ScheduleKind::Case3Special => "case3special",
            ScheduleKind::GenericSquare => "generic-square",
            ScheduleKind::GenericWide => "generic-wide",
            ScheduleKind::Flash => "flash",
            ScheduleKind::Naive => "naive",
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, ScheduleKind::Flash | ScheduleKind::Naive)
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown schedule {s:?}")))
    }
}

impl Serialize for ScheduleKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Thin helper so emitters read as a sequence of ops.
pub(crate) struct Emitter<'s, S> {
    sink: &'s mut S,
}

impl<'s, S: TraceSink> Emitter<'s, S> {
    fn new(sink: &'s mut S) -> Self {
        Self { sink }
    }

    fn load(&mut self, id: ValueId) -> Result<(), SimError> {
        self.sink.emit(TraceOp::Load(id))
    }

    fn store(&mut self, id: ValueId) -> Result<(), SimError> {
        self.sink.emit(TraceOp::Store(id))
    }

    fn evict(&mut self, id: ValueId) -> Result<(), SimError> {
        self.sink.emit(TraceOp::Evict(id))
    }

    fn compute(&mut self, out: ValueId, inputs: Vec<ValueId>) -> Result<(), SimError> {
        debug_assert!(!inputs.is_empty() || out.kind == Kind::Generated);
        self.sink.emit(TraceOp::Compute { out, inputs })
    }
}

/// Streams the trace of `plan` into `sink`.
pub fn emit<S: TraceSink>(plan: &SchedulePlan, sink: &mut S) -> Result<(), SimError> {
    match plan {
        SchedulePlan::Tiled(p) => tiled::emit(p, sink),
        SchedulePlan::Flash(p) => baseline::emit_flash(p, sink),
        SchedulePlan::Naive(p) => baseline::emit_naive(p, sink),
    }
}

pub fn trace(plan: &SchedulePlan) -> Vec<TraceOp> {
    let mut ops = Vec::new();
    emit(plan, &mut ops).expect("collecting into a Vec cannot fail");
    ops
}

/// Declared inputs Q, K, V and the output the schedule must store: `O` for
/// the approximate kinds, `A` for the baselines.
pub fn registry(plan: &SchedulePlan) -> Registry {
    let (n, d) = (plan.n(), plan.d());
    let out = if plan.kind().is_exact() { Tag::A } else { Tag::O };
    Registry::new()
        .with_input(Tag::Q, n, d)
        .with_input(Tag::K, n, d)
        .with_input(Tag::V, n, d)
        .with_output(out, n, d)
}

/// Simulates the trace of `plan` at its own capacity without materializing it.
pub fn run(plan: &SchedulePlan) -> Result<IoStats, SimError> {
    let reg = registry(plan);
    let mut sim = Simulator::new(plan.mem(), &reg)?;
    emit(plan, &mut sim)?;
    sim.finish()
}

/// The feature map an approximate trace's U1/U2 cells stand for: the degree-g
/// truncated exponential with Q scaled by `1/sqrt(d)`.
pub fn replay_features(d: usize, g: usize) -> Result<FeatureMap<f64>> {
    let basis = enumerate_basis(d, g)?;
    FeatureMap::new(basis, &PolyApprox::truncated_exp(g), 1.0 / (d as f64).sqrt())
}

/// Simulates and numerically replays `plan` on `problem` in one pass.
/// Returns the counters and whether the stored outputs match the reference.
pub fn run_and_replay(plan: &SchedulePlan, problem: &ProblemInstance<f64>) -> Result<(IoStats, bool)> {
    if (problem.n, problem.d) != (plan.n(), plan.d()) {
        return Err(Error::ShapeMismatch {
            left: format!("plan {}x{}", plan.n(), plan.d()),
            right: format!("problem {}x{}", problem.n, problem.d),
        });
    }
    let fm = match plan {
        SchedulePlan::Tiled(p) => Some(replay_features(p.d, p.g)?),
        _ => None,
    };
    let mode = fm.as_ref().map_or(ReplayMode::Exact, ReplayMode::Approx);
    let reg = registry(plan);
    let mut sim = Simulator::new(plan.mem(), &reg)?;
    let mut replayer = Replayer::new(problem, mode);
    emit(plan, &mut Tee(&mut sim, &mut replayer))?;
    let stats = sim.finish()?;
    Ok((stats, replayer.matches(&reg)))
}

/// Builds the plan for `kind` on `p`.
pub fn build(kind: ScheduleKind, p: &Params) -> Result<SchedulePlan> {
    plan_schedule(kind, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iosim::replay_check;
    use crate::planner::analytic_cost;
    use crate::problem::gen_problem;

    fn check(kind: ScheduleKind, n: usize, d: usize, g: usize, mem: u64) -> IoStats {
        let p = Params::new(n, d, g, mem).unwrap();
        let plan = build(kind, &p).unwrap();
        let stats = run(&plan).unwrap();
        assert_eq!(stats.total_io, analytic_cost(kind, &p).unwrap(), "{kind} n={n} d={d} g={g} M={mem}");
        assert_eq!(stats.peak_resident, plan.predicted_peak(), "{kind} peak");
        assert!(stats.peak_resident <= mem);
        let prob = gen_problem::<f64>(n, d, 0.5, 1.0, 11).unwrap();
        let (_, ok) = run_and_replay(&plan, &prob).unwrap();
        assert!(ok, "{kind} replay n={n} d={d} g={g} M={mem}");
        stats
    }

    #[test]
    fn names_round_trip() {
        for k in ScheduleKind::ALL {
            assert_eq!(k.name().parse::<ScheduleKind>().unwrap(), k);
        }
        assert!("flash2".parse::<ScheduleKind>().is_err());
    }

    #[test]
    fn case1_small() {
        let s = check(ScheduleKind::Case1, 32, 4, 2, 256);
        assert_eq!(s.total_io, 692);
        assert!(s.total_io <= 8 * 32 * 4);
        check(ScheduleKind::Case1, 8, 2, 2, 128);
    }

    #[test]
    fn keylemma_small() {
        let p = Params::new(8, 4, 2, 2048).unwrap().with_w(2);
        let plan = build(ScheduleKind::KeyLemma, &p).unwrap();
        let prob = gen_problem::<f64>(8, 4, 0.5, 1.0, 3).unwrap();
        assert!(run_and_replay(&plan, &prob).unwrap().1);
        assert_eq!(run(&plan).unwrap().total_io, analytic_cost(ScheduleKind::KeyLemma, &p).unwrap());
    }

    #[test]
    fn every_kind_on_one_instance() {
        for kind in [ScheduleKind::GenericSquare, ScheduleKind::GenericWide, ScheduleKind::Flash, ScheduleKind::Naive, ScheduleKind::KeyLemma] {
            check(kind, 8, 2, 2, 64);
        }
    }

    #[test]
    fn case3special_spills() {
        // (d=10, g=4, M=512) is Case III with tile widths above M/4g.
        let s = check(ScheduleKind::Case3Special, 16, 10, 4, 512);
        assert!(s.stores > 16 * 10);
    }

    #[test]
    fn mutated_trace_fails_replay() {
        let p = Params::new(8, 2, 2, 64).unwrap();
        let plan = build(ScheduleKind::GenericWide, &p).unwrap();
        let prob = gen_problem::<f64>(8, 2, 0.5, 1.0, 1).unwrap();
        let reg = registry(&plan);
        let fm = replay_features(2, 2).unwrap();
        let ops = trace(&plan);
        assert!(replay_check(&ops, &prob, ReplayMode::Approx(&fm), &reg, 64).unwrap());

        // Deleting the final compute of one output cell (and its store) loses the output.
        let mut dropped = ops.clone();
        let pos = dropped.iter().rposition(|op| matches!(op, TraceOp::Compute { out, .. } if out.tag == Tag::O)).unwrap();
        let TraceOp::Compute { out, .. } = dropped.remove(pos) else { unreachable!() };
        dropped.retain(|op| *op != TraceOp::Store(out));
        assert!(!replay_check(&dropped, &prob, ReplayMode::Approx(&fm), &reg, 64).unwrap());

        // Dropping one operand of an H accumulation corrupts the numbers.
        let mut thinned = ops;
        let pos = thinned.iter().position(|op| matches!(op, TraceOp::Compute { out, .. } if out.tag == Tag::H)).unwrap();
        if let TraceOp::Compute { inputs, .. } = &mut thinned[pos] {
            let v = inputs.iter().position(|id| id.tag == Tag::V).unwrap();
            inputs.remove(v);
        }
        assert!(!replay_check(&thinned, &prob, ReplayMode::Approx(&fm), &reg, 64).unwrap());
    }

    #[test]
    fn empty_problem() {
        let p = Params::new(0, 4, 2, 256).unwrap();
        let plan = build(ScheduleKind::Case1, &p).unwrap();
        assert!(trace(&plan).is_empty());
        assert_eq!(analytic_cost(ScheduleKind::Case1, &p).unwrap(), 0);
    }
}
