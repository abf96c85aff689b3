//! Two-level memory machine that executes traces and counts I/O.
//!
//! Fast memory holds at most `M` values; slow memory is unbounded. A trace is
//! a sequence of LOAD, STORE, COMPUTE and EVICT operations over [`ValueId`]s.
//! The simulator does not schedule anything itself, it only checks that each
//! operation is legal and tallies loads and stores.
//!
//! Capacity accounting: a COMPUTE output takes a slot when it is created,
//! except when it updates a resident partial sum of the same cell, in which
//! case the new version replaces the old one in place.

mod format;
mod replay;

pub use format::{dump_trace, parse_op, parse_trace};
pub use replay::{replay_check, ReplayMode, Replayer};

use rustc_hash::FxHashSet;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Input,
    Generated,
    Partial,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Q,
    K,
    V,
    U1,
    U2,
    H,
    /// Unnormalized approximate numerator `U1 H`.
    O,
    /// Scores `q . k / sqrt(d)`.
    S,
    /// Normalized probabilities.
    P,
    /// Exact attention output.
    A,
    /// Running row maximum.
    MX,
    /// Running row sum.
    SM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId {
    pub kind: Kind,
    pub tag: Tag,
    pub row: u32,
    pub col: u32,
    pub version: u32,
}

impl ValueId {
    pub fn new(kind: Kind, tag: Tag, row: usize, col: usize, version: u32) -> Self {
        Self { kind, tag, row: row as u32, col: col as u32, version }
    }

    pub fn input(tag: Tag, row: usize, col: usize) -> Self {
        Self::new(Kind::Input, tag, row, col, 0)
    }

    pub fn generated(tag: Tag, row: usize, col: usize) -> Self {
        Self::new(Kind::Generated, tag, row, col, 0)
    }

    pub fn partial(tag: Tag, row: usize, col: usize, version: u32) -> Self {
        Self::new(Kind::Partial, tag, row, col, version)
    }

    pub fn output(tag: Tag, row: usize, col: usize) -> Self {
        Self::new(Kind::Output, tag, row, col, 0)
    }

    /// Same matrix cell, ignoring kind and version.
    pub fn same_cell(&self, other: &Self) -> bool {
        self.tag == other.tag && self.row == other.row && self.col == other.col
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOp {
    Load(ValueId),
    Store(ValueId),
    Compute { out: ValueId, inputs: Vec<ValueId> },
    Evict(ValueId),
}

/// Declared input and output matrices of a computation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    inputs: Vec<(Tag, usize, usize)>,
    outputs: Vec<(Tag, usize, usize)>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_input(mut self, tag: Tag, rows: usize, cols: usize) -> Self {
        self.inputs.push((tag, rows, cols));
        self
    }

    pub fn with_output(mut self, tag: Tag, rows: usize, cols: usize) -> Self {
        self.outputs.push((tag, rows, cols));
        self
    }

    pub fn inputs(&self) -> &[(Tag, usize, usize)] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[(Tag, usize, usize)] {
        &self.outputs
    }

    pub fn is_input(&self, id: &ValueId) -> bool {
        id.kind == Kind::Input
            && id.version == 0
            && self.inputs.iter().any(|&(t, r, c)| t == id.tag && (id.row as usize) < r && (id.col as usize) < c)
    }

    pub fn output_cells(&self) -> impl Iterator<Item = ValueId> + '_ {
        self.outputs
            .iter()
            .flat_map(|&(t, rows, cols)| (0..rows).flat_map(move |i| (0..cols).map(move |j| ValueId::output(t, i, j))))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IoStats {
    pub loads: u64,
    pub stores: u64,
    pub computes: u64,
    pub peak_resident: u64,
    pub total_io: u64,
    /// EVICTs of values that were not resident.
    pub warnings: u64,
    /// Distinct declared inputs referenced by some COMPUTE.
    pub touched_inputs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("fast memory capacity must be at least 2, got {0}")]
    InvalidCapacity(u64),
    #[error("op {step}: placing {id} would exceed capacity {limit}")]
    CapacityExceeded { step: u64, id: ValueId, limit: u64 },
    #[error("op {step}: operand {id} is not resident")]
    OperandNotResident { step: u64, id: ValueId },
    #[error("op {step}: {id} was never stored and is not a declared input")]
    LoadOfUnmaterialized { step: u64, id: ValueId },
    #[error("op {step}: compute of {id} has no operands")]
    EmptyCompute { step: u64, id: ValueId },
    #[error("declared output {0} was never stored")]
    MissingOutput(ValueId),
}

/// Consumer of trace operations. Schedules emit into a sink so traces never
/// have to be materialized.
pub trait TraceSink {
    fn emit(&mut self, op: TraceOp) -> Result<(), SimError>;
}

impl TraceSink for Vec<TraceOp> {
    fn emit(&mut self, op: TraceOp) -> Result<(), SimError> {
        self.push(op);
        Ok(())
    }
}

/// Feeds every op to two sinks.
pub struct Tee<'a, A, B>(pub &'a mut A, pub &'a mut B);

impl<A: TraceSink, B: TraceSink> TraceSink for Tee<'_, A, B> {
    fn emit(&mut self, op: TraceOp) -> Result<(), SimError> {
        self.0.emit(op.clone())?;
        self.1.emit(op)
    }
}

#[derive(Debug, Clone)]
pub struct Simulator<'r> {
    capacity: u64,
    registry: &'r Registry,
    resident: FxHashSet<ValueId>,
    slow: FxHashSet<ValueId>,
    touched: FxHashSet<ValueId>,
    stats: IoStats,
    step: u64,
}

impl<'r> Simulator<'r> {
    pub fn new(capacity: u64, registry: &'r Registry) -> Result<Self, SimError> {
        if capacity < 2 {
            return Err(SimError::InvalidCapacity(capacity));
        }
        Ok(Self {
            capacity,
            registry,
            resident: FxHashSet::default(),
            slow: FxHashSet::default(),
            touched: FxHashSet::default(),
            stats: IoStats::default(),
            step: 0,
        })
    }

    pub fn is_resident(&self, id: &ValueId) -> bool {
        self.resident.contains(id)
    }

    pub fn resident_count(&self) -> usize {
        self.resident.len()
    }

    fn place(&mut self, id: ValueId) -> Result<(), SimError> {
        if !self.resident.contains(&id) {
            if self.resident.len() as u64 >= self.capacity {
                return Err(SimError::CapacityExceeded { step: self.step, id, limit: self.capacity });
            }
            self.resident.insert(id);
            self.stats.peak_resident = self.stats.peak_resident.max(self.resident.len() as u64);
        }
        Ok(())
    }

    pub fn step(&mut self, op: &TraceOp) -> Result<(), SimError> {
        match op {
            TraceOp::Load(id) => {
                if !self.slow.contains(id) && !self.registry.is_input(id) {
                    return Err(SimError::LoadOfUnmaterialized { step: self.step, id: *id });
                }
                self.place(*id)?;
                self.stats.loads += 1;
            }
            TraceOp::Store(id) => {
                if !self.resident.contains(id) {
                    return Err(SimError::OperandNotResident { step: self.step, id: *id });
                }
                self.slow.insert(*id);
                self.stats.stores += 1;
            }
            TraceOp::Compute { out, inputs } => {
                if inputs.is_empty() && out.kind != Kind::Generated {
                    return Err(SimError::EmptyCompute { step: self.step, id: *out });
                }
                let mut in_place = None;
                for id in inputs {
                    if !self.resident.contains(id) {
                        return Err(SimError::OperandNotResident { step: self.step, id: *id });
                    }
                    if id.kind == Kind::Input {
                        self.touched.insert(*id);
                    } else if id.kind == Kind::Partial && id.same_cell(out) {
                        in_place = Some(*id);
                    }
                }
                if let Some(prev) = in_place {
                    self.resident.remove(&prev);
                }
                self.place(*out)?;
                self.stats.computes += 1;
            }
            TraceOp::Evict(id) => {
                if !self.resident.remove(id) {
                    self.stats.warnings += 1;
                }
            }
        }
        self.step += 1;
        Ok(())
    }

    /// Checks that every declared output was stored and returns the counters.
    pub fn finish(mut self) -> Result<IoStats, SimError> {
        if let Some(id) = self.registry.output_cells().find(|id| !self.slow.contains(id)) {
            return Err(SimError::MissingOutput(id));
        }
        self.stats.total_io = self.stats.loads + self.stats.stores;
        self.stats.touched_inputs = self.touched.len() as u64;
        Ok(self.stats)
    }
}

impl TraceSink for Simulator<'_> {
    fn emit(&mut self, op: TraceOp) -> Result<(), SimError> {
        self.step(&op)
    }
}

pub fn simulate<'a>(
    trace: impl IntoIterator<Item = &'a TraceOp>,
    capacity: u64,
    registry: &Registry,
) -> Result<IoStats, SimError> {
    let mut sim = Simulator::new(capacity, registry)?;
    for op in trace {
        sim.step(op)?;
    }
    sim.finish()
}
