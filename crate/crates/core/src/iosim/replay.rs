//! Numeric replay of traces.
//!
//! Every COMPUTE is evaluated with real arithmetic, with the meaning of an op
//! fixed by the tag of its output:
//!
//! | out | value |
//! |-----|-------|
//! | `U1`, `U2` | feature map entry from the Q or K cells among the operands |
//! | `H` | previous partial plus `sum_i U2(i,c) V(i,j)` |
//! | `O` | previous partial plus `sum_c U1(i,c) H(c,j)` |
//! | `S` | previous partial plus `sum_l Q(i,l) K(j,l) / sqrt(d)` |
//! | `MX` | running maximum of the previous value and the S operands |
//! | `SM` | running sum `l e^(m - m') + sum e^(s - m')` with `m` from the MX operand |
//! | `P` | `e^(s - m) / l` |
//! | `A` | online softmax update when S operands are present (normalized when the output kind is final), otherwise `prev + sum_j P(i,j) V(j,c)` |
//!
//! Operands are paired by their shared index (row of U2 with row of V, and so
//! on), so a trace that feeds the wrong cells produces wrong numbers.

use rustc_hash::FxHashMap;

use super::{simulate, Kind, Registry, SimError, Tag, TraceOp, TraceSink, ValueId};
use crate::attention::{exact_attention, feature_matrices};
use crate::featuremap::FeatureMap;
use crate::matrix::{matmul_ref, Matrix};
use crate::problem::ProblemInstance;

/// Reference the outputs are compared against.
#[derive(Debug, Clone, Copy)]
pub enum ReplayMode<'a> {
    /// Outputs are the unnormalized numerator `U1 (U2^T V)`.
    Approx(&'a FeatureMap<f64>),
    /// Outputs are exact attention.
    Exact,
}

/// Relative tolerance of the output comparison.
pub const REPLAY_TOL: f64 = 1e-9;

pub struct Replayer<'a> {
    problem: &'a ProblemInstance<f64>,
    mode: ReplayMode<'a>,
    inv_sqrt_d: f64,
    fast: FxHashMap<ValueId, f64>,
    slow: FxHashMap<ValueId, f64>,
    step: u64,
}

#[derive(Default)]
struct Operands {
    prev: Option<f64>,
    by_tag: FxHashMap<Tag, Vec<(u32, u32, f64)>>,
}

impl Operands {
    fn of(&self, tag: Tag) -> &[(u32, u32, f64)] {
        self.by_tag.get(&tag).map_or(&[], Vec::as_slice)
    }

    fn first(&self, tag: Tag) -> Option<f64> {
        self.of(tag).first().map(|&(_, _, v)| v)
    }

    /// `sum a(key_a) * b(key_b)` over operands whose keys agree.
    /// Operands a closure maps to `None` are ignored.
    fn paired(&self, a: Tag, key_a: impl Fn(u32, u32) -> Option<u32>, b: Tag, key_b: impl Fn(u32, u32) -> Option<u32>) -> f64 {
        let rhs: FxHashMap<u32, f64> = self.of(b).iter().filter_map(|&(r, c, v)| key_b(r, c).map(|k| (k, v))).collect();
        self.of(a)
            .iter()
            .filter_map(|&(r, c, v)| key_a(r, c).and_then(|k| rhs.get(&k)).map(|w| v * w))
            .sum()
    }
}

impl<'a> Replayer<'a> {
    pub fn new(problem: &'a ProblemInstance<f64>, mode: ReplayMode<'a>) -> Self {
        Self {
            problem,
            mode,
            inv_sqrt_d: 1.0 / (problem.d as f64).sqrt(),
            fast: FxHashMap::default(),
            slow: FxHashMap::default(),
            step: 0,
        }
    }

    fn input_value(&self, id: &ValueId) -> Option<f64> {
        let m = match id.tag {
            Tag::Q => &self.problem.q,
            Tag::K => &self.problem.k,
            Tag::V => &self.problem.v,
            _ => return None,
        };
        let (i, j) = (id.row as usize, id.col as usize);
        (i < m.rows() && j < m.cols()).then(|| m[(i, j)])
    }

    fn gather(&self, out: &ValueId, inputs: &[ValueId]) -> Result<Operands, SimError> {
        let mut ops = Operands::default();
        for id in inputs {
            let v = *self.fast.get(id).ok_or(SimError::OperandNotResident { step: self.step, id: *id })?;
            if id.kind == Kind::Partial && id.same_cell(out) {
                ops.prev = Some(v);
            } else {
                ops.by_tag.entry(id.tag).or_default().push((id.row, id.col, v));
            }
        }
        Ok(ops)
    }

    fn dense_row(&self, ops: &Operands, tag: Tag) -> Vec<f64> {
        let mut x = vec![0.0; self.problem.d];
        for &(_, c, v) in ops.of(tag) {
            if let Some(slot) = x.get_mut(c as usize) {
                *slot = v;
            }
        }
        x
    }

    fn evaluate(&self, out: &ValueId, ops: &Operands) -> f64 {
        let prev = ops.prev.unwrap_or(0.0);
        let (row, col) = (out.row, out.col);
        match out.tag {
            Tag::U1 | Tag::U2 => {
                let ReplayMode::Approx(fm) = self.mode else { return f64::NAN };
                if col as usize >= fm.len() {
                    return f64::NAN;
                }
                if out.tag == Tag::U1 {
                    fm.q_entry(&self.dense_row(ops, Tag::Q), col as usize)
                } else {
                    fm.k_entry(&self.dense_row(ops, Tag::K), col as usize)
                }
            }
            Tag::H => prev + ops.paired(Tag::U2, |r, c| (c == row).then_some(r), Tag::V, |r, c| (c == col).then_some(r)),
            Tag::O => prev + ops.paired(Tag::U1, |r, c| (r == row).then_some(c), Tag::H, |r, c| (c == col).then_some(r)),
            Tag::S => prev + ops.paired(Tag::Q, |r, c| (r == row).then_some(c), Tag::K, |r, c| (r == col).then_some(c)) * self.inv_sqrt_d,
            Tag::MX => ops.of(Tag::S).iter().fold(ops.prev.unwrap_or(f64::NEG_INFINITY), |m, &(_, _, s)| m.max(s)),
            Tag::SM => {
                let (m_new, decay) = self.rescale(ops);
                prev * decay + ops.of(Tag::S).iter().map(|&(_, _, s)| (s - m_new).exp()).sum::<f64>()
            }
            Tag::P => match (ops.first(Tag::S), ops.first(Tag::MX), ops.first(Tag::SM)) {
                (Some(s), Some(m), Some(l)) => (s - m).exp() / l,
                _ => f64::NAN,
            },
            Tag::A if !ops.of(Tag::S).is_empty() => {
                let (m_new, decay) = self.rescale(ops);
                let weights: FxHashMap<u32, f64> = ops.of(Tag::S).iter().map(|&(_, j, s)| (j, (s - m_new).exp())).collect();
                let acc = prev * decay
                    + ops.of(Tag::V).iter().filter(|&&(_, c, _)| c == col).filter_map(|&(j, _, v)| weights.get(&j).map(|w| w * v)).sum::<f64>();
                if out.kind == Kind::Output {
                    let l = ops.first(Tag::SM).unwrap_or(0.0) * decay + weights.values().sum::<f64>();
                    acc / l
                } else {
                    acc
                }
            }
            Tag::A => prev + ops.paired(Tag::P, |r, c| (r == row).then_some(c), Tag::V, |r, c| (c == col).then_some(r)),
            Tag::Q | Tag::K | Tag::V => f64::NAN,
        }
    }

    /// New running maximum over the MX operand and S operands, and the factor
    /// `e^(m_old - m_new)` that rescales sums taken under the old maximum.
    fn rescale(&self, ops: &Operands) -> (f64, f64) {
        let m_old = ops.first(Tag::MX).unwrap_or(f64::NEG_INFINITY);
        let m_new = ops.of(Tag::S).iter().fold(m_old, |m, &(_, _, s)| m.max(s));
        let decay = if m_old == f64::NEG_INFINITY { 0.0 } else { (m_old - m_new).exp() };
        (m_new, decay)
    }

    /// Reference values for the declared outputs.
    fn oracle(&self) -> Matrix<f64> {
        let p = self.problem;
        match self.mode {
            ReplayMode::Approx(fm) => {
                let (u1, u2) = feature_matrices(fm, &p.q, &p.k);
                let h = matmul_ref(&u2.transpose(), &p.v).expect("conforming shapes");
                matmul_ref(&u1, &h).expect("conforming shapes")
            }
            ReplayMode::Exact => exact_attention(&p.q, &p.k, &p.v).expect("finite inputs").output,
        }
    }

    /// True iff every declared output was stored with a value matching the
    /// reference to within `REPLAY_TOL * (1 + |ref|)`.
    pub fn matches(&self, registry: &Registry) -> bool {
        if registry.outputs().is_empty() {
            return true;
        }
        let reference = self.oracle();
        registry.output_cells().all(|id| {
            let (i, j) = (id.row as usize, id.col as usize);
            match self.slow.get(&id) {
                Some(&got) if i < reference.rows() && j < reference.cols() => {
                    let want = reference[(i, j)];
                    (got - want).abs() <= REPLAY_TOL * (1.0 + want.abs())
                }
                _ => false,
            }
        })
    }
}

impl TraceSink for Replayer<'_> {
    fn emit(&mut self, op: TraceOp) -> Result<(), SimError> {
        match op {
            TraceOp::Load(id) => {
                let v = if id.kind == Kind::Input { self.input_value(&id) } else { self.slow.get(&id).copied() };
                let v = v.ok_or(SimError::LoadOfUnmaterialized { step: self.step, id })?;
                self.fast.insert(id, v);
            }
            TraceOp::Store(id) => {
                let v = *self.fast.get(&id).ok_or(SimError::OperandNotResident { step: self.step, id })?;
                self.slow.insert(id, v);
            }
            TraceOp::Evict(id) => {
                self.fast.remove(&id);
            }
            TraceOp::Compute { out, inputs } => {
                let ops = self.gather(&out, &inputs)?;
                let v = self.evaluate(&out, &ops);
                if ops.prev.is_some() {
                    if let Some(prev) = inputs.iter().find(|id| id.kind == Kind::Partial && id.same_cell(&out)) {
                        self.fast.remove(prev);
                    }
                }
                self.fast.insert(out, v);
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Simulates `trace` and, if it runs cleanly, replays it numerically and
/// compares the stored outputs with the reference. A trace that never stores
/// some declared output yields `Ok(false)`; other simulator errors propagate.
pub fn replay_check(
    trace: &[TraceOp],
    problem: &ProblemInstance<f64>,
    mode: ReplayMode<'_>,
    registry: &Registry,
    capacity: u64,
) -> Result<bool, SimError> {
    match simulate(trace, capacity, registry) {
        Ok(_) => {}
        Err(SimError::MissingOutput(_)) => return Ok(false),
        Err(e) => return Err(e),
    }
    let mut replayer = Replayer::new(problem, mode);
    for op in trace {
        replayer.emit(op.clone())?;
    }
    Ok(replayer.matches(registry))
}
