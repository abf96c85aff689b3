//! Tile geometry shared by the trace emitters and the closed-form cost model.
//!
//! Every approximate schedule is described by one [`TilePlan`]: row strips of
//! height `h`, output column tiles of width `cw`, and a list of aggregation
//! tiles, each naming the Q/K columns it reads and the basis columns it owns.
//! The aggregation tiles of a plan always partition the basis.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::combinatorics::tau;
use crate::error::{Error, Result};
use crate::featuremap::{enumerate_basis, Monomial};
use crate::planner::{classify_case, choose_w, CaseLabel, Params};
use crate::schedules::ScheduleKind;

/// Contiguous groups of size `s` over `0..d`; the last group may be shorter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupPartition {
    d: usize,
    s: usize,
}

impl GroupPartition {
    pub fn new(d: usize, s: usize) -> Result<Self> {
        if d == 0 || s == 0 {
            return Err(Error::InvalidArgument(format!("group partition needs d, s >= 1, got d={d} s={s}")));
        }
        Ok(Self { d, s })
    }

    /// Partition for a generating set of size `w` and degree `g`: groups of
    /// size `max(1, floor(w / g))`.
    pub fn for_generating_set(d: usize, w: usize, g: usize) -> Result<Self> {
        Self::new(d, (w / g.max(1)).max(1))
    }

    pub fn group_size(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.d.div_ceil(self.s)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn group(&self, idx: usize) -> Range<usize> {
        idx * self.s..((idx + 1) * self.s).min(self.d)
    }

    pub fn group_of(&self, var: usize) -> usize {
        var / self.s
    }
}

/// Group combination (sorted, 0-based) that owns monomial `m`: the groups its
/// support touches, padded with the smallest groups not yet included up to
/// `g` groups. With fewer than `g` groups in total there is a single
/// combination holding all of them.
pub fn assign_tile(m: &Monomial, part: &GroupPartition, g: usize) -> Vec<usize> {
    let groups = part.len();
    if groups <= g {
        return (0..groups).collect();
    }
    let mut combo: Vec<usize> = m.factors().map(|(var, _)| part.group_of(var)).collect();
    combo.dedup();
    assert!(combo.len() <= g, "support of degree-{g} monomial touches {} groups", combo.len());
    let mut next = 0;
    while combo.len() < g {
        if !combo.contains(&next) {
            combo.push(next);
        }
        next += 1;
    }
    combo.sort_unstable();
    combo
}

/// One aggregation tile: the Q/K columns loaded for it and the basis columns
/// it produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationTile {
    /// Group combination, for the group-based kinds.
    pub combo: Option<Vec<usize>>,
    pub vars: Vec<usize>,
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub kind: ScheduleKind,
    pub n: usize,
    pub d: usize,
    pub g: usize,
    pub mem: u64,
    pub r: usize,
    /// Generating set size, for the group-based kinds.
    pub w: Option<usize>,
    /// Height of a row strip of Q, K, V and the output.
    pub h: usize,
    /// Width of a column tile of V, H and the output.
    pub cw: usize,
    /// Basis columns per H sub-tile, when tiles are split.
    pub chunk: Option<usize>,
    pub tiles: Vec<AggregationTile>,
    /// Whether each tile's H block stays resident across all strips of the
    /// first multiplication (otherwise it is spilled and reloaded per strip).
    pub h_resident: Vec<bool>,
    /// Support variables of every basis column.
    pub supports: Vec<Vec<usize>>,
}

impl TilePlan {
    pub fn chunk_len(&self, tile: usize) -> usize {
        let t = self.tiles[tile].columns.len();
        self.chunk.map_or(t, |c| c.min(t))
    }

    /// Largest resident set the emitted trace reaches.
    pub fn predicted_peak(&self) -> u64 {
        let h = self.h.min(self.n) as u64;
        let cw = self.cw as u64;
        let mut peak = 0u64;
        for (k, tile) in self.tiles.iter().enumerate() {
            let vars = tile.vars.len() as u64;
            let t = tile.columns.len() as u64;
            let ch = self.chunk_len(k) as u64;
            let held = if self.h_resident[k] { t } else { ch };
            let mult1 = h * vars + h * cw + held * cw + h;
            let mult2 = h * cw + h * vars + ch * cw + ch;
            peak = peak.max(mult1).max(mult2);
        }
        if self.n == 0 {
            0
        } else {
            peak
        }
    }
}

/// Exact-attention baseline that streams K/V blocks against Q blocks with
/// online softmax statistics spilled between K/V blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlashPlan {
    pub n: usize,
    pub d: usize,
    pub mem: u64,
    /// Keys per K/V block.
    pub bc: usize,
    /// Queries per Q block.
    pub br: usize,
}

impl FlashPlan {
    pub fn predicted_peak(&self) -> u64 {
        if self.n == 0 {
            return 0;
        }
        let (bc, br, d) = (self.bc.min(self.n) as u64, self.br.min(self.n) as u64, self.d as u64);
        // A single K/V block never materializes the running row statistics.
        let stats = if self.n > self.bc { 2 } else { 0 };
        2 * bc * d + br * (2 * d + stats) + bc
    }
}

/// Exact-attention baseline that materializes the score matrix in `t x t`
/// tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NaivePlan {
    pub n: usize,
    pub d: usize,
    pub mem: u64,
    pub t: usize,
}

impl NaivePlan {
    pub fn predicted_peak(&self) -> u64 {
        if self.n == 0 {
            return 0;
        }
        let t = self.t.min(self.n) as u64;
        let f = self.t.min(self.d) as u64;
        (2 * t * f + t * t).max(t * t + 2 * t + 1).max(t * t + t * f + t * f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchedulePlan {
    Tiled(TilePlan),
    Flash(FlashPlan),
    Naive(NaivePlan),
}

impl SchedulePlan {
    pub fn kind(&self) -> ScheduleKind {
        match self {
            SchedulePlan::Tiled(p) => p.kind,
            SchedulePlan::Flash(_) => ScheduleKind::Flash,
            SchedulePlan::Naive(_) => ScheduleKind::Naive,
        }
    }

    pub fn mem(&self) -> u64 {
        match self {
            SchedulePlan::Tiled(p) => p.mem,
            SchedulePlan::Flash(p) => p.mem,
            SchedulePlan::Naive(p) => p.mem,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SchedulePlan::Tiled(p) => p.n,
            SchedulePlan::Flash(p) => p.n,
            SchedulePlan::Naive(p) => p.n,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            SchedulePlan::Tiled(p) => p.d,
            SchedulePlan::Flash(p) => p.d,
            SchedulePlan::Naive(p) => p.d,
        }
    }

    pub fn predicted_peak(&self) -> u64 {
        match self {
            SchedulePlan::Tiled(p) => p.predicted_peak(),
            SchedulePlan::Flash(p) => p.predicted_peak(),
            SchedulePlan::Naive(p) => p.predicted_peak(),
        }
    }
}

fn plan_err(kind: ScheduleKind, msg: impl std::fmt::Display) -> Error {
    Error::Plan(format!("{kind}: {msg}"))
}

fn chunked_tiles(supports: &[Vec<usize>], size: usize) -> Vec<AggregationTile> {
    let r = supports.len();
    (0..r)
        .step_by(size)
        .map(|start| {
            let columns: Vec<usize> = (start..(start + size).min(r)).collect();
            let mut vars: Vec<usize> = columns.iter().flat_map(|&c| supports[c].iter().copied()).collect();
            vars.sort_unstable();
            vars.dedup();
            AggregationTile { combo: None, vars, columns }
        })
        .collect()
}

fn group_tiles(basis: &[Monomial], part: &GroupPartition, g: usize) -> Vec<AggregationTile> {
    let mut by_combo: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (c, m) in basis.iter().enumerate() {
        by_combo.entry(assign_tile(m, part, g)).or_default().push(c);
    }
    by_combo
        .into_iter()
        .map(|(combo, columns)| {
            let vars = combo.iter().flat_map(|&grp| part.group(grp)).collect();
            AggregationTile { combo: Some(combo), vars, columns }
        })
        .collect()
}

/// Builds the geometry for `kind`, checking that it applies to `p` and that
/// its resident set never exceeds `p.mem`.
pub fn plan_schedule(kind: ScheduleKind, p: &Params) -> Result<SchedulePlan> {
    let (n, d, mem) = (p.n, p.d, p.mem);
    if d == 0 {
        return Err(plan_err(kind, "d must be positive"));
    }
    let quarter = (mem / 4) as usize;
    let plan = match kind {
        ScheduleKind::Flash => {
            let bc = quarter / d;
            let budget = mem as i128 - 2 * (bc * d) as i128 - bc as i128;
            let br = if budget > 0 { bc.min(d).min((budget / (2 * d as i128 + 2)) as usize) } else { 0 };
            if bc == 0 || br == 0 {
                return Err(plan_err(kind, format!("M={mem} too small for d={d}")));
            }
            SchedulePlan::Flash(FlashPlan { n, d, mem, bc, br })
        }
        ScheduleKind::Naive => {
            let t = (mem.isqrt() / 4) as usize;
            if t == 0 {
                return Err(plan_err(kind, format!("M={mem} below 16")));
            }
            SchedulePlan::Naive(NaivePlan { n, d, mem, t })
        }
        _ => SchedulePlan::Tiled(tile_plan(kind, p)?),
    };
    let peak = plan.predicted_peak();
    if peak > mem {
        return Err(plan_err(kind, format!("resident set {peak} exceeds M={mem}")));
    }
    Ok(plan)
}

fn tile_plan(kind: ScheduleKind, p: &Params) -> Result<TilePlan> {
    let (n, d, g, mem) = (p.n, p.d, p.g, p.mem);
    let case = classify_case(d, g, mem);
    let quarter = (mem / 4) as usize;
    match kind {
        ScheduleKind::Case1 if case != CaseLabel::I => return Err(plan_err(kind, format!("requires Case I, got {case}"))),
        ScheduleKind::Case3Special if case != CaseLabel::III => {
            return Err(plan_err(kind, format!("requires Case III, got {case}")))
        }
        _ => {}
    }
    let basis = enumerate_basis(d, g)?;
    let supports: Vec<Vec<usize>> = basis.monomials().iter().map(|m| m.factors().map(|(v, _)| v).collect()).collect();
    let r = basis.len();
    let mut w = None;
    let mut chunk = None;
    let (h, cw, tiles) = match kind {
        ScheduleKind::Case1 => {
            let vars = (0..d).collect();
            (quarter / d, d, vec![AggregationTile { combo: None, vars, columns: (0..r).collect() }])
        }
        ScheduleKind::KeyLemma => {
            let wk = match p.w {
                Some(wk) => wk,
                None => choose_w(g, mem, d)?,
            };
            if wk < g || wk > d {
                return Err(plan_err(kind, format!("need g <= w <= d, got w={wk} g={g} d={d}")));
            }
            let tw = tau(wk, g)?;
            if 4 * (wk as u128) * tw > mem as u128 {
                return Err(plan_err(kind, format!("w * tau(w) = {} exceeds M/4", wk as u128 * tw)));
            }
            w = Some(wk);
            let part = GroupPartition::for_generating_set(d, wk, g)?;
            (quarter / wk, wk, group_tiles(basis.monomials(), &part, g))
        }
        ScheduleKind::Case3Special => {
            w = Some(g);
            let part = GroupPartition::new(d, 1)?;
            let h = quarter / g.max(1);
            chunk = Some(h);
            (h, g.min(d), group_tiles(basis.monomials(), &part, g))
        }
        ScheduleKind::GenericSquare => {
            let t = (mem.isqrt() / 4) as usize;
            (t, t.min(d), if t > 0 { chunked_tiles(&supports, t) } else { Vec::new() })
        }
        ScheduleKind::GenericWide => {
            let a = quarter / d;
            (a, d, if a > 0 { chunked_tiles(&supports, a) } else { Vec::new() })
        }
        ScheduleKind::Flash | ScheduleKind::Naive => unreachable!("baselines are not tiled"),
    };
    if h == 0 || cw == 0 {
        return Err(plan_err(kind, format!("M={mem} leaves an empty tile")));
    }
    let hh = h.min(n) as u64;
    let h_resident = tiles
        .iter()
        .map(|t| hh * t.vars.len() as u64 + hh * cw as u64 + (t.columns.len() * cw) as u64 + hh <= mem)
        .collect();
    Ok(TilePlan { kind, n, d, g, mem, r, w, h, cw, chunk, tiles, h_resident, supports })
}
