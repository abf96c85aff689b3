//! Case classification, generating-set sizing, closed-form I/O counts and
//! lower-bound reporting.
//!
//! Concrete regime thresholds for `(d, g, M)` with `r = tau(d, g)`:
//!
//! * Case I: `4 d r <= M`, the whole of U1's generating row and the H tile fit
//!   in a quarter of fast memory each.
//! * Case II: otherwise, `M >= ceil((4e)^(g+1))`, the smallest `M` for which
//!   the generating-set size `w0 = g M^(1/(g+1)) / (4e)` reaches `g`.
//! * Case III: otherwise, `M > 16 g^2`.
//! * Case IV: everything else.
//!
//! Lower bounds are the asymptotic expressions evaluated with constant 1, so
//! they are only meaningful as orders of magnitude.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::combinatorics::tau;
use crate::error::{Error, Result};
use crate::schedules::{plan_schedule, SchedulePlan, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Params {
    pub n: usize,
    pub d: usize,
    pub g: usize,
    #[serde(rename = "M")]
    pub mem: u64,
    /// `tau(d, g)`.
    pub r: u128,
    /// Generating-set size for `keylemma`; chosen automatically when absent.
    pub w: Option<usize>,
}

impl Params {
    pub fn new(n: usize, d: usize, g: usize, mem: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("d must be positive".into()));
        }
        Ok(Self { n, d, g, mem, r: tau(d, g)?, w: None })
    }

    pub fn with_w(mut self, w: usize) -> Self {
        self.w = Some(w);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseLabel {
    I,
    II,
    III,
    IV,
}

impl CaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::I => "I",
            CaseLabel::II => "II",
            CaseLabel::III => "III",
            CaseLabel::IV => "IV",
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for CaseLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

const FOUR_E: f64 = 4.0 * std::f64::consts::E;

/// `ceil((4e)^(g+1))`, or `None` when it does not fit in a `u64`.
pub fn case2_threshold(g: usize) -> Option<u64> {
    let t = FOUR_E.powi(g as i32 + 1).ceil();
    (t < u64::MAX as f64).then_some(t as u64)
}

pub fn classify_case(d: usize, g: usize, mem: u64) -> CaseLabel {
    let fits_case1 = tau(d, g)
        .ok()
        .and_then(|r| r.checked_mul(4 * d as u128))
        .is_some_and(|need| need <= mem as u128);
    if fits_case1 {
        CaseLabel::I
    } else if case2_threshold(g).is_some_and(|t| mem >= t) {
        CaseLabel::II
    } else if mem as u128 > 16 * (g as u128) * (g as u128) {
        CaseLabel::III
    } else {
        CaseLabel::IV
    }
}

/// `M^(1/k)` in floating point, snapped to the integer root when `M` is an
/// exact `k`-th power so that floors downstream are not off by one.
fn real_root(mem: u64, k: u32) -> f64 {
    let root = (mem as f64).powf(1.0 / k as f64);
    let near = root.round();
    if near >= 0.0 && (near as u128).checked_pow(k) == Some(mem as u128) {
        near
    } else {
        root
    }
}

/// Generating-set size `max(g, floor(g M^(1/(g+1)) / (4e)))`, capped at `d`.
/// Fails unless `4 w tau(w) <= M`.
pub fn choose_w(g: usize, mem: u64, d: usize) -> Result<usize> {
    let w0 = (g as f64 * real_root(mem, g as u32 + 1) / FOUR_E).floor() as usize;
    let w = w0.max(g).min(d);
    let need = tau(w, g)?.checked_mul(4 * w as u128).ok_or_else(|| Error::Overflow("4 w tau(w)".into()))?;
    if need > mem as u128 {
        return Err(Error::Plan(format!("w={w}: 4 w tau(w) = {need} exceeds M={mem}")));
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: f64,
    /// False when the bound's hypothesis `d >= 5g` (Cases III and IV) fails.
    pub hypothesis_ok: bool,
}

pub fn lower_bound(case: CaseLabel, p: &Params) -> LowerBound {
    let (n, d, g, m, r) = (p.n as f64, p.d as f64, p.g as f64, p.mem as f64, p.r as f64);
    let value = match case {
        CaseLabel::I => n * d,
        CaseLabel::II => n * r * d * g / m.powf(g / (g + 1.0)),
        CaseLabel::III => n * r * d * g / m,
        CaseLabel::IV => n * r * d / m.sqrt(),
    };
    let hypothesis_ok = match case {
        CaseLabel::I | CaseLabel::II => true,
        CaseLabel::III | CaseLabel::IV => p.d >= 5 * p.g,
    };
    LowerBound { value, hypothesis_ok }
}

/// Exact load + store count of the trace `plan` emits, tallied per tile from
/// the geometry alone.
pub fn closed_form(plan: &SchedulePlan) -> u128 {
    match plan {
        SchedulePlan::Tiled(t) => {
            let (n, d) = (t.n as u128, t.d as u128);
            if n == 0 {
                return 0;
            }
            let col_tiles = d.div_ceil(t.cw as u128);
            let strips = n.div_ceil(t.h as u128);
            let mut mult1 = 0u128;
            let mut vars_total = 0u128;
            for (tile, &resident) in t.tiles.iter().zip(&t.h_resident) {
                let vars = tile.vars.len() as u128;
                let width = tile.columns.len() as u128;
                vars_total += vars;
                let h_traffic = if resident { width * d } else { (2 * strips - 1) * width * d };
                mult1 += col_tiles * n * vars + n * d + h_traffic;
            }
            let mult2 = col_tiles * n * vars_total + strips * t.r as u128 * d + n * d;
            mult1 + mult2
        }
        SchedulePlan::Flash(f) => {
            let (n, d) = (f.n as u128, f.d as u128);
            if n == 0 {
                return 0;
            }
            let tc = n.div_ceil(f.bc as u128);
            2 * n * d + tc * n * d + 2 * (tc - 1) * (n * d + 2 * n) + n * d
        }
        SchedulePlan::Naive(p) => {
            let (n, d, t) = (p.n as u128, p.d as u128, p.t as u128);
            3 * n.div_ceil(t) * n * d + (4 + d.div_ceil(t)) * n * n + n * d
        }
    }
}

/// Predicted I/O of `kind` on `p`; fails when the kind does not apply.
pub fn analytic_cost(kind: ScheduleKind, p: &Params) -> Result<u64> {
    let plan = plan_schedule(kind, p)?;
    u64::try_from(closed_form(&plan)).map_err(|_| Error::Overflow(format!("{kind} I/O count")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub case: CaseLabel,
    pub schedule: ScheduleKind,
    pub predicted_io: u64,
    pub lower_bound: f64,
    pub hypothesis_ok: bool,
}

pub fn cost_report(kind: ScheduleKind, p: &Params) -> Result<CostReport> {
    let case = classify_case(p.d, p.g, p.mem);
    let lb = lower_bound(case, p);
    Ok(CostReport { case, schedule: kind, predicted_io: analytic_cost(kind, p)?, lower_bound: lb.value, hypothesis_ok: lb.hypothesis_ok })
}

/// Applicable approximate kind with the smallest predicted I/O (ties go to
/// the earlier kind in [`ScheduleKind::APPROXIMATE`]).
pub fn best_schedule(p: &Params) -> Result<(ScheduleKind, u64)> {
    ScheduleKind::APPROXIMATE
        .into_iter()
        .filter_map(|k| analytic_cost(k, p).ok().map(|c| (k, c)))
        .min_by_key(|&(_, c)| c)
        .ok_or_else(|| Error::Plan(format!("no approximate schedule fits M={}", p.mem)))
}
