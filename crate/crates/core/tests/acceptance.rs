//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero when any of them fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use attnio::attention::{approx_attention, exact_attention, exp_via_attention};
use attnio::combinatorics::{binomial, halfcover_terms, tau, tau_identity_check};
use attnio::featuremap::{enumerate_basis, FeatureMap};
use attnio::iosim::IoStats;
use attnio::planner::{analytic_cost, classify_case, lower_bound, CaseLabel, Params};
use attnio::polyapprox::PolyApprox;
use attnio::problem::{gen_problem, uniform_matrix};
use attnio::schedules::geometry::{assign_tile, GroupPartition};
use attnio::schedules::{build, run, run_and_replay, ScheduleKind};
use attnio::{Matrix64, ProblemInstance64};

/// Outcome of one criterion: pass flag and a one-line measurement summary.
type Verdict = (bool, String);

type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Verdict + 'a>);

/// `(n, d, g, M)` grid shared by criteria 5, 6 and 9.
const GRID: [(usize, usize, usize, u64); 20] = [
    (32, 4, 2, 256),
    (8, 2, 2, 128),
    (16, 3, 2, 512),
    (20, 4, 2, 300),
    (13, 2, 4, 128),
    (64, 4, 2, 1024),
    (64, 16, 2, 2048),
    (32, 16, 2, 8192),
    (24, 12, 2, 2048),
    (16, 10, 1, 400),
    (48, 16, 2, 4096),
    (32, 10, 2, 512),
    (16, 10, 4, 512),
    (12, 6, 3, 256),
    (20, 12, 2, 1024),
    (24, 10, 3, 400),
    (16, 8, 4, 256),
    (10, 6, 2, 32),
    (8, 3, 4, 128),
    (12, 10, 2, 64),
];

struct GridRun {
    params: Params,
    kind: ScheduleKind,
    stats: IoStats,
    analytic: u64,
    replay_ok: bool,
}

/// Plans, simulates and replays every applicable `(kind, params)` pair of
/// [`GRID`]. Pairs whose plan is rejected are skipped; simulator errors are
/// returned as failures.
fn grid_runs() -> Result<Vec<GridRun>, String> {
    let mut out = Vec::new();
    for (seed, &(n, d, g, mem)) in GRID.iter().enumerate() {
        let params = Params::new(n, d, g, mem).map_err(|e| e.to_string())?;
        let problem: ProblemInstance64 = gen_problem(n, d, 0.5, 1.0, seed as u64).map_err(|e| e.to_string())?;
        for kind in ScheduleKind::ALL {
            let Ok(plan) = build(kind, &params) else { continue };
            let analytic = analytic_cost(kind, &params).map_err(|e| e.to_string())?;
            let (stats, replay_ok) =
                run_and_replay(&plan, &problem).map_err(|e| format!("{kind} {n}/{d}/{g}/{mem}: {e}"))?;
            out.push(GridRun { params, kind, stats, analytic, replay_ok });
        }
    }
    Ok(out)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn approximation_contract() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let n = [32, 64, 128][seed as usize % 3];
        let d = [4, 8][seed as usize % 2];
        let p: ProblemInstance64 = gen_problem(n, d, 0.5, 1.0, seed).unwrap();
        let approx = approx_attention(&p.q, &p.k, &p.v, 1e-2).unwrap();
        let exact = exact_attention(&p.q, &p.k, &p.v).unwrap();
        worst = worst.max(approx.output.max_abs_diff(&exact.output).unwrap());
    }
    (worst <= 1e-2, format!("max deviation {worst:.3e} over 20 instances, eps 1e-2"))
}

fn bilinear_identity() -> Verdict {
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let d = 1 + (case % 6) as usize;
        let g = if (case / 6) % 2 == 0 { 2 } else { 4 };
        let poly = PolyApprox::<f64>::truncated_exp(g);
        let fm = FeatureMap::new(enumerate_basis(d, g).unwrap(), &poly, 1.0).unwrap();
        let qk: Matrix64 = uniform_matrix(2, d, 1.0, 0xB1_1E_A5, case);
        let (q, k) = (qk.row(0), qk.row(1));
        let dot: f64 = q.iter().zip(k).map(|(a, b)| a * b).sum();
        let want = poly.eval(dot);
        let got: f64 = fm.q_row(q).iter().zip(fm.k_row(k)).map(|(u, v)| u * v).sum();
        worst = worst.max((got - want).abs() / (1.0 + want.abs()));
    }
    (worst <= 1e-9, format!("max scaled residual {worst:.3e} over 200 pairs"))
}

fn tau_closed_form() -> Verdict {
    let mut bad = Vec::new();
    for w in 0..=12 {
        for g in 0..=8 {
            if !tau_identity_check(w, g) {
                bad.push((w, g));
            }
        }
    }
    (bad.is_empty(), format!("117 (w, g) pairs checked, mismatches {bad:?}"))
}

fn halfcover() -> Verdict {
    let mut worst = (0.0f64, 0, 0);
    let mut all_below = true;
    for g in (2..=12).step_by(2) {
        for d in 5 * g..=10 * g {
            let (num, den) = halfcover_terms(d, g).unwrap();
            all_below &= num < den;
            let ratio = num as f64 / den as f64;
            if ratio > worst.0 {
                worst = (ratio, d, g);
            }
        }
    }
    (all_below && worst.0 < 1.0, format!("max ratio {:.6} at d={} g={}", worst.0, worst.1, worst.2))
}

fn exact_equality(runs: &[GridRun]) -> Verdict {
    let cases: std::collections::BTreeSet<CaseLabel> =
        runs.iter().map(|r| classify_case(r.params.d, r.params.g, r.params.mem)).collect();
    let kinds: std::collections::BTreeSet<&str> = runs.iter().map(|r| r.kind.name()).collect();
    let mismatches: Vec<String> = runs
        .iter()
        .filter(|r| r.stats.total_io != r.analytic || r.stats.peak_resident > r.params.mem || r.stats.warnings != 0)
        .map(|r| format!("{} {:?}", r.kind, (r.params.n, r.params.d, r.params.g, r.params.mem)))
        .collect();
    let ok = GRID.len() >= 20 && cases.len() == 4 && kinds.len() == ScheduleKind::ALL.len() && mismatches.is_empty();
    (ok, format!("{} runs on {} sets, cases {cases:?}, {} kinds, mismatches {mismatches:?}", runs.len(), GRID.len(), kinds.len()))
}

fn replay_validity(runs: &[GridRun]) -> Verdict {
    let failed: Vec<String> = runs
        .iter()
        .filter(|r| !r.replay_ok)
        .map(|r| format!("{} {:?}", r.kind, (r.params.n, r.params.d, r.params.g, r.params.mem)))
        .collect();
    (failed.is_empty() && !runs.is_empty(), format!("{} runs replayed, failures {failed:?}", runs.len()))
}

fn scaling() -> Verdict {
    let ns = [256usize, 512, 1024, 2048];
    let mut case1 = Vec::new();
    let mut flash = Vec::new();
    for &n in &ns {
        let p = Params::new(n, 4, 2, 4096).unwrap();
        case1.push(run(&build(ScheduleKind::Case1, &p).unwrap()).unwrap().total_io as f64);
        flash.push(run(&build(ScheduleKind::Flash, &p).unwrap()).unwrap().total_io as f64);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (s1, sf) = (slope(&xs, &case1), slope(&xs, &flash));
    let beats = ns.iter().zip(case1.iter().zip(&flash)).filter(|(&n, _)| 4096 <= n * 4 / 2).all(|(_, (c, f))| c < f);
    let ok = (s1 - 1.0).abs() <= 0.05 && (sf - 2.0).abs() <= 0.05 && beats;
    (ok, format!("case1 slope {s1:.4}, flash slope {sf:.4}, case1 {case1:?} flash {flash:?}"))
}

fn case2_shape() -> Verdict {
    let mut io = Vec::new();
    let mut ratios = Vec::new();
    for mem in [2048u64, 8192, 32768] {
        let p = Params::new(64, 16, 2, mem).unwrap();
        let total = run(&build(ScheduleKind::KeyLemma, &p).unwrap()).unwrap().total_io;
        let lb = lower_bound(CaseLabel::II, &p).value;
        io.push(total);
        ratios.push(total as f64 / lb);
    }
    let decreasing = io.windows(2).all(|w| w[1] < w[0]);
    let within = ratios.iter().all(|&r| r <= 64.0);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.1}")).collect();
    (decreasing && within, format!("total_io {io:?} (decreasing {decreasing}), ratio to bound [{}]", shown.join(", ")))
}

fn io_floor(runs: &[GridRun]) -> Verdict {
    let bad: Vec<String> = runs
        .iter()
        .filter(|r| {
            let nd = (r.params.n * r.params.d) as u64;
            r.stats.touched_inputs != 3 * nd || r.stats.loads < r.stats.touched_inputs || r.stats.stores < nd
        })
        .map(|r| format!("{} {:?}", r.kind, (r.params.n, r.params.d, r.params.g, r.params.mem)))
        .collect();
    (bad.is_empty() && !runs.is_empty(), format!("{} runs checked, violations {bad:?}", runs.len()))
}

fn exp_grid() -> Verdict {
    let mut worst = 0.0f64;
    for i in -30..=30 {
        let x = i as f64 / 10.0;
        let z = exp_via_attention(x).unwrap();
        worst = worst.max((z - x.exp()).abs() / x.exp());
    }
    (worst <= 1e-9, format!("max relative deviation {worst:.3e} on 61 points"))
}

fn partition() -> Verdict {
    let mut checked = 0usize;
    let mut bad = Vec::new();
    for d in 1..=10 {
        for g in 1..=3 {
            let basis = enumerate_basis(d, g).unwrap();
            let r = tau(d, g).unwrap() as usize;
            for w in g..=d {
                let part = GroupPartition::for_generating_set(d, w, g).unwrap();
                let m = part.len();
                let combos = if m <= g { 1 } else { binomial(m as u128, g as u128).unwrap() as usize };
                let mut per_combo = std::collections::BTreeMap::<Vec<usize>, usize>::new();
                let mut ok = true;
                for mono in basis.monomials() {
                    let combo = assign_tile(mono, &part, g);
                    ok &= combo.windows(2).all(|p| p[0] < p[1]) && combo.len() == g.min(m);
                    ok &= mono.factors().all(|(v, _)| combo.contains(&part.group_of(v)));
                    ok &= assign_tile(mono, &part, g) == combo;
                    *per_combo.entry(combo).or_default() += 1;
                }
                ok &= per_combo.values().sum::<usize>() == r && per_combo.len() <= combos;
                // The tiles of an actual plan must carry the same partition.
                let p = Params::new(4, d, g, 1 << 40).unwrap().with_w(w);
                if let Ok(attnio::schedules::geometry::SchedulePlan::Tiled(plan)) = build(ScheduleKind::KeyLemma, &p) {
                    let mut cols: Vec<usize> = plan.tiles.iter().flat_map(|t| t.columns.iter().copied()).collect();
                    cols.sort_unstable();
                    ok &= cols == (0..r).collect::<Vec<_>>();
                } else {
                    ok = false;
                }
                checked += 1;
                if !ok {
                    bad.push((d, g, w));
                }
            }
        }
    }
    (bad.is_empty(), format!("{checked} (d, g, w) triples checked, failures {bad:?}"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let runs = grid_runs();
    let grid = |f: fn(&[GridRun]) -> Verdict| -> Verdict {
        match &runs {
            Ok(r) => f(r),
            Err(e) => (false, format!("grid run failed: {e}")),
        }
    };
    let criteria: Vec<Criterion<'_>> = vec![
        (1, "approximation contract", Box::new(approximation_contract)),
        (2, "bilinear identity", Box::new(bilinear_identity)),
        (3, "tau closed form", Box::new(tau_closed_form)),
        (4, "half-cover ratio", Box::new(halfcover)),
        (5, "simulator equals analytic", Box::new(move || grid(exact_equality))),
        (6, "numeric trace validity", Box::new(move || grid(replay_validity))),
        (7, "scaling exponents", Box::new(scaling)),
        (8, "case II cost shape", Box::new(case2_shape)),
        (9, "trivial I/O floor", Box::new(move || grid(io_floor))),
        (10, "exp via attention", Box::new(exp_grid)),
        (11, "partition property", Box::new(partition)),
    ];
    let mut failed = 0;
    for (id, name, check) in &criteria {
        let t = Instant::now();
        let (ok, detail) = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| (false, "panicked".to_string()));
        failed += usize::from(!ok);
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict} {name}: {detail} [{:.2}s]", t.elapsed().as_secs_f64());
    }
    println!("acceptance: {}/{} passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
