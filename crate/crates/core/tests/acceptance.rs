//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The process exits non-zero
//! only when `STVMLU_ACCEPTANCE_STRICT=1` is set and a criterion fails, so
//! a red statistical criterion is reported without hiding the others.
//!
//! Criteria 4 to 6 share one set of ten 64×64 scenes and take several
//! minutes on a single core.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use stvmlu::baseline_nmf::{l12nmf_solve, BaselineConfig};
use stvmlu::candidates::build_candidates;
use stvmlu::experiment::{ALPHA_GRID, LAMBDA_GRID};
use stvmlu::hsi_data::{flatten, Mat};
use stvmlu::metrics::{evaluate, match_endmembers, sad};
use stvmlu::seeds::rng;
use stvmlu::solver::{solve, update_s, update_w_layer, SUpdateParams, Solver, SolverConfig};
use stvmlu::synthgen::{generate_scene, procedural_library, AbundanceParams, SynthConfig};
use stvmlu::tv_prox::{fgp_denoise, prox_objective, tv_aniso, Grid, TvProxConfig};
use walkdir::WalkDir;

/// Tolerances and sizes fixed by the acceptance criteria.
mod pinned {
    pub const MICRO_BUDGET_SECS: f64 = 5.0;
    pub const MU0: f64 = 0.01;
    pub const RHO: f64 = 1.1;
    pub const MU_MAX: f64 = 1000.0;
    pub const EPS_STOP: f64 = 1e-3;
    pub const TV_ORACLE_TOL: f64 = 1e-12;
    pub const TV_ORACLE_GRIDS: usize = 100;
    pub const FGP_REL_TOL: f64 = 1e-3;
    pub const MATCH_MAX_M: usize = 5;
    pub const RULE_TOL: f64 = 1e-12;
    pub const SURROGATE_INSTANCES: usize = 200;
    pub const SURROGATE_TOL: f64 = 1e-10;
    pub const SEEDS: u64 = 10;
    pub const T_MAX: usize = 500;
    pub const RUN_BUDGET_SECS: f64 = 180.0;
}

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn rand_mat(g: &mut impl Rng, r: usize, c: usize, lo: f64, hi: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| g.gen_range(lo..hi))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- 1

fn criterion_invariants() -> Outcome {
    let t0 = Instant::now();
    let lib = procedural_library(224, 3, 0).unwrap();
    let scene = generate_scene(
        &lib,
        &SynthConfig {
            abundance: AbundanceParams {
                rows: 16,
                cols: 16,
                endmembers: 3,
                ..Default::default()
            },
            seed: 11,
            ..Default::default()
        },
    )
    .unwrap();
    let x = flatten(&scene.cube);
    let phi = build_candidates(&x, 3, 5, 11).unwrap().phi;
    let cfg = SolverConfig {
        seed: 11,
        ..Default::default()
    };
    let mut solver = Solver::new(&x, &phi, 3, 16, 16, cfg.clone()).unwrap();
    let mut nonneg = true;
    let mut mu_exact = true;
    let mut mu_fold = pinned::MU0;
    let mut early_stop = false;
    let mut stopped_at = None;
    for t in 1..=cfg.t_max {
        let rec = solver.step().unwrap();
        let st = solver.state();
        nonneg &= st.w_stack.iter().all(|w| w.iter().all(|&v| v >= 0.0))
            && st.s.iter().all(|&v| v >= 0.0)
            && st.l_aux.iter().all(|&v| v >= 0.0);
        let closed = (pinned::MU0 * pinned::RHO.powi(t as i32 - 1)).min(pinned::MU_MAX);
        mu_exact &= rec.mu == mu_fold && rel_err(rec.mu, closed) < 1e-12;
        mu_fold = (mu_fold * pinned::RHO).min(pinned::MU_MAX);
        let below = rec.gap < pinned::EPS_STOP;
        if solver.converged() != below {
            early_stop = true;
        }
        if below {
            stopped_at = Some(t);
            break;
        }
    }
    // the driver must stop exactly where the manual loop did
    let result = solve(&x, &phi, 3, 16, 16, &cfg).unwrap();
    let stop_ok = !early_stop
        && stopped_at.map_or(result.iterations_run == cfg.t_max, |t| {
            t == result.iterations_run
        });
    let secs = t0.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "invariants on 16x16 M=3 micro-scene",
        pass: nonneg && mu_exact && stop_ok && secs < pinned::MICRO_BUDGET_SECS,
        detail: format!(
            "nonneg={nonneg} mu_schedule_exact={mu_exact} stop_first_below_eps={stop_ok} (iter {:?}) time={secs:.2}s",
            stopped_at
        ),
    }
}

// ---------------------------------------------------------------- 2

/// Direct transcription of the anisotropic TV double sum, boundary terms
/// written out separately.
fn tv_oracle(rows: usize, cols: usize, z: &[f64]) -> f64 {
    let at = |i: usize, j: usize| z[i * cols + j];
    let mut sum = 0.0;
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols.saturating_sub(1) {
            sum += (at(i, j) - at(i + 1, j)).abs() + (at(i, j) - at(i, j + 1)).abs();
        }
    }
    if cols > 0 {
        for i in 0..rows.saturating_sub(1) {
            sum += (at(i, cols - 1) - at(i + 1, cols - 1)).abs();
        }
    }
    if rows > 0 {
        for j in 0..cols.saturating_sub(1) {
            sum += (at(rows - 1, j) - at(rows - 1, j + 1)).abs();
        }
    }
    sum
}

/// Projected subgradient descent on `‖z − b‖² + 2w·TV(z)`, best iterate.
fn prox_oracle(b: &Grid, w: f64, lower: f64, steps: usize) -> f64 {
    let (rows, cols) = (b.rows(), b.cols());
    let mut z: Vec<f64> = b.as_slice().iter().map(|&v| v.max(lower)).collect();
    let obj = |z: &[f64]| {
        let g = Grid::from_row_major(rows, cols, z.to_vec()).unwrap();
        prox_objective(&g, b, w)
    };
    let mut best = obj(&z);
    let mut g = vec![0.0; z.len()];
    for k in 0..steps {
        for (gi, (zi, bi)) in g.iter_mut().zip(z.iter().zip(b.as_slice())) {
            *gi = 2.0 * (zi - bi);
        }
        for i in 0..rows {
            for j in 0..cols {
                let p = i * cols + j;
                if i + 1 < rows {
                    let s = 2.0 * w * (z[p] - z[p + cols]).signum();
                    g[p] += s;
                    g[p + cols] -= s;
                }
                if j + 1 < cols {
                    let s = 2.0 * w * (z[p] - z[p + 1]).signum();
                    g[p] += s;
                    g[p + 1] -= s;
                }
            }
        }
        let step = 0.01 / (1.0 + k as f64).sqrt();
        for (zi, gi) in z.iter_mut().zip(&g) {
            *zi = (*zi - step * gi).max(lower);
        }
        best = best.min(obj(&z));
    }
    best
}

fn loop_w_update(x: &Mat, u: &Mat, w: &Mat, v: &Mat, eps: f64) -> Mat {
    let (b, p) = x.shape();
    let (k, m1) = w.shape();
    // fit[i][q] = Σ_k Σ_c u_ik w_kc v_cq
    let mut fit = vec![vec![0.0; p]; b];
    for (i, row) in fit.iter_mut().enumerate() {
        for (q, f) in row.iter_mut().enumerate() {
            for kk in 0..k {
                for c in 0..m1 {
                    *f += u[(i, kk)] * w[(kk, c)] * v[(c, q)];
                }
            }
        }
    }
    let d: Vec<f64> = (0..p)
        .map(|q| {
            let r2: f64 = (0..b).map(|i| (x[(i, q)] - fit[i][q]).powi(2)).sum();
            1.0 / r2.sqrt().max(eps)
        })
        .collect();
    let mut out = w.clone();
    for kk in 0..k {
        for c in 0..m1 {
            let (mut num, mut den) = (0.0, 0.0);
            for q in 0..p {
                for i in 0..b {
                    num += u[(i, kk)] * x[(i, q)] * d[q] * v[(c, q)];
                    den += u[(i, kk)] * fit[i][q] * d[q] * v[(c, q)];
                }
            }
            out[(kk, c)] = w[(kk, c)] * num / (den + eps);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn loop_s_update(
    x: &Mat,
    a: &Mat,
    s: &Mat,
    l: &Mat,
    delta: &Mat,
    mu: f64,
    lambda: f64,
    asc: f64,
    eps: f64,
) -> Mat {
    let (b, p) = x.shape();
    let m = a.ncols();
    let xa = |i: usize, q: usize| if i < b { x[(i, q)] } else { asc };
    let aa = |i: usize, c: usize| if i < b { a[(i, c)] } else { asc };
    let rows = if asc > 0.0 { b + 1 } else { b };
    let mut out = s.clone();
    for q in 0..p {
        let mut r2 = 0.0;
        for i in 0..rows {
            let fit: f64 = (0..m).map(|c| aa(i, c) * s[(c, q)]).sum();
            r2 += (xa(i, q) - fit).powi(2);
        }
        let h = 1.0 / r2.sqrt().max(eps);
        for c in 0..m {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..rows {
                num += aa(i, c) * xa(i, q) * h;
                let fit: f64 = (0..m).map(|c2| aa(i, c2) * s[(c2, q)]).sum();
                den += aa(i, c) * fit * h;
            }
            num += mu * l[(c, q)];
            den += mu * s[(c, q)] + delta[(c, q)] + 0.5 * lambda / s[(c, q)].max(eps).sqrt();
            out[(c, q)] = s[(c, q)] * num / (den + eps);
        }
    }
    out
}

fn criterion_oracles() -> Outcome {
    let mut g = rng(2024);

    let mut tv_err: f64 = 0.0;
    for n in 0..pinned::TV_ORACLE_GRIDS {
        let (rows, cols) = (1 + n % 9, 1 + (n * 7) % 11);
        let data: Vec<f64> = (0..rows * cols).map(|_| g.gen_range(-3.0..3.0)).collect();
        let grid = Grid::from_row_major(rows, cols, data.clone()).unwrap();
        tv_err = tv_err.max((tv_aniso(&grid) - tv_oracle(rows, cols, &data)).abs());
    }
    let tv_ok = tv_err <= pinned::TV_ORACLE_TOL;

    let mut fgp_err: f64 = 0.0;
    for &(n, w, lower) in &[
        (2usize, 0.1, f64::NEG_INFINITY),
        (2, 1.0, f64::NEG_INFINITY),
        (2, 0.1, 0.0),
        (2, 1.0, 0.0),
        (4, 0.1, f64::NEG_INFINITY),
        (4, 1.0, f64::NEG_INFINITY),
        (4, 0.1, 0.0),
        (4, 1.0, 0.0),
    ] {
        let b = Grid::from_fn(n, n, |_, _| g.gen_range(-0.5..1.5));
        let cfg = TvProxConfig {
            weight: w,
            inner_iters: 500,
            box_lower: lower,
        };
        let got = fgp_denoise(&b, &cfg, None).unwrap().objective;
        let want = prox_oracle(&b, w, lower, 2_000_000);
        fgp_err = fgp_err.max(rel_err(got, want));
    }
    let fgp_ok = fgp_err <= pinned::FGP_REL_TOL;

    let mut match_ok = true;
    for m in 1..=pinned::MATCH_MAX_M {
        for _ in 0..20 {
            let a_ref = rand_mat(&mut g, 12, m, 0.0, 1.0);
            let a_est = rand_mat(&mut g, 12, m, 0.0, 1.0);
            let perm = match_endmembers(&a_est, &a_ref).unwrap();
            let total = |p: &[usize]| -> f64 {
                p.iter()
                    .enumerate()
                    .map(|(j, &e)| {
                        sad(a_est.column(e).as_slice(), a_ref.column(j).as_slice()).unwrap()
                    })
                    .sum()
            };
            let best = permutations(m)
                .iter()
                .map(|p| total(p))
                .fold(f64::INFINITY, f64::min);
            match_ok &= (total(&perm) - best).abs() <= 1e-12;
        }
    }

    let mut rule_err: f64 = 0.0;
    for _ in 0..10 {
        let (b, k, m1, m, p) = (7, 5, 3, 3, 9);
        let x = rand_mat(&mut g, b, p, 0.0, 2.0);
        let u = rand_mat(&mut g, b, k, 0.05, 1.0);
        let w = rand_mat(&mut g, k, m1, 0.05, 1.0);
        let v = rand_mat(&mut g, m1, p, 0.05, 1.0);
        let got = update_w_layer(&x, &u, &v, &w, 1e-12).unwrap();
        let want = loop_w_update(&x, &u, &w, &v, 1e-12);
        rule_err = rule_err.max((&got - &want).amax() / want.amax());

        let a = rand_mat(&mut g, b, m, 0.05, 1.0);
        let s = rand_mat(&mut g, m, p, 0.05, 1.0);
        let l = rand_mat(&mut g, m, p, 0.0, 1.0);
        let delta = rand_mat(&mut g, m, p, -0.05, 0.05);
        for asc in [0.0, 20.0] {
            let params = SUpdateParams {
                mu: 0.7,
                lambda: 0.05,
                eps_div: 1e-12,
                asc_delta: asc,
            };
            let got = update_s(&x, &a, &s, &l, &delta, params).unwrap();
            let want = loop_s_update(&x, &a, &s, &l, &delta, 0.7, 0.05, asc, 1e-12);
            rule_err = rule_err.max((&got - &want).amax() / want.amax());
        }
    }
    let rule_ok = rule_err <= pinned::RULE_TOL;

    Outcome {
        id: 2,
        name: "oracle equivalence",
        pass: tv_ok && fgp_ok && match_ok && rule_ok,
        detail: format!(
            "tv max err {tv_err:.1e}; fgp vs subgradient max rel {fgp_err:.1e}; matching vs M! {match_ok}; update rules max rel {rule_err:.1e}"
        ),
    }
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

// ---------------------------------------------------------------- 3

fn criterion_surrogate() -> Outcome {
    let mut g = rng(77);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..pinned::SURROGATE_INSTANCES {
        let b = g.gen_range(3..10);
        let k = g.gen_range(2..7);
        let m1 = g.gen_range(1..5);
        let p = g.gen_range(2..12);
        let x = rand_mat(&mut g, b, p, 0.0, 2.0);
        let u = rand_mat(&mut g, b, k, 0.01, 1.0);
        let w = rand_mat(&mut g, k, m1, 0.01, 1.0);
        let v = rand_mat(&mut g, m1, p, 0.01, 1.0);
        let resid = |w: &Mat| &x - &u * w * &v;
        let d: Vec<f64> = resid(&w)
            .column_iter()
            .map(|c| 1.0 / c.norm().max(1e-12))
            .collect();
        let surrogate = |w: &Mat| -> f64 {
            resid(w)
                .column_iter()
                .zip(&d)
                .map(|(c, dq)| dq * c.norm_squared())
                .sum()
        };
        let before = surrogate(&w);
        let after = surrogate(&update_w_layer(&x, &u, &v, &w, 1e-12).unwrap());
        let excess = (after - before) / before;
        worst = worst.max(excess);
        if excess > pinned::SURROGATE_TOL {
            violations += 1;
        }
    }
    Outcome {
        id: 3,
        name: "frozen-D surrogate monotone under one W step",
        pass: violations == 0,
        detail: format!(
            "{violations}/{} violations, worst relative change {worst:.2e}",
            pinned::SURROGATE_INSTANCES
        ),
    }
}

// ---------------------------------------------------------------- 4 to 6

struct Problem {
    x: Mat,
    phi: Mat,
    a_true: Mat,
    s_true: Mat,
}

struct Study {
    /// Mean SAD over seeds for each `(α, λ)` at `L = 3`.
    grid: BTreeMap<(u64, u64), f64>,
    tuned: (f64, f64),
    tuned_sad: f64,
    tuned_l1_sad: f64,
    unregularized_sad: f64,
    tuned_iters_max: usize,
    tuned_cost_drop: bool,
    baseline_sad: f64,
    baseline_lambda: f64,
    slowest_run: Duration,
}

fn problems() -> Vec<Problem> {
    let lib = procedural_library(224, 5, 0).unwrap();
    (0..pinned::SEEDS)
        .map(|seed| {
            let scene = generate_scene(
                &lib,
                &SynthConfig {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            let x = flatten(&scene.cube);
            let phi = build_candidates(&x, 5, 5, seed).unwrap().phi;
            Problem {
                x,
                phi,
                a_true: scene.a_true,
                s_true: scene.s_true.into_values(),
            }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn solver_cfg(layers: usize, alpha: f64, lambda: f64, seed: u64) -> SolverConfig {
    SolverConfig {
        num_layers: layers,
        alpha,
        lambda,
        t_max: pinned::T_MAX,
        seed,
        ..Default::default()
    }
}

fn run_study() -> Study {
    let probs = problems();
    let mut slowest = Duration::ZERO;
    let mut run_all = |layers: usize, alpha: f64, lambda: f64| {
        let mut sads = Vec::new();
        let mut iters = 0;
        let mut drop = true;
        for (seed, p) in probs.iter().enumerate() {
            let t = Instant::now();
            let r = solve(
                &p.x,
                &p.phi,
                5,
                64,
                64,
                &solver_cfg(layers, alpha, lambda, seed as u64),
            )
            .unwrap();
            slowest = slowest.max(t.elapsed());
            sads.push(evaluate(&r.a, &r.s, &p.a_true, &p.s_true).unwrap().sad_mean);
            iters = iters.max(r.iterations_run);
            drop &= r.cost_trace.last().is_some_and(|&c| c < r.initial_cost);
        }
        (mean(&sads), iters, drop)
    };

    let mut grid = BTreeMap::new();
    let mut best = (f64::INFINITY, (0.0, 0.0), 0, false);
    for &alpha in &ALPHA_GRID {
        for &lambda in &LAMBDA_GRID {
            let (s, it, drop) = run_all(3, alpha, lambda);
            grid.insert((alpha.to_bits(), lambda.to_bits()), s);
            if s < best.0 {
                best = (s, (alpha, lambda), it, drop);
            }
        }
    }
    let (tuned_sad, tuned, tuned_iters_max, tuned_cost_drop) = best;
    let tuned_l1_sad = run_all(1, tuned.0, tuned.1).0;
    let unregularized_sad = run_all(3, 0.0, 0.0).0;

    let mut baseline = (f64::INFINITY, 0.0);
    for &lambda in &LAMBDA_GRID {
        let sads: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(seed, p)| {
                let cfg = BaselineConfig {
                    endmembers: 5,
                    lambda,
                    seed: seed as u64,
                    ..Default::default()
                };
                let r = l12nmf_solve(&p.x, &cfg).unwrap();
                evaluate(&r.a, &r.s, &p.a_true, &p.s_true).unwrap().sad_mean
            })
            .collect();
        let m = mean(&sads);
        if m < baseline.0 {
            baseline = (m, lambda);
        }
    }

    Study {
        grid,
        tuned,
        tuned_sad,
        tuned_l1_sad,
        unregularized_sad,
        tuned_iters_max,
        tuned_cost_drop,
        baseline_sad: baseline.0,
        baseline_lambda: baseline.1,
        slowest_run: slowest,
    }
}

fn criterion_layers(s: &Study) -> Outcome {
    let layers_ok = s.tuned_sad <= s.tuned_l1_sad;
    let reg_ok = s.tuned_sad <= s.unregularized_sad;
    let budget_ok = s.slowest_run.as_secs_f64() <= pinned::RUN_BUDGET_SECS;
    let run_ok = s.tuned_iters_max <= pinned::T_MAX && s.tuned_cost_drop;
    Outcome {
        id: 4,
        name: "synthetic end-to-end, layers and regularization",
        pass: layers_ok && reg_ok && budget_ok && run_ok,
        detail: format!(
            "tuned (a={}, l={}) L=3 SAD {:.4} vs L=1 {:.4}; vs a=l=0 {:.4}; max iters {}, cost drops {}; slowest run {:.1}s",
            s.tuned.0,
            s.tuned.1,
            s.tuned_sad,
            s.tuned_l1_sad,
            s.unregularized_sad,
            s.tuned_iters_max,
            s.tuned_cost_drop,
            s.slowest_run.as_secs_f64()
        ),
    }
}

fn criterion_alpha(s: &Study) -> Outcome {
    let small = [0.001, 0.01, 0.02, 0.05];
    let per_alpha: Vec<(f64, f64)> = ALPHA_GRID
        .iter()
        .map(|&a| {
            let best = LAMBDA_GRID
                .iter()
                .map(|&l| s.grid[&(a.to_bits(), l.to_bits())])
                .fold(f64::INFINITY, f64::min);
            (a, best)
        })
        .collect();
    let table = per_alpha
        .iter()
        .map(|(a, v)| format!("{a}:{v:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    Outcome {
        id: 5,
        name: "best alpha lies in the small-alpha region",
        pass: small.contains(&s.tuned.0),
        detail: format!("best alpha {}; best SAD per alpha {table}", s.tuned.0),
    }
}

fn criterion_baseline(s: &Study) -> Outcome {
    Outcome {
        id: 6,
        name: "STVMLU beats the L1/2-NMF baseline",
        pass: s.tuned_sad <= s.baseline_sad,
        detail: format!(
            "STVMLU {:.4} vs L1/2-NMF {:.4} (best lambda {})",
            s.tuned_sad, s.baseline_sad, s.baseline_lambda
        ),
    }
}

// ---------------------------------------------------------------- 7

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    WalkDir::new(dir)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .filter(|e| {
            let name = e.file_name().to_string_lossy();
            let artifact = name.ends_with(".csv") || name.ends_with(".json");
            artifact && !name.starts_with("timings") && !name.ends_with("_timings.csv")
        })
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().to_path_buf();
            (rel, fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let d = |n: &str| root.join(n).display().to_string();
    let grid_csv = root.join("grid.csv");
    stvmlu::hsi_data::write_matrix_csv(
        &Mat::from_fn(6, 7, |i, j| ((i * 5 + j * 3) % 7) as f64 / 7.0),
        &grid_csv,
    )
    .unwrap();
    let micro = [
        "--rows",
        "16",
        "--cols",
        "16",
        "--endmembers",
        "3",
        "--bands",
        "60",
    ];
    let mut commands: Vec<(&str, Vec<String>)> = vec![
        (
            "synth",
            [&["synth", "--seed", "5"][..], &micro]
                .concat()
                .iter()
                .map(|s| s.to_string())
                .chain(["--out".into(), d("scene")])
                .collect(),
        ),
        (
            "candidates",
            vec![
                "candidates".into(),
                "--input".into(),
                d("scene"),
                "--endmembers".into(),
                "3".into(),
                "--runs".into(),
                "2".into(),
                "--seed".into(),
                "5".into(),
                "--out".into(),
                d("cand"),
            ],
        ),
        (
            "unmix",
            vec![
                "unmix".into(),
                "--input".into(),
                d("scene"),
                "--phi".into(),
                root.join("cand/phi.csv").display().to_string(),
                "--endmembers".into(),
                "3".into(),
                "--seed".into(),
                "5".into(),
                "--out".into(),
                d("unmix"),
            ],
        ),
        (
            "baseline",
            vec![
                "baseline".into(),
                "--input".into(),
                d("scene"),
                "--endmembers".into(),
                "3".into(),
                "--max-iter".into(),
                "60".into(),
                "--out".into(),
                d("baseline"),
            ],
        ),
        (
            "eval",
            vec![
                "eval".into(),
                "--result".into(),
                d("unmix"),
                "--scene".into(),
                d("scene"),
                "--out".into(),
                d("eval"),
            ],
        ),
        (
            "sweep",
            vec![
                "sweep".into(),
                "--scene".into(),
                d("scene"),
                "--phi".into(),
                root.join("cand/phi.csv").display().to_string(),
                "--layers".into(),
                "1,2".into(),
                "--alphas".into(),
                "0.01,0.5".into(),
                "--lambdas".into(),
                "0.01".into(),
                "--repeats".into(),
                "2".into(),
                "--threads".into(),
                "2".into(),
                "--out".into(),
                d("sweep"),
            ],
        ),
        (
            "tvprox",
            vec![
                "tvprox".into(),
                "--in".into(),
                grid_csv.display().to_string(),
                "--weight".into(),
                "0.3".into(),
                "--out".into(),
                d("tvprox"),
            ],
        ),
        (
            "pipeline",
            [&["pipeline", "--seed", "9"][..], &micro]
                .concat()
                .iter()
                .map(|s| s.to_string())
                .chain(["--out".into(), d("pipeline")])
                .collect(),
        ),
    ];
    let mut failures = Vec::new();
    for (name, args) in commands.drain(..) {
        let argv = std::iter::once("stvmlu".to_string()).chain(args.iter().cloned());
        if stvmlu::cli::run(argv) != 0 {
            failures.push(format!("{name}: first run failed"));
            continue;
        }
        let out = PathBuf::from(args.last().unwrap());
        let first = snapshot(&out);
        let replay = [
            "stvmlu".to_string(),
            "replay".into(),
            out.join("manifest.json").display().to_string(),
        ];
        if stvmlu::cli::run(replay) != 0 {
            failures.push(format!("{name}: replay failed"));
            continue;
        }
        if snapshot(&out) != first {
            failures.push(format!("{name}: outputs differ"));
        }
    }
    Outcome {
        id: 7,
        name: "determinism of every command under manifest replay",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "8 commands replayed byte-identically".into()
        } else {
            failures.join("; ")
        },
    }
}

fn report(o: &Outcome) {
    println!(
        "[{}] criterion {}: {} | {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    );
}

fn main() {
    // `cargo test -- --list` and friends probe test binaries
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut outcomes = Vec::new();
    for f in [criterion_invariants, criterion_oracles, criterion_surrogate] {
        let o = f();
        report(&o);
        outcomes.push(o);
    }
    let study = run_study();
    for f in [criterion_layers, criterion_alpha, criterion_baseline] {
        let o = f(&study);
        report(&o);
        outcomes.push(o);
    }
    let o = criterion_determinism();
    report(&o);
    outcomes.push(o);

    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        outcomes.len() - failed
    );
    if failed > 0 && std::env::var("STVMLU_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
