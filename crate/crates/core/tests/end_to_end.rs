//! Library-level runs on small generated scenes.

use stvmlu::baseline_nmf::{l12nmf_solve, BaselineConfig};
use stvmlu::candidates::build_candidates;
use stvmlu::hsi_data::{flatten, Mat};
use stvmlu::metrics::evaluate;
use stvmlu::solver::{endmembers, solve, SolverConfig, Termination, WeightInit};
use stvmlu::synthgen::{
    generate_scene, procedural_library, AbundanceParams, SynthConfig, SynthScene,
};

fn micro(seed: u64, snr: Option<f64>) -> SynthScene {
    let lib = procedural_library(80, 3, 1).unwrap();
    generate_scene(
        &lib,
        &SynthConfig {
            abundance: AbundanceParams {
                rows: 16,
                cols: 16,
                endmembers: 3,
                ..Default::default()
            },
            snr_db: snr,
            seed,
            ..Default::default()
        },
    )
    .unwrap()
}

#[test]
fn solver_output_is_consistent() {
    let scene = micro(1, Some(20.0));
    let x = flatten(&scene.cube);
    let phi = build_candidates(&x, 3, 3, 1).unwrap().phi;
    let r = solve(&x, &phi, 3, 16, 16, &SolverConfig::default()).unwrap();

    assert_eq!(r.a, endmembers(&phi, &r.w_stack));
    assert_eq!(r.trace.len(), r.iterations_run);
    assert_eq!(r.cost_trace.len(), r.iterations_run);
    assert!(r.cost_trace.last().unwrap() < &r.initial_cost);
    for c in r.s.column_iter() {
        assert!((c.sum() - 1.0).abs() < 1e-9);
    }
    if r.termination == Termination::Converged {
        assert!(r.trace.last().unwrap().gap < 1e-3);
        assert!(r.trace[..r.trace.len() - 1].iter().all(|t| t.gap >= 1e-3));
    }
}

#[test]
fn zero_tv_weight_stops_after_one_iteration() {
    // without the TV term L is the clipped copy of S + Δ/μ, and Δ starts at 0
    let scene = micro(2, Some(30.0));
    let x = flatten(&scene.cube);
    let phi = build_candidates(&x, 3, 2, 2).unwrap().phi;
    let cfg = SolverConfig {
        alpha: 0.0,
        ..Default::default()
    };
    let r = solve(&x, &phi, 3, 16, 16, &cfg).unwrap();
    assert_eq!(r.iterations_run, 1);
    assert_eq!(r.termination, Termination::Converged);
}

#[test]
fn both_initializations_run_to_completion() {
    let scene = micro(3, Some(25.0));
    let x = flatten(&scene.cube);
    let phi = build_candidates(&x, 3, 2, 3).unwrap().phi;
    for init in [WeightInit::Candidates, WeightInit::Random] {
        let cfg = SolverConfig {
            init,
            t_max: 40,
            ..Default::default()
        };
        let r = solve(&x, &phi, 3, 16, 16, &cfg).unwrap();
        assert!(r.a.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn candidate_start_keeps_the_first_extraction_close() {
    // before any step, A is the first VCA run up to the small floor
    let scene = micro(4, Some(40.0));
    let x = flatten(&scene.cube);
    let pool = build_candidates(&x, 3, 2, 4).unwrap();
    let cfg = SolverConfig {
        t_max: 1,
        ..Default::default()
    };
    let r = solve(&x, &pool.phi, 3, 16, 16, &cfg).unwrap();
    let first: Mat = pool.phi.columns(0, 3).into_owned();
    let rep = evaluate(&r.a, &r.s, &first, scene.s_true.values()).unwrap();
    assert!(rep.sad_mean < 0.1, "{}", rep.sad_mean);
}

#[test]
fn baseline_recovers_a_noiseless_scene_roughly() {
    let scene = micro(5, None);
    let x = flatten(&scene.cube);
    let r = l12nmf_solve(
        &x,
        &BaselineConfig {
            endmembers: 3,
            lambda: 0.0,
            t_max: 300,
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap();
    let rep = evaluate(&r.a, &r.s, &scene.a_true, scene.s_true.values()).unwrap();
    assert!(rep.sad_mean.is_finite());
    assert!(r.cost_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6)));
}
