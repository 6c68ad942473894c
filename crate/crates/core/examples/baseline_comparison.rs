//! The multilayer solver against the L1/2-NMF reference on one scene.

use std::time::Instant;

use stvmlu::baseline_nmf::{l12nmf_solve, BaselineConfig};
use stvmlu::candidates::build_candidates;
use stvmlu::hsi_data::flatten;
use stvmlu::metrics::evaluate;
use stvmlu::solver::{solve, SolverConfig};
use stvmlu::synthgen::{generate_scene, procedural_library, SynthConfig};

fn main() -> stvmlu::Result<()> {
    let library = procedural_library(224, 5, 0)?;
    let scene = generate_scene(
        &library,
        &SynthConfig {
            seed: 5,
            ..Default::default()
        },
    )?;
    let (a_ref, s_ref) = (&scene.a_true, scene.s_true.values());
    let x = flatten(&scene.cube);

    let t = Instant::now();
    let phi = build_candidates(&x, 5, 5, 5)?.phi;
    let ours = solve(
        &x,
        &phi,
        5,
        64,
        64,
        &SolverConfig {
            seed: 5,
            ..Default::default()
        },
    )?;
    let ours_time = t.elapsed();
    let ours = evaluate(&ours.a, &ours.s, a_ref, s_ref)?;

    let t = Instant::now();
    let base = l12nmf_solve(
        &x,
        &BaselineConfig {
            seed: 5,
            ..Default::default()
        },
    )?;
    let base_time = t.elapsed();
    let base = evaluate(&base.a, &base.s, a_ref, s_ref)?;

    println!("method        mean SAD  mean RMSE  time");
    println!(
        "multilayer    {:.4}    {:.4}     {:.1?}",
        ours.sad_mean, ours.rmse_mean, ours_time
    );
    println!(
        "L1/2-NMF      {:.4}    {:.4}     {:.1?}",
        base.sad_mean, base.rmse_mean, base_time
    );
    Ok(())
}
