//! Layer-count sweep on a reduced scene, averaged over repeats.
//!
//! The full 64×64 grid is what the `sweep` command runs; this keeps the
//! example under a minute.

use stvmlu::candidates::build_candidates;
use stvmlu::experiment::{aggregate, run_sweep, SweepGrid, SweepProblem};
use stvmlu::hsi_data::flatten;
use stvmlu::solver::SolverConfig;
use stvmlu::synthgen::{generate_scene, procedural_library, AbundanceParams, SynthConfig};

fn main() -> stvmlu::Result<()> {
    let library = procedural_library(224, 5, 0)?;
    let cfg = SynthConfig {
        abundance: AbundanceParams {
            rows: 32,
            cols: 32,
            ..Default::default()
        },
        seed: 3,
        ..Default::default()
    };
    let scene = generate_scene(&library, &cfg)?;
    let x = flatten(&scene.cube);
    let phi = build_candidates(&x, 5, 5, 3)?.phi;

    let problem = SweepProblem {
        x: &x,
        phi: &phi,
        a_ref: &scene.a_true,
        s_ref: scene.s_true.values(),
        rows: 32,
        cols: 32,
    };
    let grid = SweepGrid {
        layers: (1..=6).collect(),
        alphas: vec![0.01],
        lambdas: vec![0.01],
        repeats: 3,
    };
    let rows = run_sweep(&problem, &grid, &SolverConfig::default(), 3)?;
    println!(" L   SAD mean ± std     RMSE mean");
    for a in aggregate(&rows) {
        println!(
            "{:2}   {:.4} ± {:.4}    {:.4}",
            a.cell.layers, a.sad_mean, a.sad_std, a.rmse_mean
        );
    }
    Ok(())
}
