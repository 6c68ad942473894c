//! End-to-end unmixing of the synthetic scene, stepping the solver by hand
//! to watch the cost, the `S`/`L` gap and the penalty weight.

use stvmlu::candidates::build_candidates;
use stvmlu::hsi_data::flatten;
use stvmlu::metrics::evaluate;
use stvmlu::solver::{endmembers, Solver, SolverConfig};
use stvmlu::synthgen::{generate_scene, procedural_library, SynthConfig};

fn main() -> stvmlu::Result<()> {
    let library = procedural_library(224, 5, 0)?;
    let scene = generate_scene(&library, &SynthConfig::default())?;
    let x = flatten(&scene.cube);
    let phi = build_candidates(&x, 5, 5, 0)?.phi;

    let cfg = SolverConfig::default();
    let mut solver = Solver::new(&x, &phi, 5, 64, 64, cfg.clone())?;
    println!("initial cost {:.2}", solver.initial_cost());
    println!(" iter      cost        gap        mu");
    while solver.state().iter < cfg.t_max {
        let rec = solver.step()?;
        if rec.iter % 10 == 1 || solver.converged() {
            println!(
                "{:5} {:10.2} {:10.2e} {:9.3}",
                rec.iter, rec.cost, rec.gap, rec.mu
            );
        }
        if solver.converged() {
            break;
        }
    }

    // `run` also normalizes abundances; here only the endmembers are scored
    let a = endmembers(&phi, &solver.state().w_stack);
    let result = Solver::new(&x, &phi, 5, 64, 64, cfg)?.run()?;
    assert_eq!(a, result.a);
    let report = evaluate(&result.a, &result.s, &scene.a_true, scene.s_true.values())?;
    println!("SAD per endmember {:.4?}", report.sad_per_endmember);
    println!(
        "mean SAD {:.4}, mean RMSE {:.4}",
        report.sad_mean, report.rmse_mean
    );
    Ok(())
}
