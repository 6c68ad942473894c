//! TV proximal step on a noisy piecewise-constant abundance map.

use rand_distr::{Distribution, Normal};
use stvmlu::seeds::rng;
use stvmlu::tv_prox::{fgp_denoise, tv_aniso, Grid, TvProxConfig};

fn main() -> stvmlu::Result<()> {
    let clean = Grid::from_fn(
        32,
        32,
        |i, j| if (i / 8 + j / 8) % 2 == 0 { 0.8 } else { 0.2 },
    );
    let mut g = rng(3);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let noisy = Grid::from_fn(32, 32, |i, j| clean.get(i, j) + noise.sample(&mut g));

    println!("weight  iters   TV       error vs clean");
    println!(
        "   -      -   {:8.2}  {:.4}",
        tv_aniso(&noisy),
        noisy.frobenius_distance(&clean)
    );
    for weight in [0.02, 0.05, 0.1, 0.5] {
        for inner_iters in [20, 200] {
            let cfg = TvProxConfig {
                weight,
                inner_iters,
                box_lower: 0.0,
            };
            let out = fgp_denoise(&noisy, &cfg, None)?;
            println!(
                "{weight:6} {inner_iters:5}  {:8.2}  {:.4}",
                tv_aniso(&out.grid),
                out.grid.frobenius_distance(&clean)
            );
        }
    }
    Ok(())
}
