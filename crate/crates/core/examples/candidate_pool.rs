//! Build the candidate pool from repeated VCA and N-FINDR runs and see how
//! close its best columns come to the true endmembers.

use stvmlu::candidates::{build_candidates, Extractor};
use stvmlu::hsi_data::flatten;
use stvmlu::metrics::sad;
use stvmlu::synthgen::{generate_scene, procedural_library, SynthConfig};

fn main() -> stvmlu::Result<()> {
    let library = procedural_library(224, 5, 0)?;
    let scene = generate_scene(&library, &SynthConfig::default())?;
    let x = flatten(&scene.cube);

    let pool = build_candidates(&x, 5, 5, 0)?;
    let vca = pool
        .provenance
        .iter()
        .filter(|t| t.method == Extractor::Vca)
        .count();
    println!(
        "K = {} columns ({vca} from VCA, {} from N-FINDR)",
        pool.k(),
        pool.k() - vca
    );

    for (j, truth) in scene.a_true.column_iter().enumerate() {
        let (k, angle) = pool
            .phi
            .column_iter()
            .enumerate()
            .map(|(k, c)| (k, sad(c.as_slice(), truth.as_slice()).unwrap()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let tag = &pool.provenance[k];
        println!(
            "endmember {j}: closest candidate {k} ({:?} run {}, pixel {}) at {angle:.4} rad",
            tag.method, tag.run, tag.pixel
        );
    }
    Ok(())
}
