//! Read a delimited spectral library, build a scene from chosen columns and
//! round-trip the cube through the on-disk format.

use std::fs;

use stvmlu::hsi_data::{load_cube, load_library, save_cube, LoadOptions};
use stvmlu::synthgen::{generate_scene, AbundanceParams, SynthConfig};

fn main() -> stvmlu::Result<()> {
    let dir = std::env::temp_dir().join("stvmlu-library-io");
    fs::create_dir_all(&dir).unwrap();

    // tab separated, one row per band
    let mut text = String::from("# toy library\nwavelength\tsoil\twater\tgrass\tasphalt\n");
    for b in 0..60 {
        let w = 0.4 + 2.1 * b as f64 / 59.0;
        let soil = 0.1 + 0.15 * w;
        let water = 0.08 * (-2.0 * (w - 0.4)).exp();
        let grass = 0.05 + 0.5 / (1.0 + (-(w - 0.72) * 40.0).exp()) * (-(w - 0.9).powi(2)).exp();
        let asphalt = 0.09 + 0.01 * w;
        text.push_str(&format!(
            "{w:.4}\t{soil:.5}\t{water:.5}\t{grass:.5}\t{asphalt:.5}\n"
        ));
    }
    let lib_path = dir.join("toy.tsv");
    fs::write(&lib_path, text).unwrap();

    let library = load_library(&lib_path)?;
    println!(
        "{} signatures over {} bands: {:?}",
        library.len(),
        library.bands(),
        library.names
    );

    let cfg = SynthConfig {
        abundance: AbundanceParams {
            rows: 16,
            cols: 16,
            endmembers: 3,
            ..Default::default()
        },
        endmember_indices: Some(vec![0, 2, 3]),
        snr_db: Some(30.0),
        seed: 1,
    };
    let scene = generate_scene(&library, &cfg)?;
    let header = save_cube(&scene.cube, dir.join("cube"))?;
    let back = load_cube(&header, LoadOptions::default())?;
    assert_eq!(back.values(), scene.cube.values());
    println!(
        "cube {}x{}x{} written to {} and read back bit-exact",
        back.rows(),
        back.cols(),
        back.bands(),
        header.display()
    );
    Ok(())
}
