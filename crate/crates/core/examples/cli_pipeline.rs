//! Drive the command-line front end in-process: synthesize, unmix and score
//! a small scene, then replay the run from its manifest.

fn main() {
    let out = std::env::temp_dir().join("stvmlu-cli-pipeline");
    let out = out.display().to_string();
    let code = stvmlu::cli::run([
        "stvmlu",
        "pipeline",
        "--rows",
        "16",
        "--cols",
        "16",
        "--endmembers",
        "3",
        "--seed",
        "4",
        "--out",
        &out,
    ]);
    println!("pipeline exit code {code}");
    let report = std::fs::read_to_string(format!("{out}/report.json")).unwrap();
    println!("{report}");

    let before = std::fs::read(format!("{out}/unmix/S.csv")).unwrap();
    let manifest = format!("{out}/manifest.json");
    let code = stvmlu::cli::run(["stvmlu", "replay", &manifest]);
    let after = std::fs::read(format!("{out}/unmix/S.csv")).unwrap();
    println!(
        "replay exit code {code}, abundances identical: {}",
        before == after
    );

    // a missing input is a usage error
    let code = stvmlu::cli::run([
        "stvmlu",
        "unmix",
        "--input",
        "/no/such/cube",
        "--phi",
        "x.csv",
    ]);
    println!("missing input exit code {code}");
}
