//! Reproducible experiment plumbing: scene bundles on disk, run manifests
//! and the parameter sweep.
//!
//! Everything written here is a pure function of the inputs and seeds.
//! Wall-clock measurements go to separate timing files so that reruns
//! produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, UnmixError};
use crate::hsi_data::{
    load_cube, read_matrix_csv, save_cube, write_matrix_csv, AbundanceImage, HsiCube, LoadOptions,
    Mat,
};
use crate::metrics::evaluate;
use crate::solver::{solve, SolverConfig, Termination};
use crate::synthgen::{AbundanceParams, SynthScene};

/// Paper grid for the TV weight.
pub const ALPHA_GRID: [f64; 7] = [0.001, 0.01, 0.02, 0.05, 0.1, 0.5, 1.0];
/// Paper grid for the sparsity weight.
pub const LAMBDA_GRID: [f64; 8] = [0.0001, 0.001, 0.01, 0.02, 0.05, 0.1, 0.5, 1.0];

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| UnmixError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| UnmixError::Format {
        what: "json",
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| UnmixError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| UnmixError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| UnmixError::Format {
        what: "json",
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| UnmixError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: its argument vector, the settings
/// it resolved to, and digests of every input file it read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, replayable as-is.
    pub argv: Vec<String>,
    /// Final value of every setting after flags, config file and defaults.
    pub settings: BTreeMap<String, String>,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
}

impl ExperimentManifest {
    pub fn new(command: &str, argv: Vec<String>, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv,
            settings: BTreeMap::new(),
            seed,
            inputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(self, &dir.join("manifest.json"))
    }
}

/// Named wall-clock durations in seconds, written next to the artifacts.
#[derive(Debug, Default)]
pub struct Timings {
    entries: BTreeMap<String, f64>,
}

impl Timings {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.entries.insert(name.into(), t.elapsed().as_secs_f64());
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&self.entries, &dir.join("timings.json"))
    }
}

/// Description of a synthetic scene stored next to its cubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub endmembers: usize,
    pub snr_db: Option<f64>,
    pub realized_snr_db: Option<f64>,
    pub seed: u64,
    pub endmember_indices: Vec<usize>,
    pub abundance: AbundanceParams,
    pub library: String,
}

/// A scene directory: `cube.{json,f64}`, `clean.{json,f64}`, `a_true.csv`,
/// `s_true.csv` and `scene.json`.
pub struct SceneBundle {
    pub info: SceneInfo,
    pub cube: HsiCube,
    pub a_true: Mat,
    pub s_true: AbundanceImage,
}

pub const SCENE_FILES: [&str; 5] = [
    "cube.json",
    "cube.f64",
    "a_true.csv",
    "s_true.csv",
    "scene.json",
];

pub fn save_scene(scene: &SynthScene, info: &SceneInfo, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    save_cube(&scene.cube, dir.join("cube"))?;
    save_cube(&scene.clean, dir.join("clean"))?;
    write_matrix_csv(&scene.a_true, dir.join("a_true.csv"))?;
    write_matrix_csv(scene.s_true.values(), dir.join("s_true.csv"))?;
    write_json(info, &dir.join("scene.json"))
}

pub fn load_scene(dir: &Path) -> Result<SceneBundle> {
    let info: SceneInfo = read_json(&dir.join("scene.json"))?;
    let cube = load_cube(dir.join("cube"), LoadOptions::default())?;
    let a_true = read_matrix_csv(dir.join("a_true.csv"))?;
    let s_true = AbundanceImage::new(
        info.rows,
        info.cols,
        read_matrix_csv(dir.join("s_true.csv"))?,
    )?;
    if a_true.shape() != (cube.bands(), info.endmembers) {
        return Err(UnmixError::Shape(format!(
            "a_true is {:?}, scene has {} bands and {} endmembers",
            a_true.shape(),
            cube.bands(),
            info.endmembers
        )));
    }
    Ok(SceneBundle {
        info,
        cube,
        a_true,
        s_true,
    })
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub layers: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub repeat: usize,
}

impl SweepCell {
    fn key(&self) -> (usize, u64, u64, usize) {
        // nonnegative floats order like their bit patterns
        (
            self.layers,
            self.alpha.to_bits(),
            self.lambda.to_bits(),
            self.repeat,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub layers: Vec<usize>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub repeats: usize,
}

impl SweepGrid {
    /// Cells in `(L, α, λ, repeat)` order.
    pub fn cells(&self) -> Result<Vec<SweepCell>> {
        if self.layers.is_empty()
            || self.alphas.is_empty()
            || self.lambdas.is_empty()
            || self.repeats == 0
        {
            return Err(UnmixError::InvalidParameter(
                "sweep grid is empty: need at least one layer count, alpha, lambda and repeat"
                    .into(),
            ));
        }
        if self
            .alphas
            .iter()
            .chain(&self.lambdas)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(UnmixError::InvalidParameter(
                "sweep weights must be finite and >= 0".into(),
            ));
        }
        let mut out = Vec::new();
        for &layers in &self.layers {
            for &alpha in &self.alphas {
                for &lambda in &self.lambdas {
                    for repeat in 0..self.repeats {
                        out.push(SweepCell {
                            layers,
                            alpha,
                            lambda,
                            repeat,
                        });
                    }
                }
            }
        }
        out.sort_by_key(SweepCell::key);
        out.dedup_by_key(|c| c.key());
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub seed: u64,
    pub sad_mean: f64,
    pub rmse_mean: f64,
    pub iterations: usize,
    /// `converged`, `max_iter`, or `error: <message>`.
    pub status: String,
    pub seconds: f64,
}

/// Inputs shared by every cell of a sweep.
pub struct SweepProblem<'a> {
    pub x: &'a Mat,
    pub phi: &'a Mat,
    pub a_ref: &'a Mat,
    pub s_ref: &'a Mat,
    pub rows: usize,
    pub cols: usize,
}

/// Runs every cell on the current rayon pool. Cell `repeat = r` uses solver
/// seed `seed + r`. Failures are recorded in the row, not propagated.
pub fn run_sweep(
    problem: &SweepProblem<'_>,
    grid: &SweepGrid,
    base: &SolverConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let cells = grid.cells()?;
    let m = problem.a_ref.ncols();
    let rows = cells
        .par_iter()
        .map(|&cell| {
            let cfg = SolverConfig {
                num_layers: cell.layers,
                alpha: cell.alpha,
                lambda: cell.lambda,
                seed: seed.wrapping_add(cell.repeat as u64),
                ..base.clone()
            };
            let t = Instant::now();
            let outcome = solve(problem.x, problem.phi, m, problem.rows, problem.cols, &cfg)
                .and_then(|r| {
                    let rep = evaluate(&r.a, &r.s, problem.a_ref, problem.s_ref)?;
                    Ok((r, rep))
                });
            let seconds = t.elapsed().as_secs_f64();
            match outcome {
                Ok((r, rep)) => SweepRow {
                    cell,
                    seed: cfg.seed,
                    sad_mean: rep.sad_mean,
                    rmse_mean: rep.rmse_mean,
                    iterations: r.iterations_run,
                    status: termination_label(r.termination).into(),
                    seconds,
                },
                Err(e) => SweepRow {
                    cell,
                    seed: cfg.seed,
                    sad_mean: f64::NAN,
                    rmse_mean: f64::NAN,
                    iterations: 0,
                    status: format!("error: {e}"),
                    seconds,
                },
            }
        })
        .collect();
    Ok(rows)
}

pub fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxIter => "max_iter",
    }
}

pub const SWEEP_HEADER: &str =
    "layers,alpha,lambda,repeat,seed,sad_mean,rmse_mean,iterations,status";

fn sweep_line(r: &SweepRow) -> String {
    // commas would break the column count
    let status = r.status.replace(',', ";");
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.cell.layers,
        r.cell.alpha,
        r.cell.lambda,
        r.cell.repeat,
        r.seed,
        r.sad_mean,
        r.rmse_mean,
        r.iterations,
        status
    )
}

fn parse_key(line: &str) -> Option<(usize, u64, u64, usize)> {
    let mut it = line.split(',');
    let cell = SweepCell {
        layers: it.next()?.parse().ok()?,
        alpha: it.next()?.parse().ok()?,
        lambda: it.next()?.parse().ok()?,
        repeat: it.next()?.parse().ok()?,
    };
    Some(cell.key())
}

/// Writes `rows` to a sorted CSV. Rows already in the file for other cells
/// are kept, rows for the same cell are replaced.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut lines: BTreeMap<(usize, u64, u64, usize), String> = BTreeMap::new();
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| UnmixError::io(path, e))?;
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let key = parse_key(line).ok_or_else(|| UnmixError::Format {
                what: "sweep csv",
                path: path.to_path_buf(),
                detail: format!("unreadable row at line {}", n + 1),
            })?;
            lines.insert(key, line.to_string());
        }
    }
    for r in rows {
        lines.insert(r.cell.key(), sweep_line(r));
    }
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for line in lines.values() {
        out.push_str(line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| UnmixError::io(path, e))
}

pub fn write_sweep_timings(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = String::from("layers,alpha,lambda,repeat,seconds\n");
    for r in rows {
        let c = r.cell;
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6}",
            c.layers, c.alpha, c.lambda, c.repeat, r.seconds
        );
    }
    fs::write(path, out).map_err(|e| UnmixError::io(path, e))
}

/// Mean over repeats of each `(L, α, λ)` cell, skipping failed repeats.
/// Repeat statistics of one `(L, α, λ)` cell. Deviations are the raw
/// population standard deviation over the finished repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: SweepCell,
    pub repeats_ok: usize,
    pub sad_mean: f64,
    pub sad_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<CellSummary> {
    type Samples = (SweepCell, Vec<f64>, Vec<f64>);
    let mut acc: BTreeMap<(usize, u64, u64), Samples> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.sad_mean.is_finite()) {
        let c = SweepCell {
            repeat: 0,
            ..r.cell
        };
        let e = acc
            .entry((c.layers, c.alpha.to_bits(), c.lambda.to_bits()))
            .or_insert((c, Vec::new(), Vec::new()));
        e.1.push(r.sad_mean);
        e.2.push(r.rmse_mean);
    }
    acc.into_values()
        .map(|(cell, sad, rmse)| {
            let (sad_mean, sad_std) = mean_std(&sad);
            let (rmse_mean, rmse_std) = mean_std(&rmse);
            CellSummary {
                cell,
                repeats_ok: sad.len(),
                sad_mean,
                sad_std,
                rmse_mean,
                rmse_std,
            }
        })
        .collect()
}
