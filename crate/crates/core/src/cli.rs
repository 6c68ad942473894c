//! Command-line front end.
//!
//! Every setting resolves as flag, then `key=value` config file, then the
//! built-in default. The resolved values and input digests are written to
//! `manifest.json` in each output directory; `replay` reruns a manifest.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or input error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baseline_nmf::{l12nmf_solve, BaselineConfig};
use crate::candidates::{build_candidates, CandidateMatrix};
use crate::error::UnmixError;
use crate::experiment::{
    aggregate, ensure_dir, load_scene, read_json, run_sweep, save_scene, termination_label,
    write_json, write_sweep_csv, write_sweep_timings, ExperimentManifest, SceneInfo, SweepGrid,
    SweepProblem, Timings, ALPHA_GRID, LAMBDA_GRID,
};
use crate::hsi_data::{
    flatten, load_cube, load_library, read_matrix_csv, write_matrix_csv, HsiCube, LoadOptions, Mat,
};
use crate::metrics::{evaluate, match_endmembers, sad};
use crate::solver::{solve, SolverConfig, UnmixResult, WeightInit};
use crate::synthgen::{generate_scene, procedural_library, AbundanceParams, SynthConfig};
use crate::tv_prox::{fgp_denoise, prox_objective, tv_aniso, Grid, TvProxConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<UnmixError> for CliError {
    fn from(e: UnmixError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "stvmlu",
    version,
    about = "Hyperspectral unmixing with sparsity and total-variation priors"
)]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// `key=value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic block-mixture scene.
    Synth(SynthArgs),
    /// Build the candidate endmember pool from repeated VCA and N-FINDR runs.
    Candidates(CandidateArgs),
    /// Run the multilayer unmixing solver.
    Unmix(UnmixArgs),
    /// Run the L1/2-NMF reference method.
    Baseline(BaselineArgs),
    /// Score estimated endmembers and abundances against a reference.
    Eval(EvalArgs),
    /// Run the solver over a grid of layer counts and weights.
    Sweep(SweepArgs),
    /// Apply the TV proximal operator to a single grid.
    Tvprox(TvproxArgs),
    /// Scene, candidates, unmixing and evaluation in one go.
    Pipeline(PipelineArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct SceneFlags {
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    endmembers: Option<usize>,
    /// Target SNR in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Leave the scene noiseless.
    #[arg(long)]
    no_noise: bool,
    /// Spectral library file; a procedural library is used when absent.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Library column indices to use as endmembers, comma separated.
    #[arg(long)]
    library_columns: Option<String>,
    /// Band count of the procedural library.
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    library_seed: Option<u64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    filter_radius: Option<usize>,
    #[arg(long)]
    purity: Option<f64>,
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// Number of weight layers between the pool and the endmembers [3].
    #[arg(long)]
    layers: Option<usize>,
    /// TV weight on the abundance maps [0.01].
    #[arg(long)]
    alpha: Option<f64>,
    /// L1/2 sparsity weight [0.01].
    #[arg(long)]
    lambda: Option<f64>,
    /// Initial penalty [0.01].
    #[arg(long)]
    mu0: Option<f64>,
    /// Penalty growth factor per iteration [1.1].
    #[arg(long)]
    rho: Option<f64>,
    /// Penalty cap [1000].
    #[arg(long)]
    mu_max: Option<f64>,
    /// Iteration limit [500].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stop once max |S - L| falls below this [1e-3].
    #[arg(long)]
    eps: Option<f64>,
    /// Weight of the sum-to-one row, 0 disables [20].
    #[arg(long)]
    asc_delta: Option<f64>,
    /// Inner iterations of the TV prox [20].
    #[arg(long)]
    tv_iters: Option<usize>,
    /// `candidates` or `random`.
    #[arg(long)]
    init: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneFlags,
}

#[derive(Debug, Args)]
struct CandidateArgs {
    /// Cube stem, header, or scene directory.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    endmembers: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    allow_negative: bool,
}

#[derive(Debug, Args)]
struct UnmixArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    phi: Option<PathBuf>,
    #[arg(long)]
    endmembers: Option<usize>,
    #[arg(long)]
    allow_negative: bool,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    endmembers: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    asc_delta: Option<f64>,
    #[arg(long)]
    allow_negative: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory holding `A.csv` and `S.csv` of an estimate.
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long)]
    a_est: Option<PathBuf>,
    #[arg(long)]
    s_est: Option<PathBuf>,
    /// Scene directory holding `a_true.csv` and `s_true.csv`.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    a_ref: Option<PathBuf>,
    #[arg(long)]
    s_ref: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Scene directory written by `synth`.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Candidate matrix; built from the scene when absent.
    #[arg(long)]
    phi: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated layer counts.
    #[arg(long = "layers")]
    layer_list: Option<String>,
    /// Comma-separated TV weights.
    #[arg(long)]
    alphas: Option<String>,
    /// Comma-separated sparsity weights.
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    asc_delta: Option<f64>,
    #[arg(long)]
    tv_iters: Option<usize>,
    #[arg(long)]
    init: Option<String>,
}

#[derive(Debug, Args)]
struct TvproxArgs {
    /// Matrix CSV holding the grid.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    weight: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Lower bound of the box constraint; unbounded when absent.
    #[arg(long)]
    lower: Option<f64>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Observed cube; a synthetic scene is generated when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Reference endmembers for `--input` data.
    #[arg(long)]
    a_ref: Option<PathBuf>,
    /// Reference abundances for `--input` data.
    #[arg(long)]
    s_ref: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    allow_negative: bool,
    #[command(flatten)]
    scene: SceneFlags,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

/// Flag names a config file may set.
const CONFIG_KEYS: &[&str] = &[
    "seed",
    "threads",
    "out",
    "rows",
    "cols",
    "endmembers",
    "snr",
    "no-noise",
    "library",
    "library-columns",
    "bands",
    "library-seed",
    "block-size",
    "filter-radius",
    "purity",
    "input",
    "phi",
    "runs",
    "allow-negative",
    "layers",
    "alpha",
    "lambda",
    "mu0",
    "rho",
    "mu-max",
    "max-iter",
    "eps",
    "asc-delta",
    "tv-iters",
    "init",
    "result",
    "a-est",
    "s-est",
    "scene",
    "a-ref",
    "s-ref",
    "alphas",
    "lambdas",
    "repeats",
    "in",
    "weight",
    "iters",
    "lower",
];

fn parse_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1))
        })?;
        let key = k.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!(
                "{}:{}: unknown key {key:?}",
                path.display(),
                n + 1
            )));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Resolves settings and remembers what each resolved to.
struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    fn from_file(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            resolved: BTreeMap::new(),
        }
    }

    fn lookup<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + std::fmt::Debug,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(text.parse::<T>().map_err(|_| {
                    CliError::Usage(format!("config value {text:?} is not valid for {key}"))
                })?),
                None => None,
            },
        };
        Ok(v)
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + std::fmt::Debug + std::fmt::Display,
    {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.into(), v.to_string());
        Ok(v)
    }

    fn optional<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + std::fmt::Debug + std::fmt::Display,
    {
        let v = self.lookup(key, flag)?;
        if let Some(v) = &v {
            self.resolved.insert(key.into(), v.to_string());
        }
        Ok(v)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        let v = flag.or_else(|| self.file.get(key).map(PathBuf::from));
        if let Some(p) = &v {
            self.resolved.insert(key.into(), p.display().to_string());
        }
        Ok(v)
    }

    fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        self.path(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required")))
    }

    fn switch(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        let v = flag || self.lookup::<bool>(key, None)?.unwrap_or(false);
        self.resolved.insert(key.into(), v.to_string());
        Ok(v)
    }
}

fn existing(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "input not found: {}",
            path.display()
        )))
    }
}

fn parse_list<T: FromStr>(key: &str, text: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| CliError::Usage(format!("--{key}: cannot parse {s:?}")))
        })
        .collect()
}

fn fmt_list<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Cube path from a stem, header, payload or a directory holding `cube.*`.
fn cube_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("cube.json")
    } else {
        p.to_path_buf()
    }
}

fn read_cube(
    p: &Path,
    allow_negative: bool,
    manifest: &mut ExperimentManifest,
) -> CliResult<HsiCube> {
    let path = cube_path(p);
    let header = path.with_extension("json");
    let payload = path.with_extension("f64");
    existing(&header)?;
    existing(&payload)?;
    let cube = load_cube(&path, LoadOptions { allow_negative })?;
    manifest.record_input(&header)?;
    manifest.record_input(&payload)?;
    Ok(cube)
}

fn read_matrix(p: &Path, manifest: &mut ExperimentManifest) -> CliResult<Mat> {
    existing(p)?;
    let m = read_matrix_csv(p)?;
    manifest.record_input(p)?;
    Ok(m)
}

fn solver_config(s: &mut Settings, f: SolverFlags, seed: u64) -> CliResult<SolverConfig> {
    let d = SolverConfig::default();
    let init = match s.get("init", f.init, "candidates".to_string())?.as_str() {
        "candidates" => WeightInit::Candidates,
        "random" => WeightInit::Random,
        other => {
            return Err(CliError::Usage(format!(
                "--init must be candidates or random, got {other:?}"
            )))
        }
    };
    let cfg = SolverConfig {
        num_layers: s.get("layers", f.layers, d.num_layers)?,
        alpha: s.get("alpha", f.alpha, d.alpha)?,
        lambda: s.get("lambda", f.lambda, d.lambda)?,
        mu0: s.get("mu0", f.mu0, d.mu0)?,
        rho: s.get("rho", f.rho, d.rho)?,
        mu_max: s.get("mu-max", f.mu_max, d.mu_max)?,
        t_max: s.get("max-iter", f.max_iter, d.t_max)?,
        eps_stop: s.get("eps", f.eps, d.eps_stop)?,
        eps_div: d.eps_div,
        asc_delta: s.get("asc-delta", f.asc_delta, d.asc_delta)?,
        tv_inner_iters: s.get("tv-iters", f.tv_iters, d.tv_inner_iters)?,
        seed,
        init,
    };
    cfg.validate()?;
    Ok(cfg)
}

struct SceneRequest {
    cfg: SynthConfig,
    library: Option<PathBuf>,
    bands: usize,
    library_seed: u64,
}

fn scene_request(s: &mut Settings, f: SceneFlags, seed: u64) -> CliResult<SceneRequest> {
    let d = AbundanceParams::default();
    let abundance = AbundanceParams {
        rows: s.get("rows", f.rows, d.rows)?,
        cols: s.get("cols", f.cols, d.cols)?,
        endmembers: s.get("endmembers", f.endmembers, d.endmembers)?,
        block_size: s.get("block-size", f.block_size, d.block_size)?,
        filter_radius: s.get("filter-radius", f.filter_radius, d.filter_radius)?,
        purity_threshold: s.get("purity", f.purity, d.purity_threshold)?,
    };
    let no_noise = s.switch("no-noise", f.no_noise)?;
    let snr = s.get("snr", f.snr, 20.0)?;
    if snr.is_nan() {
        return Err(CliError::Usage("--snr must be a number".into()));
    }
    let snr_db = (!no_noise && snr.is_finite()).then_some(snr);
    let columns = s
        .optional::<String>("library-columns", f.library_columns)?
        .map(|t| parse_list::<usize>("library-columns", &t))
        .transpose()?;
    Ok(SceneRequest {
        cfg: SynthConfig {
            abundance,
            snr_db,
            endmember_indices: columns,
            seed,
        },
        library: s.path("library", f.library)?,
        bands: s.get("bands", f.bands, 224)?,
        library_seed: s.get("library-seed", f.library_seed, 0)?,
    })
}

fn make_scene(
    req: &SceneRequest,
    dir: &Path,
    manifest: &mut ExperimentManifest,
) -> CliResult<SceneInfo> {
    let m = req.cfg.abundance.endmembers;
    let (library, library_name) = match &req.library {
        Some(p) => {
            existing(p)?;
            manifest.record_input(p)?;
            (load_library(p)?, p.display().to_string())
        }
        None => (
            procedural_library(req.bands, m, req.library_seed)?,
            format!("procedural(bands={}, seed={})", req.bands, req.library_seed),
        ),
    };
    let scene = generate_scene(&library, &req.cfg)?;
    let info = SceneInfo {
        rows: scene.s_true.rows(),
        cols: scene.s_true.cols(),
        bands: scene.cube.bands(),
        endmembers: m,
        snr_db: scene.snr_db,
        realized_snr_db: scene.snr_db.map(|_| scene.realized_snr_db()),
        seed: scene.seed,
        endmember_indices: req
            .cfg
            .endmember_indices
            .clone()
            .unwrap_or_else(|| (0..m).collect()),
        abundance: req.cfg.abundance.clone(),
        library: library_name,
    };
    save_scene(&scene, &info, dir)?;
    Ok(info)
}

#[derive(Serialize)]
struct CandidateInfo<'a> {
    endmembers: usize,
    runs: usize,
    k: usize,
    provenance: &'a [crate::candidates::CandidateTag],
}

fn write_candidates(c: &CandidateMatrix, phi_path: &Path) -> CliResult<()> {
    write_matrix_csv(&c.phi, phi_path)?;
    let info = CandidateInfo {
        endmembers: c.endmembers,
        runs: c.runs,
        k: c.k(),
        provenance: &c.provenance,
    };
    write_json(&info, &phi_path.with_extension("json"))?;
    Ok(())
}

#[derive(Serialize)]
struct UnmixSummary<'a> {
    termination: &'static str,
    iterations: usize,
    initial_cost: f64,
    final_cost: Option<f64>,
    config: &'a SolverConfig,
}

fn write_unmix(r: &UnmixResult, cfg: &SolverConfig, dir: &Path) -> CliResult<()> {
    write_matrix_csv(&r.a, dir.join("A.csv"))?;
    write_matrix_csv(&r.s, dir.join("S.csv"))?;
    let mut trace = String::from("iter,cost,gap,mu\n");
    for t in &r.trace {
        let _ = writeln!(trace, "{},{},{},{}", t.iter, t.cost, t.gap, t.mu);
    }
    let path = dir.join("trace.csv");
    fs::write(&path, trace).map_err(|e| UnmixError::Io { path, source: e })?;
    write_json(
        &UnmixSummary {
            termination: termination_label(r.termination),
            iterations: r.iterations_run,
            initial_cost: r.initial_cost,
            final_cost: r.cost_trace.last().copied(),
            config: cfg,
        },
        &dir.join("result.json"),
    )?;
    Ok(())
}

/// Per-endmember SAD, plus abundance RMSE when a reference is available.
#[derive(Debug, Serialize)]
struct EvalReport {
    permutation: Vec<usize>,
    sad_per_endmember: Vec<f64>,
    sad_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse_per_endmember: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse_mean: Option<f64>,
}

fn score(a_est: &Mat, s_est: &Mat, a_ref: &Mat, s_ref: Option<&Mat>) -> CliResult<EvalReport> {
    if let Some(s_ref) = s_ref {
        let r = evaluate(a_est, s_est, a_ref, s_ref)?;
        return Ok(EvalReport {
            permutation: r.permutation,
            sad_per_endmember: r.sad_per_endmember,
            sad_mean: r.sad_mean,
            rmse_per_endmember: Some(r.rmse_per_endmember),
            rmse_mean: Some(r.rmse_mean),
        });
    }
    let permutation = match_endmembers(a_est, a_ref)?;
    let sads = permutation
        .iter()
        .enumerate()
        .map(|(j, &e)| sad(a_est.column(e).as_slice(), a_ref.column(j).as_slice()))
        .collect::<crate::Result<Vec<_>>>()?;
    let mean = sads.iter().sum::<f64>() / sads.len() as f64;
    Ok(EvalReport {
        permutation,
        sad_per_endmember: sads,
        sad_mean: mean,
        rmse_per_endmember: None,
        rmse_mean: None,
    })
}

struct Context {
    argv: Vec<String>,
    settings: Settings,
    seed: u64,
    out: PathBuf,
}

impl Context {
    fn manifest(&self, command: &str) -> ExperimentManifest {
        ExperimentManifest::new(command, self.argv.clone(), self.seed)
    }

    fn finish(self, mut manifest: ExperimentManifest, timings: Timings) -> CliResult<()> {
        manifest.settings = self.settings.resolved;
        manifest.write(&self.out)?;
        timings.write(&self.out)?;
        Ok(())
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let argv = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stvmlu: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => {
            existing(p)?;
            parse_config_file(p)?
        }
        None => BTreeMap::new(),
    };
    let mut settings = Settings::from_file(file);
    let seed = settings.get("seed", cli.seed, 0u64)?;
    let threads = settings.optional("threads", cli.threads)?;
    let out = settings.get(
        "out",
        cli.out.map(|p| p.display().to_string()),
        "out".into(),
    )?;
    let ctx = Context {
        argv,
        settings,
        seed,
        out: PathBuf::from(out),
    };
    let go = move || match cli.command {
        Command::Synth(a) => cmd_synth(ctx, a),
        Command::Candidates(a) => cmd_candidates(ctx, a),
        Command::Unmix(a) => cmd_unmix(ctx, a),
        Command::Baseline(a) => cmd_baseline(ctx, a),
        Command::Eval(a) => cmd_eval(ctx, a),
        Command::Sweep(a) => cmd_sweep(ctx, a),
        Command::Tvprox(a) => cmd_tvprox(ctx, a),
        Command::Pipeline(a) => cmd_pipeline(ctx, a),
        Command::Replay(a) => cmd_replay(a),
    };
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(go),
        None => go(),
    }
}

fn cmd_synth(mut ctx: Context, a: SynthArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("synth");
    let mut timings = Timings::default();
    let req = scene_request(&mut ctx.settings, a.scene, ctx.seed)?;
    ensure_dir(&ctx.out)?;
    let info = timings.time("synth", || make_scene(&req, &ctx.out, &mut manifest))?;
    let snr = info
        .realized_snr_db
        .map_or_else(|| "noiseless".to_string(), |v| format!("SNR {v:.2} dB"));
    eprintln!(
        "scene {}x{}x{} with {} endmembers, {snr}",
        info.rows, info.cols, info.bands, info.endmembers
    );
    ctx.finish(manifest, timings)
}

/// `--out x.csv` names the matrix file; otherwise `--out` is a directory.
fn phi_target(out: &Path) -> (PathBuf, PathBuf) {
    if out.extension().is_some_and(|e| e == "csv") {
        let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
        (
            out.to_path_buf(),
            if dir.as_os_str().is_empty() {
                ".".into()
            } else {
                dir
            },
        )
    } else {
        (out.join("phi.csv"), out.to_path_buf())
    }
}

fn cmd_candidates(mut ctx: Context, a: CandidateArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("candidates");
    let mut timings = Timings::default();
    let s = &mut ctx.settings;
    let input = s.required_path("input", a.input)?;
    let allow_negative = s.switch("allow-negative", a.allow_negative)?;
    let m = s.get("endmembers", a.endmembers, 5)?;
    let runs = s.get("runs", a.runs, 5)?;
    let cube = read_cube(&input, allow_negative, &mut manifest)?;
    let x = flatten(&cube);
    let c = timings.time("candidates", || build_candidates(&x, m, runs, ctx.seed))?;
    let (phi_path, dir) = phi_target(&ctx.out);
    ensure_dir(&dir)?;
    write_candidates(&c, &phi_path)?;
    ctx.out = dir;
    ctx.finish(manifest, timings)
}

fn cmd_unmix(mut ctx: Context, a: UnmixArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("unmix");
    let mut timings = Timings::default();
    let s = &mut ctx.settings;
    let input = s.required_path("input", a.input)?;
    let phi_path = s.required_path("phi", a.phi)?;
    let allow_negative = s.switch("allow-negative", a.allow_negative)?;
    let m = s.get("endmembers", a.endmembers, 5)?;
    let cfg = solver_config(s, a.solver, ctx.seed)?;
    let cube = read_cube(&input, allow_negative, &mut manifest)?;
    let phi = read_matrix(&phi_path, &mut manifest)?;
    let x = flatten(&cube);
    let r = timings.time("solve", || {
        solve(&x, &phi, m, cube.rows(), cube.cols(), &cfg)
    })?;
    ensure_dir(&ctx.out)?;
    write_unmix(&r, &cfg, &ctx.out)?;
    eprintln!(
        "{} after {} iterations",
        termination_label(r.termination),
        r.iterations_run
    );
    ctx.finish(manifest, timings)
}

fn cmd_baseline(mut ctx: Context, a: BaselineArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("baseline");
    let mut timings = Timings::default();
    let s = &mut ctx.settings;
    let d = BaselineConfig::default();
    let input = s.required_path("input", a.input)?;
    let allow_negative = s.switch("allow-negative", a.allow_negative)?;
    let cfg = BaselineConfig {
        endmembers: s.get("endmembers", a.endmembers, d.endmembers)?,
        lambda: s.get("lambda", a.lambda, d.lambda)?,
        t_max: s.get("max-iter", a.max_iter, d.t_max)?,
        eps_div: d.eps_div,
        seed: ctx.seed,
        asc_delta: s.get("asc-delta", a.asc_delta, d.asc_delta)?,
    };
    let cube = read_cube(&input, allow_negative, &mut manifest)?;
    let x = flatten(&cube);
    let r = timings.time("baseline", || l12nmf_solve(&x, &cfg))?;
    ensure_dir(&ctx.out)?;
    write_matrix_csv(&r.a, ctx.out.join("A.csv"))?;
    write_matrix_csv(&r.s, ctx.out.join("S.csv"))?;
    let mut trace = String::from("iter,cost\n");
    for (i, c) in r.cost_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{}", i + 1, c);
    }
    let path = ctx.out.join("trace.csv");
    fs::write(&path, trace).map_err(|e| UnmixError::Io { path, source: e })?;
    write_json(
        &serde_json::json!({
            "method": "L1/2-NMF (reimplementation)",
            "iterations": r.cost_trace.len(),
            "final_cost": r.cost_trace.last(),
            "config": cfg,
        }),
        &ctx.out.join("result.json"),
    )?;
    ctx.finish(manifest, timings)
}

fn cmd_eval(mut ctx: Context, a: EvalArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("eval");
    let timings = Timings::default();
    let s = &mut ctx.settings;
    let result = s.path("result", a.result)?;
    let scene = s.path("scene", a.scene)?;
    let pick = |s: &mut Settings, key: &str, flag, dir: &Option<PathBuf>, name: &str| {
        s.path(key, flag)
            .map(|p| p.or_else(|| dir.as_ref().map(|d| d.join(name))))
    };
    let a_est = pick(s, "a-est", a.a_est, &result, "A.csv")?
        .ok_or_else(|| CliError::Usage("need --a-est or --result".into()))?;
    let s_est = pick(s, "s-est", a.s_est, &result, "S.csv")?;
    let a_ref = pick(s, "a-ref", a.a_ref, &scene, "a_true.csv")?
        .ok_or_else(|| CliError::Usage("need --a-ref or --scene".into()))?;
    let s_ref = pick(s, "s-ref", a.s_ref, &scene, "s_true.csv")?;
    let a_est = read_matrix(&a_est, &mut manifest)?;
    let a_ref = read_matrix(&a_ref, &mut manifest)?;
    let (s_est, s_ref) = match (s_est, s_ref) {
        (Some(e), Some(r)) => (
            Some(read_matrix(&e, &mut manifest)?),
            Some(read_matrix(&r, &mut manifest)?),
        ),
        _ => (None, None),
    };
    let report = match (&s_est, &s_ref) {
        (Some(e), Some(r)) => score(&a_est, e, &a_ref, Some(r))?,
        _ => score(&a_est, &Mat::zeros(0, 0), &a_ref, None)?,
    };
    ensure_dir(&ctx.out)?;
    write_json(&report, &ctx.out.join("report.json"))?;
    eprintln!("mean SAD {:.4}", report.sad_mean);
    ctx.finish(manifest, timings)
}

fn cmd_sweep(mut ctx: Context, a: SweepArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("sweep");
    let mut timings = Timings::default();
    let s = &mut ctx.settings;
    let scene_dir = s.required_path("scene", a.scene)?;
    let phi_path = s.path("phi", a.phi)?;
    let runs = s.get("runs", a.runs, 5)?;
    let layers: Vec<usize> = parse_list("layers", &s.get("layers", a.layer_list, "3".into())?)?;
    let alphas: Vec<f64> =
        parse_list("alphas", &s.get("alphas", a.alphas, fmt_list(&ALPHA_GRID))?)?;
    let lambdas: Vec<f64> = parse_list(
        "lambdas",
        &s.get("lambdas", a.lambdas, fmt_list(&LAMBDA_GRID))?,
    )?;
    let repeats = s.get("repeats", a.repeats, 10)?;
    let grid = SweepGrid {
        layers,
        alphas,
        lambdas,
        repeats,
    };
    grid.cells()?;
    let base = solver_config(
        s,
        SolverFlags {
            layers: None,
            alpha: None,
            lambda: None,
            mu0: a.mu0,
            rho: a.rho,
            mu_max: a.mu_max,
            max_iter: a.max_iter,
            eps: a.eps,
            asc_delta: a.asc_delta,
            tv_iters: a.tv_iters,
            init: a.init,
        },
        ctx.seed,
    )?;
    // per-cell values, not base settings
    for k in ["alpha", "lambda"] {
        s.resolved.remove(k);
    }
    s.resolved.insert("layers".into(), fmt_list(&grid.layers));

    for name in crate::experiment::SCENE_FILES {
        let p = scene_dir.join(name);
        existing(&p)?;
        manifest.record_input(&p)?;
    }
    let scene = load_scene(&scene_dir)?;
    let x = flatten(&scene.cube);
    let phi = match &phi_path {
        Some(p) => read_matrix(p, &mut manifest)?,
        None => {
            timings
                .time("candidates", || {
                    build_candidates(&x, scene.info.endmembers, runs, ctx.seed)
                })?
                .phi
        }
    };
    let problem = SweepProblem {
        x: &x,
        phi: &phi,
        a_ref: &scene.a_true,
        s_ref: scene.s_true.values(),
        rows: scene.info.rows,
        cols: scene.info.cols,
    };
    let rows = timings.time("sweep", || run_sweep(&problem, &grid, &base, ctx.seed))?;
    ensure_dir(&ctx.out)?;
    write_sweep_csv(&rows, &ctx.out.join("sweep.csv"))?;
    write_sweep_timings(&rows, &ctx.out.join("sweep_timings.csv"))?;

    let mut summary =
        String::from("layers,alpha,lambda,repeats_ok,sad_mean,sad_std,rmse_mean,rmse_std\n");
    for a in aggregate(&rows) {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{}",
            a.cell.layers,
            a.cell.alpha,
            a.cell.lambda,
            a.repeats_ok,
            a.sad_mean,
            a.sad_std,
            a.rmse_mean,
            a.rmse_std
        );
    }
    let path = ctx.out.join("summary.csv");
    fs::write(&path, summary).map_err(|e| UnmixError::Io { path, source: e })?;
    let failed = rows
        .iter()
        .filter(|r| r.status.starts_with("error"))
        .count();
    eprintln!("{} cells, {failed} failed", rows.len());
    ctx.finish(manifest, timings)
}

fn cmd_tvprox(mut ctx: Context, a: TvproxArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("tvprox");
    let timings = Timings::default();
    let s = &mut ctx.settings;
    let input = s.required_path("in", a.input)?;
    let weight = s.get("weight", a.weight, 0.1)?;
    let iters = s.get("iters", a.iters, 20)?;
    let lower = s.optional("lower", a.lower)?.unwrap_or(f64::NEG_INFINITY);
    let m = read_matrix(&input, &mut manifest)?;
    let (rows, cols) = m.shape();
    let b = Grid::from_fn(rows, cols, |i, j| m[(i, j)]);
    let cfg = TvProxConfig {
        weight,
        inner_iters: iters,
        box_lower: lower,
    };
    let r = fgp_denoise(&b, &cfg, None)?;
    ensure_dir(&ctx.out)?;
    let z = Mat::from_fn(rows, cols, |i, j| r.grid.get(i, j));
    write_matrix_csv(&z, ctx.out.join("grid.csv"))?;
    write_json(
        &serde_json::json!({
            "weight": weight,
            "iters": iters,
            "tv_in": tv_aniso(&b),
            "tv_out": tv_aniso(&r.grid),
            "objective_at_input": prox_objective(&b, &b, weight),
            "objective": r.objective,
        }),
        &ctx.out.join("tvprox.json"),
    )?;
    ctx.finish(manifest, timings)
}

fn cmd_pipeline(mut ctx: Context, a: PipelineArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("pipeline");
    let mut timings = Timings::default();
    let s = &mut ctx.settings;
    let input = s.path("input", a.input)?;
    let runs = s.get("runs", a.runs, 5)?;
    let allow_negative = s.switch("allow-negative", a.allow_negative)?;
    let cfg = solver_config(s, a.solver, ctx.seed)?;
    ensure_dir(&ctx.out)?;

    let supplied = input.is_some();
    let (cube, a_ref, s_ref, m) = match input {
        Some(p) => {
            let m = s.get("endmembers", a.scene.endmembers, 5)?;
            let cube = read_cube(&p, allow_negative, &mut manifest)?;
            let a_ref = s.path("a-ref", a.a_ref)?;
            let s_ref = s.path("s-ref", a.s_ref)?;
            let a_ref = a_ref.map(|p| read_matrix(&p, &mut manifest)).transpose()?;
            let s_ref = s_ref.map(|p| read_matrix(&p, &mut manifest)).transpose()?;
            (cube, a_ref, s_ref, m)
        }
        None => {
            let req = scene_request(s, a.scene, ctx.seed)?;
            let dir = ctx.out.join("scene");
            timings.time("synth", || make_scene(&req, &dir, &mut manifest))?;
            let scene = load_scene(&dir)?;
            let m = scene.info.endmembers;
            (
                scene.cube,
                Some(scene.a_true),
                Some(scene.s_true.into_values()),
                m,
            )
        }
    };
    let x = flatten(&cube);
    let c = timings.time("candidates", || build_candidates(&x, m, runs, ctx.seed))?;
    let cand_dir = ctx.out.join("candidates");
    ensure_dir(&cand_dir)?;
    write_candidates(&c, &cand_dir.join("phi.csv"))?;

    let r = timings.time("solve", || {
        solve(&x, &c.phi, m, cube.rows(), cube.cols(), &cfg)
    })?;
    let unmix_dir = ctx.out.join("unmix");
    ensure_dir(&unmix_dir)?;
    write_unmix(&r, &cfg, &unmix_dir)?;

    let report = match &a_ref {
        Some(ar) => Some(score(&r.a, &r.s, ar, s_ref.as_ref())?),
        None => None,
    };
    write_json(
        &serde_json::json!({
            "termination": termination_label(r.termination),
            "iterations": r.iterations_run,
            "final_cost": r.cost_trace.last(),
            "input_scaling": if supplied { "none, values used as loaded" } else { "synthetic" },
            "metrics": report,
        }),
        &ctx.out.join("report.json"),
    )?;
    if let Some(rep) = &report {
        eprintln!(
            "mean SAD {:.4} after {} iterations",
            rep.sad_mean, r.iterations_run
        );
    }
    ctx.finish(manifest, timings)
}

fn cmd_replay(a: ReplayArgs) -> CliResult<()> {
    existing(&a.manifest)?;
    let m: ExperimentManifest = read_json(&a.manifest)?;
    let mut args = vec!["stvmlu".to_string()];
    args.extend(m.argv);
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Usage(e.to_string()))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage(
            "a manifest cannot replay another replay".into(),
        ));
    }
    dispatch(cli, args.into_iter().skip(1).collect())
}
