//! `ddest`: synthesise delay-Doppler datasets, run the OS-CFAR and
//! maximum-likelihood estimators, score them against ground truth and sweep
//! the bistatic angle.
//!
//! Every CSV written here starts with `#` lines echoing the effective
//! configuration and its SHA-256, so outputs can be traced to their inputs.

pub mod config;
pub mod error;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use delay_doppler::eval::{
    assign_targets, run_estimator, run_sweep, sweep_frame, Algorithm, FrameResult, SweepRow,
    RESULTS_HEADER,
};
use delay_doppler::io::{read_frames, write_frames};
use delay_doppler::signal_model::{ChannelFrame, PathParams, SphereTruth};
use delay_doppler::Error;
use num_complex::Complex64;
use rayon::prelude::*;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

pub const ESTIMATES_HEADER: &str = "frame,tau_s,alpha_hz,weight_re,weight_im,runtime_s";
pub const TRUTH_HEADER: &str = "frame,sphere,tau_s,alpha_hz";
pub const BENCH_HEADER: &str = "algorithm,frames,mean_s,min_s,max_s";

#[derive(Debug, Parser)]
#[command(name = "ddest", version, about = "Delay-Doppler estimation toolkit")]
pub struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Root seed, same as `--set general.seed=N`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output path; stdout when omitted (required by `synth`).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a CTF1 frame file and its ground-truth CSV.
    Synth {
        #[arg(long)]
        frames: Option<usize>,
        /// Ground-truth CSV; defaults to the output path with `.truth.csv`.
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
    /// Estimate paths in every frame of a CTF1 file.
    Run {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// cfar or mle.
        #[arg(long)]
        algorithm: Option<String>,
    },
    /// Score an estimates CSV against a ground-truth CSV.
    Eval {
        #[arg(long, value_name = "PATH")]
        estimates: PathBuf,
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        /// Identification boundary as a fraction of the resolution.
        #[arg(long)]
        boundary: Option<String>,
    },
    /// Detection probability and RMSE over bistatic angles.
    Sweep {
        /// Comma-separated angles in degrees.
        #[arg(long)]
        angles: Option<String>,
        /// Comma-separated algorithm names.
        #[arg(long)]
        algorithms: Option<String>,
        /// Frames per angle.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Per-frame runtime of each estimator.
    Bench {
        #[arg(long)]
        frames: Option<usize>,
    },
}

/// Builds the effective config: defaults, then `base` pairs, then the config
/// file, then `--set` and `--seed`.
fn effective_config(cli: &Cli, base: &[(String, String)]) -> CliResult<RunConfig> {
    let mut c = RunConfig::default();
    for (k, v) in base {
        c.set(k, v)?;
    }
    if let Some(path) = &cli.config {
        c.apply_file(path)?;
    }
    for s in &cli.set {
        c.set_assignment(s)?;
    }
    if let Some(seed) = cli.seed {
        c.set("general.seed", &seed.to_string())?;
    }
    Ok(c)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        b = b.num_threads(j);
    }
    let pool = b
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// `#` comment block: command, config hash, config echo, then `extra`.
pub fn comment_header(command: &str, config: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut s = format!("# ddest {command}\n# config_hash = {}\n", config.hash());
    for (k, v) in config.entries() {
        s.push_str(&format!("# config {k} = {v}\n"));
    }
    for (k, v) in extra {
        s.push_str(&format!("# {k} = {v}\n"));
    }
    s
}

/// Comment block of a CSV written by [`comment_header`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    pub config: Vec<(String, String)>,
    pub extra: BTreeMap<String, String>,
}

pub fn parse_header(text: &str) -> Header {
    let mut h = Header::default();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line[1..].trim();
        let (target, body) = match body.strip_prefix("config ") {
            Some(rest) => (true, rest),
            None => (false, body),
        };
        if let Some((k, v)) = body.split_once(" = ") {
            if target {
                h.config.push((k.trim().to_string(), v.trim().to_string()));
            } else {
                h.extra.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    h
}

fn open_out(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn write_text(out: Option<&Path>, text: &str) -> CliResult<()> {
    let name = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut w = open_out(out)?;
    w.write_all(text.as_bytes())
        .map_err(|e| CliError::io(&name, e))?;
    w.flush().map_err(|e| CliError::io(&name, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Data rows of a `#`-commented CSV whose header must equal `expected`.
/// An empty body yields no rows.
fn csv_rows(path: &Path, text: &str, expected: &str) -> CliResult<Vec<(u64, csv::StringRecord)>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let parse = |offset: u64, reason: String| CliError::at(path, Error::Parse { offset, reason });
    let headers = r.headers().map_err(|e| parse(0, e.to_string()))?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let got: Vec<&str> = headers.iter().collect();
    if got.join(",") != expected {
        return Err(parse(
            0,
            format!("expected columns {expected:?}, got {:?}", got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let offset = e.position().map(|p| p.byte()).unwrap_or(0);
            parse(offset, e.to_string())
        })?;
        let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
        rows.push((offset, rec));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(
    path: &Path,
    offset: u64,
    rec: &csv::StringRecord,
    i: usize,
) -> CliResult<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim().parse().map_err(|_| {
        CliError::at(
            path,
            Error::Parse {
                offset,
                reason: format!("bad value {raw:?} in column {}", i + 1),
            },
        )
    })
}

/// Writes `frames` synthetic frames and returns the ground truth per frame.
pub fn synthesize(
    config: &RunConfig,
    frames: usize,
) -> CliResult<(Vec<ChannelFrame>, Vec<[SphereTruth; 2]>)> {
    let sc = config.synth_config(frames)?;
    let scene = sc.scene_at(sc.angles_deg[0]);
    let data: Vec<(ChannelFrame, [SphereTruth; 2])> = (0..frames)
        .into_par_iter()
        .map(|n| sweep_frame(&sc, &scene, 0, n))
        .collect::<Result<_, Error>>()?;
    Ok(data.into_iter().unzip())
}

fn truth_csv(config: &RunConfig, truth: &[[SphereTruth; 2]]) -> String {
    let mut s = comment_header("synth", config, &[("frames", truth.len().to_string())]);
    s.push_str(TRUTH_HEADER);
    s.push('\n');
    for (n, spheres) in truth.iter().enumerate() {
        for (i, t) in spheres.iter().enumerate() {
            s.push_str(&format!("{n},{i},{},{}\n", t.delay, t.doppler));
        }
    }
    s
}

fn cmd_synth(cli: &Cli, frames: Option<usize>, truth: Option<&Path>) -> CliResult<()> {
    let mut config = effective_config(cli, &[])?;
    if let Some(f) = frames {
        config.set("synth.frames", &f.to_string())?;
    }
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("synth needs --out PATH for the frame file".into()))?;
    let truth_path = truth
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("truth.csv"));
    let n = config.frames("synth");
    let (data, gt) = with_pool(cli.jobs, || synthesize(&config, n))??;
    let grid = config.grid()?;
    let file = File::create(out).map_err(|e| CliError::io(out, e))?;
    write_frames(BufWriter::new(file), &grid, &data).map_err(|e| CliError::at(out, e))?;
    write_text(Some(&truth_path), &truth_csv(&config, &gt))
}

/// Estimates and per-frame runtime for every frame, in frame order.
pub fn estimate_frames(
    config: &RunConfig,
    algorithm: Algorithm,
    frames: &[ChannelFrame],
) -> CliResult<Vec<(Vec<PathParams>, f64)>> {
    let (cfar, mle) = (config.cfar()?, config.mle()?);
    frames
        .par_iter()
        .enumerate()
        .map(|(n, f)| {
            let start = Instant::now();
            let est = run_estimator(algorithm, f, &cfar, &mle).map_err(|e| CliError::Core {
                context: format!("frame {n}: "),
                source: e,
            })?;
            Ok((est, start.elapsed().as_secs_f64()))
        })
        .collect()
}

fn cmd_run(cli: &Cli, input: &Path, algorithm: Option<&str>) -> CliResult<()> {
    let mut config = effective_config(cli, &[])?;
    if let Some(a) = algorithm {
        config.set("run.algorithm", a)?;
    }
    let file = File::open(input).map_err(|e| CliError::io(input, e))?;
    let (grid, frames) =
        read_frames(std::io::BufReader::new(file)).map_err(|e| CliError::at(input, e))?;
    config.set("grid.k", &grid.subcarriers().to_string())?;
    config.set("grid.l", &grid.symbols().to_string())?;
    config.set("grid.delta_f", &grid.delta_f().to_string())?;
    config.set("grid.delta_t", &grid.delta_t().to_string())?;
    let alg = config.algorithm();
    let results = with_pool(cli.jobs, || estimate_frames(&config, alg, &frames))??;

    let timing = config.timing();
    let mut s = comment_header(
        "run",
        &config,
        &[
            ("algorithm", alg.to_string()),
            ("frames", frames.len().to_string()),
        ],
    );
    s.push_str(ESTIMATES_HEADER);
    s.push('\n');
    for (n, (paths, runtime)) in results.iter().enumerate() {
        let rt = if timing {
            runtime.to_string()
        } else {
            String::new()
        };
        for p in paths {
            s.push_str(&format!(
                "{n},{},{},{},{},{rt}\n",
                p.delay, p.doppler, p.weight.re, p.weight.im
            ));
        }
    }
    write_text(cli.out.as_deref(), &s)
}

/// Scores estimate rows against truth rows. Returns the results row.
pub fn evaluate(
    config: &RunConfig,
    algorithm: Algorithm,
    estimates: &[(usize, PathParams, Option<f64>)],
    truth: &[Vec<SphereTruth>],
) -> CliResult<SweepRow> {
    let grid = config.grid()?;
    let boundary = config.boundary()?;
    let mut per_frame: Vec<Vec<PathParams>> = vec![Vec::new(); truth.len()];
    let mut runtimes = vec![0.0; truth.len()];
    for &(n, p, rt) in estimates {
        let slot = per_frame.get_mut(n).ok_or_else(|| {
            CliError::Alignment(format!(
                "estimate for frame {n} but ground truth has {} frames",
                truth.len()
            ))
        })?;
        slot.push(p);
        if let Some(rt) = rt {
            runtimes[n] = rt;
        }
    }
    let results: Vec<FrameResult> = per_frame
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(n, (est, t))| {
            let mut r = assign_targets(est, t, boundary, &grid);
            r.frame = n;
            r.runtime_s = runtimes[n];
            r
        })
        .collect();
    Ok(SweepRow::from_results(
        config.angle_deg(),
        algorithm,
        config.los_gain_db(),
        &results,
    )?)
}

fn read_truth(path: &Path) -> CliResult<(Header, Vec<Vec<SphereTruth>>)> {
    let text = read_text(path)?;
    let header = parse_header(&text);
    let rows = csv_rows(path, &text, TRUTH_HEADER)?;
    let mut frames: Vec<Vec<SphereTruth>> = Vec::new();
    if let Some(n) = header.extra.get("frames") {
        let n: usize = n.parse().map_err(|_| {
            CliError::at(
                path,
                Error::Parse {
                    offset: 0,
                    reason: format!("bad frame count {n:?}"),
                },
            )
        })?;
        frames.resize(n, Vec::new());
    }
    for (offset, rec) in rows {
        let n: usize = field(path, offset, &rec, 0)?;
        let truth = SphereTruth {
            delay: field(path, offset, &rec, 2)?,
            doppler: field(path, offset, &rec, 3)?,
        };
        if n >= frames.len() {
            frames.resize(n + 1, Vec::new());
        }
        frames[n].push(truth);
    }
    Ok((header, frames))
}

type EstimateRow = (usize, PathParams, Option<f64>);

fn read_estimates(path: &Path) -> CliResult<(Header, Vec<EstimateRow>)> {
    let text = read_text(path)?;
    let header = parse_header(&text);
    let rows = csv_rows(path, &text, ESTIMATES_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (offset, rec) in rows {
        let runtime = match rec.get(5).map(str::trim) {
            None | Some("") => None,
            Some(_) => Some(field(path, offset, &rec, 5)?),
        };
        let weight = Complex64::new(field(path, offset, &rec, 3)?, field(path, offset, &rec, 4)?);
        let p = PathParams::new(
            weight,
            field(path, offset, &rec, 1)?,
            field(path, offset, &rec, 2)?,
        );
        out.push((field(path, offset, &rec, 0)?, p, runtime));
    }
    Ok((header, out))
}

fn cmd_eval(cli: &Cli, estimates: &Path, truth: &Path, boundary: Option<&str>) -> CliResult<()> {
    let (th, gt) = read_truth(truth)?;
    let (eh, est) = read_estimates(estimates)?;
    if let Some(n) = eh.extra.get("frames") {
        if *n != gt.len().to_string() {
            return Err(CliError::Alignment(format!(
                "estimates cover {n} frames, ground truth {}",
                gt.len()
            )));
        }
    }
    let mut config = effective_config(cli, &th.config)?;
    if let Some(b) = boundary {
        config.set("eval.boundary", b)?;
    }
    let algorithm = match eh.extra.get("algorithm") {
        Some(a) => a.parse()?,
        None => config.algorithm(),
    };
    let row = evaluate(&config, algorithm, &est, &gt)?;
    let mut s = comment_header("eval", &config, &[("algorithm", algorithm.to_string())]);
    s.push_str(RESULTS_HEADER);
    s.push('\n');
    s.push_str(&row.csv_line(config.timing()));
    s.push('\n');
    write_text(cli.out.as_deref(), &s)
}

/// Full sweep CSV text for `config`.
pub fn sweep_csv(config: &RunConfig) -> CliResult<String> {
    let sc = config.sweep_config(config.sweep_angles(), config.frames("sweep"))?;
    let report = run_sweep(&sc, &config.sweep_algorithms())?;
    let mut s = comment_header("sweep", config, &[]);
    s.push_str(RESULTS_HEADER);
    s.push('\n');
    for row in &report.rows {
        s.push_str(&row.csv_line(config.timing()));
        s.push('\n');
    }
    Ok(s)
}

fn cmd_sweep(
    cli: &Cli,
    angles: Option<&str>,
    algorithms: Option<&str>,
    frames: Option<usize>,
) -> CliResult<()> {
    let mut config = effective_config(cli, &[])?;
    if let Some(a) = angles {
        config.set("sweep.angles_deg", a)?;
    }
    if let Some(a) = algorithms {
        config.set("sweep.algorithms", a)?;
    }
    if let Some(f) = frames {
        config.set("sweep.frames", &f.to_string())?;
    }
    let s = with_pool(cli.jobs, || sweep_csv(&config))??;
    write_text(cli.out.as_deref(), &s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub algorithm: Algorithm,
    pub runtimes_s: Vec<f64>,
}

impl BenchRow {
    pub fn mean(&self) -> f64 {
        self.runtimes_s.iter().sum::<f64>() / self.runtimes_s.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.runtimes_s
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.runtimes_s
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Times every algorithm on `frames` synthetic frames, one frame at a time on
/// the calling thread so that runs do not compete for cores.
pub fn bench(config: &RunConfig, frames: usize) -> CliResult<Vec<BenchRow>> {
    if frames == 0 {
        return Err(CliError::Usage("bench needs at least one frame".into()));
    }
    let (data, _) = synthesize(config, frames)?;
    let (cfar, mle) = (config.cfar()?, config.mle()?);
    let mut rows: Vec<BenchRow> = Algorithm::ALL
        .iter()
        .map(|&algorithm| BenchRow {
            algorithm,
            runtimes_s: Vec::with_capacity(frames),
        })
        .collect();
    for frame in &data {
        for row in rows.iter_mut() {
            let start = Instant::now();
            run_estimator(row.algorithm, frame, &cfar, &mle)?;
            row.runtimes_s.push(start.elapsed().as_secs_f64());
        }
    }
    Ok(rows)
}

fn cmd_bench(cli: &Cli, frames: Option<usize>) -> CliResult<()> {
    let mut config = effective_config(cli, &[])?;
    if let Some(f) = frames {
        config.set("bench.frames", &f.to_string())?;
    }
    let n = config.frames("bench");
    let rows = with_pool(cli.jobs, || bench(&config, n))??;
    let mut s = comment_header("bench", &config, &[]);
    s.push_str(BENCH_HEADER);
    s.push('\n');
    for r in &rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.algorithm,
            r.runtimes_s.len(),
            r.mean(),
            r.min(),
            r.max()
        ));
    }
    write_text(cli.out.as_deref(), &s)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth { frames, truth } => cmd_synth(cli, *frames, truth.as_deref()),
        Command::Run { input, algorithm } => cmd_run(cli, input, algorithm.as_deref()),
        Command::Eval {
            estimates,
            truth,
            boundary,
        } => cmd_eval(cli, estimates, truth, boundary.as_deref()),
        Command::Sweep {
            angles,
            algorithms,
            frames,
        } => cmd_sweep(cli, angles.as_deref(), algorithms.as_deref(), *frames),
        Command::Bench { frames } => cmd_bench(cli, *frames),
    }
}
