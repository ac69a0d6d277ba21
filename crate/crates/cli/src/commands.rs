use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use spatialemb_core::perf::{measure, CSV_COLUMNS};
use spatialemb_core::rng::SeedStream;
use spatialemb_core::runconfig::RunConfig;
use spatialemb_core::selfcheck::{self, Options, PERMUTATION_TOL};
use spatialemb_core::sim::SceneSpec;
use spatialemb_core::{pipeline, sef, wav, FusedInput};

use crate::args::{BenchArgs, Cli, Command, EmbedArgs, ExtractArgs, SelftestArgs, SimulateArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spatialemb_core::Error),
    #[error("solo recording {0} does not exist")]
    SoloMissing(PathBuf),
    #[error("channel-permuted embedding differs by {diff:.3e} (order {order:?})")]
    PermutationMismatch { diff: f32, order: Vec<usize> },
    #[error("batch line {line}: {message}")]
    BadList { line: usize, message: String },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.class(),
            CliError::SoloMissing(_) => "SoloMissing",
            CliError::PermutationMismatch { .. } => "PermutationMismatch",
            CliError::BadList { .. } => "ConfigError",
            CliError::Write { .. } | CliError::Csv(_) => "Io",
        }
    }

    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_usage() => 2,
            CliError::SoloMissing(_) | CliError::BadList { .. } => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<ExitCode> {
    let raw = cli.config.merged()?;
    if let Command::Selftest(a) = &cli.command {
        return selftest(a);
    }
    let cfg = raw.resolve()?;
    match cli.command {
        Command::Extract(a) => extract(&a, &cfg),
        Command::Embed(a) => embed(&a, &cfg),
        Command::Simulate(a) => simulate(&a, &cli.config.seed),
        Command::Bench(a) => bench(&a, &cfg),
        Command::Selftest(_) => unreachable!("handled above"),
    }
    .map(|()| ExitCode::SUCCESS)
}

/// Write through a temporary file in the destination directory so a failure
/// never leaves a truncated output behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |source| CliError::Write { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

struct Job {
    mixture: PathBuf,
    solo: PathBuf,
    out: PathBuf,
}

fn read_list(path: &Path) -> Result<Vec<Job>> {
    let text = fs::read_to_string(path).map_err(spatialemb_core::Error::from)?;
    let mut jobs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [m, s, o] = parts[..] else {
            return Err(CliError::BadList { line: i + 1, message: "expected `mixture solo out`".into() });
        };
        jobs.push(Job { mixture: m.into(), solo: s.into(), out: o.into() });
    }
    Ok(jobs)
}

fn extract_one(job: &Job, cfg: &RunConfig) -> Result<()> {
    let mixture = wav::read_wav(&job.mixture)?;
    mixture.require_pipeline_rate()?;
    let solo = wav::read_wav(&job.solo)?;
    solo.require_pipeline_rate()?;
    let fused = pipeline::extract(&mixture, &solo, cfg)?;
    write_atomic(&job.out, &sef::encode(fused.tensor())?)
}

fn extract(a: &ExtractArgs, cfg: &RunConfig) -> Result<()> {
    let jobs = match &a.list {
        Some(list) => read_list(list)?,
        None => vec![Job {
            mixture: a.mixture.clone().expect("clap requires --mixture"),
            solo: a.solo.clone().expect("clap requires --solo"),
            out: a.out.clone().expect("clap requires --out"),
        }],
    };
    if let Some(job) = jobs.iter().find(|j| !j.solo.is_file()) {
        return Err(CliError::SoloMissing(job.solo.clone()));
    }
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..cfg.jobs.min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                if let Err(e) = extract_one(job, cfg) {
                    failures.lock().expect("no panics while held").push((i, e));
                }
            });
        }
    });
    let mut failures = failures.into_inner().expect("no panics while held");
    failures.sort_by_key(|f| f.0);
    let total = failures.len();
    let mut iter = failures.into_iter();
    match iter.next() {
        None => Ok(()),
        Some((_, first)) => {
            for (i, e) in iter {
                eprintln!("error class={} message={:?} input={}", e.class(), e.to_string(), jobs[i].mixture.display());
            }
            if total > 1 {
                eprintln!("{total} of {} inputs failed", jobs.len());
            }
            Err(first)
        }
    }
}

fn embed(a: &EmbedArgs, cfg: &RunConfig) -> Result<()> {
    let input = FusedInput::from_tensor(sef::read_feature(&a.features)?)?;
    let par = cfg.measure.parallelism;
    let out = pipeline::embed(&input, cfg, par)?;
    if a.compare {
        let mics = pipeline::input_mics(&input);
        let mut orders = vec![(0..mics).rev().collect::<Vec<_>>()];
        let mut s = SeedStream::new(cfg.seed);
        for _ in 0..3 {
            let mut p: Vec<usize> = (0..mics).collect();
            for i in (1..mics).rev() {
                p.swap(i, s.below(i + 1));
            }
            orders.push(p);
        }
        for order in orders {
            let permuted = pipeline::embed(&input.permute_mics(&order)?, cfg, par)?;
            let diff = out.max_abs_diff(&permuted).unwrap_or(f32::INFINITY);
            if diff > PERMUTATION_TOL {
                return Err(CliError::PermutationMismatch { diff, order });
            }
            eprintln!("compare order {order:?}: max diff {diff:.3e}");
        }
    }
    write_atomic(&a.out, &sef::encode(&out)?)
}

fn simulate(a: &SimulateArgs, seed: &Option<u64>) -> Result<()> {
    let mut scene = SceneSpec::load(&a.scene)?;
    if let Some(seed) = seed {
        scene.seed = *seed;
    }
    let files = pipeline::simulate(&scene)?;
    fs::create_dir_all(&a.out_dir).map_err(|source| CliError::Write { path: a.out_dir.clone(), source })?;
    write_atomic(&a.out_dir.join("mixture.wav"), &files.mixture_wav)?;
    write_atomic(&a.out_dir.join("solo.wav"), &files.solo_wav)?;
    write_atomic(&a.out_dir.join("mask.sef"), &files.mask_sef)
}

fn bench(a: &BenchArgs, cfg: &RunConfig) -> Result<()> {
    let specs = cfg.bench_specs()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for (name, spec) in &specs {
        let report = measure(spec, &cfg.measure)?;
        eprintln!("{name}: {} GFLOPs, status {}", report.flops_total as f64 / 1e9, report.status.name());
        w.write_record(report.csv_record(name, spec))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
    match &a.out {
        Some(path) => write_atomic(path, &bytes),
        None => io::stdout()
            .write_all(&bytes)
            .map_err(|source| CliError::Write { path: "<stdout>".into(), source }),
    }
}

fn selftest(a: &SelftestArgs) -> Result<ExitCode> {
    if a.latency_batch_seconds.is_nan() || a.latency_batch_seconds < 0.01 {
        return Err(spatialemb_core::Error::Config("latency batch must be at least 0.01 s".into()).into());
    }
    let opts = Options { latency_batch_seconds: a.latency_batch_seconds, ..Options::default() };
    let ids: Vec<u8> = if a.only.is_empty() { selfcheck::CHECKS.iter().map(|c| c.0).collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|id| !selfcheck::CHECKS.iter().any(|c| c.0 == **id)) {
        return Err(spatialemb_core::Error::Config(format!("no check with id {bad}")).into());
    }
    let start = Instant::now();
    let mut all = true;
    for id in ids {
        let outcome = selfcheck::run_check(id, &opts).expect("ids checked above");
        println!("{}", outcome.line());
        all &= outcome.passed;
    }
    println!("selftest {} in {:.1}s", if all { "passed" } else { "FAILED" }, start.elapsed().as_secs_f64());
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
