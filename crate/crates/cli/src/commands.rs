use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use multidyadic::certify::{certify_all, CertConfig, CertReport};
use multidyadic::grid::{sample_grid, GridShift, TorusSpace};
use multidyadic::haar::{haar_forward, MultiFunction};
use multidyadic::io::read_function;
use multidyadic::kernel::{KernelDesc, OperatorHandle, QuadratureConfig};
use multidyadic::representation::{
    fixed_grid_reconstruct, mc_reconstruct, truncated_representation, McOptions, ReconstructOptions,
    ReconstructionReport,
};
use multidyadic::shift::{saturated_random_provider, shift_apply, ShiftSpec};
use multidyadic::{par, Error};
use serde::Serialize;

use crate::config::{BenchConfig, CommandConfig, ExperimentConfig, ReconstructConfig};
use crate::CliError;

/// Exit status of a finished command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    ConditionFail,
    ToleranceFail,
}

impl Verdict {
    pub fn code(self) -> i32 {
        match self {
            Self::Pass => 0,
            Self::ConditionFail => 1,
            Self::ToleranceFail => 3,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    config_hash: String,
    workers: usize,
    verdict: &'static str,
    #[serde(flatten)]
    body: T,
}

fn emit<T: Serialize>(config: &ExperimentConfig, verdict: Verdict, name: &str, body: T) -> Result<(), CliError> {
    let env = Envelope {
        config,
        config_hash: config.hash(),
        workers: par::workers(),
        verdict: match verdict {
            Verdict::Pass => "pass",
            Verdict::ConditionFail => "fail",
            Verdict::ToleranceFail => "tolerance-exceeded",
        },
        body,
    };
    let json = serde_json::to_string_pretty(&env).map_err(|e| CliError::Internal(e.to_string()))?;
    match &config.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, json + "\n").map_err(io_err(&path))?;
        }
        None => match writeln!(std::io::stdout().lock(), "{json}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(CliError::Internal(e.to_string())),
            _ => {}
        },
    }
    Ok(())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

fn numeric(e: Error) -> CliError {
    match e {
        Error::InvalidSpace(_)
        | Error::UnknownKernel(_)
        | Error::Kernel(_)
        | Error::NonIntegrable(_)
        | Error::ShapeMismatch(_)
        | Error::Unsupported(_)
        | Error::ZeroGoodProbability { .. }
        | Error::Io(_)
        | Error::Json(_) => CliError::Usage(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    }
}

pub fn run(config: &ExperimentConfig) -> Result<Verdict, CliError> {
    let space = config.space.build()?;
    let descs = config.kernel.resolve(space.n())?;
    match &config.command {
        CommandConfig::Reconstruct(rc) => cmd_reconstruct(config, rc, &space, descs),
        CommandConfig::Certify(cc) => cmd_certify(config, cc, &space, descs),
        CommandConfig::Bench(bc) => cmd_bench(config, bc, &space, descs),
    }
}

fn load(path: &Option<std::path::PathBuf>, space: &TorusSpace, seed: u64) -> Result<MultiFunction, CliError> {
    match path {
        Some(p) => read_function(p, space).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        None => Ok(MultiFunction::random(space, seed)),
    }
}

#[derive(Serialize)]
struct ReconstructBody {
    reports: Vec<ReconstructionReport>,
}

pub fn cmd_reconstruct(
    config: &ExperimentConfig,
    rc: &ReconstructConfig,
    space: &TorusSpace,
    descs: Vec<KernelDesc>,
) -> Result<Verdict, CliError> {
    let op = OperatorHandle::build(space, descs, &QuadratureConfig::default()).map_err(numeric)?;
    let f = load(&rc.f, space, config.seed)?;
    let g = load(&rc.g, space, config.seed.wrapping_add(1))?;
    let grid = match rc.grid_seed {
        Some(s) => sample_grid(space, s),
        None => GridShift::standard(space),
    };
    let fixed = rc.fixed || (!rc.mc && rc.truncate.is_none());
    let mut reports = Vec::new();
    let mut verdict = Verdict::Pass;
    if fixed {
        let opts = ReconstructOptions {
            buckets: rc.buckets,
            cap: None,
        };
        let r = fixed_grid_reconstruct(&op, &f, &g, &grid, opts).map_err(numeric)?;
        if !(r.relative_error <= rc.tolerance) {
            verdict = Verdict::ToleranceFail;
        }
        reports.push(r);
    }
    if rc.mc {
        let opts = McOptions {
            samples: rc.samples,
            seed: config.seed,
            convention: rc.convention,
            buckets: rc.buckets,
        };
        let r = mc_reconstruct(&op, &f, &g, opts).map_err(numeric)?;
        let dev = (r.reconstructed - r.direct).abs();
        let se = r.stderr.unwrap_or(0.0);
        if !(dev <= rc.z_tolerance * se || dev <= rc.tolerance * r.direct.abs().max(1e-300)) {
            verdict = Verdict::ToleranceFail;
        }
        reports.push(r);
    }
    if let Some(i_max) = rc.truncate {
        reports.push(truncated_representation(&op, &f, &g, &grid, i_max).map_err(numeric)?);
    }
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for r in &reports {
            let path = dir.join(format!("{}_buckets.csv", r.mode));
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            r.write_buckets_csv(file).map_err(numeric)?;
        }
    }
    emit(config, verdict, "reconstruct", ReconstructBody { reports })?;
    Ok(verdict)
}

#[derive(Serialize)]
struct CertifyBody<'a> {
    report: &'a CertReport,
    worst_failure: Option<&'a multidyadic::certify::Condition>,
}

pub fn cmd_certify(
    config: &ExperimentConfig,
    cc: &CertConfig,
    space: &TorusSpace,
    descs: Vec<KernelDesc>,
) -> Result<Verdict, CliError> {
    let report = certify_all(space, descs, cc).map_err(numeric)?;
    let verdict = if report.passed { Verdict::Pass } else { Verdict::ConditionFail };
    eprintln!("{report}");
    emit(
        config,
        verdict,
        "certify",
        CertifyBody {
            report: &report,
            worst_failure: report.worst_failure(),
        },
    )?;
    Ok(verdict)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub operation: &'static str,
    pub n: usize,
    #[serde(rename = "L")]
    pub depth: u32,
    pub cells: usize,
    pub seconds: f64,
    pub cells_per_sec: f64,
}

fn time<R>(reps: usize, mut f: impl FnMut() -> R) -> f64 {
    std::hint::black_box(f());
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(f());
    }
    start.elapsed().as_secs_f64() / reps as f64
}

/// Times the hot paths over a depth sweep.
pub fn bench_rows(bc: &BenchConfig, base: &TorusSpace, descs: &[KernelDesc], seed: u64) -> Result<Vec<Timing>, CliError> {
    let n = base.n();
    let reps = bc.reps.max(1);
    let mut rows = Vec::new();
    for depth in bc.min_depth..=bc.max_depth {
        let space = base.clone().with_depth(depth).map_err(|e| CliError::Usage(e.to_string()))?;
        let cells = space.total_cells();
        let f = MultiFunction::random(&space, seed);
        let grid = sample_grid(&space, seed);
        let mut row = |operation, seconds: f64| {
            rows.push(Timing {
                operation,
                n,
                depth,
                cells,
                seconds,
                cells_per_sec: cells as f64 / seconds,
            })
        };
        row("haar_forward", time(reps, || haar_forward(&f, &grid).unwrap()));
        let op = OperatorHandle::build(&space, descs.to_vec(), &QuadratureConfig::default()).map_err(numeric)?;
        row("apply", time(reps, || op.apply(&f).unwrap()));
        let complexity = vec![(1, 1); n];
        let provider = saturated_random_provider(&space, &complexity, seed);
        let spec = ShiftSpec::cancellative(&space, &grid, complexity, provider).map_err(numeric)?;
        row("shift_apply", time(reps, || shift_apply(&spec, &f).unwrap()));
        let opts = McOptions {
            samples: 4,
            seed,
            convention: Default::default(),
            buckets: false,
        };
        row("mc_reconstruct", time(reps, || mc_reconstruct(&op, &f, &f, opts).unwrap()));
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[Timing], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Internal(e.to_string()))
}

pub fn cmd_bench(
    config: &ExperimentConfig,
    bc: &BenchConfig,
    space: &TorusSpace,
    descs: Vec<KernelDesc>,
) -> Result<Verdict, CliError> {
    if bc.min_depth > bc.max_depth {
        return Err(CliError::Usage("min depth exceeds max depth".into()));
    }
    let rows = bench_rows(bc, space, &descs, config.seed)?;
    match &config.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("bench.csv");
            write_csv(&rows, fs::File::create(&path).map_err(io_err(&path))?)?;
        }
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(Verdict::Pass)
}
