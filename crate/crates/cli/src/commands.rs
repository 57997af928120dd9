use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use blindpair::estimator::{estimate_marginals, MarginalEstimate};
use blindpair::pillow::{self, PillowConfig};
use blindpair::sample::{read_pairs_csv, EvalGrid, UnorderedPairSample};
use blindpair::sim::{self, GeneratorSpec, StudySpec};
use blindpair::{kstest, Error, SCHEMA_VERSION};
use log::info;

use crate::{EstimateArgs, Format, InputArgs, PillowArgs, Scenario, SimulateArgs, TestArgs};

#[derive(Debug)]
pub struct CliError {
    context: String,
    source: Error,
}

impl CliError {
    fn new(context: impl Into<String>, source: impl Into<Error>) -> Self {
        Self {
            context: context.into(),
            source: source.into(),
        }
    }

    /// 2 usage/input, 3 malformed data, 4 cache mismatch, 5 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self.source {
            Error::MalformedRow { .. } | Error::BadValue(_) => 3,
            Error::CacheMismatch { .. } => 4,
            Error::NumericalNonconvergence { .. } => 5,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.context, self.source)
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_sample(input: &InputArgs) -> CliResult<UnorderedPairSample> {
    let context = || format!("reading {}", input.input.display());
    if !input.delimiter.is_ascii() {
        return Err(CliError::new(
            context(),
            Error::InvalidConfig(format!("delimiter {:?} is not ASCII", input.delimiter)),
        ));
    }
    let file = fs::File::open(&input.input).map_err(|e| CliError::new(context(), e))?;
    read_pairs_csv(io::BufReader::new(file), input.delimiter as u8).map_err(|e| CliError::new(context(), e))
}

/// Where a command writes its machine-readable output.
enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    fn from_arg(arg: Option<&Path>, default: Sink) -> Sink {
        match arg {
            Some(p) if p == Path::new("-") => Sink::Stdout,
            Some(p) => Sink::File(p.to_path_buf()),
            None => default,
        }
    }

    /// Files are written to a temporary sibling and renamed into place, so a
    /// failed write leaves nothing behind.
    fn write(&self, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
        match self {
            Sink::Stdout => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                body(&mut lock)
                    .and_then(|_| lock.flush())
                    .map_err(|e| CliError::new("writing to stdout", e))
            }
            Sink::File(path) => {
                let context = || format!("writing {}", path.display());
                let dir = match path.parent() {
                    Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                    _ => PathBuf::from("."),
                };
                fs::create_dir_all(&dir).map_err(|e| CliError::new(context(), e))?;
                let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::new(context(), e))?;
                {
                    let mut out = io::BufWriter::new(tmp.as_file_mut());
                    body(&mut out)
                        .and_then(|_| out.flush())
                        .map_err(|e| CliError::new(context(), e))?;
                }
                tmp.persist(path).map_err(|e| CliError::new(context(), e.error))?;
                info!("wrote {}", path.display());
                Ok(())
            }
        }
    }
}

fn write_json(sink: &Sink, value: &serde_json::Value) -> CliResult<()> {
    sink.write(|out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)
    })
}

fn read_grid_file(path: &Path) -> CliResult<EvalGrid> {
    let context = || format!("reading grid {}", path.display());
    let text = fs::read_to_string(path).map_err(|e| CliError::new(context(), e))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        let value: f64 = field.parse().map_err(|_| {
            CliError::new(
                context(),
                Error::MalformedRow {
                    line: i as u64 + 1,
                    reason: format!("not a number: {field:?}"),
                },
            )
        })?;
        points.push(value);
    }
    EvalGrid::from_unsorted(points).map_err(|e| CliError::new(context(), e))
}

pub fn estimate(args: &EstimateArgs) -> CliResult<()> {
    let sample = load_sample(&args.input)?;
    let grid = if args.grid == "auto" {
        sample.pooled_grid()
    } else {
        read_grid_file(Path::new(&args.grid))?
    };
    let mut est: MarginalEstimate = estimate_marginals(&sample, &grid);
    if args.isotonic {
        est = est.isotonized();
    }
    info!(
        "n = {}, grid points = {}, truncated = {}",
        sample.len(),
        est.len(),
        est.truncated.iter().filter(|&&t| t).count()
    );
    match args.format {
        Format::Json => {
            let sink = Sink::from_arg(args.output.as_deref(), Sink::Stdout);
            write_json(&sink, &est.to_json(sample.len()))
        }
        Format::Csv | Format::Text => {
            let sibling = args.input.input.with_extension("estimate.csv");
            let sink = Sink::from_arg(args.output.as_deref(), Sink::File(sibling));
            sink.write(|out| est.write_csv(out))
        }
    }
}

fn pillow_config(m: usize, reps: usize, seed: u64) -> CliResult<PillowConfig> {
    PillowConfig::new(m, reps, seed).map_err(|e| CliError::new("pillow configuration", e))
}

fn load_reference(cfg: &PillowConfig, cache_dir: &Path) -> CliResult<pillow::PillowSample> {
    let (sample, _hit) =
        pillow::load_or_generate(cfg, cache_dir).map_err(|e| CliError::new("pillow reference", e))?;
    Ok(sample)
}

pub fn test(args: &TestArgs) -> CliResult<()> {
    let sample = load_sample(&args.input)?;
    let cfg = pillow_config(args.pillow.m, args.pillow.reps, args.seed)?;
    let statistic = kstest::sup_statistic(&sample);
    let reference = load_reference(&cfg, &args.pillow.cache_dir)?;
    let report = kstest::report_from_reference(statistic, sample.len(), &reference, &args.alphas)
        .map_err(|e| CliError::new("test report", e))?;

    eprintln!("statistic = {:.5}", report.statistic);
    eprintln!("p-value   = {:.5}", report.p_value);
    for q in &report.quantiles {
        eprintln!(
            "alpha = {:<5} quantile = {:.4}  {}",
            q.alpha,
            q.quantile,
            if q.reject { "reject" } else { "do not reject" }
        );
    }
    let value = serde_json::to_value(&report).expect("report serializes");
    write_json(&Sink::from_arg(args.output.as_deref(), Sink::Stdout), &value)
}

pub fn pillow_quantiles(args: &PillowArgs) -> CliResult<()> {
    let cfg = pillow_config(args.pillow.m, args.pillow.reps, args.seed)?;
    let reference = load_reference(&cfg, &args.pillow.cache_dir)?;
    let table = pillow::quantiles(&reference, &args.alphas).map_err(|e| CliError::new("quantiles", e))?;
    let sink = Sink::from_arg(args.output.as_deref(), Sink::Stdout);
    match args.format {
        Format::Json => write_json(&sink, &table.to_json(&cfg)),
        Format::Text | Format::Csv => {
            let text = table.to_text(&cfg);
            sink.write(|out| out.write_all(text.as_bytes()))
        }
    }
}

fn study_spec(args: &SimulateArgs, gen1: GeneratorSpec, gen2: GeneratorSpec, n: usize, reps: usize) -> CliResult<StudySpec> {
    let grid = EvalGrid::linspace(0.0, 1.0, args.grid_points).map_err(|e| CliError::new("grid", e))?;
    let spec = StudySpec {
        gen1,
        gen2,
        n: args.n.unwrap_or(n),
        reps: args.reps.unwrap_or(reps),
        seed: args.seed,
        grid,
        s_interval: None,
    };
    spec.validate().map_err(|e| CliError::new("study configuration", e))?;
    Ok(spec)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let json_sink = Sink::from_arg(args.output.as_deref(), Sink::Stdout);
    match args.scenario {
        Scenario::UniformSquare | Scenario::BetaBeta => {
            let (name, gen1, gen2, n, interval) = match args.scenario {
                Scenario::UniformSquare => (
                    "uniform-square",
                    GeneratorSpec::Uniform,
                    GeneratorSpec::Power { k: 2.0 },
                    200,
                    Some((0.3, 0.7)),
                ),
                _ => (
                    "beta-beta",
                    GeneratorSpec::Beta { a: 4.0, b: 4.0 },
                    GeneratorSpec::Beta { a: 0.25, b: 0.25 },
                    2000,
                    None,
                ),
            };
            let mut spec = study_spec(args, gen1, gen2, n, 1)?;
            spec.s_interval = interval;
            let result = sim::run_estimation_study(&spec).map_err(|e| CliError::new("estimation study", e))?;
            let csv_path = args.output_dir.join(format!("{name}_n{}_curves.csv", spec.n));
            Sink::File(csv_path).write(|out| result.write_curves_csv(out))?;
            write_json(&json_sink, &result.summary_json())
        }
        Scenario::H0Uniform => {
            let spec = study_spec(args, GeneratorSpec::Uniform, GeneratorSpec::Uniform, 500, 500)?;
            let cfg = pillow_config(args.m, args.pillow_reps, args.seed)?;
            let reference = load_reference(&cfg, &args.cache_dir)?;
            let result = sim::run_size_power_study(&spec, args.alpha, &reference)
                .map_err(|e| CliError::new("size study", e))?;
            eprintln!(
                "rejection rate = {:.4} ({} of {})",
                result.rejection_rate, result.rejections, result.reps
            );
            write_json(&json_sink, &result.to_json(&spec, &reference))
        }
        Scenario::Shrinking => {
            let spec = study_spec(args, GeneratorSpec::Uniform, GeneratorSpec::Uniform, 1, 100)?;
            let rows = sim::shrinking_separation_study(&spec, args.c, args.delta, &args.ladder)
                .map_err(|e| CliError::new("shrinking study", e))?;
            let value = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "c": args.c,
                "delta": args.delta,
                "reps": spec.reps,
                "seed": spec.seed,
                "rows": rows,
            });
            write_json(&json_sink, &value)
        }
    }
}
