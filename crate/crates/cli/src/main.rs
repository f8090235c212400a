use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ggmech::analysis::{linear_grid, tail_ratio_curve, write_curve_csv, TAIL_CUTOFF};
use ggmech::calibration::equivalent_epsilon;
use ggmech::mechanisms::calibrate;
use ggmech::pipeline::{emit_curve, emit_report, load_histogram, run_experiment, ExperimentConfig};
use ggmech::{
    Error, McConfig, MechanismKind, MechanismSpec, PrivacyParams, Result, RngStream, Sanitizer,
    SensitivityProfile,
};

/// Generalized Gaussian noise mechanisms for differential privacy.
#[derive(Parser)]
#[command(name = "ggmech", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the calibrated noise scale for a mechanism as JSON.
    Calibrate(CalibrateArgs),
    /// Add calibrated noise to a query result.
    Sanitize(SanitizeArgs),
    /// Laplace versus Gaussian comparisons.
    #[command(subcommand)]
    Compare(CompareCommand),
    /// Run a histogram-sanitization experiment and write a JSON report.
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum CompareCommand {
    /// Tail probabilities of both mechanisms along a grid of t, as CSV.
    Tails(TailsArgs),
    /// Gaussian epsilon matching the Laplace tail at t.
    EquivEps(EquivArgs),
}

/// A mechanism given either as a JSON spec file or through flags.
#[derive(Args)]
struct SpecArgs {
    /// MechanismSpec JSON file; the remaining spec flags are then ignored.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// laplace, gauss_pdp, gauss_adp, gg_pdp, tgg_edp or exp_gg.
    #[arg(long)]
    kind: Option<MechanismKind>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Comma-separated per-element l1 sensitivities.
    #[arg(long, value_delimiter = ',')]
    delta1: Vec<f64>,
    /// Comma-separated element bounds, each as lo:hi.
    #[arg(long, value_delimiter = ',')]
    bounds: Vec<String>,
    /// Elements depend on disjoint parts of the data.
    #[arg(long)]
    disjoint: bool,
    /// Monte-Carlo draws for gg_pdp on non-disjoint profiles.
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Seed for Monte-Carlo calibration.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SanitizeArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Histogram CSV with header label,count.
    #[arg(long, conflicts_with = "values")]
    input: Option<PathBuf>,
    /// Comma-separated query values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long)]
    seed: u64,
    /// Clamp outputs to lo:hi.
    #[arg(long)]
    clamp: Option<String>,
    /// Rescale clamped outputs to this total.
    #[arg(long)]
    normalize: Option<f64>,
    /// Round to nonnegative integers.
    #[arg(long)]
    round: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct TailsArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    delta_s: f64,
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    #[arg(long, default_value_t = 201)]
    points: usize,
    #[arg(long, default_value_t = TAIL_CUTOFF)]
    cutoff: f64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long)]
    epsilon1: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 1.0)]
    delta_s: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// ExperimentConfig JSON file.
    #[arg(long, required_unless_present = "dataset")]
    config: Option<PathBuf>,
    /// synthetic-mildew, synthetic-czech or a histogram CSV; uses default settings.
    #[arg(long, conflicts_with = "config")]
    dataset: Option<String>,
    /// Overrides any seed in the config.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    overwrite: bool,
}

fn parse_pair(text: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("expected lo:hi, got '{text}'"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl SpecArgs {
    fn build(&self) -> Result<MechanismSpec> {
        if let Some(path) = &self.spec {
            return Ok(serde_json::from_str(&read_text(path)?)?);
        }
        let kind = self
            .kind
            .ok_or_else(|| Error::Config("pass --spec or --kind".into()))?;
        let epsilon = self
            .epsilon
            .ok_or_else(|| Error::Config("--epsilon is required".into()))?;
        if self.delta1.is_empty() {
            return Err(Error::Config("--delta1 is required".into()));
        }
        let mut profile = SensitivityProfile::new(self.delta1.clone(), self.disjoint)?;
        if !self.bounds.is_empty() {
            let bounds = self
                .bounds
                .iter()
                .map(|b| parse_pair(b))
                .collect::<Result<_>>()?;
            profile = profile.with_bounds(bounds)?;
        }
        let mut spec = MechanismSpec::new(
            kind,
            self.p,
            PrivacyParams::new(epsilon, self.delta)?,
            profile,
        )?;
        if let Some(draws) = self.draws {
            spec = spec.with_mc(McConfig {
                draws,
                ..McConfig::default()
            })?;
        }
        Ok(spec)
    }
}

/// Write `text` to `path`, or to stdout when no path is given.
fn deliver(text: &str, path: Option<&Path>, overwrite: bool) -> Result<()> {
    let Some(path) = path else {
        print!("{text}");
        return Ok(());
    };
    let mut opts = OpenOptions::new();
    opts.write(true);
    if overwrite {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = opts.open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            Error::Config(format!(
                "{} already exists; pass --overwrite",
                path.display()
            ))
        } else {
            io(e)
        }
    })?;
    file.write_all(text.as_bytes()).map_err(io)
}

fn warn_extrapolated(spec: &MechanismSpec) {
    if spec.kind() == MechanismKind::GaussAdp && spec.privacy().epsilon >= 1.0 {
        eprintln!(
            "warning: the approximate-DP Gaussian bound only holds for epsilon < 1; \
             the scale at epsilon = {} is extrapolated",
            spec.privacy().epsilon
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(args) => {
            let spec = args.spec.build()?;
            warn_extrapolated(&spec);
            let cal = calibrate(&spec, &mut RngStream::new(args.seed, 0))?;
            println!("{}", serde_json::to_string_pretty(&cal)?);
        }
        Command::Sanitize(args) => {
            let spec = args.spec.build()?;
            warn_extrapolated(&spec);
            let values = match &args.input {
                Some(path) => load_histogram(path)?.counts().to_vec(),
                None if !args.values.is_empty() => args.values.clone(),
                None => return Err(Error::Config("pass --input or --values".into())),
            };
            if args.normalize.is_some() && args.clamp.is_none() {
                return Err(Error::Config(
                    "--normalize needs --clamp to remove negative values".into(),
                ));
            }
            let mut rng = RngStream::new(args.seed, 0);
            let sanitizer = Sanitizer::new(spec, &mut rng.substream(0))?;
            let mut out = sanitizer.apply(&values, &mut rng)?;
            if let Some(c) = &args.clamp {
                let (lo, hi) = parse_pair(c)?;
                out = out.clamp(&[lo], &[hi])?;
            }
            if let Some(total) = args.normalize {
                out = out.normalize(total)?;
            }
            if args.round {
                out = out.round();
            }
            let text = serde_json::to_string_pretty(&out)? + "\n";
            deliver(&text, args.output.as_deref(), args.overwrite)?;
        }
        Command::Compare(CompareCommand::Tails(args)) => {
            let grid = linear_grid(args.t_max, args.points);
            let pts = tail_ratio_curve(args.epsilon, args.delta, args.delta_s, &grid, args.cutoff)?;
            match &args.output {
                Some(path) => emit_curve(&pts, path, args.overwrite)?,
                None => {
                    write_curve_csv(&pts, std::io::stdout().lock()).map_err(|source| Error::Io {
                        path: "<stdout>".into(),
                        source,
                    })?
                }
            }
        }
        Command::Compare(CompareCommand::EquivEps(args)) => {
            let eps2 = equivalent_epsilon(args.epsilon1, args.delta, args.t, args.delta_s)?;
            let v = serde_json::json!({
                "epsilon1": args.epsilon1,
                "delta": args.delta,
                "t": args.t,
                "delta_s": args.delta_s,
                "epsilon2": eps2,
                "ratio": eps2 / args.epsilon1,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::Experiment(args) => {
            let mut value = match (&args.config, &args.dataset) {
                (Some(path), _) => serde_json::from_str(&read_text(path)?)?,
                (None, Some(dataset)) => serde_json::json!({ "dataset": dataset }),
                (None, None) => unreachable!("clap requires one of --config and --dataset"),
            };
            let obj = value
                .as_object_mut()
                .ok_or_else(|| Error::Config("experiment config must be a JSON object".into()))?;
            obj.insert("seed".into(), args.seed.into());
            if let Some(r) = args.repeats {
                obj.insert("repeats".into(), r.into());
            }
            let config: ExperimentConfig = serde_json::from_value(value)?;
            let report = run_experiment(&config)?;
            match &args.output {
                Some(path) => emit_report(&report, path, args.overwrite)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
