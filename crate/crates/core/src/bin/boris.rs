use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use filtered_boris::fields::Preset;
use filtered_boris::harness::{
    self, checks, gnuplot_script, ConvergenceReport, ExperimentSpec, HRule, CONVERGENCE_GUARD,
};
use filtered_boris::integrators::{run_trajectory, Method, MethodConfig, Trajectory};
use filtered_boris::reference::{ErrorMode, ReferenceCache};
use filtered_boris::{Error, Vec3};

#[derive(Parser)]
#[command(
    name = "boris",
    version,
    about = "Filtered Boris integrators for strong magnetic fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write its states.
    Simulate(SimulateArgs),
    /// Error sweep over epsilon and step-size ratios with slope fits.
    Converge(ConvergeArgs),
    /// Endpoint errors at fixed epsilon for h = 1/k.
    Scan(ScanArgs),
    /// Run the invariant and acceptance checks.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Output {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "imp-a")]
    method: String,
    #[arg(long, default_value = "paper-sec8")]
    preset: String,
    /// Accepts decimals, fractions like 1/1024, or powers like 2^-10.
    #[arg(long, default_value = "2^-6")]
    epsilon: String,
    #[arg(long)]
    h: String,
    #[arg(long, default_value = "1")]
    t_end: String,
    /// Initial position as x,y,z.
    #[arg(long, default_value = "1/3,1/4,1/2")]
    x0: String,
    /// Initial velocity as x,y,z.
    #[arg(long, default_value = "2/5,2/3,1")]
    v0: String,
    /// Fixed-point iterations for the implicit methods.
    #[arg(long)]
    fp_iters: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ReportOutput {
    #[command(flatten)]
    output: Output,
    /// Also write a gnuplot script next to the output (requires --out).
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Args)]
struct ConvergeArgs {
    /// Standard sweep: eps = 2^-4..2^-13, h = eps, 4 eps, 16 eps, all methods.
    #[arg(long, conflicts_with_all = ["epsilons", "h_ratios", "methods", "err_mode"])]
    paper: bool,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
    h_ratios: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "boris,exp-a,imp-a,twop-a")]
    methods: Vec<String>,
    /// endpoint or sup-over-grid
    #[arg(long, default_value = "sup-over-grid")]
    err_mode: String,
    #[command(flatten)]
    report: ReportOutput,
}

#[derive(Args)]
struct ScanArgs {
    /// Standard scan: eps = 2^-10, k = 60..600.
    #[arg(long, conflicts_with_all = ["epsilon", "k_from", "k_to"])]
    paper: bool,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    k_from: Option<u32>,
    #[arg(long)]
    k_to: Option<u32>,
    #[command(flatten)]
    report: ReportOutput,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Parses `0.25`, `1/4` or `2^-2`.
fn parse_real(s: &str) -> Result<f64, Error> {
    let s = s.trim();
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| invalid(format!("not a number: {s:?}")))
    };
    let value = if let Some((a, b)) = s.split_once('/') {
        num(a)? / num(b)?
    } else if let Some((a, b)) = s.split_once('^') {
        num(a)?.powf(num(b)?)
    } else {
        num(s)?
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(format!("not a finite number: {s:?}")))
    }
}

fn parse_vec3(s: &str) -> Result<Vec3, Error> {
    let parts: Vec<f64> = s.split(',').map(parse_real).collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(invalid(format!("expected three components, got {s:?}"))),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Serialize)]
struct TrajectoryMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    preset: Preset,
    x0: Vec3,
    v0: Vec3,
    t_end: f64,
    config: &'a MethodConfig,
    fp_mode: String,
    start_rule: &'a str,
}

#[derive(Serialize)]
struct TrajectoryDocument<'a> {
    metadata: TrajectoryMetadata<'a>,
    trajectory: &'a Trajectory,
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let method: Method = args.method.parse()?;
    let preset: Preset = args.preset.parse()?;
    let eps = parse_real(&args.epsilon)?;
    let h = parse_real(&args.h)?;
    let t_end = parse_real(&args.t_end)?;
    let (x0, v0) = (parse_vec3(&args.x0)?, parse_vec3(&args.v0)?);
    let mut cfg = MethodConfig::new(method);
    if let Some(n) = args.fp_iters {
        cfg = cfg.with_fp_iters(n);
    }
    cfg.validate()?;
    let model = preset.build(eps)?;
    let traj = run_trajectory(x0, v0, &model, &cfg, h, t_end)?;

    let mut out = open_out(args.output.out.as_deref())?;
    match args.output.format {
        Format::Json => {
            let doc = TrajectoryDocument {
                metadata: TrajectoryMetadata {
                    tool: env!("CARGO_PKG_NAME"),
                    version: env!("CARGO_PKG_VERSION"),
                    preset,
                    x0,
                    v0,
                    t_end,
                    config: &cfg,
                    fp_mode: cfg.fp_mode(),
                    start_rule: &traj.start_rule,
                },
                trajectory: &traj,
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "n",
                "t",
                "x1",
                "x2",
                "x3",
                "vh1",
                "vh2",
                "vh3",
                "v1",
                "v2",
                "v3",
                "resonance_flag",
                "fp_iters",
                "fp_residual",
            ])?;
            for (s, f) in traj.states.iter().zip(&traj.flags) {
                let mut row = vec![s.n.to_string(), s.t.to_string()];
                for v in [s.x, s.v_half, s.v_node] {
                    row.extend(v.to_array().iter().map(f64::to_string));
                }
                row.push(f.resonance.is_flagged().to_string());
                row.push(f.fp_iters.to_string());
                row.push(f.fp_residual.to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

fn emit_report(report: &ConvergenceReport, opts: &ReportOutput) -> Result<(), Error> {
    if opts.gnuplot && opts.output.out.is_none() {
        return Err(invalid("--gnuplot needs --out"));
    }
    let mut out = open_out(opts.output.out.as_deref())?;
    match opts.output.format {
        Format::Csv => harness::write_csv(report, &mut out)?,
        Format::Json => harness::write_json(report, &mut out)?,
    }
    out.flush()?;
    if let (true, Some(path)) = (opts.gnuplot, &opts.output.out) {
        let csv_path = match opts.output.format {
            Format::Csv => path.clone(),
            Format::Json => {
                let p = path.with_extension("csv");
                harness::write_csv(report, BufWriter::new(File::create(&p)?))?;
                p
            }
        };
        let name = csv_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        std::fs::write(path.with_extension("gp"), gnuplot_script(report, &name))?;
    }
    let failed = report.cells.iter().filter(|c| c.failure.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} cells failed; see the JSON report for messages",
            report.cells.len()
        );
    }
    Ok(())
}

fn converge(args: ConvergeArgs, cache: &ReferenceCache) -> Result<(), Error> {
    let spec = if args.paper {
        ExperimentSpec::standard_convergence()
    } else {
        if args.epsilons.is_empty() {
            return Err(invalid("give --paper or --epsilons"));
        }
        let mut spec = ExperimentSpec::standard_convergence();
        spec.epsilons = args.epsilons.iter().map(|s| parse_real(s)).collect::<Result<_, _>>()?;
        spec.h_rules = args
            .h_ratios
            .iter()
            .map(|s| parse_real(s).map(HRule::Ratio))
            .collect::<Result<_, _>>()?;
        spec.methods = args
            .methods
            .iter()
            .map(|s| Ok(MethodConfig::new(s.parse()?).with_guard(CONVERGENCE_GUARD)))
            .collect::<Result<_, Error>>()?;
        spec.err_mode = args.err_mode.parse::<ErrorMode>()?;
        spec
    };
    let report = harness::run_convergence(&spec, cache)?;
    emit_report(&report, &args.report)
}

fn scan(args: ScanArgs, cache: &ReferenceCache) -> Result<(), Error> {
    let spec = if args.paper {
        ExperimentSpec::standard_scan()
    } else {
        let (Some(eps), Some(from), Some(to)) = (args.epsilon.as_deref(), args.k_from, args.k_to) else {
            return Err(invalid("give --paper or all of --epsilon, --k-from, --k-to"));
        };
        if from == 0 || from > to {
            return Err(invalid(format!("need 0 < k-from <= k-to, got {from}..{to}")));
        }
        ExperimentSpec::scan(parse_real(eps)?, from, to)
    };
    let report = harness::run_resonance_scan(&spec, cache)?;
    emit_report(&report, &args.report)
}

fn validate(cache: &ReferenceCache) -> bool {
    let results = checks::run_all(cache, |r| println!("{r}"));
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} checks, {} passed, {} failed",
        results.len(),
        results.len() - failed,
        failed
    );
    failed == 0
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::InvalidInput(_)
        | Error::GridMismatch(_)
        | Error::InsufficientData { .. }
        | Error::ZeroField
        | Error::DegenerateField { .. }
        | Error::NearResonant { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cache = ReferenceCache::from_env();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Converge(a) => converge(a, &cache),
        Command::Scan(a) => scan(a, &cache),
        Command::Validate => {
            return if validate(&cache) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
