use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use mcfifo::bounds::{self, BoundMethod};
use mcfifo::formats;
use mcfifo::sim::{backlog_process, simulate, Schedule, Trace};
use mcfifo::traffic::{self, GenParams};
use mcfifo::verify::{self, Check, VerifyReport};
use mcfifo::{presets, Rational, SystemConfig};

#[derive(Parser)]
#[command(name = "mcfifo", version, about = "Delay and backlog bounds for multiclass FIFO servers")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute delay, backlog and per-class bounds.
    Bounds {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value = "both")]
        method: String,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a conformant trace.
    Generate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_enum, default_value_t = Mode::Random)]
        mode: Mode,
        #[command(flatten)]
        gen: GenArgs,
        /// Trace file to write; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the FIFO server on a trace.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        trace: PathBuf,
        /// Schedule CSV; the backlog process goes next to it as `<stem>.backlog.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trace (and optionally a given schedule) against the bounds.
    Verify {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        trace: PathBuf,
        /// Schedule to check instead of simulating the trace.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[command(flatten)]
        select: SelectArgs,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate, simulate and verify many random seeds in parallel.
    Sweep {
        #[command(flatten)]
        system: SystemArgs,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value = "10", value_parser = parse_rational)]
        horizon: Rational,
        #[arg(long, default_value = "0.9", value_parser = parse_rational)]
        intensity: Rational,
        #[command(flatten)]
        select: SelectArgs,
        /// Also write the JSON summary to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SystemArgs {
    /// System configuration (TOML).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration instead of a file: s1 or s2.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "10", value_parser = parse_rational)]
    horizon: Rational,
    #[arg(long, default_value = "0.9", value_parser = parse_rational)]
    intensity: Rational,
    /// Class served last in the greedy burst.
    #[arg(long, default_value_t = 1)]
    tagged: usize,
}

#[derive(Args)]
struct SelectArgs {
    /// Bound methods whose guarantees are checked.
    #[arg(long, default_value = "both")]
    method: String,
    /// Checks to run: all, or a comma-separated subset of gr, sc, delay, backlog, conformance.
    #[arg(long, default_value = "all")]
    check: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Random,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Greedy => "greedy",
            Mode::Random => "random",
        }
    }
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    s.parse::<Rational>().map_err(|e| e.to_string())
}

fn load_config(args: &SystemArgs) -> Result<Arc<SystemConfig>> {
    let cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SystemConfig::from_toml_str(&text).map_err(|e| {
                let details: Vec<String> = e.violations().iter().map(|v| format!("  {v}")).collect();
                if details.is_empty() {
                    anyhow::anyhow!("{}: {e}", path.display())
                } else {
                    anyhow::anyhow!("{}: invalid configuration\n{}", path.display(), details.join("\n"))
                }
            })?
        }
        (None, Some(name)) => presets::by_name(name).with_context(|| format!("unknown preset `{name}`"))?,
        (None, None) => bail!("either --config or --preset is required"),
    };
    Ok(Arc::new(cfg))
}

fn load_trace(cfg: &Arc<SystemConfig>, path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (trace, _) = formats::read_trace(&text, cfg.clone()).with_context(|| format!("parsing {}", path.display()))?;
    Ok(trace)
}

fn methods(selector: &str) -> Result<Vec<Arc<dyn BoundMethod>>> {
    Ok(bounds::default_methods().select(selector)?)
}

fn checks(selector: &str) -> Result<Vec<Arc<dyn Check>>> {
    Ok(verify::default_checks().select(selector)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<io::BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(io::BufWriter::new(f))
}

fn emit(json: bool, value: &serde_json::Value, text: &str) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("json value"));
    } else {
        print!("{text}");
    }
}

fn cmd_bounds(json: bool, system: &SystemArgs, method: &str, out: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(system)?;
    let report = bounds::report(&cfg, &methods(method)?);
    if let Some(path) = out {
        write_file(path, &formats::to_json(&report))?;
    }
    if json {
        println!("{}", formats::to_json(&report));
    } else {
        print!("{}", formats::render_bounds(&report));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(json: bool, system: &SystemArgs, mode: Mode, gen: &GenArgs, out: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(system)?;
    let params = GenParams {
        seed: gen.seed,
        horizon: gen.horizon.clone(),
        intensity: gen.intensity.clone(),
        tagged: gen.tagged,
    };
    let generator = traffic::default_generators().get(mode.name())?;
    let trace = generator.generate(&cfg, &params)?;
    let header = vec![generator.provenance(&cfg, &params)];
    match out {
        Some(path) => {
            let mut w = create(path)?;
            formats::write_trace(&mut w, &trace, &header)?;
            w.flush()?;
            let bits: Rational = trace.packets().iter().map(|p| p.length.clone()).sum();
            let summary = json!({
                "generator": mode.name(),
                "out": path.display().to_string(),
                "packets": trace.len(),
                "bits": bits.to_string(),
            });
            let text = format!("wrote {} packets ({} bits) to {}\n", trace.len(), bits, path.display());
            emit(json, &summary, &text);
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            formats::write_trace(&mut lock, &trace, &header)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn backlog_path(schedule: &Path) -> PathBuf {
    let stem = schedule.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    schedule.with_file_name(format!("{stem}.backlog.csv"))
}

fn cmd_simulate(json: bool, system: &SystemArgs, trace_path: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(system)?;
    let trace = load_trace(&cfg, trace_path)?;
    let schedule = simulate(&trace);
    let backlog = backlog_process(&trace, &schedule);
    let max_delay = schedule.max_delay().cloned();
    let sup_backlog = backlog.sup();
    let mut files = Vec::new();
    match out {
        Some(path) => {
            let mut w = create(path)?;
            formats::write_schedule(&mut w, &trace, &schedule)?;
            w.flush()?;
            let bpath = backlog_path(path);
            let mut w = create(&bpath)?;
            formats::write_backlog(&mut w, &backlog)?;
            w.flush()?;
            files.push(path.display().to_string());
            files.push(bpath.display().to_string());
        }
        None if !json => {
            let stdout = io::stdout();
            formats::write_schedule(stdout.lock(), &trace, &schedule)?;
            return Ok(ExitCode::SUCCESS);
        }
        None => {}
    }
    let summary = json!({
        "packets": trace.len(),
        "max_delay": max_delay.as_ref().map(Rational::to_string),
        "sup_backlog": sup_backlog.to_string(),
        "files": files,
    });
    let text = format!(
        "packets {}\nmax delay [s] {}\nsup backlog [b] {}\n{}",
        trace.len(),
        max_delay.as_ref().map_or("-".into(), formats::exact_and_decimal),
        formats::exact_and_decimal(&sup_backlog),
        files.iter().map(|f| format!("wrote {f}\n")).collect::<String>()
    );
    emit(json, &summary, &text);
    Ok(ExitCode::SUCCESS)
}

fn exit_for(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_verify(
    json: bool,
    system: &SystemArgs,
    trace_path: &Path,
    schedule_path: Option<&Path>,
    select: &SelectArgs,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let cfg = load_config(system)?;
    let trace = load_trace(&cfg, trace_path)?;
    let schedule: Schedule = match schedule_path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            formats::read_schedule(&text, &trace).with_context(|| format!("parsing {}", p.display()))?
        }
        None => simulate(&trace),
    };
    let report = verify::run_checks(&trace, &schedule, &methods(&select.method)?, &checks(&select.check)?);
    if let Some(path) = out {
        write_file(path, &formats::to_json(&report))?;
    }
    if json {
        println!("{}", formats::to_json(&report));
    } else {
        print!("{}", formats::render_verify(&report));
    }
    Ok(exit_for(report.passed()))
}

struct SeedRun {
    seed: u64,
    packets: usize,
    max_delay: Option<Rational>,
    report: VerifyReport,
}

fn cmd_sweep(
    json: bool,
    system: &SystemArgs,
    first: u64,
    count: u64,
    horizon: &Rational,
    intensity: &Rational,
    select: &SelectArgs,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let cfg = load_config(system)?;
    let methods = methods(&select.method)?;
    let checks = checks(&select.check)?;
    let seeds: Vec<u64> = (0..count).map(|i| first + i).collect();
    // par_iter over a Vec collects in input order, so output is seed-ordered.
    let runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&seed| -> Result<SeedRun> {
            let trace = traffic::shaped_random(&cfg, seed, horizon, intensity)?;
            let schedule = simulate(&trace);
            let report = verify::run_checks(&trace, &schedule, &methods, &checks);
            Ok(SeedRun {
                seed,
                packets: trace.len(),
                max_delay: schedule.max_delay().cloned(),
                report,
            })
        })
        .collect::<Result<_>>()?;

    let failed: Vec<u64> = runs.iter().filter(|r| !r.report.passed()).map(|r| r.seed).collect();
    let rows: Vec<_> = runs
        .iter()
        .map(|r| {
            json!({
                "seed": r.seed,
                "packets": r.packets,
                "max_delay": r.max_delay.as_ref().map(Rational::to_string),
                "violations": r.report.violation_count(),
            })
        })
        .collect();
    let summary = json!({
        "system": cfg.name(),
        "horizon": horizon.to_string(),
        "intensity": intensity.to_string(),
        "seeds": rows,
        "failed_seeds": failed,
    });
    if let Some(path) = out {
        write_file(path, &serde_json::to_string_pretty(&summary)?)?;
    }
    let mut text = String::new();
    for r in &runs {
        text.push_str(&format!(
            "seed {:>6}  packets {:>7}  max delay {:<12}  violations {}\n",
            r.seed,
            r.packets,
            r.max_delay.as_ref().map_or("-".into(), |d| d.to_decimal_string(6)),
            r.report.violation_count()
        ));
    }
    text.push_str(&format!("{} of {} seeds passed\n", runs.len() - failed.len(), runs.len()));
    emit(json, &summary, &text);
    Ok(exit_for(failed.is_empty()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let json = cli.json;
    match &cli.command {
        Command::Bounds { system, method, out } => cmd_bounds(json, system, method, out.as_deref()),
        Command::Generate { system, mode, gen, out } => cmd_generate(json, system, *mode, gen, out.as_deref()),
        Command::Simulate { system, trace, out } => cmd_simulate(json, system, trace, out.as_deref()),
        Command::Verify {
            system,
            trace,
            schedule,
            select,
            out,
        } => cmd_verify(json, system, trace, schedule.as_deref(), select, out.as_deref()),
        Command::Sweep {
            system,
            seed,
            seeds,
            horizon,
            intensity,
            select,
            out,
        } => cmd_sweep(json, system, *seed, *seeds, horizon, intensity, select, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
