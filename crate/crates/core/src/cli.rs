//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{error::ErrorKind, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::acceptance;
use crate::calibration::{self, FitReport};
use crate::error::{Error, Result};
use crate::io::config::{
    EnduranceSpec, FitSection, LtpLtdSpec, MultilevelSpec, RetentionSpec, SimOverrides, StaircaseSpec,
    StdpSpec, SweepSpec,
};
use crate::io::csv::{self, Table};
use crate::io::{load_config, parse_config, resolve_seed, Experiment, Format, RunConfig};
use crate::protocols::{self, Sweep};
use crate::simulator::{SimConfig, Trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "memsyn", version, about = "Memristive synapse simulator", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Seed; overrides the config and the MEMSYN_SEED environment variable.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output format.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// DC I–V cycling; CSV output is the full trace.
    Sweep,
    /// Pulsed SET/RESET cycling until failure.
    Endurance,
    /// Zero-bias storage of programmed LRS and HRS states.
    Retention,
    /// LRS resistance versus compliance current.
    Multilevel,
    /// Pulse trains: `ltp_ltd` (default) or `amplitude_series` via config.
    Plasticity,
    /// Weight change versus spike delay.
    Stdp,
    /// Voltage staircases: `reset_staircase` (default) or `set_staircase` via config.
    Staircase,
    /// Fit device parameters to feature targets.
    Fit,
    /// Run the acceptance suite on the configured parameters.
    Selftest,
}

impl Command {
    fn default_experiment(self) -> Option<Experiment> {
        Some(match self {
            Command::Sweep => Experiment::Sweep(SweepSpec::default()),
            Command::Endurance => Experiment::Endurance(EnduranceSpec::default()),
            Command::Retention => Experiment::Retention(RetentionSpec::default()),
            Command::Multilevel => Experiment::Multilevel(MultilevelSpec::default()),
            Command::Plasticity => Experiment::LtpLtd(LtpLtdSpec::default()),
            Command::Stdp => Experiment::Stdp(StdpSpec::default()),
            Command::Staircase => Experiment::ResetStaircase(StaircaseSpec::reset_default()),
            Command::Fit | Command::Selftest => return None,
        })
    }

    fn accepts(self, e: &Experiment) -> bool {
        matches!(
            (self, e),
            (Command::Sweep, Experiment::Sweep(_))
                | (Command::Endurance, Experiment::Endurance(_))
                | (Command::Retention, Experiment::Retention(_))
                | (Command::Multilevel, Experiment::Multilevel(_))
                | (Command::Plasticity, Experiment::LtpLtd(_) | Experiment::AmplitudeSeries(_))
                | (Command::Stdp, Experiment::Stdp(_))
                | (Command::Staircase, Experiment::ResetStaircase(_) | Experiment::SetStaircase(_))
        )
    }
}

/// What a run produced, in both output shapes.
struct Output {
    json: serde_json::Value,
    table: Table,
    notes: Vec<String>,
}

fn output<T: Serialize>(result: &T, table: Table) -> Result<Output> {
    let json = serde_json::to_value(result).map_err(|e| Error::Simulation(e.to_string()))?;
    Ok(Output { json, table, notes: Vec::new() })
}

fn run_sweep(spec: &SweepSpec, cfg: &SimConfig, params: &crate::DeviceParams) -> Result<Output> {
    let mut samples = Vec::new();
    let mut offset = 0.0;
    let result = protocols::run_iv_cycles_with(spec.cycles, &spec.sweep(), spec.i_cc, cfg, params, |k, trace: &Trace| {
        // cycles are concatenated on one clock; each cycle's t = 0 repeats the previous end
        let skip = usize::from(k > 0);
        samples.extend(trace.samples.iter().skip(skip).map(|s| crate::TraceSample { t: s.t + offset, ..*s }));
        offset += trace.samples.last().map_or(0.0, |s| s.t);
    })?;
    let trace = Trace { samples, meta: crate::simulator::TraceMeta { params_hash: params.hash(), seed: cfg.seed, config: *cfg } };
    let mut out = output(&result, Table::from(&trace))?;
    for (k, c) in result.cycles.iter().enumerate() {
        out.notes.push(format!("cycle {}: r_on={} r_off={} ratio={}", k + 1, csv::fmt_num(c.r_on), csv::fmt_num(c.r_off), csv::fmt_num(c.ratio)));
    }
    Ok(out)
}

fn execute(e: &Experiment, cfg: &SimConfig, params: &crate::DeviceParams) -> Result<Output> {
    match e {
        Experiment::Sweep(s) => run_sweep(s, cfg, params),
        Experiment::Endurance(s) => {
            let r = protocols::run_endurance_pulsed(s.v_set, s.v_reset, s.width, s.cycles, cfg, params)?;
            let mut t = Table::new(&["cycle", "r_on_ohm", "r_off_ohm", "window"]);
            for (k, c) in r.cycles.iter().enumerate() {
                t.push_values(&[(k + 1) as f64, c.r_on, c.r_off, c.window]);
            }
            let mut out = output(&r, t)?;
            out.notes.push(format!("failure_cycle: {}", r.failure_cycle.map_or("none".into(), |c| c.to_string())));
            Ok(out)
        }
        Experiment::Retention(s) => {
            let (lrs, hrs) = protocols::programmed_states(&Sweep::default(), s.i_cc, params)?;
            let r = protocols::run_retention(s.t_total, s.read_period, &lrs, &hrs, cfg, params)?;
            let mut t = Table::new(&["t_s", "r_lrs_ohm", "r_hrs_ohm"]);
            for (l, h) in r.lrs.iter().zip(&r.hrs) {
                t.push_values(&[l.t, l.r, h.r]);
            }
            output(&r, t)
        }
        Experiment::Multilevel(s) => {
            let sweep = Sweep { v_pos: s.v_pos, rate: s.rate, ..Sweep::default() };
            let r = protocols::run_multilevel(&s.i_cc, &sweep, cfg, params)?;
            let mut t = Table::new(&["i_cc_A", "r_lrs_ohm"]);
            for l in &r.levels {
                t.push_values(&[l.i_cc, l.r_lrs]);
            }
            output(&r, t)
        }
        Experiment::LtpLtd(s) => {
            let r = protocols::run_ltp_ltd(s.amp, s.width, s.pulses, cfg, params)?;
            let mut t = Table::new(&["pulse", "g_ltp_S", "w_ltp", "g_ltd_S", "w_ltd"]);
            for n in 0..r.ltp.g.len() {
                t.push_values(&[n as f64, r.ltp.g[n], r.ltp.w[n], r.ltd.g[n], r.ltd.w[n]]);
            }
            output(&r, t)
        }
        Experiment::AmplitudeSeries(s) => {
            let r = protocols::run_amplitude_series(&s.amps, s.width, s.pulses, cfg, params)?;
            let mut t = Table::new(&["amp_V", "pulse", "g_pot_S", "w_pot", "g_dep_S", "w_dep"]);
            for a in &r.series {
                let (p, d) = (&a.potentiation, &a.depression);
                for n in 0..p.g.len() {
                    t.push_values(&[a.amp, n as f64, p.g[n], p.w[n], d.g[n], d.w[n]]);
                }
            }
            output(&r, t)
        }
        Experiment::ResetStaircase(s) | Experiment::SetStaircase(s) => {
            let v = protocols::voltage_steps(s.v_start, s.v_end, s.v_step);
            let r = if matches!(e, Experiment::ResetStaircase(_)) {
                protocols::run_reset_staircase(&v, s.i_cc, &s.settings(), cfg, params)?
            } else {
                protocols::run_set_staircase(&v, s.i_cc, &s.settings(), cfg, params)?
            };
            let mut t = Table::new(&["v_V", "r_ohm", "g_S"]);
            for st in &r.steps {
                t.push_values(&[st.v, st.r, st.g]);
            }
            output(&r, t)
        }
        Experiment::Stdp(s) => {
            let r = protocols::run_stdp(&s.delta_t, &s.settings, cfg, params)?;
            let mut t = Table::new(&["delta_t_s", "delta_g", "g_before_S", "g_after_S"]);
            for p in &r.points {
                t.push_values(&[p.delta_t, p.delta_g, p.g_before, p.g_after]);
            }
            output(&r, t)
        }
    }
}

fn fit_output(report: &FitReport, section: &FitSection) -> Result<Output> {
    let mut header: Vec<&str> = section.config.dims.iter().map(|d| d.name.as_str()).collect();
    header.push("loss");
    let mut t = Table::new(&header);
    let mut row: Vec<f64> = section.config.dims.iter().map(|d| report.params.get(&d.name)).collect::<Result<_>>()?;
    row.push(report.loss);
    t.push_values(&row);
    output(report, t)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::OutOfRange { .. } | Error::Simulation(_) | Error::Fit(_) => EXIT_FAILURE,
    }
}

struct Resolved {
    config: RunConfig,
    format: Format,
    out: Option<PathBuf>,
}

fn read_config(cli: &Cli, needs_experiment: bool) -> Result<Option<RunConfig>> {
    let Some(path) = &cli.config else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if needs_experiment { load_config(&text) } else { parse_config(&text) };
    parsed.map(Some).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn resolve(cli: &Cli, env_seed: Option<&str>) -> Result<Resolved> {
    let needs_experiment = cli.command.default_experiment().is_some();
    let file = read_config(cli, needs_experiment)?;
    let mut config = file.unwrap_or_default();
    if needs_experiment {
        let e = match config.experiment.take() {
            Some(e) if cli.command.accepts(&e) => e,
            Some(e) => {
                return Err(Error::Config(format!("experiment kind `{}` does not match subcommand {:?}", e.kind(), cli.command)));
            }
            None => cli.command.default_experiment().expect("experiment subcommand"),
        };
        config.experiment = Some(e);
    }
    let seed = resolve_seed(cli.seed, config.sim.seed, env_seed)?;
    config.sim.seed = Some(seed);
    if let Some(e) = &config.experiment {
        let sim = config.sim_config(e);
        config.sim = SimOverrides {
            dt_max: Some(sim.dt_max),
            dx_max: Some(sim.dx_max),
            i_cc: sim.i_cc,
            seed: Some(sim.seed),
            decimation: Some(sim.decimation),
        };
    }
    if cli.command == Command::Fit && config.fit.is_none() {
        config.fit = Some(FitSection::default());
    }
    if let Some(f) = config.fit.as_mut() {
        f.config.seed = seed;
    }
    let format = match &cli.format {
        Some(f) => f.parse()?,
        None => config.format,
    };
    config.format = format;
    let out = cli.out.clone().or_else(|| config.output.clone());
    config.output = out.clone();
    config.validate()?;
    Ok(Resolved { config, format, out })
}

fn emit(resolved: &Resolved, kind: &str, out: Output, stdout: &mut dyn Write) -> Result<()> {
    let config_json = serde_json::to_value(&resolved.config).map_err(|e| Error::Simulation(e.to_string()))?;
    let seed = resolved.config.sim.seed.unwrap_or(0);
    let hash = resolved.config.device.hash();
    let write = |w: &mut dyn Write| -> std::io::Result<()> {
        match resolved.format {
            Format::Json => {
                let doc = json!({
                    "kind": kind,
                    "seed": seed,
                    "params_hash": hash,
                    "config": config_json,
                    "notes": out.notes,
                    "result": out.json,
                });
                serde_json::to_writer_pretty(&mut *w, &doc)?;
                writeln!(w)
            }
            Format::Csv => {
                let mut meta = vec![format!("memsyn {kind}"), format!("seed: {seed}"), format!("params_hash: {hash}")];
                meta.push(format!("config: {config_json}"));
                meta.extend(out.notes.iter().cloned());
                csv::write_table(&out.table, &meta, w)
            }
        }
    };
    match &resolved.out {
        Some(path) => csv::write_file(path, |w| write(w)),
        None => write(stdout).map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source }),
    }
}

fn run_selftest(resolved: &Resolved, stdout: &mut dyn Write) -> Result<bool> {
    let outcomes = acceptance::run_all(&resolved.config.device);
    let all = outcomes.iter().all(|o| o.passed);
    let text = match resolved.format {
        Format::Json => serde_json::to_string_pretty(&outcomes).map_err(|e| Error::Simulation(e.to_string()))? + "\n",
        Format::Csv => {
            let mut s: String = outcomes.iter().map(|o| format!("{o}\n")).collect();
            s += &format!("{} of {} criteria passed\n", outcomes.iter().filter(|o| o.passed).count(), outcomes.len());
            s
        }
    };
    match &resolved.out {
        Some(path) => csv::write_file(path, |w| w.write_all(text.as_bytes()))?,
        None => stdout.write_all(text.as_bytes()).map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })?,
    }
    Ok(all)
}

fn dispatch(cli: &Cli, env_seed: Option<&str>, stdout: &mut dyn Write) -> Result<i32> {
    let resolved = resolve(cli, env_seed)?;
    let params = resolved.config.device;
    match cli.command {
        Command::Selftest => Ok(if run_selftest(&resolved, stdout)? { EXIT_OK } else { EXIT_FAILURE }),
        Command::Fit => {
            let section = resolved.config.fit.clone().expect("fit section resolved");
            let report = calibration::fit(&section.targets, &params, &section.config)?;
            emit(&resolved, "fit", fit_output(&report, &section)?, stdout)?;
            Ok(EXIT_OK)
        }
        _ => {
            let e = resolved.config.experiment.clone().expect("experiment resolved");
            let sim = resolved.config.sim_config(&e);
            let out = execute(&e, &sim, &params)?;
            emit(&resolved, e.kind(), out, stdout)?;
            Ok(EXIT_OK)
        }
    }
}

/// Run the command line `argv` (including the program name) and return the
/// process exit code.
pub fn run_cli<I, S>(argv: I, env_seed: Option<&str>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == EXIT_OK { stdout } else { stderr };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match dispatch(&cli, env_seed, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "memsyn: {e}");
            exit_code(&e)
        }
    }
}
