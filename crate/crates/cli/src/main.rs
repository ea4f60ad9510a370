use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use satqkd::error::ModelError;
use satqkd::experiment::{
    emit_csv, figure_preset, load_config, run_point, run_point_mc, run_sweep, Axis, ConfigError, Figure, ScenarioConfig,
    SweepSpec,
};
use satqkd::oracle::{simulate_link_slots, simulate_slots, validation_report, Adjudication, FovMode, SimConfig, SlotParams, ValidationConfig};
use satqkd::performance::{Method, PerformanceReport};

/// Performance model for entanglement-based inter-satellite QKD links.
#[derive(Parser)]
#[command(name = "satqkd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Configuration file, or `paper-defaults`.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override a key, e.g. `--set both.distance_m=7.5e5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured link pair.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Sweep a preset grid or explicit axes and write CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// fig2, fig3, fig4, fig5 or fig6.
        #[arg(long, conflicts_with = "axis")]
        preset: Option<String>,
        /// `key=v1,v2,...` or `key=start:stop:count[:log]`; repeat for more axes.
        #[arg(long, required_unless_present = "preset")]
        axis: Vec<String>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Slot-level Monte Carlo simulation.
    Mc {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// paper_table or first_principles.
        #[arg(long)]
        adjudication: Option<Adjudication>,
        /// per_photon or per_slot.
        #[arg(long)]
        fov_mode: Option<FovMode>,
        /// Run even if fewer than 10 sifted bits are expected.
        #[arg(long)]
        force: bool,
    },
    /// Compare the closed-form model with the oracles and write a JSON report.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Tolerance(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Tolerance(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Tolerance(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tolerance { .. } => Failure::Tolerance(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn io_error(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("cannot write `{}`: {e}", path.display()))
}

fn load(args: &ConfigArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load_config(&args.config)?;
    for s in &args.set {
        cfg.apply_override(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(r: &PerformanceReport) {
    println!("method = {}", r.method.as_str());
    println!("key_rate_bps = {:e}", r.key_rate_per_second);
    println!("key_rate_per_slot = {:e}", r.key_rate_per_slot);
    println!("qber = {:e}", r.qber);
    println!("e1_share = {:e}", r.shares[0]);
    println!("e2_share = {:e}", r.shares[1]);
    println!("e3_share = {:e}", r.shares[2]);
    if let Some(x) = r.ratio_of_averages {
        println!("qber_ratio_of_averages = {x:e}");
    }
    if let Some(x) = r.quad_error {
        println!("quad_error = {x:e}");
    }
    if let Some(x) = r.qber_stderr {
        println!("qber_stderr = {x:e}");
    }
    if let Some(x) = r.rate_stderr {
        println!("rate_stderr = {x:e}");
    }
    for c in &r.caveats {
        println!("caveat = {}", serde_json::to_string(c).expect("plain enum").trim_matches('"'));
    }
}

fn eval(args: &ConfigArgs, json: bool) -> Result<(), Failure> {
    let cfg = load(args)?;
    let mut reports = vec![run_point(&cfg)?];
    if cfg.mc.attach {
        reports.push(run_point_mc(&cfg, cfg.mc.seed)?);
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialise"));
    } else {
        for (i, r) in reports.iter().enumerate() {
            if i > 0 {
                println!();
            }
            print_report(r);
        }
    }
    Ok(())
}

fn sweep(args: &ConfigArgs, preset: Option<&str>, axes: &[String], out: &PathBuf) -> Result<(), Failure> {
    let cfg = load(args)?;
    let mut spec = match preset {
        Some(p) => figure_preset(p.parse::<Figure>()?),
        None => SweepSpec::new(axes.iter().map(|a| Axis::parse(a)).collect::<Result<_, _>>()?),
    };
    if cfg.mc.attach {
        spec.methods.push(Method::Mc);
    }
    let table = run_sweep(&spec, &cfg);
    emit_csv(&table, out).map_err(|e| io_error(out, e))?;
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("wrote {} rows to {}", table.rows.len(), out.display());
    if failed > 0 {
        let msg = format!("{failed} of {} rows failed; see the error column", table.rows.len());
        return Err(if table.has_tolerance_errors() { Failure::Tolerance(msg) } else { Failure::Validation(msg) });
    }
    Ok(())
}

fn mc(args: &ConfigArgs, slots: Option<u64>, seed: Option<u64>, adjudication: Option<Adjudication>, fov_mode: Option<FovMode>, force: bool) -> Result<(), Failure> {
    let cfg = load(args)?;
    let sim = SimConfig {
        n_slots: slots.unwrap_or(cfg.mc.slots),
        seed: seed.unwrap_or(cfg.mc.seed),
        adjudication: adjudication.unwrap_or(cfg.mc.adjudication),
        fov_mode: fov_mode.unwrap_or(cfg.mc.fov_mode),
        force,
    };
    let (a, b) = cfg.channels()?;
    let tally = match (cfg.mc.eta_a, cfg.mc.eta_b) {
        (None, None) => simulate_link_slots(&sim, &a, &b)?,
        (eta_a, eta_b) => {
            let survival = |eta: Option<f64>, ch: &satqkd::channel::DerivedChannel| {
                eta.unwrap_or(if ch.mu_t > 0.0 { satqkd::performance::expected_eta_r(ch) / ch.mu_t } else { 0.0 })
            };
            let p = SlotParams {
                mu_t: cfg.source.mu_t,
                eta_a: survival(eta_a, &a),
                eta_b: survival(eta_b, &b),
                mu_b_a: a.mu_b,
                mu_b_b: b.mu_b,
            };
            simulate_slots(&sim, &p)?
        }
    };
    println!("adjudication = {}", sim.adjudication.as_str());
    println!("fov_mode = {}", sim.fov_mode.as_str());
    println!("seed = {}", sim.seed);
    println!("slots = {}", tally.slots);
    println!("sifted = {}", tally.sifted);
    println!("errors = {}", tally.errors);
    match (tally.qber_hat, tally.stderr_qber) {
        (Some(q), Some(se)) => {
            println!("qber = {q:e}");
            println!("qber_stderr = {se:e}");
        }
        _ => println!("qber = undefined"),
    }
    println!("sift_rate_per_slot = {:e}", tally.rate_hat);
    println!("sift_rate_stderr = {:e}", tally.stderr_rate);
    Ok(())
}

fn validate(args: &ConfigArgs, out: &PathBuf) -> Result<(), Failure> {
    let cfg = load(args)?;
    let (a, b) = cfg.channels()?;
    let vcfg = ValidationConfig {
        rb_draws: cfg.mc.draws,
        mc_slots: cfg.mc.slots,
        seed: cfg.mc.seed,
        quad: cfg.quad,
        ..ValidationConfig::default()
    };
    let report = validation_report(&a, &b, &vcfg)?;
    std::fs::write(out, report.to_json() + "\n").map_err(|e| io_error(out, e))?;
    print!("{report}");
    if !report.all_consistent() {
        return Err(Failure::Tolerance("one or more checks failed".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors are validation errors (1); clap would use 2
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Eval { config, json } => eval(config, *json),
        Command::Sweep { config, preset, axis, out } => sweep(config, preset.as_deref(), axis, out),
        Command::Mc { config, slots, seed, adjudication, fov_mode, force } => mc(config, *slots, *seed, *adjudication, *fov_mode, *force),
        Command::Validate { config, out } => validate(config, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
