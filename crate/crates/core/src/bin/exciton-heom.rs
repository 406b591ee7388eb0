use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use exciton_heom::config::{clear_coupling, ExperimentConfig};
use exciton_heom::experiments::{self, logspace, Plan, ScanParam};
use exciton_heom::{Error, Result};

#[derive(Parser)]
#[command(name = "exciton-heom", version, about = "Exciton dynamics in a three-site network: HEOM and Redfield")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a single configuration or a named experiment.
    Run {
        #[command(flatten)]
        common: Common,
        /// Hierarchy levels to compare (turns the run into a convergence scan).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        /// Only check the correlation expansion, like validate-expansion.
        #[arg(long)]
        validate_expansion: bool,
    },
    /// Sweep one parameter; one sub-directory per value plus summary.csv.
    Scan {
        #[command(flatten)]
        common: Common,
        /// eta, level or temperature.
        #[arg(long, default_value = "eta")]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Compare the exponential expansion of C(t) with direct quadrature.
    ValidateExpansion {
        #[command(flatten)]
        common: Common,
        /// Check thin and broad shapes at 298 K and 10^4 K.
        #[arg(long)]
        all: bool,
    },
    /// Redfield downhill rates versus eta.
    Rates {
        #[command(flatten)]
        common: Common,
        /// eta values (default: 25 log-spaced values in [1e-4, 0.16]).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

#[derive(Args, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Named experiment (fig3 .. fig13).
    #[arg(long, short)]
    experiment: Option<String>,
    /// Override any field, e.g. --set solver.dt_fs=0.05 (repeatable).
    #[arg(long = "set", value_name = "TABLE.KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    eta: Option<f64>,
    /// Spectral-density amplitude in atomic units.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    level: Option<usize>,
    /// thin or broad.
    #[arg(long)]
    shape: Option<String>,
    /// heom or redfield.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    classical: bool,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for scans.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Common {
    /// Base configuration (experiment, then file) with flag overrides applied.
    /// `placeholder` supplies a coupling for verbs that do not need one.
    fn resolve(&self, placeholder: Option<f64>) -> Result<(ExperimentConfig, Option<Plan>)> {
        let (mut config, plan) = match &self.experiment {
            Some(name) => {
                let p = experiments::preset(name)?;
                info!("{}: {}", p.name, p.description);
                (p.config, Some(p.plan))
            }
            None => (ExperimentConfig::default(), None),
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let keep_dir = self.experiment.is_some() && !text.contains("directory");
            let dir = config.outputs.directory.clone();
            config = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if keep_dir {
                config.outputs.directory = dir;
            }
        }
        let mut sets = Vec::new();
        let sets_coupling = self
            .sets
            .iter()
            .any(|s| s.trim_start().starts_with("bath.eta") || s.trim_start().starts_with("bath.p"));
        if self.eta.is_some() || self.p.is_some() || sets_coupling {
            clear_coupling(&mut config);
        }
        if let Some(v) = self.eta {
            sets.push(format!("bath.eta={v:e}"));
        }
        if let Some(v) = self.p {
            sets.push(format!("bath.p={v:e}"));
        }
        if let Some(v) = self.temperature {
            sets.push(format!("bath.temperature={v:e}"));
        }
        if let Some(v) = self.level {
            sets.push(format!("solver.level={v}"));
        }
        if let Some(v) = &self.shape {
            sets.push(format!("bath.shape=\"{v}\""));
        }
        if let Some(v) = &self.solver {
            sets.push(format!("solver.kind=\"{v}\""));
        }
        if self.classical {
            sets.push("bath.classical=true".into());
        }
        if let Some(v) = self.t_end {
            sets.push(format!("solver.t_end_fs={v:e}"));
        }
        if let Some(v) = &self.out {
            sets.push(format!("outputs.directory=\"{}\"", v.display().to_string().replace('\\', "/")));
        }
        sets.extend(self.sets.iter().cloned());
        if config.bath.eta.is_none() && config.bath.p.is_none() && !sets_coupling && self.eta.is_none() && self.p.is_none() {
            match placeholder {
                Some(eta) => config.bath.eta = Some(eta),
                None => {
                    return Err(Error::Config(
                        "bath: no coupling given; set bath.eta or bath.p (e.g. --eta 0.01)".into(),
                    ))
                }
            }
        }
        Ok((config.with_overrides(&sets)?, plan))
    }
}

fn parse_param(s: &str) -> Result<ScanParam> {
    s.parse()
}

fn validate(common: &Common, all: bool) -> Result<u8> {
    let (config, _) = common.resolve(Some(0.01))?;
    let rows = experiments::validate_expansion(&config, all)?;
    println!("shape,temperature_k,n_matsubara,relative_error,status");
    let mut ok = true;
    for r in &rows {
        ok &= r.passed;
        println!(
            "{},{},{},{:.3e},{}",
            r.shape,
            r.temperature,
            r.check.n_matsubara,
            r.check.error,
            if r.passed { "pass" } else { "fail" }
        );
    }
    Ok(if ok { 0 } else { 3 })
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run {
            common,
            levels,
            validate_expansion,
        } => {
            if validate_expansion {
                return validate(&common, false);
            }
            let (config, plan) = common.resolve(None)?;
            let mut plan = plan.unwrap_or(Plan::Run);
            // an explicit coupling collapses a coupling sweep to one run
            if common.eta.is_some() || common.p.is_some() {
                if let Plan::Scan { param: ScanParam::Eta, .. } | Plan::Rates { .. } = plan {
                    plan = Plan::Run;
                }
            }
            if let Some(levels) = levels {
                plan = Plan::Levels { levels };
            }
            let failures = experiments::execute(&config, &plan, common.jobs)?;
            info!("output written to {}", config.outputs.directory.display());
            Ok(if failures > 0 { 2 } else { 0 })
        }
        Command::Scan { common, param, values } => {
            let param = parse_param(&param)?;
            let (config, plan) = common.resolve(Some(0.01))?;
            let values = match (values, plan) {
                (Some(v), _) => v,
                (None, Some(Plan::Scan { param: p, values })) if p == param => values,
                _ => return Err(Error::Config("scan: --values is required".into())),
            };
            let report = experiments::scan(&config, param, &values, common.jobs)?;
            println!("{} values, {} failed; summary in {}", values.len(), report.failures(), config.outputs.directory.join("summary.csv").display());
            Ok(if report.failures() > 0 { 2 } else { 0 })
        }
        Command::ValidateExpansion { common, all } => validate(&common, all),
        Command::Rates { common, values } => {
            let (config, _) = common.resolve(Some(0.01))?;
            let etas = values.unwrap_or_else(|| logspace(1e-4, 0.16, 25));
            experiments::execute(&config, &Plan::Rates { etas }, common.jobs)?;
            println!("{}", config.outputs.directory.join("rates.csv").display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
