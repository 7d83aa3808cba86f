use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dlmp_core::pep::{pep_schedule, read_history_csv, History};
use dlmp_core::runner::{read_case_file, write_confidence_csv, write_pep_csv, write_schedule_csv, ScenarioRun};
use dlmp_core::{run_scenario, sweep_confidence, CaseFile, HighsSolver, ScenarioSpec};

#[derive(Parser)]
#[command(name = "dlmp", version, about = "Day-ahead distribution market clearing with DLMPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// γ-efficient VRE profile for every hour of the history.
    Pep {
        #[arg(long, default_value = "data/vre_history.csv")]
        samples: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        gamma: f64,
        /// Directory for pep.csv; stdout when omitted.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Clear the market and print the schedule.
    Clear(Market),
    /// Clear the market and print the DLMP table.
    Dlmp(Market),
    /// Run a named study (I, II, III or IV, optionally with +bess).
    Scenario {
        name: String,
        #[command(flatten)]
        market: Market,
    },
    /// Prices at one node for several probability levels.
    SweepGamma {
        /// Comma-separated probability levels.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.75")]
        gammas: Vec<f64>,
        /// External id of the node to report.
        #[arg(long, default_value_t = 60)]
        probe: usize,
        /// Start from a named study instead of the flag defaults.
        #[arg(long)]
        scenario: Option<String>,
        #[command(flatten)]
        market: Market,
    },
}

#[derive(Args)]
struct Market {
    #[arg(long, default_value = "data/ieee69.json")]
    case: PathBuf,
    #[arg(long, default_value = "data/vre_history.csv")]
    samples: PathBuf,
    #[arg(long)]
    gamma: Option<f64>,
    /// VRE scale; 0 removes the VRE units.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    load_scale: Option<f64>,
    /// Seed for the generated bids; the case file's seed by default.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the case's storage units.
    #[arg(long)]
    bess: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Market {
    fn spec(&self, base: ScenarioSpec) -> ScenarioSpec {
        ScenarioSpec {
            load_scale: self.load_scale.unwrap_or(base.load_scale),
            vre_scale: self.k.unwrap_or(base.vre_scale),
            gamma: self.gamma.unwrap_or(base.gamma),
            bess: base.bess || self.bess,
            seed: self.seed.or(base.seed),
            name: base.name,
        }
    }

    fn inputs(&self) -> Result<(CaseFile, History)> {
        let file = read_case_file(&self.case).context("case")?;
        let hist = read_history_csv(&self.samples).context("samples")?;
        Ok((file, hist))
    }

    fn run(&self, spec: &ScenarioSpec, write_all: bool) -> Result<ScenarioRun> {
        let (file, hist) = self.inputs()?;
        let dir = if write_all { self.out_dir.as_deref() } else { None };
        let run = run_scenario(spec, &file, &hist, dir, &HighsSolver)?;
        let s = &run.record.summary;
        eprintln!(
            "{}: objective {:.4} $, substation {:.4} MWh, VRE curtailed {:.4} MWh, {:.2}s",
            spec.name, s.objective, s.substation_mwh, s.vre_curtailed_mwh, run.record.elapsed_s
        );
        Ok(run)
    }
}

fn custom() -> ScenarioSpec {
    ScenarioSpec {
        name: "custom".into(),
        load_scale: 1.0,
        vre_scale: 1.0,
        gamma: 0.75,
        bess: false,
        seed: None,
    }
}

/// `dir/name` when a directory is given, stdout otherwise.
fn sink(dir: Option<&Path>, name: &str) -> Result<Box<dyn Write>> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d).with_context(|| format!("output: {}", d.display()))?;
            let path = d.join(name);
            let f = File::create(&path).with_context(|| format!("output: {}", path.display()))?;
            Ok(Box::new(f))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pep { samples, gamma, out_dir } => {
            let hist = read_history_csv(&samples).context("samples")?;
            let sets = hist.sample_sets().context("samples")?;
            let results = pep_schedule(&sets, gamma).context("pep")?;
            write_pep_csv(&hist.sites, &results, sink(out_dir.as_deref(), "pep.csv")?).context("output")?;
        }
        Command::Clear(m) => {
            let run = m.run(&m.spec(custom()), false)?;
            let out = sink(m.out_dir.as_deref(), "schedule.csv")?;
            write_schedule_csv(&run.case, &run.cleared.solution.schedules, out).context("output")?;
        }
        Command::Dlmp(m) => {
            let run = m.run(&m.spec(custom()), false)?;
            run.report.write_csv(sink(m.out_dir.as_deref(), "dlmp.csv")?).context("output")?;
        }
        Command::Scenario { name, market } => {
            let base = ScenarioSpec::preset(&name).context("scenario")?;
            let run = market.run(&market.spec(base), true)?;
            let json = serde_json::to_string_pretty(&run.record).context("output")?;
            println!("{json}");
        }
        Command::SweepGamma {
            gammas,
            probe,
            scenario,
            market,
        } => {
            let base = match scenario {
                Some(name) => ScenarioSpec::preset(&name).context("scenario")?,
                None => custom(),
            };
            let spec = market.spec(base);
            let (file, hist) = market.inputs()?;
            let rows = sweep_confidence(&spec, &file, &hist, &gammas, probe, &HighsSolver).context("sweep")?;
            write_confidence_csv(&rows, sink(market.out_dir.as_deref(), "confidence.csv")?).context("output")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe downstream (`dlmp dlmp | head`) is not a failure.
        Err(e)
            if e.chain()
                .any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
