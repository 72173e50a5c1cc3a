use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use knudsen::coupling::CouplingMode;
use knudsen::run::{
    planar_hitting_check, run_couple, run_simulate, run_validate, write_couple_outputs, write_json, PatchReport,
};
use knudsen::scenario::Scenario;
use knudsen::{Error, Result};

#[derive(Parser)]
#[command(name = "knudsen", version, about = "Free molecular flow with Maxwell boundaries and coupling-time estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-chain ensemble, tested against equilibrium at t = 1, 5, 10.
    Simulate(Common),
    /// Coupled pairs: survival curve, tail fit and marginal checks.
    Couple(Common),
    /// Property suite on the configured domain; exits nonzero on failure.
    Validate(Common),
    /// Boundary patches used by the coupling on the configured domain.
    Patches(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON); the unit disk with default settings if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of pairs (or particles for `simulate`).
    #[arg(long)]
    pairs: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores if omitted. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = match &self.config {
            Some(p) => Scenario::from_path(p)?,
            None => Scenario::unit_disk(),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(n) = self.pairs {
            s.n_pairs = n;
        }
        if let Some(out) = &self.out {
            s.output = out.clone();
        }
        s.validate()?;
        Ok(s)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<bool> {
    let (common, which) = match &command {
        Command::Simulate(c) => (c, 0),
        Command::Couple(c) => (c, 1),
        Command::Validate(c) => (c, 2),
        Command::Patches(c) => (c, 3),
    };
    let scenario = common.scenario()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = common.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| match scenario.dimension {
        2 => dispatch2(&scenario, which),
        3 => dispatch::<3>(&scenario, which),
        4 => dispatch::<4>(&scenario, which),
        d => Err(Error::InvalidConfig(format!("unsupported dimension {d}"))),
    })
}

fn dispatch2(s: &Scenario, which: u8) -> Result<bool> {
    if which != 2 {
        return dispatch::<2>(s, which);
    }
    let model = s.build::<2>()?;
    let samples = (s.n_pairs as usize).max(10_000);
    let check = |seed| planar_hitting_check(&model, samples, seed);
    validate(s, &model, Some(&check))
}

fn dispatch<const N: usize>(s: &Scenario, which: u8) -> Result<bool> {
    let model = s.build::<N>()?;
    std::fs::create_dir_all(&s.output)?;
    match which {
        0 => {
            let r = run_simulate(s, &model)?;
            write_json(&s.output.join("simulate.json"), &r)?;
            for c in &r.checks {
                println!("t = {:>5}: position p = {:.4}, speed p = {:.4}", c.t, c.position_p, c.speed_p);
            }
            println!("{}", if r.passed { "stationarity: pass" } else { "stationarity: FAIL" });
            Ok(r.passed)
        }
        1 => {
            let out = run_couple(s, &model)?;
            write_couple_outputs(&s.output, &out)?;
            let sm = &out.summary;
            println!("pairs {} merged {} censored fraction {:.4}", sm.n_pairs, sm.n_merged, sm.censor_fraction);
            match &sm.fit {
                Some(f) => println!(
                    "tail slope on [{}, {}]: {:.3} +/- {:.3}",
                    f.t_lo,
                    f.t_hi,
                    f.slope,
                    1.959964 * f.slope_stderr
                ),
                None => println!("tail fit unavailable: {}", sm.fit_error.as_deref().unwrap_or("")),
            }
            println!("outputs written to {}", s.output.display());
            Ok(true)
        }
        2 => validate(s, &model, None),
        _ => {
            let report = match &model.coupler.mode {
                CouplingMode::Convex => PatchReport::WholeBoundary,
                CouplingMode::Patch(p) => PatchReport::new(p),
            };
            write_json(&s.output.join("patches.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
    }
}

fn validate<const N: usize>(
    s: &Scenario,
    model: &knudsen::scenario::Model<N>,
    hitting: Option<&dyn Fn(u64) -> Result<knudsen::validation::DensityCheck>>,
) -> Result<bool> {
    std::fs::create_dir_all(&s.output)?;
    let r = run_validate(s, model, hitting)?;
    write_json(&s.output.join("validate.json"), &r)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    println!("{}", if r.passed { "validate: pass" } else { "validate: FAIL" });
    Ok(r.passed)
}
