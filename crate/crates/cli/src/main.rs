use std::path::PathBuf;
use std::process::ExitCode;

use bregmn::run::{self, RunRecord};
use bregmn::{Error, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

/// Scaled-Bregman generative modeling experiments.
#[derive(Parser)]
#[command(name = "bregmn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// f-divergence, separable and scaled Bregman divergences by quadrature.
    Divergence(Common),
    /// Fit a density ratio from samples and score it.
    DreFit(Common),
    /// Train a generator on the scaled Bregman objective.
    Train(Common),
    /// Train the same generator on the plain f-divergence.
    BaselineTrain(Common),
    /// Check the Wasserstein bound over a grid of Gaussian pairs.
    VerifyProp1(Common),
    /// Gradient magnitudes along a disjoint-support shift family.
    SupportSignal(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Divergence(c)
            | Command::DreFit(c)
            | Command::Train(c)
            | Command::BaselineTrain(c)
            | Command::VerifyProp1(c)
            | Command::SupportSignal(c) => c,
        }
    }
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Json(_) | Error::InvalidParameter { .. } => EXIT_CONFIG,
        _ => EXIT_FAILED,
    }
}

fn set_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("BREGMN_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| Error::Config {
        path: "BREGMN_THREADS".into(),
        reason: format!("expected a positive integer, got {v:?}"),
    })?;
    if n == 0 {
        return Err(Error::Config {
            path: "BREGMN_THREADS".into(),
            reason: "must be at least 1".into(),
        });
    }
    // a pool that already exists keeps its size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn load(c: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&c.config).map_err(|e| match e {
        Error::Io(io) => Error::Config {
            path: c.config.display().to_string(),
            reason: io.to_string(),
        },
        other => other,
    })?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(cfg.output_dir()));
    Ok((cfg, out))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn execute(cmd: &Command) -> Result<RunRecord, Error> {
    let c = cmd.common();
    let (cfg, out) = load(c)?;
    let say = |s: String| {
        if !c.quiet {
            println!("{s}");
        }
    };
    let record = match cmd {
        Command::Divergence(_) => {
            let (rec, r) = run::run_divergence(&cfg, &out)?;
            say(format!("f-divergence       {:.10}", r.f_divergence));
            say(format!("separable Bregman  {:.10}", r.separable_bregman));
            say(format!("scaled Bregman     {:.10}", r.scaled_bregman));
            say(json(&r));
            rec
        }
        Command::DreFit(_) => {
            let (rec, r) = run::run_dre_fit(&cfg, &out)?;
            say(json(&r));
            rec
        }
        Command::Train(_) | Command::BaselineTrain(_) => {
            let baseline = matches!(cmd, Command::BaselineTrain(_));
            let (rec, st) = run::run_train(&cfg, &out, baseline)?;
            say(format!(
                "{} steps, final loss {:.6}, phi[0] {:.6}",
                st.step,
                st.losses.last().copied().unwrap_or(f64::NAN),
                st.phi.first().copied().unwrap_or(f64::NAN)
            ));
            rec
        }
        Command::VerifyProp1(_) => {
            let (rec, reports) = run::run_prop1(&cfg, &out)?;
            say(json(&reports));
            rec
        }
        Command::SupportSignal(_) => {
            let (rec, rows) = run::run_support_signal(&cfg, &out)?;
            say("theta,gap,f_divergence_grad,scaled_bregman_grad,pipeline_grad".into());
            for r in &rows {
                say(format!(
                    "{},{},{:.3e},{:.3e},{:.3e}",
                    r.theta, r.gap, r.f_divergence_grad, r.scaled_bregman_grad, r.pipeline_grad
                ));
            }
            rec
        }
    };
    say(format!("wrote {}", out.join("run.json").display()));
    Ok(record)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = set_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match execute(&cli.command) {
        Ok(rec) if rec.succeeded() => ExitCode::SUCCESS,
        Ok(rec) => {
            eprintln!("verification failed: {}", rec.command);
            ExitCode::from(EXIT_FAILED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
