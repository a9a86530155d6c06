use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use neurorisk::pipeline::{cmd_diffuse, cmd_report, cmd_run, cmd_simulate, PipelineConfig};
use neurorisk::{Error, Result};

#[derive(Parser)]
#[command(name = "neurorisk", version, about = "Multimodal physiological risk pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (flat key = value with [section] headers); defaults apply
    /// when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides [run] seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides [paths] out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides [run] workers (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled cohort.
    Simulate(Common),
    /// Preprocess, embed, train, score and write biomarker and metric reports.
    Run(Common),
    /// Simulate risk diffusion from a seed region over the region graph.
    Diffuse(Common),
    /// Merge run reports into one summary table.
    Report {
        /// Run directories or report.json files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "summary")]
        out: PathBuf,
        /// Merge runs even when their config hashes differ.
        #[arg(long)]
        allow_mixed: bool,
    },
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let r = cmd_simulate(&c.resolve()?)?;
            log::info!("simulated {} subjects ({} positive)", r.n_subjects, r.positives);
        }
        Command::Run(c) => {
            let cfg = c.resolve()?;
            let r = cmd_run(&cfg)?;
            for (name, head) in &r.heads {
                println!("{name}: test auc {:.3} acc {:.3} f1 {:.3}", head.test.auc, head.test.acc, head.test.f1);
            }
            println!("baseline: test auc {:.3} acc {:.3}", r.baseline.auc, r.baseline.acc);
            println!("reports written to {}", cfg.paths.out.display());
        }
        Command::Diffuse(c) => {
            let cfg = c.resolve()?;
            cmd_diffuse(&cfg)?;
            println!("trajectory written to {}", cfg.paths.out.join("diffusion.csv").display());
        }
        Command::Report {
            inputs,
            out,
            allow_mixed,
        } => {
            let s = cmd_report(&inputs, &out, allow_mixed)?;
            for a in &s.aggregate {
                println!("{}: {} run(s), mean test auc {:.3}", a.model, a.runs, a.mean["auc"]);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}

fn chain(e: &Error) -> String {
    let mut s = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(inner) = src {
        let text = inner.to_string();
        if !s.contains(&text) {
            s.push_str(": ");
            s.push_str(&text);
        }
        src = inner.source();
    }
    s
}
