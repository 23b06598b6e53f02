//! Command-line front end for the experiment commands.

use std::path::PathBuf;
use std::process::ExitCode;

use advdetect::experiment::{self, ExperimentConfig};
use advdetect::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "advdetect", version, about = "Craft and detect adversarial examples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dataset's CNN.
    TrainCnn(Common),
    /// Build the feature dataset and train the closeness MLP.
    BuildCloseness(Common),
    /// Attack correctly classified test samples and save them.
    Craft(Common),
    /// Per-attack ROC-AUC table and ROC figures.
    Evaluate(Common),
    /// ROC-AUC of every metric over a range of eps.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Attacked samples per (attack, eps) cell.
    #[arg(long)]
    cap: Option<usize>,
    /// Any config key as `--key value`, e.g. `--dataset mnist_fashion --eps 0.03,0.12`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut pairs = Vec::new();
        let mut it = self.overrides.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| Error::Config(format!("expected `--key`, got `{flag}`")))?;
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| Error::Config(format!("`--{key}` needs a value")))?;
                    (key.to_string(), v.clone())
                }
            };
            pairs.push((key.replace('-', "_"), value));
        }
        if let Some(s) = self.seed {
            pairs.push(("seed".into(), s.to_string()));
        }
        if let Some(d) = &self.out_dir {
            pairs.push(("out_dir".into(), d.display().to_string()));
        }
        if let Some(c) = self.cap {
            pairs.push(("cap".into(), c.to_string()));
        }
        let base = self.config.as_ref().map(ExperimentConfig::load).transpose()?;
        ExperimentConfig::from_pairs(base, &pairs)
    }
}

fn print_rows(rows: &[experiment::AucRow]) {
    println!("attack    eps     n     succ   epi    ale    sci    ent    close  all");
    for r in rows {
        let m = r.metric_auc;
        println!(
            "{:<9} {:<7} {:<5} {:.3}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}",
            r.attack.as_str(),
            r.eps,
            r.n,
            r.success_rate,
            m[0],
            m[1],
            m[2],
            m[3],
            m[4],
            r.all_auc
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainCnn(c) => {
            let cfg = c.config()?;
            let r = experiment::run_train_cnn(&cfg)?;
            for h in &r.history {
                println!("epoch {:>3}  loss {:.4}  train acc {:.4}", h.epoch, h.loss, h.accuracy);
            }
            println!("test accuracy {:.4}", r.test_accuracy);
        }
        Command::BuildCloseness(c) => {
            let cfg = c.config()?;
            let r = experiment::run_build_closeness(&cfg)?;
            println!("feature rows {}  MLP train accuracy {:.4}", r.rows, r.mlp_train_accuracy);
        }
        Command::Craft(c) => {
            let cfg = c.config()?;
            for s in experiment::run_craft(&cfg)? {
                println!("{:<9} eps {:<7} n {:<5} success {:.3}", s.kind.as_str(), s.eps, s.outcomes.len(), s.success_rate());
            }
        }
        Command::Evaluate(c) => print_rows(&experiment::run_evaluate(&c.config()?)?),
        Command::Sweep(c) => print_rows(&experiment::run_sweep(&c.config()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
