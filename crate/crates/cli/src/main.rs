use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use degsel_core::bench::{
    generate_dataset, render_markdown, render_robustness, run_experiment, run_robustness, CaseId,
    ExperimentConfig, Perturbation, ProviderMode,
};
use degsel_core::criteria::CriterionId;
use degsel_core::pipeline::{run_inference, CandidateSpec, InferenceInput};
use degsel_core::remote::ENDPOINT_ENV;
use degsel_core::trajectory::{read_trajectories, write_trajectories};

#[derive(Parser)]
#[command(
    name = "degsel",
    version,
    about = "Select a stochastic degradation model for a health-indicator trajectory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labeled run-to-failure dataset as JSON lines.
    Generate {
        #[arg(long, default_value = "case2")]
        case: CaseId,
        /// Trajectories per class (default depends on the case).
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run inference on one trajectory and print the result as JSON.
    Select {
        /// JSON-lines trajectory file; the first record is used unless --unit is given.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        unit: Option<String>,
        #[arg(long, default_value = "")]
        context: String,
        #[arg(long, default_value = "case2")]
        case: CaseId,
        /// JSON array of candidate models, replacing the case set.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        /// Fail on leakage warnings instead of reporting them.
        #[arg(long)]
        strict: bool,
    },
    /// Run the benchmark for one case and print a markdown summary.
    Bench {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        perturbation: Option<Perturbation>,
    },
    /// Run the benchmark under every perturbation mode.
    Robustness {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    criterion: Option<CriterionId>,
    #[arg(long)]
    delta: Option<f64>,
    /// Evidence bank in JSON lines; the shipped starter bank by default.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Text-generation endpoint; switches the providers to remote mode.
    #[arg(long, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<CaseId>,
    /// Comma-separated progress percentages.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u32>>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    force_uncertain: bool,
    /// Report file; `.md` writes markdown, anything else CSV.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(c) = self.case {
            cfg.case = c;
        }
        if let Some(n) = &self.n {
            cfg.n_values = n.clone();
        }
        if let Some(k) = self.per_class {
            cfg.per_class_count = k;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.force_uncertain {
            cfg.force_uncertain = true;
        }
        if let Some(o) = &self.output {
            cfg.output_path = Some(o.clone());
        }
        let c = &self.common;
        if let Some(cr) = c.criterion {
            cfg.criterion = cr;
        }
        if let Some(d) = c.delta {
            cfg.delta = d;
        }
        if let Some(b) = &c.bank {
            cfg.evidence_bank = Some(b.clone());
        }
        if let Some(e) = &c.endpoint {
            cfg.endpoint = Some(e.clone());
            cfg.provider_mode = ProviderMode::Remote;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Generate {
            case,
            per_class,
            seed,
            out,
        } => {
            let data = generate_dataset(case, per_class.unwrap_or(case.default_per_class()), seed)?;
            write_trajectories(&out, &data)?;
            eprintln!("wrote {} trajectories to {}", data.len(), out.display());
        }
        Command::Select {
            trajectory,
            unit,
            context,
            case,
            candidates,
            common,
            strict,
        } => {
            let trajs = read_trajectories(&trajectory)?;
            let traj = match &unit {
                Some(u) => trajs.into_iter().find(|t| &t.unit_id == u),
                None => trajs.into_iter().next(),
            };
            let Some(traj) = traj else {
                bail!("no matching trajectory in {}", trajectory.display());
            };
            let spec = match candidates {
                Some(p) => CandidateSpec::Custom(degsel_core::model_space::CandidateSet::load(p)?),
                None => case.spec(),
            };
            let exp = ExperimentArgs {
                config: None,
                case: None,
                n: None,
                per_class: None,
                seed: None,
                force_uncertain: false,
                output: None,
                common,
            }
            .resolve()?;
            let mut pipeline = exp.pipeline_config();
            pipeline.strict = strict;
            let input = InferenceInput {
                trajectory: traj,
                context,
                candidates: spec,
            };
            let result = run_inference(&input, &exp.bank()?, &exp.providers(), &pipeline)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Bench { exp, perturbation } => {
            let mut cfg = exp.resolve()?;
            if let Some(p) = perturbation {
                cfg.perturbation = p;
            }
            let report = run_experiment(&cfg).context("benchmark failed")?;
            print!("{}", render_markdown(&report));
            println!("\nwall time: {:.2} s", report.runtime_seconds);
        }
        Command::Robustness { exp } => {
            let cfg = exp.resolve()?;
            let reports = run_robustness(&cfg).context("robustness sweep failed")?;
            let table = render_robustness(&reports);
            if let Some(path) = &cfg.output_path {
                std::fs::write(path, &table)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{table}");
        }
    }
    Ok(())
}
