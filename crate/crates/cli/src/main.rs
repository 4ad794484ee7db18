use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use factarg::corpus::{ArgumentScheme, Stance};
use factarg::eval::render_table;
use factarg::generator::{ArgU, GenerationRequest, Variant};
use factarg::pipeline::{Pipeline, PipelineConfig, StageReport, StageStatus, TrainTarget};

#[derive(Debug, Parser)]
#[command(name = "pipeline", version, about = "Fact-grounded argument generation pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration file. Without it the reference configuration is used.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Start from the reduced toy configuration instead of the reference one.
    #[arg(long, global = true, conflicts_with = "config")]
    toy: bool,
    /// Override the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding upstream stage outputs (defaults to --out).
    #[arg(long = "in", global = true, value_name = "DIR")]
    input: Option<PathBuf>,
    /// Working directory stages write into.
    #[arg(long, global = true, value_name = "DIR", default_value = "work")]
    out: PathBuf,
    /// Rerun stages whose recorded configuration or inputs differ.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    PrintConfig,
    /// Write the synthetic corpus and knowledge base.
    Fixture,
    /// Train one model.
    Train {
        /// argspan, argspanscheme-{parallel,pipelined} or argu-{mono,dual,stance,scheme}.
        #[arg(long)]
        model: TrainTarget,
    },
    /// Ground and tag the unlabeled and parallel corpora.
    Annotate,
    /// Map grounded spans to knowledge-base variables.
    Normalize,
    /// Filter the parallel corpus and merge the training set.
    Filter,
    /// Generate arguments for the held-out rows of a trained generator.
    Generate {
        #[arg(long)]
        variant: Variant,
    },
    /// Score generations and print the comparison table.
    Evaluate {
        #[arg(long = "variant", required = true)]
        variants: Vec<Variant>,
    },
    /// Run every stage in order.
    RunAll {
        #[arg(long = "variant", default_values = ["dual"])]
        variants: Vec<Variant>,
    },
    /// Generate one argument from a saved generator checkpoint.
    Sample {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long)]
        topic: String,
        /// Fact variable; repeat for several.
        #[arg(long = "variable", required = true)]
        variables: Vec<String>,
        #[arg(long)]
        stance: Option<Stance>,
        #[arg(long)]
        scheme: Option<ArgumentScheme>,
        /// Seed for the variable order.
        #[arg(long = "order-seed", default_value_t = 0)]
        order_seed: u64,
    },
}

fn load_config(global: &Global) -> Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None if global.toy => PipelineConfig::toy(),
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn pipeline(global: &Global, config: PipelineConfig) -> Result<Pipeline> {
    let mut p = Pipeline::new(config, &global.out)?;
    if let Some(input) = &global.input {
        p.input = input.clone();
    }
    p.force = global.force;
    Ok(p)
}

fn print_report(report: &StageReport) {
    let status = match report.status {
        StageStatus::Ran => "ran",
        StageStatus::UpToDate => "up to date",
    };
    let counts: Vec<String> = report.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{}: {status} ({})", report.stage, counts.join(", "));
}

fn print_table(p: &Pipeline, variants: &[Variant]) -> Result<()> {
    let reports = variants.iter().map(|&v| p.load_report(v)).collect::<Result<Vec<_>, _>>()?;
    print!("{}", render_table(&reports));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.global)?;
    match cli.command {
        Command::PrintConfig => print!("{}", config.to_toml()?),
        Command::Fixture => print_report(&pipeline(&cli.global, config)?.fixture()?),
        Command::Train { model } => print_report(&pipeline(&cli.global, config)?.train(model)?),
        Command::Annotate => print_report(&pipeline(&cli.global, config)?.annotate()?),
        Command::Normalize => print_report(&pipeline(&cli.global, config)?.normalize()?),
        Command::Filter => print_report(&pipeline(&cli.global, config)?.filter()?),
        Command::Generate { variant } => print_report(&pipeline(&cli.global, config)?.generate(variant)?),
        Command::Evaluate { variants } => {
            let p = pipeline(&cli.global, config)?;
            for &v in &variants {
                print_report(&p.evaluate(v)?);
            }
            print_table(&p, &variants)?;
        }
        Command::RunAll { variants } => {
            let p = pipeline(&cli.global, config)?;
            for report in p.run_all(&variants)? {
                print_report(&report);
            }
            print_table(&p, &variants)?;
        }
        Command::Sample {
            checkpoint,
            topic,
            variables,
            stance,
            scheme,
            order_seed,
        } => {
            let model = ArgU::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let variant = model.config().variant;
            if stance.is_some() && !variant.uses_stance() {
                bail!("the {variant} generator takes no stance code");
            }
            if scheme.is_some() && !variant.uses_scheme() {
                bail!("the {variant} generator takes no scheme code");
            }
            let record = model.generate(&GenerationRequest {
                topic,
                variables,
                stance,
                scheme,
                seed: order_seed,
            })?;
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
