use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use micshift::config::Condition;
use micshift::manifest::Subset;
use micshift::pipeline::{convert_file, Pipeline};
use micshift::{Error, Result, RunConfig};
use micshift_core::cyclegan::{composite_grad_check, Direction, DiscriminatorCfg, GeneratorCfg};
use micshift_core::tensor::layer_suite;
use serde_json::{json, Value};

/// Finite-difference pass threshold of the gradient suite.
const GRAD_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "micshift",
    version,
    about = "Microphone-conversion experiments for sound event classification"
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configuration's output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Per-epoch progress on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    AToB,
    BToA,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetArg {
    McTrain,
    SecTrain,
    Val,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize, filter and split the corpus.
    Synth,
    /// Train source-to-target conversion models.
    TrainMc {
        /// One target device; all targets the conditions need by default.
        #[arg(long)]
        target: Option<String>,
    },
    /// Convert a spectrogram file with a conversion checkpoint.
    Convert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "a-to-b")]
        direction: Dir,
    },
    /// Train classifiers for one condition (by label) or all of them.
    TrainSec {
        #[arg(long)]
        condition: Option<String>,
    },
    /// Evaluate trained conditions and write the report and table.
    Eval,
    /// Spectral analysis of a corpus split, or of a conversion checkpoint
    /// against the analytic device difference.
    Analyze {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "val")]
        subset: SubsetArg,
        #[arg(long)]
        output: PathBuf,
    },
    /// Penultimate-layer embeddings of a trained condition, as CSV.
    Embed {
        #[arg(long)]
        condition: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Finite-difference checks of every layer and the composite loss.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
    /// Every stage: synth, train-mc, train-sec, eval.
    Run,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out_dir {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pipeline(cli: &Cli) -> Result<Pipeline> {
    let mut p = Pipeline::new(&load_config(cli)?)?;
    p.verbose = cli.verbose;
    Ok(p)
}

fn run(cli: &Cli) -> Result<Value> {
    match &cli.cmd {
        Cmd::Synth => {
            let p = pipeline(cli)?;
            let s = p.synth()?;
            Ok(json!({
                "corpus": p.corpus_dir(),
                "segments": [s.mc_train.n_segments(), s.sec_train.n_segments(), s.val.n_segments()],
                "provenance": p.provenance(),
            }))
        }
        Cmd::TrainMc { target } => {
            let p = pipeline(cli)?;
            let splits = p.load_splits()?;
            let targets = match target {
                Some(t) => vec![t.clone()],
                None => p.mc_targets(),
            };
            let mut out = serde_json::Map::new();
            for t in &targets {
                let h = p.train_mc(&splits, t)?;
                out.insert(t.clone(), json!(h.last().map(|r| r.loss_cycle)));
            }
            Ok(json!({ "final_cycle_loss": out, "provenance": p.provenance() }))
        }
        Cmd::Convert {
            checkpoint,
            input,
            output,
            direction,
        } => {
            let dir = match direction {
                Dir::AToB => Direction::AToB,
                Dir::BToA => Direction::BToA,
            };
            let prov = convert_file(checkpoint, input, output, dir)?;
            Ok(json!({ "output": output, "provenance": prov }))
        }
        Cmd::TrainSec { condition } => {
            let p = pipeline(cli)?;
            let splits = p.load_splits()?;
            let conds: Vec<Condition> = match condition {
                Some(l) => vec![p.condition(l)?.clone()],
                None => p.config().conditions.clone(),
            };
            for c in &conds {
                p.train_condition(&splits, c)?;
            }
            Ok(
                json!({ "trained": conds.iter().map(Condition::label).collect::<Vec<_>>(), "provenance": p.provenance() }),
            )
        }
        Cmd::Eval => {
            let p = pipeline(cli)?;
            let splits = p.load_splits()?;
            let r = p.eval(&splits)?;
            let overall: serde_json::Map<String, Value> = r
                .reports
                .iter()
                .map(|r| (r.condition.clone(), json!([r.overall_minus_s, r.ci95])))
                .collect();
            Ok(json!({ "report": p.eval_dir().join("report.json"), "overall_minus_s": overall }))
        }
        Cmd::Analyze {
            checkpoint,
            subset,
            output,
        } => {
            let p = pipeline(cli)?;
            let splits = p.load_splits()?;
            match checkpoint {
                Some(ck) => {
                    let r = p.analyze_checkpoint(&splits, ck, output)?;
                    Ok(json!({ "output": output, "mae_db": r.mae_db, "recorded_mae_db": r.recorded_mae_db }))
                }
                None => {
                    let s = match subset {
                        SubsetArg::McTrain => Subset::McTrain,
                        SubsetArg::SecTrain => Subset::SecTrain,
                        SubsetArg::Val => Subset::Val,
                    };
                    p.analyze_corpus(splits.get(s), output)?;
                    Ok(json!({ "output": output }))
                }
            }
        }
        Cmd::Embed { condition, output } => {
            let p = pipeline(cli)?;
            let splits = p.load_splits()?;
            let n = p.write_embeddings(&splits, p.condition(condition)?, output)?;
            Ok(json!({ "output": output, "rows": n }))
        }
        Cmd::Gradcheck { cases } => {
            let seed = cli.seed.unwrap_or(0);
            let checks = layer_suite(*cases, seed)?;
            let gen = GeneratorCfg {
                base_channels: 2,
                n_resblocks: 1,
                ..Default::default()
            };
            let (g, d) = composite_grad_check(&gen, &DiscriminatorCfg { base_channels: 2 }, 16, 8, seed)?;
            let worst = checks
                .iter()
                .map(|c| c.report.max_rel_error)
                .chain([g.max_rel_error, d.max_rel_error])
                .fold(0.0, f64::max);
            let report = json!({
                "layers": checks.iter().map(|c| json!({
                    "layer": c.layer,
                    "input_shape": c.input_shape,
                    "max_rel_error": c.report.max_rel_error,
                    "checked": c.report.checked,
                    "excluded": c.report.excluded,
                })).collect::<Vec<_>>(),
                "composite": { "generators": g.max_rel_error, "discriminators": d.max_rel_error },
                "max_rel_error": worst,
                "tolerance": GRAD_TOL,
            });
            if !(worst < GRAD_TOL) {
                return Err(Error::Config(format!("gradient check failed: {report}")));
            }
            Ok(report)
        }
        Cmd::Run => {
            let p = pipeline(cli)?;
            let r = p.run_all()?;
            Ok(json!({ "report": p.eval_dir().join("report.json"), "conditions": r.reports.len() }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
