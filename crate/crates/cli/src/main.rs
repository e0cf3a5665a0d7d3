//! `vqa` — multiple-choice video QA evaluation harness.
//!
//! Subcommands mirror the pipeline stages (`split`, `plan`, `infer`, `vote`,
//! `score`) plus `run`, which composes them end to end from a single JSON
//! run config. Stages communicate through files, so any stage can be re-run
//! from persisted artifacts.
//!
//! Exit codes: 0 success, 1 usage, 2 validation/config, 3 backend failure,
//! 4 I/O.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use vqa_core::dataset::{Granularity, SplitConfig};
use vqa_core::ensemble::{load_prediction_dir, read_final_csv, FinalPredictions, VoteConfig};
use vqa_core::pipeline::{
    self, plans_jsonl, RunConfig, StagePresets, VoteSpec, VOTE_PRESET_TABLE4,
};
use vqa_core::sampling::{parse_presets, plan_all, resolve_preset};
use vqa_core::{Error, Result};

#[derive(Parser)]
#[command(name = "vqa", version, about = "Multiple-choice video QA evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write holdout and k-fold split manifests for a dataset
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Fraction of units held out for validation
        #[arg(long, default_value_t = 0.05)]
        holdout: f64,
        #[arg(long, default_value_t = 5)]
        folds: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// by_video or by_question
        #[arg(long, default_value = "by_video")]
        granularity: String,
    },
    /// Emit frame plans for one sampling preset as JSONL
    Plan {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        dataset: PathBuf,
        /// Output file; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
        /// Extra presets that shadow the built-ins
        #[arg(long)]
        presets_file: Option<PathBuf>,
    },
    /// Run only the inference stage of a run config
    Infer {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the config's global seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Vote over persisted prediction sets
    Vote {
        /// A named preset (paper_table4) or a path to a vote-config JSON
        #[arg(long)]
        config: String,
        /// Directory of prediction JSONL files
        #[arg(long)]
        sets: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score final answers against dataset labels
    Score {
        #[arg(long = "final")]
        final_csv: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Prediction sets for per-set accuracy and agreement
        #[arg(long)]
        sets: Option<PathBuf>,
        /// Tally dump for abstention accounting (default: tally.json next to
        /// the final CSV, when present)
        #[arg(long)]
        tally: Option<PathBuf>,
    },
    /// Run the full pipeline: split, plan, infer, vote, score
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the config's global seed
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_run_config(path: &Path, output: Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = output {
        cfg.output_dir = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split { dataset, output, holdout, folds, seed, granularity } => {
            let granularity = match granularity.as_str() {
                "by_video" => Granularity::ByVideo,
                "by_question" => Granularity::ByQuestion,
                other => {
                    return Err(Error::Usage(format!(
                        "unknown granularity {other:?}; use by_video or by_question"
                    )))
                }
            };
            let cfg = SplitConfig { holdout_fraction: holdout, k_folds: folds, seed, granularity };
            let ds = pipeline::load_dataset_file(&dataset)?;
            let manifests = pipeline::stage_split(&ds, &cfg, &output)?;
            println!(
                "wrote holdout + {} fold manifests to {}",
                manifests.len() - 1,
                output.join("splits").display()
            );
        }
        Command::Plan { preset, dataset, output, presets_file } => {
            let user = match presets_file {
                Some(path) => Some(parse_presets(std::fs::File::open(path)?)?),
                None => None,
            };
            let cfg = resolve_preset(&preset, user.as_ref())?;
            let ds = pipeline::load_dataset_file(&dataset)?;
            let metas: Vec<_> = ds
                .video_ids()
                .into_iter()
                .map(|id| ds.video(&id).expect("id from dataset").clone())
                .collect();
            let jsonl = plans_jsonl(&plan_all(&metas, &cfg)?)?;
            match output {
                Some(path) => {
                    std::fs::write(&path, jsonl)?;
                    println!("wrote {} plans to {}", metas.len(), path.display());
                }
                None => {
                    std::io::stdout().write_all(jsonl.as_bytes())?;
                }
            }
        }
        Command::Infer { config, output, seed } => {
            let cfg = load_run_config(&config, output, seed)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let ds = pipeline::load_dataset_file(&cfg.dataset)?;
            let ds_eval = pipeline::eval_dataset(&ds, &cfg)?;
            let plans = pipeline::stage_plan(&ds_eval, &cfg, &cfg.output_dir)?;
            let sets = pipeline::stage_infer(&ds_eval, &cfg, &plans, &cfg.output_dir)?;
            println!(
                "inferred {} prediction sets over {} questions into {}",
                sets.len(),
                ds_eval.len(),
                cfg.output_dir.join("predictions").display()
            );
        }
        Command::Vote { config, sets, output } => {
            let spec = if config == VOTE_PRESET_TABLE4 {
                VoteSpec::Named(config)
            } else if Path::new(&config).exists() {
                let text = std::fs::read_to_string(&config)?;
                let cfg: VoteConfig = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("bad vote config {config}: {e}")))?;
                VoteSpec::Custom(cfg)
            } else {
                return Err(Error::Usage(format!(
                    "vote config {config:?} is neither a known preset ({VOTE_PRESET_TABLE4}) nor a file"
                )));
            };
            let (final_, loaded) =
                pipeline::stage_vote(&sets, &spec, &StagePresets::default(), &output)?;
            println!(
                "voted over {} sets, {} questions ({} tie-broken) -> {}",
                loaded.len(),
                final_.answers.len(),
                final_.tie_flags.len(),
                output.join("final.csv").display()
            );
        }
        Command::Score { final_csv, dataset, output, sets, tally } => {
            let file = std::fs::File::open(&final_csv)?;
            let mut final_: FinalPredictions = read_final_csv(std::io::BufReader::new(file))?;
            let tally_path = tally.or_else(|| {
                let sibling = final_csv.parent().map(|p| p.join("tally.json"));
                sibling.filter(|p| p.exists())
            });
            if let Some(path) = tally_path {
                let text = std::fs::read_to_string(&path)?;
                final_.tally = serde_json::from_str::<BTreeMap<String, [f64; 3]>>(&text)
                    .map_err(|e| {
                        Error::Validation(format!("bad tally dump {}: {e}", path.display()))
                    })?;
            }
            let loaded = match sets {
                Some(dir) => load_prediction_dir(&dir)?,
                None => Vec::new(),
            };
            let ds = pipeline::load_dataset_file(&dataset)?;
            let report = pipeline::stage_score(&ds, &final_, &loaded, &output)?;
            println!(
                "top1 = {:.4} ({}/{} correct, {} unlabeled, {} ties) -> {}",
                report.top1,
                report.n_correct,
                report.n_questions,
                report.n_unlabeled,
                report.tie_count,
                output.join("report").join("report.json").display()
            );
        }
        Command::Run { config, output, seed } => {
            let cfg = load_run_config(&config, output, seed)?;
            let summary = pipeline::run_pipeline(&cfg)?;
            println!(
                "run complete: {} prediction sets over {} questions",
                summary.prediction_sets.len(),
                summary.eval_questions
            );
            match &summary.report {
                Some(report) => println!(
                    "top1 = {:.4} ({}/{} correct, {} ties)",
                    report.top1, report.n_correct, report.n_questions, summary.tie_count
                ),
                None => println!("no labels in eval set; scoring skipped"),
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}
