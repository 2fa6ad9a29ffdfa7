use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use rlgaf_core::eval::{aggregate, histogram, oracle_rate, HistogramBy, JudgeExample, Rater, RatingRecord};
use rlgaf_core::rng::RngRoot;
use rlgaf_core::tasks::format_record;

use crate::checkpoint::load_checkpoint;
use crate::config::RunConfig;
use crate::error::{Result, RunError};
use crate::judge::{parse_jsonl, Judge, JudgeCase};
use crate::ratings::{ratings_to_jsonl, read_ratings};
use crate::run::{run_pretraining, run_training_from, sample_with, sample_stats};

#[derive(Debug, Parser)]
#[command(name = "rlgaf", version, about = "Adversarial-feedback fine-tuning of tiny sequence models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the default run configuration.
    Init {
        #[arg(long, default_value = "config.json")]
        out: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Pretrain the base generator and save `base.ckpt`.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pretrain (unless `--base` is given), run the adversarial loop and evaluate.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Start from this generator checkpoint instead of pretraining.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Sample responses in corpus format.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'n', long, default_value_t = 10)]
        count: usize,
        /// Defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Oracle-rate sampled responses.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'n', long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "tuned")]
        system_id: String,
        /// Write one rating record per sample.
        #[arg(long)]
        ratings_out: Option<PathBuf>,
    },
    /// Aggregate improvement of one system over another.
    Score {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        system: String,
        #[arg(long)]
        base: String,
        #[arg(long, value_enum)]
        histogram: Option<HistogramArg>,
    },
    /// Rate a case file with the judge endpoint.
    Judge {
        /// JSON lines of `{prompt_id, system_id, case}`.
        #[arg(long)]
        cases: PathBuf,
        /// Rubric text, sent as the system text.
        #[arg(long)]
        rubric: PathBuf,
        /// JSON lines of `{case, tier}` exemplars.
        #[arg(long)]
        exemplars: Option<PathBuf>,
        /// Run config whose `judge` section supplies endpoint settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        retry_limit: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HistogramArg {
    Tier,
    Improvement,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| RunError::io(p, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| RunError::io("<stdout>", e)),
    }
}

fn line(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| RunError::io("<stdout>", e))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Init { out: path, force } => {
            if path.exists() && !force {
                return Err(RunError::Config(format!("{} exists; pass --force to overwrite", path.display())));
            }
            std::fs::write(&path, RunConfig::default().to_json()).map_err(|e| RunError::io(&path, e))?;
            line(out, &format!("wrote {}", path.display()))
        }
        Command::Pretrain { config } => {
            let cfg = RunConfig::load(&config)?;
            let (dir, _) = run_pretraining(&cfg)?;
            line(out, &format!("wrote {}", dir.base_checkpoint().display()))
        }
        Command::Train { config, base } => {
            let cfg = RunConfig::load(&config)?;
            let base = base.map(|p| load_checkpoint(&p)?.into_generator()).transpose()?;
            let outcome = run_training_from(&cfg, base)?;
            line(out, &serde_json::to_string(&outcome.eval).expect("summary serializes"))
        }
        Command::Sample { config, checkpoint, count, seed, out: path } => {
            let cfg = RunConfig::load(&config)?;
            let task = cfg.build_task()?;
            let gen = load_checkpoint(&checkpoint)?.into_generator()?;
            let root = RngRoot::new(seed.unwrap_or(cfg.seed));
            let mut prompt_rng = root.stream("sample-prompts");
            let prompts: Vec<Vec<u32>> = (0..count).map(|_| task.sample_prompt(&mut prompt_rng)).collect();
            let samples = sample_with(&gen, &prompts, &mut root.stream("sample"))?;
            let text: String = samples.iter().map(|s| format_record(s) + "\n").collect();
            emit(out, path.as_deref(), &text)
        }
        Command::Evaluate { config, checkpoint, count, seed, system_id, ratings_out } => {
            let cfg = RunConfig::load(&config)?;
            let task = cfg.build_task()?;
            let gen = load_checkpoint(&checkpoint)?.into_generator()?;
            let root = RngRoot::new(seed.unwrap_or(cfg.seed));
            let mut prompt_rng = root.stream("sample-prompts");
            let prompts: Vec<Vec<u32>> = (0..count).map(|_| task.sample_prompt(&mut prompt_rng)).collect();
            let samples = sample_with(&gen, &prompts, &mut root.stream("sample"))?;
            let records = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    Ok(RatingRecord { prompt_id: format!("p{i}"), system_id: system_id.clone(), tier: oracle_rate(&task, s)?, rater: Rater::Oracle })
                })
                .collect::<Result<Vec<_>>>()?;
            let stats = sample_stats(&task, &samples, &cfg)?;
            line(out, &serde_json::to_string(&stats).expect("stats serialize"))?;
            if let Some(p) = ratings_out {
                std::fs::write(&p, ratings_to_jsonl(&records)).map_err(|e| RunError::io(&p, e))?;
            }
            Ok(())
        }
        Command::Score { ratings, system, base, histogram: by } => {
            let records = read_ratings(&ratings)?;
            line(out, &format!("{:+}", aggregate(&records, &system, &base)?))?;
            if let Some(by) = by {
                let by = match by {
                    HistogramArg::Tier => HistogramBy::Tier,
                    HistogramArg::Improvement => HistogramBy::Improvement { system_id: system, base_id: base },
                };
                for (key, count) in histogram(&records, &by)? {
                    line(out, &format!("{}\t{count}", serde_json::to_string(&key).expect("key serializes")))?;
                }
            }
            Ok(())
        }
        Command::Judge { cases, rubric, exemplars, config, endpoint, retry_limit, out: path } => {
            let mut jc = match config {
                Some(p) => RunConfig::load(&p)?.judge.unwrap_or_default(),
                None => Default::default(),
            };
            if let Some(e) = endpoint {
                jc.endpoint = e;
            }
            if let Some(r) = retry_limit {
                jc.retry_limit = r;
            }
            let cases: Vec<JudgeCase> = parse_jsonl(&read_text(&cases)?)?;
            let exemplars: Vec<JudgeExample> = match exemplars {
                Some(p) => parse_jsonl(&read_text(&p)?)?,
                None => Vec::new(),
            };
            let rubric = read_text(&rubric)?;
            let judge = Judge::new(jc)?;
            let records = cases.iter().map(|c| judge.rate(&rubric, &exemplars, c)).collect::<Result<Vec<_>>>()?;
            emit(out, path.as_deref(), &ratings_to_jsonl(&records))
        }
    }
}

/// Run the CLI on `args` (program name first) and return the exit code:
/// 0 on success, 2 on usage errors, 1 on any other error.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.reason_line());
            1
        }
    }
}
