//! End-to-end training: pretrain, adversarial rounds, evaluation, and the
//! files each stage leaves in the output directory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use rlgaf_core::adversarial::{detect_mode_collapse, rlgaf_round, CollapseReport, GenTrainer, RoundReport};
use rlgaf_core::discriminator::DiscModel;
use rlgaf_core::rng::RngRoot;
use rlgaf_core::seqmodel::{GenModel, Sequence};
use rlgaf_core::tasks::{pretrain_generator, OracleLabel, TaskSpec};
use rlgaf_core::StreamRng;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::{RunConfig, CONFIG_FILE};
use crate::error::{Result, RunError};
use crate::metrics::{MetricsLog, MetricsRecord, Phase};

/// File layout of an output directory.
#[derive(Debug, Clone)]
pub struct RunDir(pub PathBuf);

impl RunDir {
    pub fn config(&self) -> PathBuf {
        self.0.join(CONFIG_FILE)
    }
    pub fn metrics(&self) -> PathBuf {
        self.0.join("metrics.jsonl")
    }
    pub fn base_checkpoint(&self) -> PathBuf {
        self.0.join("base.ckpt")
    }
    pub fn generator_checkpoint(&self) -> PathBuf {
        self.0.join("generator.ckpt")
    }
    pub fn discriminator_checkpoint(&self) -> PathBuf {
        self.0.join("discriminator.ckpt")
    }
    pub fn eval_summary(&self) -> PathBuf {
        self.0.join("eval.json")
    }
}

/// Validate `cfg`, create the output directory and persist the config.
/// Refuses a directory that already holds a run.
pub fn start_run(cfg: &RunConfig) -> Result<RunDir> {
    cfg.validate()?;
    let dir = RunDir(cfg.output_dir.clone());
    std::fs::create_dir_all(&dir.0).map_err(|e| RunError::io(&dir.0, e))?;
    for existing in [dir.config(), dir.metrics()] {
        if existing.exists() {
            return Err(RunError::Config(format!("{} already exists; choose a fresh output_dir", existing.display())));
        }
    }
    std::fs::write(dir.config(), cfg.to_json()).map_err(|e| RunError::io(dir.config(), e))?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStats {
    pub mean_response_len: f64,
    /// Oracle label counts; empty for tasks without an oracle.
    pub labels: BTreeMap<OracleLabel, usize>,
    pub collapse: CollapseReport,
}

impl SampleStats {
    pub fn count(&self, label: OracleLabel) -> usize {
        self.labels.get(&label).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub samples: usize,
    pub tuned: SampleStats,
    pub base: SampleStats,
    /// Mean expert response length on the same prompts, when the task has a demonstrator.
    pub expert_mean_response_len: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: RunDir,
    pub task: TaskSpec,
    pub base: GenModel,
    pub generator: GenModel,
    pub discriminator: DiscModel,
    pub rounds: Vec<RoundReport>,
    pub eval: EvalSummary,
}

fn pretrain(cfg: &RunConfig, task: &TaskSpec, root: &RngRoot, log: &mut MetricsLog) -> Result<GenModel> {
    let mut gen = GenModel::new(cfg.model.clone(), &mut root.stream("model-init"))?;
    let report = pretrain_generator(&mut gen, task, &cfg.pretrain, &mut root.stream("pretrain"))?;
    for (i, nll) in report.batch_nll.iter().enumerate() {
        log.push(&MetricsRecord { loss_g: Some(*nll), ..MetricsRecord::new(i as u64, Phase::Pretrain) });
    }
    log.flush()?;
    Ok(gen)
}

/// Pretrain only, saving the base checkpoint.
pub fn run_pretraining(cfg: &RunConfig) -> Result<(RunDir, GenModel)> {
    let task = cfg.build_task()?;
    let dir = start_run(cfg)?;
    let mut log = MetricsLog::new(dir.metrics());
    let gen = pretrain(cfg, &task, &RngRoot::new(cfg.seed), &mut log)?;
    save_checkpoint(&Checkpoint::of_generator(&gen, cfg.seed), &dir.base_checkpoint())?;
    Ok((dir, gen))
}

/// Full run from the config alone.
pub fn run_training(cfg: &RunConfig) -> Result<RunOutcome> {
    run_training_from(cfg, None)
}

/// Full run; with `base` given, pretraining is skipped and `base` is the
/// starting generator.
pub fn run_training_from(cfg: &RunConfig, base: Option<GenModel>) -> Result<RunOutcome> {
    let task = cfg.build_task()?;
    if let Some(b) = &base {
        if b.config() != &cfg.model {
            return Err(RunError::Config("base checkpoint model dims differ from the config".into()));
        }
    }
    let dir = start_run(cfg)?;
    let root = RngRoot::new(cfg.seed);
    let mut log = MetricsLog::new(dir.metrics());
    let base = match base {
        Some(b) => b,
        None => pretrain(cfg, &task, &root, &mut log)?,
    };
    save_checkpoint(&Checkpoint::of_generator(&base, cfg.seed), &dir.base_checkpoint())?;

    let mut gen = base.clone();
    let mut disc = DiscModel::from_generator(&gen, &mut root.stream("disc-init"))?;
    let mut trainer = GenTrainer::new(cfg.strategy(), &gen, &cfg.reinforce, &cfg.ppo, &cfg.gumbel)?;
    let mut rounds = Vec::with_capacity(cfg.loop_cfg.total_rounds);
    let per_round = cfg.loop_cfg.gen_steps_per_round as u64;
    for r in 0..cfg.loop_cfg.total_rounds {
        let outcome = rlgaf_round(&mut gen, &mut disc, &mut trainer, &task, &cfg.loop_cfg, r, &mut root.indexed_stream("round", r as u64));
        let report = match outcome {
            Ok(rep) => rep,
            Err(e) => {
                log.flush()?;
                save_checkpoint(&Checkpoint::of_generator(&gen, cfg.seed), &dir.generator_checkpoint())?;
                return Err(e.into());
            }
        };
        log.push(&MetricsRecord {
            loss_d_real: Some(report.disc_losses.real),
            loss_d_fake: Some(report.disc_losses.fake),
            disc_acc: Some(report.disc_accuracy),
            ..MetricsRecord::new(r as u64, Phase::Disc)
        });
        let last = report.gen_stats.len().saturating_sub(1);
        for (i, s) in report.gen_stats.iter().enumerate() {
            log.push(&MetricsRecord {
                loss_g: Some(s.loss_g),
                reward_mean: Some(s.reward_mean),
                kl_mean: s.kl_mean,
                collapse_flag: (i == last).then_some(report.collapse.flagged),
                ..MetricsRecord::new(r as u64 * per_round + i as u64, Phase::Gen)
            });
        }
        log.flush()?;
        rounds.push(report);
    }
    save_checkpoint(&Checkpoint::of_generator(&gen, cfg.seed), &dir.generator_checkpoint())?;
    save_checkpoint(&Checkpoint::of_discriminator(&disc, cfg.seed), &dir.discriminator_checkpoint())?;

    let (eval, tuned_samples) = evaluate_with_samples(cfg, &task, &base, &gen, &root)?;
    let reward = tuned_samples.iter().map(|s| disc.prob_real(s)).collect::<rlgaf_core::Result<Vec<f64>>>()?;
    log.push(&MetricsRecord {
        reward_mean: Some(reward.iter().sum::<f64>() / reward.len() as f64),
        collapse_flag: Some(eval.tuned.collapse.flagged),
        ..MetricsRecord::new(cfg.loop_cfg.total_rounds as u64, Phase::Eval)
    });
    log.flush()?;
    let summary = serde_json::to_string_pretty(&eval).expect("summary serializes") + "\n";
    std::fs::write(dir.eval_summary(), summary).map_err(|e| RunError::io(dir.eval_summary(), e))?;

    Ok(RunOutcome { dir, task, base, generator: gen, discriminator: disc, rounds, eval })
}

pub fn eval_prompts(task: &TaskSpec, n: usize, root: &RngRoot) -> Vec<Vec<u32>> {
    let mut rng = root.stream("eval-prompts");
    (0..n).map(|_| task.sample_prompt(&mut rng)).collect()
}

pub fn sample_with(gen: &GenModel, prompts: &[Vec<u32>], rng: &mut StreamRng) -> Result<Vec<Sequence>> {
    Ok(prompts.iter().map(|p| gen.sample_response(p, rng)).collect::<rlgaf_core::Result<_>>()?)
}

pub fn sample_stats(task: &TaskSpec, samples: &[Sequence], cfg: &RunConfig) -> Result<SampleStats> {
    let mut labels = BTreeMap::new();
    if task.has_oracle() {
        for s in samples {
            *labels.entry(task.oracle(s)?).or_insert(0) += 1;
        }
    }
    let total: usize = samples.iter().map(|s| s.response.len()).sum();
    Ok(SampleStats {
        mean_response_len: total as f64 / samples.len().max(1) as f64,
        labels,
        collapse: detect_mode_collapse(samples, &cfg.loop_cfg)?,
    })
}

/// Compare base and tuned generators on one shared prompt set.
pub fn evaluate(cfg: &RunConfig, task: &TaskSpec, base: &GenModel, tuned: &GenModel, root: &RngRoot) -> Result<EvalSummary> {
    Ok(evaluate_with_samples(cfg, task, base, tuned, root)?.0)
}

fn evaluate_with_samples(
    cfg: &RunConfig,
    task: &TaskSpec,
    base: &GenModel,
    tuned: &GenModel,
    root: &RngRoot,
) -> Result<(EvalSummary, Vec<Sequence>)> {
    let prompts = eval_prompts(task, cfg.eval.samples, root);
    let tuned_samples = sample_with(tuned, &prompts, &mut root.stream("eval-tuned"))?;
    let base_samples = sample_with(base, &prompts, &mut root.stream("eval-base"))?;
    let mut expert_rng = root.stream("eval-expert");
    let expert_mean_response_len = match prompts.iter().map(|p| task.expert_response(p, &mut expert_rng)).collect::<rlgaf_core::Result<Vec<_>>>() {
        Ok(seqs) => Some(seqs.iter().map(|s| s.response.len()).sum::<usize>() as f64 / seqs.len() as f64),
        Err(_) => None,
    };
    let summary = EvalSummary {
        samples: prompts.len(),
        tuned: sample_stats(task, &tuned_samples, cfg)?,
        base: sample_stats(task, &base_samples, cfg)?,
        expert_mean_response_len,
    };
    Ok((summary, tuned_samples))
}
