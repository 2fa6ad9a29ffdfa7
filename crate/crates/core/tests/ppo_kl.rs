use rlgaf_core::ppo::{PpoConfig, PpoTrainer};
use rlgaf_core::seqmodel::{GenModel, ModelConfig, Sequence};
use rlgaf_core::tasks::{pretrain_generator, sentiment_task, PretrainConfig, TaskSpec};
use rlgaf_core::{Result, RngRoot};

fn positive_count_scorer(task: &TaskSpec) -> impl Fn(&Sequence) -> Result<f64> + '_ {
    move |s: &Sequence| {
        let positive = match &task.kind {
            rlgaf_core::tasks::TaskKind::Sentiment { positive, .. } => positive,
            _ => unreachable!(),
        };
        Ok(s.response.iter().filter(|t| positive.contains(t)).count() as f64 - 2.0)
    }
}

fn trained_kl(beta: f64, base: &GenModel, task: &TaskSpec) -> f64 {
    let root = RngRoot::new(21);
    let mut gen = base.clone();
    let cfg = PpoConfig { beta, batch_size: 8, ..Default::default() };
    let mut trainer = PpoTrainer::new(cfg, base).unwrap();
    let scorer = positive_count_scorer(task);
    let mut rng = root.stream("ppo");
    for _ in 0..40 {
        trainer.step(&mut gen, &scorer, task, &mut rng).unwrap();
    }
    assert_eq!(trainer.reference(), base);
    let mut eval = root.stream("eval");
    let mut kl = 0.0;
    for _ in 0..200 {
        let s = gen.sample_response(&task.sample_prompt(&mut eval), &mut eval).unwrap();
        kl += gen.log_prob(&s).unwrap() - base.log_prob(&s).unwrap();
    }
    kl / 200.0
}

#[test]
fn large_beta_keeps_policy_closer_to_reference() {
    let root = RngRoot::new(21);
    let task = sentiment_task(21, 32, 8, 8, 16).unwrap();
    let mut base = GenModel::new(ModelConfig::default(), &mut root.stream("model-init")).unwrap();
    let cfg = PretrainConfig { steps: 300, ..Default::default() };
    pretrain_generator(&mut base, &task, &cfg, &mut root.stream("pretrain")).unwrap();

    let free = trained_kl(0.0, &base, &task);
    let anchored = trained_kl(1e3, &base, &task);
    assert!(anchored < free, "kl with beta=1e3: {anchored}, with beta=0: {free}");
}

#[test]
fn first_batch_from_reference_has_zero_kl() {
    let root = RngRoot::new(2);
    let task = sentiment_task(2, 32, 8, 8, 16).unwrap();
    let gen = GenModel::new(ModelConfig::default(), &mut root.stream("model-init")).unwrap();
    let mut trainer = PpoTrainer::new(PpoConfig::default(), &gen).unwrap();
    let (_, _, kl) = trainer.collect(&gen, &positive_count_scorer(&task), &task, &mut root.stream("ppo")).unwrap();
    assert!(kl.abs() < 1e-9, "{kl}");
}
