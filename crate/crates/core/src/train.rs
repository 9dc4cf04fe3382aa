//! Adam with per-epoch exponential learning-rate decay, and the two-stage
//! pipeline: contrastive teachers first, then a student trained on the
//! α-blend of NCE and distillation from the frozen teachers.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{batch_iterator, derive_seed, require_languages, Batch, Corpus, Split, ENGLISH};
use crate::distill::{distillation_targets, PoolerKind, TeacherCache, TeacherEnsemble};
use crate::error::{Error, Result};
use crate::eval::evaluate_model;
use crate::kernel::{matmul, matmul_tn, GradRecord, ParamSet, Tensor2D};
use crate::model::{ModelConfig, ModelParams};
use crate::objectives::{
    similarity_matrix, student_objective, DistillObjective, LossBreakdown, ObjectiveConfig, SimilarityMatrix, Targets,
};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Train on English pairs only; evaluate on every language.
    ZeroShot,
    /// Train on pairs in every configured language.
    #[default]
    TranslateTrain,
}

/// Which captions the teachers read when producing distillation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherInput {
    /// English captions for every student language.
    #[default]
    English,
    /// The same captions the student reads.
    StudentLanguage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub tau: f64,
    pub tau_prime: f64,
    pub alpha: f64,
    pub pooler: PoolerKind,
    pub objective: DistillObjective,
    pub teacher_input: TeacherInput,
    /// Adds the video→text direction to every loss.
    pub symmetric: bool,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub languages: Vec<String>,
    pub setting: Setting,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            tau_prime: 0.1,
            alpha: 1.0,
            pooler: PoolerKind::Mean,
            objective: DistillObjective::CrossEntropy,
            teacher_input: TeacherInput::English,
            symmetric: false,
            batch_size: 32,
            lr: 1e-4,
            lr_decay: 0.9,
            epochs: 10,
            languages: vec![ENGLISH.to_string()],
            setting: Setting::TranslateTrain,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Multi-MSRVTT grid-search optimum: α = 0.5 with a Min pooler.
    pub fn msrvtt() -> Self {
        Self {
            alpha: 0.5,
            pooler: PoolerKind::Min,
            epochs: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective_config()
            .validate()
            .map_err(|e| Error::config("train", e.to_string()))?;
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("train.lr_decay", "must lie in (0, 1]"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("train.batch_size", "must be at least 2"));
        }
        if self.languages.is_empty() {
            return Err(Error::config("train.languages", "at least one language is required"));
        }
        if self.setting == Setting::ZeroShot && self.alpha < 1.0 {
            return Err(Error::config(
                "train.alpha",
                "distillation (alpha < 1) requires the translate-train setting",
            ));
        }
        Ok(())
    }

    pub fn objective_config(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            tau: self.tau,
            tau_prime: self.tau_prime,
            alpha: self.alpha,
            distill: self.objective,
            symmetric: self.symmetric,
        }
    }

    /// Languages whose pairs enter the loss.
    pub fn training_languages(&self) -> Vec<String> {
        match self.setting {
            Setting::ZeroShot => vec![ENGLISH.to_string()],
            Setting::TranslateTrain => self.languages.clone(),
        }
    }

    fn shuffle_seed(&self) -> u64 {
        derive_seed(self.seed, 0x5348_5546)
    }
}

/// `lr · decay^epoch`.
pub fn learning_rate(lr: f64, decay: f64, epoch: usize) -> f64 {
    lr * decay.powi(epoch as i32)
}

/// Adam moment estimates aligned with a parameter set's order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub first_moment: Vec<Tensor2D>,
    pub second_moment: Vec<Tensor2D>,
    pub step: u64,
}

/// One bias-corrected Adam update (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
///
/// Gradients are checked for finiteness before any weight changes.
pub fn adam_step<P: ParamSet>(
    params: &mut P,
    grads: &[GradRecord],
    state: &mut OptimizerState,
    lr_t: f64,
) -> Result<()> {
    if params.is_frozen() {
        return Err(Error::Parameter("cannot update frozen parameters".into()));
    }
    if !(lr_t > 0.0) || !lr_t.is_finite() {
        return Err(Error::Parameter(format!("learning rate must be positive, got {lr_t}")));
    }
    let names: Vec<(String, usize, usize)> = params
        .named_params()
        .iter()
        .map(|(n, t)| (n.clone(), t.rows(), t.cols()))
        .collect();
    if grads.len() != names.len() {
        return Err(Error::Internal(format!(
            "{} gradients for {} parameters",
            grads.len(),
            names.len()
        )));
    }
    for ((name, rows, cols), g) in names.iter().zip(grads) {
        if &g.name != name || g.grad.rows() != *rows || g.grad.cols() != *cols {
            return Err(Error::Internal(format!(
                "gradient `{}` ({}) does not match parameter `{name}` ({rows}x{cols})",
                g.name,
                g.grad.shape()
            )));
        }
        if !g.grad.is_finite() {
            return Err(Error::Divergence { parameter: name.clone() });
        }
    }
    if state.first_moment.is_empty() {
        state.first_moment = names.iter().map(|(_, r, c)| Tensor2D::zeros(*r, *c)).collect();
        state.second_moment = state.first_moment.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((_, p), g), (m, v)) in params
        .named_params_mut()
        .into_iter()
        .zip(grads)
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
    {
        for (((w, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
            *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *w -= lr_t * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Loss components of one optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub epoch: usize,
    /// Mean R@1 over the training languages.
    pub mean_r1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<StepRecord>,
    pub validation: Vec<ValidationRecord>,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        history_csv(&self.history)
    }
}

/// `step,epoch,nce_<lang>...,c2kd_<lang>...,total`.
pub fn history_csv(history: &[StepRecord]) -> String {
    let langs: Vec<&str> = history
        .first()
        .map(|r| r.loss.per_language.iter().map(|l| l.language.as_str()).collect())
        .unwrap_or_default();
    let mut out = String::from("step,epoch");
    for l in &langs {
        let _ = write!(out, ",nce_{l}");
    }
    for l in &langs {
        let _ = write!(out, ",c2kd_{l}");
    }
    out.push_str(",total\n");
    for r in history {
        let _ = write!(out, "{},{}", r.step, r.epoch);
        for l in &r.loss.per_language {
            let _ = write!(out, ",{}", l.nce);
        }
        for l in &r.loss.per_language {
            let _ = write!(out, ",{}", l.c2kd);
        }
        let _ = writeln!(out, ",{}", r.loss.total);
    }
    out
}

/// Source of distillation targets during a student run.
enum TeacherSource {
    None,
    English { cache: TeacherCache, pooler: PoolerKind },
    PerLanguage { caches: Vec<TeacherCache>, pooler: PoolerKind },
}

impl TeacherSource {
    fn targets(&self, batch: &Batch<'_>) -> Result<Option<Vec<Vec<SimilarityMatrix>>>> {
        Ok(match self {
            TeacherSource::None => None,
            TeacherSource::English { cache, pooler } => Some(vec![distillation_targets(cache.scores(batch)?, *pooler)?]),
            TeacherSource::PerLanguage { caches, pooler } => Some(
                caches
                    .iter()
                    .map(|c| distillation_targets(c.scores(batch)?, *pooler))
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

/// Loss and gradient of the student objective on one batch.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    batch: &Batch<'_>,
    languages: &[String],
    targets: Targets<'_>,
    objective: &ObjectiveConfig,
) -> Result<(LossBreakdown, Vec<GradRecord>)> {
    let frames = batch.frames();
    let (videos, video_cache) = params.video_head.forward_batch(&frames)?;
    let ids = batch.ids();
    let mut texts = Vec::with_capacity(languages.len());
    let mut sims = Vec::with_capacity(languages.len());
    for lang in languages {
        let (t, cache) = params.text_head.forward_batch(&batch.captions(lang)?)?;
        sims.push(similarity_matrix(&t, &videos)?.with_language(lang.clone()).with_ids(ids.clone()));
        texts.push((t, cache));
    }
    let (breakdown, grad_scores) = student_objective(&sims, targets, objective)?;

    let mut grads = params.zero_grads();
    let mut grad_videos = Tensor2D::zeros(videos.rows(), videos.cols());
    for ((t, cache), g) in texts.iter().zip(&grad_scores) {
        // S = T·Vᵀ ⇒ dT = G·V, dV = Gᵀ·T
        let grad_text = matmul(g, &videos)?;
        grad_videos.add_assign(&matmul_tn(g, t)?)?;
        grads.add_text(&params.text_head.backward(cache, &grad_text)?)?;
    }
    grads.add_video(&params.video_head.backward(&video_cache, &grad_videos)?)?;
    Ok((breakdown, grads.into_records()))
}

fn run_training(corpus: &Corpus, split: &Split, config: &TrainConfig, teachers: TeacherSource) -> Result<TrainOutcome> {
    config.validate()?;
    let languages = config.training_languages();
    require_languages(corpus, &split.train, &languages)?;
    let mut params = ModelParams::init(corpus.token_dim(), corpus.frame_dim(), &config.model, config.seed)?;
    let objective = config.objective_config();
    let mut state = OptimizerState::default();
    let mut history = Vec::new();
    let mut validation = Vec::new();

    for epoch in 0..config.epochs {
        let lr_t = learning_rate(config.lr, config.lr_decay, epoch);
        let batches = batch_iterator(corpus, &split.train, config.batch_size, &languages, config.shuffle_seed(), epoch)?;
        for batch in &batches {
            let targets = teachers.targets(batch)?;
            let targets = match &targets {
                None => Targets::None,
                Some(t) if t.len() == 1 => Targets::Shared(&t[0]),
                Some(t) => Targets::PerLanguage(t),
            };
            let (loss, grads) = batch_loss_and_grads(&params, batch, &languages, targets, &objective)?;
            if !loss.total.is_finite() {
                return Err(Error::Divergence { parameter: "loss".into() });
            }
            adam_step(&mut params, &grads, &mut state, lr_t)?;
            history.push(StepRecord {
                step: state.step,
                epoch,
                lr: lr_t,
                loss,
            });
        }
        if !split.validation.is_empty() {
            let recall = evaluate_model(&params, corpus, &split.validation, &languages, &[1])?;
            let mean_r1 = recall.iter().map(|r| r[0]).sum::<f64>() / recall.len() as f64;
            validation.push(ValidationRecord { epoch, mean_r1 });
        }
    }
    Ok(TrainOutcome {
        params,
        history,
        validation,
    })
}

/// Pure contrastive training (the teacher recipe; `alpha` is forced to 1).
pub fn train_nce(corpus: &Corpus, split: &Split, config: &TrainConfig) -> Result<TrainOutcome> {
    let config = TrainConfig {
        alpha: 1.0,
        ..config.clone()
    };
    run_training(corpus, split, &config, TeacherSource::None)
}

/// Trains each teacher independently with NCE and freezes it.
pub fn train_teachers(
    corpus: &Corpus,
    split: &Split,
    configs: &[TrainConfig],
    pooler: PoolerKind,
) -> Result<(TeacherEnsemble, Vec<TrainOutcome>)> {
    if configs.is_empty() {
        return Err(Error::Parameter("at least one teacher configuration is required".into()));
    }
    let outcomes = configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            train_nce(corpus, split, cfg).map_err(|e| Error::Training {
                context: format!("teacher {i} (seed {})", cfg.seed),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = TeacherEnsemble::new(outcomes.iter().map(|o| o.params.clone().freeze()).collect(), pooler)?;
    Ok((ensemble, outcomes))
}

/// Trains a student against the frozen ensemble with the configured blend,
/// pooler, distillation objective and teacher input language.
pub fn train_student(
    corpus: &Corpus,
    split: &Split,
    teachers: &TeacherEnsemble,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let source = match config.teacher_input {
        TeacherInput::English => TeacherSource::English {
            cache: TeacherCache::build(teachers, corpus, &split.train, ENGLISH)?,
            pooler: config.pooler,
        },
        TeacherInput::StudentLanguage => TeacherSource::PerLanguage {
            caches: config
                .training_languages()
                .iter()
                .map(|l| TeacherCache::build(teachers, corpus, &split.train, l))
                .collect::<Result<_>>()?,
            pooler: config.pooler,
        },
    };
    run_training(corpus, split, config, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ParamList;

    fn scalar(v: f64) -> ParamList {
        ParamList(vec![("w".into(), Tensor2D::row_vector(&[v]))])
    }

    fn grad(v: f64) -> Vec<GradRecord> {
        vec![GradRecord { name: "w".into(), grad: Tensor2D::row_vector(&[v]) }]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.7);
        let mut s = OptimizerState::default();
        adam_step(&mut p, &grad(0.0), &mut s, 1e-3).unwrap();
        adam_step(&mut p, &grad(0.0), &mut s, 1e-3).unwrap();
        assert_eq!(p, scalar(0.7));
        assert_eq!(s.step, 2);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        let mut s = OptimizerState::default();
        adam_step(&mut p, &grad(1.0), &mut s, 1e-4).unwrap();
        // m̂ = 1, v̂ = 1 ⇒ Δ = lr / (1 + ε)
        let expected = -1e-4 / (1.0 + ADAM_EPS);
        assert!((p.0[0].1.get(0, 0) - expected).abs() < 1e-18);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = scalar(1.0);
        let mut s = OptimizerState::default();
        match adam_step(&mut p, &grad(f64::NAN), &mut s, 1e-3) {
            Err(Error::Divergence { parameter }) => assert_eq!(parameter, "w"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p, scalar(1.0));
        assert_eq!(s.step, 0);
    }

    #[test]
    fn decay_schedule() {
        assert_eq!(learning_rate(1e-4, 0.9, 3), 1e-4 * 0.9f64.powi(3));
        assert!((learning_rate(1e-4, 0.9, 3) - 7.29e-5).abs() < 1e-18);
        assert_eq!(learning_rate(1e-4, 0.9, 0), 1e-4);
    }

    #[test]
    fn convex_quadratic_step_descends() {
        // f(w) = Σ c_i (w_i − t_i)², strictly convex
        let c = [0.5, 2.0, 1.0];
        let t = [1.0, -2.0, 0.25];
        let f = |w: &[f64]| w.iter().zip(c).zip(t).map(|((w, c), t)| c * (w - t) * (w - t)).sum::<f64>();
        for lr in [1e-2, 1e-3, 1e-4] {
            let mut p = ParamList(vec![("w".into(), Tensor2D::row_vector(&[0.3, 0.1, -0.8]))]);
            let before = f(p.0[0].1.data());
            let g: Vec<f64> = p.0[0].1.data().iter().zip(c).zip(t).map(|((w, c), t)| 2.0 * c * (w - t)).collect();
            let mut s = OptimizerState::default();
            adam_step(&mut p, &[GradRecord { name: "w".into(), grad: Tensor2D::row_vector(&g) }], &mut s, lr).unwrap();
            assert!(f(p.0[0].1.data()) < before);
        }
    }

    #[test]
    fn frozen_params_are_rejected() {
        let cfg = ModelConfig { embed_dim: 4, ..ModelConfig::default() };
        let mut m = ModelParams::init(3, 3, &cfg, 0).unwrap().freeze();
        let grads = m.zero_grads().into_records();
        let before = m.clone();
        assert!(adam_step(&mut m, &grads, &mut OptimizerState::default(), 1e-3).is_err());
        assert_eq!(m, before);
    }

    #[test]
    fn config_validation() {
        let zero_shot = TrainConfig { setting: Setting::ZeroShot, alpha: 0.5, ..TrainConfig::default() };
        assert!(matches!(zero_shot.validate(), Err(Error::Config { .. })));
        let bad_alpha = TrainConfig { alpha: 1.5, ..TrainConfig::default() };
        assert!(bad_alpha.validate().is_err());
        let bad_decay = TrainConfig { lr_decay: 0.0, ..TrainConfig::default() };
        assert!(bad_decay.validate().is_err());
        let msr = TrainConfig::msrvtt();
        assert_eq!((msr.alpha, msr.pooler, msr.tau, msr.tau_prime), (0.5, PoolerKind::Min, 0.05, 0.1));
        let zs = TrainConfig {
            setting: Setting::ZeroShot,
            languages: vec!["en".into(), "de".into()],
            ..TrainConfig::default()
        };
        assert_eq!(zs.training_languages(), vec!["en".to_string()]);
    }
}
