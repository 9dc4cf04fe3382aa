//! Similarity matrices and every loss applied to them: the contrastive NCE
//! loss, soft-target cross entropy, the teacher-distillation loss, their
//! α-blend summed over languages, and the Smooth-L1 regression variants
//! used in objective ablations.
//!
//! Each loss has a `*_with_grad` form returning the gradient with respect
//! to the student scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Shape};
use crate::kernel::{self, log_softmax_rows, softmax_rows, softmax_rows_backward, Tensor2D};

/// Tolerance on embedding norms accepted by [`similarity_matrix`].
pub const UNIT_NORM_TOL: f64 = 1e-6;
const RANGE_SLACK: f64 = 1e-9;
const ROW_SUM_TOL: f64 = 1e-9;

/// `B×B` cosine similarities between texts (rows) and videos (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    scores: Tensor2D,
    pub language: Option<String>,
    pub ids: Vec<u64>,
}

impl SimilarityMatrix {
    /// Wraps precomputed scores; they must be square and within `[-1, 1]`.
    pub fn from_scores(scores: Tensor2D) -> Result<Self> {
        if scores.rows() != scores.cols() {
            return Err(Error::Dimension {
                op: "similarity_matrix",
                left: scores.shape(),
                right: Shape(scores.rows(), scores.rows()),
            });
        }
        if let Some(v) = scores
            .data()
            .iter()
            .find(|v| !(v.abs() <= 1.0 + RANGE_SLACK))
        {
            return Err(Error::Contract(format!("similarity score {v} outside [-1, 1]")));
        }
        Ok(Self {
            scores,
            language: None,
            ids: Vec::new(),
        })
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = Some(language.into());
        self
    }

    pub fn with_ids(mut self, ids: Vec<u64>) -> Self {
        self.ids = ids;
        self
    }

    pub fn scores(&self) -> &Tensor2D {
        &self.scores
    }

    pub fn batch_size(&self) -> usize {
        self.scores.rows()
    }

    pub fn transpose(&self) -> Self {
        Self {
            scores: self.scores.transpose(),
            language: self.language.clone(),
            ids: self.ids.clone(),
        }
    }
}

/// `S = T · Vᵀ` for unit-norm text rows `T` and video rows `V`.
pub fn similarity_matrix(text_embs: &Tensor2D, video_embs: &Tensor2D) -> Result<SimilarityMatrix> {
    if text_embs.rows() != video_embs.rows() || text_embs.cols() != video_embs.cols() {
        return Err(Error::Dimension {
            op: "similarity_matrix",
            left: text_embs.shape(),
            right: video_embs.shape(),
        });
    }
    for (which, m) in [("text", text_embs), ("video", video_embs)] {
        for (i, row) in m.row_iter().enumerate() {
            let norm = kernel::dot(row, row).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Contract(format!(
                    "{which} embedding {i} has norm {norm}, expected 1"
                )));
            }
        }
    }
    let scores = kernel::matmul_nt(text_embs, video_embs)?;
    Ok(SimilarityMatrix {
        scores,
        language: None,
        ids: Vec::new(),
    })
}

/// A row-stochastic `B×B` target over candidate videos for each text.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    probs: Tensor2D,
}

impl TargetDistribution {
    pub fn new(probs: Tensor2D) -> Result<Self> {
        for (i, row) in probs.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Contract(format!("target row {i} sums to {sum}, expected 1")));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Contract(format!("target row {i} has entries outside [0, 1]")));
            }
        }
        Ok(Self { probs })
    }

    /// Identity targets: text `i` matches video `i`.
    pub fn one_hot(batch: usize) -> Self {
        Self {
            probs: Tensor2D::identity(batch),
        }
    }

    pub fn uniform(batch: usize) -> Self {
        Self {
            probs: Tensor2D::filled(batch, batch, 1.0 / batch as f64),
        }
    }

    /// Row-softmax of teacher scores at temperature `tau`.
    pub fn from_scores(s: &SimilarityMatrix, tau: f64) -> Result<Self> {
        Ok(Self {
            probs: softmax_rows(s.scores(), tau)?,
        })
    }

    pub fn probs(&self) -> &Tensor2D {
        &self.probs
    }
}

fn check_batch(op: &'static str, a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<()> {
    if a.batch_size() != b.batch_size() {
        return Err(Error::Dimension {
            op,
            left: a.scores.shape(),
            right: b.scores.shape(),
        });
    }
    Ok(())
}

/// Text→video NCE loss `−Σ_i log softmax(S_i·/τ)_i`.
pub fn nce_loss(s: &SimilarityMatrix, tau: f64) -> Result<f64> {
    let log_q = log_softmax_rows(s.scores(), tau)?;
    Ok(-(0..s.batch_size()).map(|i| log_q.get(i, i)).sum::<f64>())
}

/// NCE loss with its gradient `(Q − I) / τ`.
pub fn nce_loss_with_grad(s: &SimilarityMatrix, tau: f64) -> Result<(f64, Tensor2D)> {
    let loss = nce_loss(s, tau)?;
    let mut grad = softmax_rows(s.scores(), tau)?;
    for i in 0..grad.rows() {
        let v = grad.get(i, i);
        grad.set(i, i, v - 1.0);
    }
    Ok((loss, grad.scale(1.0 / tau)))
}

/// `−Σ_i Σ_j P_ij log Q_ij` with `Q = softmax_rows(S, τ)`.
pub fn cross_entropy_soft(p: &TargetDistribution, s: &SimilarityMatrix, tau: f64) -> Result<f64> {
    cross_entropy_soft_with_grad(p, s, tau).map(|(l, _)| l)
}

pub fn cross_entropy_soft_with_grad(
    p: &TargetDistribution,
    s: &SimilarityMatrix,
    tau: f64,
) -> Result<(f64, Tensor2D)> {
    if p.probs.shape() != s.scores.shape() {
        return Err(Error::Dimension {
            op: "cross_entropy_soft",
            left: p.probs.shape(),
            right: s.scores.shape(),
        });
    }
    for (i, row) in p.probs.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Contract(format!("target row {i} sums to {sum}, expected 1")));
        }
    }
    let log_q = log_softmax_rows(s.scores(), tau)?;
    let q = softmax_rows(s.scores(), tau)?;
    let mut loss = 0.0;
    let mut grad = Tensor2D::zeros(q.rows(), q.cols());
    for i in 0..q.rows() {
        let pr = p.probs.row(i);
        let mass: f64 = pr.iter().sum();
        for (j, &pij) in pr.iter().enumerate() {
            if pij != 0.0 {
                loss -= pij * log_q.get(i, j);
            }
            grad.set(i, j, (q.get(i, j) * mass - pij) / tau);
        }
    }
    Ok((loss, grad))
}

/// Distillation loss: cross entropy between the teacher's soft targets
/// `softmax_rows(S′, τ′)` and the student's `softmax_rows(S, τ′)`.
pub fn c2kd_loss(student: &SimilarityMatrix, teacher_pooled: &SimilarityMatrix, tau_prime: f64) -> Result<f64> {
    c2kd_loss_with_grad(student, teacher_pooled, tau_prime).map(|(l, _)| l)
}

pub fn c2kd_loss_with_grad(
    student: &SimilarityMatrix,
    teacher_pooled: &SimilarityMatrix,
    tau_prime: f64,
) -> Result<(f64, Tensor2D)> {
    check_batch("c2kd_loss", student, teacher_pooled)?;
    let target = TargetDistribution::from_scores(teacher_pooled, tau_prime)?;
    cross_entropy_soft_with_grad(&target, student, tau_prime)
}

/// Elementwise Smooth-L1 (transition at |r| = 1) averaged over entries.
pub fn smooth_l1_mean(a: &Tensor2D, b: &Tensor2D) -> Result<f64> {
    smooth_l1_mean_with_grad(a, b).map(|(l, _)| l)
}

/// Smooth-L1 mean and its gradient with respect to `a`.
pub fn smooth_l1_mean_with_grad(a: &Tensor2D, b: &Tensor2D) -> Result<(f64, Tensor2D)> {
    let residual = a.sub(b)?;
    let n = residual.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = residual.map(|r| if r.abs() < 1.0 { r / n } else { r.signum() / n });
    for &r in residual.data() {
        loss += if r.abs() < 1.0 { 0.5 * r * r } else { r.abs() - 0.5 };
    }
    Ok((loss / n, grad))
}

/// Regresses the student scores onto the teacher scores, optionally after
/// row-softmax normalization of both at `tau_prime`.
pub fn smooth_l1_distill(
    student: &SimilarityMatrix,
    teacher_pooled: &SimilarityMatrix,
    normalize_first: bool,
    tau_prime: f64,
) -> Result<f64> {
    smooth_l1_distill_with_grad(student, teacher_pooled, normalize_first, tau_prime).map(|(l, _)| l)
}

pub fn smooth_l1_distill_with_grad(
    student: &SimilarityMatrix,
    teacher_pooled: &SimilarityMatrix,
    normalize_first: bool,
    tau_prime: f64,
) -> Result<(f64, Tensor2D)> {
    check_batch("smooth_l1_distill", student, teacher_pooled)?;
    if !normalize_first {
        return smooth_l1_mean_with_grad(student.scores(), teacher_pooled.scores());
    }
    let q = softmax_rows(student.scores(), tau_prime)?;
    let p = softmax_rows(teacher_pooled.scores(), tau_prime)?;
    let (loss, grad_q) = smooth_l1_mean_with_grad(&q, &p)?;
    Ok((loss, softmax_rows_backward(&q, &grad_q, tau_prime)?))
}

/// Which distillation objective compares student and teacher matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillObjective {
    #[default]
    CrossEntropy,
    SmoothL1,
    SoftmaxSmoothL1,
}

impl DistillObjective {
    pub fn label(self) -> &'static str {
        match self {
            DistillObjective::CrossEntropy => "cross_entropy",
            DistillObjective::SmoothL1 => "smooth_l1",
            DistillObjective::SoftmaxSmoothL1 => "softmax_smooth_l1",
        }
    }

    fn loss_with_grad(self, student: &SimilarityMatrix, teacher: &SimilarityMatrix, tau_prime: f64) -> Result<(f64, Tensor2D)> {
        match self {
            DistillObjective::CrossEntropy => c2kd_loss_with_grad(student, teacher, tau_prime),
            DistillObjective::SmoothL1 => smooth_l1_distill_with_grad(student, teacher, false, tau_prime),
            DistillObjective::SoftmaxSmoothL1 => smooth_l1_distill_with_grad(student, teacher, true, tau_prime),
        }
    }
}

/// Loss hyperparameters for one student update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub tau: f64,
    pub tau_prime: f64,
    pub alpha: f64,
    pub distill: DistillObjective,
    /// Adds the video→text direction to every loss term.
    pub symmetric: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            tau_prime: 0.1,
            alpha: 1.0,
            distill: DistillObjective::CrossEntropy,
            symmetric: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        for (name, t) in [("tau", self.tau), ("tau_prime", self.tau_prime)] {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageLoss {
    pub language: String,
    pub nce: f64,
    pub c2kd: f64,
}

/// Components of the blended objective `α·nce + (1−α)·c2kd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub nce: f64,
    pub c2kd: f64,
    pub per_language: Vec<LanguageLoss>,
    pub alpha: f64,
}

fn directional<F>(s: &SimilarityMatrix, t: Option<&SimilarityMatrix>, symmetric: bool, f: F) -> Result<(f64, Tensor2D)>
where
    F: Fn(&SimilarityMatrix, Option<&SimilarityMatrix>) -> Result<(f64, Tensor2D)>,
{
    let (mut loss, mut grad) = f(s, t)?;
    if symmetric {
        let tt = t.map(SimilarityMatrix::transpose);
        let (l2, g2) = f(&s.transpose(), tt.as_ref())?;
        loss += l2;
        grad.add_assign(&g2.transpose())?;
    }
    Ok((loss, grad))
}

/// Teacher matrices a student distills from.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// No teachers; only valid with `alpha == 1`.
    None,
    /// The same matrices for every student language: one pooled matrix, or
    /// one per teacher when no pooler is used.
    Shared(&'a [SimilarityMatrix]),
    /// Matrices specific to each student language, in student order.
    PerLanguage(&'a [Vec<SimilarityMatrix>]),
}

impl<'a> Targets<'a> {
    fn for_language(&self, idx: usize) -> &'a [SimilarityMatrix] {
        match *self {
            Targets::None => &[],
            Targets::Shared(t) => t,
            Targets::PerLanguage(t) => &t[idx],
        }
    }
}

/// The blended student objective and its gradient for each language's
/// similarity matrix.
///
/// The distillation term is summed over languages and over the target
/// matrices of each language. With `alpha == 1` it is still evaluated and
/// reported but contributes nothing to the gradient.
pub fn student_objective(
    student: &[SimilarityMatrix],
    targets: Targets<'_>,
    cfg: &ObjectiveConfig,
) -> Result<(LossBreakdown, Vec<Tensor2D>)> {
    cfg.validate()?;
    let Some(first) = student.first() else {
        return Err(Error::Parameter("at least one language matrix is required".into()));
    };
    if let Targets::PerLanguage(t) = targets {
        if t.len() != student.len() {
            return Err(Error::Internal(format!(
                "{} per-language target sets for {} student languages",
                t.len(),
                student.len()
            )));
        }
    }
    for (idx, s) in student.iter().enumerate() {
        let t = targets.for_language(idx);
        if t.is_empty() && cfg.alpha < 1.0 {
            return Err(Error::Parameter("alpha < 1 requires at least one teacher matrix".into()));
        }
        for m in std::iter::once(s).chain(t) {
            check_batch("student_objective", first, m)?;
        }
    }

    let mut per_language = Vec::with_capacity(student.len());
    let mut grads = Vec::with_capacity(student.len());
    let (mut nce_total, mut c2kd_total) = (0.0, 0.0);
    for (idx, s) in student.iter().enumerate() {
        let (nce, g_nce) = directional(s, None, cfg.symmetric, |s, _| nce_loss_with_grad(s, cfg.tau))?;
        let mut c2kd = 0.0;
        let mut g_kd = Tensor2D::zeros(s.batch_size(), s.batch_size());
        for t in targets.for_language(idx) {
            let (l, g) = directional(s, Some(t), cfg.symmetric, |s, t| {
                cfg.distill.loss_with_grad(s, t.expect("target present"), cfg.tau_prime)
            })?;
            c2kd += l;
            g_kd.add_assign(&g)?;
        }
        // Endpoints skip the zero-weighted term so α=1 reproduces pure NCE bitwise.
        let grad = if cfg.alpha == 1.0 {
            g_nce
        } else if cfg.alpha == 0.0 {
            g_kd
        } else {
            let mut g = g_nce.scale(cfg.alpha);
            g.add_scaled(&g_kd, 1.0 - cfg.alpha)?;
            g
        };
        grads.push(grad);
        nce_total += nce;
        c2kd_total += c2kd;
        per_language.push(LanguageLoss {
            language: s.language.clone().unwrap_or_else(|| format!("#{idx}")),
            nce,
            c2kd,
        });
    }
    Ok((
        LossBreakdown {
            total: blend(cfg.alpha, nce_total, c2kd_total),
            nce: nce_total,
            c2kd: c2kd_total,
            per_language,
            alpha: cfg.alpha,
        },
        grads,
    ))
}

fn blend(alpha: f64, nce: f64, c2kd: f64) -> f64 {
    if alpha == 1.0 {
        nce
    } else if alpha == 0.0 {
        c2kd
    } else {
        alpha * nce + (1.0 - alpha) * c2kd
    }
}

/// `α·Σ_l nce(S^l, τ) + (1−α)·Σ_l c2kd(S^l, S′, τ′)`.
pub fn combined_loss(
    s_per_language: &[SimilarityMatrix],
    teacher_pooled: &SimilarityMatrix,
    tau: f64,
    tau_prime: f64,
    alpha: f64,
) -> Result<LossBreakdown> {
    let cfg = ObjectiveConfig {
        tau,
        tau_prime,
        alpha,
        ..ObjectiveConfig::default()
    };
    student_objective(s_per_language, Targets::Shared(std::slice::from_ref(teacher_pooled)), &cfg).map(|(b, _)| b)
}

/// Sum over rows of the entropy of `softmax_rows(S, τ)`.
pub fn row_entropy_sum(s: &SimilarityMatrix, tau: f64) -> Result<f64> {
    let q = softmax_rows(s.scores(), tau)?;
    let log_q = log_softmax_rows(s.scores(), tau)?;
    Ok(-q
        .data()
        .iter()
        .zip(log_q.data())
        .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
        .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(rows: &[&[f64]]) -> SimilarityMatrix {
        SimilarityMatrix::from_scores(Tensor2D::from_rows(rows).unwrap()).unwrap()
    }

    fn saturated(b: usize) -> SimilarityMatrix {
        let mut t = Tensor2D::filled(b, b, -1.0);
        for i in 0..b {
            t.set(i, i, 1.0);
        }
        SimilarityMatrix::from_scores(t).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let e = Tensor2D::from_rows(&[[0.6, 0.8], [1.0, 0.0]]).unwrap();
        let s = similarity_matrix(&e, &e).unwrap();
        assert!((s.scores().get(0, 0) - 1.0).abs() < 1e-15);
        assert!((s.scores().get(1, 1) - 1.0).abs() < 1e-15);
        let o = Tensor2D::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = similarity_matrix(&o, &o).unwrap();
        assert_eq!(s.scores().get(0, 1), 0.0);
    }

    #[test]
    fn similarity_rejects_bad_inputs() {
        let a = Tensor2D::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Tensor2D::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(similarity_matrix(&a, &b), Err(Error::Dimension { .. })));
        let c = Tensor2D::from_rows(&[[2.0, 0.0]]).unwrap();
        assert!(matches!(similarity_matrix(&c, &a), Err(Error::Contract(_))));
    }

    #[test]
    fn nce_examples() {
        let flat = SimilarityMatrix::from_scores(Tensor2D::filled(4, 4, 0.3)).unwrap();
        for tau in [0.05, 1.0, 7.0] {
            assert!((nce_loss(&flat, tau).unwrap() - 4.0 * 4f64.ln()).abs() < 1e-12);
        }
        let id = SimilarityMatrix::from_scores(Tensor2D::identity(2)).unwrap();
        let expected = 2.0 * (1.0 + (-1f64).exp()).ln();
        assert!((nce_loss(&id, 1.0).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.6265).abs() < 1e-4);
        assert!(nce_loss(&saturated(5), 0.01).unwrap() < 1e-6);
        assert!(matches!(nce_loss(&id, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        let s = sim(&[&[0.2, -0.4, 0.9], &[0.0, 0.5, -0.1], &[0.7, 0.3, 0.3]]);
        let ce = cross_entropy_soft(&TargetDistribution::one_hot(3), &s, 0.1).unwrap();
        assert!((ce - nce_loss(&s, 0.1).unwrap()).abs() < 1e-12);

        let flat = SimilarityMatrix::from_scores(Tensor2D::filled(5, 5, -0.2)).unwrap();
        let ce = cross_entropy_soft(&TargetDistribution::uniform(5), &flat, 0.5).unwrap();
        assert!((ce - 5.0 * 5f64.ln()).abs() < 1e-12);

        let bad = Tensor2D::from_rows(&[[0.5, 0.6, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(TargetDistribution::new(bad), Err(Error::Contract(_))));
    }

    #[test]
    fn cross_entropy_matches_double_sum() {
        let p = TargetDistribution::new(
            Tensor2D::from_rows(&[[0.2, 0.5, 0.3], [0.1, 0.1, 0.8], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]).unwrap(),
        )
        .unwrap();
        let s = sim(&[&[0.9, -0.3, 0.1], &[-0.5, 0.4, 0.6], &[0.0, 0.25, -0.75]]);
        let tau = 0.2;
        let mut expected = 0.0;
        for i in 0..3 {
            let z: f64 = (0..3).map(|k| (s.scores().get(i, k) / tau).exp()).sum();
            for j in 0..3 {
                let q = (s.scores().get(i, j) / tau).exp() / z;
                expected -= p.probs().get(i, j) * q.ln();
            }
        }
        assert!((cross_entropy_soft(&p, &s, tau).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn c2kd_examples() {
        let s = sim(&[&[0.4, 0.1], &[-0.2, 0.6]]);
        let self_kd = c2kd_loss(&s, &s, 0.1).unwrap();
        assert!((self_kd - row_entropy_sum(&s, 0.1).unwrap()).abs() < 1e-12);

        // closed form for B=2: rows are two-way softmaxes
        let t = sim(&[&[0.9, -0.1], &[0.3, 0.5]]);
        let tp = 0.1;
        let mut expected = 0.0;
        for i in 0..2 {
            let (t0, t1) = (t.scores().get(i, 0) / tp, t.scores().get(i, 1) / tp);
            let (s0, s1) = (s.scores().get(i, 0) / tp, s.scores().get(i, 1) / tp);
            let p0 = 1.0 / (1.0 + (t1 - t0).exp());
            let q0 = 1.0 / (1.0 + (s1 - s0).exp());
            expected -= p0 * q0.ln() + (1.0 - p0) * (1.0 - q0).ln();
        }
        assert!((c2kd_loss(&s, &t, tp).unwrap() - expected).abs() < 1e-12);

        let other = SimilarityMatrix::from_scores(Tensor2D::zeros(3, 3)).unwrap();
        assert!(matches!(c2kd_loss(&s, &other, 0.1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn combined_endpoints_and_blend() {
        let s1 = sim(&[&[0.4, 0.1], &[-0.2, 0.6]]);
        let s2 = sim(&[&[0.1, 0.3], &[0.2, -0.6]]);
        let t = sim(&[&[0.9, -0.1], &[0.3, 0.5]]);
        let langs = [s1.clone(), s2.clone()];

        let b1 = combined_loss(&langs, &t, 0.05, 0.1, 1.0).unwrap();
        assert_eq!(b1.total, b1.nce);
        assert!(b1.c2kd > 0.0);
        let b0 = combined_loss(&langs, &t, 0.05, 0.1, 0.0).unwrap();
        assert_eq!(b0.total, b0.c2kd);

        let nce = nce_loss(&s1, 0.05).unwrap() + nce_loss(&s2, 0.05).unwrap();
        let kd = c2kd_loss(&s1, &t, 0.1).unwrap() + c2kd_loss(&s2, &t, 0.1).unwrap();
        let half = combined_loss(&langs, &t, 0.05, 0.1, 0.5).unwrap();
        assert!((half.total - (0.5 * nce + 0.5 * kd)).abs() < 1e-12);
        assert_eq!(half.per_language.len(), 2);
        assert!(matches!(combined_loss(&langs, &t, 0.05, 0.1, 1.5), Err(Error::Parameter(_))));
    }

    #[test]
    fn smooth_l1_examples() {
        let a = sim(&[&[0.4, 0.1], &[-0.2, 0.6]]);
        assert_eq!(smooth_l1_distill(&a, &a, false, 0.1).unwrap(), 0.0);
        assert_eq!(smooth_l1_distill(&a, &a, true, 0.1).unwrap(), 0.0);
        let x = Tensor2D::filled(3, 3, 0.75);
        let y = Tensor2D::filled(3, 3, 0.25);
        assert!((smooth_l1_mean(&x, &y).unwrap() - 0.125).abs() < 1e-15);
        let x = Tensor2D::filled(3, 3, 2.0);
        let y = Tensor2D::filled(3, 3, -1.0);
        assert!((smooth_l1_mean(&x, &y).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        let s = sim(&[&[0.4, 0.1, -0.3], &[-0.2, 0.6, 0.05], &[0.33, -0.7, 0.2]]);
        let t = sim(&[&[0.9, -0.1, 0.2], &[0.3, 0.5, -0.4], &[0.1, 0.1, 0.8]]);
        let h = 1e-6;
        type LossFn = Box<dyn Fn(&SimilarityMatrix) -> (f64, Tensor2D)>;
        let t1 = t.clone();
        let t2 = t.clone();
        let t3 = t.clone();
        let cases: Vec<(&str, LossFn)> = vec![
            ("nce", Box::new(|s| nce_loss_with_grad(s, 0.3).unwrap())),
            ("c2kd", Box::new(move |s| c2kd_loss_with_grad(s, &t1, 0.2).unwrap())),
            ("l1", Box::new(move |s| smooth_l1_distill_with_grad(s, &t2, false, 0.2).unwrap())),
            ("sl1", Box::new(move |s| smooth_l1_distill_with_grad(s, &t3, true, 0.2).unwrap())),
        ];
        for (name, f) in cases {
            let (_, g) = f(&s);
            for i in 0..3 {
                for j in 0..3 {
                    let mut p = s.scores().clone();
                    p.set(i, j, p.get(i, j) + h);
                    let mut m = s.scores().clone();
                    m.set(i, j, m.get(i, j) - h);
                    let lp = f(&SimilarityMatrix::from_scores(p).unwrap()).0;
                    let lm = f(&SimilarityMatrix::from_scores(m).unwrap()).0;
                    let num = (lp - lm) / (2.0 * h);
                    assert!(kernel::relative_error(g.get(i, j), num) < 1e-6, "{name} ({i},{j}): {} vs {num}", g.get(i, j));
                }
            }
        }
    }

    #[test]
    fn symmetric_variant_adds_transposed_direction() {
        let s = sim(&[&[0.4, 0.1], &[-0.2, 0.6]]);
        let cfg = ObjectiveConfig {
            symmetric: true,
            ..ObjectiveConfig::default()
        };
        let (b, _) = student_objective(std::slice::from_ref(&s), Targets::None, &cfg).unwrap();
        let expected = nce_loss(&s, 0.05).unwrap() + nce_loss(&s.transpose(), 0.05).unwrap();
        assert!((b.nce - expected).abs() < 1e-12);
    }
}
