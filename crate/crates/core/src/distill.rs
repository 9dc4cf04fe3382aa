//! Frozen teacher ensembles: English text-video scores from each teacher
//! and the elementwise pooler that merges them into one target matrix.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Corpus, ENGLISH};
use crate::error::{Error, Result};
use crate::kernel::{matmul_nt, Tensor2D};
use crate::model::ModelParams;
use crate::objectives::{similarity_matrix, SimilarityMatrix};

/// How the `M` teacher matrices are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolerKind {
    #[default]
    Mean,
    Max,
    Min,
    /// No pooling: the distillation loss is applied to each teacher matrix
    /// and summed.
    PerTeacher,
}

impl PoolerKind {
    pub const ALL: [PoolerKind; 4] = [PoolerKind::Mean, PoolerKind::Max, PoolerKind::Min, PoolerKind::PerTeacher];

    pub fn label(self) -> &'static str {
        match self {
            PoolerKind::Mean => "mean",
            PoolerKind::Max => "max",
            PoolerKind::Min => "min",
            PoolerKind::PerTeacher => "per_teacher",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherEnsemble {
    teachers: Vec<ModelParams>,
    pub pooler: PoolerKind,
}

impl TeacherEnsemble {
    pub fn new(teachers: Vec<ModelParams>, pooler: PoolerKind) -> Result<Self> {
        if teachers.is_empty() {
            return Err(Error::Parameter("a teacher ensemble needs at least one teacher".into()));
        }
        if let Some(i) = teachers.iter().position(|t| !t.frozen) {
            return Err(Error::Parameter(format!("teacher {i} is not frozen")));
        }
        Ok(Self { teachers, pooler })
    }

    pub fn teachers(&self) -> &[ModelParams] {
        &self.teachers
    }

    pub fn len(&self) -> usize {
        self.teachers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teachers.is_empty()
    }

    pub fn with_pooler(&self, pooler: PoolerKind) -> Self {
        Self {
            teachers: self.teachers.clone(),
            pooler,
        }
    }
}

/// One English text-video similarity matrix per teacher.
pub fn teacher_scores(batch: &Batch<'_>, ensemble: &TeacherEnsemble) -> Result<Vec<SimilarityMatrix>> {
    teacher_scores_in(batch, ensemble, ENGLISH)
}

/// Teacher matrices computed from captions in `language`.
pub fn teacher_scores_in(
    batch: &Batch<'_>,
    ensemble: &TeacherEnsemble,
    language: &str,
) -> Result<Vec<SimilarityMatrix>> {
    let captions = batch.captions(language)?;
    let frames = batch.frames();
    let ids = batch.ids();
    ensemble
        .teachers
        .par_iter()
        .map(|t| {
            let text = t.text_head.embed_batch(&captions)?;
            let video = t.video_head.embed_batch(&frames)?;
            Ok(similarity_matrix(&text, &video)?
                .with_language(language)
                .with_ids(ids.clone()))
        })
        .collect()
}

/// Elementwise mean, max or min over teacher matrices.
pub fn pool_teacher_matrices(matrices: &[SimilarityMatrix], kind: PoolerKind) -> Result<SimilarityMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Parameter("cannot pool an empty list of teacher matrices".into()))?;
    for m in &matrices[1..] {
        if m.scores().shape() != first.scores().shape() {
            return Err(Error::Dimension {
                op: "pool_teacher_matrices",
                left: first.scores().shape(),
                right: m.scores().shape(),
            });
        }
    }
    let mut out = first.scores().clone();
    match kind {
        PoolerKind::Mean => {
            // Summing each entry in sorted order makes the result independent
            // of teacher order; the clamp only absorbs rounding.
            let n = matrices.len() as f64;
            let mut values = Vec::with_capacity(matrices.len());
            for (i, o) in out.data_mut().iter_mut().enumerate() {
                values.clear();
                values.extend(matrices.iter().map(|m| m.scores().data()[i]));
                values.sort_by(f64::total_cmp);
                let mean = values.iter().sum::<f64>() / n;
                *o = mean.clamp(values[0], values[values.len() - 1]);
            }
        }
        PoolerKind::Max | PoolerKind::Min => {
            for m in &matrices[1..] {
                for (o, &v) in out.data_mut().iter_mut().zip(m.scores().data()) {
                    *o = if kind == PoolerKind::Max { o.max(v) } else { o.min(v) };
                }
            }
        }
        PoolerKind::PerTeacher => {
            return Err(Error::Parameter(
                "per-teacher mode has no pooled matrix; distill against each teacher".into(),
            ))
        }
    }
    let mut pooled = SimilarityMatrix::from_scores(out)?.with_ids(first.ids.clone());
    pooled.language = first.language.clone();
    Ok(pooled)
}

/// The matrices a student distills from under `kind`: the pooled matrix,
/// or every teacher matrix in per-teacher mode.
pub fn distillation_targets(matrices: Vec<SimilarityMatrix>, kind: PoolerKind) -> Result<Vec<SimilarityMatrix>> {
    match kind {
        PoolerKind::PerTeacher => {
            if matrices.is_empty() {
                return Err(Error::Parameter("no teacher matrices".into()));
            }
            Ok(matrices)
        }
        _ => Ok(vec![pool_teacher_matrices(&matrices, kind)?]),
    }
}

/// Teacher embeddings precomputed once for a fixed set of records.
///
/// Teachers are frozen, so their per-record embeddings never change; batch
/// matrices assembled from the cache are bitwise identical to
/// [`teacher_scores_in`].
#[derive(Debug, Clone)]
pub struct TeacherCache {
    language: String,
    embeddings: Vec<(Tensor2D, Tensor2D)>,
    position: HashMap<u64, usize>,
}

impl TeacherCache {
    pub fn build(ensemble: &TeacherEnsemble, corpus: &Corpus, ids: &[u64], language: &str) -> Result<Self> {
        let records = ids.iter().map(|id| corpus.get(*id)).collect::<Result<Vec<_>>>()?;
        let captions = records.iter().map(|r| r.caption(language)).collect::<Result<Vec<_>>>()?;
        let frames: Vec<_> = records.iter().map(|r| &r.frames).collect();
        let embeddings = ensemble
            .teachers
            .par_iter()
            .map(|t| Ok((t.text_head.embed_batch(&captions)?, t.video_head.embed_batch(&frames)?)))
            .collect::<Result<Vec<_>>>()?;
        let position = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        Ok(Self {
            language: language.to_string(),
            embeddings,
            position,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn scores(&self, batch: &Batch<'_>) -> Result<Vec<SimilarityMatrix>> {
        let ids = batch.ids();
        let rows = ids
            .iter()
            .map(|id| {
                self.position
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Internal(format!("record {id} missing from teacher cache")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.embeddings
            .iter()
            .map(|(text, video)| {
                let gather = |m: &Tensor2D| {
                    let mut out = Tensor2D::zeros(rows.len(), m.cols());
                    for (i, &r) in rows.iter().enumerate() {
                        out.row_mut(i).copy_from_slice(m.row(r));
                    }
                    out
                };
                let scores = matmul_nt(&gather(text), &gather(video))?;
                Ok(SimilarityMatrix::from_scores(scores)?
                    .with_language(self.language.clone())
                    .with_ids(ids.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SimilarityMatrix {
        SimilarityMatrix::from_scores(Tensor2D::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn single_matrix_pools_to_itself() {
        let a = m(&[&[0.1, -0.4], &[0.9, 0.2]]);
        for kind in [PoolerKind::Mean, PoolerKind::Max, PoolerKind::Min] {
            assert_eq!(pool_teacher_matrices(std::slice::from_ref(&a), kind).unwrap().scores(), a.scores());
        }
    }

    #[test]
    fn two_element_reductions() {
        let pos = m(&[&[1.0]]);
        let neg = m(&[&[-1.0]]);
        let both = [pos, neg];
        assert_eq!(pool_teacher_matrices(&both, PoolerKind::Min).unwrap().scores().get(0, 0), -1.0);
        assert_eq!(pool_teacher_matrices(&both, PoolerKind::Max).unwrap().scores().get(0, 0), 1.0);
        assert_eq!(pool_teacher_matrices(&both, PoolerKind::Mean).unwrap().scores().get(0, 0), 0.0);
    }

    #[test]
    fn pooling_errors() {
        assert!(matches!(pool_teacher_matrices(&[], PoolerKind::Mean), Err(Error::Parameter(_))));
        let a = m(&[&[1.0]]);
        let b = m(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(pool_teacher_matrices(&[a.clone(), b], PoolerKind::Max), Err(Error::Dimension { .. })));
        assert!(matches!(pool_teacher_matrices(&[a], PoolerKind::PerTeacher), Err(Error::Parameter(_))));
    }

    #[test]
    fn ensemble_requires_frozen_members() {
        let cfg = crate::model::ModelConfig { embed_dim: 4, ..Default::default() };
        let t = ModelParams::init(3, 3, &cfg, 1).unwrap();
        assert!(TeacherEnsemble::new(vec![t.clone()], PoolerKind::Min).is_err());
        assert!(TeacherEnsemble::new(vec![], PoolerKind::Min).is_err());
        assert!(TeacherEnsemble::new(vec![t.freeze()], PoolerKind::Min).is_ok());
    }
}
