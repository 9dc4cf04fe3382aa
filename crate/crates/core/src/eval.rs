//! Text→video retrieval: rank candidates by cosine similarity, R@K per
//! language, and mean ± std aggregation over independently trained runs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{require_languages, Corpus};
use crate::error::{Error, Result};
use crate::kernel::{dot, Tensor2D};
use crate::model::ModelParams;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// Candidate indices by descending score; ties go to the lower index.
pub fn rank_videos(query_emb: &[f64], video_embs: &Tensor2D) -> Result<Vec<usize>> {
    if video_embs.rows() == 0 {
        return Err(Error::Input("no candidate videos to rank".into()));
    }
    if video_embs.cols() != query_emb.len() {
        return Err(Error::Dimension {
            op: "rank_videos",
            left: crate::error::Shape(1, query_emb.len()),
            right: video_embs.shape(),
        });
    }
    let scores: Vec<f64> = video_embs.row_iter().map(|v| dot(query_emb, v)).collect();
    Ok(rank_scores(&scores))
}

/// Stable descending argsort.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Zero-based position of `target` in [`rank_scores`] order, without sorting.
pub fn rank_position(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, v)| v.total_cmp(&s).is_gt() || (j < target && v.total_cmp(&s).is_eq()))
        .count()
}

/// Percentage of queries whose ground-truth candidate is in the top `k`.
pub fn recall_at_k(rankings: &[Vec<usize>], ground_truth: &[usize], k: usize) -> Result<f64> {
    if rankings.len() != ground_truth.len() {
        return Err(Error::Input(format!(
            "{} rankings but {} ground-truth indices",
            rankings.len(),
            ground_truth.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::Input("no queries".into()));
    }
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let mut hits = 0usize;
    for (ranking, &gt) in rankings.iter().zip(ground_truth) {
        let n = ranking.len();
        if k > n {
            return Err(Error::Parameter(format!("K = {k} exceeds the {n} candidates")));
        }
        if gt >= n {
            return Err(Error::Input(format!("ground truth {gt} outside {n} candidates")));
        }
        if ranking[..k].contains(&gt) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / rankings.len() as f64)
}

/// Recall values of one trained model, indexed `[language][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecall {
    pub label: String,
    pub recall: Vec<Vec<f64>>,
}

/// Per-language R@K over one or more runs with cross-run statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub ks: Vec<usize>,
    pub languages: Vec<String>,
    pub runs: Vec<RunRecall>,
    /// `[language][k]`
    pub mean: Vec<Vec<f64>>,
    /// Sample standard deviation across runs, `[language][k]`.
    pub std: Vec<Vec<f64>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl RetrievalReport {
    pub fn from_runs(ks: Vec<usize>, languages: Vec<String>, runs: Vec<RunRecall>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Input("a report needs at least one run".into()));
        }
        let mut mean = vec![vec![0.0; ks.len()]; languages.len()];
        let mut std = mean.clone();
        for l in 0..languages.len() {
            for k in 0..ks.len() {
                let values: Vec<f64> = runs.iter().map(|r| r.recall[l][k]).collect();
                (mean[l][k], std[l][k]) = mean_std(&values);
            }
        }
        Ok(Self {
            ks,
            languages,
            runs,
            mean,
            std,
        })
    }

    fn k_index(&self, k: usize) -> Result<usize> {
        self.ks
            .iter()
            .position(|&x| x == k)
            .ok_or_else(|| Error::Parameter(format!("R@{k} was not evaluated")))
    }

    fn language_index(&self, language: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == language)
            .ok_or_else(|| Error::Parameter(format!("language `{language}` was not evaluated")))
    }

    /// Cross-run mean for one language.
    pub fn value(&self, language: &str, k: usize) -> Result<f64> {
        Ok(self.mean[self.language_index(language)?][self.k_index(k)?])
    }

    /// Mean over languages of the cross-run mean.
    pub fn average(&self, k: usize) -> Result<f64> {
        let ki = self.k_index(k)?;
        Ok(self.mean.iter().map(|row| row[ki]).sum::<f64>() / self.languages.len() as f64)
    }

    /// Per-run language average over languages not in `exclude`.
    pub fn run_average_excluding(&self, run: usize, k: usize, exclude: &[&str]) -> Result<f64> {
        let ki = self.k_index(k)?;
        let r = self
            .runs
            .get(run)
            .ok_or_else(|| Error::Parameter(format!("no run {run}")))?;
        let values: Vec<f64> = self
            .languages
            .iter()
            .zip(&r.recall)
            .filter(|(l, _)| !exclude.contains(&l.as_str()))
            .map(|(_, row)| row[ki])
            .collect();
        if values.is_empty() {
            return Err(Error::Parameter("every language was excluded".into()));
        }
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Cross-run mean of the language average over languages not in `exclude`.
    pub fn average_excluding(&self, k: usize, exclude: &[&str]) -> Result<f64> {
        let per_run = (0..self.runs.len())
            .map(|r| self.run_average_excluding(r, k, exclude))
            .collect::<Result<Vec<_>>>()?;
        Ok(per_run.iter().sum::<f64>() / per_run.len() as f64)
    }

    /// CSV rows `language,k,mean,std,<run labels...>`, followed by `avg`
    /// rows holding the per-language mean.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("language,k,mean,std");
        for r in &self.runs {
            out.push(',');
            out.push_str(&r.label);
        }
        out.push('\n');
        for (l, lang) in self.languages.iter().enumerate() {
            for (ki, k) in self.ks.iter().enumerate() {
                let _ = write!(out, "{lang},{k},{},{}", self.mean[l][ki], self.std[l][ki]);
                for r in &self.runs {
                    let _ = write!(out, ",{}", r.recall[l][ki]);
                }
                out.push('\n');
            }
        }
        let n = self.languages.len() as f64;
        for (ki, k) in self.ks.iter().enumerate() {
            let per_run: Vec<f64> = self
                .runs
                .iter()
                .map(|r| r.recall.iter().map(|row| row[ki]).sum::<f64>() / n)
                .collect();
            let (_, std) = mean_std(&per_run);
            let avg = self.mean.iter().map(|row| row[ki]).sum::<f64>() / n;
            let _ = write!(out, "avg,{k},{avg},{std}");
            for v in per_run {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Table with one row per labelled report and one column per language plus
/// the average, showing R@`k` to one decimal.
pub fn render_table(rows: &[(String, &RetrievalReport)], k: usize) -> Result<String> {
    let Some((_, first)) = rows.first() else {
        return Ok(String::new());
    };
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(6).max(6);
    let mut out = format!("R@{k}\n{:<label_width$}", "Method");
    for lang in &first.languages {
        let _ = write!(out, " {lang:>6}");
    }
    let _ = writeln!(out, " {:>6}", "Avg");
    for (label, report) in rows {
        let _ = write!(out, "{label:<label_width$}");
        for lang in &first.languages {
            let _ = write!(out, " {:>6.1}", report.value(lang, k)?);
        }
        let _ = writeln!(out, " {:>6.1}", report.average(k)?);
    }
    Ok(out)
}

/// Embeds every video once, then every caption per language, and returns
/// recall values `[language][k]`. A `k` at or above the candidate count is
/// full coverage (100).
pub fn evaluate_model(
    model: &ModelParams,
    corpus: &Corpus,
    ids: &[u64],
    languages: &[String],
    ks: &[usize],
) -> Result<Vec<Vec<f64>>> {
    if ids.is_empty() {
        return Err(Error::Input("evaluation split is empty".into()));
    }
    if ks.contains(&0) {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    require_languages(corpus, ids, languages)?;
    let records = ids.iter().map(|id| corpus.get(*id)).collect::<Result<Vec<_>>>()?;
    let frames: Vec<_> = records.iter().map(|r| &r.frames).collect();
    let videos = model.video_head.embed_batch(&frames)?;
    languages
        .iter()
        .map(|lang| {
            let captions = records.iter().map(|r| r.caption(lang)).collect::<Result<Vec<_>>>()?;
            let texts = model.text_head.embed_batch(&captions)?;
            let positions: Vec<usize> = (0..texts.rows())
                .into_par_iter()
                .map(|i| {
                    let q = texts.row(i);
                    let scores: Vec<f64> = videos.row_iter().map(|v| dot(q, v)).collect();
                    rank_position(&scores, i)
                })
                .collect();
            let n = positions.len() as f64;
            Ok(ks
                .iter()
                .map(|&k| 100.0 * positions.iter().filter(|&&p| p < k).count() as f64 / n)
                .collect())
        })
        .collect()
}

/// Evaluates each trained model as one run and aggregates.
pub fn evaluate_retrieval(
    models: &[ModelParams],
    corpus: &Corpus,
    ids: &[u64],
    languages: &[String],
    ks: &[usize],
) -> Result<RetrievalReport> {
    let runs = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(RunRecall {
                label: format!("run_{}", i + 1),
                recall: evaluate_model(m, corpus, ids, languages, ks)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RetrievalReport::from_runs(ks.to_vec(), languages.to_vec(), runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_examples() {
        let videos = Tensor2D::from_rows(&[[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]).unwrap();
        assert_eq!(rank_videos(&[0.6, 0.8], &videos).unwrap()[0], 1);
        let same = Tensor2D::filled(4, 2, 0.5f64.sqrt());
        assert_eq!(rank_videos(&[1.0, 0.0], &same).unwrap(), vec![0, 1, 2, 3]);
        assert!(matches!(rank_videos(&[1.0], &Tensor2D::zeros(0, 1)), Err(Error::Input(_))));
    }

    #[test]
    fn rank_position_matches_sort() {
        let scores = [0.3, 0.9, 0.3, -0.1, 0.9];
        let order = rank_scores(&scores);
        for t in 0..scores.len() {
            assert_eq!(order.iter().position(|&i| i == t).unwrap(), rank_position(&scores, t));
        }
    }

    #[test]
    fn recall_examples() {
        let rankings = vec![vec![0, 1, 2], vec![1, 0, 2], vec![2, 1, 0]];
        assert_eq!(recall_at_k(&rankings, &[0, 1, 2], 1).unwrap(), 100.0);
        assert_eq!(recall_at_k(&rankings, &[2, 2, 1], 3).unwrap(), 100.0);
        assert!((recall_at_k(&rankings, &[1, 1, 1], 1).unwrap() - 100.0 / 3.0).abs() < 1e-12);
        assert!(matches!(recall_at_k(&rankings, &[0, 1, 2], 4), Err(Error::Parameter(_))));
        assert!(matches!(recall_at_k(&rankings, &[0, 1, 2], 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn report_statistics() {
        let runs = vec![
            RunRecall { label: "a".into(), recall: vec![vec![10.0, 20.0], vec![30.0, 50.0]] },
            RunRecall { label: "b".into(), recall: vec![vec![20.0, 30.0], vec![40.0, 60.0]] },
            RunRecall { label: "c".into(), recall: vec![vec![30.0, 40.0], vec![50.0, 70.0]] },
        ];
        let r = RetrievalReport::from_runs(vec![1, 5], vec!["en".into(), "de".into()], runs).unwrap();
        assert_eq!(r.value("en", 1).unwrap(), 20.0);
        assert!((r.std[0][0] - 10.0).abs() < 1e-12);
        assert_eq!(r.average(5).unwrap(), 45.0);
        assert_eq!(r.average_excluding(1, &["en"]).unwrap(), 40.0);
        let csv = r.to_csv();
        assert!(csv.starts_with("language,k,mean,std,a,b,c\n"));
        assert!(csv.contains("avg,1,30,"));
        let table = render_table(&[("NCE".into(), &r)], 1).unwrap();
        assert!(table.contains("20.0") && table.contains("Avg"));
    }
}
