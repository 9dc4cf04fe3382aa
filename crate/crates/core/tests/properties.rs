//! Property tests for the numerical kernels, objectives, poolers and ranking.

use proptest::prelude::*;

use c2kd::distill::{pool_teacher_matrices, PoolerKind};
use c2kd::eval::{rank_scores, recall_at_k};
use c2kd::kernel::{l2_normalize_rows, softmax_rows, Tensor2D};
use c2kd::objectives::{
    c2kd_loss, cross_entropy_soft, nce_loss, similarity_matrix, smooth_l1_mean, SimilarityMatrix, TargetDistribution,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor2D> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Tensor2D::new(rows, cols, v).unwrap())
}

/// Cosine similarities of two random embedding sets, so entries lie in [-1, 1].
fn similarity(b: usize) -> impl Strategy<Value = SimilarityMatrix> {
    (matrix(b, 5), matrix(b, 5)).prop_filter_map("degenerate rows", |(t, v)| {
        let t = l2_normalize_rows(&t).ok()?;
        let v = l2_normalize_rows(&v).ok()?;
        similarity_matrix(&t, &v).ok()
    })
}

fn batch_and_similarity() -> impl Strategy<Value = SimilarityMatrix> {
    (1usize..7).prop_flat_map(similarity)
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(x in matrix(4, 6), tau in 0.01f64..2.0) {
        let p = softmax_rows(&x, tau).unwrap();
        for row in p.row_iter() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn normalized_rows_have_unit_norm(x in matrix(5, 3)) {
        prop_assume!(x.row_iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
        let y = l2_normalize_rows(&x).unwrap();
        for row in y.row_iter() {
            prop_assert!((row.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nce_matches_one_hot_cross_entropy(s in batch_and_similarity(), tau in 0.05f64..1.0) {
        let b = s.batch_size();
        let ce = cross_entropy_soft(&TargetDistribution::one_hot(b), &s, tau).unwrap();
        prop_assert!((nce_loss(&s, tau).unwrap() - ce).abs() < 1e-9);
    }

    #[test]
    fn c2kd_is_bounded_below_by_teacher_entropy((s, t) in (1usize..7).prop_flat_map(|b| (similarity(b), similarity(b)))) {
        // Gibbs: CE(p, q) >= CE(p, p), with p the teacher distribution.
        let own = c2kd_loss(&t, &t, 0.1).unwrap();
        prop_assert!(c2kd_loss(&s, &t, 0.1).unwrap() >= own - 1e-9);
    }

    #[test]
    fn smooth_l1_is_symmetric_and_zero_on_equal(a in matrix(3, 3), b in matrix(3, 3)) {
        prop_assert_eq!(smooth_l1_mean(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(smooth_l1_mean(&a, &b).unwrap(), smooth_l1_mean(&b, &a).unwrap());
        prop_assert!(smooth_l1_mean(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn poolers_are_ordered(mats in (1usize..5, 1usize..6).prop_flat_map(|(m, b)| prop::collection::vec(similarity(b), m))) {
        let min = pool_teacher_matrices(&mats, PoolerKind::Min).unwrap();
        let mean = pool_teacher_matrices(&mats, PoolerKind::Mean).unwrap();
        let max = pool_teacher_matrices(&mats, PoolerKind::Max).unwrap();
        for i in 0..min.scores().len() {
            prop_assert!(min.scores().data()[i] <= mean.scores().data()[i]);
            prop_assert!(mean.scores().data()[i] <= max.scores().data()[i]);
        }
        let mut reversed = mats.clone();
        reversed.reverse();
        let pooled = pool_teacher_matrices(&reversed, PoolerKind::Mean).unwrap();
        prop_assert_eq!(pooled.scores(), mean.scores());
    }

    #[test]
    fn ranking_is_a_sorted_permutation(scores in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 0.5, 1.0]), 1..40)) {
        let order = rank_scores(&scores);
        let mut seen = order.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..scores.len()).collect::<Vec<_>>());
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            prop_assert!(scores[a] > scores[b] || (scores[a] == scores[b] && a < b));
        }
    }

    #[test]
    fn recall_is_monotone_in_k(scores in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 12), 1..10), gt in prop::collection::vec(0usize..12, 10)) {
        let rankings: Vec<Vec<usize>> = scores.iter().map(|s| rank_scores(s)).collect();
        let truth = &gt[..rankings.len()];
        let mut last = 0.0;
        for k in 1..=12 {
            let r = recall_at_k(&rankings, truth, k).unwrap();
            prop_assert!((0.0..=100.0).contains(&r));
            prop_assert!(r >= last);
            last = r;
        }
        prop_assert_eq!(last, 100.0);
    }
}
