//! Invariants checked over randomly generated inputs.

mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use usnid::alignment::{align_centroids, remap_labels, AlignmentMap};
use usnid::clustering::{assign, kmeans_run, Init, KMeansConfig};
use usnid::data::{feature_dropout, Content, Corpus, CorpusFormat};
use usnid::encoder::EncoderParams;
use usnid::estimation::{estimate_k_unsup, ClusterEstimate};
use usnid::metrics::{acc, ari, nmi, ContingencyTable};
use usnid::objectives::{scl_loss, semi_scl_loss, ucl_loss, ContrastiveBatch};

fn rows(pairs: std::ops::RangeInclusive<usize>, dim: usize) -> impl Strategy<Value = Array2<f64>> {
    pairs.prop_flat_map(move |n| {
        prop::collection::vec(0.2f64..3.0, 2 * n * dim).prop_map(move |mut v| {
            // Mixed signs, bounded away from the zero vector.
            for (i, x) in v.iter_mut().enumerate() {
                if i % 3 == 1 {
                    *x = -*x;
                }
            }
            Array2::from_shape_vec((2 * n, dim), v).unwrap()
        })
    })
}

/// Reorders pairs and swaps the views inside some of them.
fn shuffle_pairs(z: &Array2<f64>, labels: &[usize], seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = z.nrows() / 2;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut rows_out = Vec::new();
    let mut labels_out = Vec::new();
    for (k, &p) in order.iter().enumerate() {
        let (a, b) = if (seed >> (k % 60)) & 1 == 1 { (2 * p + 1, 2 * p) } else { (2 * p, 2 * p + 1) };
        for r in [a, b] {
            rows_out.extend(z.row(r).iter().copied());
            labels_out.push(labels[r]);
        }
    }
    (Array2::from_shape_vec(z.dim(), rows_out).unwrap(), labels_out)
}

fn pair_labels(n: usize, seed: u64) -> Vec<usize> {
    (0..n).flat_map(|i| [((seed >> i) as usize + i) % 3; 2]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contrastive_losses_ignore_pair_order(z in rows(1..=5, 4), seed in any::<u64>(), tau in 0.05f64..1.0) {
        let labels = pair_labels(z.nrows() / 2, seed);
        let (z2, l2) = shuffle_pairs(&z, &labels, seed);
        let a = ContrastiveBatch::new(z.clone(), Some(labels), tau).unwrap();
        let b = ContrastiveBatch::new(z2, Some(l2), tau).unwrap();
        prop_assert!((ucl_loss(&a).unwrap() - ucl_loss(&b).unwrap()).abs() < 1e-10);
        prop_assert!((scl_loss(&a).unwrap() - scl_loss(&b).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn contrastive_losses_ignore_row_scale(z in rows(1..=4, 3), scales in prop::collection::vec(0.1f64..10.0, 8)) {
        let labels = pair_labels(z.nrows() / 2, 5);
        let mut scaled = z.clone();
        for (i, mut r) in scaled.rows_mut().into_iter().enumerate() {
            r *= scales[i];
        }
        let a = ContrastiveBatch::new(z, Some(labels.clone()), 0.1).unwrap();
        let b = ContrastiveBatch::new(scaled, Some(labels), 0.1).unwrap();
        prop_assert!((ucl_loss(&a).unwrap() - ucl_loss(&b).unwrap()).abs() < 1e-9);
        prop_assert!((scl_loss(&a).unwrap() - scl_loss(&b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn semi_scl_reduces_to_ucl_and_scl(z in rows(1..=5, 4), seed in any::<u64>()) {
        let n = z.nrows() / 2;
        let batch = ContrastiveBatch::new(z, Some(pair_labels(n, seed)), 0.2).unwrap();
        let none = semi_scl_loss(&batch, &vec![false; n]).unwrap();
        let all = semi_scl_loss(&batch, &vec![true; n]).unwrap();
        prop_assert!((none - ucl_loss(&batch).unwrap()).abs() < 1e-12);
        prop_assert!((all - scl_loss(&batch).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn remap_preserves_cluster_sizes(labels in prop::collection::vec(0usize..6, 1..60), seed in any::<u64>()) {
        let mut forward: Vec<usize> = (0..6).collect();
        forward.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let map = AlignmentMap::from_forward(forward, 0.0).unwrap();
        let remapped = remap_labels(&labels, &map).unwrap();
        let sizes = |l: &[usize]| {
            let mut s = vec![0usize; 6];
            for &x in l { s[x] += 1; }
            s.sort_unstable();
            s
        };
        prop_assert_eq!(sizes(&labels), sizes(&remapped));
    }

    #[test]
    fn alignment_ignores_common_translation(v in prop::collection::vec(-5.0f64..5.0, 4 * 3), shift in prop::collection::vec(-50.0f64..50.0, 3), seed in any::<u64>()) {
        let prev = Array2::from_shape_vec((4, 3), v).unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cur = prev.select(ndarray::Axis(0), &order).mapv(|x| x + 0.01);
        let base = align_centroids(cur.view(), prev.view()).unwrap();
        let t = ndarray::Array1::from(shift);
        let moved = align_centroids((&cur + &t).view(), (&prev + &t).view()).unwrap();
        prop_assert_eq!(&base.forward, &moved.forward);
    }

    #[test]
    fn metrics_ignore_label_names(gt in prop::collection::vec(0usize..4, 2..40), pred_seed in any::<u64>()) {
        let pred: Vec<usize> = gt.iter().enumerate().map(|(i, &g)| if (pred_seed >> (i % 64)) & 1 == 1 { g } else { (g + i) % 5 }).collect();
        let renamed: Vec<usize> = pred.iter().map(|p| 100 - 7 * p).collect();
        prop_assert!((nmi(&gt, &pred).unwrap() - nmi(&gt, &renamed).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&gt, &pred).unwrap() - ari(&gt, &renamed).unwrap()).abs() < 1e-12);
        prop_assert_eq!(acc(&gt, &pred).unwrap(), acc(&gt, &renamed).unwrap());
        let nmi_v = nmi(&gt, &pred).unwrap();
        prop_assert!((0.0..=1.0).contains(&nmi_v));
        // The best matching covers at least the largest cell.
        let t = ContingencyTable::new(&gt, &pred).unwrap();
        let largest = *t.counts.iter().max().unwrap() as f64 / gt.len() as f64;
        prop_assert!(acc(&gt, &pred).unwrap() >= largest);
    }

    #[test]
    fn lloyd_objective_never_increases(v in prop::collection::vec(-10.0f64..10.0, 2 * 30), k in 1usize..6, seed in any::<u64>()) {
        let points = Array2::from_shape_vec((30, 2), v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = KMeansConfig { n_init: 1, ..Default::default() };
        let state = kmeans_run(points.view(), k, Init::KMeansPlusPlus, &cfg, &mut rng).unwrap();
        for w in state.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        prop_assert!(state.objective <= *state.objective_trace.last().unwrap() + 1e-9);
        prop_assert_eq!(&state.assignment, &assign(points.view(), state.centroids.view()));
        // A warm restart from the result is already a fixpoint.
        let again = kmeans_run(points.view(), k, Init::Warm(state.centroids.clone()), &cfg, &mut rng).unwrap();
        prop_assert!(again.objective <= state.objective + 1e-9);
    }

    #[test]
    fn mean_pooling_ignores_token_order(tokens in prop::collection::vec(0usize..12, 1..10), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = EncoderParams::init(12, 5, 4, &mut rng);
        let mut shuffled = tokens.clone();
        shuffled.shuffle(&mut rng);
        let a = enc.encode(&Content::Tokens(tokens)).unwrap();
        let b = enc.encode(&Content::Tokens(shuffled)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_stays_within_bounds(sizes in prop::collection::vec(0usize..50, 1..30)) {
        prop_assume!(sizes.iter().sum::<usize>() > 0);
        let k_prime = sizes.len();
        let e = ClusterEstimate::from_sizes(sizes, Default::default(), 0);
        prop_assert!(e.k_total >= 1 && e.k_total <= k_prime);
    }

    #[test]
    fn over_clustering_estimate_bounds(v in prop::collection::vec(-10.0f64..10.0, 2 * 40), k_prime in 1usize..12, seed in any::<u64>()) {
        let points = Array2::from_shape_vec((40, 2), v).unwrap();
        let cfg = KMeansConfig { n_init: 2, ..Default::default() };
        let (e, state) = estimate_k_unsup(points.view(), k_prime, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(e.k_total >= 1 && e.k_total <= k_prime);
        prop_assert_eq!(e.sizes.iter().sum::<usize>(), 40);
        prop_assert_eq!(state.k(), k_prime);
    }

    #[test]
    fn feature_dropout_is_reproducible(v in prop::collection::vec(-5.0f64..5.0, 1..20), p in 0.0f64..0.9, seed in any::<u64>()) {
        let a = feature_dropout(&v, p, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = feature_dropout(&v, p, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&a, &b);
        for (x, y) in v.iter().zip(&a) {
            prop_assert!(*y == 0.0 || (y - x / (1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn text_corpus_round_trips(texts in prop::collection::vec(prop::collection::vec("[a-z]{1,6}", 1..6), 1..12), labels in prop::collection::vec(0usize..3, 12)) {
        let texts: Vec<String> = texts.iter().map(|w| w.join(" ")).collect();
        let labels: Vec<Option<usize>> = labels[..texts.len()].iter().map(|&l| Some(l)).collect();
        let corpus = Corpus::from_texts(&texts, labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        corpus.save(&path).unwrap();
        let back = Corpus::load(&path, CorpusFormat::TsvText).unwrap();
        prop_assert_eq!(back.len(), corpus.len());
        for (u, w) in corpus.utterances.iter().zip(&back.utterances) {
            prop_assert_eq!(&u.raw_text, &w.raw_text);
            let name = |c: &Corpus, l: Option<usize>| l.map(|l| c.label_names[l].clone());
            prop_assert_eq!(name(&corpus, u.eval_label()), name(&back, w.eval_label()));
            let words = |c: &Corpus, content: &Content| match content {
                Content::Tokens(t) => t.iter().map(|&i| c.vocab.token(i).unwrap().to_string()).collect::<Vec<_>>(),
                Content::Features(_) => unreachable!(),
            };
            prop_assert_eq!(words(&corpus, &u.content), words(&back, &w.content));
        }
    }

    #[test]
    fn feature_corpus_round_trips(v in prop::collection::vec(-1e3f64..1e3, 3 * 5)) {
        let rows: Vec<Vec<f64>> = v.chunks(3).map(|c| c.to_vec()).collect();
        let corpus = Corpus::from_features(rows.clone(), (0..5).map(|i| Some(i % 2)).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.emb");
        corpus.save(&path).unwrap();
        let back = Corpus::load(&path, CorpusFormat::EmbeddingMatrix).unwrap();
        for (u, r) in back.utterances.iter().zip(&rows) {
            prop_assert_eq!(&u.content, &Content::Features(r.clone()));
        }
    }
}
