use binhash::baselines::{encode_linear, fit_lsh, fit_pca_rr};
use binhash::eval::{average_precision, map_at_k, QueryRanking, RetrievalRun};
use binhash::hash_head::{total_loss, triplet_loss, TrainConfig};
use binhash::index::{hamming, pack, unpack, PackedCodeSet};
use binhash::ingest::{fuse_frames, FusionWeights, VideoRecord};
use binhash::linalg::{center, matmul, pca};
use binhash::{Matrix, Rng};
use proptest::prelude::*;

fn bits(len: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), len)
}

fn code_lengths() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 63, 64, 65, 128, 512])
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    let scale = a.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

proptest! {
    #[test]
    fn pack_unpack_roundtrip((b, code) in code_lengths().prop_flat_map(|b| (Just(b), bits(b)))) {
        let words = pack(&code);
        prop_assert_eq!(words.len(), b.div_ceil(64));
        prop_assert_eq!(unpack(&words, b), code);
        if b % 64 != 0 {
            prop_assert_eq!(words[words.len() - 1] >> (b % 64), 0);
        }
    }

    #[test]
    fn hamming_is_a_metric(
        (x, y, z) in code_lengths().prop_flat_map(|b| (bits(b), bits(b), bits(b)))
    ) {
        let (x, y, z) = (pack(&x), pack(&y), pack(&z));
        prop_assert_eq!(hamming(&x, &x).unwrap(), 0);
        prop_assert_eq!(hamming(&x, &y).unwrap(), hamming(&y, &x).unwrap());
        prop_assert!(hamming(&x, &z).unwrap() <= hamming(&x, &y).unwrap() + hamming(&y, &z).unwrap());
        if x != y {
            prop_assert!(hamming(&x, &y).unwrap() > 0);
        }
    }

    #[test]
    fn search_matches_sort_oracle(
        b in prop::sample::select(vec![3usize, 16, 65]),
        n in 1usize..200,
        k in 1usize..40,
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        // Few distinct values per code force many ties.
        let random_code = |rng: &mut Rng| -> Vec<bool> { (0..b).map(|i| i % 7 == 0 && rng.next_u64() & 1 == 1).collect() };
        let mut db = PackedCodeSet::new(b).unwrap();
        for i in 0..n {
            db.push_bits(format!("v{i}"), Some((i % 3) as u32), &random_code(&mut rng)).unwrap();
        }
        let q = pack(&random_code(&mut rng));
        let mut oracle: Vec<(u32, usize)> = (0..n).map(|i| (hamming(db.code(i), &q).unwrap(), i)).collect();
        oracle.sort();
        oracle.truncate(k);
        let got: Vec<(u32, usize)> = db.search_topk(&q, k).unwrap().neighbors.iter().map(|h| (h.distance, h.index)).collect();
        prop_assert_eq!(&got, &oracle);
        let sharded = binhash::index::search_topk_sharded(&db, &q, k, 1 + (seed % 5) as usize).unwrap();
        prop_assert_eq!(sharded.neighbors.iter().map(|h| (h.distance, h.index)).collect::<Vec<_>>(), oracle);
    }

    #[test]
    fn ap_bounded_and_swap_monotone(rel in prop::collection::vec(any::<bool>(), 1..30), extra in 0usize..10, k in 1usize..30) {
        let total = rel.iter().filter(|&&r| r).count() + extra;
        let ap = average_precision(&rel, k, total);
        prop_assert!((0.0..=1.0).contains(&ap));
        for i in 1..rel.len() {
            if rel[i] && !rel[i - 1] {
                let mut swapped = rel.clone();
                swapped.swap(i, i - 1);
                prop_assert!(average_precision(&swapped, k, total) >= ap);
            }
        }
        let perfect = total.min(k);
        let all_top = perfect > 0 && rel.len() >= perfect && rel[..perfect].iter().all(|&r| r);
        prop_assert_eq!(ap == 1.0, all_top);
    }

    #[test]
    fn map_is_query_order_invariant(
        rels in prop::collection::vec(prop::collection::vec(0u32..3, 5), 1..20),
        seed in any::<u64>(),
    ) {
        let queries: Vec<QueryRanking> = rels
            .iter()
            .map(|r| QueryRanking { label: 0, neighbor_labels: r.iter().map(|&l| Some(l)).collect(), relevant_total: 6 })
            .collect();
        let mut shuffled = queries.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        let a = map_at_k(&RetrievalRun { k: 5, queries }).unwrap();
        let b = map_at_k(&RetrievalRun { k: 5, queries: shuffled }).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn triplet_loss_invariants(
        (a, p, n) in (1usize..16).prop_flat_map(|b| {
            let c = || prop::collection::vec(0.0f64..1.0, b);
            (c(), c(), c())
        }),
        margin in 0.01f64..4.0,
        seed in any::<u64>(),
    ) {
        let l = triplet_loss(&a, &p, &n, margin).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert!((triplet_loss(&a, &a, &a, margin).unwrap() - margin).abs() < 1e-15);
        let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        if d(&a, &p) + margin <= d(&a, &n) {
            prop_assert_eq!(l, 0.0);
        }
        let mut perm: Vec<usize> = (0..a.len()).collect();
        Rng::new(seed).shuffle(&mut perm);
        let apply = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let lp = triplet_loss(&apply(&a), &apply(&p), &apply(&n), margin).unwrap();
        prop_assert!((l - lp).abs() <= 1e-12 * (1.0 + l));
    }

    #[test]
    fn total_loss_is_linear_in_weights(
        l1 in prop::collection::vec(0.0f64..5.0, 1..8),
        l2 in 0.0f64..50.0,
        a in 0.0f64..3.0,
        b in 0.0f64..3.0,
    ) {
        let cfg = |alpha, beta| TrainConfig { alpha, beta, ..TrainConfig::default() };
        let base = total_loss(&l1, l2, &cfg(0.0, b));
        let unit = total_loss(&l1, l2, &cfg(1.0, b)) - base;
        prop_assert!((total_loss(&l1, l2, &cfg(a, b)) - (base + a * unit)).abs() < 1e-9);
        let base = total_loss(&l1, l2, &cfg(a, 0.0));
        prop_assert!((total_loss(&l1, l2, &cfg(a, b)) - (base + b * l2)).abs() < 1e-9);
    }

    #[test]
    fn fusion_is_linear(
        (fa, fb) in (1usize..6, 1usize..5).prop_flat_map(|(f, d)| (matrix(f, d), matrix(f, d))),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        custom in any::<bool>(),
    ) {
        let rec = VideoRecord { video_id: "v".into(), label: 0, frame_start: 0, frame_count: fa.rows() };
        let weights = if custom {
            let raw: Vec<f64> = (1..=fa.rows()).map(|i| i as f64).collect();
            let s: f64 = raw.iter().sum();
            FusionWeights::custom(raw.iter().map(|w| w / s).collect()).unwrap()
        } else {
            FusionWeights::Uniform
        };
        let mix = Matrix::from_vec(
            fa.rows(),
            fa.cols(),
            fa.as_slice().iter().zip(fb.as_slice()).map(|(x, y)| alpha * x + beta * y).collect(),
        ).unwrap();
        let left = fuse_frames(&mix, &rec, &weights).unwrap();
        let ra = fuse_frames(&fa, &rec, &weights).unwrap();
        let rb = fuse_frames(&fb, &rec, &weights).unwrap();
        for j in 0..left.len() {
            prop_assert!((left[j] - (alpha * ra[j] + beta * rb[j])).abs() < 1e-9);
        }
        if !custom {
            for (j, v) in ra.iter().enumerate() {
                let mean = fa.column(j).iter().sum::<f64>() / fa.rows() as f64;
                prop_assert!((v - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn center_then_add_mean_reconstructs(x in (1usize..10, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
        let (xc, mean) = center(&x).unwrap();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                prop_assert!((xc[(i, j)] + mean[j] - x[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6)
            .prop_flat_map(|(p, q, r, s)| (matrix(p, q), matrix(q, r), matrix(r, s)))
    ) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(rel_diff(&left, &right) < 1e-9);
    }

    #[test]
    fn pca_reconstruction_never_adds_variance(
        (x, c) in (3usize..12, 1usize..5).prop_flat_map(|(n, d)| (matrix(n, d), 1..=d.min(n - 1)))
    ) {
        let Ok(model) = pca(&x, c) else { return Ok(()); };
        prop_assert!(model.components.orthogonality_error() < 1e-8);
        prop_assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]) && model.eigenvalues.iter().all(|&e| e >= 0.0));
        let z = model.project_rows(&x).unwrap();
        let recon = matmul(&z, &model.components.transpose()).unwrap();
        let var = |m: &Matrix, j: usize| {
            let col = m.column(j);
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            col.iter().map(|v| (v - mu).powi(2)).sum::<f64>()
        };
        for j in 0..x.cols() {
            prop_assert!(var(&recon, j) <= var(&x, j) * (1.0 + 1e-9) + 1e-9);
        }
    }

    #[test]
    fn linear_codes_are_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0, pca_rr in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let data = binhash::linalg::random_gaussian_matrix(&mut rng, 30, 6);
        let h = if pca_rr { fit_pca_rr(&data, 4, &mut rng).unwrap().0 } else { fit_lsh(&data, 16, &mut rng).unwrap() };
        let x: Vec<f64> = (0..6).map(|_| rng.gaussian()).collect();
        let proj = h.project(&x).unwrap();
        prop_assume!(proj.iter().all(|p| p.abs() > 1e-9));
        let scaled: Vec<f64> = x.iter().zip(&h.mean).map(|(v, m)| m + scale * (v - m)).collect();
        prop_assert_eq!(encode_linear(&h, &scaled).unwrap(), encode_linear(&h, &x).unwrap());
    }
}
