use binhash::baselines::{fit_itq, fit_lsh, fit_pca_rr, fit_sh, read_hasher, write_hasher};
use binhash::eval::{map_at_k, retrieval_run};
use binhash::hash_head::{
    classification_loss, forward, read_model, train, write_model, HashHeadParams, TrainConfig,
};
use binhash::index::{encode_dataset, read_codes, write_codes};
use binhash::ingest::{
    build_dataset, load_features, load_manifest, split_indices, write_features, write_manifest,
    FusionWeights, Manifest,
};
use binhash::synth::{generate, SyntheticData, SyntheticSpec};
use binhash::Rng;

fn small(classes: usize, sep: f64, seed: u64) -> (SyntheticData, binhash::ingest::Dataset) {
    let data = generate(&SyntheticSpec {
        classes,
        videos_per_class: 20,
        frames_per_video: 4,
        dim: 12,
        cluster_separation: sep,
        noise_sigma: 1.0,
        seed,
    })
    .unwrap();
    let manifest = Manifest {
        records: data.records.clone(),
        num_classes: classes,
    };
    let ds = build_dataset(&data.frames, &manifest, &FusionWeights::Uniform).unwrap();
    (data, ds)
}

fn quick(bits: usize, epochs: usize) -> TrainConfig {
    TrainConfig {
        bits,
        epochs,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let (data, ds) = small(3, 3.0, 1);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..quick(8, 3)
    };
    let out = train(&ds, &data.frames, &data.records, &cfg).unwrap();
    let init = HashHeadParams::init(ds.dim(), 8, 3, &mut Rng::new(cfg.seed));
    assert_eq!(out.params, init);
}

#[test]
fn training_lowers_the_objective() {
    let (data, ds) = small(3, 3.0, 2);
    let out = train(&ds, &data.frames, &data.records, &quick(16, 50)).unwrap();
    assert_eq!(out.loss_history.len(), 50);
    let first = out.loss_history[0];
    let last = *out.loss_history.last().unwrap();
    assert!(last < first, "loss {first} -> {last}");
    assert!(out.params.is_finite());
}

#[test]
fn training_is_deterministic() {
    let (data, ds) = small(3, 2.0, 3);
    let a = train(&ds, &data.frames, &data.records, &quick(8, 5)).unwrap();
    let b = train(&ds, &data.frames, &data.records, &quick(8, 5)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.loss_history, b.loss_history);
    let c = train(
        &ds,
        &data.frames,
        &data.records,
        &TrainConfig {
            seed: 12,
            ..quick(8, 5)
        },
    )
    .unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn uniform_predictions_cost_ln_k_per_sample() {
    let k = 5;
    let p = HashHeadParams::zeros(4, 6, k);
    let x = [0.3, -1.0, 2.0, 0.5];
    let n_triplets = 7;
    let traces: Vec<_> = (0..3 * n_triplets)
        .map(|_| forward(&p, &x).unwrap())
        .collect();
    let labels: Vec<usize> = (0..3 * n_triplets).map(|i| i % k).collect();
    let ce = classification_loss(&traces, &labels).unwrap();
    let expected = 3.0 * n_triplets as f64 * (k as f64).ln();
    assert!((ce.value - expected).abs() < 1e-12);
    assert!(!ce.clamped);
}

#[test]
fn trained_head_retrieves_separable_classes() {
    let (data, ds) = small(4, 4.0, 4);
    let split = split_indices(&ds.labels, 4, &mut Rng::new(4), 0.25).unwrap();
    let db = ds.subset(&split.database);
    let queries = ds.subset(&split.queries);
    let records: Vec<_> = split
        .database
        .iter()
        .map(|&i| data.records[i].clone())
        .collect();
    let head = train(&db, &data.frames, &records, &quick(32, 40))
        .unwrap()
        .params;
    let run = retrieval_run(
        &encode_dataset(&head, &db).unwrap(),
        &encode_dataset(&head, &queries).unwrap(),
        10,
        true,
    )
    .unwrap();
    let map = map_at_k(&run).unwrap();
    assert!(map > 0.9, "mAP {map}");
}

#[test]
fn itq_loss_is_monotone_across_datasets() {
    for seed in 0..5 {
        let (_, ds) = small(4, 1.5, 100 + seed);
        let (h, state) = fit_itq(&ds.features, 8, 50, &mut Rng::new(seed)).unwrap();
        assert!(state.rotation.orthogonality_error() < 1e-8);
        let mut prev = state.initial_loss;
        for &l in &state.loss_history {
            assert!(l <= prev, "seed {seed}: {prev} -> {l}");
            prev = l;
        }
        assert_eq!(h.code_bits(), 8);
    }
}

#[test]
fn artifacts_survive_disk_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ds) = small(3, 3.0, 5);

    let fpath = dir.path().join("f.fvec");
    let mpath = dir.path().join("m.csv");
    write_features(&fpath, &data.frames).unwrap();
    write_manifest(&mpath, &data.records).unwrap();
    let frames = load_features(&fpath).unwrap();
    let manifest = load_manifest(&mpath, frames.rows()).unwrap();
    assert_eq!(manifest.records, data.records);
    for (a, b) in frames.as_slice().iter().zip(data.frames.as_slice()) {
        assert_eq!(*a, *b as f32 as f64);
    }

    let cfg = quick(12, 2);
    let head = train(&ds, &data.frames, &data.records, &cfg)
        .unwrap()
        .params;
    let hpath = dir.path().join("h.bhh");
    write_model(&hpath, &head, &cfg).unwrap();
    let (back, back_cfg) = read_model(&hpath).unwrap();
    assert_eq!(back, head);
    assert_eq!(back_cfg, cfg);

    let mut rng = Rng::new(9);
    for h in [
        fit_lsh(&ds.features, 20, &mut rng).unwrap(),
        fit_pca_rr(&ds.features, 6, &mut rng).unwrap().0,
        fit_itq(&ds.features, 6, 10, &mut rng).unwrap().0,
        fit_sh(&ds.features, 10).unwrap(),
    ] {
        let p = dir.path().join(format!("{}.blh", h.kind));
        write_hasher(&p, &h).unwrap();
        assert_eq!(read_hasher(&p).unwrap(), h);
    }

    let codes = encode_dataset(&head, &ds).unwrap();
    let cpath = dir.path().join("c.bhc");
    write_codes(&cpath, &codes).unwrap();
    let back = read_codes(&cpath).unwrap();
    assert_eq!(back.len(), codes.len());
    for i in 0..codes.len() {
        assert_eq!(
            (back.id(i), back.label(i), back.code(i)),
            (codes.id(i), codes.label(i), codes.code(i))
        );
    }
}
