use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use binhash::baselines::{
    fit_itq, fit_lsh, fit_pca_rr, fit_sh, read_hasher, write_hasher, HasherKind, HASHER_MAGIC,
};
use binhash::eval::{run_comparison, ComparisonConfig, ComparisonData, Method};
use binhash::hash_head::{read_model, train, write_model, TrainConfig, MODEL_MAGIC};
use binhash::index::{
    encode_dataset, read_codes, search_topk, search_topk_sharded, write_codes, BinaryEncoder,
    PackedCodeSet,
};
use binhash::ingest::{
    build_dataset, load_features, load_manifest, split_indices, write_features, write_manifest,
    Dataset, FusionWeights, Manifest,
};
use binhash::synth::{generate, SyntheticSpec};
use binhash::{Matrix, Rng};

use crate::config::{parse_list, Resolver};
use crate::{
    BenchArgs, Cli, Command, DataArgs, EncodeArgs, EvalArgs, FitBaselineArgs, HeadArgs, SearchArgs,
    SynthArgs, TrainArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = Resolver::load(cli.config.as_deref())?;
    let seed = cfg.get(cli.seed, "seed", 0u64)?;
    match cli.command {
        Command::Synth(a) => synth(&cfg, seed, a),
        Command::Train(a) => cmd_train(&cfg, seed, a),
        Command::FitBaseline(a) => fit_baseline(&cfg, seed, a),
        Command::Encode(a) => encode(&cfg, a),
        Command::Search(a) => search(&cfg, a),
        Command::Eval(a) => eval(&cfg, seed, a),
        Command::Bench(a) => bench(&cfg, seed, a),
    }
}

fn synth(cfg: &Resolver, seed: u64, a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        classes: cfg.get(a.classes, "classes", 5)?,
        videos_per_class: cfg.get(a.videos_per_class, "videos_per_class", 100)?,
        frames_per_video: cfg.get(a.frames_per_video, "frames_per_video", 8)?,
        dim: cfg.get(a.dim, "dim", 64)?,
        cluster_separation: cfg.get(a.separation, "separation", 3.0)?,
        noise_sigma: cfg.get(a.sigma, "sigma", 1.0)?,
        seed,
    };
    let out_features: PathBuf = cfg.require(a.out_features, "out_features")?;
    let out_manifest: PathBuf = cfg.require(a.out_manifest, "out_manifest")?;
    let data = generate(&spec)?;
    write_features(&out_features, &data.frames)?;
    write_manifest(&out_manifest, &data.records)?;
    println!(
        "wrote {} frames x {} dims for {} videos in {} classes",
        data.frames.rows(),
        data.frames.cols(),
        data.records.len(),
        spec.classes
    );
    Ok(())
}

struct Loaded {
    frames: Matrix,
    manifest: Manifest,
    dataset: Dataset,
}

fn load_data(cfg: &Resolver, d: &DataArgs) -> Result<Loaded> {
    let features: PathBuf = cfg.require(d.features.clone(), "features")?;
    let manifest: PathBuf = cfg.require(d.manifest.clone(), "manifest")?;
    load_data_from(&features, &manifest, fusion_weights(cfg, d)?)
}

fn load_data_from(features: &Path, manifest: &Path, weights: FusionWeights) -> Result<Loaded> {
    let frames = load_features(features)?;
    let manifest = load_manifest(manifest, frames.rows())?;
    let dataset = build_dataset(&frames, &manifest, &weights)?;
    Ok(Loaded {
        frames,
        manifest,
        dataset,
    })
}

fn fusion_weights(cfg: &Resolver, d: &DataArgs) -> Result<FusionWeights> {
    match cfg.get_opt(d.fusion_weights.clone(), "fusion_weights")? {
        None => Ok(FusionWeights::Uniform),
        Some(s) => Ok(FusionWeights::custom(parse_list(&s)?)?),
    }
}

fn train_config(cfg: &Resolver, seed: u64, bits: usize, h: &HeadArgs) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let tc = TrainConfig {
        bits,
        margin: cfg.get(h.margin, "margin", d.margin)?,
        alpha: cfg.get(h.alpha, "alpha", d.alpha)?,
        beta: cfg.get(h.beta, "beta", d.beta)?,
        learning_rate: cfg.get(h.learning_rate, "learning_rate", d.learning_rate)?,
        momentum: cfg.get(h.momentum, "momentum", d.momentum)?,
        epochs: cfg.get(h.epochs, "epochs", d.epochs)?,
        batch_triplets: cfg.get(h.batch_triplets, "batch_triplets", d.batch_triplets)?,
        frames_per_sample: cfg.get(
            h.frames_per_sample,
            "frames_per_sample",
            d.frames_per_sample,
        )?,
        seed,
    };
    tc.validate()?;
    Ok(tc)
}

fn cmd_train(cfg: &Resolver, seed: u64, a: TrainArgs) -> Result<()> {
    let bits = cfg.get(a.bits, "bits", TrainConfig::default().bits)?;
    let tc = train_config(cfg, seed, bits, &a.head)?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let data = load_data(cfg, &a.data)?;
    let outcome = train(&data.dataset, &data.frames, &data.manifest.records, &tc)?;
    write_model(&out, &outcome.params, &tc)?;
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        println!("epoch {epoch}\tloss {loss:.6}");
    }
    Ok(())
}

fn fit_baseline(cfg: &Resolver, seed: u64, a: FitBaselineArgs) -> Result<()> {
    let kind: HasherKind = cfg.require::<String>(a.method, "method")?.parse()?;
    let bits = cfg.get(a.bits, "bits", 64usize)?;
    let iterations = cfg.get(a.itq_iterations, "itq_iterations", 50usize)?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let data = load_data(cfg, &a.data)?;
    let x = &data.dataset.features;
    let mut rng = Rng::new(seed);
    let hasher = match kind {
        HasherKind::Lsh => fit_lsh(x, bits, &mut rng)?,
        HasherKind::PcaRr => fit_pca_rr(x, bits, &mut rng)?.0,
        HasherKind::Itq => {
            let (h, state) = fit_itq(x, bits, iterations, &mut rng)?;
            println!(
                "itq loss {:.6} -> {:.6}{}",
                state.initial_loss,
                state
                    .loss_history
                    .last()
                    .copied()
                    .unwrap_or(state.initial_loss),
                if state.degenerate {
                    " (degenerate procrustes step)"
                } else {
                    ""
                }
            );
            h
        }
        HasherKind::Sh => fit_sh(x, bits)?,
    };
    write_hasher(&out, &hasher)?;
    println!(
        "fitted {kind} with {bits} bits on {} videos",
        data.dataset.len()
    );
    Ok(())
}

fn load_encoder(path: &Path) -> Result<Box<dyn BinaryEncoder>> {
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        std::fs::File::open(path)
            .and_then(|mut f| f.read_exact(&mut magic))
            .with_context(|| format!("reading {}", path.display()))?;
    }
    if &magic == MODEL_MAGIC {
        Ok(Box::new(read_model(path)?.0))
    } else if &magic == HASHER_MAGIC {
        Ok(Box::new(read_hasher(path)?))
    } else {
        bail!(
            "{}: not a model (BHH1) or hasher (BLH1) file",
            path.display()
        )
    }
}

fn encode_with(encoder: &dyn BinaryEncoder, ds: &Dataset, model: &Path) -> Result<PackedCodeSet> {
    if encoder.input_dim() != ds.dim() {
        bail!(
            "dimension mismatch: model {} expects d={} but features have d={}",
            model.display(),
            encoder.input_dim(),
            ds.dim()
        );
    }
    Ok(encode_dataset(encoder, ds)?)
}

fn encode(cfg: &Resolver, a: EncodeArgs) -> Result<()> {
    let model: PathBuf = cfg.require(a.model, "model")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let encoder = load_encoder(&model)?;
    let data = load_data(cfg, &a.data)?;
    let codes = encode_with(encoder.as_ref(), &data.dataset, &model)?;
    write_codes(&out, &codes)?;
    println!("encoded {} videos to {} bits", codes.len(), codes.bits());
    Ok(())
}

fn search(cfg: &Resolver, a: SearchArgs) -> Result<()> {
    let db_path: PathBuf = cfg.require(a.db, "db")?;
    let k = cfg.get(a.k, "k", 10usize)?;
    let threads = cfg.get(a.threads, "threads", 1usize)?;
    if k == 0 || threads == 0 {
        bail!("k and threads must be >= 1");
    }
    let db = read_codes(&db_path)?;
    let queries = match cfg.get_opt::<PathBuf>(a.queries, "queries")? {
        Some(p) => read_codes(&p)?,
        None => {
            let features: PathBuf = cfg.require(a.query_features, "query_features")?;
            let manifest: PathBuf = cfg.require(a.query_manifest, "query_manifest")?;
            let model: PathBuf = cfg.require(a.model, "model")?;
            let encoder = load_encoder(&model)?;
            let data = load_data_from(&features, &manifest, FusionWeights::Uniform)?;
            encode_with(encoder.as_ref(), &data.dataset, &model)?
        }
    };
    if queries.bits() != db.bits() {
        bail!(
            "bit-length mismatch: database has {} bits, queries have {}",
            db.bits(),
            queries.bits()
        );
    }
    let mut out = String::from("query_id\trank\tid\tdistance\n");
    for q in 0..queries.len() {
        let hits = if threads > 1 {
            search_topk_sharded(&db, queries.code(q), k, threads)?
        } else {
            search_topk(&db, queries.code(q), k)?
        };
        for (rank, n) in hits.neighbors.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                queries.id(q),
                rank + 1,
                n.id,
                n.distance
            )
            .unwrap();
        }
    }
    match cfg.get_opt::<PathBuf>(a.out, "out")? {
        Some(p) => std::fs::write(&p, out).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn eval(cfg: &Resolver, seed: u64, a: EvalArgs) -> Result<()> {
    let methods: Vec<Method> =
        parse_list(&cfg.get(a.methods, "methods", "ours,lsh,pca_rr,itq,sh".to_string())?)?;
    let bits: Vec<usize> = match a.bits {
        Some(s) => parse_list(&s)?,
        None => match cfg.get_opt::<serde_json::Value>(None, "bits")? {
            Some(serde_json::Value::String(s)) => parse_list(&s)?,
            Some(v) => serde_json::from_value(v).context("config key \"bits\"")?,
            None => vec![16, 32, 64],
        },
    };
    if methods.is_empty() || bits.is_empty() || bits.contains(&0) {
        bail!("need at least one method and positive code lengths");
    }
    let k = cfg.get(a.k, "k", 10usize)?;
    let fraction = cfg.get(a.query_fraction, "query_fraction", 0.2f64)?;
    let itq_iterations = cfg.get(a.itq_iterations, "itq_iterations", 50usize)?;
    let timing = a.timing || cfg.get(None, "timing", false)?;
    let train_cfg = train_config(cfg, seed, bits[0], &a.head)?;

    let data = load_data(cfg, &a.data)?;
    let split = split_indices(
        &data.dataset.labels,
        data.dataset.num_classes,
        &mut Rng::new(seed),
        fraction,
    )?;
    let database = data.dataset.subset(&split.database);
    let queries = data.dataset.subset(&split.queries);
    let records: Vec<_> = split
        .database
        .iter()
        .map(|&i| data.manifest.records[i].clone())
        .collect();

    let report = run_comparison(
        &methods,
        &bits,
        &ComparisonData {
            database: &database,
            queries: &queries,
            frames: &data.frames,
            database_records: &records,
        },
        &ComparisonConfig {
            k,
            seed,
            train: train_cfg,
            itq_iterations,
            record_timing: timing,
        },
    )?;
    let table = report.to_table();
    if let Some(p) = cfg.get_opt::<PathBuf>(a.out_csv, "out_csv")? {
        std::fs::write(&p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = cfg.get_opt::<PathBuf>(a.out_table, "out_table")? {
        std::fs::write(&p, &table).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{table}");
    Ok(())
}

fn bench(cfg: &Resolver, seed: u64, a: BenchArgs) -> Result<()> {
    let n = cfg.get(a.n, "n", 1_000_000usize)?;
    let bits = cfg.get(a.bits, "bits", 64usize)?;
    let k = cfg.get(a.k, "k", 10usize)?;
    let nq = cfg.get(a.queries, "queries", 8usize)?;
    let threads = cfg.get(
        a.threads,
        "threads",
        std::thread::available_parallelism().map_or(4, |p| p.get()),
    )?;
    if n == 0 || bits == 0 || k == 0 || nq == 0 || threads == 0 {
        bail!("n, bits, k, queries and threads must all be >= 1");
    }

    let mut rng = Rng::new(seed);
    let random_code =
        |rng: &mut Rng| -> Vec<bool> { (0..bits).map(|_| rng.next_u64() & 1 == 1).collect() };
    let mut db = PackedCodeSet::new(bits)?;
    for i in 0..n {
        db.push_bits(format!("c{i}"), None, &random_code(&mut rng))?;
    }
    let queries: Vec<Vec<u64>> = (0..nq)
        .map(|_| binhash::index::pack(&random_code(&mut rng)))
        .collect();

    let start = Instant::now();
    let single: Vec<_> = queries
        .iter()
        .map(|q| search_topk(&db, q, k))
        .collect::<Result<_, _>>()?;
    let t_single = start.elapsed().as_secs_f64();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    let start = Instant::now();
    let sharded: Vec<_> = pool.install(|| {
        queries
            .iter()
            .map(|q| search_topk_sharded(&db, q, k, threads))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let t_sharded = start.elapsed().as_secs_f64();

    if single != sharded {
        bail!("sharded results differ from single-threaded results");
    }
    // Full-sort oracle on the first query.
    let mut all: Vec<(u32, usize)> = (0..db.len())
        .map(|i| Ok((binhash::index::hamming(db.code(i), &queries[0])?, i)))
        .collect::<Result<_, binhash::Error>>()?;
    all.sort_unstable();
    let oracle: Vec<(u32, usize)> = all.into_iter().take(k).collect();
    let got: Vec<(u32, usize)> = single[0]
        .neighbors
        .iter()
        .map(|x| (x.distance, x.index))
        .collect();
    if got != oracle {
        bail!("scan disagrees with full-sort oracle");
    }

    let scanned = (n * nq) as f64;
    println!("bench n={n} bits={bits} k={k} queries={nq} threads={threads}");
    println!(
        "single\t{:.0} codes/s\t{:.4} s",
        scanned / t_single.max(1e-9),
        t_single
    );
    println!(
        "sharded\t{:.0} codes/s\t{:.4} s",
        scanned / t_sharded.max(1e-9),
        t_sharded
    );
    println!("check\tsharded == single: ok\toracle: ok");
    Ok(())
}
