//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use pairsim::cli;
use pairsim::embeddings::{EmbeddingTable, FusedLexicon};
use pairsim::encoder::{encode_sentence, Encoder, EncoderKind};
use pairsim::evaldata::{classification_metrics, load_pairs, pearson, tokenize};
use pairsim::model::{Model, ModelConfig};
use pairsim::numcore::rng::{stream, Stream};
use pairsim::numcore::{Matrix, ParamStore};
use pairsim::objectives::{kl_loss, sparse_target, TargetDistribution, Task};
use pairsim::training::{evaluate, train, AdaDeltaState, Checkpoint, TrainConfig};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn desk_args(extra: &[&str]) -> Vec<String> {
    let emb = format!(
        "{},{}",
        fixture("toy_emb_a.txt").display(),
        fixture("toy_emb_b.txt").display()
    );
    let mut args = vec![
        "--config".to_string(),
        root().join("presets/desk.cfg").display().to_string(),
        "--embeddings".to_string(),
        emb,
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

fn run_cli(args: &[String]) -> (i32, String, String) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = cli::run(args, &mut o, &mut e);
    (
        code,
        String::from_utf8_lossy(&o).into_owned(),
        String::from_utf8_lossy(&e).into_owned(),
    )
}

fn desk_lexicon() -> FusedLexicon {
    FusedLexicon::load(
        &[fixture("toy_emb_a.txt"), fixture("toy_emb_b.txt")],
        0.1,
        1,
    )
    .unwrap()
}

type Outcome = (bool, String);

fn gradient_oracle() -> Outcome {
    let t0 = Instant::now();
    let (code, out, err) = run_cli(&desk_args(&["gradcheck"]));
    let elapsed = t0.elapsed();
    let maxes: Vec<&str> = out.lines().filter(|l| l.contains("\tALL\t")).collect();
    let failing = err
        .lines()
        .find(|l| l.starts_with("gradcheck failed"))
        .unwrap_or("");
    (
        code == 0 && elapsed < Duration::from_secs(60),
        format!(
            "exit {code}, {maxes:?}, {:.1}s {failing}",
            elapsed.as_secs_f64()
        ),
    )
}

fn sparse_target_invariants() -> Outcome {
    let mut rng = stream(20, Stream::Init);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for k in [5usize, 6] {
        let mut ys: Vec<f64> = (0..1000).map(|_| rng.gen_range(1.0..=k as f64)).collect();
        ys.extend([1.0, k as f64, 2.0]);
        for y in ys {
            let p = sparse_target(y, k).unwrap().p;
            let sum: f64 = p.iter().sum();
            let mean: f64 = p.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
            let nz: Vec<usize> = (0..k).filter(|&i| p[i] != 0.0).collect();
            let adjacent = nz.len() <= 2 && (nz.len() < 2 || nz[1] == nz[0] + 1);
            worst = worst.max((sum - 1.0).abs()).max((mean - y).abs());
            ok &= p.iter().all(|&v| v >= 0.0)
                && adjacent
                && (sum - 1.0).abs() <= 1e-12
                && (mean - y).abs() <= 1e-12;
        }
    }
    (ok, format!("max deviation {worst:.2e}"))
}

fn kl_properties() -> Outcome {
    let mut rng = stream(30, Stream::Init);
    let mut min_kl = f64::INFINITY;
    let mut max_self: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=8);
        let mut p: Vec<f64> = (0..k)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    0.0
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect();
        if p.iter().all(|&v| v == 0.0) {
            p[0] = 1.0;
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let target = TargetDistribution { p: p.clone() };
        let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        min_kl = min_kl.min(kl_loss(&target, &logits).unwrap());
        let matched: Vec<f64> = p
            .iter()
            .map(|&v| if v > 0.0 { v.ln() } else { -1e3 })
            .collect();
        max_self = max_self.max(kl_loss(&target, &matched).unwrap().abs());
    }
    (
        min_kl >= 0.0 && max_self <= 1e-12,
        format!("min KL {min_kl:.3e}, max |KL(p||p)| {max_self:.2e}"),
    )
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Plain-loop LSTM over the given inputs.
fn scalar_lstm(p: &ParamStore, xs: &[Vec<f64>], l: usize) -> Vec<f64> {
    let m = |n: &str| p.get(p.id(&format!("encoder.lstm.{n}")).unwrap()).clone();
    let affine = |w: &Matrix, u: &Matrix, b: &Matrix, x: &[f64], h: &[f64], r: usize| {
        let mut s = b.get(r, 0);
        for c in 0..x.len() {
            s += w.get(r, c) * x[c];
        }
        for c in 0..h.len() {
            s += u.get(r, c) * h[c];
        }
        s
    };
    let (mut h, mut c) = (vec![0.0; l], vec![0.0; l]);
    for x in xs {
        let mut nh = vec![0.0; l];
        for r in 0..l {
            let i = sigmoid(affine(&m("W_i"), &m("U_i"), &m("b_i"), x, &h, r));
            let f = sigmoid(affine(&m("W_f"), &m("U_f"), &m("b_f"), x, &h, r));
            let o = sigmoid(affine(&m("W_o"), &m("U_o"), &m("b_o"), x, &h, r));
            let u = affine(&m("W_u"), &m("U_u"), &m("b_u"), x, &h, r).tanh();
            c[r] = i * u + f * c[r];
            nh[r] = o * c[r].tanh();
        }
        h = nh;
    }
    h
}

fn lstm_oracle() -> Outcome {
    let mut rng = stream(40, Stream::Init);
    let mut t1 = EmbeddingTable::new("a", 2);
    let mut t2 = EmbeddingTable::new("b", 1);
    let words = ["bob", "likes", "mary"];
    for w in words {
        t1.insert(w, &[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .unwrap();
        t2.insert(w, &[rng.gen_range(-1.0..1.0)]).unwrap();
    }
    let lex = FusedLexicon::new(vec![t1, t2], 0.1, 1).unwrap();
    let mut store = ParamStore::new();
    let enc = Encoder::register(EncoderKind::MaxLstm, 3, 2, 2, &mut store, &mut rng).unwrap();
    let tokens: Vec<String> = words.iter().map(|s| s.to_string()).collect();
    let got = encode_sentence(&enc, &store, &lex, &tokens).unwrap();

    let r = store.get(store.id("encoder.filters").unwrap());
    let b = store.get(store.id("encoder.filter_bias").unwrap());
    let multi: Vec<Vec<f64>> = tokens
        .iter()
        .map(|t| {
            let e = lex.lookup(t);
            (0..2)
                .map(|row| {
                    sigmoid(b.get(row, 0) + (0..3).map(|c| r.get(row, c) * e[c]).sum::<f64>())
                })
                .collect()
        })
        .collect();
    let want = scalar_lstm(&store, &multi, 2);
    let diff = got
        .e_lstm
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (
        got.e_lstm.len() == 2 && diff <= 1e-10,
        format!("max |diff| {diff:.2e}"),
    )
}

fn order_properties() -> Outcome {
    let lex = desk_lexicon();
    let model = Model::new(ModelConfig::desk(Task::Sts), 1).unwrap();
    let enc = &model.layout.encoder;
    let mut sentence = tokenize("the dog chases the cat in the park");
    let base = encode_sentence(enc, &model.params, &lex, &sentence).unwrap();
    let mut rng = stream(50, Stream::Shuffle);
    let mut invariant = true;
    for _ in 0..100 {
        sentence.shuffle(&mut rng);
        let e = encode_sentence(enc, &model.params, &lex, &sentence).unwrap();
        invariant &= e
            .e_max
            .iter()
            .zip(&base.e_max)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let a = encode_sentence(enc, &model.params, &lex, &tokenize("bob likes mary")).unwrap();
    let b = encode_sentence(enc, &model.params, &lex, &tokenize("mary likes bob")).unwrap();
    let linf = a
        .e_s
        .iter()
        .zip(&b.e_s)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    (
        invariant && linf > 1e-6,
        format!("e_max invariant: {invariant}, bob/mary L-inf {linf:.3e}"),
    )
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        batch_size: 30,
        epochs: 500,
        rho: 0.95,
        epsilon: 1e-6,
        seed: 1,
        patience: 500,
        ..TrainConfig::default()
    }
}

struct StsRun {
    pearson: f64,
    elapsed: Duration,
    hash_before: [u8; 32],
    hash_after: [u8; 32],
    file_hash_before: Vec<u8>,
    file_hash_after: Vec<u8>,
    checkpoint: Vec<u8>,
}

fn file_hash() -> Vec<u8> {
    let mut h = Sha256::new();
    for f in ["toy_emb_a.txt", "toy_emb_b.txt"] {
        h.update(std::fs::read(fixture(f)).unwrap());
    }
    h.finalize().to_vec()
}

fn sts_overfit_run() -> StsRun {
    let file_hash_before = file_hash();
    let lex = desk_lexicon();
    let hash_before = lex.content_hash();
    let t0 = Instant::now();
    let data = load_pairs(&fixture("sts_toy.tsv"), Task::Sts, false)
        .unwrap()
        .prepare(&lex);
    let mut model = Model::new(ModelConfig::desk(Task::Sts), 1).unwrap();
    let out = train(&mut model, &data, Some(&data), &overfit_config(), |_| {}).unwrap();
    model.params = out.best_params;
    let pearson = evaluate(&model, &data).unwrap().pearson.unwrap();
    let elapsed = t0.elapsed();
    let checkpoint = Checkpoint::new(
        &model,
        Some(out.best_state),
        &[("epoch", out.best_epoch.to_string())],
    )
    .to_bytes();
    StsRun {
        pearson,
        elapsed,
        hash_before,
        hash_after: lex.content_hash(),
        file_hash_before,
        file_hash_after: file_hash(),
        checkpoint,
    }
}

fn classification_overfit() -> Outcome {
    let lex = desk_lexicon();
    let data = load_pairs(&fixture("cls_toy.tsv"), Task::Entailment, false)
        .unwrap()
        .prepare(&lex);
    let mut model = Model::new(ModelConfig::desk(Task::Entailment), 1).unwrap();
    let out = train(&mut model, &data, Some(&data), &overfit_config(), |_| {}).unwrap();
    model.params = out.best_params;
    let acc = evaluate(&model, &data).unwrap().accuracy.unwrap();
    (
        acc == 1.0,
        format!(
            "training accuracy {:.2}% (best epoch {})",
            acc * 100.0,
            out.best_epoch
        ),
    )
}

fn adadelta_first_step() -> Outcome {
    let mut store = ParamStore::new();
    store.add("x", Matrix::column(vec![0.0]));
    let mut state = AdaDeltaState::new(&store, 0.95, 1e-6);
    let mut g = store.zeros_like();
    g.iter_mut().next().unwrap().as_mut_slice()[0] = 1.0;
    state.step(&mut store, &g).unwrap();
    let dx = store.iter().next().unwrap().1.value.as_slice()[0];
    ((dx + 4.4721e-3).abs() <= 1e-7, format!("delta {dx:.7e}"))
}

fn metrics() -> Outcome {
    let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
    let m = classification_metrics(&[1, 1, 0, 0], &[1, 0, 0, 1], true).unwrap();
    let args = vec![
        "--embeddings".to_string(),
        fixture("coverage_emb.txt").display().to_string(),
        "coverage".to_string(),
        fixture("coverage_pairs.tsv").display().to_string(),
    ];
    let (code, out, _) = run_cli(&args);
    let union = out
        .lines()
        .find(|l| l.starts_with("union"))
        .unwrap_or("")
        .to_string();
    let ok = (r - 0.5).abs() <= 1e-12
        && m.accuracy == 0.5
        && m.f1 == Some(0.5)
        && code == 0
        && union == "union\t75.00";
    (
        ok,
        format!("pearson {r}, f1 {:?}, coverage `{union}`", m.f1),
    )
}

fn ablation() -> Outcome {
    let (code, out, err) = run_cli(&desk_args(&[
        "bench",
        "--train",
        &fixture("sts_toy.tsv").display().to_string(),
    ]));
    if code != 0 {
        return (false, format!("exit {code}: {err}"));
    }
    let rows: Vec<Vec<&str>> = out
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    let well_formed = out.lines().next() == Some("model\ttrain_loss\tpearson_x100")
        && rows
            .iter()
            .all(|r| r.len() == 3 && r[1].parse::<f64>().is_ok())
        && EncoderKind::ALL.iter().all(|k| {
            rows.iter()
                .any(|r| r[0].ends_with(&format!("-{}", k.display_name())))
        });
    let loss = |name: &str| {
        rows.iter()
            .find(|r| r[0] == name)
            .and_then(|r| r[1].parse::<f64>().ok())
    };
    let (lstm_cnn, cnn) = (loss("M-MaxLSTM-CNN"), loss("M-Max-CNN"));
    let ordered = matches!((lstm_cnn, cnn), (Some(a), Some(b)) if a <= b);
    (
        well_formed && ordered,
        format!(
            "{} rows, well-formed {well_formed}, M-MaxLSTM-CNN {lstm_cnn:?} vs M-Max-CNN {cnn:?}",
            rows.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {n:>2} {:<28} {}  {}",
            name,
            if o.0 { "PASS" } else { "FAIL" },
            o.1
        );
        results.push((n, name, o));
    };

    report(1, "gradient oracle", gradient_oracle());
    report(2, "sparse target invariants", sparse_target_invariants());
    report(3, "KL properties", kl_properties());
    report(4, "LSTM oracle", lstm_oracle());
    report(5, "order properties", order_properties());

    let first = sts_overfit_run();
    report(
        6,
        "STS overfit",
        (
            first.pearson >= 0.99 && first.elapsed < Duration::from_secs(120),
            format!(
                "training Pearson {:.4}, {:.1}s",
                first.pearson,
                first.elapsed.as_secs_f64()
            ),
        ),
    );
    report(7, "classification overfit", classification_overfit());
    report(
        8,
        "embedding immutability",
        (
            first.hash_before == first.hash_after
                && first.file_hash_before == first.file_hash_after,
            "table and file hashes compared".into(),
        ),
    );
    let second = sts_overfit_run();
    report(
        9,
        "determinism",
        (
            first.checkpoint == second.checkpoint,
            format!("{} checkpoint bytes", first.checkpoint.len()),
        ),
    );
    report(10, "AdaDelta first step", adadelta_first_step());
    report(11, "metrics", metrics());
    report(12, "ablation harness", ablation());

    let failed: Vec<u32> = results.iter().filter(|r| !r.2 .0).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}",
        results.len() - failed.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
