//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use qeme::ablation::{ablate, Modality, ModelScorer};
use qeme::corpus::{Corpus, ScoreMatrix};
use qeme::estimator::{
    interaction, predict, train, EstimatorConfig, EstimatorModel, Example, Fusion, Pooling, TrainOutcome,
};
use qeme::metrics::{contrastive_pa, pairwise_p, segment_tau, spa, tau_b, wer, wer_str, PermutationConfig};
use qeme::probing::{probe_accuracy, ProbeConfig, ProbeDataset};
use qeme::synthetic::{generate, Channel, SyntheticConfig, SyntheticSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    check(took < limit, format!("{detail}; {:.1}s of {}s", took.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------- oracles

fn tau_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    let denom = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
    (denom > 0.0).then(|| (c - d) as f64 / denom)
}

/// Exhaustive sign-flip p-value on exactly representable differences.
fn sign_flip_oracle(diffs: &[i64]) -> f64 {
    let n = diffs.len();
    let observed = diffs.iter().sum::<i64>().abs();
    let hits = (0..1u64 << n)
        .filter(|mask| {
            let s: i64 = (0..n).map(|i| if mask >> i & 1 == 1 { -diffs[i] } else { diffs[i] }).sum();
            s.abs() >= observed
        })
        .count();
    hits as f64 / (1u64 << n) as f64
}

fn levenshtein_oracle(a: &[u8], b: &[u8]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

// -------------------------------------------------------------- criteria

fn tau_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut undefined = 0;
    for case in 0..1000 {
        let n = rng.random_range(2..=10);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let got = tau_b(&x, &y).map_err(|e| e.to_string())?;
        match (got, tau_oracle(&x, &y)) {
            (None, None) => undefined += 1,
            (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {}
            (a, b) => return Err(format!("case {case}: x={x:?} y={y:?} got {a:?}, oracle {b:?}")),
        }
    }
    within(Duration::from_secs(5), start, format!("1000 vectors, {undefined} undefined"))
}

fn permutation_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = PermutationConfig::default();
    let p6 = pairwise_p(&[1.0; 6], &[0.0; 6], &cfg).map_err(|e| e.to_string())?;
    if p6 != 0.03125 {
        return Err(format!("constant +1 differences, n=6: p = {p6}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut cases = 1;
    for n in 2..=10 {
        for _ in 0..200 {
            // Quarter steps keep every sum exact in binary floating point.
            let a: Vec<i64> = (0..n).map(|_| rng.random_range(-12..=12)).collect();
            let b: Vec<i64> = (0..n).map(|_| rng.random_range(-12..=12)).collect();
            let af: Vec<f64> = a.iter().map(|&v| v as f64 / 4.0).collect();
            let bf: Vec<f64> = b.iter().map(|&v| v as f64 / 4.0).collect();
            let diffs: Vec<i64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let got = pairwise_p(&af, &bf, &cfg).map_err(|e| e.to_string())?;
            let want = sign_flip_oracle(&diffs);
            if got != want {
                return Err(format!("a={af:?} b={bf:?}: got {got}, oracle {want}"));
            }
            cases += 1;
        }
    }
    within(Duration::from_secs(10), start, format!("{cases} samples, n = 2..=10, exact"))
}

fn random_matrix(rng: &mut ChaCha8Rng, systems: usize, segments: usize) -> ScoreMatrix {
    let mut entries = Vec::new();
    for j in 0..segments {
        for k in 0..systems {
            entries.push((format!("s{j}"), format!("sys{k}"), rng.random_range(0.0..1.0)));
        }
    }
    ScoreMatrix::from_entries(entries).unwrap()
}

fn spa_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = PermutationConfig::default();
    for i in 0..100 {
        let h = random_matrix(&mut rng, 4, 10);
        let v = spa(&h, &h, &cfg).map_err(|e| e.to_string())?.value;
        if v != 1.0 {
            return Err(format!("matrix {i}: SPA(h, h) = {v}"));
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..100 {
        let h = random_matrix(&mut rng, 4, 10);
        let m = random_matrix(&mut rng, 4, 10);
        let v = spa(&h, &m, &cfg).map_err(|e| e.to_string())?.value;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("pair {i}: SPA = {v}"));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(format!("identity exact on 100 matrices; 100 random pairs in [{lo:.3}, {hi:.3}]"))
}

fn pa_ties() -> Outcome {
    let all_tied = contrastive_pa(&[(0.5, 0.5); 8]).map_err(|e| e.to_string())?;
    let half = contrastive_pa(&[(0.5, 0.5), (0.2, 0.2), (0.9, 0.1), (0.6, 0.3)]).map_err(|e| e.to_string())?;
    check(
        all_tied.value == 0.0
            && all_tied.value_excl_ties.is_none()
            && half.value == 0.5
            && half.value_excl_ties == Some(1.0),
        format!(
            "all tied: {} / {:?}; half tied: {} / {:?}",
            all_tied.value, all_tied.value_excl_ties, half.value, half.value_excl_ties
        ),
    )
}

fn random_example(rng: &mut ChaCha8Rng, d: usize) -> Example {
    let frames = rng.random_range(1..=4);
    Example {
        hypothesis: Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0)),
        text: Some(Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0))),
        audio: Some(Array2::from_shape_fn((frames, d), |_| rng.random_range(-1.0..1.0))),
    }
}

fn forward_and_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(14);

    for _ in 0..100 {
        let h: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut want = h.clone();
        want.extend(&s);
        want.extend(h.iter().zip(&s).map(|(a, b)| (a - b).abs()));
        want.extend(h.iter().zip(&s).map(|(a, b)| a * b));
        if interaction(&h, &s).map_err(|e| e.to_string())? != want {
            return Err(format!("interaction differs for h={h:?} s={s:?}"));
        }
    }

    // 4 -> 1 -> 1 network on d = 1.
    let mut cfg = EstimatorConfig::new(1);
    cfg.hidden_sizes = vec![1];
    let mut model = EstimatorModel::zeros(cfg).map_err(|e| e.to_string())?;
    let w1 = [0.1, 0.2, 0.3, 0.4];
    for (k, w) in w1.iter().enumerate() {
        model.params.mlp[0].weight[[0, k]] = *w;
    }
    model.params.mlp[0].bias[0] = 0.05;
    model.params.mlp[1].weight[[0, 0]] = 1.5;
    model.params.mlp[1].bias[0] = -0.2;
    let (h, s) = (0.5, -0.25);
    let z = 0.1 * h + 0.2 * s + 0.3 * f64::abs(h - s) + 0.4 * (h * s) + 0.05;
    let want = 1.5 * z.tanh() - 0.2;
    let got = model.forward(&[h], Some(&[s]), None).map_err(|e| e.to_string())?;
    if (got - want).abs() > 1e-12 {
        return Err(format!("4-1-1 forward: got {got}, hand value {want}"));
    }

    let mut worst: f64 = 0.0;
    for net in 0..20 {
        let fusion = Fusion::ALL[net % Fusion::ALL.len()];
        let pooling = if rng.random::<bool>() { Pooling::Average } else { Pooling::Attention };
        let mut cfg = EstimatorConfig::new(3);
        cfg.fusion = fusion;
        cfg.pooling = pooling;
        cfg.hidden_sizes = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=5)).collect();
        cfg.seed = net as u64;
        let mut model = EstimatorModel::new(cfg).map_err(|e| e.to_string())?;
        for slice in model.params.slices_mut() {
            for v in slice.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let batch: Vec<Example> = (0..3).map(|_| random_example(&mut rng, 3)).collect();
        let targets: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = model.loss_and_gradient(&batch, &targets).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = grad.slices().iter().flat_map(|s| s.iter().copied()).collect();

        let eps = 1e-6;
        let mut numeric = Vec::with_capacity(analytic.len());
        let n_slices = model.params.slices().len();
        for si in 0..n_slices {
            let len = model.params.slices()[si].len();
            for k in 0..len {
                let orig = model.params.slices()[si][k];
                model.params.slices_mut()[si][k] = orig + eps;
                let up = model.loss_and_gradient(&batch, &targets).map_err(|e| e.to_string())?.0;
                model.params.slices_mut()[si][k] = orig - eps;
                let down = model.loss_and_gradient(&batch, &targets).map_err(|e| e.to_string())?.0;
                model.params.slices_mut()[si][k] = orig;
                numeric.push((up - down) / (2.0 * eps));
            }
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm_a: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_n: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / norm_a.max(norm_n).max(1e-12);
        if rel > 1e-4 {
            return Err(format!("net {net} ({fusion}, {pooling:?}): relative error {rel:.2e}"));
        }
        worst = worst.max(rel);
    }
    within(
        Duration::from_secs(30),
        start,
        format!("interaction exact, 4-1-1 within 1e-12, 20 networks worst rel err {worst:.1e}"),
    )
}

fn fit_on(set: &SyntheticSet, parts: &[Corpus], cfg: EstimatorConfig) -> Result<TrainOutcome, String> {
    let model = EstimatorModel::new(cfg).map_err(|e| e.to_string())?;
    train(model, &parts[0], &parts[1], &set.sources()).map_err(|e| e.to_string())
}

fn test_tau(model: &EstimatorModel, set: &SyntheticSet, test: &Corpus) -> Result<f64, String> {
    let human = test.human_scores().map_err(|e| e.to_string())?;
    let pred = predict(model, test, &set.sources()).map_err(|e| e.to_string())?;
    segment_tau(&human, &pred).value.ok_or_else(|| "test tau undefined".to_string())
}

fn delta(model: &EstimatorModel, set: &SyntheticSet, test: &Corpus, m: Modality, seed: u64) -> Result<f64, String> {
    let human = test.human_scores().map_err(|e| e.to_string())?;
    let scorer = ModelScorer {
        model,
        sources: set.sources(),
    };
    Ok(ablate(&scorer, test, &human, m, seed).map_err(|e| e.to_string())?.delta)
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let set = generate(&SyntheticConfig::new(16, 700, 4)).map_err(|e| e.to_string())?;
    let parts = set.split(&[500, 100, 100]).map_err(|e| e.to_string())?;

    let full = fit_on(&set, &parts, EstimatorConfig::new(16))?;
    let tau = test_tau(&full.model, &set, &parts[2])?;
    let d_both = delta(&full.model, &set, &parts[2], Modality::Both, 0)?;

    let mut cfg = EstimatorConfig::new(16);
    cfg.fusion = Fusion::HypothesisOnly;
    let blind = fit_on(&set, &parts, cfg)?;
    let d_blind = delta(&blind.model, &set, &parts[2], Modality::Both, 0)?;

    let ok = tau >= 0.8 && d_both <= -0.5 && d_blind.abs() <= 0.05;
    let detail = format!(
        "test tau {tau:.3} (epochs {}), delta(both) {d_both:+.3}, hypothesis-only delta {d_blind:+.3}",
        full.history.len()
    );
    if !ok {
        return Err(detail);
    }
    within(Duration::from_secs(300), start, detail)
}

fn fusion_dominance() -> Outcome {
    let mut cfg = SyntheticConfig::new(16, 1000, 4);
    cfg.speech = Some(Channel::Noise);
    cfg.frames = 4;
    let set = generate(&cfg).map_err(|e| e.to_string())?;
    let parts = set.split(&[500, 100, 400]).map_err(|e| e.to_string())?;
    let mut ecfg = EstimatorConfig::new(16);
    ecfg.fusion = Fusion::Avg;
    let out = fit_on(&set, &parts, ecfg)?;
    let test = &parts[2];
    let dt = delta(&out.model, &set, test, Modality::Text, 0)?;
    let da = delta(&out.model, &set, test, Modality::Audio, 0)?;
    let db = delta(&out.model, &set, test, Modality::Both, 0)?;
    let ratio = dt / db;
    check(
        db < 0.0 && ratio >= 0.9 && da.abs() <= 0.05 && (dt - db).abs() < (da - db).abs(),
        format!("delta text {dt:+.3}, audio {da:+.3}, both {db:+.3}; text/both {:.1}%", 100.0 * ratio),
    )
}

fn probing_contract() -> Outcome {
    let start = Instant::now();
    let cfg = ProbeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(15);

    let labels: Vec<String> = (0..1600).map(|i| format!("c{}", i % 4)).collect();
    let reps = Array2::from_shape_fn((1600, 8), |(i, j)| {
        if j == 0 {
            (i % 4) as f64
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let ds = ProbeDataset::new(reps, &labels).map_err(|e| e.to_string())?;
    let decodable = probe_accuracy(&ds, &cfg).map_err(|e| e.to_string())?;

    let labels: Vec<String> = (0..800).map(|_| format!("c{}", rng.random_range(0..3))).collect();
    let reps = Array2::from_shape_fn((800, 8), |_| rng.random_range(-1.0..1.0));
    let ds = ProbeDataset::new(reps, &labels).map_err(|e| e.to_string())?;
    let independent = probe_accuracy(&ds, &cfg).map_err(|e| e.to_string())?;

    let detail = format!(
        "decodable {:.3} ± {:.3}; independent {:.3} vs baseline {:.3}",
        decodable.mean, decodable.std, independent.mean, independent.baseline
    );
    if !(decodable.mean >= 0.95 && decodable.std <= 0.02 && (independent.mean - independent.baseline).abs() <= 0.1) {
        return Err(detail);
    }
    within(Duration::from_secs(120), start, detail)
}

fn wer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for case in 0..1000 {
        let alphabet = rng.random_range(1..=5u8);
        let r: Vec<u8> = (0..rng.random_range(1..=12)).map(|_| rng.random_range(0..alphabet)).collect();
        let h: Vec<u8> = (0..rng.random_range(0..=12)).map(|_| rng.random_range(0..alphabet)).collect();
        let got = wer(&r, &h).map_err(|e| e.to_string())?;
        let want = levenshtein_oracle(&r, &h) as f64 / r.len() as f64;
        if got != want {
            return Err(format!("case {case}: {r:?} vs {h:?}: got {got}, oracle {want}"));
        }
    }
    let v = wer_str("a b c", "a x c d").map_err(|e| e.to_string())?;
    check(v == 2.0 / 3.0, format!("1000 pairs exact; \"a b c\" vs \"a x c d\" = {v}"))
}

// ---------------------------------------------------------- determinism

fn qeme(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qeme"))
        .current_dir(cwd)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "qeme {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            collect_files(root, &p, out);
        } else if p.file_name().unwrap() != "timing.json" {
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
}

/// Runs every command in `root` with relative paths. `jobs` varies the
/// worker count, which must not change any output.
fn pipeline(root: &Path, jobs: &str) -> Result<(), String> {
    let emb = [
        "--hyp-emb",
        "data/hyp.sqem",
        "--text-emb",
        "data/text.sqem",
        "--audio-emb",
        "data/audio.sqem",
    ];
    let with = |head: &[&str], tail: &[&str]| -> Vec<String> {
        head.iter().chain(tail).map(|s| s.to_string()).collect()
    };
    let run = |v: Vec<String>| {
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        qeme(root, &refs)
    };

    run(with(
        &["synth", "--out-dir", "data", "--seed", "5", "--train", "60", "--val", "20", "--test", "20"],
        &["--speech", "noise", "--frames", "3"],
    ))?;
    fs::write(
        root.join("model.cfg"),
        "dim = 16\nfusion = concat_projection\npooling = attention\nhidden_sizes = 32, 16\nlr = 1e-3\nmax_epochs = 4\n",
    )
    .unwrap();
    let train_args = ["train", "--config", "model.cfg", "--seed", "7", "--train", "data/train.jsonl"];
    run(with(&train_args, &[&["--val", "data/val.jsonl", "--out-dir", "train"][..], &emb].concat()))?;
    run(with(
        &["predict", "--model", "train/model.sqec", "--corpus", "data/test.jsonl"],
        &[&["--contrastive", "data/contrastive.jsonl", "--out-dir", "predict"][..], &emb].concat(),
    ))?;
    run(with(
        &["evaluate", "--human", "data/test.jsonl", "--metric", "predict/scores.tsv", "--out-dir", "eval"],
        &["--seed", "3"],
    ))?;
    run(with(
        &["evaluate", "--contrastive", "data/contrastive.jsonl"],
        &["--scores", "predict/contrastive_scores.tsv", "--out-dir", "eval_contrastive"],
    ))?;
    run(with(
        &["ablate", "--corpus", "data/test.jsonl", "--model", "train/model.sqec", "--seed", "3"],
        &[&["--modality", "all", "--jobs", jobs, "--out-dir", "ablate"][..], &emb].concat(),
    ))?;

    let text = fs::read_to_string(root.join("data/train.jsonl")).unwrap();
    let mut labels = String::from("key\tlabel\n");
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        labels.push_str(&format!("{}\t{}\n", v["mt_text"].as_str().unwrap(), v["system_id"].as_str().unwrap()));
    }
    fs::write(root.join("labels.tsv"), labels).unwrap();
    fs::write(root.join("probe.cfg"), "hidden = 16\nepochs = 5\nbatch = 32\n").unwrap();
    run(with(
        &["probe", "--reps", "data/hyp.sqem", "--labels", "labels.tsv", "--config", "probe.cfg"],
        &["--seed", "9", "--jobs", jobs, "--out-dir", "probe"],
    ))?;
    run(with(
        &["report", "eval/report.json", "eval_contrastive/contrastive.json"],
        &["ablate/ablation.json", "probe/probe.json", "--out-dir", "report"],
    ))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path(), "1")?;
    pipeline(b.path(), "4")?;
    let (mut fa, mut fb) = (BTreeMap::new(), BTreeMap::new());
    collect_files(a.path(), a.path(), &mut fa);
    collect_files(b.path(), b.path(), &mut fb);
    if fa.keys().ne(fb.keys()) {
        return Err(format!("file sets differ: {:?} vs {:?}", fa.keys(), fb.keys()));
    }
    let differing: Vec<_> = fa.iter().filter(|(k, v)| fb[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    let manifests = fa.keys().filter(|k| k.ends_with("manifest.json")).count();
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files byte-identical across reruns ({manifests} manifests, jobs 1 vs 4)", fa.len())
        } else {
            format!("differing files: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("tau_b oracle equivalence", tau_equivalence),
        ("permutation test oracle", permutation_oracle),
        ("soft pairwise accuracy identity and range", spa_identity),
        ("pairwise accuracy tie semantics", pa_ties),
        ("interaction, forward and gradients", forward_and_gradients),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("fusion dominance", fusion_dominance),
        ("probing contract", probing_contract),
        ("WER oracle", wer_oracle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
