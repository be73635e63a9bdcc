use proptest::prelude::*;
use qeme::corpus::{load_segments, read_embeddings, write_embeddings, CorpusFormat, ScoreMatrix};
use qeme::estimator::{predict, train, EmbeddingSources, EstimatorConfig, EstimatorModel, Fusion, Pooling};
use qeme::metrics::{segment_tau, spa, tau_b, PermutationConfig};
use qeme::synthetic::{generate, Channel, SyntheticConfig};

#[test]
fn files_round_trip_through_training_and_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = SyntheticConfig::new(6, 50, 3);
    data.speech = Some(Channel::Signal);
    data.frames = 3;
    let set = generate(&data).unwrap();
    let parts = set.split(&[30, 10, 10]).unwrap();

    let names = ["train.jsonl", "val.jsonl", "test.jsonl"];
    for (name, part) in names.iter().zip(&parts) {
        part.write_jsonl(dir.path().join(name)).unwrap();
    }
    write_embeddings(&set.hypothesis, dir.path().join("hyp.sqem")).unwrap();
    write_embeddings(&set.text, dir.path().join("text.sqem")).unwrap();
    write_embeddings(set.audio.as_ref().unwrap(), dir.path().join("audio.sqem")).unwrap();

    let loaded: Vec<_> = names
        .iter()
        .map(|n| load_segments(dir.path().join(n), CorpusFormat::Jsonl).unwrap())
        .collect();
    assert_eq!(loaded[0].records(), parts[0].records());
    let hyp = read_embeddings(dir.path().join("hyp.sqem")).unwrap();
    let text = read_embeddings(dir.path().join("text.sqem")).unwrap();
    let audio = read_embeddings(dir.path().join("audio.sqem")).unwrap();
    assert_eq!(hyp, set.hypothesis);
    let sources = EmbeddingSources {
        hypothesis: &hyp,
        text: Some(&text),
        audio: Some(&audio),
    };

    let mut cfg = EstimatorConfig::new(6);
    cfg.fusion = Fusion::ConcatProjection;
    cfg.pooling = Pooling::Attention;
    cfg.hidden_sizes = vec![12];
    cfg.lr = 1e-3;
    cfg.max_epochs = 3;
    let out = train(EstimatorModel::new(cfg).unwrap(), &loaded[0], &loaded[1], &sources).unwrap();
    assert!(out.history.len() <= 3 && out.best_epoch.is_some());

    let path = dir.path().join("model.sqec");
    out.model.save(&path).unwrap();
    let reloaded = EstimatorModel::load(&path).unwrap();
    assert_eq!(reloaded.config(), out.model.config());
    let a = predict(&out.model, &loaded[2], &sources).unwrap();
    let b = predict(&reloaded, &loaded[2], &sources).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 30);
    assert!(segment_tau(&loaded[2].human_scores().unwrap(), &a).value.is_some());
}

fn matrix(values: &[f64], systems: usize) -> ScoreMatrix {
    ScoreMatrix::from_entries(
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("s{}", i / systems), format!("m{}", i % systems), v)),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn tau_b_is_bounded_and_symmetric(
        pairs in prop::collection::vec((0i32..5, 0i32..5), 2..40)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let t = tau_b(&x, &y).unwrap();
        prop_assert_eq!(t, tau_b(&y, &x).unwrap());
        if let Some(t) = t {
            prop_assert!((-1.0..=1.0).contains(&t));
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((tau_b(&x, &neg).unwrap().unwrap() + t).abs() < 1e-12);
        }
        if let Some(self_tau) = tau_b(&x, &x).unwrap() {
            prop_assert!((self_tau - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spa_is_symmetric_in_its_arguments(
        h in prop::collection::vec(0.0f64..1.0, 24),
        m in prop::collection::vec(0.0f64..1.0, 24),
    ) {
        let (h, m) = (matrix(&h, 3), matrix(&m, 3));
        let cfg = PermutationConfig::default();
        let a = spa(&h, &m, &cfg).unwrap().value;
        let b = spa(&m, &h, &cfg).unwrap().value;
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
