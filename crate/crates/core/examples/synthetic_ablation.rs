//! Trains an estimator on synthetic data whose text source carries the
//! signal and whose speech source is noise, then ablates each modality.
//!
//! cargo run --release -p qeme --example synthetic_ablation -- [fusion] [seed]

use qeme::ablation::{ablate, render_table, AblationRow, Modality, ModelScorer};
use qeme::estimator::{predict, train, EstimatorConfig, EstimatorModel, Fusion};
use qeme::metrics::segment_tau;
use qeme::synthetic::{generate, Channel, SyntheticConfig};

fn main() -> qeme::Result<()> {
    let mut args = std::env::args().skip(1);
    let fusion: Fusion = args.next().map_or(Fusion::Avg, |s| s.parse().expect("unknown fusion"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));

    let mut data = SyntheticConfig::new(16, 1000, 4);
    data.speech = Some(Channel::Noise);
    data.frames = 4;
    data.seed = seed;
    let set = generate(&data)?;
    let parts = set.split(&[500, 100, 400])?;

    let mut cfg = EstimatorConfig::new(16);
    cfg.fusion = fusion;
    cfg.seed = seed;
    let outcome = train(EstimatorModel::new(cfg)?, &parts[0], &parts[1], &set.sources())?;
    for e in &outcome.history {
        println!("epoch {:2}  loss {:.5}  val tau {:?}", e.epoch, e.train_loss, e.val_tau);
    }

    let test = &parts[2];
    let human = test.human_scores()?;
    let tau = segment_tau(&human, &predict(&outcome.model, test, &set.sources())?);
    println!("test tau {:?}\n", tau.value);

    let scorer = ModelScorer {
        model: &outcome.model,
        sources: set.sources(),
    };
    let reports = Modality::ALL
        .iter()
        .map(|&m| ablate(&scorer, test, &human, m, seed))
        .collect::<qeme::Result<Vec<_>>>()?;
    print!(
        "{}",
        render_table(&[AblationRow {
            model: fusion.to_string(),
            reports
        }])
    );
    Ok(())
}
