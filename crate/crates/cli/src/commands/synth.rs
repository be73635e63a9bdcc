use clap::{Args, ValueEnum};
use qeme::corpus::{write_contrastive, write_embeddings, ContrastivePair, Corpus};
use qeme::synthetic::{generate, Channel, SyntheticConfig};

use super::read_config;
use crate::manifest::RunManifest;
use crate::output::OutDir;
use crate::{CmdResult, Common, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Signal,
    Noise,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Signal => Channel::Signal,
            ChannelArg::Noise => Channel::Noise,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Segments in each split.
    #[arg(long, default_value_t = 500)]
    pub train: usize,
    #[arg(long, default_value_t = 100)]
    pub val: usize,
    #[arg(long, default_value_t = 100)]
    pub test: usize,
    #[arg(long, default_value_t = 4)]
    pub systems: usize,
    /// Standard deviation of the human-score noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    #[arg(long, value_enum, default_value = "signal")]
    pub text: ChannelArg,
    /// Also write speech embeddings carrying this channel.
    #[arg(long, value_enum)]
    pub speech: Option<ChannelArg>,
    /// Frames per speech entry.
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
}

/// Writes `train.jsonl`, `val.jsonl`, `test.jsonl`, `hyp.sqem`, `text.sqem`,
/// `audio.sqem` (with `--speech`), and `contrastive.jsonl`, which pairs the
/// best and worst hypothesis of every test segment.
pub fn run(args: SynthArgs) -> CmdResult {
    let mut manifest = RunManifest::new("synth");
    if read_config(args.common.config.as_deref(), &mut manifest)?.is_some() {
        return Err(Failure::usage("synth is configured by flags only"));
    }
    let seed = args.common.seed_or_default();
    manifest.seeds.push(seed);
    let mut cfg = SyntheticConfig::new(args.dim, args.train + args.val + args.test, args.systems);
    cfg.noise_sd = args.noise_sd;
    cfg.text = args.text.into();
    cfg.speech = args.speech.map(Channel::from);
    cfg.frames = args.frames;
    cfg.seed = seed;
    for (k, v) in [
        ("dim", args.dim.to_string()),
        ("train", args.train.to_string()),
        ("val", args.val.to_string()),
        ("test", args.test.to_string()),
        ("systems", args.systems.to_string()),
        ("noise_sd", args.noise_sd.to_string()),
        ("text", format!("{:?}", args.text).to_lowercase()),
        ("speech", args.speech.map_or("none".into(), |c| format!("{c:?}").to_lowercase())),
        ("frames", args.frames.to_string()),
    ] {
        manifest.set(k, v);
    }

    let set = generate(&cfg)?;
    let parts = set.split(&[args.train, args.val, args.test])?;
    let out = OutDir::create(&args.common.out_dir)?;
    for (name, part) in ["train", "val", "test"].iter().zip(&parts) {
        part.write_jsonl(out.path(&format!("{name}.jsonl")))?;
    }
    write_embeddings(&set.hypothesis, out.path("hyp.sqem"))?;
    write_embeddings(&set.text, out.path("text.sqem"))?;
    if let Some(audio) = &set.audio {
        write_embeddings(audio, out.path("audio.sqem"))?;
    }
    write_contrastive(&extreme_pairs(&parts[2]), out.path("contrastive.jsonl"))?;
    out.finish(&manifest)
}

fn extreme_pairs(corpus: &Corpus) -> Vec<ContrastivePair> {
    let mut out = Vec::new();
    for seg in corpus.seg_ids() {
        let group: Vec<_> = corpus.records().iter().filter(|r| r.seg_id == seg).collect();
        let score = |r: &&qeme::corpus::SegmentRecord| r.human_score.unwrap_or(0.0);
        let best = group.iter().max_by(|a, b| score(a).total_cmp(&score(b)));
        let worst = group.iter().min_by(|a, b| score(a).total_cmp(&score(b)));
        if let (Some(b), Some(w)) = (best, worst) {
            if b.mt_text != w.mt_text {
                out.push(ContrastivePair {
                    pair_id: seg.to_string(),
                    src_text: b.src_text.clone(),
                    audio_key: b.audio_key.clone(),
                    mt_correct: b.mt_text.clone(),
                    mt_incorrect: w.mt_text.clone(),
                    phenomenon: "synthetic".into(),
                    lang_pair: b.lang_pair.clone(),
                });
            }
        }
    }
    out
}
