// Desk-scale training run on the synthetic corpus.
//
// `cargo run --release --example train_smoke -- [steps] [out.wake]`
//
// The full smoke setup (12 000 steps) takes about 45 minutes on one core.

use std::path::PathBuf;

use wake::checkpoint::Checkpoint;
use wake::trainer::{run_training, StepLog, TrainConfig};

/// Trains `steps` steps of the smoke setup; returns the final checkpoint and
/// the mean training BER of the last logged window.
pub fn run(mut cfg: TrainConfig, out: Option<PathBuf>) -> wake::Result<(Checkpoint, f64)> {
    let corpus = cfg.build_corpus()?;
    cfg.log_every = cfg.log_every.min(cfg.steps.max(1));
    let every = cfg.log_every;
    let mut window: Vec<f64> = vec![];
    let mut last = f64::NAN;
    let ck = run_training(cfg, &corpus, |log: &StepLog| {
        window.push(log.mean_ber());
        if log.step.is_multiple_of(every) {
            last = window.iter().sum::<f64>() / window.len() as f64;
            println!("step {:6}  loss {:9.4}  train BER {:5.2}%", log.step, log.loss, last);
            window.clear();
        }
    })?;
    if let Some(p) = out {
        ck.save(&p)?;
        println!("wrote {}", p.display());
    }
    Ok((ck, last))
}

#[allow(dead_code)]
fn main() -> wake::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = TrainConfig::smoke();
    if let Some(s) = args.next() {
        cfg.steps = s.parse().expect("steps must be a number");
    }
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("smoke.wake"));
    run(cfg, Some(out))?;
    Ok(())
}
