// Tabular BER / SNR report of a checkpoint on held-out synthetic clips.
//
// `cargo run --release --example report -- model.wake [clips] [report.csv]`

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wake::attacks::Attack;
use wake::checkpoint::Checkpoint;
use wake::corpus::{toy_corpus, CorpusSpec};
use wake::eval::{evaluate, EvalSettings, MetricsReport};
use wake::pipeline::ModelParams;
use wake::trainer::load_model;

pub fn run(model: &ModelParams, clips: usize, repetitions: usize) -> wake::Result<MetricsReport> {
    let held_out = toy_corpus(&CorpusSpec::mixed(clips), &mut ChaCha8Rng::seed_from_u64(0xe7a1))?;
    let settings = EvalSettings {
        repetitions,
        attacks: ["NA", "UD", "BA", "DA", "BF"]
            .iter()
            .map(|n| Attack::from_name(n))
            .collect::<wake::Result<_>>()?,
        ..EvalSettings::default()
    };
    let report = evaluate(model, &held_out, &settings)?;
    print!("{}", report.to_table());
    Ok(report)
}

#[allow(dead_code)]
fn main() -> wake::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().expect("usage: report model.wake [clips] [report.csv]");
    let clips = args.next().map_or(10, |a| a.parse().expect("clips must be a number"));
    let model = load_model(&Checkpoint::load(Path::new(&path))?)?;
    let report = run(&model, clips, 5)?;
    if let Some(csv) = args.next() {
        std::fs::write(&csv, report.to_csv())?;
    }
    Ok(())
}
