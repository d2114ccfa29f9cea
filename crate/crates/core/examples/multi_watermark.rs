// Stack two watermarks under different keys and read each one back.
//
// `cargo run --release --example multi_watermark -- [model.wake]`

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wake::checkpoint::Checkpoint;
use wake::codec::{ber, KeyBits, WatermarkBits};
use wake::corpus::{toy_corpus, CorpusSpec};
use wake::metrics::snr;
use wake::pipeline::{decode, embed_stack, ModelConfig, ModelParams, Redundancy, WatermarkStack};
use wake::trainer::load_model;

/// BER of each stacked payload under its own key, then under a third key.
pub fn run(model: &ModelParams) -> wake::Result<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = toy_corpus(&CorpusSpec::mixed(1), &mut rng)?.remove(0);
    let n = model.key_len();
    let stack = WatermarkStack::new(vec![
        (
            WatermarkBits::random(&mut rng, model.config.bits),
            KeyBits::from_index(0x5c, n),
        ),
        (
            WatermarkBits::random(&mut rng, model.config.bits),
            KeyBits::from_index(0xa3, n),
        ),
    ])?;
    let third = KeyBits::from_index(0x17, n);
    let marked = embed_stack(&x, &stack, model)?;
    println!("SNR after both embeddings: {:.2} dB", snr(&x, &marked)?);
    let wrong = decode(&marked, &third, model, Redundancy::Predict)?;
    let mut out = vec![];
    for (j, (wm, key)) in stack.entries().iter().enumerate() {
        let d = decode(&marked, key, model, Redundancy::Predict)?;
        let own = ber(wm, &d.bits)?;
        let other = ber(wm, &wrong.bits)?;
        println!(
            "watermark {}: own key {} BER {own:5.1}%, key {} BER {other:5.1}%",
            j + 1,
            key.to_hex(),
            third.to_hex()
        );
        out.push((own, other));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> wake::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(p) => load_model(&Checkpoint::load(Path::new(&p))?)?,
        None => ModelParams::new(ModelConfig::default())?,
    };
    run(&model)?;
    Ok(())
}
