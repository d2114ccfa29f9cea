// Embed a 32-bit payload under an 8-bit key, then decode it with the right
// key and with a wrong one.
//
// `cargo run --release --example embed_decode -- [model.wake]`
//
// Without a checkpoint a freshly initialized model is used, which embeds
// nothing yet; train one with the `train_smoke` example first.

use std::path::Path;

use wake::checkpoint::Checkpoint;
use wake::codec::{ber, KeyBits, WatermarkBits};
use wake::corpus::{toy_corpus, CorpusSpec};
use wake::metrics::snr;
use wake::pipeline::{decode, embed, ModelConfig, ModelParams, Redundancy};
use wake::trainer::load_model;

pub struct Outcome {
    pub snr_db: f64,
    pub ber_correct: f64,
    pub ber_wrong: f64,
}

pub fn model_from(path: Option<&Path>) -> wake::Result<ModelParams> {
    match path {
        Some(p) => load_model(&Checkpoint::load(p)?),
        None => ModelParams::new(ModelConfig::default()),
    }
}

pub fn run(model: &ModelParams) -> wake::Result<Outcome> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let x = toy_corpus(&CorpusSpec::mixed(1), &mut rng)?.remove(0);
    let bits = model.config.bits;
    let wm = WatermarkBits::random(&mut rng, bits);
    let key = KeyBits::from_index(0b1011_0110, model.key_len());
    let wrong = KeyBits::from_index(0b0100_1001, model.key_len());

    let marked = embed(&x, &wm, &key, model)?;
    let right = decode(&marked, &key, model, Redundancy::Predict)?;
    let other = decode(&marked, &wrong, model, Redundancy::Predict)?;
    let out = Outcome {
        snr_db: snr(&x, &marked)?,
        ber_correct: ber(&wm, &right.bits)?,
        ber_wrong: ber(&wm, &other.bits)?,
    };
    println!("payload   {}", wm.to_hex());
    println!(
        "key {}    {}  BER {:5.1}%",
        key.to_hex(),
        right.bits.to_hex(),
        out.ber_correct
    );
    println!(
        "key {}    {}  BER {:5.1}%",
        wrong.to_hex(),
        other.bits.to_hex(),
        out.ber_wrong
    );
    println!("SNR {:.2} dB", out.snr_db);
    Ok(out)
}

#[allow(dead_code)]
fn main() -> wake::Result<()> {
    let arg = std::env::args().nth(1);
    let model = model_from(arg.as_deref().map(Path::new))?;
    run(&model)?;
    Ok(())
}
