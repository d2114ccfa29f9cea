// Applies every editing operation to a synthetic clip and reports how far
// each moves it.
//
// `cargo run --release --example attacks -- [out_dir]` also writes WAVs.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wake::attacks::{apply_attack, Attack, AttackConfig};
use wake::corpus::{toy_corpus, CorpusSpec};
use wake::dsp::write_wav;
use wake::metrics::{snr, SpectralDistance};

/// `(op, snr_db, specdist)` for each op of the default menu.
pub fn run(out_dir: Option<PathBuf>) -> wake::Result<Vec<(&'static str, f64, f64)>> {
    let spec = CorpusSpec {
        tones: 1,
        ..Default::default()
    };
    let x = toy_corpus(&spec, &mut ChaCha8Rng::seed_from_u64(4))?.remove(0);
    let dist = SpectralDistance::new()?;
    let mut rows = vec![];
    for attack in Attack::default_menu() {
        let y = apply_attack(&x, &AttackConfig::new(attack, 7))?;
        let s = snr(&x, &y)?;
        let d = dist.eval(&x, &y)?;
        println!("{:<3} SNR {:>8.2} dB  specdist {:.4}", attack.name(), s, d);
        if let Some(dir) = &out_dir {
            std::fs::create_dir_all(dir)?;
            write_wav(&y, dir.join(format!("{}.wav", attack.name())))?;
        }
        rows.push((attack.name(), s, d));
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> wake::Result<()> {
    run(std::env::args().nth(1).map(PathBuf::from))?;
    Ok(())
}
