// Finite-difference checks of the perceptual mel term and the accuracy loss.
//
// `cargo run --release --example gradcheck`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wake::autodiff::gradcheck::{directional_check, grad_check};
use wake::codec::WatermarkBits;
use wake::losses::{accuracy_graph, broadweight_vector, LossWeights, MelBank, MelScaleConfig};
use wake::Tensor;

/// Relative errors `(mel, accuracy)`.
pub fn run(seed: u64) -> wake::Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 4000;
    let mel = MelBank::<f64>::new(&MelScaleConfig {
        scales: vec![6, 7, 8],
        ..MelScaleConfig::default()
    })?;
    let broad = broadweight_vector(len, 0.03, 10.0, 1.0)?;
    let w = Tensor::new(vec![len], broad.weights().iter().map(|v| *v as f64).collect())?;
    let x = Tensor::from_fn(&[len], |_| rng.gen_range(-0.5..0.5));
    let y = Tensor::from_fn(&[len], |i| x.data()[i] + rng.gen_range(-0.05..0.05));
    let dir = Tensor::from_fn(&[len], |_| rng.gen_range(-1.0..1.0));
    let mel_err = directional_check(
        |g, v| mel.distance(g.constant(x.clone()), v, &w),
        &y,
        &dir,
        // Small enough that the probe rarely straddles an |a - b| kink.
        1e-7,
    )?;
    println!("mel distance, directional relative error: {mel_err:.3e}");

    let wm = WatermarkBits::random(&mut rng, 16);
    let weights = LossWeights::default();
    let logits = Tensor::from_fn(&[32], |_| rng.gen_range(-3.0..3.0));
    let acc_err = grad_check(
        |_, v| {
            let re = v.slice(0, 16)?;
            let wrong = v.slice(16, 32)?;
            Ok(accuracy_graph(&wm, re, wrong, &weights)?.total)
        },
        &logits,
        1e-6,
    )?;
    println!("accuracy loss, max relative error: {acc_err:.3e}");
    Ok((mel_err, acc_err))
}

#[allow(dead_code)]
fn main() -> wake::Result<()> {
    let (a, b) = run(0)?;
    assert!(a < 1e-3 && b < 1e-3, "gradient check failed");
    println!("all gradient checks passed");
    Ok(())
}
