// Round trip of the coupling network under every 8-bit key, with randomly
// drawn weights.
//
// `cargo run --release --example invertibility -- [draws]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wake::codec::KeyBits;
use wake::dsp::Spectrogram;
use wake::inn::{inn_backward, inn_forward, InnConfig, InnParams};
use wake::params::ParamSet;
use wake::Tensor;

/// Largest absolute reconstruction error over `draws` weight draws.
pub fn run(draws: usize, seed: u64) -> wake::Result<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    let cfg = InnConfig {
        growth: 4,
        depth: 3,
        ..InnConfig::default()
    };
    let inn = InnParams::new(&mut set, &cfg, 2, &mut rng);
    let n = Normal::new(0.0f32, 1.0).unwrap();
    let mut worst = 0.0f32;
    for d in 0..draws {
        for t in set.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.1 * n.sample(&mut rng));
        }
        let x = Spectrogram::new(Tensor::from_fn(&[2, 8, 6], |_| n.sample(&mut rng)))?;
        let wm = Spectrogram::new(Tensor::from_fn(&[2, 8, 6], |_| n.sample(&mut rng)))?;
        let mut draw_worst = 0.0f32;
        for k in 0..256 {
            let key = KeyBits::from_index(k, 8);
            let (xo, wo) = inn_forward(&x, &wm, &key, &inn, &set)?;
            let (xb, wb) = inn_backward(&xo, &wo, &key, &inn, &set)?;
            draw_worst = draw_worst
                .max(xb.tensor().max_abs_diff(x.tensor()))
                .max(wb.tensor().max_abs_diff(wm.tensor()));
        }
        println!("draw {d:3}: max error over 256 keys {draw_worst:.3e}");
        worst = worst.max(draw_worst);
    }
    Ok(worst)
}

#[allow(dead_code)]
fn main() -> wake::Result<()> {
    let draws = std::env::args()
        .nth(1)
        .map_or(10, |a| a.parse().expect("draws must be a number"));
    let worst = run(draws, 0)?;
    println!("worst reconstruction error: {worst:.3e}");
    Ok(())
}
