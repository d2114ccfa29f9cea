//! Quick built-in checks of invertibility, key gating, STFT round trip and
//! reverse-mode gradients, run by `wake selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::gradcheck::grad_check_coords;
use crate::codec::{KeyBits, WatermarkBits};
use crate::dsp::{istft, stft, AudioClip, Spectrogram, StftConfig, CLIP_LEN};
use crate::error::Result;
use crate::inn::{inn_backward, inn_forward, InnConfig, InnParams};
use crate::losses::DiscriminatorConfig;
use crate::params::ParamSet;
use crate::pipeline::{embed, ModelConfig, ModelParams};
use crate::predict::PredictConfig;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn noise(set: &mut ParamSet, rng: &mut ChaCha8Rng, std: f32) {
    let n = Normal::new(0.0, std).unwrap();
    for t in set.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = n.sample(rng));
    }
}

fn random_spec(rng: &mut ChaCha8Rng, f: usize, t: usize) -> Spectrogram {
    let n = Normal::new(0.0f32, 1.0).unwrap();
    Spectrogram::new(Tensor::from_fn(&[2, f, t], |_| n.sample(rng))).expect("rank-3 plane")
}

fn random_clip(rng: &mut ChaCha8Rng) -> AudioClip {
    AudioClip::from_samples((0..CLIP_LEN).map(|_| rng.gen_range(-0.8..0.8)).collect()).expect("finite")
}

/// Round trip of the 8-block coupling network under every 8-bit key.
pub fn invertibility(draws: usize, seed: u64) -> Result<Check> {
    let cfg = InnConfig {
        growth: 4,
        depth: 3,
        ..InnConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    let inn = InnParams::new(&mut set, &cfg, 2, &mut rng);
    let mut worst = 0.0f32;
    for _ in 0..draws {
        noise(&mut set, &mut rng, 0.1);
        let x = random_spec(&mut rng, 8, 6);
        let w = random_spec(&mut rng, 8, 6);
        for k in 0..256 {
            let key = KeyBits::from_index(k, 8);
            let (xo, wo) = inn_forward(&x, &w, &key, &inn, &set)?;
            let (xb, wb) = inn_backward(&xo, &wo, &key, &inn, &set)?;
            worst = worst
                .max(xb.tensor().max_abs_diff(x.tensor()))
                .max(wb.tensor().max_abs_diff(w.tensor()));
        }
    }
    Ok(Check {
        name: "invertibility",
        passed: worst <= 1e-4,
        detail: format!("{draws} draws x 256 keys, max error {worst:.3e}"),
    })
}

/// With the all-zero key, embedding reduces to an STFT round trip.
pub fn zero_key_gating(seed: u64) -> Result<Check> {
    let config = ModelConfig {
        bits: 8,
        inn: InnConfig {
            growth: 2,
            depth: 2,
            ..InnConfig::default()
        },
        predict: PredictConfig { hidden: 2, blocks: 1 },
        discriminator: DiscriminatorConfig { widths: [2, 2, 2] },
        codec_init_std: 0.01,
        seed,
    };
    let mut model = ModelParams::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    noise(&mut model.set, &mut rng, 0.1);
    let x = random_clip(&mut rng);
    let wm = WatermarkBits::random(&mut rng, 8);
    let marked = embed(&x, &wm, &KeyBits::zeros(8), &model)?;
    let cfg = StftConfig::pipeline();
    let rt = istft(&stft(&x, &cfg)?, &cfg, x.len())?;
    let err = marked
        .samples()
        .iter()
        .zip(rt.samples())
        .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
    Ok(Check {
        name: "zero-key gating",
        passed: err <= 1e-5,
        detail: format!("max deviation from STFT round trip {err:.3e}"),
    })
}

pub fn stft_round_trip(clips: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = StftConfig::pipeline();
    let mut worst = 0.0f32;
    for _ in 0..clips {
        let x = random_clip(&mut rng);
        let y = istft(&stft(&x, &cfg)?, &cfg, x.len())?;
        worst = x
            .samples()
            .iter()
            .zip(y.samples())
            .fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(Check {
        name: "stft round trip",
        passed: worst <= 1e-5,
        detail: format!("{clips} clips, max error {worst:.3e}"),
    })
}

/// Finite differences against reverse mode through a 2-block composition.
pub fn inn_gradients(seed: u64) -> Result<Check> {
    let cfg = InnConfig {
        blocks: 2,
        growth: 2,
        depth: 3,
        clamp: 2.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    let inn = InnParams::new(&mut set, &cfg, 2, &mut rng);
    noise(&mut set, &mut rng, 0.4);
    let key = KeyBits::new(vec![1, 1])?;
    let x = random_spec(&mut rng, 5, 4).into_tensor().cast::<f64>();
    let w = random_spec(&mut rng, 5, 4).into_tensor().cast::<f64>();
    let mut worst = 0.0f64;
    for id in inn.ids() {
        let point = set.get(id).cast::<f64>();
        let coords: Vec<usize> = (0..point.len()).step_by(point.len().div_ceil(3)).collect();
        let err = grad_check_coords(
            |g, v| {
                let mut p = set.bind(g, false);
                p.substitute(id, v);
                let (xo, wo) = inn.forward(&p, g.constant(x.clone()), g.constant(w.clone()), &key)?;
                Ok(xo.mul(wo)?.sum())
            },
            &point,
            1e-6,
            &coords,
        )?;
        worst = worst.max(err);
    }
    Ok(Check {
        name: "inn gradients",
        passed: worst < 1e-3,
        detail: format!("max relative error {worst:.3e}"),
    })
}

pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        invertibility(4, seed)?,
        zero_key_gating(seed)?,
        stft_round_trip(20, seed)?,
        inn_gradients(seed)?,
    ])
}
