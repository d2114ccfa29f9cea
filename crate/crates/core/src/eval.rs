//! Seeded evaluation protocol and the BER / SNR report.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_attack, Attack, AttackConfig};
use crate::checkpoint::Checkpoint;
use crate::codec::{ber, sample_key, KeyBits, WatermarkBits};
use crate::corpus::{toy_corpus, CorpusSpec};
use crate::dsp::{read_wav, stft, AudioClip, StftConfig};
use crate::error::{Error, Result};
use crate::metrics::{mean_std, snr, SpectralDistance};
use crate::pipeline::{decode, embed, ModelParams, Redundancy};
use crate::trainer::load_model;

pub const DEFAULT_REPETITIONS: usize = 5;

/// How many watermarks are stacked before decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Scenario(usize);

impl Scenario {
    pub const SINGLE: Scenario = Scenario(1);
    pub const DOUBLE: Scenario = Scenario(2);

    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::config("scenarios", "depth must be at least 1"));
        }
        Ok(Scenario(depth))
    }

    pub fn depth(self) -> usize {
        self.0
    }

    pub fn label(self) -> String {
        match self.0 {
            1 => "single".into(),
            2 => "double".into(),
            n => format!("{n}-fold"),
        }
    }

    /// Every `(j, i)` cell: embed index `j` against decode key `i`, where
    /// `i = depth + 1` is a fresh key distinct from all embedding keys.
    pub fn cells(self) -> Vec<(usize, usize)> {
        (1..=self.0)
            .flat_map(|j| (1..=self.0 + 1).map(move |i| (j, i)))
            .collect()
    }
}

impl TryFrom<usize> for Scenario {
    type Error = Error;
    fn try_from(v: usize) -> Result<Self> {
        Scenario::new(v)
    }
}

impl From<Scenario> for usize {
    fn from(s: Scenario) -> usize {
        s.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RedundancyMode {
    Predict,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub checkpoint: PathBuf,
    /// WAV files to evaluate on.
    #[serde(default)]
    pub clips: Vec<PathBuf>,
    /// Synthetic clips appended after `clips`, generated from `corpus_seed`.
    #[serde(default)]
    pub corpus: Option<CorpusSpec>,
    #[serde(default)]
    pub corpus_seed: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
    #[serde(default = "Attack::default_menu")]
    pub attacks: Vec<Attack>,
    #[serde(default = "default_redundancy")]
    pub redundancy: RedundancyMode,
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Directory for magnitude grids of the first clip, original and marked.
    #[serde(default)]
    pub dump_spec: Option<PathBuf>,
}

fn default_reps() -> usize {
    DEFAULT_REPETITIONS
}

fn default_scenarios() -> Vec<Scenario> {
    vec![Scenario::SINGLE, Scenario::DOUBLE]
}

fn default_redundancy() -> RedundancyMode {
    RedundancyMode::Predict
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses and validates; relative paths resolve against `base`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p)
            }
        };
        fix(&mut cfg.checkpoint);
        cfg.clips.iter_mut().for_each(fix);
        cfg.report.as_mut().map(fix);
        cfg.dump_spec.as_mut().map(fix);
        if let Some(c) = cfg.corpus.as_mut() {
            c.wav_dir.as_mut().map(fix);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.checkpoint.is_file() {
            return Err(Error::config(
                "checkpoint",
                format!("{} does not exist", self.checkpoint.display()),
            ));
        }
        for c in &self.clips {
            if !c.is_file() {
                return Err(Error::config("clips", format!("{} does not exist", c.display())));
            }
        }
        if self.clips.is_empty()
            && self
                .corpus
                .as_ref()
                .is_none_or(|c| c.synthetic_len() == 0 && c.wav_dir.is_none())
        {
            return Err(Error::config("clips", "no clips and no corpus given"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        if self.scenarios.is_empty() {
            return Err(Error::config("scenarios", "must not be empty"));
        }
        if self.attacks.is_empty() {
            return Err(Error::config("attacks", "must not be empty"));
        }
        for a in &self.attacks {
            a.validate()?;
        }
        Ok(())
    }

    pub fn settings(&self) -> EvalSettings {
        EvalSettings {
            seed: self.seed,
            repetitions: self.repetitions,
            scenarios: self.scenarios.clone(),
            attacks: self.attacks.clone(),
            redundancy: self.redundancy,
        }
    }

    pub fn load_clips(&self) -> Result<Vec<AudioClip>> {
        let mut out: Vec<AudioClip> = self.clips.iter().map(read_wav).collect::<Result<_>>()?;
        if let Some(spec) = &self.corpus {
            out.extend(toy_corpus(spec, &mut ChaCha8Rng::seed_from_u64(self.corpus_seed))?);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub seed: u64,
    pub repetitions: usize,
    pub scenarios: Vec<Scenario>,
    pub attacks: Vec<Attack>,
    pub redundancy: RedundancyMode,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            seed: 0,
            repetitions: DEFAULT_REPETITIONS,
            scenarios: default_scenarios(),
            attacks: Attack::default_menu(),
            redundancy: RedundancyMode::Predict,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub scenario: Scenario,
    pub j: usize,
    pub i: usize,
    pub attack: Attack,
    pub ber_mean: f64,
    pub ber_std: f64,
    /// SNR of the original against the audio after embedding `j` marks.
    pub snr_mean: f64,
    pub snr_std: f64,
    pub specdist_mean: f64,
    pub trials: usize,
    /// Per-trial BER percentages, trial-major.
    pub bers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "scenario,j,i,attack,ber_mean,ber_std,snr_mean,snr_std,specdist_mean,trials";

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.6}")
    }
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.scenario.label(),
                r.j,
                r.i,
                r.attack.name(),
                fmt_num(r.ber_mean),
                fmt_num(r.ber_std),
                fmt_num(r.snr_mean),
                fmt_num(r.snr_std),
                fmt_num(r.specdist_mean),
                r.trials
            );
        }
        s
    }

    pub fn find(&self, scenario: Scenario, j: usize, i: usize, attack: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.j == j && r.i == i && r.attack.name() == attack)
    }

    /// Plain-text table in the row layout of the CSV.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>2} {:>2} {:<4} {:>16} {:>16} {:>9} {:>6}\n",
            "scenario", "j", "i", "op", "BER %", "SNR dB", "specdist", "trials"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>2} {:>2} {:<4} {:>7.3} ± {:<6.3} {:>7.3} ± {:<6.3} {:>9.4} {:>6}",
                r.scenario.label(),
                r.j,
                r.i,
                r.attack.name(),
                r.ber_mean,
                r.ber_std,
                r.snr_mean,
                r.snr_std,
                r.specdist_mean,
                r.trials
            );
        }
        s
    }
}

/// Random embedding plan of one trial.
struct TrialPlan {
    marks: Vec<(WatermarkBits, KeyBits)>,
    wrong: KeyBits,
    attack_seed: u64,
    gaussian_seed: u64,
}

fn plan_trial(rng: &mut ChaCha8Rng, depth: usize, bits: usize, key_len: usize) -> Result<TrialPlan> {
    let mut used = HashSet::from([KeyBits::zeros(key_len)]);
    let mut marks = Vec::with_capacity(depth);
    while marks.len() < depth {
        let wm = WatermarkBits::random(rng, bits);
        if marks.iter().any(|(w, _)| *w == wm) {
            continue;
        }
        let k = sample_key(rng, key_len, &used)?;
        used.insert(k.clone());
        marks.push((wm, k));
    }
    let wrong = sample_key(rng, key_len, &used)?;
    Ok(TrialPlan {
        marks,
        wrong,
        attack_seed: rng.gen(),
        gaussian_seed: rng.gen(),
    })
}

/// Runs the protocol. Each `(repetition, scenario, clip)` trial draws its
/// payloads and keys from a stream seeded by `(seed, repetition)`, then is
/// decoded after every attack in the menu.
pub fn evaluate(model: &ModelParams, clips: &[AudioClip], s: &EvalSettings) -> Result<MetricsReport> {
    if clips.is_empty() {
        return Err(Error::config("clips", "must not be empty"));
    }
    if s.repetitions == 0 {
        return Err(Error::config("repetitions", "must be at least 1"));
    }
    let dist = SpectralDistance::new()?;
    let mut report = MetricsReport::default();
    for &scenario in &s.scenarios {
        let n = scenario.depth();
        let cells = scenario.cells();
        // ber[attack][cell][trial], snr/spec[j][trial]
        let mut bers = vec![vec![Vec::new(); cells.len()]; s.attacks.len()];
        let mut snrs = vec![Vec::new(); n];
        let mut dists = vec![Vec::new(); n];
        for rep in 0..s.repetitions {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(((n as u64) << 32) | rep as u64);
            for x in clips {
                let plan = plan_trial(&mut rng, n, model.config.bits, model.key_len())?;
                let mut cur = x.clone();
                for (j, (wm, k)) in plan.marks.iter().enumerate() {
                    cur = embed(&cur, wm, k, model)?;
                    snrs[j].push(snr(x, &cur)?);
                    dists[j].push(dist.eval(x, &cur)?);
                }
                for (a, attack) in s.attacks.iter().enumerate() {
                    let edited = apply_attack(&cur, &AttackConfig::new(*attack, plan.attack_seed))?;
                    let source = match s.redundancy {
                        RedundancyMode::Predict => Redundancy::Predict,
                        RedundancyMode::Gaussian => Redundancy::Gaussian {
                            seed: plan.gaussian_seed,
                        },
                    };
                    let keys: Vec<&KeyBits> = plan.marks.iter().map(|(_, k)| k).chain([&plan.wrong]).collect();
                    let decoded: Vec<WatermarkBits> = keys
                        .iter()
                        .map(|k| decode(&edited, k, model, source).map(|d| d.bits))
                        .collect::<Result<_>>()?;
                    for (c, (j, i)) in cells.iter().enumerate() {
                        bers[a][c].push(ber(&plan.marks[j - 1].0, &decoded[i - 1])?);
                    }
                }
            }
        }
        for (a, attack) in s.attacks.iter().enumerate() {
            for (c, (j, i)) in cells.iter().enumerate() {
                let (ber_mean, ber_std) = mean_std(&bers[a][c]);
                let (snr_mean, snr_std) = mean_std(&snrs[j - 1]);
                let (specdist_mean, _) = mean_std(&dists[j - 1]);
                report.rows.push(ReportRow {
                    scenario,
                    j: *j,
                    i: *i,
                    attack: *attack,
                    ber_mean,
                    ber_std,
                    snr_mean,
                    snr_std,
                    specdist_mean,
                    trials: bers[a][c].len(),
                    bers: bers[a][c].clone(),
                });
            }
        }
    }
    Ok(report)
}

/// Loads the checkpoint and clips named by `cfg`, evaluates, and writes the
/// CSV report and optional spectrogram dumps.
pub fn run_eval(cfg: &RunConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let model = load_model(&Checkpoint::load(&cfg.checkpoint)?)?;
    let clips = cfg.load_clips()?;
    let report = evaluate(&model, &clips, &cfg.settings())?;
    if let Some(path) = &cfg.report {
        std::fs::write(path, report.to_csv())?;
    }
    if let Some(dir) = &cfg.dump_spec {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let plan = plan_trial(&mut rng, 1, model.config.bits, model.key_len())?;
        let marked = embed(&clips[0], &plan.marks[0].0, &plan.marks[0].1, &model)?;
        std::fs::create_dir_all(dir)?;
        dump_spec(&clips[0], &dir.join("original.txt"))?;
        dump_spec(&marked, &dir.join("watermarked.txt"))?;
    }
    Ok(report)
}

/// Writes the pipeline STFT magnitude as whitespace-separated text: a
/// `bins frames` header line, then one line per bin.
pub fn dump_spec(clip: &AudioClip, path: &Path) -> Result<()> {
    let s = stft(clip, &StftConfig::pipeline())?;
    let mut out = format!("{} {}\n", s.bins(), s.frames());
    for f in 0..s.bins() {
        let line: Vec<String> = (0..s.frames()).map(|t| format!("{:e}", s.magnitude(f, t))).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
