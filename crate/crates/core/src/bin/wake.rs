//! Command-line front end: embed, decode, attack, train, eval, selftest.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wake::attacks::{apply_attack, Attack, AttackConfig};
use wake::checkpoint::Checkpoint;
use wake::codec::{KeyBits, WatermarkBits};
use wake::dsp::{read_wav, wav_encoding, write_wav_as};
use wake::eval::{run_eval, RunConfig};
use wake::pipeline::{decode, embed, Redundancy};
use wake::trainer::{load_model, run_training, TrainConfig};
use wake::{Error, Result};

#[derive(Parser)]
#[command(name = "wake", version, about = "Key-controlled audio watermarking")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum RedundancyArg {
    Predict,
    Gaussian,
}

#[derive(Subcommand)]
enum Cmd {
    /// Embed a hex payload under a hex key.
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        wm: String,
        #[arg(long)]
        key: String,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Decode the payload embedded under a key.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_enum, default_value = "predict")]
        redundancy: RedundancyArg,
        /// Seed of the Gaussian redundancy.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Apply one editing operation.
    Attack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// NA, UD, RN, PN, LF, HF, BF, BA, DA or SA.
        #[arg(long)]
        op: String,
        /// Operation parameter as name=value, e.g. snr_db=20. Repeatable.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a TOML configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the final checkpoint.
        #[arg(long, default_value = "final.wake")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint and write the CSV report.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write magnitude grids of the first clip, original and marked.
        #[arg(long)]
        dump_spec: Option<PathBuf>,
    },
    /// Run the built-in invertibility, gating and gradient checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_attack(op: &str, params: &[String]) -> Result<Attack> {
    let base = Attack::from_name(op)?;
    if params.is_empty() {
        return Ok(base);
    }
    let mut text = format!("op = \"{}\"\n", base.name());
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("parameter `{p}` is not NAME=VALUE")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("parameter `{k}` needs a number, got `{v}`")))?;
        text.push_str(&format!("{} = {v:?}\n", k.trim()));
    }
    let a: Attack = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    a.validate()?;
    Ok(a)
}

/// Ok(false) means the command ran but a check failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Embed {
            input,
            out,
            wm,
            key,
            ckpt,
        } => {
            let x = read_wav(&input)?;
            let model = load_model(&Checkpoint::load(&ckpt)?)?;
            let wm = WatermarkBits::from_hex(&wm, model.config.bits)?;
            let key = KeyBits::from_hex(&key, model.key_len())?;
            let y = embed(&x, &wm, &key, &model)?;
            let clipped = write_wav_as(&y, &out, wav_encoding(&input)?)?;
            if clipped > 0 {
                log::warn!("{clipped} samples clipped to [-1, 1]");
            }
        }
        Cmd::Decode {
            input,
            key,
            ckpt,
            redundancy,
            seed,
        } => {
            let x = read_wav(&input)?;
            let model = load_model(&Checkpoint::load(&ckpt)?)?;
            let key = KeyBits::from_hex(&key, model.key_len())?;
            let source = match redundancy {
                RedundancyArg::Predict => Redundancy::Predict,
                RedundancyArg::Gaussian => Redundancy::Gaussian { seed },
            };
            let d = decode(&x, &key, &model, source)?;
            println!("payload {}", d.bits.to_hex());
            let conf: Vec<String> = d.confidences().iter().map(|c| format!("{c:.3}")).collect();
            println!("confidence {}", conf.join(" "));
        }
        Cmd::Attack {
            input,
            out,
            op,
            params,
            seed,
        } => {
            let attack = parse_attack(&op, &params)?;
            let x = read_wav(&input)?;
            let y = apply_attack(&x, &AttackConfig::new(attack, seed))?;
            write_wav_as(&y, &out, wav_encoding(&input)?)?;
        }
        Cmd::Train { config, out } => {
            let cfg = TrainConfig::from_toml(&std::fs::read_to_string(&config)?)?;
            let corpus = cfg.build_corpus()?;
            log::info!("training {} steps on {} clips", cfg.steps, corpus.len());
            let ck = run_training(cfg, &corpus, |_| {})?;
            ck.save(&out)?;
            println!("wrote {}", out.display());
        }
        Cmd::Eval {
            config,
            report,
            dump_spec,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if report.is_some() {
                cfg.report = report;
            }
            if dump_spec.is_some() {
                cfg.dump_spec = dump_spec;
            }
            let r = run_eval(&cfg)?;
            print!("{}", r.to_table());
        }
        Cmd::Selftest { seed } => {
            let checks = wake::selftest::run_all(seed)?;
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += !c.passed as usize;
            }
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
