//! `patchlock` command-line front end.
//!
//! Exit codes: 0 on success (including a verification that reports FAIL),
//! 1 on domain errors (bad files, wrong state, singular keys), 2 on usage
//! errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{emit_boxplot_stats, evaluate, run_access_control_experiment, DEFAULT_WRONG_KEYS};
use crate::keygen::{derive_matrices, generate_key, SecretKey};
use crate::protect::{
    encrypt_image, encrypt_model, patch_embed, EquivalenceReport, PatchEmbedWeights, DEFAULT_EQUIVALENCE_TOL,
};
use crate::tensorpatch::ImageTensor;
use crate::toymodel::{
    gen_dataset, gen_sample, load_dataset, save_dataset, train_with, ModelConfig, SyntheticSample, ToyModel,
    TrainConfig, DEFAULT_TEST_DATA_SEED, DEFAULT_TEST_SIZE, DEFAULT_TRAIN_DATA_SEED, DEFAULT_TRAIN_SIZE,
};

/// Directory searched for relative key paths that do not exist as given.
pub const KEY_DIR_ENV: &str = "PATCHLOCK_KEY_DIR";

#[derive(Debug, Parser)]
#[command(name = "patchlock", version, about = "Secret-key access control for patch-embedding models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a new 32-byte key file (PLK1).
    Keygen {
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Derive the key from this seed instead of OS entropy.
        #[arg(long)]
        seed: Option<u64>,
        /// Also print the key as hex.
        #[arg(long)]
        print_hex: bool,
    },
    /// Print statistics of the encryption matrix derived from a key.
    Derive {
        #[command(flatten)]
        key: KeyOpt,
        #[arg(short, long, default_value_t = 4)]
        patch_size: usize,
        #[arg(short, long, default_value_t = 3)]
        channels: usize,
    },
    /// Write a synthetic dataset directory (PLT1 images + label PPMs).
    GenData {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TEST_DATA_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
        count: usize,
    },
    /// Train the toy segmentation model and write a checkpoint.
    TrainToy {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        poly_power: f64,
        #[arg(long, default_value_t = 4)]
        patch_size: usize,
        #[arg(long, default_value_t = 32)]
        embed_dim: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = DEFAULT_TRAIN_DATA_SEED)]
        data_seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRAIN_SIZE)]
        train_size: usize,
        /// Print the loss every N iterations (0 = silent).
        #[arg(long, default_value_t = 200)]
        log_every: usize,
    },
    /// Encrypt the patch embedding of a weights file or checkpoint.
    EncryptModel {
        #[command(flatten)]
        key: KeyOpt,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encrypt an image (PPM or PLT1) patch-wise; writes PLT1.
    EncryptImage {
        #[command(flatten)]
        key: KeyOpt,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short, long, default_value_t = 4)]
        patch_size: usize,
    },
    /// Compare plain and encrypted embeddings of one image.
    Verify {
        #[command(flatten)]
        key: KeyOpt,
        /// Plain weights or checkpoint.
        #[arg(short, long)]
        model: PathBuf,
        /// Encrypted weights; default: encrypt `--model` with the key.
        #[arg(long)]
        encrypted: Option<PathBuf>,
        /// Key used for the image; default: the model key.
        #[arg(long)]
        image_key: Option<String>,
        /// Image file; default: synthetic sample `--sample-seed`.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TEST_DATA_SEED)]
        sample_seed: u64,
        #[arg(long, default_value_t = DEFAULT_EQUIVALENCE_TOL)]
        tol: f64,
    },
    /// mIoU of a checkpoint on a dataset, optionally encrypting images.
    Eval {
        #[arg(short, long)]
        model: PathBuf,
        /// Encrypt every test image with this key.
        #[arg(short, long)]
        key: Option<String>,
        #[command(flatten)]
        data: DataOpt,
        /// Machine-readable key=value output.
        #[arg(long)]
        kv: bool,
    },
    /// Baseline / correct-key / wrong-key experiment on a plain checkpoint.
    Experiment {
        #[command(flatten)]
        key: KeyOpt,
        #[arg(short, long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataOpt,
        #[arg(long, default_value_t = DEFAULT_WRONG_KEYS)]
        n_wrong: usize,
        #[arg(long, default_value_t = 0)]
        trial_seed: u64,
        /// Per-trial CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Box-plot statistics CSV output.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct KeyOpt {
    /// Key file (PLK1) or 64 hex characters.
    #[arg(short, long = "key")]
    pub key: String,
}

#[derive(Debug, Args)]
pub struct DataOpt {
    /// Dataset directory written by `gen-data`.
    #[arg(long, conflicts_with_all = ["data_seed", "count"])]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
}

impl DataOpt {
    fn load(&self) -> Result<Vec<SyntheticSample>> {
        match &self.data {
            Some(dir) => load_dataset(dir),
            None => gen_dataset(
                self.data_seed.unwrap_or(DEFAULT_TEST_DATA_SEED),
                self.count.unwrap_or(DEFAULT_TEST_SIZE),
            ),
        }
    }
}

/// Resolves a key argument: 64 hex characters, a path, or a path relative to
/// `$PATCHLOCK_KEY_DIR`.
pub fn resolve_key(arg: &str) -> Result<SecretKey> {
    if arg.len() == 64 && arg.bytes().all(|b| b.is_ascii_hexdigit()) {
        return SecretKey::from_hex(arg);
    }
    let path = Path::new(arg);
    if !path.exists() && path.is_relative() {
        if let Some(dir) = std::env::var_os(KEY_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return SecretKey::load(candidate);
            }
        }
    }
    SecretKey::load(path)
}

/// Weights or checkpoint: the PLW1 block plus any trailing bytes (a PLH1 head).
fn read_weights_file(path: &Path) -> Result<(PatchEmbedWeights, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let mut rest = bytes.as_slice();
    let w = PatchEmbedWeights::read_from(&mut rest)?;
    if !rest.is_empty() && !rest.starts_with(crate::toymodel::HEAD_MAGIC) {
        return Err(Error::Format(format!("unexpected trailing data after PLW1 block in {}", path.display())));
    }
    Ok((w, rest.to_vec()))
}

fn check_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("input file {} does not exist", path.display())))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(Error::InvalidArgument(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Keygen { output, seed, print_hex } => {
            let key = match seed {
                Some(s) => SecretKey::from_seed(s),
                None => generate_key()?,
            };
            let path = match output {
                Some(p) => p,
                None => std::env::var_os(KEY_DIR_ENV)
                    .map(|d| PathBuf::from(d).join("patchlock.plk"))
                    .ok_or_else(|| Error::InvalidArgument(format!("-o/--output required (or set {KEY_DIR_ENV})")))?,
            };
            key.save(&path)?;
            writeln!(out, "wrote key {}", path.display())?;
            if print_hex {
                writeln!(out, "{}", key.to_hex())?;
            }
        }
        Command::Derive { key, patch_size, channels } => {
            let km = derive_matrices(&resolve_key(&key.key)?, patch_size, channels)?;
            writeln!(out, "side: {0}x{0} (p={patch_size}, c={channels})", km.side())?;
            writeln!(out, "condition estimate (1-norm): {:.6e}", km.kappa)?;
            writeln!(out, "inverse residual: {:.3e}", km.inverse_residual())?;
            writeln!(out, "frobenius norm: {:.6}", km.enc.norm_frobenius())?;
        }
        Command::GenData { output, seed, count } => {
            let samples = gen_dataset(seed, count)?;
            save_dataset(&output, &samples)?;
            writeln!(out, "wrote {count} samples to {}", output.display())?;
        }
        Command::TrainToy {
            output,
            seed,
            iterations,
            batch_size,
            lr,
            poly_power,
            patch_size,
            embed_dim,
            hidden,
            data_seed,
            train_size,
            log_every,
        } => {
            let cfg = TrainConfig {
                model: ModelConfig { patch_size, embed_dim, hidden, ..ModelConfig::default() },
                iterations,
                batch_size,
                lr0: lr,
                poly_power,
                seed,
                ..TrainConfig::default()
            };
            cfg.validate().map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let data = gen_dataset(data_seed, train_size)?;
            let mut log = Vec::new();
            let model = train_with(&cfg, &data, |t, lr, loss| {
                if log_every > 0 && (t % log_every == 0 || t + 1 == iterations) {
                    log.push(format!("iter {t:>6}  lr {lr:.5}  loss {loss:.5}"));
                }
            })?;
            for line in log {
                writeln!(out, "{line}")?;
            }
            model.save(&output)?;
            writeln!(out, "wrote model {} ({} parameters)", output.display(), model.n_params())?;
        }
        Command::EncryptModel { key, input, output } => {
            check_exists(&input)?;
            let (w, tail) = read_weights_file(&input)?;
            let km = derive_matrices(&resolve_key(&key.key)?, w.patch_size, w.channels)?;
            let enc = encrypt_model(&w, &km)?;
            let mut buf = Vec::new();
            enc.write_to(&mut buf)?;
            buf.extend_from_slice(&tail);
            fs::write(&output, buf)?;
            writeln!(out, "wrote encrypted model {}", output.display())?;
        }
        Command::EncryptImage { key, input, output, patch_size } => {
            check_exists(&input)?;
            let x = ImageTensor::load_any(&input)?;
            let km = derive_matrices(&resolve_key(&key.key)?, patch_size, x.channels())?;
            encrypt_image(&x, &km)?.save(&output)?;
            writeln!(out, "wrote encrypted image {}", output.display())?;
        }
        Command::Verify { key, model, encrypted, image_key, image, sample_seed, tol } => {
            check_exists(&model)?;
            let (plain, _) = read_weights_file(&model)?;
            if plain.encrypted {
                return Err(Error::State(format!("{} is encrypted; pass the plain model", model.display())));
            }
            let x = match image {
                Some(p) => {
                    check_exists(&p)?;
                    ImageTensor::load_any(p)?
                }
                None => gen_sample(sample_seed, 0).image,
            };
            let model_key = resolve_key(&key.key)?;
            let model_km = derive_matrices(&model_key, plain.patch_size, plain.channels)?;
            let image_km = match image_key {
                Some(k) => derive_matrices(&resolve_key(&k)?, plain.patch_size, plain.channels)?,
                None => model_km.clone(),
            };
            let enc_w = match encrypted {
                Some(p) => {
                    check_exists(&p)?;
                    read_weights_file(&p)?.0
                }
                None => encrypt_model(&plain, &model_km)?,
            };
            let reference = patch_embed(&x, &plain)?;
            let candidate = patch_embed(&encrypt_image(&x, &image_km)?, &enc_w)?;
            let report = EquivalenceReport::between(&reference, &candidate, tol)?;
            writeln!(out, "{report}")?;
        }
        Command::Eval { model, key, data, kv } => {
            check_exists(&model)?;
            let m = ToyModel::load(&model)?;
            let samples = data.load()?;
            let km = key
                .map(|k| derive_matrices(&resolve_key(&k)?, m.patch_size(), m.embed.channels))
                .transpose()?;
            let report = evaluate(&m, &samples, km.as_ref())?.miou();
            if kv {
                write!(out, "{}", report.to_key_values())?;
            } else {
                write!(out, "{}", report.to_table())?;
            }
        }
        Command::Experiment { key, model, data, n_wrong, trial_seed, csv, stats } => {
            check_exists(&model)?;
            let m = ToyModel::load(&model)?;
            let samples = data.load()?;
            let report = run_access_control_experiment(&m, &samples, &resolve_key(&key.key)?, n_wrong, trial_seed)?;
            write!(out, "{}", report.summary_table())?;
            if let Some(p) = csv {
                fs::write(p, report.to_csv())?;
            }
            if let Some(p) = stats {
                fs::write(p, emit_boxplot_stats(&report)?)?;
            }
        }
    }
    Ok(())
}
