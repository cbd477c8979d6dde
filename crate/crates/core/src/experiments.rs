//! Baseline vs. correct-key vs. wrong-key evaluation of a protected model.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::keygen::{derive_matrices, KeyMaterial, SecretKey, KEY_LEN};
use crate::protect::{encrypt_image, encrypt_model};
use crate::segmetrics::ConfusionCounts;
use crate::toymodel::{ModelConfig, SyntheticSample, ToyModel};

/// Number of wrong keys tried per experiment by default.
pub const DEFAULT_WRONG_KEYS: usize = 50;

/// Pixels whose baseline top-logit margin exceeds this must keep their
/// predicted label under the correct key.
pub const MARGIN_EPS: f64 = 1e-5;

/// Confusion counts of `model` over `samples`. With `image_key`, every image
/// is encrypted with that key before the forward pass.
pub fn evaluate(model: &ToyModel, samples: &[SyntheticSample], image_key: Option<&KeyMaterial>) -> Result<ConfusionCounts> {
    let mut cc = ConfusionCounts::new(model.num_classes);
    for s in samples {
        let pred = match image_key {
            Some(km) => model.predict(&encrypt_image(&s.image, km)?)?,
            None => model.predict(&s.image)?,
        };
        cc.accumulate(&pred, &s.labels)?;
    }
    Ok(cc)
}

/// mIoU of a freshly initialized, untrained model: the chance-level floor.
pub fn chance_level_miou(cfg: &ModelConfig, samples: &[SyntheticSample], seed: u64) -> Result<f64> {
    Ok(evaluate(&ToyModel::init(cfg, seed)?, samples, None)?.miou().miou_or_zero())
}

/// Returns a model whose patch embedding is encrypted with `km`.
pub fn protect_model(model: &ToyModel, km: &KeyMaterial) -> Result<ToyModel> {
    Ok(ToyModel { embed: encrypt_model(&model.embed, km)?, ..model.clone() })
}

/// Deterministic sequence of keys different from `exclude`.
pub fn wrong_keys(exclude: &SecretKey, n: usize, trial_seed: u64) -> Vec<SecretKey> {
    let mut rng = ChaCha20Rng::seed_from_u64(trial_seed);
    rng.set_stream(2);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut b = [0u8; KEY_LEN];
        rng.fill_bytes(&mut b);
        let k = SecretKey::from_bytes(b);
        if &k != exclude {
            out.push(k);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub baseline_miou: f64,
    pub correct_key_miou: f64,
    pub wrong_key_mious: Vec<f64>,
    pub wrong_key_mean: f64,
    pub wrong_key_max: f64,
    pub wrong_key_min: f64,
    /// Pixels with baseline margin above [`MARGIN_EPS`] whose label changed
    /// under the correct key.
    pub correct_key_flips: usize,
    /// Pixels compared for `correct_key_flips`.
    pub high_margin_pixels: usize,
}

/// Evaluates `model` (plain) three ways on `testset`:
///
/// 1. baseline: plain model, plain images;
/// 2. correct key: model encrypted with `key`, images encrypted with `key`;
/// 3. `n_wrong` wrong keys: same encrypted model, images encrypted with keys
///    drawn from `trial_seed`.
pub fn run_access_control_experiment(
    model: &ToyModel,
    testset: &[SyntheticSample],
    key: &SecretKey,
    n_wrong: usize,
    trial_seed: u64,
) -> Result<ExperimentReport> {
    if testset.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    if model.embed.encrypted {
        return Err(Error::State("experiment needs the plain model; it encrypts it itself".into()));
    }
    model.validate()?;

    let km = derive_matrices(key, model.patch_size(), model.embed.channels)?;
    let protected = protect_model(model, &km)?;

    let mut base_cc = ConfusionCounts::new(model.num_classes);
    let mut correct_cc = ConfusionCounts::new(model.num_classes);
    let (mut flips, mut high_margin) = (0, 0);
    for s in testset {
        let base_logits = model.forward(&s.image)?;
        let enc_logits = protected.forward(&encrypt_image(&s.image, &km)?)?;
        let (base_pred, enc_pred) = (base_logits.argmax(), enc_logits.argmax());
        for ((m, a), b) in base_logits.top_margins().iter().zip(base_pred.labels()).zip(enc_pred.labels()) {
            if *m > MARGIN_EPS {
                high_margin += 1;
                if a != b {
                    flips += 1;
                }
            }
        }
        base_cc.accumulate(&base_pred, &s.labels)?;
        correct_cc.accumulate(&enc_pred, &s.labels)?;
    }

    let wrong_key_mious = wrong_keys(key, n_wrong, trial_seed)
        .iter()
        .map(|wk| {
            let wkm = derive_matrices(wk, model.patch_size(), model.embed.channels)?;
            Ok(evaluate(&protected, testset, Some(&wkm))?.miou().miou_or_zero())
        })
        .collect::<Result<Vec<f64>>>()?;

    let n = wrong_key_mious.len().max(1) as f64;
    Ok(ExperimentReport {
        baseline_miou: base_cc.miou().miou_or_zero(),
        correct_key_miou: correct_cc.miou().miou_or_zero(),
        wrong_key_mean: wrong_key_mious.iter().sum::<f64>() / n,
        wrong_key_max: wrong_key_mious.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0),
        wrong_key_min: wrong_key_mious.iter().copied().fold(f64::INFINITY, f64::min).min(1.0),
        wrong_key_mious,
        correct_key_flips: flips,
        high_margin_pixels: high_margin,
    })
}

impl ExperimentReport {
    /// One row per wrong-key trial: `trial,miou`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("trial,miou\n");
        for (i, v) in self.wrong_key_mious.iter().enumerate() {
            writeln!(s, "{i},{v}").unwrap();
        }
        s
    }

    /// Baseline / correct key / incorrect key table.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:>10} | {:>11} | {:>13}", "Baseline", "Correct (K)", "Incorrect (K')").unwrap();
        writeln!(s, "{:->10}-+-{:->11}-+-{:->13}", "", "", "").unwrap();
        writeln!(s, "{:>10.4} | {:>11.4} | {:>13.4}", self.baseline_miou, self.correct_key_miou, self.wrong_key_mean)
            .unwrap();
        writeln!(
            s,
            "incorrect keys: n = {}, min {:.4}, max {:.4}",
            self.wrong_key_mious.len(),
            self.wrong_key_min,
            self.wrong_key_max
        )
        .unwrap();
        writeln!(
            s,
            "correct-key label flips at margin > {MARGIN_EPS:e}: {} of {} pixels",
            self.correct_key_flips, self.high_margin_pixels
        )
        .unwrap();
        s
    }
}

/// Box-and-whisker summary with Tukey fences at 1.5 IQR.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxplotStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Smallest and largest values inside the fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (position `q·(n−1)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.len() < 4 {
        return Err(Error::Statistics(format!("need at least 4 trials, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Statistics("non-finite trial value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lower_fence, upper_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = sorted.iter().copied().filter(|v| (lower_fence..=upper_fence).contains(v));
    let whisker_low = inside.clone().fold(f64::INFINITY, f64::min);
    let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max);
    let outliers = sorted.iter().copied().filter(|v| !(lower_fence..=upper_fence).contains(v)).collect();
    Ok(BoxplotStats {
        n: sorted.len(),
        q1,
        median,
        q3,
        lower_fence,
        upper_fence,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// Box-plot statistics of the wrong-key trials as `key,value` CSV, with the
/// baseline as a reference line.
pub fn emit_boxplot_stats(report: &ExperimentReport) -> Result<String> {
    let b = boxplot_stats(&report.wrong_key_mious)?;
    let mut s = String::from("stat,value\n");
    for (k, v) in [
        ("n", b.n as f64),
        ("q1", b.q1),
        ("median", b.median),
        ("q3", b.q3),
        ("lower_fence", b.lower_fence),
        ("upper_fence", b.upper_fence),
        ("whisker_low", b.whisker_low),
        ("whisker_high", b.whisker_high),
        ("mean", report.wrong_key_mean),
        ("baseline", report.baseline_miou),
    ] {
        writeln!(s, "{k},{v}").unwrap();
    }
    for o in &b.outliers {
        writeln!(s, "outlier,{o}").unwrap();
    }
    Ok(s)
}
