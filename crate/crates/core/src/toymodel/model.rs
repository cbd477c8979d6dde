use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::io_util::{expect_eof, read_f64s, read_magic, read_u32, write_f64s, write_u32};
use crate::linalg::{mat_mul, Matrix};
use crate::protect::{patch_embed, PatchEmbedWeights};
use crate::rng::Gaussian;
use crate::segmetrics::{SegmentationMap, IGNORE_LABEL};
use crate::tensorpatch::{check_divisible, to_patches, ImageTensor};

use super::dataset::{SyntheticSample, IMAGE_CHANNELS, IMAGE_SIZE, NUM_CLASSES};

pub const HEAD_MAGIC: &[u8; 4] = b"PLH1";

/// Parameter groups in the order used by [`ToyModel::params_mut`] and
/// [`Gradients::slices`].
pub const PARAM_NAMES: [&str; 6] = ["embedding", "position", "head_w1", "head_b1", "head_w2", "head_b2"];

/// Architecture of a [`ToyModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_height: IMAGE_SIZE,
            image_width: IMAGE_SIZE,
            channels: IMAGE_CHANNELS,
            patch_size: 4,
            embed_dim: 32,
            hidden: 64,
            num_classes: NUM_CLASSES,
        }
    }
}

impl ModelConfig {
    pub fn n_patches(&self) -> usize {
        (self.image_height / self.patch_size) * (self.image_width / self.patch_size)
    }

    pub fn n_params(&self) -> usize {
        let p2 = self.patch_size * self.patch_size;
        p2 * self.channels * self.embed_dim
            + self.n_patches() * self.embed_dim
            + self.embed_dim * self.hidden
            + self.hidden
            + self.hidden * p2 * self.num_classes
            + p2 * self.num_classes
    }
}

/// Patch embedding followed by a per-patch two-layer MLP that emits `C`
/// logits for each of the patch's `p²` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub embed: PatchEmbedWeights,
    pub head_w1: Matrix,
    pub head_b1: Vec<f64>,
    pub head_w2: Matrix,
    pub head_b2: Vec<f64>,
    pub num_classes: usize,
    pub hidden: usize,
}

/// Per-pixel class scores, `h × w × C`, class fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.num_classes;
        &self.data[i..i + self.num_classes]
    }

    /// Arg-max per pixel; ties go to the lowest class index.
    pub fn argmax(&self) -> SegmentationMap {
        let labels = self
            .data
            .chunks_exact(self.num_classes)
            .map(|px| {
                px.iter().enumerate().fold((0usize, f64::NEG_INFINITY), |best, (k, &v)| {
                    if v > best.1 {
                        (k, v)
                    } else {
                        best
                    }
                }).0 as u8
            })
            .collect();
        SegmentationMap::new(self.height, self.width, labels).expect("logit grid matches map size")
    }

    /// Gap between the largest and second-largest logit at every pixel.
    pub fn top_margins(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.num_classes)
            .map(|px| {
                let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for &v in px {
                    if v > a {
                        b = a;
                        a = v;
                    } else if v > b {
                        b = v;
                    }
                }
                if b.is_finite() {
                    a - b
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Matrix,
    pub position: Matrix,
    pub head_w1: Matrix,
    pub head_b1: Vec<f64>,
    pub head_w2: Matrix,
    pub head_b2: Vec<f64>,
}

impl Gradients {
    pub(crate) fn zeros_like(m: &ToyModel) -> Self {
        Self {
            embedding: Matrix::zeros(m.embed.embedding.rows(), m.embed.embedding.cols()),
            position: Matrix::zeros(m.embed.position.rows(), m.embed.position.cols()),
            head_w1: Matrix::zeros(m.head_w1.rows(), m.head_w1.cols()),
            head_b1: vec![0.0; m.head_b1.len()],
            head_w2: Matrix::zeros(m.head_w2.rows(), m.head_w2.cols()),
            head_b2: vec![0.0; m.head_b2.len()],
        }
    }

    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.embedding.as_slice(),
            self.position.as_slice(),
            self.head_w1.as_slice(),
            &self.head_b1,
            self.head_w2.as_slice(),
            &self.head_b2,
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.embedding.as_mut_slice(),
            self.position.as_mut_slice(),
            self.head_w1.as_mut_slice(),
            &mut self.head_b1,
            self.head_w2.as_mut_slice(),
            &mut self.head_b2,
        ]
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh approximation of GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Intermediate activations of one image, kept for backprop.
struct Trace {
    patches: Matrix,
    z0: Matrix,
    pre: Matrix,
    act: Matrix,
    out: Matrix,
}

fn add_bias(m: &mut Matrix, b: &[f64]) {
    for r in 0..m.rows() {
        for (v, bv) in m.row_mut(r).iter_mut().zip(b) {
            *v += bv;
        }
    }
}

impl ToyModel {
    /// Seeded Gaussian init with standard deviation `1/√fan_in`; biases zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        check_divisible(cfg.image_height, cfg.image_width, cfg.patch_size)?;
        if cfg.embed_dim == 0 || cfg.hidden == 0 || cfg.num_classes == 0 || cfg.num_classes > IGNORE_LABEL as usize {
            return Err(Error::InvalidArgument(format!("invalid model config {cfg:?}")));
        }
        let mut g = Gaussian::new(ChaCha20Rng::seed_from_u64(seed));
        let p = cfg.patch_size;
        let patch_dim = p * p * cfg.channels;
        let embed = PatchEmbedWeights::random(
            p,
            cfg.channels,
            cfg.embed_dim,
            cfg.n_patches(),
            1.0 / (patch_dim as f64).sqrt(),
            &mut g,
        )?;
        let mut gauss = |rows: usize, cols: usize, fan_in: usize| -> Result<Matrix> {
            let mut d = vec![0.0; rows * cols];
            g.fill(&mut d);
            let s = 1.0 / (fan_in as f64).sqrt();
            Matrix::new(rows, cols, d.into_iter().map(|v| v * s).collect())
        };
        let out_dim = p * p * cfg.num_classes;
        Ok(Self {
            head_w1: gauss(cfg.embed_dim, cfg.hidden, cfg.embed_dim)?,
            head_b1: vec![0.0; cfg.hidden],
            head_w2: gauss(cfg.hidden, out_dim, cfg.hidden)?,
            head_b2: vec![0.0; out_dim],
            embed,
            num_classes: cfg.num_classes,
            hidden: cfg.hidden,
        })
    }

    /// Model whose every parameter is zero.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        let mut m = Self::init(cfg, 0)?;
        for s in m.params_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(m)
    }

    pub fn patch_size(&self) -> usize {
        self.embed.patch_size
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.embed_dim()
    }

    fn out_dim(&self) -> usize {
        self.patch_size() * self.patch_size() * self.num_classes
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|s| s.len()).sum()
    }

    pub fn params(&self) -> [&[f64]; 6] {
        [
            self.embed.embedding.as_slice(),
            self.embed.position.as_slice(),
            self.head_w1.as_slice(),
            &self.head_b1,
            self.head_w2.as_slice(),
            &self.head_b2,
        ]
    }

    /// Raw parameter access (see [`PARAM_NAMES`]). Values must stay finite.
    pub fn params_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.embed.embedding.as_mut_slice(),
            self.embed.position.as_mut_slice(),
            self.head_w1.as_mut_slice(),
            &mut self.head_b1,
            self.head_w2.as_mut_slice(),
            &mut self.head_b2,
        ]
    }

    /// Checks the shape chain `D → H → p²C`.
    pub fn validate(&self) -> Result<()> {
        let d = self.embed_dim();
        let ok = self.head_w1.shape() == (d, self.hidden)
            && self.head_b1.len() == self.hidden
            && self.head_w2.shape() == (self.hidden, self.out_dim())
            && self.head_b2.len() == self.out_dim()
            && self.params().iter().all(|s| s.iter().all(|v| v.is_finite()));
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "inconsistent head: D={d}, H={}, C={}, w1 {:?}, w2 {:?}",
                self.hidden,
                self.num_classes,
                self.head_w1.shape(),
                self.head_w2.shape()
            )))
        }
    }

    fn trace(&self, x: &ImageTensor) -> Result<Trace> {
        let z0 = patch_embed(x, &self.embed)?.z0;
        let patches = to_patches(x, self.patch_size())?.into_matrix();
        let mut pre = mat_mul(&z0, &self.head_w1)?;
        add_bias(&mut pre, &self.head_b1);
        let act = Matrix::new(pre.rows(), pre.cols(), pre.as_slice().iter().map(|&v| gelu(v)).collect())?;
        let mut out = mat_mul(&act, &self.head_w2)?;
        add_bias(&mut out, &self.head_b2);
        Ok(Trace { patches, z0, pre, act, out })
    }

    /// Index into `out` (patch row, column) for pixel `(row, col)` and class 0.
    fn pixel_slot(&self, grid_cols: usize, row: usize, col: usize) -> (usize, usize) {
        let p = self.patch_size();
        let patch = (row / p) * grid_cols + col / p;
        let local = (row % p) * p + col % p;
        (patch, local * self.num_classes)
    }

    /// Per-pixel logits `h × w × C`.
    pub fn forward(&self, x: &ImageTensor) -> Result<Logits> {
        let t = self.trace(x)?;
        let (h, w, c) = (x.height(), x.width(), self.num_classes);
        let grid_cols = w / self.patch_size();
        let mut data = vec![0.0; h * w * c];
        for row in 0..h {
            for col in 0..w {
                let (patch, slot) = self.pixel_slot(grid_cols, row, col);
                let dst = (row * w + col) * c;
                data[dst..dst + c].copy_from_slice(&t.out.row(patch)[slot..slot + c]);
            }
        }
        Ok(Logits { height: h, width: w, num_classes: c, data })
    }

    pub fn predict(&self, x: &ImageTensor) -> Result<SegmentationMap> {
        Ok(self.forward(x)?.argmax())
    }

    /// Mean softmax cross-entropy over all non-ignored pixels of the batch,
    /// with gradients for every parameter.
    pub fn loss_and_grads(&self, batch: &[&SyntheticSample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let counted: usize = batch
            .iter()
            .map(|s| s.labels.labels().iter().filter(|&&l| l != IGNORE_LABEL).count())
            .sum();
        if counted == 0 {
            return Err(Error::UndefinedLoss("every pixel in the batch is ignored".into()));
        }
        let scale = 1.0 / counted as f64;
        let c = self.num_classes;
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let mut probs = vec![0.0; c];

        for sample in batch {
            let (x, labels) = (&sample.image, &sample.labels);
            if (labels.height(), labels.width()) != (x.height(), x.width()) {
                return Err(Error::Shape("label map does not match image".into()));
            }
            labels.validate(c)?;
            let t = self.trace(x)?;
            let grid_cols = x.width() / self.patch_size();

            // d loss / d out
            let mut d_out = Matrix::zeros(t.out.rows(), t.out.cols());
            for row in 0..x.height() {
                for col in 0..x.width() {
                    let target = labels.get(row, col);
                    if target == IGNORE_LABEL {
                        continue;
                    }
                    let (patch, slot) = self.pixel_slot(grid_cols, row, col);
                    let logits = &t.out.row(patch)[slot..slot + c];
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for (pk, &l) in probs.iter_mut().zip(logits) {
                        *pk = (l - max).exp();
                        sum += *pk;
                    }
                    loss += (sum.ln() + max - logits[target as usize]) * scale;
                    let d = &mut d_out.row_mut(patch)[slot..slot + c];
                    for k in 0..c {
                        let y = if k == target as usize { 1.0 } else { 0.0 };
                        d[k] = (probs[k] / sum - y) * scale;
                    }
                }
            }

            // out = act·W2 + b2
            accumulate(&mut grads.head_w2, &mat_mul(&t.act.transpose(), &d_out)?);
            for r in 0..d_out.rows() {
                for (g, v) in grads.head_b2.iter_mut().zip(d_out.row(r)) {
                    *g += v;
                }
            }
            let d_act = mat_mul(&d_out, &self.head_w2.transpose())?;
            // act = gelu(pre)
            let d_pre: Vec<f64> = d_act
                .as_slice()
                .iter()
                .zip(t.pre.as_slice())
                .map(|(da, &p)| da * gelu_grad(p))
                .collect();
            let d_pre = Matrix::new(t.pre.rows(), t.pre.cols(), d_pre)?;
            // pre = z0·W1 + b1
            accumulate(&mut grads.head_w1, &mat_mul(&t.z0.transpose(), &d_pre)?);
            for r in 0..d_pre.rows() {
                for (g, v) in grads.head_b1.iter_mut().zip(d_pre.row(r)) {
                    *g += v;
                }
            }
            let d_z0 = mat_mul(&d_pre, &self.head_w1.transpose())?;
            // z0 = patches·E + E_pos
            accumulate(&mut grads.embedding, &mat_mul(&t.patches.transpose(), &d_z0)?);
            accumulate(&mut grads.position, &d_z0);
        }
        Ok((loss, grads))
    }

    /// Loss only, for finite-difference checks and monitoring.
    pub fn loss(&self, batch: &[&SyntheticSample]) -> Result<f64> {
        Ok(self.loss_and_grads(batch)?.0)
    }

    /// Writes the PLW1 embedding block followed by a PLH1 head block.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.embed.write_to(w)?;
        w.write_all(HEAD_MAGIC)?;
        for d in [self.embed_dim(), self.hidden, self.num_classes] {
            write_u32(w, d as u32)?;
        }
        write_f64s(w, self.head_w1.as_slice())?;
        write_f64s(w, &self.head_b1)?;
        write_f64s(w, self.head_w2.as_slice())?;
        write_f64s(w, &self.head_b2)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let embed = PatchEmbedWeights::read_from(r)?;
        read_magic(r, HEAD_MAGIC)?;
        let d = read_u32(r, "head embed dim")? as usize;
        let hidden = read_u32(r, "hidden size")? as usize;
        let num_classes = read_u32(r, "class count")? as usize;
        if d != embed.embed_dim() {
            return Err(Error::Format(format!("head expects D={d}, embedding has D={}", embed.embed_dim())));
        }
        let out_dim = embed.patch_size * embed.patch_size * num_classes;
        let head_w1 = Matrix::new(d, hidden, read_f64s(r, d * hidden, "head_w1")?)?;
        let head_b1 = read_f64s(r, hidden, "head_b1")?;
        let head_w2 = Matrix::new(hidden, out_dim, read_f64s(r, hidden * out_dim, "head_w2")?)?;
        let head_b2 = read_f64s(r, out_dim, "head_b2")?;
        expect_eof(r, "checkpoint")?;
        let m = Self { embed, head_w1, head_b1, head_w2, head_b2, num_classes, hidden };
        m.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    pub(crate) fn apply_update(&mut self, step: &Gradients, lr: f64) {
        for (p, s) in self.params_mut().into_iter().zip(step.slices()) {
            for (pv, sv) in p.iter_mut().zip(s) {
                *pv -= lr * sv;
            }
        }
    }
}

fn accumulate(dst: &mut Matrix, src: &Matrix) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += s;
    }
}

impl Gradients {
    /// `self = momentum·self + g + weight_decay·params`
    pub(crate) fn momentum_update(&mut self, g: &Gradients, momentum: f64, weight_decay: f64, params: [&[f64]; 6]) {
        for ((v, gs), ps) in self.slices_mut().into_iter().zip(g.slices()).zip(params) {
            for ((vv, gv), pv) in v.iter_mut().zip(gs).zip(ps) {
                *vv = momentum * *vv + gv + weight_decay * pv;
            }
        }
    }
}
