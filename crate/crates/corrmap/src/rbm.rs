//! Binary restricted Boltzmann machine baseline, trained in the bitstring
//! domain with contrastive divergence and carrying the same latent-block
//! interpolation mechanism as the circuit trainer.
//!
//! The flat parameter ordering is normative because the latent block is
//! defined on it: weights row-major (`visible * hidden`), then visible
//! biases, then hidden biases. Freezing a set of flat indices keeps them
//! bit-identical through training, exactly like the circuit paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bits::words_for;
use crate::datasets::BitDataset;
use crate::error::{Error, Result};
use crate::Scalar;

/// Weight init scale for fresh models.
const WEIGHT_INIT_STD: f64 = 0.01;
/// Minibatch size used by the trainer.
const BATCH: usize = 64;

/// Hidden-unit count putting the model near 12k parameters, the reference
/// baseline scale (600 hidden units at 18 visible).
pub fn default_hidden_units(n_visible: usize) -> usize {
    (12_000 / (n_visible + 2)).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmModel<T> {
    pub n_visible: usize,
    pub n_hidden: usize,
    /// `n_visible x n_hidden`, row-major.
    pub weights: Vec<T>,
    pub visible_bias: Vec<T>,
    pub hidden_bias: Vec<T>,
}

impl<T: Scalar> RbmModel<T> {
    /// Fresh model with Gaussian weights and zero biases, drawn from the
    /// seed.
    pub fn init(n_visible: usize, n_hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, WEIGHT_INIT_STD).unwrap();
        RbmModel {
            n_visible,
            n_hidden,
            weights: (0..n_visible * n_hidden)
                .map(|_| T::from_f64_const(normal.sample(&mut rng)))
                .collect(),
            visible_bias: vec![T::zero(); n_visible],
            hidden_bias: vec![T::zero(); n_hidden],
        }
    }

    pub fn param_len(&self) -> usize {
        self.n_visible * self.n_hidden + self.n_visible + self.n_hidden
    }

    /// Flat parameter vector in the normative ordering.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_len());
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.visible_bias);
        out.extend_from_slice(&self.hidden_bias);
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_len() {
            return Err(Error::Shape(format!(
                "expected {} flat parameters, got {}",
                self.param_len(),
                flat.len()
            )));
        }
        let w = self.n_visible * self.n_hidden;
        self.weights.copy_from_slice(&flat[..w]);
        self.visible_bias
            .copy_from_slice(&flat[w..w + self.n_visible]);
        self.hidden_bias.copy_from_slice(&flat[w + self.n_visible..]);
        Ok(())
    }

    /// JSON form: header plus the flat array in the normative ordering.
    pub fn to_json(&self) -> String
    where
        T: serde::Serialize,
    {
        serde_json::to_string(&FlatModel {
            n_visible: self.n_visible,
            n_hidden: self.n_hidden,
            params: self.flat().iter().map(|v| v.to_f64().unwrap()).collect(),
        })
        .expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let flat: FlatModel =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model json: {e}")))?;
        let mut model = RbmModel {
            n_visible: flat.n_visible,
            n_hidden: flat.n_hidden,
            weights: vec![T::zero(); flat.n_visible * flat.n_hidden],
            visible_bias: vec![T::zero(); flat.n_visible],
            hidden_bias: vec![T::zero(); flat.n_hidden],
        };
        let params: Vec<T> = flat.params.iter().map(|&v| T::from_f64_const(v)).collect();
        model.set_flat(&params)?;
        Ok(model)
    }

    /// Free energy of one visible configuration:
    /// `-sum_i a_i v_i - sum_j ln(1 + exp(b_j + sum_i v_i W_ij))`.
    pub fn free_energy(&self, visible: &[T]) -> T {
        let mut energy = T::zero();
        for (a, v) in self.visible_bias.iter().zip(visible.iter()) {
            energy -= *a * *v;
        }
        for j in 0..self.n_hidden {
            let mut act = self.hidden_bias[j];
            for i in 0..self.n_visible {
                act += visible[i] * self.weights[i * self.n_hidden + j];
            }
            energy -= softplus(act);
        }
        energy
    }

    /// Dataset-averaged free energy; the training-progress diagnostic.
    pub fn mean_free_energy(&self, d: &BitDataset) -> T {
        let mut acc = T::zero();
        let mut v = vec![T::zero(); self.n_visible];
        for i in 0..d.len() {
            load_visible(d, i, &mut v);
            acc += self.free_energy(&v);
        }
        acc / T::from_f64_const(d.len() as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct FlatModel {
    n_visible: usize,
    n_hidden: usize,
    params: Vec<f64>,
}

fn softplus<T: Scalar>(x: T) -> T {
    // ln(1 + e^x), stable on both sides.
    if x > T::zero() {
        x + (T::one() + (-x).exp()).ln()
    } else {
        (T::one() + x.exp()).ln()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn load_visible<T: Scalar>(d: &BitDataset, row: usize, out: &mut [T]) {
    for (b, slot) in out.iter_mut().enumerate() {
        *slot = if d.bit(row, b) { T::one() } else { T::zero() };
    }
}

struct Gibbs<'a, T> {
    model: &'a RbmModel<T>,
    hidden_prob: Vec<T>,
    visible_prob: Vec<T>,
}

impl<'a, T: Scalar> Gibbs<'a, T> {
    fn new(model: &'a RbmModel<T>) -> Self {
        Gibbs {
            model,
            hidden_prob: vec![T::zero(); model.n_hidden],
            visible_prob: vec![T::zero(); model.n_visible],
        }
    }

    fn hidden_probs(&mut self, visible: &[T]) {
        let m = self.model;
        for j in 0..m.n_hidden {
            let mut act = m.hidden_bias[j];
            for i in 0..m.n_visible {
                if visible[i] > T::zero() {
                    act += visible[i] * m.weights[i * m.n_hidden + j];
                }
            }
            self.hidden_prob[j] = sigmoid(act);
        }
    }

    fn visible_probs(&mut self, hidden: &[T]) {
        let m = self.model;
        for i in 0..m.n_visible {
            let mut act = m.visible_bias[i];
            let row = &m.weights[i * m.n_hidden..(i + 1) * m.n_hidden];
            for j in 0..m.n_hidden {
                if hidden[j] > T::zero() {
                    act += hidden[j] * row[j];
                }
            }
            self.visible_prob[i] = sigmoid(act);
        }
    }
}

fn bernoulli<T: Scalar>(probs: &[T], rng: &mut ChaCha8Rng, out: &mut [T]) {
    for (p, o) in probs.iter().zip(out.iter_mut()) {
        *o = if T::from_f64_const(rng.random::<f64>()) < *p {
            T::one()
        } else {
            T::zero()
        };
    }
}

/// Contrastive-divergence training from a fresh seeded initialization.
/// Returns the model and the per-epoch mean free energy on the training
/// data. `frozen` is a set of flat parameter indices pinned at their
/// initial values.
#[allow(clippy::too_many_arguments)]
pub fn rbm_train<T: Scalar>(
    d: &BitDataset,
    n_hidden: usize,
    epochs: usize,
    lr: f64,
    cd_steps: usize,
    seed: u64,
    frozen: &[usize],
) -> Result<(RbmModel<T>, Vec<T>)> {
    let model = RbmModel::init(d.n(), n_hidden, seed);
    rbm_train_from(model, d, epochs, lr, cd_steps, seed, frozen)
}

/// Contrastive-divergence training continuing from an existing model
/// (the warm-start path the latent adaptation uses).
pub fn rbm_train_from<T: Scalar>(
    mut model: RbmModel<T>,
    d: &BitDataset,
    epochs: usize,
    lr: f64,
    cd_steps: usize,
    seed: u64,
    frozen: &[usize],
) -> Result<(RbmModel<T>, Vec<T>)> {
    if d.n() != model.n_visible {
        return Err(Error::WidthMismatch {
            left: model.n_visible,
            right: d.n(),
        });
    }
    if cd_steps == 0 {
        return Err(Error::Config("contrastive divergence needs cd_steps >= 1".into()));
    }
    let mut frozen_mask = vec![false; model.param_len()];
    for &i in frozen {
        if i >= frozen_mask.len() {
            return Err(Error::Config(format!(
                "frozen index {i} out of range for {} parameters",
                frozen_mask.len()
            )));
        }
        frozen_mask[i] = true;
    }
    let pinned = model.flat();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let lr_t = T::from_f64_const(lr);
    let nv = model.n_visible;
    let nh = model.n_hidden;
    let mut energies = Vec::with_capacity(epochs);

    let mut order: Vec<usize> = (0..d.len()).collect();
    let mut v0 = vec![T::zero(); nv];
    let mut vk = vec![T::zero(); nv];
    let mut h_sample = vec![T::zero(); nh];
    let mut pos_h = vec![T::zero(); nh];

    for _epoch in 0..epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for batch in order.chunks(BATCH) {
            let mut grad_w = vec![T::zero(); nv * nh];
            let mut grad_a = vec![T::zero(); nv];
            let mut grad_b = vec![T::zero(); nh];
            for &row in batch {
                load_visible(d, row, &mut v0);
                let mut gibbs = Gibbs::new(&model);
                gibbs.hidden_probs(&v0);
                pos_h.copy_from_slice(&gibbs.hidden_prob);

                // CD-k chain from the data state.
                bernoulli(&pos_h, &mut rng, &mut h_sample);
                for step in 0..cd_steps {
                    gibbs.visible_probs(&h_sample);
                    bernoulli(&gibbs.visible_prob, &mut rng, &mut vk);
                    gibbs.hidden_probs(&vk);
                    if step + 1 < cd_steps {
                        bernoulli(&gibbs.hidden_prob, &mut rng, &mut h_sample);
                    }
                }
                let neg_h = &gibbs.hidden_prob;

                for i in 0..nv {
                    for j in 0..nh {
                        grad_w[i * nh + j] += v0[i] * pos_h[j] - vk[i] * neg_h[j];
                    }
                    grad_a[i] += v0[i] - vk[i];
                }
                for j in 0..nh {
                    grad_b[j] += pos_h[j] - neg_h[j];
                }
            }
            let scale = lr_t / T::from_f64_const(batch.len() as f64);
            for i in 0..nv * nh {
                model.weights[i] += scale * grad_w[i];
            }
            for i in 0..nv {
                model.visible_bias[i] += scale * grad_a[i];
            }
            for j in 0..nh {
                model.hidden_bias[j] += scale * grad_b[j];
            }
            // Restore pinned positions exactly.
            if !frozen.is_empty() {
                let mut flat = model.flat();
                for (i, (f, p)) in frozen_mask.iter().zip(pinned.iter()).enumerate() {
                    if *f {
                        flat[i] = *p;
                    }
                }
                model.set_flat(&flat)?;
            }
        }
        let fe = model.mean_free_energy(d);
        if !fe.to_f64().map(f64::is_finite).unwrap_or(false) {
            return Err(Error::NonFiniteLoss {
                step: energies.len(),
                param_checksum: crate::bits::param_checksum(&model.flat()),
            });
        }
        energies.push(fe);
    }
    Ok((model, energies))
}

/// Block Gibbs sampling: a fresh random visible state, `burn_in` sweeps
/// discarded, then one record every `thin` sweeps.
pub fn rbm_sample<T: Scalar>(
    model: &RbmModel<T>,
    shots: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<BitDataset> {
    if shots == 0 {
        return Err(Error::Config("shot count must be at least 1".into()));
    }
    let thin = thin.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x94d0_49bb_1331_11eb);
    let nv = model.n_visible;
    let mut visible: Vec<T> = (0..nv)
        .map(|_| {
            if rng.random::<bool>() {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    let mut hidden = vec![T::zero(); model.n_hidden];
    let mut gibbs = Gibbs::new(model);

    let wps = words_for(nv);
    let mut words = Vec::with_capacity(shots * wps);
    let mut sweep = |visible: &mut Vec<T>, hidden: &mut Vec<T>, rng: &mut ChaCha8Rng| {
        gibbs.hidden_probs(visible);
        bernoulli(&gibbs.hidden_prob, rng, hidden);
        gibbs.visible_probs(hidden);
        bernoulli(&gibbs.visible_prob, rng, visible);
    };
    for _ in 0..burn_in {
        sweep(&mut visible, &mut hidden, &mut rng);
    }
    for _ in 0..shots {
        for _ in 0..thin {
            sweep(&mut visible, &mut hidden, &mut rng);
        }
        let mut row = vec![0u64; wps];
        for (b, v) in visible.iter().enumerate() {
            if *v > T::zero() {
                row[b / 64] |= 1u64 << (b % 64);
            }
        }
        words.extend_from_slice(&row);
    }
    BitDataset::from_words(nv, words, shots)
}

/// Installs a piecewise-linear interpolation of the latent block (the first
/// `d_lat` flat indices) at time `tau`, leaving every other parameter of
/// `core` untouched. Anchor semantics match the circuit trainer exactly.
pub fn rbm_latent_interpolate<T: Scalar>(
    anchors: &[(f64, Vec<T>)],
    core: &RbmModel<T>,
    d_lat: usize,
    tau: f64,
) -> Result<RbmModel<T>> {
    if anchors.len() < 2 {
        return Err(Error::InsufficientAnchors {
            need: 2,
            have: anchors.len(),
        });
    }
    if d_lat == 0 || d_lat > core.param_len() {
        return Err(Error::Config(format!(
            "latent dimension must be in 1..={}, got {d_lat}",
            core.param_len()
        )));
    }
    for (t, v) in anchors {
        if v.len() != d_lat {
            return Err(Error::Shape(format!(
                "anchor at t = {t} has {} latent entries, expected {d_lat}",
                v.len()
            )));
        }
    }
    let first_t = anchors[0].0;
    let last_t = anchors[anchors.len() - 1].0;
    let seg = if tau <= first_t {
        0
    } else if tau >= last_t {
        anchors.len() - 2
    } else {
        anchors
            .windows(2)
            .position(|w| tau >= w[0].0 && tau <= w[1].0)
            .expect("tau inside anchor range")
    };
    let (t0, ref v0) = anchors[seg];
    let (t1, ref v1) = anchors[seg + 1];
    let alpha = T::from_f64_const((tau - t0) / (t1 - t0));
    let mut flat = core.flat();
    for i in 0..d_lat {
        flat[i] = (T::one() - alpha) * v0[i] + alpha * v1[i];
    }
    let mut out = core.clone();
    out.set_flat(&flat)?;
    Ok(out)
}
