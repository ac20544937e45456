//! Training loops and the latent-block adaptation workflow.
//!
//! Two optimizers drive circuit angles: Adam on the analytic gradient of the
//! dense parity-basis loss, and SPSA on two-sided evaluations of either the
//! dense loss or a sampled raw-MMD estimate. A frozen index set is honored
//! bit-exactly by both paths.
//!
//! The temporal workflow splits the canonical parameter vector into a small
//! leading latent block and a core remainder: [`fit_core`] trains the core
//! against the first snapshot with the latent block pinned at its random
//! initialization, [`adapt_latent`] re-fits only the latent block per later
//! snapshot (warm-started from the previous anchor), and
//! [`interpolate_latent`] evaluates the resulting piecewise-linear latent
//! trajectory at unseen times, extrapolating (flagged) outside the anchor
//! range. [`generate_snapshot`] assembles core + interpolated latent and
//! samples the circuit.

use serde::{Deserialize, Serialize};

use crate::bits::param_checksum;
use crate::datasets::{empirical_pmf, BitDataset};
use crate::error::{Error, Result};
use crate::iqp::{self, IqpCircuit};
use crate::mmd::{self, KernelSpec};
use crate::optim::{Adam, Spsa};
use crate::spectrum::{parity_expectations, qcli_exact};
use crate::Scalar;

/// Optimizer selection for a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptMethod {
    Adam,
    Spsa,
}

/// One training run's optimizer settings.
///
/// `batch_samples = 0` evaluates the exact dense loss (deterministic,
/// Adam-compatible); a positive value switches SPSA to the sampled raw-MMD
/// estimate with that many model samples (and at most that many data
/// samples) per evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: OptMethod,
    pub steps: usize,
    pub learning_rate: f64,
    /// SPSA perturbation scale `c`.
    pub spsa_perturbation: f64,
    /// SPSA stability constant `A` in the gain schedule.
    pub spsa_stability: f64,
    pub seed: u64,
    pub batch_samples: usize,
}

impl OptimizerConfig {
    /// Adam on the exact loss (standard moments beta1 = 0.9, beta2 = 0.999,
    /// eps = 1e-8); the sweep presets run this at learning rate 1e-4.
    pub fn adam(steps: usize, learning_rate: f64, seed: u64) -> Self {
        OptimizerConfig {
            method: OptMethod::Adam,
            steps,
            learning_rate,
            spsa_perturbation: 0.1,
            spsa_stability: 10.0,
            seed,
            batch_samples: 0,
        }
    }

    pub fn spsa(steps: usize, gain: f64, perturbation: f64, seed: u64) -> Self {
        OptimizerConfig {
            method: OptMethod::Spsa,
            steps,
            learning_rate: gain,
            spsa_perturbation: perturbation,
            spsa_stability: (steps as f64 * 0.1).max(1.0),
            seed,
            batch_samples: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.method == OptMethod::Spsa && !(self.spsa_perturbation > 0.0) {
            return Err(Error::Config("SPSA perturbation must be positive".into()));
        }
        if self.method == OptMethod::Adam && self.batch_samples > 0 {
            return Err(Error::Config(
                "the sampled loss is not differentiable; use SPSA for batch_samples > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Latent/core split of a canonical circuit's parameter indices: the latent
/// block is the first `d_lat` positions in canonical generator order, so it
/// is dominated by the low-order generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamPartition {
    pub latent: Vec<usize>,
    pub core: Vec<usize>,
}

impl ParamPartition {
    pub fn leading_latent<T: Scalar>(circuit: &IqpCircuit<T>, d_lat: usize) -> Result<Self> {
        if !circuit.is_canonical() {
            return Err(Error::Config(
                "latent partition is defined on the canonical generator order".into(),
            ));
        }
        let total = circuit.gate_count();
        if d_lat == 0 || d_lat > total {
            return Err(Error::Config(format!(
                "latent dimension must be in 1..={total}, got {d_lat}"
            )));
        }
        Ok(ParamPartition {
            latent: (0..d_lat).collect(),
            core: (d_lat..total).collect(),
        })
    }

    pub fn d_lat(&self) -> usize {
        self.latent.len()
    }
}

/// One training-step record; the JSON-lines run-log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qcli: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cci: Option<f64>,
    /// FNV-1a over the parameter vector bits at this step.
    pub param_checksum: u64,
}

fn frozen_mask(dim: usize, frozen: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; dim];
    for &i in frozen {
        if i >= dim {
            return Err(Error::Config(format!(
                "frozen index {i} out of range for {dim} parameters"
            )));
        }
        mask[i] = true;
    }
    Ok(mask)
}

fn ensure_finite<T: Scalar>(loss: T, step: usize, params: &[T]) -> Result<f64> {
    let v = loss.to_f64().unwrap_or(f64::NAN);
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            param_checksum: param_checksum(params),
        });
    }
    Ok(v)
}

/// Derives a decorrelated stream seed for sub-draws of a run.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ index.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Minimizes the MMD loss of a circuit against a dataset. `frozen` names
/// parameter indices (in the circuit's generator order) that must not move.
/// Returns the trained circuit and the per-step loss history (entry 0 is
/// the initial loss, one entry after every step).
pub fn train_mmd<T: Scalar>(
    circuit: &IqpCircuit<T>,
    data: &BitDataset,
    kernel: &KernelSpec<T>,
    opt: &OptimizerConfig,
    frozen: &[usize],
) -> Result<(IqpCircuit<T>, Vec<StepRecord>)> {
    opt.validate()?;
    let n = circuit.n();
    if data.n() != n {
        return Err(Error::WidthMismatch {
            left: n,
            right: data.n(),
        });
    }
    let coeffs = mmd::pauli_coefficients(n, kernel.sigma)?;
    let data_exp = parity_expectations(&empirical_pmf::<T>(data))?;
    let mask = frozen_mask(circuit.gate_count(), frozen)?;

    let mut c = circuit.clone();
    let mut history = Vec::with_capacity(opt.steps + 1);
    let record = |step: usize, loss: f64, thetas: &[T]| StepRecord {
        step,
        loss,
        qcli: None,
        cci: None,
        param_checksum: param_checksum(thetas),
    };

    match opt.method {
        OptMethod::Adam => {
            let mut thetas = c.thetas();
            let mut adam = Adam::new(thetas.len(), T::from_f64_const(opt.learning_rate));
            let loss0 = mmd::mmd_loss_circuit(&c, &data_exp, &coeffs)?;
            history.push(record(0, ensure_finite(loss0, 0, &thetas)?, &thetas));
            for step in 1..=opt.steps {
                let grad = mmd::mmd_gradient(&c, &data_exp, &coeffs)?;
                adam.step(&mut thetas, &grad, &mask);
                c.set_thetas(&thetas)?;
                let loss = mmd::mmd_loss_circuit(&c, &data_exp, &coeffs)?;
                history.push(record(step, ensure_finite(loss, step, &thetas)?, &thetas));
            }
        }
        OptMethod::Spsa => {
            let mut thetas = c.thetas();
            let mut spsa = Spsa::new(
                T::from_f64_const(opt.learning_rate),
                T::from_f64_const(opt.spsa_perturbation),
                T::from_f64_const(opt.spsa_stability),
                opt.seed,
            );
            let sampled = opt.batch_samples > 0;
            let data_batch = if sampled {
                Some(subsample(data, opt.batch_samples, derive_seed(opt.seed, 1, 0)))
            } else {
                None
            };
            let mut eval_index = 0u64;
            let template = c.clone();
            let mut objective = |params: &[T]| -> T {
                let mut probe = template.clone();
                probe.set_thetas(params).expect("shape preserved");
                if let Some(batch) = &data_batch {
                    eval_index += 1;
                    let shots = iqp::sample(
                        &probe,
                        opt.batch_samples,
                        derive_seed(opt.seed, 2, eval_index),
                    )
                    .expect("sampling within simulation cap");
                    mmd::mmd_raw(&shots, batch, kernel).expect("widths match")
                } else {
                    mmd::mmd_loss_circuit(&probe, &data_exp, &coeffs).expect("dense loss")
                }
            };
            let loss0 = objective(&thetas);
            history.push(record(0, ensure_finite(loss0, 0, &thetas)?, &thetas));
            for step in 1..=opt.steps {
                let estimate = spsa.step(&mut thetas, &mask, &mut objective);
                history.push(record(step, ensure_finite(estimate, step, &thetas)?, &thetas));
            }
            c.set_thetas(&thetas)?;
        }
    }
    Ok((c, history))
}

fn subsample(d: &BitDataset, max: usize, seed: u64) -> BitDataset {
    if d.len() <= max {
        return d.clone();
    }
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut rng);
    order.truncate(max);
    let wps = d.words_per_sample();
    let mut words = Vec::with_capacity(max * wps);
    for i in order {
        words.extend_from_slice(d.sample(i));
    }
    BitDataset::from_words(d.n(), words, max).expect("subsample invariants")
}

/// SPSA ascent of the spectral indicator of freshly sampled data. The
/// objective closure sees only that indicator; the beyond-pairwise
/// indicator is computed outside the update rule, purely as a trajectory
/// diagnostic. Returns the final circuit and the logged trajectory (the
/// initial point plus one entry per step; `loss` is the negated objective).
pub fn maximize_qcli<T: Scalar>(
    circuit: &IqpCircuit<T>,
    opt: &OptimizerConfig,
    shots_per_eval: usize,
) -> Result<(IqpCircuit<T>, Vec<StepRecord>)> {
    if opt.method != OptMethod::Spsa {
        return Err(Error::Config(
            "the sampled spectral objective is not differentiable; use SPSA".into(),
        ));
    }
    opt.validate()?;
    if shots_per_eval == 0 {
        return Err(Error::Config("shots per evaluation must be at least 1".into()));
    }
    let mut c = circuit.clone();
    let mut thetas = c.thetas();
    let mask = vec![false; thetas.len()];
    let mut spsa = Spsa::new(
        T::from_f64_const(opt.learning_rate),
        T::from_f64_const(opt.spsa_perturbation),
        T::from_f64_const(opt.spsa_stability),
        opt.seed,
    );

    let template = c.clone();
    let qcli_of = |params: &[T], seed: u64| -> Result<f64> {
        let mut probe = template.clone();
        probe.set_thetas(params)?;
        let shots = iqp::sample(&probe, shots_per_eval, seed)?;
        let v: T = qcli_exact(&shots)?;
        Ok(v.to_f64().unwrap_or(f64::NAN))
    };
    let log_point = |params: &[T], step: usize| -> Result<StepRecord> {
        let mut probe = template.clone();
        probe.set_thetas(params)?;
        let shots = iqp::sample(&probe, shots_per_eval, derive_seed(opt.seed, 7, step as u64))?;
        let qcli: T = qcli_exact(&shots)?;
        let report = crate::cci::cci::<T>(&shots)?;
        Ok(StepRecord {
            step,
            loss: -qcli.to_f64().unwrap_or(f64::NAN),
            qcli: Some(qcli.to_f64().unwrap_or(f64::NAN)),
            cci: Some(report.cci.to_f64().unwrap_or(f64::NAN)),
            param_checksum: param_checksum(params),
        })
    };

    let mut history = Vec::with_capacity(opt.steps + 1);
    history.push(log_point(&thetas, 0)?);
    let mut eval_counter = 0u64;
    for step in 1..=opt.steps {
        let mut objective = |params: &[T]| -> T {
            eval_counter += 1;
            let seed = derive_seed(opt.seed, 3, eval_counter);
            // Maximization: SPSA minimizes the negated indicator.
            let q = qcli_of(params, seed).unwrap_or(f64::NAN);
            T::from_f64_const(-q)
        };
        spsa.step(&mut thetas, &mask, &mut objective);
        let rec = log_point(&thetas, step)?;
        if !rec.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                param_checksum: param_checksum(&thetas),
            });
        }
        history.push(rec);
    }
    c.set_thetas(&thetas)?;
    Ok((c, history))
}

/// A frozen-core circuit plus the ordered latent anchors `(t, theta_lat)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTrajectory<T> {
    /// Circuit structure (masks, canonical order); its angles hold the
    /// assembled parameters of the first anchor for reference.
    pub template: IqpCircuit<T>,
    /// Frozen core parameter vector (positions `d_lat..` of the canonical
    /// order).
    pub core: Vec<T>,
    pub d_lat: usize,
    /// Strictly time-ordered latent anchors.
    pub anchors: Vec<(f64, Vec<T>)>,
}

/// Latent vector at an evaluation time, with the extrapolation flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedLatent<T> {
    pub theta: Vec<T>,
    pub extrapolated: bool,
}

impl<T: Scalar> LatentTrajectory<T> {
    /// Full canonical parameter vector for a given latent block.
    pub fn assemble(&self, latent: &[T]) -> Result<Vec<T>> {
        if latent.len() != self.d_lat {
            return Err(Error::Shape(format!(
                "latent block must have {} entries, got {}",
                self.d_lat,
                latent.len()
            )));
        }
        let mut thetas = Vec::with_capacity(self.d_lat + self.core.len());
        thetas.extend_from_slice(latent);
        thetas.extend_from_slice(&self.core);
        Ok(thetas)
    }

    /// Circuit with core + the given latent block installed.
    pub fn circuit_at(&self, latent: &[T]) -> Result<IqpCircuit<T>> {
        let mut c = self.template.clone();
        c.set_thetas(&self.assemble(latent)?)?;
        Ok(c)
    }
}

/// Result of the first-snapshot fit: the trajectory seeded with its first
/// anchor, plus the training history.
pub struct CoreFit<T> {
    pub trajectory: LatentTrajectory<T>,
    pub history: Vec<StepRecord>,
}

/// Fits only the core block against the first snapshot; the latent block
/// keeps its (random-init) values from the template and becomes the anchor
/// at `t1`.
pub fn fit_core<T: Scalar>(
    template: &IqpCircuit<T>,
    data_t1: &BitDataset,
    partition: &ParamPartition,
    kernel: &KernelSpec<T>,
    opt: &OptimizerConfig,
    t1: f64,
) -> Result<CoreFit<T>> {
    if partition.d_lat() + partition.core.len() != template.gate_count() {
        return Err(Error::Config(
            "partition does not cover the template's parameters".into(),
        ));
    }
    let (trained, history) = train_mmd(template, data_t1, kernel, opt, &partition.latent)?;
    let thetas = trained.thetas();
    let d_lat = partition.d_lat();
    let latent_init: Vec<T> = thetas[..d_lat].to_vec();
    let core: Vec<T> = thetas[d_lat..].to_vec();
    Ok(CoreFit {
        trajectory: LatentTrajectory {
            template: trained,
            core,
            d_lat,
            anchors: vec![(t1, latent_init)],
        },
        history,
    })
}

/// Adapts only the latent block to a new snapshot at time `t`, warm-started
/// from the last anchor, and appends the result. The core is untouched.
pub fn adapt_latent<T: Scalar>(
    traj: &LatentTrajectory<T>,
    t: f64,
    data_t: &BitDataset,
    kernel: &KernelSpec<T>,
    opt: &OptimizerConfig,
) -> Result<(LatentTrajectory<T>, Vec<StepRecord>)> {
    let last = traj
        .anchors
        .last()
        .ok_or(Error::InsufficientAnchors { need: 1, have: 0 })?;
    if t <= last.0 {
        return Err(Error::Config(format!(
            "anchor times must increase: {t} after {}",
            last.0
        )));
    }
    let start = traj.circuit_at(&last.1)?;
    let frozen: Vec<usize> = (traj.d_lat..start.gate_count()).collect();
    let (trained, history) = train_mmd(&start, data_t, kernel, opt, &frozen)?;
    let thetas = trained.thetas();
    let mut out = traj.clone();
    out.anchors.push((t, thetas[..traj.d_lat].to_vec()));
    Ok((out, history))
}

/// Piecewise-linear evaluation of the latent trajectory at time `tau`.
/// Outside the anchor range the nearest segment extrapolates linearly and
/// the result is flagged.
pub fn interpolate_latent<T: Scalar>(
    traj: &LatentTrajectory<T>,
    tau: f64,
) -> Result<InterpolatedLatent<T>> {
    let anchors = &traj.anchors;
    if anchors.len() < 2 {
        return Err(Error::InsufficientAnchors {
            need: 2,
            have: anchors.len(),
        });
    }
    let first_t = anchors[0].0;
    let last_t = anchors[anchors.len() - 1].0;
    let extrapolated = tau < first_t || tau > last_t;
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
    let theta = v0
        .iter()
        .zip(v1.iter())
        .map(|(&a, &b)| (T::one() - alpha) * a + alpha * b)
        .collect();
    Ok(InterpolatedLatent {
        theta,
        extrapolated,
    })
}

/// Samples the generator at time `tau`: assembles core + interpolated
/// latent and draws `shots` outcomes.
pub fn generate_snapshot<T: Scalar>(
    traj: &LatentTrajectory<T>,
    tau: f64,
    shots: usize,
    seed: u64,
) -> Result<BitDataset> {
    let latent = interpolate_latent(traj, tau)?;
    let circuit = traj.circuit_at(&latent.theta)?;
    iqp::sample(&circuit, shots, seed)
}
