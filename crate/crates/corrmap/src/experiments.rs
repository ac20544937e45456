//! Reproducible study harnesses: the support-mismatch sweep, the
//! indicator-coupling study and the temporal latent-adaptation study.
//!
//! Every study is a pure function of its config: all randomness flows from
//! the config seeds through deterministic per-job derivations, so any row
//! of any output can be regenerated in isolation. Desk presets keep CI
//! runtimes small; the full-scale presets document the reference protocol
//! and are marked long-running.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{fnv1a64, subsets_up_to_order, words_for};
use crate::datasets::{empirical_pmf, BitDataset};
use crate::error::{Error, Result};
use crate::iqp::{self, IqpCircuit};
use crate::mmd::{self, KernelSpec};
use crate::rbm::{self, RbmModel};
use crate::spectrum::qcli_exact;
use crate::stats::{spearman, spearman_perm_pvalue};
use crate::train::{
    self, derive_seed, maximize_qcli, OptimizerConfig, ParamPartition, StepRecord,
};
use crate::Real;

/// Exact MMD between two datasets of equal width via the dense parity
/// identity (algebraically equal to the raw V-statistic).
pub fn exact_mmd_between(a: &BitDataset, b: &BitDataset, sigma: Real) -> Result<Real> {
    let coeffs = mmd::pauli_coefficients(a.n(), sigma)?;
    let ea = crate::spectrum::parity_expectations(&empirical_pmf::<Real>(a))?;
    let eb = crate::spectrum::parity_expectations(&empirical_pmf::<Real>(b))?;
    mmd::mmd_pauli(&ea, &eb, &coeffs)
}

fn config_hash<C: Serialize>(cfg: &C) -> u64 {
    fnv1a64(serde_json::to_vec(cfg).expect("config serializes"))
}

// ---------------------------------------------------------------------------
// Support-mismatch sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub gate_counts: Vec<usize>,
    pub locality: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub gate_counts: Vec<usize>,
    pub locality: usize,
}

/// Sweep configuration. Targets are produced by boosting random generator
/// circuits toward high spectral-indicator values with SPSA and snapshotting
/// the boost trajectory at the configured steps; snapshots whose sampled
/// indicator falls below the first filter threshold are dropped, and each
/// filter bucket keeps at most `per_bucket` targets per generator size so
/// the indicator axis stays covered.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub generator: GeneratorConfig,
    pub learner: LearnerConfig,
    /// SPSA boost length for generator circuits.
    pub boost_steps: usize,
    /// Shots per boost objective evaluation.
    pub boost_shots: usize,
    pub boost_gain: f64,
    pub boost_perturbation: f64,
    /// Boost steps at which the generator is snapshotted into a target.
    pub snapshot_steps: Vec<usize>,
    /// Ascending indicator bucket edges; targets below the first edge are
    /// dropped.
    pub qcli_filter: Vec<f64>,
    /// Cap per (filter bucket, generator size).
    pub per_bucket: usize,
    /// Bitstrings sampled per target dataset.
    pub target_samples: usize,
    /// Kernel bandwidth for the training loss. Sharp kernels keep the
    /// order-decay of the parity coefficients slow enough that mismatch at
    /// the generator's extra orders is actually visible in the loss.
    pub sigma: f64,
    /// Learner training run (the reference protocol is Adam, 5000 steps,
    /// learning rate 1e-4).
    pub train: OptimizerConfig,
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.learner.locality >= self.generator.locality {
            return Err(Error::Config(
                "learner locality must be strictly below generator locality".into(),
            ));
        }
        if self.qcli_filter.is_empty() {
            return Err(Error::Config("at least one filter threshold required".into()));
        }
        if self.snapshot_steps.is_empty() {
            return Err(Error::Config("at least one snapshot step required".into()));
        }
        Ok(())
    }
}

/// One completed sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub generator_gates: usize,
    pub boost_step: usize,
    pub target_qcli: f64,
    pub learner_gates: usize,
    pub achieved_mmd: f64,
    pub config_hash: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Human-readable descriptions of jobs that failed; the sweep continues
    /// past them.
    pub failures: Vec<String>,
    pub config_hash: u64,
}

struct Target {
    seed: u64,
    generator_gates: usize,
    boost_step: usize,
    qcli: f64,
    data: BitDataset,
}

fn build_targets(cfg: &SweepConfig, failures: &mut Vec<String>) -> Vec<Target> {
    let n = cfg.generator.n;
    let jobs: Vec<(usize, u64)> = cfg
        .generator
        .gate_counts
        .iter()
        .flat_map(|&g| cfg.seeds.iter().map(move |&s| (g, s)))
        .collect();

    let results: Vec<std::result::Result<Vec<Target>, String>> = jobs
        .par_iter()
        .map(|&(gates, seed)| {
            let available = subsets_up_to_order(n, cfg.generator.locality) as usize;
            let effective = gates.min(available);
            let mut out = Vec::new();
            for &step in &cfg.snapshot_steps {
                let circuit: IqpCircuit<Real> =
                    iqp::random_circuit(n, effective, cfg.generator.locality, seed)
                        .map_err(|e| format!("generator g={gates} seed={seed}: {e}"))?;
                let boosted = if step == 0 {
                    circuit
                } else {
                    let opt = OptimizerConfig {
                        spsa_stability: (cfg.boost_steps as f64 * 0.1).max(1.0),
                        ..OptimizerConfig::spsa(step, cfg.boost_gain, cfg.boost_perturbation, seed)
                    };
                    maximize_qcli(&circuit, &opt, cfg.boost_shots)
                        .map_err(|e| format!("boost g={gates} seed={seed} step={step}: {e}"))?
                        .0
                };
                let data = iqp::sample(
                    &boosted,
                    cfg.target_samples,
                    derive_seed(seed, 11, step as u64),
                )
                .map_err(|e| format!("target sampling g={gates} seed={seed}: {e}"))?;
                let qcli: Real = qcli_exact(&data)
                    .map_err(|e| format!("target indicator g={gates} seed={seed}: {e}"))?;
                out.push(Target {
                    seed,
                    generator_gates: effective,
                    boost_step: step,
                    qcli,
                    data,
                });
            }
            Ok(out)
        })
        .collect();

    let mut targets = Vec::new();
    for r in results {
        match r {
            Ok(batch) => targets.extend(batch),
            Err(msg) => failures.push(msg),
        }
    }

    // Filter: drop sub-threshold targets, cap each (bucket, generator size).
    let mut kept = Vec::new();
    let mut bucket_counts: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    targets.sort_by(|a, b| {
        (a.seed, a.generator_gates, a.boost_step).cmp(&(b.seed, b.generator_gates, b.boost_step))
    });
    for t in targets {
        if t.qcli < cfg.qcli_filter[0] {
            continue;
        }
        let bucket = cfg
            .qcli_filter
            .iter()
            .rposition(|&edge| t.qcli >= edge)
            .unwrap_or(0);
        let count = bucket_counts.entry((bucket, t.generator_gates)).or_insert(0);
        if *count >= cfg.per_bucket {
            continue;
        }
        *count += 1;
        kept.push(t);
    }
    kept
}

/// Runs the full sweep: builds filtered targets, then fits every learner
/// size to every target and records the exact final loss.
pub fn run_mismatch_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    let n = cfg.generator.n;
    let mut failures = Vec::new();
    let targets = build_targets(cfg, &mut failures);
    if targets.is_empty() {
        return Err(Error::InsufficientData(
            "no target survived the indicator filter".into(),
        ));
    }

    let kernel: KernelSpec<Real> = KernelSpec::new(cfg.sigma, mmd::LossForm::Pauli)?;
    let jobs: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|t| (0..cfg.learner.gate_counts.len()).map(move |l| (t, l)))
        .collect();
    let results: Vec<std::result::Result<SweepRow, String>> = jobs
        .par_iter()
        .map(|&(ti, li)| {
            let target = &targets[ti];
            let requested = cfg.learner.gate_counts[li];
            let available = subsets_up_to_order(n, cfg.learner.locality) as usize;
            let effective = requested.min(available);
            // Seed from the row's identity, not its position, so any single
            // row reproduces bit-exactly under a restricted config.
            let row_id = fnv1a64(
                (target.generator_gates as u64)
                    .to_le_bytes()
                    .into_iter()
                    .chain((target.boost_step as u64).to_le_bytes())
                    .chain((requested as u64).to_le_bytes()),
            );
            let learner_seed = derive_seed(target.seed, 13, row_id);
            let learner: IqpCircuit<Real> =
                iqp::random_circuit(n, effective, cfg.learner.locality, learner_seed)
                    .map_err(|e| format!("learner target={ti} size={requested}: {e}"))?;
            let opt = OptimizerConfig {
                seed: learner_seed,
                ..cfg.train
            };
            let (_, history) = train::train_mmd(&learner, &target.data, &kernel, &opt, &[])
                .map_err(|e| format!("training target={ti} size={requested}: {e}"))?;
            Ok(SweepRow {
                seed: target.seed,
                generator_gates: target.generator_gates,
                boost_step: target.boost_step,
                target_qcli: target.qcli,
                learner_gates: effective,
                achieved_mmd: history.last().expect("history nonempty").loss,
                config_hash: hash,
            })
        })
        .collect();

    let mut rows = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(msg) => failures.push(msg),
        }
    }
    Ok(SweepOutput {
        rows,
        failures,
        config_hash: hash,
    })
}

/// Mean achieved loss in the bottom and top indicator terciles for one
/// learner size; the summary statistic the sweep's trend is judged on.
pub fn tercile_means(rows: &[SweepRow], learner_gates: usize) -> Option<(f64, f64)> {
    let mut subset: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.learner_gates == learner_gates)
        .collect();
    if subset.len() < 3 {
        return None;
    }
    subset.sort_by(|a, b| a.target_qcli.partial_cmp(&b.target_qcli).unwrap());
    let third = subset.len() / 3;
    let mean = |rows: &[&SweepRow]| {
        rows.iter().map(|r| r.achieved_mmd).sum::<f64>() / rows.len() as f64
    };
    Some((
        mean(&subset[..third.max(1)]),
        mean(&subset[subset.len() - third.max(1)..]),
    ))
}

/// Desk-scale sweep preset: width 10, locality-4 generators vs locality-2
/// learners, two learner sizes, enough snapshots for 40+ surviving points.
pub fn sweep_desk() -> SweepConfig {
    SweepConfig {
        generator: GeneratorConfig {
            n: 10,
            gate_counts: vec![80, 160, 240],
            locality: 4,
        },
        learner: LearnerConfig {
            gate_counts: vec![30, 60],
            locality: 2,
        },
        boost_steps: 600,
        boost_shots: 2_000,
        boost_gain: 0.3,
        boost_perturbation: 0.15,
        snapshot_steps: vec![0, 80, 250, 600],
        qcli_filter: vec![0.02, 0.24, 0.30, 0.38],
        per_bucket: 8,
        target_samples: 10_000,
        sigma: 0.5,
        train: OptimizerConfig::adam(1_500, 2e-3, 0),
        seeds: vec![1, 2, 3, 4, 5, 6],
    }
}

/// Reference-scale sweep preset (long-running): width 16, the seven
/// generator sizes, three learner sizes, Adam 5000 steps at 1e-4.
pub fn sweep_full() -> SweepConfig {
    SweepConfig {
        generator: GeneratorConfig {
            n: 16,
            gate_counts: vec![140, 280, 420, 560, 700, 840, 1050],
            locality: 4,
        },
        learner: LearnerConfig {
            gate_counts: vec![50, 100, 150],
            locality: 2,
        },
        boost_steps: 400,
        boost_shots: 10_000,
        boost_gain: 0.2,
        boost_perturbation: 0.15,
        snapshot_steps: vec![0, 50, 120, 250, 400],
        qcli_filter: vec![0.0, 0.1, 0.2, 0.35, 0.5],
        per_bucket: 8,
        target_samples: 10_000,
        sigma: std::f64::consts::FRAC_1_SQRT_2,
        train: OptimizerConfig::adam(5_000, 1e-4, 0),
        seeds: (1..=10).collect(),
    }
}

// ---------------------------------------------------------------------------
// Indicator-coupling study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub n: usize,
    /// Requested gate count; capped at the number of distinct subsets the
    /// locality admits.
    pub gates: usize,
    pub locality: usize,
    pub runs: usize,
    pub steps_per_run: usize,
    pub shots_per_eval: usize,
    pub spsa_gain: f64,
    pub spsa_perturbation: f64,
    pub seed: u64,
    /// Permutations for the correlation p-value.
    pub permutations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingPoint {
    pub run: usize,
    pub step: usize,
    pub qcli: f64,
    pub cci: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingOutput {
    pub points: Vec<CouplingPoint>,
    pub spearman: f64,
    pub p_value: f64,
    pub config_hash: u64,
}

/// Ascends the spectral indicator with SPSA across independent runs and
/// pools the logged `(qcli, cci)` trajectory points. The beyond-pairwise
/// indicator never enters any objective.
pub fn run_coupling_study(cfg: &CouplingConfig) -> Result<CouplingOutput> {
    if cfg.runs == 0 {
        return Err(Error::Config("at least one run required".into()));
    }
    let hash = config_hash(cfg);
    let available = subsets_up_to_order(cfg.n, cfg.locality) as usize;
    let effective = cfg.gates.min(available);
    let runs: Vec<usize> = (0..cfg.runs).collect();
    let histories: Vec<Result<Vec<StepRecord>>> = runs
        .par_iter()
        .map(|&r| {
            let run_seed = derive_seed(cfg.seed, 17, r as u64);
            let circuit: IqpCircuit<Real> =
                iqp::random_circuit(cfg.n, effective, cfg.locality, run_seed)?;
            let opt = OptimizerConfig {
                spsa_stability: (cfg.steps_per_run as f64 * 0.1).max(1.0),
                ..OptimizerConfig::spsa(
                    cfg.steps_per_run,
                    cfg.spsa_gain,
                    cfg.spsa_perturbation,
                    run_seed,
                )
            };
            Ok(maximize_qcli(&circuit, &opt, cfg.shots_per_eval)?.1)
        })
        .collect();

    let mut points = Vec::new();
    for (r, h) in histories.into_iter().enumerate() {
        for rec in h? {
            points.push(CouplingPoint {
                run: r,
                step: rec.step,
                qcli: rec.qcli.expect("ascent logs the indicator"),
                cci: rec.cci.expect("ascent logs the diagnostic"),
            });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.qcli).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.cci).collect();
    let rho = spearman(&xs, &ys);
    let p_value = spearman_perm_pvalue(&xs, &ys, cfg.permutations, derive_seed(cfg.seed, 19, 0));
    Ok(CouplingOutput {
        points,
        spearman: rho,
        p_value,
        config_hash: hash,
    })
}

/// Desk preset: width 8, saturated locality-2 circuit, 2000 logged points.
pub fn coupling_desk() -> CouplingConfig {
    CouplingConfig {
        n: 8,
        gates: 150,
        locality: 2,
        runs: 10,
        steps_per_run: 199,
        shots_per_eval: 2_000,
        spsa_gain: 0.15,
        spsa_perturbation: 0.12,
        seed: 7,
        permutations: 9_999,
    }
}

/// Reference-scale preset (long-running): widths are run separately; this
/// is the width-16 instance with 20000 logged points.
pub fn coupling_full(n: usize) -> CouplingConfig {
    CouplingConfig {
        n,
        gates: 150,
        locality: 2,
        runs: 40,
        steps_per_run: 499,
        shots_per_eval: 10_000,
        spsa_gain: 0.15,
        spsa_perturbation: 0.12,
        seed: 7,
        permutations: 9_999,
    }
}

// ---------------------------------------------------------------------------
// Temporal latent-adaptation study
// ---------------------------------------------------------------------------

/// Synthetic drifting source: a two-component mixture of product
/// distributions whose mixing weight moves linearly in time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftConfig {
    /// Per-bit one-probabilities of component A.
    pub bias_a: Vec<f64>,
    /// Per-bit one-probabilities of component B.
    pub bias_b: Vec<f64>,
    /// Mixture weight of component A at `t_min` and `t_max`.
    pub w_start: f64,
    pub w_end: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl DriftConfig {
    pub fn weight_at(&self, t: f64) -> f64 {
        let alpha = ((t - self.t_min) / (self.t_max - self.t_min)).clamp(0.0, 1.0);
        self.w_start + (self.w_end - self.w_start) * alpha
    }
}

/// Draws `m` samples of the drifting mixture at time `t`.
pub fn synth_drifting_dataset(cfg: &DriftConfig, t: f64, m: usize, seed: u64) -> BitDataset {
    use rand::{Rng, SeedableRng};
    let n = cfg.bias_a.len();
    assert_eq!(n, cfg.bias_b.len());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = cfg.weight_at(t);
    let wps = words_for(n);
    let mut words = vec![0u64; wps * m];
    for row in words.chunks_exact_mut(wps) {
        let biases = if rng.random::<f64>() < w {
            &cfg.bias_a
        } else {
            &cfg.bias_b
        };
        for (b, &p) in biases.iter().enumerate() {
            if rng.random::<f64>() < p {
                row[b / 64] |= 1u64 << (b % 64);
            }
        }
    }
    BitDataset::from_words(n, words, m).expect("generator invariants")
}

/// Matched baseline settings for the bitstring-domain energy model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbmBaselineConfig {
    pub n_hidden: usize,
    pub epochs_fit: usize,
    pub epochs_adapt: usize,
    pub learning_rate: f64,
    pub cd_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalConfig {
    pub n: usize,
    pub gates: usize,
    pub locality: usize,
    pub d_lat: usize,
    pub anchor_times: Vec<f64>,
    pub samples_per_anchor: usize,
    /// Held-out evaluation times (never trained on).
    pub heldout_times: Vec<f64>,
    pub heldout_samples: usize,
    /// Shots per synthesis call.
    pub shots: usize,
    pub fit_steps: usize,
    pub adapt_steps: usize,
    pub learning_rate: f64,
    pub drift: DriftConfig,
    pub rbm: RbmBaselineConfig,
    pub seed: u64,
}

/// Per-model rows share one schema: exact MMD to the held-out data at each
/// evaluation time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelTemporalReport {
    pub model: String,
    pub rows: Vec<TauRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub tau: f64,
    pub mmd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalStudyOutput {
    /// Interpolated-latent generator.
    pub interpolated: ModelTemporalReport,
    /// Ablation: nearest anchor's latent, no interpolation.
    pub nearest_anchor: ModelTemporalReport,
    /// Matched energy-model baseline with the identical latent mechanism.
    pub rbm: ModelTemporalReport,
    /// Held-out times where interpolation beat the nearest-anchor ablation.
    pub interp_wins: usize,
    pub config_hash: u64,
}

fn nearest_anchor_time(anchors: &[f64], tau: f64) -> f64 {
    let mut best = anchors[0];
    for &t in anchors {
        let closer = (tau - t).abs() < (tau - best).abs();
        if closer {
            best = t;
        }
    }
    best
}

/// Runs the temporal protocol end to end on the synthetic drifting source:
/// core fit at the first anchor, latent-only adaptation across the rest,
/// interpolation to held-out times, nearest-anchor ablation and the matched
/// baseline.
pub fn run_temporal_study(cfg: &TemporalConfig) -> Result<TemporalStudyOutput> {
    if cfg.anchor_times.len() < 2 {
        return Err(Error::InsufficientAnchors {
            need: 2,
            have: cfg.anchor_times.len(),
        });
    }
    let hash = config_hash(cfg);
    let n = cfg.n;
    let kernel: KernelSpec<Real> = KernelSpec::default_for_width(n);
    let sigma = kernel.sigma;

    // Anchor training datasets.
    let anchor_data: Vec<BitDataset> = cfg
        .anchor_times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            synth_drifting_dataset(
                &cfg.drift,
                t,
                cfg.samples_per_anchor,
                derive_seed(cfg.seed, 23, i as u64),
            )
        })
        .collect();

    // Circuit protocol: core fit at the first anchor, then latent-only.
    let template: IqpCircuit<Real> =
        iqp::random_circuit(n, cfg.gates, cfg.locality, derive_seed(cfg.seed, 29, 0))?;
    let partition = ParamPartition::leading_latent(&template, cfg.d_lat)?;
    let fit_opt = OptimizerConfig::adam(cfg.fit_steps, cfg.learning_rate, derive_seed(cfg.seed, 31, 0));
    let fit = train::fit_core(
        &template,
        &anchor_data[0],
        &partition,
        &kernel,
        &fit_opt,
        cfg.anchor_times[0],
    )?;
    let mut traj = fit.trajectory;
    for (i, (&t, data)) in cfg.anchor_times.iter().zip(anchor_data.iter()).enumerate().skip(1) {
        let adapt_opt = OptimizerConfig::adam(
            cfg.adapt_steps,
            cfg.learning_rate,
            derive_seed(cfg.seed, 37, i as u64),
        );
        let (next, _) = train::adapt_latent(&traj, t, data, &kernel, &adapt_opt)?;
        traj = next;
    }

    // Matched baseline: full fit at the first anchor, latent-only
    // (first d_lat flat indices) adaptation afterwards.
    let rbm_frozen_core: Vec<usize> = {
        let probe = RbmModel::<Real>::init(n, cfg.rbm.n_hidden, 0);
        (cfg.d_lat..probe.param_len()).collect()
    };
    let (rbm_t1, _) = rbm::rbm_train::<Real>(
        &anchor_data[0],
        cfg.rbm.n_hidden,
        cfg.rbm.epochs_fit,
        cfg.rbm.learning_rate,
        cfg.rbm.cd_steps,
        derive_seed(cfg.seed, 41, 0),
        &[],
    )?;
    let mut rbm_anchors: Vec<(f64, Vec<Real>)> =
        vec![(cfg.anchor_times[0], rbm_t1.flat()[..cfg.d_lat].to_vec())];
    let mut rbm_current = rbm_t1.clone();
    for (i, (&t, data)) in cfg.anchor_times.iter().zip(anchor_data.iter()).enumerate().skip(1) {
        let (next, _) = rbm::rbm_train_from(
            rbm_current,
            data,
            cfg.rbm.epochs_adapt,
            cfg.rbm.learning_rate,
            cfg.rbm.cd_steps,
            derive_seed(cfg.seed, 43, i as u64),
            &rbm_frozen_core,
        )?;
        rbm_anchors.push((t, next.flat()[..cfg.d_lat].to_vec()));
        rbm_current = next;
    }

    // Held-out evaluation.
    let mut interp_rows = Vec::new();
    let mut nearest_rows = Vec::new();
    let mut rbm_rows = Vec::new();
    let mut wins = 0usize;
    for (i, &tau) in cfg.heldout_times.iter().enumerate() {
        let heldout = synth_drifting_dataset(
            &cfg.drift,
            tau,
            cfg.heldout_samples,
            derive_seed(cfg.seed, 47, i as u64),
        );

        let generated =
            train::generate_snapshot(&traj, tau, cfg.shots, derive_seed(cfg.seed, 53, i as u64))?;
        let mmd_interp = exact_mmd_between(&generated, &heldout, sigma)?;
        interp_rows.push(TauRow {
            tau,
            mmd: mmd_interp,
        });

        let t_near = nearest_anchor_time(&cfg.anchor_times, tau);
        let near_latent = traj
            .anchors
            .iter()
            .find(|(t, _)| *t == t_near)
            .expect("anchor exists")
            .1
            .clone();
        let near_circuit = traj.circuit_at(&near_latent)?;
        let near_shots =
            iqp::sample(&near_circuit, cfg.shots, derive_seed(cfg.seed, 59, i as u64))?;
        let mmd_near = exact_mmd_between(&near_shots, &heldout, sigma)?;
        nearest_rows.push(TauRow {
            tau,
            mmd: mmd_near,
        });
        if mmd_interp < mmd_near {
            wins += 1;
        }

        let rbm_model =
            rbm::rbm_latent_interpolate(&rbm_anchors, &rbm_current, cfg.d_lat, tau)?;
        let rbm_shots = rbm::rbm_sample(
            &rbm_model,
            cfg.shots,
            cfg.rbm.burn_in,
            cfg.rbm.thin,
            derive_seed(cfg.seed, 61, i as u64),
        )?;
        let mmd_rbm = exact_mmd_between(&rbm_shots, &heldout, sigma)?;
        rbm_rows.push(TauRow { tau, mmd: mmd_rbm });
    }

    Ok(TemporalStudyOutput {
        interpolated: ModelTemporalReport {
            model: "iqp-latent-interpolated".into(),
            rows: interp_rows,
        },
        nearest_anchor: ModelTemporalReport {
            model: "iqp-nearest-anchor".into(),
            rows: nearest_rows,
        },
        rbm: ModelTemporalReport {
            model: "rbm-latent-interpolated".into(),
            rows: rbm_rows,
        },
        interp_wins: wins,
        config_hash: hash,
    })
}

/// Desk temporal preset: width 10, 11 anchors, latent block of 50, held-out
/// midpoints.
pub fn temporal_desk(seed: u64) -> TemporalConfig {
    // Fixed product-component biases: component A leans low-index bits on,
    // component B the complement, so the mixture drift moves real mass.
    let bias_a: Vec<f64> = (0..10)
        .map(|i| if i % 2 == 0 { 0.82 } else { 0.24 })
        .collect();
    let bias_b: Vec<f64> = (0..10)
        .map(|i| if i % 2 == 0 { 0.21 } else { 0.77 })
        .collect();
    TemporalConfig {
        n: 10,
        gates: 120,
        locality: 3,
        d_lat: 50,
        anchor_times: std::iter::once(1.0)
            .chain((1..=10).map(|k| 100.0 * k as f64))
            .collect(),
        samples_per_anchor: 4_000,
        heldout_times: (0..10).map(|k| 50.0 + 100.0 * k as f64).collect(),
        heldout_samples: 4_000,
        shots: 20_000,
        fit_steps: 1_200,
        adapt_steps: 500,
        learning_rate: 5e-3,
        drift: DriftConfig {
            bias_a,
            bias_b,
            w_start: 0.88,
            w_end: 0.12,
            t_min: 1.0,
            t_max: 1000.0,
        },
        rbm: RbmBaselineConfig {
            n_hidden: 48,
            epochs_fit: 40,
            epochs_adapt: 12,
            learning_rate: 0.1,
            cd_steps: 1,
            burn_in: 200,
            thin: 2,
        },
        seed,
    }
}

/// Reference-scale temporal preset (long-running): 18-bit encoding, 11
/// anchors, latent block of 50, the reference training budgets.
pub fn temporal_full(seed: u64) -> TemporalConfig {
    let bias_a: Vec<f64> = (0..18)
        .map(|i| if i % 2 == 0 { 0.84 } else { 0.22 })
        .collect();
    let bias_b: Vec<f64> = (0..18)
        .map(|i| if i % 2 == 0 { 0.19 } else { 0.79 })
        .collect();
    TemporalConfig {
        n: 18,
        gates: 360,
        locality: 3,
        d_lat: 50,
        anchor_times: std::iter::once(1.0)
            .chain((1..=10).map(|k| 100.0 * k as f64))
            .collect(),
        samples_per_anchor: 50_000,
        heldout_times: (0..10).map(|k| 50.0 + 100.0 * k as f64).collect(),
        heldout_samples: 50_000,
        shots: 100_000,
        fit_steps: 30_000,
        adapt_steps: 5_000,
        learning_rate: 1e-4,
        drift: DriftConfig {
            bias_a,
            bias_b,
            w_start: 0.88,
            w_end: 0.12,
            t_min: 1.0,
            t_max: 1000.0,
        },
        rbm: RbmBaselineConfig {
            n_hidden: crate::rbm::default_hidden_units(18),
            epochs_fit: 200,
            epochs_adapt: 40,
            learning_rate: 0.05,
            cd_steps: 1,
            burn_in: 1_000,
            thin: 4,
        },
        seed,
    }
}
