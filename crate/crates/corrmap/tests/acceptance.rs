//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line (visible with `--nocapture`). Tolerances and thresholds
//! are pinned here, in code.
//!
//! Run with: `cargo test -p corrmap --test acceptance`

use corrmap::bits::subsets_up_to_order;
use corrmap::cci::{cci, chow_liu_tree, mutual_info_from_pmf, total_correlation, tree_kl_check};
use corrmap::codec::{decode_bits, decode_index, encode_value};
use corrmap::datasets::{empirical_pmf, even_parity, iid_uniform, BitDataset, EmpiricalPmf};
use corrmap::envelope::{frontier_envelope, scatter_envelopes};
use corrmap::eval::{feature_mmd, pdf_js, FieldSnapshot, RandomConvEncoder, HISTOGRAM_EPSILON};
use corrmap::experiments::{
    coupling_desk, run_coupling_study, run_mismatch_sweep, run_temporal_study, sweep_desk,
    temporal_desk, tercile_means, TauRow,
};
use corrmap::iqp::{exact_distribution, random_circuit, IqpCircuit};
use corrmap::mmd::{
    mmd_gradient, mmd_loss_circuit, mmd_pauli, mmd_raw, pauli_coefficients, KernelSpec, LossForm,
};
use corrmap::spectrum::{
    binomial_baseline, js_divergence, order_spectrum_exact, qcli_exact, qcli_mc, second_order_js,
    tv_distance, OrderSpectrum,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Null threshold for criterion 4: mean + 5 standard deviations of
/// `qcli_exact(iid_uniform(16, 10^4, seed))` over the 100 calibration seeds
/// 10000..10100 (regenerate with the ignored `recalibrate_null_threshold`
/// test below).
const NULL_THRESHOLD_N16_M10K: f64 = 0.071239618624;

fn pass(line: &str) {
    println!("criterion {line}: PASS");
}

#[test]
fn criterion_01_parity_raw_mmd_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for round in 0..100 {
        let n = 2 + (round % 11); // 2..=12
        let sigma = 0.5 + rng.random::<f64>() * 2.0;
        let a = iid_uniform(n, 150 + (round * 13) % 200, rng.random());
        let b = iid_uniform(n, 120 + (round * 7) % 200, rng.random());
        let kernel = KernelSpec::new(sigma, LossForm::Raw).unwrap();
        let raw: f64 = mmd_raw(&a, &b, &kernel).unwrap();
        let coeffs = pauli_coefficients::<f64>(n, sigma).unwrap();
        let ea = corrmap::spectrum::parity_expectations(&empirical_pmf::<f64>(&a)).unwrap();
        let eb = corrmap::spectrum::parity_expectations(&empirical_pmf::<f64>(&b)).unwrap();
        let pauli = mmd_pauli(&ea, &eb, &coeffs).unwrap();
        assert!(
            (raw - pauli).abs() <= 1e-9,
            "round {round}: raw {raw} vs parity {pauli}"
        );
    }
    pass("01 (parity/raw MMD equivalence, 100 pairs, n in 2..=12, |diff| <= 1e-9)");
}

#[test]
fn criterion_02_tree_kl_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for round in 0..50 {
        let n = 2 + (round % 9); // 2..=10
        let len = 1usize << n;
        let mut mass: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        if round % 3 == 0 {
            for m in mass.iter_mut() {
                if *m < 0.4 {
                    *m = 0.0;
                }
            }
        }
        let total: f64 = mass.iter().sum();
        for m in mass.iter_mut() {
            *m /= total;
        }
        let pmf = EmpiricalPmf::from_dense(n, mass).unwrap();
        let tree = chow_liu_tree(&mutual_info_from_pmf(&pmf));
        let (_kl, gap) = tree_kl_check(&pmf, &tree).unwrap();
        assert!(gap <= 1e-9, "round {round}: identity gap {gap}");
    }
    pass("02 (tree KL identity, 50 random pmfs, n <= 10, gap <= 1e-9)");
}

#[test]
fn criterion_03_cci_extremes() {
    // Exact even-parity support: total 1 bit, tree 0 -> indicator 1.
    let parity3 = BitDataset::from_lines(&["000", "011", "101", "110"]).unwrap();
    let report = cci::<f64>(&parity3).unwrap();
    assert!((report.cci - 1.0).abs() <= 1e-9, "parity cci {}", report.cci);

    // All-bits-equal chain: total 2 bits, tree 2 bits -> indicator 0.
    let chain3 = BitDataset::from_lines(&["000", "111"]).unwrap();
    let report = cci::<f64>(&chain3).unwrap();
    assert!(report.cci.abs() <= 1e-9, "chain cci {}", report.cci);
    pass("03 (cci extremes: even parity -> 1, all-equal chain -> 0, +-1e-9)");
}

#[test]
fn criterion_04_null_behavior() {
    let n = 16;
    let m = 10_000;
    let nulls: Vec<f64> = (0..10u64)
        .map(|seed| qcli_exact(&iid_uniform(n, m, seed)).unwrap())
        .collect();
    let mean = nulls.iter().sum::<f64>() / nulls.len() as f64;
    assert!(
        mean < NULL_THRESHOLD_N16_M10K,
        "null mean {mean} vs calibrated threshold {NULL_THRESHOLD_N16_M10K}"
    );
    for seed in 0..10u64 {
        let structured: f64 = qcli_exact(&even_parity(n, m, seed)).unwrap();
        assert!(
            nulls[seed as usize] < structured,
            "seed {seed}: null {} not below structured {structured}",
            nulls[seed as usize]
        );
    }
    pass("04 (sampled null below calibrated threshold and below structured data)");
}

#[test]
fn criterion_05_monte_carlo_fidelity() {
    let n = 14;
    let budget = 20_000;
    for (label, gen) in [
        ("iid", iid_uniform as fn(usize, usize, u64) -> BitDataset),
        ("structured", even_parity as fn(usize, usize, u64) -> BitDataset),
    ] {
        let mut gaps = Vec::new();
        for seed in 0..10u64 {
            let d = gen(n, 10_000, 300 + seed);
            let exact: f64 = qcli_exact(&d).unwrap();
            let est = qcli_mc::<f64>(&d, budget, seed).unwrap();
            gaps.push((est.value - exact).abs());
        }
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!(mean_gap <= 0.02, "{label}: mean gap {mean_gap}");
    }
    pass("05 (Monte-Carlo indicator within 0.02 of exact at n = 14, 10 seeds, both datasets)");
}

#[test]
fn criterion_06_second_order_and_tv_bound() {
    let n = 16;
    let b = binomial_baseline::<f64>(n);
    let b_min = b.fractions().iter().copied().fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for round in 0..100 {
        // Zero-sum perturbation with |delta_k| <= 0.01 * min_k b_k.
        let len = n + 1;
        let mut delta: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mean = delta.iter().sum::<f64>() / len as f64;
        for d in delta.iter_mut() {
            *d -= mean;
        }
        let max = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let scale = 0.01 * b_min / max;
        let m: Vec<f64> = b
            .fractions()
            .iter()
            .zip(delta.iter())
            .map(|(v, d)| v + d * scale)
            .collect();
        let m = OrderSpectrum::new(n, m).unwrap();

        let js = js_divergence(&m, &b).unwrap();
        let quad = second_order_js(&m, &b).unwrap();
        assert!(js > 0.0, "round {round}: degenerate perturbation");
        let rel = (js - quad).abs() / js;
        assert!(rel <= 0.05, "round {round}: quadratic rel err {rel}");

        let tv = tv_distance(&m, &b).unwrap();
        let bound = (2.0 * std::f64::consts::LN_2 * js).sqrt() * 1.05;
        assert!(tv <= bound, "round {round}: tv {tv} above bound {bound}");
    }
    pass("06 (quadratic divergence within 5% and tv bound holds, 100 perturbations at n = 16)");
}

/// Independent dense-matrix simulator used as the oracle for criterion 7.
fn matrix_oracle(c: &IqpCircuit<f64>) -> Vec<f64> {
    let n = c.n();
    let len = 1usize << n;
    let h = |row: usize, col: usize| -> f64 {
        let sign = if (row & col).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        sign / (len as f64).sqrt()
    };
    let phase = |x: usize| -> f64 {
        c.generators()
            .iter()
            .map(|g| {
                let chi = if (x as u64 & g.mask).count_ones() % 2 == 1 {
                    -1.0
                } else {
                    1.0
                };
                g.theta * chi
            })
            .sum()
    };
    let mut state: Vec<Complex64> = (0..len).map(|r| Complex64::new(h(r, 0), 0.0)).collect();
    for (x, s) in state.iter_mut().enumerate() {
        *s *= Complex64::from_polar(1.0, phase(x));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (z, o) in out.iter_mut().enumerate() {
        for (x, s) in state.iter().enumerate() {
            *o += Complex64::new(h(z, x), 0.0) * s;
        }
    }
    out.iter().map(|a| a.norm_sqr()).collect()
}

#[test]
fn criterion_07_simulator_correctness() {
    // Dense-matrix oracle at n <= 4.
    for seed in 0..8u64 {
        for n in 1..=4usize {
            let locality = n.min(3);
            let gates = (subsets_up_to_order(n, locality) as usize).min(6);
            let c: IqpCircuit<f64> = random_circuit(n, gates, locality, 700 + seed).unwrap();
            let fast = exact_distribution(&c).unwrap();
            let oracle = matrix_oracle(&c);
            for (a, b) in fast.probs().iter().zip(oracle.iter()) {
                assert!((a - b).abs() <= 1e-10, "n={n} seed={seed}: {a} vs {b}");
            }
        }
    }

    // Normalization for 100 random circuits at n <= 12.
    for seed in 0..100u64 {
        let n = 1 + (seed as usize % 12);
        let gates = (subsets_up_to_order(n, 2) as usize).min(24);
        let c: IqpCircuit<f64> = random_circuit(n, gates, 2, 7000 + seed).unwrap();
        let total = exact_distribution(&c).unwrap().total();
        assert!((total - 1.0).abs() <= 1e-9, "seed {seed}: total {total}");
    }

    // Analytic gradient vs central finite differences at n <= 10.
    let h_step = 1e-5;
    for seed in 0..6u64 {
        let n = 5 + (seed as usize % 6); // 5..=10
        let gates = 14.min(subsets_up_to_order(n, 2) as usize);
        let c: IqpCircuit<f64> = random_circuit(n, gates, 2, 7100 + seed).unwrap();
        let data = iid_uniform(n, 500, seed);
        let coeffs = pauli_coefficients::<f64>(n, (n as f64 / 4.0).sqrt()).unwrap();
        let t = corrmap::spectrum::parity_expectations(&empirical_pmf::<f64>(&data)).unwrap();
        let grad = mmd_gradient(&c, &t, &coeffs).unwrap();
        let thetas = c.thetas();
        let mut fd = Vec::with_capacity(thetas.len());
        for i in 0..thetas.len() {
            let mut probe = thetas.clone();
            probe[i] += h_step;
            let mut plus = c.clone();
            plus.set_thetas(&probe).unwrap();
            probe[i] -= 2.0 * h_step;
            let mut minus = c.clone();
            minus.set_thetas(&probe).unwrap();
            let lp = mmd_loss_circuit(&plus, &t, &coeffs).unwrap();
            let lm = mmd_loss_circuit(&minus, &t, &coeffs).unwrap();
            fd.push((lp - lm) / (2.0 * h_step));
        }
        let scale = fd.iter().map(|g| g.abs()).fold(0.0, f64::max).max(1e-3);
        for (i, (a, f)) in grad.iter().zip(fd.iter()).enumerate() {
            let rel = (a - f).abs() / f.abs().max(1e-3 * scale);
            assert!(rel <= 1e-5, "seed {seed} component {i}: rel err {rel}");
        }
    }
    pass("07 (simulator matches matrix oracle, normalization, gradient vs finite differences)");
}

#[test]
fn criterion_08_temporal_adaptation_benefit() {
    let mean = |rows: &[TauRow]| rows.iter().map(|r| r.mmd).sum::<f64>() / rows.len() as f64;
    let mut wins = 0;
    for seed in 0..10u64 {
        let out = run_temporal_study(&temporal_desk(seed)).unwrap();
        if mean(&out.interpolated.rows) < mean(&out.nearest_anchor.rows) {
            wins += 1;
        }
    }
    assert!(wins >= 7, "interpolation won in only {wins}/10 seeds");
    pass("08 (latent interpolation beats nearest anchor on held-out data, >= 7/10 seeds)");
}

#[test]
fn criterion_09_coupling_sign() {
    let cfg = coupling_desk();
    let out = run_coupling_study(&cfg).unwrap();
    assert!(
        out.points.len() >= 2000,
        "only {} logged circuits",
        out.points.len()
    );
    assert!(out.spearman > 0.0, "rank correlation {}", out.spearman);
    assert!(out.p_value < 0.01, "p value {}", out.p_value);
    pass("09 (indicator coupling: positive rank correlation, p < 0.01, 2000 logged circuits)");
}

#[test]
fn criterion_10_mismatch_sweep_trend() {
    let cfg = sweep_desk();
    let out = run_mismatch_sweep(&cfg).unwrap();
    assert!(out.failures.is_empty(), "sweep failures: {:?}", out.failures);
    assert!(out.rows.len() >= 40, "only {} sweep points", out.rows.len());

    let mut sizes: Vec<usize> = out.rows.iter().map(|r| r.learner_gates).collect();
    sizes.sort_unstable();
    sizes.dedup();
    assert_eq!(sizes.len(), 2, "expected two learner sizes, got {sizes:?}");
    let (small, large) = (sizes[0], sizes[1]);

    let (small_bottom, small_top) = tercile_means(&out.rows, small).unwrap();
    let (large_bottom, large_top) = tercile_means(&out.rows, large).unwrap();
    assert!(
        small_top <= small_bottom,
        "learner {small}: top tercile {small_top} above bottom {small_bottom}"
    );
    assert!(
        large_top <= large_bottom,
        "learner {large}: top tercile {large_top} above bottom {large_bottom}"
    );
    assert!(
        large_bottom <= small_bottom && large_top <= small_top,
        "larger learner not uniformly better at matched terciles: \
         bottom {large_bottom} vs {small_bottom}, top {large_top} vs {small_top}"
    );

    // The envelope machinery digests the same cloud.
    for &g in &sizes {
        let pts: Vec<(f64, f64)> = out
            .rows
            .iter()
            .filter(|r| r.learner_gates == g)
            .map(|r| (r.target_qcli, r.achieved_mmd))
            .collect();
        let (upper, lower) = scatter_envelopes(&pts, 0.03, 1, 3).unwrap();
        assert!(upper.anchors.len() >= 2 && lower.anchors.len() >= 2);
    }
    pass("10 (mismatch sweep: top tercile <= bottom per learner, larger learner <= smaller)");
}

#[test]
fn criterion_11_codec_roundtrip() {
    let bits = 6u32;
    let range = (-1.5f64, 2.5);
    let delta = (range.1 - range.0) / 64.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    for coord in 0..3 {
        for _ in 0..100_000 {
            let v = range.0 + (range.1 - range.0) * rng.random::<f64>();
            let back: f64 = decode_bits(&encode_value(v, range, bits), range, bits).unwrap();
            assert!(
                (back - v).abs() <= delta / 2.0 + 1e-12,
                "coordinate {coord}: {v} -> {back}"
            );
        }
    }
    // Exact bijection on the 64 bin centers.
    let mut seen = std::collections::HashSet::new();
    for idx in 0..64u64 {
        let center: f64 = decode_index(idx, range, bits);
        let pattern = encode_value(center, range, bits);
        assert_eq!(u64::from_str_radix(&pattern, 2).unwrap(), idx);
        assert!(seen.insert(pattern));
        let back: f64 = decode_bits(&encode_value(center, range, bits), range, bits).unwrap();
        assert_eq!(back.to_bits(), center.to_bits());
    }
    assert_eq!(seen.len(), 64);
    pass("11 (codec roundtrip within half a bin over 10^5 draws/coordinate; center bijection)");
}

fn random_field(h: usize, w: usize, seed: u64, shift: f64) -> FieldSnapshot<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FieldSnapshot::new(
        h,
        w,
        (0..h * w)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0 + shift)
            .collect(),
    )
    .unwrap()
}

#[test]
fn criterion_12_eval_metrics_match_oracles() {
    let real: Vec<FieldSnapshot<f64>> = (0..10).map(|i| random_field(16, 16, i, 0.0)).collect();
    let gen: Vec<FieldSnapshot<f64>> = (40..50).map(|i| random_field(16, 16, i, 0.8)).collect();

    // Direct-loop histogram divergence oracle.
    let bins = 50;
    let oracle_js = {
        let pool = |side: &[FieldSnapshot<f64>]| -> Vec<f64> {
            side.iter().flat_map(|f| f.data.iter().copied()).collect()
        };
        let (a, b) = (pool(&real), pool(&gen));
        let lo = a.iter().chain(b.iter()).copied().fold(f64::INFINITY, f64::min);
        let hi = a
            .iter()
            .chain(b.iter())
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let hist = |v: &[f64]| -> Vec<f64> {
            let mut h = vec![0.0; bins];
            for &x in v {
                let idx = (((x - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1);
                h[idx] += 1.0;
            }
            let t: f64 = h.iter().sum();
            let s: Vec<f64> = h.iter().map(|c| c / t + HISTOGRAM_EPSILON).collect();
            let norm: f64 = s.iter().sum();
            s.into_iter().map(|c| c / norm).collect()
        };
        let (p, q) = (hist(&a), hist(&b));
        p.iter()
            .zip(q.iter())
            .map(|(&x, &y)| {
                let m = 0.5 * (x + y);
                0.5 * x * (x / m).log2() + 0.5 * y * (y / m).log2()
            })
            .sum::<f64>()
    };
    let js = pdf_js(&real, &gen, bins).unwrap();
    assert!((js.value - oracle_js).abs() <= 1e-9, "{} vs {oracle_js}", js.value);
    assert_eq!(pdf_js(&real, &real, bins).unwrap().value, 0.0);

    // Triple-loop feature-space oracle.
    let enc = RandomConvEncoder::<f64>::new(12);
    let oracle_mmd = {
        let f: Vec<Vec<f64>> = real.iter().map(|s| enc.encode(s).unwrap()).collect();
        let g: Vec<Vec<f64>> = gen.iter().map(|s| enc.encode(s).unwrap()).collect();
        let pooled: Vec<&Vec<f64>> = f.iter().chain(g.iter()).collect();
        let mut dists = Vec::new();
        for i in 0..pooled.len() {
            for j in i + 1..pooled.len() {
                let d: f64 = pooled[i]
                    .iter()
                    .zip(pooled[j].iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                dists.push(d);
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = dists.len() / 2;
        let sigma = if dists.len() % 2 == 1 {
            dists[mid]
        } else {
            0.5 * (dists[mid - 1] + dists[mid])
        };
        let k = |a: &[f64], b: &[f64]| -> f64 {
            let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
            (-sq / (2.0 * sigma * sigma)).exp()
        };
        let mean = |xs: &[Vec<f64>], ys: &[Vec<f64>]| -> f64 {
            let mut acc = 0.0;
            for x in xs {
                for y in ys {
                    acc += k(x, y);
                }
            }
            acc / (xs.len() * ys.len()) as f64
        };
        mean(&f, &f) - 2.0 * mean(&f, &g) + mean(&g, &g)
    };
    let fm = feature_mmd(&real, &gen, &enc).unwrap();
    assert!(
        (fm.value - oracle_mmd).abs() <= 1e-9,
        "{} vs {oracle_mmd}",
        fm.value
    );
    let same = feature_mmd(&real, &real, &enc).unwrap();
    assert!(same.value.abs() <= 1e-12);
    pass("12 (field metrics equal direct-loop oracles to 1e-9; zero on identical inputs)");
}

/// Auxiliary: the indicator cloud of the coupling preset stays on or above
/// its smoothed lower frontier at 99% coverage (the paper-map envelope
/// machinery exercised on real study output).
#[test]
fn frontier_contains_coupling_cloud() {
    let out = run_coupling_study(&coupling_desk()).unwrap();
    let pts: Vec<(f64, f64)> = out.points.iter().map(|p| (p.qcli, p.cci)).collect();
    let curve = frontier_envelope(&pts, 20, 3, 3).unwrap();
    let covered = pts
        .iter()
        .filter(|&&(x, y)| y >= curve.value_at(x) - 1e-9)
        .count();
    let frac = covered as f64 / pts.len() as f64;
    assert!(frac >= 0.99, "frontier coverage {frac}");
}

/// Regenerates the calibrated null threshold; run manually with
/// `cargo test -p corrmap --test acceptance recalibrate -- --ignored --nocapture`.
#[test]
#[ignore]
fn recalibrate_null_threshold() {
    let values: Vec<f64> = (10_000u64..10_100)
        .map(|seed| qcli_exact(&iid_uniform(16, 10_000, seed)).unwrap())
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    println!(
        "calibration mean {mean:.12} sd {sd:.3e} -> threshold {:.12} (current constant {})",
        mean + 5.0 * sd,
        NULL_THRESHOLD_N16_M10K
    );
}

/// Sanity that the two total-correlation routes used by criterion 2 agree
/// on a nontrivial analytic case (the identity's ingredients are exercised
/// separately from the randomized sweep).
#[test]
fn tree_identity_ingredients_on_markov_chain() {
    let n = 5;
    let flip = 0.25f64;
    let mut mass = vec![0.0; 1 << n];
    for (x, m) in mass.iter_mut().enumerate() {
        let mut p = 0.5;
        for b in 1..n {
            let same = (x >> b & 1) == (x >> (b - 1) & 1);
            p *= if same { 1.0 - flip } else { flip };
        }
        *m = p;
    }
    let pmf = EmpiricalPmf::from_dense(n, mass).unwrap();
    let tree = chow_liu_tree(&mutual_info_from_pmf(&pmf));
    let (kl, gap) = tree_kl_check(&pmf, &tree).unwrap();
    let tc = total_correlation(&pmf).unwrap();
    assert!(kl.abs() < 1e-9, "chain source is exactly tree-shaped");
    assert!(gap <= 1e-9);
    assert!((tc - tree.tree_tc).abs() <= 1e-9);
}

#[test]
fn order_spectrum_and_baseline_agree_on_flat_power() {
    // Point mass: every subset carries equal power, so the order spectrum
    // is exactly the binomial baseline.
    let d = BitDataset::from_lines(&["000000"]).unwrap();
    let m = order_spectrum_exact::<f64>(&d).unwrap();
    let b = binomial_baseline::<f64>(6);
    for (x, y) in m.fractions().iter().zip(b.fractions()) {
        assert!((x - y).abs() <= 1e-12);
    }
}
