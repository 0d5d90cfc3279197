use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use super::*;
use crate::calibrate::{Determination, Hyperparameters};
use crate::curve::CalibrationCurve;
use crate::math::{normal_ln_pdf, std_normal_cdf};

fn hyper() -> Hyperparameters {
    Hyperparameters {
        lambda: 0.1,
        nu1: 2.0,
        nu2: 2.0,
        xi: 3.0,
        psi: 1.0,
        eta1: 1.0,
        eta2: 1.0,
        slice_width: 50.0,
        slice_max_steps: 20,
        alpha_prop_sd: 1.0,
        n_init_clusters: 10,
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn flat_curve(lo: f64, hi: f64) -> CalibrationCurve {
    CalibrationCurve::new(vec![lo, hi], vec![5000.0, 5000.0], vec![20.0, 20.0]).unwrap()
}

fn state_with(theta: Vec<f64>, labels: Vec<usize>, clusters: Vec<Cluster>, alpha: f64, mu_phi: f64) -> DpmmState {
    DpmmState::from_parts(theta, labels, clusters, Vec::new(), alpha, mu_phi).unwrap()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

fn ks(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// ---- init_state ----------------------------------------------------------

#[test]
fn init_single_determination_has_one_cluster() {
    let curve = CalibrationCurve::intcal20();
    let dets = vec![Determination::new("a", 3000.0, 30.0).unwrap()];
    for kind in [SamplerKind::Polya, SamplerKind::Walker] {
        let s = init_state(&dets, &curve, &hyper(), kind, &mut rng(1)).unwrap();
        assert_eq!(s.n_occupied(), 1);
        assert_eq!(s.labels(), &[0]);
        s.validate(&curve, kind).unwrap();
    }
}

#[test]
fn init_deals_labels_round_robin() {
    let curve = CalibrationCurve::intcal20();
    let dets: Vec<_> = (0..20)
        .map(|i| Determination::new(format!("d{i}"), 2000.0 + 50.0 * i as f64, 25.0).unwrap())
        .collect();
    let s = init_state(&dets, &curve, &hyper(), SamplerKind::Walker, &mut rng(2)).unwrap();
    for j in 0..10 {
        assert_eq!(s.labels().iter().filter(|&&c| c == j).count(), 2);
    }
    assert!(s.theta().iter().all(|t| curve.contains(*t)));
    s.validate(&curve, SamplerKind::Walker).unwrap();
    assert_eq!(s.mu_phi(), hyper().xi);
}

// ---- update_theta --------------------------------------------------------

#[test]
fn theta_on_flat_curve_follows_cluster_normal() {
    let curve = flat_curve(0.0, 1000.0);
    let det = Determination::new("a", 5000.0, 30.0).unwrap();
    let (phi, sd) = (400.0, 50.0);
    let mut s = state_with(vec![400.0], vec![0], vec![Cluster { phi, tau: 1.0 / (sd * sd) }], 1.0, 0.0);
    let h = Hyperparameters { slice_width: 100.0, ..hyper() };
    let mut r = rng(3);
    let mut draws = Vec::new();
    for it in 0..250_000 {
        let t = update_theta(&mut s, 0, &det, &curve, &h, &mut r).unwrap();
        if it % 5 == 4 {
            draws.push(t);
        }
    }
    let z = |x: f64| std_normal_cdf((x - phi) / sd);
    let (a, b) = (z(0.0), z(1000.0));
    let d = ks(draws, |x| (z(x) - a) / (b - a));
    assert!(d < 0.02, "KS {d}");
}

#[test]
fn theta_concentrates_under_a_huge_precision() {
    let curve = flat_curve(0.0, 1000.0);
    let det = Determination::new("a", 5000.0, 30.0).unwrap();
    let mut s = state_with(vec![400.0], vec![0], vec![Cluster { phi: 400.0, tau: 1e8 }], 1.0, 0.0);
    let mut r = rng(4);
    for _ in 0..2_000 {
        let t = update_theta(&mut s, 0, &det, &curve, &hyper(), &mut r).unwrap();
        assert!((t - 400.0).abs() < 6e-4, "{t}");
    }
}

#[test]
fn theta_on_identity_curve_is_a_product_of_normals() {
    let curve = CalibrationCurve::new(vec![0.0, 10_000.0], vec![0.0, 10_000.0], vec![1e-9, 1e-9]).unwrap();
    let det = Determination::new("a", 5000.0, 40.0).unwrap();
    let (phi, tau) = (5100.0, 1.0 / 60.0f64.powi(2));
    let mut s = state_with(vec![5000.0], vec![0], vec![Cluster { phi, tau }], 1.0, 0.0);
    let mut r = rng(5);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| update_theta(&mut s, 0, &det, &curve, &hyper(), &mut r).unwrap())
        .collect();
    let prec = 1.0 / 1600.0 + tau;
    let expected = (5000.0 / 1600.0 + tau * phi) / prec;
    let (m, v) = mean_var(&draws);
    // successive draws are correlated; allow eight naive standard errors
    assert!((m - expected).abs() < 8.0 * (v / draws.len() as f64).sqrt(), "{m} vs {expected}");
    assert!((v * prec - 1.0).abs() < 0.03, "{}", v * prec);
}

// ---- Normal-Gamma cluster updates ----------------------------------------

#[test]
fn empty_walker_cluster_draws_from_the_prior() {
    let h = hyper();
    let clusters = vec![Cluster { phi: 0.0, tau: 1.0 }, Cluster { phi: 50.0, tau: 1.0 }];
    let mut s = DpmmState::from_parts(vec![0.0], vec![0], clusters, vec![0.5, 0.3], 1.0, 7.0).unwrap();
    let mut r = rng(6);
    let n = 100_000;
    let mut taus = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        update_cluster_params(&mut s, &h, &mut r);
        let c = s.clusters()[1];
        taus.push(c.tau);
        z.push((c.phi - 7.0) * (h.lambda * c.tau).sqrt());
    }
    let (mt, vt) = mean_var(&taus);
    assert!((mt / (h.nu1 / h.nu2) - 1.0).abs() < 0.01);
    assert!((vt / (h.nu1 / (h.nu2 * h.nu2)) - 1.0).abs() < 0.03);
    let (mz, vz) = mean_var(&z);
    assert!(mz.abs() < 0.01 && (vz - 1.0).abs() < 0.02, "{mz} {vz}");
}

#[test]
fn three_member_cluster_matches_closed_form_posterior() {
    let h = hyper();
    let theta = vec![2.0, 3.5, 4.0];
    let mut s = state_with(theta.clone(), vec![0, 0, 0], vec![Cluster { phi: 0.0, tau: 1.0 }], 1.0, 1.0);
    let post = NormalGamma::prior(1.0, &h).posterior(&theta);
    // independent check of the update formulas
    let lambda_n = h.lambda + 3.0;
    let mean = 9.5 / 3.0;
    assert!((post.mean - (h.lambda * 1.0 + 9.5) / lambda_n).abs() < 1e-12);
    let ss: f64 = theta.iter().map(|t| (t - mean).powi(2)).sum();
    let rate = h.nu2 + 0.5 * ss + h.lambda * 3.0 * (mean - 1.0).powi(2) / (2.0 * lambda_n);
    assert!((post.rate - rate).abs() < 1e-12);

    let mut r = rng(7);
    let n = 100_000;
    let (mut taus, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        update_cluster_params(&mut s, &h, &mut r);
        let c = s.clusters()[0];
        taus.push(c.tau);
        z.push((c.phi - post.mean) * (post.lambda * c.tau).sqrt());
    }
    let (mt, vt) = mean_var(&taus);
    assert!((mt / (post.shape / post.rate) - 1.0).abs() < 0.01, "{mt}");
    assert!((vt / (post.shape / post.rate.powi(2)) - 1.0).abs() < 0.02, "{vt}");
    let (mz, vz) = mean_var(&z);
    assert!(mz.abs() < 0.01 && (vz - 1.0).abs() < 0.01, "{mz} {vz}");
}

// ---- Pólya urn -----------------------------------------------------------

#[test]
fn polya_single_observation_keeps_one_cluster() {
    let h = hyper();
    let mut r = rng(8);
    let mut s = state_with(vec![3.0], vec![0], vec![Cluster { phi: 3.0, tau: 1.0 }], 1.0, 3.0);
    for _ in 0..1_000 {
        polya_reallocate(&mut s, 0, &h, &mut r);
        assert_eq!(s.clusters().len(), 1);
        assert_eq!(s.labels(), &[0]);
    }
}

#[test]
fn polya_never_opens_a_cluster_as_alpha_vanishes() {
    let h = hyper();
    let mut r = rng(9);
    let clusters = vec![Cluster { phi: 0.0, tau: 1.0 }, Cluster { phi: 5.0, tau: 1.0 }];
    let mut s = state_with(vec![0.1, -0.3, 5.2, 4.9, 20.0], vec![0, 0, 1, 1, 1], clusters, 1e-300, 3.0);
    let mut k = s.clusters().len();
    for u in 0..10_000 {
        polya_reallocate(&mut s, u % 5, &h, &mut r);
        assert!(s.clusters().len() <= k);
        k = s.clusters().len();
    }
}

/// Log marginal likelihood of `data` under `N(phi, 1/tau)` with
/// `(phi, tau) ~ NormalGamma(mu, lambda, a, b)`.
fn ng_log_marginal(data: &[f64], mu: f64, h: &Hyperparameters) -> f64 {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let ss: f64 = data.iter().map(|x| (x - mean).powi(2)).sum();
    let (a, b, l) = (h.nu1, h.nu2, h.lambda);
    let ln = l + n;
    let an = a + n / 2.0;
    let bn = b + ss / 2.0 + l * n * (mean - mu).powi(2) / (2.0 * ln);
    ln_gamma(an) - ln_gamma(a) + a * b.ln() - an * bn.ln() + 0.5 * (l / ln).ln()
        - n / 2.0 * (2.0 * std::f64::consts::PI).ln()
}

/// All set partitions of `0..n` as canonical label vectors.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0]];
    for _ in 1..n {
        let mut next = Vec::new();
        for p in &out {
            let k = p.iter().max().unwrap() + 1;
            for c in 0..=k {
                let mut q = p.clone();
                q.push(c);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|c| {
            let k = map.len();
            *map.entry(*c).or_insert(k)
        })
        .collect()
}

/// Exact posterior over partitions with alpha and mu_phi held fixed.
fn exact_partition_posterior(theta: &[f64], alpha: f64, mu: f64, h: &Hyperparameters) -> HashMap<Vec<usize>, f64> {
    let parts = partitions(theta.len());
    let logs: Vec<f64> = parts
        .iter()
        .map(|p| {
            let k = p.iter().max().unwrap() + 1;
            let mut lp = k as f64 * alpha.ln();
            for j in 0..k {
                let block: Vec<f64> = p.iter().zip(theta).filter(|(c, _)| **c == j).map(|(_, t)| *t).collect();
                lp += ln_gamma(block.len() as f64) + ng_log_marginal(&block, mu, h);
            }
            lp
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    parts
        .into_iter()
        .zip(logs)
        .map(|(p, l)| (p, (l - max).exp() / total))
        .collect()
}

/// Runs allocation + cluster-parameter sweeps with ages, alpha and mu_phi
/// fixed and returns the TV distance of partition frequencies to the exact
/// posterior.
fn partition_tv(kind: SamplerKind, sweeps: usize, seed: u64) -> f64 {
    let h = Hyperparameters { lambda: 0.1, nu1: 2.0, nu2: 2.0, ..hyper() };
    let theta = vec![0.0, 1.0, 4.0, 5.5];
    let (alpha, mu) = (1.0, 2.5);
    let exact = exact_partition_posterior(&theta, alpha, mu, &h);
    let mut r = rng(seed);
    let mut s = init_state_at(theta.clone(), &Hyperparameters { xi: mu, ..h.clone() }, kind, &mut r).unwrap();
    s.alpha = alpha;
    s.mu_phi = mu;
    let mut freq: HashMap<Vec<usize>, f64> = HashMap::new();
    for _ in 0..sweeps {
        match kind {
            SamplerKind::Polya => {
                for i in 0..theta.len() {
                    polya_reallocate(&mut s, i, &h, &mut r);
                }
            }
            SamplerKind::Walker => walker::walker_sweep(&mut s, &h, &mut r).unwrap(),
        }
        update_cluster_params(&mut s, &h, &mut r);
        *freq.entry(canonical(s.labels())).or_default() += 1.0 / sweeps as f64;
    }
    exact
        .iter()
        .map(|(p, q)| (freq.get(p).copied().unwrap_or(0.0) - q).abs())
        .sum::<f64>()
        / 2.0
}

#[test]
fn polya_transition_preserves_partition_posterior() {
    let tv = partition_tv(SamplerKind::Polya, 100_000, 10);
    assert!(tv < 0.02, "TV {tv}");
}

#[test]
fn walker_transition_preserves_partition_posterior() {
    let tv = partition_tv(SamplerKind::Walker, 100_000, 11);
    assert!(tv < 0.02, "TV {tv}");
}

#[test]
fn polya_separates_distant_groups() {
    let h = Hyperparameters {
        lambda: 1e-8,
        nu1: 2.0,
        nu2: 2.0 * 100.0 * 100.0,
        xi: 5e5,
        psi: 1e-12,
        ..hyper()
    };
    let theta = vec![0.0, 10.0, 20.0, 1e6, 1e6 + 10.0, 1e6 + 20.0];
    // oracle: one cluster versus the two natural groups at mu_phi = xi
    let one = ng_log_marginal(&theta, h.xi, &h);
    let two = ng_log_marginal(&theta[..3], h.xi, &h) + ng_log_marginal(&theta[3..], h.xi, &h);
    assert!(two - one > 50.0);

    let mut r = rng(12);
    let mut s = init_state_at(theta.clone(), &h, SamplerKind::Polya, &mut r).unwrap();
    let mut counts = HashMap::new();
    for it in 0..500 {
        for i in 0..theta.len() {
            polya_reallocate(&mut s, i, &h, &mut r);
        }
        update_cluster_params(&mut s, &h, &mut r);
        update_alpha(&mut s, &h, &mut r);
        update_mu_phi(&mut s, &h, &mut r).unwrap();
        if it >= 100 {
            *counts.entry(s.n_occupied()).or_insert(0) += 1;
        }
    }
    let mode = counts.iter().max_by_key(|(k, c)| (**c, std::cmp::Reverse(**k))).unwrap().0;
    assert_eq!(*mode, 2, "{counts:?}");
}

// ---- Walker --------------------------------------------------------------

#[test]
fn dominant_stick_mean_near_one() {
    let n = 50;
    let mut s = DpmmState::from_parts(
        vec![0.0; n],
        vec![0; n],
        vec![Cluster { phi: 0.0, tau: 1.0 }],
        vec![0.5],
        0.01,
        0.0,
    )
    .unwrap();
    let mut r = rng(13);
    let m: f64 = (0..20_000)
        .map(|_| {
            walker::update_weights(&mut s, &mut r).unwrap();
            s.weights()[0]
        })
        .sum::<f64>()
        / 20_000.0;
    let expected = (1.0 + n as f64) / (1.0 + n as f64 + 0.01);
    assert!((m - expected).abs() < 1e-3, "{m} vs {expected}");
}

#[test]
fn prior_stick_has_beta_mean() {
    let h = hyper();
    let alpha = 2.0;
    let mut r = rng(14);
    let mut total = 0.0;
    let reps = 50_000;
    for _ in 0..reps {
        let mut s = DpmmState::from_parts(vec![0.0], vec![0], vec![Cluster { phi: 0.0, tau: 1.0 }], vec![0.4], alpha, 0.0)
            .unwrap();
        walker::extend_sticks(&mut s, 0.5, &h, &mut r).unwrap();
        // remainder 0.6 >= 0.5 forces exactly one appended stick at least
        total += s.weights()[1] / 0.6;
    }
    let m = total / reps as f64;
    assert!((m - 1.0 / (1.0 + alpha)).abs() < 0.005, "{m}");
}

#[test]
fn stick_weights_match_beta_posterior_given_labels() {
    let labels = vec![0, 0, 0, 1, 1];
    let alpha = 1.5;
    let clusters = vec![Cluster { phi: 0.0, tau: 1.0 }; 2];
    let mut s = DpmmState::from_parts(vec![0.0; 5], labels, clusters, vec![0.3, 0.3], alpha, 0.0).unwrap();
    let mut r = rng(15);
    let reps = 50_000;
    let (mut w1, mut w2) = (0.0, 0.0);
    for _ in 0..reps {
        walker::update_weights(&mut s, &mut r).unwrap();
        w1 += s.weights()[0];
        w2 += s.weights()[1];
        assert!((s.weights().iter().sum::<f64>() + s.remainder() - 1.0).abs() < 1e-12);
    }
    // v1 ~ Beta(4, alpha + 2), v2 ~ Beta(3, alpha)
    let ev1 = 4.0 / (4.0 + alpha + 2.0);
    let ev2 = 3.0 / (3.0 + alpha);
    assert!((w1 / reps as f64 - ev1).abs() < 0.004);
    assert!((w2 / reps as f64 - (1.0 - ev1) * ev2).abs() < 0.004);
}

#[test]
fn single_stick_keeps_label() {
    let mut s = DpmmState::from_parts(vec![1.0], vec![0], vec![Cluster { phi: 0.0, tau: 1.0 }], vec![1.0 - 1e-12], 1.0, 0.0)
        .unwrap();
    let mut r = rng(16);
    for _ in 0..100 {
        assert_eq!(walker_reallocate(&mut s, 0, 0.5, &mut r), 0);
    }
}

#[test]
fn equal_sticks_are_chosen_uniformly() {
    let c = Cluster { phi: 0.0, tau: 1.0 };
    let mut s = DpmmState::from_parts(vec![0.3], vec![0], vec![c, c], vec![0.45, 0.45], 1.0, 0.0).unwrap();
    let mut r = rng(17);
    let n = 40_000;
    let ones = (0..n).filter(|_| walker_reallocate(&mut s, 0, 0.1, &mut r) == 1).count();
    assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
}

// ---- concentration and centring ------------------------------------------

#[test]
fn identical_alpha_proposal_has_unit_ratio() {
    let h = hyper();
    for a in [0.01, 1.0, 7.5] {
        assert_eq!(alpha_log_acceptance(a, a, &[3, 4, 0, 1], 8, &h), 0.0);
    }
}

#[test]
fn alpha_with_one_observation_samples_its_prior() {
    let h = hyper();
    let mut s = state_with(vec![0.0], vec![0], vec![Cluster { phi: 0.0, tau: 1.0 }], 1.0, 0.0);
    let mut r = rng(18);
    let n = 400_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            update_alpha(&mut s, &h, &mut r);
            s.alpha()
        })
        .collect();
    let (m, v) = mean_var(&draws);
    assert!((m - 1.0).abs() < 0.02, "{m}");
    assert!((v - 1.0).abs() < 0.05, "{v}");
}

/// cdf of the exact concentration conditional by trapezoid quadrature.
pub(crate) fn alpha_conditional_cdf(counts: &[usize], h: &Hyperparameters) -> impl Fn(f64) -> f64 {
    let n: usize = counts.iter().sum();
    let step = 1e-3;
    let grid: Vec<f64> = (1..=40_000).map(|k| k as f64 * step).collect();
    let logp: Vec<f64> = grid
        .iter()
        .map(|&a| (h.eta1 - 1.0) * a.ln() - h.eta2 * a + alpha_log_likelihood(a, counts, n))
        .collect();
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let mut cdf = vec![0.0; grid.len()];
    for k in 1..grid.len() {
        cdf[k] = cdf[k - 1] + 0.5 * step * (dens[k] + dens[k - 1]);
    }
    let total = cdf[grid.len() - 1];
    move |a: f64| {
        let pos = (a / step - 1.0).clamp(0.0, (grid.len() - 1) as f64);
        let k = pos.floor() as usize;
        let k1 = (k + 1).min(grid.len() - 1);
        let t = pos - k as f64;
        ((1.0 - t) * cdf[k] + t * cdf[k1]) / total
    }
}

#[test]
fn alpha_chain_matches_quadrature() {
    let h = hyper();
    let labels: Vec<usize> = (0..100).map(|i| i / 20).collect();
    let clusters = vec![Cluster { phi: 0.0, tau: 1.0 }; 5];
    let mut s = state_with(vec![0.0; 100], labels, clusters, 1.0, 0.0);
    let mut r = rng(19);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            update_alpha(&mut s, &h, &mut r);
            s.alpha()
        })
        .collect();
    let d = ks(draws, alpha_conditional_cdf(s.counts(), &h));
    assert!(d < 0.02, "KS {d}");
}

#[test]
fn alpha_log_likelihood_matches_factorials() {
    // alpha^k prod (n_j - 1)! / [alpha (alpha + 1) ... (alpha + n - 1)]
    let counts = [3, 1, 2];
    let a: f64 = 0.7;
    let direct = (a.powi(3) * 2.0 * 1.0 * 1.0 / (0..6).map(|i| a + i as f64).product::<f64>()).ln();
    assert!((alpha_log_likelihood(a, &counts, 6) - direct).abs() < 1e-12);
}

#[test]
fn mu_phi_dominated_by_its_prior() {
    let h = Hyperparameters { psi: 1e12, xi: 123.0, ..hyper() };
    let mut s = state_with(vec![0.0], vec![0], vec![Cluster { phi: 9000.0, tau: 1.0 }], 1.0, 0.0);
    let v = update_mu_phi(&mut s, &h, &mut rng(20)).unwrap();
    assert!((v - 123.0).abs() < 1e-3);
}

#[test]
fn mu_phi_dominated_by_one_cluster() {
    let h = Hyperparameters { psi: 1e-30, lambda: 0.5, ..hyper() };
    let tau = 0.25;
    let mut s = state_with(vec![0.0], vec![0], vec![Cluster { phi: 40.0, tau }], 1.0, 0.0);
    let mut r = rng(21);
    let draws: Vec<f64> = (0..100_000).map(|_| update_mu_phi(&mut s, &h, &mut r).unwrap()).collect();
    let (m, v) = mean_var(&draws);
    let var = 1.0 / (h.lambda * tau);
    assert!((m - 40.0).abs() < 4.0 * (var / 1e5).sqrt());
    assert!((v / var - 1.0).abs() < 0.02);
}

#[test]
fn mu_phi_symmetric_clusters_centre_on_zero() {
    let h = Hyperparameters { psi: 1e-30, ..hyper() };
    let clusters = vec![Cluster { phi: -300.0, tau: 0.01 }, Cluster { phi: 300.0, tau: 0.01 }];
    let mut s = state_with(vec![0.0, 0.0], vec![0, 1], clusters, 1.0, 0.0);
    let mut r = rng(22);
    let draws: Vec<f64> = (0..50_000).map(|_| update_mu_phi(&mut s, &h, &mut r).unwrap()).collect();
    let (m, v) = mean_var(&draws);
    assert!(m.abs() < 4.0 * (v / 5e4).sqrt());
}

#[test]
fn expected_cluster_sums() {
    for a in [0.01, 1.0, 50.0] {
        assert_eq!(expected_clusters(a, 1), 1.0);
    }
    assert!((expected_clusters(1.0, 3) - 11.0 / 6.0).abs() < 1e-15);
}

// ---- chains --------------------------------------------------------------

fn small_dataset() -> Vec<Determination> {
    [(3000.0, 30.0), (3050.0, 25.0), (3400.0, 30.0), (4100.0, 35.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x, s))| Determination::new(format!("s{i}"), x, s).unwrap())
        .collect()
}

fn small_hyper() -> Hyperparameters {
    crate::calibrate::default_hyperparameters(&small_dataset(), &CalibrationCurve::intcal20()).unwrap()
}

#[test]
fn thinning_arithmetic() {
    let curve = CalibrationCurve::intcal20();
    let cfg = ChainConfig::new(small_hyper()).iterations(10, 5, 5).seed(1);
    let out = run_chain(&small_dataset(), &curve, &cfg).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out.states[0].iteration, 9);
    let cfg = cfg.iterations(100, 20, 7);
    assert_eq!(run_chain(&small_dataset(), &curve, &cfg).unwrap().len(), 80 / 7);
}

#[test]
fn chains_are_deterministic_and_valid() {
    let curve = CalibrationCurve::intcal20();
    for kind in [SamplerKind::Polya, SamplerKind::Walker] {
        let cfg = ChainConfig::new(small_hyper()).iterations(300, 100, 2).sampler(kind).seed(42);
        let a = run_chain(&small_dataset(), &curve, &cfg).unwrap();
        let b = run_chain(&small_dataset(), &curve, &cfg).unwrap();
        assert_eq!(a, b);
        for s in &a.states {
            s.to_state().unwrap().validate(&curve, kind).unwrap();
        }
        let other = run_chain(&small_dataset(), &curve, &cfg.clone().seed(43)).unwrap();
        assert_ne!(a.states, other.states);
    }
}

#[test]
fn invalid_chain_config_is_rejected() {
    let curve = CalibrationCurve::intcal20();
    let cfg = ChainConfig::new(small_hyper()).iterations(10, 10, 1);
    assert!(matches!(run_chain(&small_dataset(), &curve, &cfg), Err(crate::Error::InvalidParameter(_))));
    let cfg = ChainConfig::new(small_hyper()).iterations(10, 1, 0);
    assert!(run_chain(&small_dataset(), &curve, &cfg).is_err());
}

#[test]
fn samples_round_trip_through_a_directory() {
    let curve = CalibrationCurve::intcal20();
    let dir = tempfile::tempdir().unwrap();
    for kind in [SamplerKind::Polya, SamplerKind::Walker] {
        let cfg = ChainConfig::new(small_hyper()).iterations(60, 20, 4).sampler(kind).seed(3);
        let samples = run_chain(&small_dataset(), &curve, &cfg).unwrap();
        let path = dir.path().join(kind.to_string());
        write_samples(&path, &samples).unwrap();
        let back = read_samples(&path).unwrap();
        assert_eq!(back, samples);
    }
}

#[test]
fn theta_log_density_is_finite_across_the_support() {
    // guards the slice sampler's start condition at the curve edges
    let curve = CalibrationCurve::intcal20();
    let det = Determination::new("a", 50_000.0, 1000.0).unwrap();
    let s2 = det.sigma * det.sigma;
    for t in [0.0, 1.0, 54_999.5, 55_000.0] {
        let l = crate::calibrate::ln_likelihood_unchecked(det.x, s2, &curve, t) + normal_ln_pdf(t, 0.0, 1e12);
        assert!(l.is_finite());
    }
}
