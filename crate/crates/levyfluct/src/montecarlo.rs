//! Seeded Monte Carlo: exact-increment samplers for the four models, path
//! skeletons with running maxima, histogram density estimates with per-bin
//! standard errors, and the ladder-time drift estimator.
//!
//! Reproducibility contract: the stream for path i is derived from
//! (seed, i) only, so estimates are bit-exact across worker counts and
//! schedules. Increments are sampled exactly over any time step (Gaussian,
//! stable-subordinated Gaussian, stable subordinator minus drift), leaving
//! the skeleton approximation of the running maximum as the only
//! discretization error, with its documented negative bias.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::fmt_f64;
use crate::model::{ModelKind, ModelSpec};
use crate::specfun::stable_unit_scale;

/// RNG for one path: fixed seed, stream = path index.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Exp1)
}

fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// One draw of the unit-scale one-sided stable law S (E e^{-λS} = e^{-λ^β})
/// by Kanter's representation S = (A(U)/E)^{(1-β)/β}.
fn sample_unit_stable(beta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u = std::f64::consts::PI * uniform_open(rng);
    let e = exp1(rng);
    let ln_a = (beta * (beta * u).sin().ln() + (1.0 - beta) * ((1.0 - beta) * u).sin().ln()
        - u.sin().ln())
        / (1.0 - beta);
    ((1.0 - beta) / beta * (ln_a - e.ln())).exp()
}

/// One draw of T_1^{(β)} under the crate normalization
/// (E e^{-λT_1} = e^{-k_β λ^β}); for β = 1/2 the law is 1/Z².
pub fn sample_positive_stable(beta: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!(
            "stability index must lie in (0,1), got {beta}"
        )));
    }
    if (beta - 0.5).abs() < 1e-14 {
        let z = standard_normal(rng);
        return Ok(1.0 / (z * z));
    }
    Ok(stable_unit_scale(beta)? * sample_unit_stable(beta, rng))
}

impl ModelSpec {
    /// Exact increment of the process over a step of length dt.
    pub fn sample_increment(&self, dt: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        match self.kind {
            ModelKind::BrownianMotion => Ok(dt.sqrt() * standard_normal(rng)),
            ModelKind::SubordinatedDriftBM => {
                let beta = 0.5 * self.alpha;
                let dtau = dt.powf(1.0 / beta) * sample_positive_stable(beta, rng)?;
                Ok(dtau.sqrt() * standard_normal(rng) + self.a * dtau)
            }
            ModelKind::SubordinatorMinusDrift => {
                let dtau = dt * dt * sample_positive_stable(0.5, rng)?;
                Ok(dtau - self.a * dt)
            }
            ModelKind::SymmetricStable => {
                if (self.alpha - 2.0).abs() < 1e-14 {
                    return Ok(dt.sqrt() * standard_normal(rng));
                }
                let beta = 0.5 * self.alpha;
                let dtau = dt.powf(1.0 / beta) * sample_positive_stable(beta, rng)?;
                Ok(dtau.sqrt() * standard_normal(rng))
            }
        }
    }
}

/// Terminal values and skeleton maxima of simulated paths.
#[derive(Debug, Clone)]
pub struct PathSamples {
    pub terminal: Vec<f64>,
    pub skeleton_max: Vec<f64>,
    pub t: f64,
    pub n_steps: usize,
    pub seed: u64,
}

impl PathSamples {
    /// Fraction of paths whose skeleton never became positive; the Monte
    /// Carlo counterpart of P(max = 0) for irregular-upward models. The
    /// skeleton may miss brief positive excursions, so this estimate is
    /// biased upward.
    pub fn atom_fraction(&self) -> f64 {
        let n = self.skeleton_max.len();
        let hits = self.skeleton_max.iter().filter(|&&m| m <= 0.0).count();
        hits as f64 / n as f64
    }
}

/// Simulate (X_t, max over the skeleton of n_steps+1 equally spaced
/// points). The skeleton maximum is a negatively biased estimate of the
/// running supremum; mitigate only by raising n_steps.
pub fn simulate_terminal_and_max(
    model: &ModelSpec,
    t: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSamples> {
    if !(t > 0.0) || n_steps == 0 || n_paths == 0 {
        return Err(Error::invalid(
            "simulate needs t > 0, n_steps > 0, n_paths > 0",
        ));
    }
    let dt = t / n_steps as f64;
    let pairs: Vec<(f64, f64)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut x = 0.0;
            let mut max = 0.0f64;
            for _ in 0..n_steps {
                x += model
                    .sample_increment(dt, &mut rng)
                    .expect("increment sampling cannot fail for validated models");
                max = max.max(x);
            }
            (x, max)
        })
        .collect();
    let terminal = pairs.iter().map(|p| p.0).collect();
    let skeleton_max = pairs.iter().map(|p| p.1).collect();
    Ok(PathSamples {
        terminal,
        skeleton_max,
        t,
        n_steps,
        seed,
    })
}

/// Terminal-only sampling in a single exact step per path.
pub fn sample_terminal(model: &ModelSpec, t: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    if !(t > 0.0) || n_paths == 0 {
        return Err(Error::invalid("sampling needs t > 0 and n_paths > 0"));
    }
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            model
                .sample_increment(t, &mut rng)
                .expect("increment sampling cannot fail for validated models")
        })
        .collect())
}

/// Histogram density estimate with per-bin standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct MCEstimate {
    pub bin_edges: Vec<f64>,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub model: String,
}

impl MCEstimate {
    /// density = count/(n·Δx), stderr = sqrt(p̂(1-p̂)/n)/Δx per bin.
    pub fn from_samples(
        samples: &[f64],
        bin_edges: &[f64],
        n_steps: usize,
        seed: u64,
        model: String,
    ) -> Result<Self> {
        if samples.len() < 1_000 {
            return Err(Error::invalid(format!(
                "density estimation needs >= 1000 samples, got {}",
                samples.len()
            )));
        }
        if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("bin edges must be strictly increasing"));
        }
        let nb = bin_edges.len() - 1;
        let mut counts = vec![0usize; nb];
        for &s in samples {
            if s < bin_edges[0] || s >= bin_edges[nb] {
                continue;
            }
            let j = bin_edges.partition_point(|&e| e <= s) - 1;
            counts[j.min(nb - 1)] += 1;
        }
        let n = samples.len() as f64;
        let mut density = Vec::with_capacity(nb);
        let mut stderr = Vec::with_capacity(nb);
        for (j, &c) in counts.iter().enumerate() {
            let width = bin_edges[j + 1] - bin_edges[j];
            let p = c as f64 / n;
            density.push(p / width);
            stderr.push((p * (1.0 - p) / n).sqrt() / width);
        }
        Ok(MCEstimate {
            bin_edges: bin_edges.to_vec(),
            density,
            stderr,
            n_samples: samples.len(),
            n_steps,
            seed,
            model,
        })
    }

    /// Total mass inside the histogram range.
    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(j, d)| d * (self.bin_edges[j + 1] - self.bin_edges[j]))
            .sum()
    }

    /// CSV serialization: `bin_left,bin_right,density,stderr`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("bin_left,bin_right,density,stderr\n");
        for j in 0..self.density.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(self.bin_edges[j]),
                fmt_f64(self.bin_edges[j + 1]),
                fmt_f64(self.density[j]),
                fmt_f64(self.stderr[j])
            ));
        }
        s
    }

    /// Fraction of bins where |density − reference| ≤ z·stderr, among bins
    /// with a minimum expected count (near-empty bins carry no information).
    pub fn agreement_fraction(&self, reference: impl Fn(f64) -> f64, z: f64) -> f64 {
        let mut used = 0usize;
        let mut ok = 0usize;
        for j in 0..self.density.len() {
            let mid = 0.5 * (self.bin_edges[j] + self.bin_edges[j + 1]);
            let width = self.bin_edges[j + 1] - self.bin_edges[j];
            let expect = reference(mid) * width * self.n_samples as f64;
            if expect < 10.0 {
                continue;
            }
            used += 1;
            let se = self
                .stderr[j]
                .max((expect.sqrt() / self.n_samples as f64) / width);
            if (self.density[j] - reference(mid)).abs() <= z * se {
                ok += 1;
            }
        }
        if used == 0 {
            return 1.0;
        }
        ok as f64 / used as f64
    }
}

/// d* estimate from skeleton first passage into (0, ∞), with censoring
/// bracket and stderr.
#[derive(Debug, Clone, Serialize)]
pub struct DStarEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Interval half-width from paths that never pass by t_max: their
    /// e^{-τ} lies in [0, e^{-t_max}].
    pub bracket_halfwidth: f64,
    pub censored_fraction: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub t_max: f64,
    pub seed: u64,
}

impl DStarEstimate {
    pub fn total_uncertainty(&self) -> f64 {
        self.stderr + self.bracket_halfwidth
    }
}

/// Estimate d* = 1 − E(e^{-τ₀⁺}) by skeleton first passage into (0,∞).
///
/// Regular-upward models return exactly 0 (no simulation). The skeleton
/// overestimates τ₀⁺ (it can only detect crossings at grid times), so the
/// estimate is biased upward; control it by raising n_steps.
pub fn estimate_ladder_time_drift(
    model: &ModelSpec,
    t_max: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<DStarEstimate> {
    if model.regular_up {
        return Ok(DStarEstimate {
            value: 0.0,
            stderr: 0.0,
            bracket_halfwidth: 0.0,
            censored_fraction: 0.0,
            n_paths: 0,
            n_steps,
            t_max,
            seed,
        });
    }
    if !(t_max > 0.0) || n_steps == 0 || n_paths == 0 {
        return Err(Error::invalid(
            "estimate needs t_max > 0, n_steps > 0, n_paths > 0",
        ));
    }
    let dt = t_max / n_steps as f64;
    // e^{-τ̂} per path; censored paths contribute the bracket midpoint
    let tail = (-t_max).exp();
    let contributions: Vec<(f64, bool)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut x = 0.0;
            for step in 1..=n_steps {
                x += model
                    .sample_increment(dt, &mut rng)
                    .expect("increment sampling cannot fail for validated models");
                if x > 0.0 {
                    return ((-(step as f64) * dt).exp(), false);
                }
            }
            (0.5 * tail, true)
        })
        .collect();
    let n = n_paths as f64;
    let mean: f64 = contributions.iter().map(|c| c.0).sum::<f64>() / n;
    let var: f64 = contributions
        .iter()
        .map(|c| (c.0 - mean) * (c.0 - mean))
        .sum::<f64>()
        / (n - 1.0);
    let censored = contributions.iter().filter(|c| c.1).count() as f64 / n;
    Ok(DStarEstimate {
        value: 1.0 - mean,
        stderr: (var / n).sqrt(),
        bracket_halfwidth: 0.5 * tail * censored,
        censored_fraction: censored,
        n_paths,
        n_steps,
        t_max,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{normal_sf, positive_stable_density, SeriesEvalPolicy};
    use approx::assert_relative_eq;

    #[test]
    fn half_stable_cdf_anchor() {
        // P(T_1 ≤ 1) = 2Φ̄(1) ≈ 0.3173105 within 3 stderr at 1e6 draws
        let n = 1_000_000;
        let mut hits = 0usize;
        for i in 0..n as u64 {
            let mut rng = path_rng(7, i);
            if sample_positive_stable(0.5, &mut rng).unwrap() <= 1.0 {
                hits += 1;
            }
        }
        let p = hits as f64 / n as f64;
        let target = 2.0 * normal_sf(1.0);
        let se = (target * (1.0 - target) / n as f64).sqrt();
        assert!(
            (p - target).abs() < 3.0 * se,
            "p = {p}, target = {target}, se = {se}"
        );
    }

    #[test]
    fn half_stable_laplace_transform_anchor() {
        // E e^{-T_1} = e^{-√2} ≈ 0.2431167 within 3 stderr
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n as u64 {
            let mut rng = path_rng(11, i);
            let v = (-sample_positive_stable(0.5, &mut rng).unwrap()).exp();
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let target = (-std::f64::consts::SQRT_2).exp();
        assert!(
            (mean - target).abs() < 3.0 * se,
            "mean = {mean}, target = {target}, se = {se}"
        );
    }

    #[test]
    fn kanter_matches_series_density_at_beta_04() {
        // histogram mass near u = 5 vs the series, 3 stderr
        let n = 400_000usize;
        let (lo, hi) = (4.5, 5.5);
        let mut hits = 0usize;
        for i in 0..n as u64 {
            let mut rng = path_rng(23, i);
            let v = sample_positive_stable(0.4, &mut rng).unwrap();
            if v >= lo && v < hi {
                hits += 1;
            }
        }
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt() / (hi - lo);
        let est = p / (hi - lo);
        let pol = SeriesEvalPolicy::default();
        let target = crate::quad::gauss16(lo, hi, |u| {
            positive_stable_density(0.4, 1.0, u, &pol).unwrap()
        }) / (hi - lo);
        assert!(
            (est - target).abs() < 3.0 * se,
            "est = {est}, target = {target}, se = {se}"
        );
    }

    #[test]
    fn all_stable_samples_positive() {
        for &beta in &[0.2, 0.5, 0.8] {
            for i in 0..2_000u64 {
                let mut rng = path_rng(3, i);
                let v = sample_positive_stable(beta, &mut rng).unwrap();
                assert!(v > 0.0 && v.is_finite());
            }
        }
    }

    #[test]
    fn skeleton_max_dominates_terminal() {
        for model in [
            ModelSpec::brownian(),
            ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap(),
            ModelSpec::subordinator_minus_drift(1.0).unwrap(),
            ModelSpec::symmetric_stable(1.0).unwrap(),
        ] {
            let s = simulate_terminal_and_max(&model, 0.5, 64, 500, 17).unwrap();
            for (x, m) in s.terminal.iter().zip(&s.skeleton_max) {
                assert!(m >= x && *m >= 0.0);
            }
        }
    }

    #[test]
    fn mean_skeleton_max_monotone_in_steps() {
        let bm = ModelSpec::brownian();
        let mut prev = f64::NEG_INFINITY;
        let mut prev_se = 0.0;
        for &steps in &[16usize, 64, 256, 1024] {
            let s = simulate_terminal_and_max(&bm, 1.0, steps, 40_000, 29).unwrap();
            let n = s.skeleton_max.len() as f64;
            let mean: f64 = s.skeleton_max.iter().sum::<f64>() / n;
            let var: f64 = s
                .skeleton_max
                .iter()
                .map(|m| (m - mean) * (m - mean))
                .sum::<f64>()
                / (n - 1.0);
            let se = (var / n).sqrt();
            assert!(
                mean >= prev - 2.0 * (se + prev_se),
                "mean skeleton max decreased: {prev} -> {mean} at {steps} steps"
            );
            prev = mean;
            prev_se = se;
        }
    }

    #[test]
    fn histogram_matches_standard_normal() {
        let n = 1_000_000;
        let samples: Vec<f64> = (0..n as u64)
            .map(|i| {
                let mut rng = path_rng(41, i);
                standard_normal(&mut rng)
            })
            .collect();
        let edges: Vec<f64> = (0..=100).map(|j| -4.0 + 8.0 * j as f64 / 100.0).collect();
        let est = MCEstimate::from_samples(&samples, &edges, 1, 41, "normal".into()).unwrap();
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let frac = est.agreement_fraction(phi, 3.0);
        assert!(frac >= 0.95, "agreement fraction {frac}");
        assert!(est.mass() <= 1.0 + 1e-9);
    }

    #[test]
    fn histogram_edge_cases() {
        let samples = vec![0.3; 2_000];
        let est = MCEstimate::from_samples(&samples, &[0.0, 2.0], 1, 0, "const".into()).unwrap();
        assert_relative_eq!(est.density[0], 0.5, max_relative = 1e-12);
        assert!(MCEstimate::from_samples(&[], &[0.0, 1.0], 1, 0, "e".into()).is_err());
        assert!(MCEstimate::from_samples(&samples, &[1.0], 1, 0, "e".into()).is_err());
    }

    #[test]
    fn bit_exact_reproducibility_across_worker_counts() {
        let model = ModelSpec::symmetric_stable(1.0).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = pool1.install(|| simulate_terminal_and_max(&model, 0.5, 32, 4_000, 99).unwrap());
        let b = pool4.install(|| simulate_terminal_and_max(&model, 0.5, 32, 4_000, 99).unwrap());
        assert_eq!(a.terminal, b.terminal);
        assert_eq!(a.skeleton_max, b.skeleton_max);
        let c = pool4.install(|| simulate_terminal_and_max(&model, 0.5, 32, 4_000, 100).unwrap());
        assert_ne!(a.terminal, c.terminal);
    }

    #[test]
    fn ladder_drift_zero_for_regular_models() {
        let est = estimate_ladder_time_drift(&ModelSpec::brownian(), 4.0, 64, 100, 1).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.n_paths, 0);
    }

    #[test]
    fn ladder_drift_estimate_is_stable_across_seeds() {
        let m = ModelSpec::subordinator_minus_drift(1.0).unwrap();
        let a = estimate_ladder_time_drift(&m, 8.0, 16_384, 40_000, 5).unwrap();
        let b = estimate_ladder_time_drift(&m, 8.0, 16_384, 40_000, 6).unwrap();
        assert!(a.value > 0.0 && a.value < 1.0);
        let joint = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
        assert!(
            (a.value - b.value).abs() < 3.0 * joint + a.bracket_halfwidth + b.bracket_halfwidth,
            "a = {} ± {}, b = {} ± {}",
            a.value,
            a.stderr,
            b.value,
            b.stderr
        );
    }
}
