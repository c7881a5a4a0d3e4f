//! Densities of the four concrete models: transition density p_t(x), Lévy
//! density ν(x), positivity P(X_t > 0), and the renewal-function scale h*.
//!
//! Closed forms:
//!
//! * Brownian motion: p_t(x) = (2πt)^{-1/2} e^{-x²/(2t)}; no jump part.
//! * Subordinated drift BM, α = 1:
//!   p_t(x) = (a t e^{ax}/π) K₁(a√(x²+t²)) / √(x²+t²),
//!   ν(x)   = a^{(1+α)/2} e^{ax} K_{(1+α)/2}(a|x|) / (π |x|^{(1+α)/2}).
//! * Subordinator minus drift:
//!   p_t(x) = (t/√(2π)) (x+at)^{-3/2} e^{-t²/(2(x+at))} on x > -at,
//!   ν(x)   = x^{-3/2}/√(2π) on x > 0.
//! * Symmetric stable: α ∈ {1, 2} closed (Cauchy / Gaussian), otherwise the
//!   subordination quadrature; ν(x) = c_α |x|^{-1-α} with
//!   c_α = Γ((1+α)/2) 2^{(α-1)/2} / π fixed by the subordination
//!   construction (c₁ = 1/π).

use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec};
use crate::quad::{gauss16, gauss_log_panels};
use crate::specfun::{
    bessel_k_scaled, gamma_fn, normal_cdf, positive_stable_density, symmetric_stable_density,
    SeriesEvalPolicy,
};

const SQRT_2PI: f64 = 2.506_628_274_631_000_6;

fn policy() -> SeriesEvalPolicy {
    SeriesEvalPolicy::default()
}

impl ModelSpec {
    /// Transition density p_t(x). Points outside the support return 0.
    pub fn p(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("p needs t > 0, got {t}")));
        }
        match self.kind {
            ModelKind::BrownianMotion => {
                Ok((-x * x / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt())
            }
            ModelKind::SubordinatedDriftBM => {
                if (self.alpha - 1.0).abs() < 1e-12 {
                    let w = self.a * (x * x + t * t).sqrt();
                    let k1 = bessel_k_scaled(1.0, w)?;
                    Ok(self.a * t / std::f64::consts::PI * (self.a * x - w).exp() * k1
                        / (x * x + t * t).sqrt())
                } else {
                    self.subordinated_p_quadrature(t, x)
                }
            }
            ModelKind::SubordinatorMinusDrift => {
                let w = x + self.a * t;
                if w <= 0.0 {
                    return Ok(0.0);
                }
                Ok(t / SQRT_2PI * w.powf(-1.5) * (-t * t / (2.0 * w)).exp())
            }
            ModelKind::SymmetricStable => symmetric_stable_density(self.alpha, t, x, &policy()),
        }
    }

    /// p_t(x) for the general-α subordinated drift model:
    /// ∫ (2πs)^{-1/2} e^{-(x-as)²/(2s)} η_t^{(α/2)}(s) ds.
    fn subordinated_p_quadrature(&self, t: f64, x: f64) -> Result<f64> {
        let beta = 0.5 * self.alpha;
        let pol = policy();
        let c = crate::specfun::stable_unit_scale(beta)?;
        let tscale = t.powf(1.0 / beta);
        let s_floor = crate::specfun::series_floor(beta) * c * tscale * 1.0000001;
        let s_peak = (x * x).abs().max(c * tscale).max(4.0 * s_floor);
        let s_min = if x.abs() > 0.0 {
            (x * x / (x * x / s_peak + 80.0)).max(s_floor)
        } else {
            s_floor
        };
        let s_max = {
            let mut s = s_peak;
            for _ in 0..60 {
                // envelope of the integrand tail: Gaussian factor flattens,
                // subordinator tail ~ s^{-1-β}, drift term decays as e^{-a²s/2}
                if (-self.a * self.a * s / 2.0).exp() * s.powf(-1.5 - beta) < 1e-18 {
                    break;
                }
                s *= 2.0;
            }
            s
        };
        let a = self.a;
        let f = |s: f64| -> f64 {
            let eta = positive_stable_density(beta, t, s, &pol).unwrap_or(0.0);
            let d = x - a * s;
            (2.0 * std::f64::consts::PI * s).sqrt().recip() * (-d * d / (2.0 * s)).exp() * eta
        };
        Ok(gauss_log_panels(s_min, s_max, 80, f))
    }

    /// Lévy density ν(x), x ≠ 0. Models without positive-side jumps at x
    /// return 0 there; Brownian motion has no jump part at all.
    pub fn levy_density(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Err(Error::invalid("levy_density is undefined at x = 0"));
        }
        match self.kind {
            ModelKind::BrownianMotion => Err(Error::MissingCapability("no Lévy density")),
            ModelKind::SubordinatedDriftBM => {
                let nu_ord = 0.5 * (1.0 + self.alpha);
                let w = self.a * x.abs();
                let k = bessel_k_scaled(nu_ord, w)?;
                Ok(self.a.powf(nu_ord) * (self.a * x - w).exp() * k
                    / (std::f64::consts::PI * x.abs().powf(nu_ord)))
            }
            ModelKind::SubordinatorMinusDrift => {
                if x < 0.0 {
                    Ok(0.0)
                } else {
                    Ok(x.powf(-1.5) / SQRT_2PI)
                }
            }
            ModelKind::SymmetricStable => {
                if self.alpha >= 2.0 {
                    return Err(Error::MissingCapability("no Lévy density"));
                }
                Ok(self.levy_constant()? * x.abs().powf(-1.0 - self.alpha))
            }
        }
    }

    /// c_α of the symmetric stable Lévy density.
    pub fn levy_constant(&self) -> Result<f64> {
        match self.kind {
            ModelKind::SymmetricStable => Ok(gamma_fn(0.5 * (1.0 + self.alpha))?
                * 2f64.powf(0.5 * (self.alpha - 1.0))
                / std::f64::consts::PI),
            _ => Err(Error::MissingCapability("levy_constant")),
        }
    }

    /// Upper Lévy tail ∫_x^∞ ν(y) dy for x > 0.
    pub fn levy_tail(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::invalid("levy_tail needs x > 0"));
        }
        match self.kind {
            ModelKind::BrownianMotion => Err(Error::MissingCapability("no Lévy density")),
            ModelKind::SubordinatorMinusDrift => Ok(2.0 * x.powf(-0.5) / SQRT_2PI),
            ModelKind::SymmetricStable => {
                if self.alpha >= 2.0 {
                    return Err(Error::MissingCapability("no Lévy density"));
                }
                Ok(self.levy_constant()? * x.powf(-self.alpha) / self.alpha)
            }
            ModelKind::SubordinatedDriftBM => {
                // quadrature over a couple of decades, then the asymptotic
                // power tail ν(y) ≈ sqrt(a/(2π)) y^{-1-α/2} beyond
                let cut = (x * 64.0).max(64.0 / self.a);
                let body = gauss_log_panels(x, cut, 40, |y| self.levy_density(y).unwrap_or(0.0));
                let beta = 0.5 * self.alpha;
                let tail = (self.a / (2.0 * std::f64::consts::PI)).sqrt() * cut.powf(-beta) / beta;
                Ok(body + tail)
            }
        }
    }

    /// P(X_t > 0).
    pub fn positivity(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("positivity needs t > 0, got {t}")));
        }
        match self.kind {
            ModelKind::BrownianMotion | ModelKind::SymmetricStable => Ok(0.5),
            ModelKind::SubordinatorMinusDrift => {
                // P(T_t > at) = P(T_1 > a/t) with T_1 = 1/Z²
                Ok(2.0 * normal_cdf((t / self.a).sqrt()) - 1.0)
            }
            ModelKind::SubordinatedDriftBM => {
                // E[Φ(a√T_t)] over the subordinator law
                let beta = 0.5 * self.alpha;
                let pol = policy();
                let c = crate::specfun::stable_unit_scale(beta)?;
                let tscale = t.powf(1.0 / beta);
                let s_min = if (beta - 0.5).abs() < 1e-13 {
                    1e-10 * tscale
                } else {
                    crate::specfun::series_floor(beta) * c * tscale * 1.0000001
                };
                let s_max = {
                    let mut s = c * tscale;
                    while t * s.powf(-1.0 - beta) > 1e-14 && s < 1e300 {
                        s *= 4.0;
                    }
                    s
                };
                let a = self.a;
                let mass_and_val = gauss_log_panels(s_min, s_max, 80, |s| {
                    positive_stable_density(beta, t, s, &pol).unwrap_or(0.0)
                        * normal_cdf(a * s.sqrt())
                });
                let mass = gauss_log_panels(s_min, s_max, 80, |s| {
                    positive_stable_density(beta, t, s, &pol).unwrap_or(0.0)
                });
                // unresolved left-tail mass sits where Φ(a√s) ≈ Φ(a√s_min)
                let below = (1.0 - mass).clamp(0.0, 1.0);
                Ok((mass_and_val + below * normal_cdf(a * (0.5 * s_min).sqrt())).clamp(0.0, 1.0))
            }
        }
    }

    /// Small-t limit of P(X_t > 0); drives the startup exponent of the
    /// excursion-tail solver.
    pub fn positivity_small_t_limit(&self) -> f64 {
        match self.kind {
            ModelKind::SubordinatorMinusDrift => 0.0,
            _ => 0.5,
        }
    }

    /// Characteristic spatial scale of the process over a time span s;
    /// places the concentrated part of the entrance law.
    pub fn spatial_scale(&self, s: f64) -> f64 {
        match self.kind {
            ModelKind::BrownianMotion => s.sqrt(),
            ModelKind::SymmetricStable => s.powf(1.0 / self.alpha),
            ModelKind::SubordinatedDriftBM => s.powf(1.0 / self.alpha),
            ModelKind::SubordinatorMinusDrift => self.a * s,
        }
    }

    /// Renewal-function scale h*(x), up to one model-wide positive constant:
    /// callers may only use ratios h*(x)/h*(y). Brownian motion: x;
    /// symmetric stable: x^{α/2}.
    pub fn h_star(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::invalid("h_star needs x > 0"));
        }
        match self.kind {
            ModelKind::BrownianMotion => Ok(x),
            ModelKind::SymmetricStable => Ok(x.powf(0.5 * self.alpha)),
            _ => Err(Error::MissingCapability("h_star")),
        }
    }

    /// ∫ p_t over the whole support, by quadrature; used by the mass
    /// invariants.
    pub fn transition_mass(&self, t: f64) -> Result<f64> {
        let far = 1e12_f64;
        if self.kind == ModelKind::SubordinatorMinusDrift {
            // substitute w = x + at: density t (2π)^{-1/2} w^{-3/2} e^{-t²/(2w)}
            // on w > 0, sharply peaked at w ~ t²/3
            let w_min = t * t / 90.0;
            return Ok(gauss_log_panels(w_min, far, 140, |w| {
                self.p(t, w - self.a * t).unwrap_or(0.0)
            }));
        }
        // two-sided models: log panels resolve every scale down to x0
        let scale = match self.kind {
            ModelKind::BrownianMotion => t.sqrt(),
            ModelKind::SubordinatedDriftBM => {
                t.powf(1.0 / self.alpha) + self.a * t.powf(2.0 / self.alpha)
            }
            ModelKind::SymmetricStable => t.powf(1.0 / self.alpha),
            ModelKind::SubordinatorMinusDrift => unreachable!(),
        };
        let x0 = 1e-4 * scale;
        let center = gauss16(-x0, x0, |x| self.p(t, x).unwrap_or(0.0));
        let right = gauss_log_panels(x0, far, 140, |x| self.p(t, x).unwrap_or(0.0));
        let left = gauss_log_panels(x0, far, 140, |x| self.p(t, -x).unwrap_or(0.0));
        Ok(center + right + left)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::quad::gauss_log_panels;
    use approx::assert_relative_eq;

    #[test]
    fn bm_density_at_origin() {
        let bm = ModelSpec::brownian();
        assert_relative_eq!(
            bm.p(1.0, 0.0).unwrap(),
            0.398_942_280_401_432_7,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sub_drift_closed_form_value() {
        // a=1, t=0.01, x=1 → ≈ 3.930e-3
        let m = ModelSpec::subordinator_minus_drift(1.0).unwrap();
        let v = m.p(0.01, 1.0).unwrap();
        let exact = 0.01 / SQRT_2PI * 1.01f64.powf(-1.5) * (-0.0001f64 / (2.0 * 1.01)).exp();
        assert_relative_eq!(v, exact, max_relative = 1e-14);
        assert!((v - 3.930e-3).abs() < 1e-5, "v = {v}");
        // outside the support
        assert_eq!(m.p(0.01, -0.02).unwrap(), 0.0);
    }

    #[test]
    fn sub_bm_closed_form_value() {
        // a=1, α=1: p_t(x) = (t e^x/π) K₁(√(x²+t²))/√(x²+t²) at t=0.5, x=2
        let m = ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap();
        let v = m.p(0.5, 2.0).unwrap();
        let w = 4.25f64.sqrt();
        let expected =
            0.5 * 2.0f64.exp() / std::f64::consts::PI * crate::specfun::bessel_k(1.0, w).unwrap()
                / w;
        assert_relative_eq!(v, expected, max_relative = 1e-12);
    }

    #[test]
    fn sub_bm_closed_form_matches_subordination_quadrature() {
        let m = ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap();
        // independent oracle: integrate the Gaussian kernel against the
        // closed-form 1/2-stable density
        for &(t, x) in &[(0.5, 2.0), (0.1, 1.0), (1.0, -0.5)] {
            let oracle = gauss_log_panels(1e-12, 1e6, 120, |s| {
                let d: f64 = x - s;
                (2.0 * std::f64::consts::PI * s).sqrt().recip() * (-d * d / (2.0 * s)).exp()
                    * (t / SQRT_2PI * s.powf(-1.5) * (-t * t / (2.0 * s)).exp())
            });
            assert_relative_eq!(m.p(t, x).unwrap(), oracle, max_relative = 1e-7);
        }
    }

    #[test]
    fn levy_densities_match_frozen_values() {
        let sd = ModelSpec::subordinator_minus_drift(1.0).unwrap();
        assert_relative_eq!(
            sd.levy_density(1.0).unwrap(),
            0.398_942_280_401_432_7,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            sd.levy_density(4.0).unwrap(),
            0.125 / SQRT_2PI,
            max_relative = 1e-12
        );
        assert_eq!(sd.levy_density(-1.0).unwrap(), 0.0);

        // sub_bm a=1 α=1 at x=2: e² K₁(2) / (2π) ≈ 0.16448
        let sb = ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap();
        let v = sb.levy_density(2.0).unwrap();
        assert!((v - 0.16448).abs() < 1e-4, "v = {v}");

        // Cauchy: ν(x) = 1/(π x²)
        let ss = ModelSpec::symmetric_stable(1.0).unwrap();
        assert_relative_eq!(
            ss.levy_density(1.0).unwrap(),
            std::f64::consts::FRAC_1_PI,
            max_relative = 1e-12
        );
        assert_relative_eq!(ss.levy_constant().unwrap(), std::f64::consts::FRAC_1_PI, max_relative = 1e-12);

        assert!(ModelSpec::brownian().levy_density(1.0).is_err());
        assert!(ss.levy_density(0.0).is_err());
    }

    #[test]
    fn sub_bm_general_alpha_levy_density_consistent_with_alpha_one() {
        // the (1+α)/2 exponent reading: at α = 1 the general formula must
        // reduce to a e^{ax} K₁(a|x|)/(π|x|)
        let m = ModelSpec::subordinated_drift_bm(1.5, 1.0).unwrap();
        let x = 1.7f64;
        let w = 1.5 * x;
        let closed =
            1.5 * w.exp() * crate::specfun::bessel_k(1.0, w).unwrap() / (std::f64::consts::PI * x);
        assert_relative_eq!(m.levy_density(x).unwrap(), closed, max_relative = 1e-10);
    }

    #[test]
    fn levy_density_is_integrable_at_infinity() {
        // ∫_{|x|>1} ν < ∞, numerically
        for spec in [
            ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap(),
            ModelSpec::subordinator_minus_drift(1.0).unwrap(),
            ModelSpec::symmetric_stable(1.0).unwrap(),
        ] {
            let up = spec.levy_tail(1.0).unwrap();
            assert!(up.is_finite() && up > 0.0);
            let down = gauss_log_panels(1.0, 1e9, 60, |x| spec.levy_density(-x).unwrap_or(0.0));
            assert!(down.is_finite());
        }
    }

    #[test]
    fn levy_tail_matches_direct_quadrature() {
        let sb = ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap();
        let direct = gauss_log_panels(2.0, 1e10, 120, |x| sb.levy_density(x).unwrap());
        assert_relative_eq!(sb.levy_tail(2.0).unwrap(), direct, max_relative = 5e-4);
    }

    #[test]
    fn positivity_closed_forms() {
        assert_eq!(ModelSpec::brownian().positivity(0.3).unwrap(), 0.5);
        assert_eq!(
            ModelSpec::symmetric_stable(1.0).unwrap().positivity(2.0).unwrap(),
            0.5
        );
        // sub_drift: P(X_t > 0) = 2Φ(√(t/a)) − 1, cross-checked by
        // quadrature of the closed-form density over x > 0
        let m = ModelSpec::subordinator_minus_drift(1.0).unwrap();
        for &t in &[0.01, 0.1, 1.0, 10.0] {
            let q = gauss_log_panels(1e-10, 1e12, 140, |x| m.p(t, x).unwrap());
            assert_relative_eq!(m.positivity(t).unwrap(), q, max_relative = 2e-5);
        }
        // small-t: mass drains out of (0,∞) because of the drift
        assert!(m.positivity(0.01).unwrap() < 0.1);
        assert_relative_eq!(
            m.positivity(0.01).unwrap(),
            2.0 * crate::specfun::normal_cdf(0.1) - 1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn positivity_sub_bm_matches_density_quadrature() {
        let m = ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap();
        for &t in &[0.05, 0.5] {
            let q = gauss_log_panels(1e-9, 1e10, 140, |x| m.p(t, x).unwrap());
            assert_relative_eq!(m.positivity(t).unwrap(), q, max_relative = 2e-4);
        }
    }

    #[test]
    fn h_star_ratios() {
        let bm = ModelSpec::brownian();
        assert_relative_eq!(
            bm.h_star(2.0).unwrap() / bm.h_star(1.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        let ss = ModelSpec::symmetric_stable(1.0).unwrap();
        assert_relative_eq!(
            ss.h_star(4.0).unwrap() / ss.h_star(1.0).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        // monotone nondecreasing
        let mut prev = 0.0;
        for i in 1..40 {
            let v = ss.h_star(0.1 * i as f64).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(ModelSpec::subordinator_minus_drift(1.0)
            .unwrap()
            .h_star(1.0)
            .is_err());
    }

    #[test]
    fn transition_mass_is_one() {
        let models = [
            ModelSpec::brownian(),
            ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap(),
            ModelSpec::subordinator_minus_drift(1.0).unwrap(),
            ModelSpec::symmetric_stable(1.0).unwrap(),
        ];
        for m in &models {
            for &t in &[0.05, 0.5, 1.0] {
                let mass = m.transition_mass(t).unwrap();
                assert!(
                    (mass - 1.0).abs() < 1e-4,
                    "{}: mass at t={t} is {mass}",
                    m.label()
                );
            }
        }
    }

    #[test]
    fn small_t_density_ratio_tends_to_levy_density() {
        // max over a fixed x-grid of |p/(tν) − 1| decreases along t
        let models = [
            ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap(),
            ModelSpec::subordinator_minus_drift(1.0).unwrap(),
            ModelSpec::symmetric_stable(1.0).unwrap(),
        ];
        for m in &models {
            let xs: Vec<f64> = (0..40).map(|i| 1.0 + 0.25 * i as f64).collect();
            let mut prev = f64::INFINITY;
            for &t in &[0.1, 0.03, 0.01, 0.003] {
                let worst = xs
                    .iter()
                    .map(|&x| {
                        let r = m.p(t, x).unwrap() / (t * m.levy_density(x).unwrap());
                        (r - 1.0).abs()
                    })
                    .fold(0.0, f64::max);
                assert!(
                    worst < prev * 1.0001,
                    "{}: sup ratio error grew from {prev} to {worst} at t={t}",
                    m.label()
                );
                prev = worst;
            }
            assert!(prev < 0.05, "{}: final ratio error {prev}", m.label());
        }
    }

    #[test]
    fn levy_density_comparability_conditions() {
        // ν(y) ≤ c ν(x) for y > x > r, and ν(x) ≤ c ν(2x): power laws and
        // the positive half-line of the subordinated model
        let models = [
            ModelSpec::subordinator_minus_drift(1.0).unwrap(),
            ModelSpec::symmetric_stable(1.0).unwrap(),
            ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap(),
        ];
        for m in &models {
            let mut worst_doubling: f64 = 0.0;
            for i in 1..=60 {
                let x = 0.5 + 0.5 * i as f64;
                let here = m.levy_density(x).unwrap();
                let there = m.levy_density(2.0 * x).unwrap();
                assert!(there <= here * 1.0000001, "{}: ν not decreasing", m.label());
                worst_doubling = worst_doubling.max(here / there);
            }
            assert!(
                worst_doubling < 16.0,
                "{}: doubling constant {worst_doubling}",
                m.label()
            );
        }
    }
}
