//! Model descriptors: which Lévy process, its parameters, regularity flags
//! and ladder-time drifts.
//!
//! The ladder-time subordinators carry drifts `d` (time spent at the
//! supremum) and `d*` (time spent at the infimum) with `d·d* = 0`: at most
//! one half-line can be irregular. `d > 0` iff (−∞,0) is not regular,
//! `d* > 0` iff (0,∞) is not regular.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    /// Standard Brownian motion (variance t at time t). No jump part.
    BrownianMotion,
    /// Brownian motion with drift `a`, subordinated by the α/2-stable
    /// subordinator.
    SubordinatedDriftBM,
    /// The 1/2-stable subordinator minus the drift `a·t`; the example where
    /// (0,∞) is not regular.
    SubordinatorMinusDrift,
    /// Symmetric α-stable process, built by subordinating standard Brownian
    /// motion (α = 1 is Cauchy, α = 2 is Brownian motion).
    SymmetricStable,
}

impl ModelKind {
    pub fn config_name(self) -> &'static str {
        match self {
            ModelKind::BrownianMotion => "brownian",
            ModelKind::SubordinatedDriftBM => "sub_bm",
            ModelKind::SubordinatorMinusDrift => "sub_drift",
            ModelKind::SymmetricStable => "sym_stable",
        }
    }

    pub fn from_config_name(name: &str) -> Result<Self> {
        match name {
            "brownian" => Ok(ModelKind::BrownianMotion),
            "sub_bm" => Ok(ModelKind::SubordinatedDriftBM),
            "sub_drift" => Ok(ModelKind::SubordinatorMinusDrift),
            "sym_stable" => Ok(ModelKind::SymmetricStable),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected brownian | sub_bm | sub_drift | sym_stable)"
            ))),
        }
    }
}

/// What a model can provide to the downstream modules.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModelCapabilities {
    pub has_closed_p: bool,
    pub has_closed_qstar: bool,
    pub has_h_star: bool,
    pub supports_negative_x: bool,
    /// Has a jump part, i.e. a nontrivial Lévy density.
    pub has_levy_density: bool,
}

/// The downward ladder-time drift d*: zero for regular-up models, and
/// either an external estimate or still unknown otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DStar {
    Zero,
    Known(f64),
    /// (0,∞) is irregular but no estimate has been supplied yet; resolved
    /// by the Monte Carlo ladder-drift estimator.
    EstimateRequired,
}

impl DStar {
    pub fn value(&self) -> Option<f64> {
        match self {
            DStar::Zero => Some(0.0),
            DStar::Known(v) => Some(*v),
            DStar::EstimateRequired => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Stability index in (0, 2]; fixed to 1 for the kinds built on the
    /// 1/2-stable subordinator.
    pub alpha: f64,
    /// Drift magnitude (> 0 where applicable, 0 otherwise).
    pub a: f64,
    pub regular_up: bool,
    pub regular_down: bool,
    pub symmetric: bool,
    /// Upward ladder-time drift d (zero unless (−∞,0) is irregular).
    pub d: f64,
    /// Downward ladder-time drift d*.
    pub d_star: DStar,
}

impl ModelSpec {
    pub fn brownian() -> Self {
        ModelSpec {
            kind: ModelKind::BrownianMotion,
            alpha: 2.0,
            a: 0.0,
            regular_up: true,
            regular_down: true,
            symmetric: true,
            d: 0.0,
            d_star: DStar::Zero,
        }
    }

    /// B_t + a·t subordinated by T^{(α/2)}, a > 0, α in (0, 2).
    pub fn subordinated_drift_bm(a: f64, alpha: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::invalid(format!("drift a must be > 0, got {a}")));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::invalid(format!(
                "sub_bm needs alpha in (0,2), got {alpha}"
            )));
        }
        Ok(ModelSpec {
            kind: ModelKind::SubordinatedDriftBM,
            alpha,
            a,
            regular_up: true,
            regular_down: true,
            symmetric: false,
            d: 0.0,
            d_star: DStar::Zero,
        })
    }

    /// T^{(1/2)}_t − a·t, a > 0. Irregular upward: d* > 0, supplied later by
    /// the Monte Carlo estimator.
    pub fn subordinator_minus_drift(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::invalid(format!("drift a must be > 0, got {a}")));
        }
        Ok(ModelSpec {
            kind: ModelKind::SubordinatorMinusDrift,
            alpha: 1.0,
            a,
            regular_up: false,
            regular_down: true,
            symmetric: false,
            d: 0.0,
            d_star: DStar::EstimateRequired,
        })
    }

    pub fn symmetric_stable(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::invalid(format!(
                "sym_stable needs alpha in (0,2], got {alpha}"
            )));
        }
        Ok(ModelSpec {
            kind: ModelKind::SymmetricStable,
            alpha,
            a: 0.0,
            regular_up: true,
            regular_down: true,
            symmetric: true,
            d: 0.0,
            d_star: DStar::Zero,
        })
    }

    /// Attach an externally estimated d* (only meaningful for models flagged
    /// `EstimateRequired`).
    pub fn with_d_star(mut self, d_star: f64) -> Result<Self> {
        if self.regular_up {
            return Err(Error::invalid(
                "d* must stay 0 for models regular on (0,\u{221e})",
            ));
        }
        if !(d_star > 0.0 && d_star < 1.0) {
            return Err(Error::invalid(format!(
                "d* estimate must lie in (0,1), got {d_star}"
            )));
        }
        self.d_star = DStar::Known(d_star);
        self.validate()?;
        Ok(self)
    }

    /// Construction invariants: d·d* = 0 always; regularity flags and drifts
    /// agree; symmetric models are regular on both sides.
    pub fn validate(&self) -> Result<()> {
        let ds = self.d_star.value().unwrap_or(f64::NAN);
        if !ds.is_nan() && self.d * ds != 0.0 {
            return Err(Error::invalid(format!(
                "d·d* must vanish, got d={} d*={}",
                self.d, ds
            )));
        }
        if self.regular_up != (self.d_star == DStar::Zero) {
            return Err(Error::invalid(
                "regular_up must hold exactly when d* = 0",
            ));
        }
        if self.regular_down != (self.d == 0.0) {
            return Err(Error::invalid("regular_down must hold exactly when d = 0"));
        }
        if self.symmetric && (!self.regular_up || !self.regular_down) {
            return Err(Error::invalid("symmetric models are regular on both sides"));
        }
        Ok(())
    }

    pub fn capabilities(&self) -> ModelCapabilities {
        match self.kind {
            ModelKind::BrownianMotion => ModelCapabilities {
                has_closed_p: true,
                has_closed_qstar: true,
                has_h_star: true,
                supports_negative_x: true,
                has_levy_density: false,
            },
            ModelKind::SubordinatedDriftBM => ModelCapabilities {
                has_closed_p: (self.alpha - 1.0).abs() < 1e-12,
                has_closed_qstar: false,
                has_h_star: false,
                supports_negative_x: true,
                has_levy_density: true,
            },
            ModelKind::SubordinatorMinusDrift => ModelCapabilities {
                has_closed_p: true,
                has_closed_qstar: false,
                has_h_star: false,
                // support is (−a·t, ∞); the half-line below −a·t is empty
                supports_negative_x: false,
                has_levy_density: true,
            },
            ModelKind::SymmetricStable => ModelCapabilities {
                has_closed_p: (self.alpha - 1.0).abs() < 1e-12 || (self.alpha - 2.0).abs() < 1e-12,
                has_closed_qstar: false,
                has_h_star: true,
                supports_negative_x: true,
                has_levy_density: self.alpha < 2.0,
            },
        }
    }

    /// Regularity flags together with the ladder drifts (d, d*).
    pub fn regularity_profile(&self) -> (bool, bool, f64, DStar) {
        (self.regular_up, self.regular_down, self.d, self.d_star)
    }

    /// d* as a number; error if it still requires an estimate.
    pub fn d_star_value(&self) -> Result<f64> {
        self.d_star.value().ok_or_else(|| {
            Error::MissingPrerequisite(format!(
                "model {} needs a d* estimate; run `mc estimate-dstar` first",
                self.kind.config_name()
            ))
        })
    }

    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::BrownianMotion => "brownian".into(),
            ModelKind::SubordinatedDriftBM => {
                format!("sub_bm(a={}, alpha={})", self.a, self.alpha)
            }
            ModelKind::SubordinatorMinusDrift => format!("sub_drift(a={})", self.a),
            ModelKind::SymmetricStable => format!("sym_stable(alpha={})", self.alpha),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profiles() {
        let bm = ModelSpec::brownian();
        bm.validate().unwrap();
        assert_eq!(bm.regularity_profile(), (true, true, 0.0, DStar::Zero));

        let sd = ModelSpec::subordinator_minus_drift(1.0).unwrap();
        sd.validate().unwrap();
        assert!(!sd.regular_up && sd.regular_down);
        assert_eq!(sd.d, 0.0);
        assert_eq!(sd.d_star, DStar::EstimateRequired);
        assert!(sd.d_star_value().is_err());

        let sb = ModelSpec::subordinated_drift_bm(1.0, 1.0).unwrap();
        assert_eq!(sb.regularity_profile(), (true, true, 0.0, DStar::Zero));
    }

    #[test]
    fn ladder_drift_product_vanishes() {
        for spec in [
            ModelSpec::brownian(),
            ModelSpec::subordinated_drift_bm(2.0, 0.7).unwrap(),
            ModelSpec::symmetric_stable(1.0).unwrap(),
            ModelSpec::subordinator_minus_drift(1.0)
                .unwrap()
                .with_d_star(0.3)
                .unwrap(),
        ] {
            let ds = spec.d_star.value().unwrap_or(1.0);
            assert_eq!(spec.d * ds, 0.0, "{:?}", spec.kind);
        }
    }

    #[test]
    fn violating_specs_fail_validation() {
        let mut bad = ModelSpec::brownian();
        bad.d = 0.1; // d > 0 with regular_down = true
        assert!(bad.validate().is_err());

        let mut bad = ModelSpec::subordinator_minus_drift(1.0)
            .unwrap()
            .with_d_star(0.3)
            .unwrap();
        bad.d = 0.2; // both drifts positive
        assert!(bad.validate().is_err());

        assert!(ModelSpec::brownian().with_d_star(0.1).is_err());
        assert!(ModelSpec::subordinator_minus_drift(1.0)
            .unwrap()
            .with_d_star(1.5)
            .is_err());
    }

    #[test]
    fn constructor_input_checks() {
        assert!(ModelSpec::subordinated_drift_bm(0.0, 1.0).is_err());
        assert!(ModelSpec::subordinated_drift_bm(1.0, 2.0).is_err());
        assert!(ModelSpec::subordinator_minus_drift(-1.0).is_err());
        assert!(ModelSpec::symmetric_stable(2.5).is_err());
    }
}
