//! Entrance-law density q_t*(x) of the excursions reflected at the infimum,
//! solved from its Volterra convolution identity, together with the
//! excursion functionals n*(t<ζ), N*(t) and the dual tail n(t<ζ).
//!
//! The defining equation (marched in time, implicit in each space node) is
//!
//! ```text
//! x q_t*(x) = d* x p_t(x)/t + ∫_0^t du ∫_0^x dz q_u*(z) (x-z)/(t-u) p_{t-u}(x-z)
//! ```
//!
//! whose kernel tends to (x-z) ν(x-z) as u → t. The independent convolution
//! identity
//!
//! ```text
//! t q_t*(x) = d* p_t(x) + ∫_0^t ∫_0^x p_{t-u}(x-z) q_u*(z) dz du
//! ```
//!
//! is kept as a cross-check, and the excursion tails are tied together by
//!
//! ```text
//! ∫_0^t n(t-u<ζ) N*(u) du + d N*(t) + d* N(t) = t.
//! ```

mod dual;
mod scalar;
mod solver;

pub use dual::{consistency_residual, scalar_mass_equation_check, solve_dual_tail};
pub use scalar::ScalarMass;
pub use solver::{
    excursion_mass, residual_2_14, residual_2_19, residual_row_detail, solve_qstar,
    SolveDiagnostics,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Field2D;
use crate::quad::{interp_loglog, PowerFit};

/// Default solver tolerances, fixed by the Brownian pilot before the other
/// models were enabled.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// Residual of the defining equation on the solved field.
    pub tol_solve: f64,
    /// Residual of the independent convolution identity.
    pub tol_cross: f64,
    /// Residual of the excursion-tail identity, relative to t.
    pub tol_consistency: f64,
    /// Estimated fraction of entrance-law mass beyond the space grid.
    pub tail_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_solve: 0.02,
            tol_cross: 0.03,
            tol_consistency: 0.01,
            tail_tol: 0.01,
        }
    }
}

/// Sampled excursion functionals on the main time grid.
///
/// `m_star[k] = n*(t_k < ζ)`, `n_star[k] = N*(t_k)`, and after the dual
/// solve `m[k] = n(t_k < ζ)`, `n[k] = N(t_k)`.
#[derive(Debug, Clone, Serialize)]
pub struct ExcursionFunctions {
    pub t: Vec<f64>,
    pub m_star: Vec<f64>,
    pub n_star: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub d: f64,
    pub d_star: f64,
    /// Small-t power extension of m_star fitted on the smallest grid times.
    pub fit_m_star: PowerFit,
    /// Small-t extension of the dual tail m (populated by the dual solve).
    pub fit_m: Option<PowerFit>,
}

impl ExcursionFunctions {
    /// n*(t<ζ) at arbitrary t > 0: power fit below the grid, log-log
    /// interpolation on it.
    pub fn m_star_at(&self, t: f64) -> f64 {
        if t < self.t[0] {
            self.fit_m_star.eval(t)
        } else {
            interp_loglog(&self.t, &self.m_star, t)
        }
    }

    /// N*(t) at arbitrary t > 0.
    pub fn n_star_at(&self, t: f64) -> f64 {
        if t < self.t[0] {
            self.fit_m_star.integral_to(t).unwrap_or(0.0)
        } else {
            interp_loglog(&self.t, &self.n_star, t)
        }
    }

    pub fn m_at(&self, t: f64) -> Result<f64> {
        let fit = self
            .fit_m
            .as_ref()
            .ok_or_else(|| Error::MissingPrerequisite("dual tail not solved yet".into()))?;
        Ok(if t < self.t[0] {
            fit.eval(t)
        } else {
            interp_loglog(&self.t, &self.m, t)
        })
    }

    pub fn n_at(&self, t: f64) -> Result<f64> {
        let fit = self
            .fit_m
            .as_ref()
            .ok_or_else(|| Error::MissingPrerequisite("dual tail not solved yet".into()))?;
        Ok(if t < self.t[0] {
            fit.integral_to(t)?
        } else {
            interp_loglog(&self.t, &self.n, t)
        })
    }

    /// Monotonicity invariants: n* nonincreasing, N* nondecreasing, and
    /// t·n*(t<ζ) ≤ N*(t).
    pub fn check_monotone(&self) -> Result<()> {
        for w in self.m_star.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-9) {
                return Err(Error::invalid("m_star must be nonincreasing"));
            }
        }
        for w in self.n_star.windows(2) {
            if w[1] < w[0] * (1.0 - 1e-9) {
                return Err(Error::invalid("N_star must be nondecreasing"));
            }
        }
        for k in 0..self.t.len() {
            if self.t[k] * self.m_star[k] > self.n_star[k] * (1.0 + 1e-6) {
                return Err(Error::invalid("t n*(t<ζ) <= N*(t) violated"));
            }
        }
        Ok(())
    }

    /// CSV serialization: `t,m_star,N_star,m,N`.
    pub fn to_csv_string(&self) -> String {
        use crate::grid::fmt_f64;
        let mut s = String::from("t,m_star,N_star,m,N\n");
        for k in 0..self.t.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(self.t[k]),
                fmt_f64(self.m_star[k]),
                fmt_f64(self.n_star[k]),
                fmt_f64(self.m[k]),
                fmt_f64(self.n[k])
            ));
        }
        s
    }
}

/// Solved entrance-law field together with its mass accounting and
/// residual diagnostics.
#[derive(Debug, Clone)]
pub struct QStarSolution {
    pub field: Field2D,
    pub d_star: f64,
    /// First row/column belonging to the caller's requested grids; earlier
    /// rows and columns are internal refinement added by the solver.
    pub user_row0: usize,
    pub user_col0: usize,
    /// Mass below the first space node per time (ramp + concentrated part).
    pub strip_mass: Vec<f64>,
    /// Quadrature mass on the grid per time.
    pub grid_mass: Vec<f64>,
    /// Estimated mass beyond the last space node per time.
    pub tail_mass: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
    /// Scalar pre-solve used for bootstrap and normalization.
    pub scalar: ScalarMass,
}

impl QStarSolution {
    /// Total entrance-law mass n*(t_k < ζ) with strip and tail estimates.
    pub fn total_mass(&self, k: usize) -> f64 {
        self.strip_mass[k] + self.grid_mass[k] + self.tail_mass[k]
    }

    /// Mass of q_{t_k}* on [0, x], combining the sub-grid strip with the
    /// field quadrature; `x` must lie within the grid.
    pub fn mass_below(&self, k: usize, x: f64) -> Result<f64> {
        let x0 = self.field.space_grid().first();
        if x <= x0 {
            return Ok(self.strip_mass[k] * (x / x0).min(1.0));
        }
        Ok(self.strip_mass[k] + self.field.integrate_space(k, x0, x)?)
    }

    /// Upper tail ∫_x^∞ q_{t_k}* including the beyond-grid estimate.
    pub fn tail_above(&self, k: usize, x: f64) -> Result<f64> {
        let xg = self.field.space_grid();
        Ok(self.field.integrate_space(k, x, xg.last())? + self.tail_mass[k])
    }
}
