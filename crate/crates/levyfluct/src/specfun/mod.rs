//! Special functions needed by the model densities: Gamma, the modified
//! Bessel function K, error functions, and one-sided / symmetric stable
//! densities.

mod bessel;
mod erf;
mod gamma;
mod stable;

pub use bessel::{bessel_k, bessel_k_scaled};
pub use erf::{erf, erfc, normal_cdf, normal_sf};
pub use gamma::{gamma_fn, ln_gamma};
pub use stable::{
    positive_stable_density, series_floor, stable_laplace_coeff, stable_unit_scale,
    symmetric_stable_density, SeriesEvalPolicy,
};
