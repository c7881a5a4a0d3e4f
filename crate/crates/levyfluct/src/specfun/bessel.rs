//! Modified Bessel function of the second kind K_ν(z) for real order ν ≥ 0.
//!
//! Temme's series for z ≤ 2 and Steed's continued fraction CF2 for z > 2
//! give K_μ, K_{μ+1} with |μ| ≤ 1/2; the stable upward recurrence
//! K_{ν+1} = K_{ν−1} + (2ν/z) K_ν lifts the order.

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Chebyshev evaluation on [a, b].
fn chebev(a: f64, b: f64, c: &[f64], x: f64) -> f64 {
    let y = (2.0 * x - a - b) / (b - a);
    let y2 = 2.0 * y;
    let (mut d, mut dd) = (0.0, 0.0);
    for &cj in c.iter().skip(1).rev() {
        let sv = d;
        d = y2 * d - dd + cj;
        dd = sv;
    }
    y * d - dd + 0.5 * c[0]
}

/// Auxiliary coefficients for Temme's series:
/// gam1 = [1/Γ(1−μ) − 1/Γ(1+μ)]/(2μ), gam2 = [1/Γ(1−μ) + 1/Γ(1+μ)]/2,
/// gampl = 1/Γ(1+μ), gammi = 1/Γ(1−μ), for |μ| ≤ 1/2.
fn beschb(mu: f64) -> (f64, f64, f64, f64) {
    const C1: [f64; 7] = [
        -1.142022680371868,
        6.5165112670737e-3,
        3.087090173086e-4,
        -3.4706269649e-6,
        6.9437664e-9,
        3.67795e-11,
        -1.356e-13,
    ];
    const C2: [f64; 8] = [
        1.843740587300905,
        -7.68528408447867e-2,
        1.2719271366546e-3,
        -4.9717367042e-6,
        -3.31261198e-8,
        2.423096e-10,
        -1.702e-13,
        -1.49e-15,
    ];
    let xx = 8.0 * mu * mu - 1.0;
    let gam1 = chebev(-1.0, 1.0, &C1, xx);
    let gam2 = chebev(-1.0, 1.0, &C2, xx);
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// K_μ and K_{μ+1} by Temme's series, z ≤ 2, |μ| ≤ 1/2.
fn k_temme(mu: f64, z: f64) -> Result<(f64, f64)> {
    let x2 = 0.5 * z;
    let pimu = std::f64::consts::PI * mu;
    let fact = if pimu.abs() < EPS {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = beschb(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d2 = x2 * x2;
    let mut sum1 = p;
    for i in 1..=MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= d2 / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * EPS {
            return Ok((sum, sum1 * 2.0 / z));
        }
    }
    Err(Error::Convergence {
        terms: MAX_ITER,
        partial: sum,
    })
}

/// K_μ and K_{μ+1} by Steed's CF2, z > 2, |μ| ≤ 1/2. With `scaled` the
/// e^{−z} factor is omitted, which avoids underflow at large z.
fn k_cf2(mu: f64, z: f64, scaled: bool) -> Result<(f64, f64)> {
    let a1 = 0.25 - mu * mu;
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = delh;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    let mut converged = false;
    for i in 2..=MAX_ITER {
        a -= 2.0 * (i as f64 - 1.0);
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            terms: MAX_ITER,
            partial: s,
        });
    }
    let h = a1 * h;
    let efac = if scaled { 1.0 } else { (-z).exp() };
    let kmu = (std::f64::consts::PI / (2.0 * z)).sqrt() * efac / s;
    let kmu1 = kmu * (mu + z + 0.5 - h) / z;
    Ok((kmu, kmu1))
}

fn bessel_k_impl(nu: f64, z: f64, scaled: bool) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::invalid(format!("bessel_k requires z > 0, got {z}")));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::invalid(format!(
            "bessel_k requires order >= 0, got {nu}"
        )));
    }
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let (mut kmu, mut kmu1) = if z <= 2.0 {
        let (a, b) = k_temme(mu, z)?;
        if scaled {
            (a * z.exp(), b * z.exp())
        } else {
            (a, b)
        }
    } else {
        k_cf2(mu, z, scaled)?
    };
    for i in 1..=nl {
        let knext = (mu + i as f64) * (2.0 / z) * kmu1 + kmu;
        kmu = kmu1;
        kmu1 = knext;
    }
    Ok(kmu)
}

/// K_ν(z) for ν ≥ 0, z > 0.
///
/// Relative accuracy is a few ulps for moderate arguments; for large z the
/// result underflows together with e^{−z}.
pub fn bessel_k(nu: f64, z: f64) -> Result<f64> {
    bessel_k_impl(nu, z, false)
}

/// e^z K_ν(z): overflow-safe building block for densities of the form
/// e^{ax} K_ν(a|x|) whose exponents nearly cancel.
pub fn bessel_k_scaled(nu: f64, z: f64) -> Result<f64> {
    bessel_k_impl(nu, z, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_log_panels;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent oracle: the integral representation
    /// K_ν(z) = 2^{−ν−1} z^ν ∫_0^∞ e^{−u} e^{−z²/(4u)} u^{−ν−1} du.
    fn bessel_k_quadrature(nu: f64, z: f64) -> f64 {
        let integrand = |u: f64| (-u - z * z / (4.0 * u)).exp() * u.powf(-nu - 1.0);
        let v = gauss_log_panels(1e-8, 400.0, 120, integrand);
        0.5f64.powf(nu + 1.0) * z.powf(nu) * v
    }

    #[test]
    fn beschb_matches_gamma() {
        for &mu in &[-0.49, -0.2, 0.0, 0.13, 0.37, 0.5] {
            let (_, _, gampl, gammi) = beschb(mu);
            let g1 = 1.0 / super::super::gamma::gamma_fn(1.0 + mu).unwrap();
            let g2 = 1.0 / super::super::gamma::gamma_fn(1.0 - mu).unwrap();
            assert_relative_eq!(gampl, g1, max_relative = 1e-9);
            assert_relative_eq!(gammi, g2, max_relative = 1e-9);
        }
    }

    #[test]
    fn half_integer_closed_form() {
        // K_{1/2}(z) = sqrt(pi/(2z)) e^{-z}
        for &z in &[0.001, 0.3, 1.0, 7.5, 42.0] {
            let exact = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp();
            assert_relative_eq!(bessel_k(0.5, z).unwrap(), exact, max_relative = 1e-10);
        }
        // K_{3/2}(z) = sqrt(pi/(2z)) e^{-z} (1 + 1/z)
        for &z in &[0.05, 1.0, 10.0] {
            let exact = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp() * (1.0 + 1.0 / z);
            assert_relative_eq!(bessel_k(1.5, z).unwrap(), exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn k1_of_2_matches_integral_representation() {
        // frozen from the quadrature oracle; also the standard table value
        let oracle = bessel_k_quadrature(1.0, 2.0);
        assert_relative_eq!(oracle, 0.139_865_881_816_522_6, max_relative = 1e-8);
        assert_relative_eq!(bessel_k(1.0, 2.0).unwrap(), oracle, max_relative = 1e-8);
    }

    #[test]
    fn quadrature_oracle_across_orders_and_args() {
        for &nu in &[0.0, 0.7, 1.0, 1.3] {
            for &z in &[0.01, 0.5, 2.0, 8.0, 30.0] {
                let num = bessel_k(nu, z).unwrap();
                let orc = bessel_k_quadrature(nu, z);
                assert_relative_eq!(num, orc, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn large_z_asymptotic_regime() {
        // K_ν(z) ≅ sqrt(pi/(2z)) e^{-z} for z large; ratio within 1% at z ≥ 20
        for &nu in &[0.5, 1.0, 1.5] {
            for &z in &[20.0, 30.0, 50.0] {
                let asym = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp();
                let ratio = bessel_k(nu, z).unwrap() / asym;
                assert!(
                    (0.99..=1.05).contains(&ratio),
                    "nu={nu} z={z} ratio={ratio}"
                );
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(1.0, -1.0).is_err());
        assert!(bessel_k(-0.5, 1.0).is_err());
    }

    #[test]
    fn scaled_variant_cancels_the_exponential() {
        for &z in &[0.5, 2.0, 10.0] {
            let a = bessel_k_scaled(1.0, z).unwrap();
            let b = bessel_k(1.0, z).unwrap() * z.exp();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        // far beyond the unscaled underflow point
        let v = bessel_k_scaled(1.0, 2000.0).unwrap();
        let asym = (std::f64::consts::PI / 4000.0).sqrt();
        assert_relative_eq!(v, asym, max_relative = 1e-3);
    }

    proptest! {
        #[test]
        fn strictly_decreasing_in_z(nu in 0.0f64..2.0, z in 1e-3f64..40.0, step in 0.01f64..2.0) {
            let a = bessel_k(nu, z).unwrap();
            let b = bessel_k(nu, z + step).unwrap();
            prop_assert!(b < a, "K_{}({}) = {} !> K_{}({}) = {}", nu, z, a, nu, z + step, b);
        }

        #[test]
        fn recurrence_identity(nu in 0.0f64..1.0, z in 0.05f64..30.0) {
            // K_{ν+1}(z) − K_{ν−1}(z) = (2ν/z) K_ν(z), using ν+1 order lift
            let k0 = bessel_k(nu, z).unwrap();
            let k1 = bessel_k(nu + 1.0, z).unwrap();
            let k2 = bessel_k(nu + 2.0, z).unwrap();
            let lhs = k2 - k0;
            let rhs = 2.0 * (nu + 1.0) / z * k1;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
        }
    }
}
