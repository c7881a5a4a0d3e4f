//! Quadrature and fitting helpers shared by the solver modules.

use crate::error::{Error, Result};

/// 16-point Gauss–Legendre nodes/weights on [-1, 1] (positive half; the rule
/// is symmetric).
const GL16_X: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

/// 4-point Gauss–Legendre on [-1, 1], for short smooth panels.
const GL4_X: [f64; 2] = [0.3399810435848563, 0.8611363115940526];
const GL4_W: [f64; 2] = [0.6521451548625461, 0.3478548451374538];

/// ∫_a^b f(x) dx by 16-point Gauss–Legendre on a single panel.
pub fn gauss16<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..8 {
        acc += GL16_W[i] * (f(c + h * GL16_X[i]) + f(c - h * GL16_X[i]));
    }
    acc * h
}

/// ∫_a^b f(x) dx by 4-point Gauss–Legendre on a single panel.
pub fn gauss4<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..2 {
        acc += GL4_W[i] * (f(c + h * GL4_X[i]) + f(c - h * GL4_X[i]));
    }
    acc * h
}

/// Composite 16-point Gauss–Legendre over geometrically spaced panels on
/// [a, b], a > 0. Suited to integrands varying on logarithmic scales.
pub fn gauss_log_panels<F: Fn(f64) -> f64>(a: f64, b: f64, panels: usize, f: F) -> f64 {
    assert!(a > 0.0 && b > a && panels > 0);
    let ratio = (b / a).powf(1.0 / panels as f64);
    let mut acc = 0.0;
    let mut lo = a;
    for _ in 0..panels {
        let hi = lo * ratio;
        acc += gauss16(lo, hi, &f);
        lo = hi;
    }
    acc
}

/// Composite trapezoid of samples `y` on the (possibly non-uniform) `nodes`.
pub fn trapezoid(nodes: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(nodes.len(), y.len());
    let mut acc = 0.0;
    for i in 1..nodes.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (nodes[i] - nodes[i - 1]);
    }
    acc
}

/// Trapezoid weights w with Σ w_i y_i = ∫ y over the node range.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = nodes[i] - nodes[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    w
}

/// Least-squares power law y ≈ coef · t^exponent fitted in log-log space.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PowerFit {
    pub coef: f64,
    pub exponent: f64,
}

impl PowerFit {
    /// Fit over the given samples; all t and y must be strictly positive.
    pub fn fit(t: &[f64], y: &[f64]) -> Result<Self> {
        if t.len() < 2 || t.len() != y.len() {
            return Err(Error::invalid("power fit needs at least two samples"));
        }
        if t.iter().chain(y.iter()).any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("power fit needs positive samples"));
        }
        let n = t.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (&ti, &yi) in t.iter().zip(y) {
            let lx = ti.ln();
            let ly = yi.ln();
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-300 {
            return Err(Error::invalid("degenerate abscissae in power fit"));
        }
        let exponent = (n * sxy - sx * sy) / denom;
        let coef = ((sy - exponent * sx) / n).exp();
        Ok(PowerFit { coef, exponent })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coef * t.powf(self.exponent)
    }

    /// ∫_0^T of the fitted law; requires exponent > -1 for integrability.
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        if self.exponent <= -1.0 {
            return Err(Error::invalid(format!(
                "fitted exponent {:.4} is not integrable at 0; refine the graded grid",
                self.exponent
            )));
        }
        Ok(self.coef * t.powf(self.exponent + 1.0) / (self.exponent + 1.0))
    }

    /// Centroid of the fitted law on [0, T]: ∫ t f / ∫ f.
    pub fn centroid_to(&self, t: f64) -> f64 {
        t * (self.exponent + 1.0) / (self.exponent + 2.0)
    }
}

/// Piecewise-linear interpolation of (xs, ys) with clamped extrapolation.
/// xs must be strictly increasing.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert!(xs.len() == ys.len() && !xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 1,
        p => p,
    };
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    ys[i - 1] * (1.0 - w) + ys[i] * w
}

/// Log-log linear interpolation, exact for pure power laws. Positive data
/// only; clamped outside the abscissa range.
pub fn interp_loglog(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert!(xs.len() == ys.len() && !xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x).max(1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (y0, y1) = (ys[i - 1], ys[i]);
    if y0 <= 0.0 || y1 <= 0.0 {
        let w = (x - x0) / (x1 - x0);
        return y0 * (1.0 - w) + y1 * w;
    }
    let w = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
    (y0.ln() * (1.0 - w) + y1.ln() * w).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss16_is_exact_for_cubics() {
        let v = gauss16(-1.0, 3.0, |x| 2.0 * x * x * x - x + 1.0);
        // ∫ (2x^3 - x + 1) over [-1,3] = [x^4/2 - x^2/2 + x] = 40.5 - 4 + 4 - (0.5 - 0.5 - 1)
        let exact = (3.0f64.powi(4) / 2.0 - 4.5 + 3.0) - (0.5 - 0.5 - 1.0);
        assert_relative_eq!(v, exact, max_relative = 1e-14);
    }

    #[test]
    fn log_panels_handle_wide_ranges() {
        // ∫_1e-6^1 1/x dx = ln(1e6)
        let v = gauss_log_panels(1e-6, 1.0, 24, |x| 1.0 / x);
        assert_relative_eq!(v, 6.0 * 10f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let nodes: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let y: Vec<f64> = nodes.iter().map(|&x| 3.0 * x + 1.0).collect();
        assert_relative_eq!(trapezoid(&nodes, &y), 2.5, max_relative = 1e-14);
        let w = trapezoid_weights(&nodes);
        let via_weights: f64 = w.iter().zip(&y).map(|(wi, yi)| wi * yi).sum();
        assert_relative_eq!(via_weights, 2.5, max_relative = 1e-14);
    }

    #[test]
    fn power_fit_recovers_exact_law() {
        let t: Vec<f64> = (1..=8).map(|i| 0.01 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|&ti| 2.5 * ti.powf(-0.5)).collect();
        let fit = PowerFit::fit(&t, &y).unwrap();
        assert_relative_eq!(fit.coef, 2.5, max_relative = 1e-10);
        assert_relative_eq!(fit.exponent, -0.5, max_relative = 1e-10);
        // ∫_0^T 2.5 t^-1/2 = 5 sqrt(T)
        assert_relative_eq!(fit.integral_to(0.04).unwrap(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn power_fit_rejects_nonintegrable_exponent() {
        let fit = PowerFit {
            coef: 1.0,
            exponent: -1.2,
        };
        assert!(fit.integral_to(1.0).is_err());
    }

    #[test]
    fn loglog_interp_exact_on_powers() {
        let xs: Vec<f64> = (1..=20).map(|i| 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 0.7 * x.powf(-1.5)).collect();
        let v = interp_loglog(&xs, &ys, 0.137);
        assert_relative_eq!(v, 0.7 * 0.137f64.powf(-1.5), max_relative = 1e-12);
    }
}
