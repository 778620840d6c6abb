//! Small fitting helpers for ladder studies.

/// Least-squares line `y = slope x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    LinearFit { slope, intercept, residual: (ss / n).sqrt() }
}

/// Slope of `log y` against `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// `max / min` of a positive sequence (`1` for constant, `∞` if a zero appears).
pub fn max_min_ratio(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::MIN, f64::max);
    let min = xs.iter().cloned().fold(f64::MAX, f64::min);
    if max == 0.0 && min == 0.0 {
        1.0
    } else {
        max / min
    }
}

pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Richardson extrapolation from three values at geometrically refined
/// parameters: returns the limit estimate and the observed order.
pub fn richardson3(f0: f64, f1: f64, f2: f64, ratio: f64) -> (f64, f64) {
    let d01 = f0 - f1;
    let d12 = f1 - f2;
    if d12 == 0.0 || d01 == 0.0 || d01.signum() != d12.signum() {
        return (f2, f64::NAN);
    }
    let order = (d01 / d12).ln() / ratio.ln();
    let q = ratio.powf(order);
    (f2 - d12 / (q - 1.0), order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exact_line() {
        let f = loglog_fit(&[1.0, 2.0, 4.0, 8.0], &[3.0, 12.0, 48.0, 192.0]);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn richardson_recovers_second_order_limit() {
        let f = |h: f64| 1.5 + 0.3 * h * h;
        let (lim, order) = richardson3(f(0.4), f(0.2), f(0.1), 2.0);
        assert!((lim - 1.5).abs() < 1e-12);
        assert!((order - 2.0).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn loglog_fit_recovers_power_laws(p in -3.0f64..3.0, c in 0.1f64..10.0, x0 in 0.01f64..1.0) {
            let x: Vec<f64> = (0..5).map(|k| x0 * 1.7f64.powi(k)).collect();
            let y: Vec<f64> = x.iter().map(|v| c * v.powf(p)).collect();
            let f = loglog_fit(&x, &y);
            proptest::prop_assert!((f.slope - p).abs() < 1e-9);
        }

        #[test]
        fn max_min_ratio_is_scale_free(xs in proptest::collection::vec(0.1f64..10.0, 2..8), s in 0.01f64..100.0) {
            let scaled: Vec<f64> = xs.iter().map(|x| x * s).collect();
            proptest::prop_assert!((max_min_ratio(&xs) - max_min_ratio(&scaled)).abs() <= 1e-12 * max_min_ratio(&xs));
            proptest::prop_assert!(max_min_ratio(&xs) >= 1.0);
        }
    }
}
