use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope; zero for two points.
    pub slope_se: f64,
    pub points: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let k = x.len();
    if k < 2 {
        return Err(Error::param("points", k as f64, "a line needs at least two points"));
    }
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::param("x", mx, "all x values are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_se = if k > 2 { (sse / (kf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(OlsFit {
        slope,
        intercept,
        r_squared,
        slope_se,
        points: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_exact() {
        let f = ols(&[1.0, 3.0], &[2.0, 8.0]).unwrap();
        assert_eq!((f.slope, f.intercept, f.r_squared), (3.0, -1.0, 1.0));
    }

    #[test]
    fn inverse_square_law() {
        let taus = [0.04, 10f64.powf(-1.2), 0.1, 0.15, 0.2];
        let x: Vec<f64> = taus.iter().map(|t| (1.0 / t).ln()).collect();
        let y: Vec<f64> = taus.iter().map(|t| (0.37 / (t * t)).ln()).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-10);
        assert!((f.intercept - 0.37f64.ln()).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_fit_against_normal_equations() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [1.1, 2.9, 5.2, 6.8, 9.1];
        let f = ols(&x, &y).unwrap();
        // normal equations solved by hand: slope = 19.9/10, intercept = 5.02 − 2·1.99
        assert!((f.slope - 1.99).abs() < 1e-12);
        assert!((f.intercept - 1.04).abs() < 1e-12);
        assert!(f.r_squared > 0.99 && f.r_squared < 1.0);
        assert!(f.slope_se > 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(ols(&[1.0], &[1.0]).is_err());
        assert!(ols(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(ols(&[1.0, 2.0], &[1.0]).is_err());
    }
}
