//! Least-squares power-law fits on log–log scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `value(t) ≈ coefficient · t^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub coefficient: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficient * t.powf(self.exponent)
    }
}

/// Fits `log y = log C + μ log t` by ordinary least squares. Points with
/// non-positive `t` or `y` are rejected with an error.
pub fn fit_power_law<I>(points: I) -> Result<PowerLaw>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in points {
        if t <= 0.0 || y <= 0.0 || !y.is_finite() {
            return Err(Error::Fit(format!("non-positive sample ({t}, {y}) in fit window")));
        }
        let (x, ly) = (t.ln(), y.ln());
        n += 1.0;
        sx += x;
        sy += ly;
        sxx += x * x;
        sxy += x * ly;
    }
    if n < 2.0 {
        return Err(Error::Fit("fewer than two samples in fit window".into()));
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let exponent = (n * sxy - sx * sy) / denom;
    let intercept = (sy - exponent * sx) / n;
    Ok(PowerLaw {
        coefficient: intercept.exp(),
        exponent,
    })
}

/// Fit over the last decade `[T/10, T]` of a uniform table `values[i] = f(i·h)`.
pub fn fit_last_decade(values: &[f64], h: f64) -> Result<PowerLaw> {
    let n = values.len();
    if n < 20 {
        return Err(Error::Fit(format!("table of {n} points too short for a decade fit")));
    }
    let last = n - 1;
    let start = (last / 10).max(1);
    fit_power_law((start..=last).map(|i| (i as f64 * h, values[i])))
}
