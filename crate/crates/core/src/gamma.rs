//! Gamma function: Lanczos approximation (g = 7, 9 terms) with the
//! reflection formula below 1/2.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const G: f64 = 7.0;
const COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `Γ(x)`. Non-positive integers are poles.
pub fn gamma(x: f64) -> Result<f64> {
    if x <= 0.0 && x == x.floor() {
        return Err(Error::GammaPole(x));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) Γ(1-x) = π / sin(πx)
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    let x = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * sum
}
