//! Quadrature: adaptive Gauss–Kronrod for callables, composite rules for
//! uniformly tabulated data.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        kronrod += w * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, err: f64, tol: f64, depth: u32) -> f64 {
    if err <= tol || depth == 0 || (b - a).abs() < 1e-15 * a.abs().max(1.0) {
        return whole;
    }
    let m = 0.5 * (a + b);
    let (l, el) = gk15(f, a, m);
    let (r, er) = gk15(f, m, b);
    adapt(f, a, m, l, el, 0.5 * tol, depth - 1) + adapt(f, m, b, r, er, 0.5 * tol, depth - 1)
}

/// Adaptive G7K15 on a finite interval. `tol` is an absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, err) = gk15(&f, a, b);
    adapt(&f, a, b, whole, err, tol, 48)
}

/// `∫_a^∞ f` by the exp-sinh rule `s = a + exp(π/2 · sinh τ)`, refined by
/// step halving until successive levels agree to `tol` relative to the
/// running estimate. Algebraic tails and integrable endpoint singularities at
/// `a` both decay double exponentially in `τ`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> f64 {
    let half_pi = 0.5 * std::f64::consts::PI;
    // beyond this exp(π/2 · sinh τ) overflows
    let tau_max = (700.0 / half_pi).asinh();
    let term = |tau: f64| {
        let e = (half_pi * tau.sinh()).exp();
        let v = f(a + e) * half_pi * tau.cosh() * e;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let steps = (tau_max / h) as i64;
    let mut sum: f64 = (-steps..=steps).map(|k| term(k as f64 * h)).sum();
    let mut estimate = sum * h;
    for _ in 0..12 {
        let steps = (tau_max / h) as i64;
        // new midpoints of the halved grid
        sum += (-steps - 1..=steps).map(|k| term((k as f64 + 0.5) * h)).sum::<f64>();
        h *= 0.5;
        let next = sum * h;
        let done = (next - estimate).abs() <= tol.max(1e-15) * next.abs().max(f64::MIN_POSITIVE);
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Composite trapezoid over the whole table.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Trapezoid with Gregory end corrections through second differences,
/// fourth order for smooth data. Tables of fewer than six points fall back to
/// [`simpson`].
pub fn gregory(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 6 {
        return simpson(values, h);
    }
    let f = values;
    let l = n - 1;
    let forward1 = f[1] - f[0];
    let forward2 = f[2] - 2.0 * f[1] + f[0];
    let backward1 = f[l] - f[l - 1];
    let backward2 = f[l] - 2.0 * f[l - 1] + f[l - 2];
    trapezoid(values, h) - h / 12.0 * (backward1 - forward1) - h / 24.0 * (backward2 + forward2)
}

/// Composite Simpson over the whole table. Odd interval counts close with
/// the 3/8 rule on the last three intervals; a single interval falls back to
/// the trapezoid.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    if intervals == 1 {
        return 0.5 * h * (values[0] + values[1]);
    }
    let (even_part, tail) = if intervals.is_multiple_of(2) {
        (intervals, 0.0)
    } else {
        let m = intervals - 3;
        let t = 3.0 * h / 8.0 * (values[m] + 3.0 * values[m + 1] + 3.0 * values[m + 2] + values[m + 3]);
        (m, t)
    };
    let mut s = 0.0;
    if even_part > 0 {
        s = values[0] + values[even_part];
        for (i, v) in values.iter().enumerate().take(even_part).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s *= h / 3.0;
    }
    s + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_polynomial_and_exponential() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14);
        assert!((v - 0.0).abs() < 1e-13);
        let v = integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-14);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn semi_infinite() {
        let v = integrate_to_infinity(|s: f64| (-s).exp(), 0.0, 1e-12);
        assert!((v - 1.0).abs() < 1e-10);
        let v = integrate_to_infinity(|s: f64| (1.0 + s).powf(-2.5), 0.0, 1e-12);
        assert!((v - 1.0 / 1.5).abs() < 1e-9);
    }

    #[test]
    fn simpson_exact_for_cubics_with_odd_counts() {
        for n in [3usize, 4, 5, 6, 11, 12] {
            let h = 1.0 / (n - 1) as f64;
            let vals: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(&vals, h) - 0.25).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn gregory_is_fourth_order() {
        for n in [6usize, 7, 20] {
            let h = 1.0 / (n - 1) as f64;
            let vals: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((gregory(&vals, h) - 0.25).abs() < 1e-14, "n = {n}");
        }
        let err = |n: usize| {
            let h = 2.0 / (n - 1) as f64;
            let vals: Vec<f64> = (0..n).map(|i| (-(i as f64) * h).exp()).collect();
            (gregory(&vals, h) - (1.0 - (-2f64).exp())).abs()
        };
        let ratio = err(41) / err(81);
        assert!((14.0..18.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn trapezoid_exact_for_lines() {
        let vals: Vec<f64> = (0..11).map(|i| 2.0 * i as f64 * 0.1 + 1.0).collect();
        assert!((trapezoid(&vals, 0.1) - 2.0).abs() < 1e-14);
    }
}
