//! History convolutions for Volterra recurrences.
//!
//! Every solver in the crate has the shape
//!
//! ```text
//! y_i = Σ_{j<i} w_{i-j} x_j,     x_i = step(i, y_i)
//! ```
//!
//! i.e. a convolution whose right operand is only revealed one entry at a
//! time. [`relaxed_convolution`] evaluates it either directly in O(N²) or by
//! divide and conquer: the left half of a range is finished first, its
//! contribution to the right half is added with one FFT product, then the
//! right half recurses. Ranges of at most `block` entries are summed
//! directly. Total cost is O(N log² N).

use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConvolutionMode {
    Naive,
    Fft { block: usize },
}

impl Default for ConvolutionMode {
    fn default() -> Self {
        ConvolutionMode::Fft { block: DEFAULT_BLOCK }
    }
}

impl ConvolutionMode {
    pub fn fft() -> Self {
        Self::default()
    }
}

/// Runs the online convolution for `n` steps and returns `x`.
///
/// `w[0]` is never used; `w` shorter than `n` is zero-extended.
pub fn relaxed_convolution<F>(w: &[f64], n: usize, mode: ConvolutionMode, step: F) -> Vec<f64>
where
    F: FnMut(usize, f64) -> f64,
{
    let mut w_full = vec![0.0; n.max(1)];
    let copy = w.len().min(n);
    w_full[..copy].copy_from_slice(&w[..copy]);
    w_full[0] = 0.0;

    let mut state = Relaxed {
        w: w_full,
        x: vec![0.0; n],
        y: vec![0.0; n],
        step,
        spectra: HashMap::new(),
        planner: FftPlanner::new(),
    };
    match mode {
        ConvolutionMode::Naive => state.direct(0, n),
        ConvolutionMode::Fft { block } => state.divide(0, n, block.max(1)),
    }
    state.x
}

struct Relaxed<F> {
    w: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    step: F,
    spectra: HashMap<usize, Arc<Vec<Complex64>>>,
    planner: FftPlanner<f64>,
}

impl<F: FnMut(usize, f64) -> f64> Relaxed<F> {
    fn direct(&mut self, lo: usize, hi: usize) {
        for i in lo..hi {
            let mut acc = 0.0;
            for j in lo..i {
                acc += self.w[i - j] * self.x[j];
            }
            self.y[i] += acc;
            self.x[i] = (self.step)(i, self.y[i]);
        }
    }

    fn divide(&mut self, lo: usize, hi: usize, block: usize) {
        if hi - lo <= block {
            self.direct(lo, hi);
            return;
        }
        let mid = lo + (hi - lo) / 2;
        self.divide(lo, mid, block);
        self.cross(lo, mid, hi);
        self.divide(mid, hi, block);
    }

    /// Adds the contribution of `x[lo..mid]` to `y[mid..hi]`.
    fn cross(&mut self, lo: usize, mid: usize, hi: usize) {
        let span = hi - lo;
        // Circular length `span` is enough: wrapped terms land below `mid - lo`.
        let size = span.next_power_of_two();
        let fwd = self.planner.plan_fft_forward(size);
        let inv = self.planner.plan_fft_inverse(size);

        let w_hat = match self.spectra.get(&span) {
            Some(s) => Arc::clone(s),
            None => {
                let mut buf: Vec<Complex64> = (0..size)
                    .map(|q| Complex64::new(if q < span { self.w[q] } else { 0.0 }, 0.0))
                    .collect();
                fwd.process(&mut buf);
                let s = Arc::new(buf);
                self.spectra.insert(span, Arc::clone(&s));
                s
            }
        };

        let mut buf: Vec<Complex64> = (0..size)
            .map(|q| Complex64::new(if q < mid - lo { self.x[lo + q] } else { 0.0 }, 0.0))
            .collect();
        fwd.process(&mut buf);
        for (b, wv) in buf.iter_mut().zip(w_hat.iter()) {
            *b *= wv;
        }
        inv.process(&mut buf);
        let scale = 1.0 / size as f64;
        for i in mid..hi {
            self.y[i] += buf[i - lo].re * scale;
        }
    }
}

/// Linear convolution `out[q] = Σ a[i] b[q-i]` for `q < out_len`.
pub fn convolve(a: &[f64], b: &[f64], out_len: usize, mode: ConvolutionMode) -> Vec<f64> {
    if a.is_empty() || b.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    match mode {
        ConvolutionMode::Naive => (0..out_len)
            .map(|q| {
                let lo = q.saturating_sub(b.len() - 1);
                let hi = q.min(a.len() - 1);
                (lo..=hi).map(|i| a[i] * b[q - i]).sum()
            })
            .collect(),
        ConvolutionMode::Fft { .. } => {
            let full = a.len() + b.len() - 1;
            let size = full.next_power_of_two();
            let mut planner = FftPlanner::<f64>::new();
            let fwd = planner.plan_fft_forward(size);
            let inv = planner.plan_fft_inverse(size);
            let mut fa = to_complex(a, size);
            let mut fb = to_complex(b, size);
            fwd.process(&mut fa);
            fwd.process(&mut fb);
            for (x, y) in fa.iter_mut().zip(fb.iter()) {
                *x *= y;
            }
            inv.process(&mut fa);
            let scale = 1.0 / size as f64;
            (0..out_len)
                .map(|q| if q < full { fa[q].re * scale } else { 0.0 })
                .collect()
        }
    }
}

fn to_complex(v: &[f64], size: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); size];
    for (o, &x) in out.iter_mut().zip(v) {
        o.re = x;
    }
    out
}

/// Sup-norm distance relative to the sup-norm of `reference`.
pub fn sup_relative_distance(a: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(reference).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
