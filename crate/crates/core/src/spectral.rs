//! FFT plumbing for convolutions on the periodic extension of the grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl Spectral {
    /// Plans transforms for `n` points with period `length`.
    pub(crate) fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let wavenumbers = (0..n)
            .map(|m| {
                let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * signed / length
            })
            .collect();
        Self { n, forward, inverse, wavenumbers }
    }

    /// Angular wavenumber of each FFT bin (|k| at Nyquist).
    pub(crate) fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.n);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform, normalized, real part.
    pub(crate) fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        debug_assert_eq!(spectrum.len(), self.n);
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.n as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }

    /// Multiplies the spectrum of `values` by `symbol(k)` and transforms back.
    pub(crate) fn apply_symbol<S: Fn(f64) -> f64>(&self, values: &[f64], symbol: S) -> Vec<f64> {
        let mut spec = self.forward(values);
        for (c, &k) in spec.iter_mut().zip(&self.wavenumbers) {
            *c *= symbol(k);
        }
        self.inverse_real(spec)
    }
}
