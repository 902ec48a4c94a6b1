//! Separable n-dimensional FFTs over row-major buffers.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FftNd {
    dims: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("dims", &self.dims).finish()
    }
}

impl Clone for FftNd {
    fn clone(&self) -> Self {
        FftNd::new(&self.dims)
    }
}

impl FftNd {
    /// `dims` lists axis lengths, slowest-varying first.
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd: Vec<_> = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv: Vec<_> = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let scratch_len = fwd
            .iter()
            .chain(inv.iter())
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let longest = dims.iter().copied().max().unwrap_or(0);
        Self {
            dims: dims.to_vec(),
            fwd,
            inv,
            line: vec![Complex64::default(); longest],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// Inverse transform including the `1/N` factor, in place.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.run(data, true);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&mut self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.len(), "buffer does not match FFT shape");
        let total = data.len();
        let mut stride = 1;
        for axis in (0..self.dims.len()).rev() {
            let n = self.dims[axis];
            let plan = if inverse { &self.inv[axis] } else { &self.fwd[axis] };
            if n > 1 {
                if stride == 1 {
                    for chunk in data.chunks_exact_mut(n) {
                        plan.process_with_scratch(chunk, &mut self.scratch);
                    }
                } else {
                    let block = n * stride;
                    for outer in (0..total).step_by(block) {
                        for inner in 0..stride {
                            let base = outer + inner;
                            let line = &mut self.line[..n];
                            for (k, slot) in line.iter_mut().enumerate() {
                                *slot = data[base + k * stride];
                            }
                            plan.process_with_scratch(line, &mut self.scratch);
                            for (k, v) in line.iter().enumerate() {
                                data[base + k * stride] = *v;
                            }
                        }
                    }
                }
            }
            stride *= n;
        }
    }
}

/// Signed frequency index of bin `k` for a length-`n` transform, in cycles per
/// sample.
pub fn fftfreq(k: usize, n: usize) -> f64 {
    let k = k as i64;
    let n_i = n as i64;
    let s = if 2 * k < n_i { k } else { k - n_i };
    s as f64 / n as f64
}

/// Index of the bin holding frequency `−k`.
pub fn mirror(k: usize, n: usize) -> usize {
    (n - k) % n
}

pub fn is_nyquist(k: usize, n: usize) -> bool {
    n.is_multiple_of(2) && 2 * k == n
}
