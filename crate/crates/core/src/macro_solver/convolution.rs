use log::warn;

use crate::cell_problems::KernelTable;

/// Trapezoid quadrature of `∫_0^t B(t−τ) g(τ) dτ` for a vector field `g`
/// sampled on a uniform history `g(m dt)`, `m = 0, 1, …`.
///
/// `B` is interpolated linearly between kernel nodes and is zero beyond the
/// kernel horizon (the tail is dropped, with a single warning).
#[derive(Debug, Clone)]
pub struct KernelConvolution {
    kernel: KernelTable,
    dt: f64,
    history: Vec<Vec<[f64; 3]>>,
    truncated: bool,
}

impl KernelConvolution {
    pub fn new(kernel: KernelTable, dt: f64) -> Self {
        Self {
            kernel,
            dt,
            history: Vec::new(),
            truncated: false,
        }
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }

    /// Append `g(len · dt)`.
    pub fn push(&mut self, g: Vec<[f64; 3]>) {
        self.history.push(g);
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Whether some evaluation reached past the kernel horizon.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    fn note_horizon(&mut self, t: f64) {
        if !self.truncated && t > self.kernel.horizon() * (1.0 + 1e-12) {
            self.truncated = true;
            warn!(
                "convolution at t = {t} exceeds the kernel horizon {}; the tail is truncated",
                self.kernel.horizon()
            );
        }
    }

    fn accumulate(&self, out: &mut [[f64; 3]], t: f64, m: usize, weight: f64) {
        let lag = t - m as f64 * self.dt;
        if lag > self.kernel.horizon() * (1.0 + 1e-12) {
            return;
        }
        let b = self.kernel.at(lag.max(0.0));
        let d = b.nrows();
        for (o, g) in out.iter_mut().zip(&self.history[m]) {
            for i in 0..d {
                let mut s = 0.0;
                for j in 0..d {
                    s += b[(i, j)] * g[j];
                }
                o[i] += weight * s;
            }
        }
    }

    fn width(&self) -> usize {
        self.history.first().map_or(0, Vec::len)
    }

    /// Full trapezoid rule on `[0, t]`; needs samples up to `t`.
    pub fn convolve(&mut self, t: f64) -> Vec<[f64; 3]> {
        let steps = (t / self.dt).round() as usize;
        assert!(steps < self.history.len(), "history does not cover t = {t}");
        self.note_horizon(t);
        let mut out = vec![[0.0; 3]; self.width()];
        if steps == 0 {
            return out;
        }
        for m in 0..=steps {
            let w = if m == 0 || m == steps { 0.5 * self.dt } else { self.dt };
            self.accumulate(&mut out, t, m, w);
        }
        out
    }

    /// The trapezoid rule at `t = len · dt` without its last node, i.e. all
    /// stored samples with their weights for the interval `[0, t]`. The
    /// missing term is `dt/2 · B(0) g(t)`, which a time stepper treats implicitly.
    pub fn history_term(&mut self) -> Vec<[f64; 3]> {
        let steps = self.history.len();
        let t = steps as f64 * self.dt;
        self.note_horizon(t);
        let mut out = vec![[0.0; 3]; self.width()];
        for m in 0..steps {
            let w = if m == 0 { 0.5 * self.dt } else { self.dt };
            self.accumulate(&mut out, t, m, w);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn table(dt: f64, steps: usize, f: impl Fn(f64) -> f64) -> KernelTable {
        KernelTable {
            dt,
            values: (0..=steps).map(|k| DMatrix::identity(2, 2) * f(k as f64 * dt)).collect(),
        }
    }

    #[test]
    fn zero_history() {
        let mut c = KernelConvolution::new(table(0.1, 10, |_| 1.0), 0.1);
        for _ in 0..4 {
            c.push(vec![[0.0; 3]; 3]);
        }
        assert!(c.convolve(0.3).iter().all(|g| *g == [0.0; 3]));
    }

    #[test]
    fn constant_kernel_constant_field() {
        let mut c = KernelConvolution::new(table(0.1, 20, |_| 2.0), 0.1);
        for _ in 0..11 {
            c.push(vec![[1.0, -3.0, 0.0]]);
        }
        let r = c.convolve(1.0);
        assert!((r[0][0] - 2.0).abs() < 1e-13);
        assert!((r[0][1] + 6.0).abs() < 1e-13);
    }

    #[test]
    fn history_term_plus_endpoint() {
        let mut c = KernelConvolution::new(table(0.1, 20, |t| (-t).exp()), 0.1);
        for m in 0..6 {
            c.push(vec![[m as f64, 1.0, 0.0]]);
        }
        let full = c.convolve(0.5);
        let mut h = KernelConvolution::new(table(0.1, 20, |t| (-t).exp()), 0.1);
        for m in 0..5 {
            h.push(vec![[m as f64, 1.0, 0.0]]);
        }
        let part = h.history_term();
        assert!((full[0][0] - (part[0][0] + 0.05 * 5.0)).abs() < 1e-14);
        assert!((full[0][1] - (part[0][1] + 0.05)).abs() < 1e-14);
    }

    #[test]
    fn past_horizon_is_truncated() {
        let mut c = KernelConvolution::new(table(0.1, 5, |_| 1.0), 0.1);
        for _ in 0..11 {
            c.push(vec![[1.0, 0.0, 0.0]]);
        }
        let r = c.convolve(1.0);
        assert!(c.truncated());
        // lags beyond 0.5 drop out; the node at lag 0.5 keeps its interior weight
        assert!((r[0][0] - 0.55).abs() < 1e-12);
    }
}
