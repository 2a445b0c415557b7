use crate::kernels::{gaussian_normalizer, BandwidthMatrix};

/// `sum_k w_k N(x; mu_k, S_k)`, the common evaluation form of every model.
#[derive(Clone, Debug)]
pub(crate) struct GaussianSum {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<BandwidthMatrix>,
    /// `log(w_k (2 pi)^{-d/2} |S_k|^{-1/2})`.
    log_coef: Vec<f64>,
}

impl GaussianSum {
    pub fn new(dim: usize, terms: Vec<(f64, Vec<f64>, BandwidthMatrix)>) -> Self {
        let mut weights = Vec::with_capacity(terms.len());
        let mut means = Vec::with_capacity(terms.len());
        let mut covs = Vec::with_capacity(terms.len());
        let mut log_coef = Vec::with_capacity(terms.len());
        let norm = gaussian_normalizer(dim).ln();
        for (w, m, c) in terms {
            log_coef.push(w.ln() + norm - 0.5 * c.determinant().ln());
            weights.push(w);
            means.push(m);
            covs.push(c);
        }
        Self {
            dim,
            weights,
            means,
            covs,
            log_coef,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    fn exponents(&self, x: &[f64], diff: &mut [f64]) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                for (j, v) in diff.iter_mut().enumerate() {
                    *v = x[j] - self.means[k][j];
                }
                self.log_coef[k] - 0.5 * self.covs[k].inv_quad(diff)
            })
            .collect()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let mut diff = vec![0.0; self.dim];
        self.exponents(x, &mut diff).iter().map(|e| e.exp()).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut diff = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for k in 0..self.len() {
            for (j, v) in diff.iter_mut().enumerate() {
                *v = x[j] - self.means[k][j];
            }
            let f = (self.log_coef[k] - 0.5 * self.covs[k].inv_quad(&diff)).exp();
            for (gj, v) in g.iter_mut().zip(self.covs[k].inv_mul(&diff)) {
                *gj -= f * v;
            }
        }
        g
    }

    /// `(log f(x), D f(x) / f(x))`, finite for any `x`.
    pub fn log_density_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut diff = vec![0.0; self.dim];
        let e = self.exponents(x, &mut diff);
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        let mut g = vec![0.0; self.dim];
        for k in 0..self.len() {
            let r = (e[k] - max).exp();
            if r < 1e-300 {
                continue;
            }
            total += r;
            for (j, v) in diff.iter_mut().enumerate() {
                *v = x[j] - self.means[k][j];
            }
            for (gj, v) in g.iter_mut().zip(self.covs[k].inv_mul(&diff)) {
                *gj -= r * v;
            }
        }
        g.iter_mut().for_each(|v| *v /= total);
        (max + total.ln(), g)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        let total: f64 = self.weights.iter().sum();
        for k in 0..self.len() {
            for j in 0..self.dim {
                m[j] += self.weights[k] * self.means[k][j] / total;
            }
        }
        m
    }

    /// Row-major covariance of the normalised sum.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let total: f64 = self.weights.iter().sum();
        let mu = self.mean();
        let mut c = vec![0.0; d * d];
        for k in 0..self.len() {
            let w = self.weights[k] / total;
            let s = self.covs[k].entries();
            for a in 0..d {
                for b in 0..d {
                    c[a * d + b] += w * (s[a * d + b]
                        + (self.means[k][a] - mu[a]) * (self.means[k][b] - mu[b]));
                }
            }
        }
        c
    }
}
