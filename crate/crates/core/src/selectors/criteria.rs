//! Exact cross-validation, plug-in, smoothed cross-validation and
//! iterative-equation criteria for gradient bandwidth selection.
//!
//! Double sums over `i, j` are split into the `n` diagonal terms and twice the
//! sum over `i < j`. Pair blocks are reduced in a fixed order so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;

use crate::data::DataSet;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{gaussian_normalizer, grad_kernel_scalar, BandwidthMatrix, GaussianDerivatives};
use crate::quadrature::KahanSum;

const BLOCK: usize = 2048;

/// Pairwise differences `X_i - X_j`, `i < j`, of a sample.
pub struct PairDifferences {
    n: usize,
    dim: usize,
    diffs: Vec<f64>,
}

impl PairDifferences {
    pub fn new(data: &DataSet) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::InvalidArgument("criteria need at least two points".into()));
        }
        let d = data.dim();
        let mut diffs = Vec::with_capacity(n * (n - 1) / 2 * d);
        for i in 0..n {
            let xi = data.row(i);
            for j in i + 1..n {
                let xj = data.row(j);
                diffs.extend(xi.iter().zip(xj).map(|(a, b)| a - b));
            }
        }
        Ok(Self { n, dim: d, diffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `sum_{i,j} phi(X_i - X_j)` for an even `phi`, given `phi(0)`.
    fn full_sum<F>(&self, at_zero: f64, phi: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let d = self.dim;
        let blocks: Vec<KahanSum> = self
            .diffs
            .par_chunks(BLOCK * d)
            .map(|chunk| {
                let mut acc = KahanSum::new();
                chunk.chunks_exact(d).for_each(|x| acc.add(phi(x)));
                acc
            })
            .collect();
        let mut total = KahanSum::new();
        blocks.iter().for_each(|b| total.merge(b));
        2.0 * total.value() + self.n as f64 * at_zero
    }

    /// `sum_{i,j} lap K_S(X_i - X_j)` for each `S` in `sigmas`, weighted by
    /// `coefs` and summed in one pass.
    pub fn laplacian_sum(&self, sigmas: &[(f64, &BandwidthMatrix)]) -> Result<f64> {
        let lap: Vec<(f64, Laplacian)> = sigmas
            .iter()
            .map(|(c, s)| {
                check_dim(self.dim, s.dim())?;
                Ok((*c, Laplacian::new(s)))
            })
            .collect::<Result<_>>()?;
        let zero: f64 = lap.iter().map(|(c, l)| c * l.at_zero()).sum();
        Ok(self.full_sum(zero, |x| lap.iter().map(|(c, l)| c * l.eval(x)).sum()))
    }

    /// `n^{-2} sum_{i,j} D^{6} K_G(X_i - X_j)`, the sixth-order functional
    /// estimate used by the plug-in criterion.
    pub fn psi6(&self, g: &BandwidthMatrix) -> Result<Vec<f64>> {
        check_dim(self.dim, g.dim())?;
        let gd = GaussianDerivatives::new(g, 6)?;
        let len = gd.len();
        let d = self.dim;
        let blocks: Vec<Vec<f64>> = self
            .diffs
            .par_chunks(BLOCK * d)
            .map(|chunk| {
                let mut s = gd.scratch();
                let mut out = vec![0.0; len];
                let mut acc = vec![0.0; len];
                for x in chunk.chunks_exact(d) {
                    gd.eval_into(x, &mut out, &mut s);
                    acc.iter_mut().zip(&out).for_each(|(a, v)| *a += v);
                }
                acc
            })
            .collect();
        let mut s = gd.scratch();
        let mut zero = vec![0.0; len];
        gd.eval_into(&vec![0.0; d], &mut zero, &mut s);
        let n = self.n as f64;
        Ok((0..len)
            .map(|k| {
                let mut t = KahanSum::new();
                blocks.iter().for_each(|b| t.add(b[k]));
                (2.0 * t.value() + n * zero[k]) / (n * n)
            })
            .collect())
    }
}

/// Closed-form `lap K_S(x) = K_S(x) (x' S^{-2} x - tr S^{-1})`.
struct Laplacian {
    inv: Vec<f64>,
    log_coef: f64,
    trace_inv: f64,
    dim: usize,
}

impl Laplacian {
    fn new(s: &BandwidthMatrix) -> Self {
        Self {
            inv: s.inverse_entries().to_vec(),
            log_coef: gaussian_normalizer(s.dim()).ln() - 0.5 * s.determinant().ln(),
            trace_inv: s.trace_inverse(),
            dim: s.dim(),
        }
    }

    fn at_zero(&self) -> f64 {
        -self.log_coef.exp() * self.trace_inv
    }

    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        if d == 2 {
            let (a, b, c) = (self.inv[0], self.inv[1], self.inv[3]);
            let u0 = a * x[0] + b * x[1];
            let u1 = b * x[0] + c * x[1];
            let q = x[0] * u0 + x[1] * u1;
            return (self.log_coef - 0.5 * q).exp() * (u0 * u0 + u1 * u1 - self.trace_inv);
        }
        let mut q = 0.0;
        let mut r = 0.0;
        for i in 0..d {
            let u: f64 = (0..d).map(|j| self.inv[i * d + j] * x[j]).sum();
            q += x[i] * u;
            r += u * u;
        }
        (self.log_coef - 0.5 * q).exp() * (r - self.trace_inv)
    }
}

/// `n^{-1} |H|^{-1/2} tr(H^{-1} R(DK))`, the variance term shared by the PI,
/// SCV and IT criteria.
pub fn variance_term(h: &BandwidthMatrix, n: usize) -> f64 {
    grad_kernel_scalar(h.dim()) * h.trace_inverse() / (n as f64 * h.determinant().sqrt())
}

/// `-1/4 (vec' I (x) vec' H (x) vec' H) psi6`.
pub fn pi_bias_term(h: &BandwidthMatrix, psi6: &[f64]) -> Result<f64> {
    let d = h.dim();
    let d2 = d * d;
    if psi6.len() != d2 * d2 * d2 {
        return Err(Error::DimensionMismatch {
            expected: d2 * d2 * d2,
            found: psi6.len(),
        });
    }
    let hv = h.entries();
    let mut total = 0.0;
    for i in 0..d {
        let a = i * d + i;
        for b in 0..d2 {
            let base = a * d2 * d2 + b * d2;
            let inner: f64 = (0..d2).map(|c| hv[c] * psi6[base + c]).sum();
            total += hv[b] * inner;
        }
    }
    Ok(-0.25 * total)
}

/// Criterion evaluator bound to one sample and pilot, with the
/// bandwidth-independent pieces computed once.
pub struct Criteria {
    pairs: PairDifferences,
    pilot: Option<BandwidthMatrix>,
    psi6: Option<Vec<f64>>,
    /// `sum_{i,j} lap K_{2G}`.
    pilot_laplacian: Option<f64>,
}

impl Criteria {
    pub fn new(data: &DataSet, pilot: Option<&BandwidthMatrix>) -> Result<Self> {
        let pairs = PairDifferences::new(data)?;
        if let Some(g) = pilot {
            check_dim(data.dim(), g.dim())?;
        }
        Ok(Self {
            pairs,
            pilot: pilot.cloned(),
            psi6: None,
            pilot_laplacian: None,
        })
    }

    pub fn n(&self) -> usize {
        self.pairs.n
    }

    fn pilot(&self) -> Result<&BandwidthMatrix> {
        self.pilot
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("criterion needs a pilot bandwidth".into()))
    }

    /// Computes the pilot-only pieces eagerly.
    pub fn prepare_pi(&mut self) -> Result<()> {
        if self.psi6.is_none() {
            self.psi6 = Some(self.pairs.psi6(self.pilot()?)?);
        }
        Ok(())
    }

    pub fn prepare_scv(&mut self) -> Result<()> {
        if self.pilot_laplacian.is_none() {
            let g2 = self.pilot()?.scaled(2.0)?;
            self.pilot_laplacian = Some(self.pairs.laplacian_sum(&[(1.0, &g2)])?);
        }
        Ok(())
    }

    fn check(&self, h: &BandwidthMatrix) -> Result<()> {
        check_dim(self.pairs.dim, h.dim())
    }

    pub fn cv(&self, h: &BandwidthMatrix) -> Result<f64> {
        self.check(h)?;
        let n = self.pairs.n as f64;
        let h2 = h.scaled(2.0)?;
        // The H term runs over i != j only; remove its diagonal again.
        let diag = Laplacian::new(h).at_zero() * n;
        let a = -1.0 / (n * n);
        let b = 2.0 / (n * (n - 1.0));
        let both = self.pairs.laplacian_sum(&[(a, &h2), (b, h)])?;
        Ok(both - b * diag)
    }

    pub fn variance_term(&self, h: &BandwidthMatrix) -> f64 {
        variance_term(h, self.pairs.n)
    }

    pub fn pi_bias(&self, h: &BandwidthMatrix) -> Result<f64> {
        self.check(h)?;
        match &self.psi6 {
            Some(p) => pi_bias_term(h, p),
            None => pi_bias_term(h, &self.pairs.psi6(self.pilot()?)?),
        }
    }

    pub fn pi(&self, h: &BandwidthMatrix) -> Result<f64> {
        Ok(self.variance_term(h) + self.pi_bias(h)?)
    }

    /// `-n^{-2} sum_{i,j} lap {K_{2H+2G} - 2 K_{H+2G} + K_{2G}}(X_i - X_j)`.
    pub fn scv_bias(&self, h: &BandwidthMatrix) -> Result<f64> {
        self.check(h)?;
        let g = self.pilot()?;
        let s1 = h.combine(2.0, g, 2.0)?;
        let s2 = h.combine(1.0, g, 2.0)?;
        let moving = self.pairs.laplacian_sum(&[(1.0, &s1), (-2.0, &s2)])?;
        let fixed = match self.pilot_laplacian {
            Some(v) => v,
            None => self.pairs.laplacian_sum(&[(1.0, &g.scaled(2.0)?)])?,
        };
        let n = self.pairs.n as f64;
        Ok(-(moving + fixed) / (n * n))
    }

    pub fn scv(&self, h: &BandwidthMatrix) -> Result<f64> {
        Ok(self.variance_term(h) + self.scv_bias(h)?)
    }

    /// `(d + 2) variance_term + 4 n^{-2} sum lap {...}`.
    pub fn it_residual(&self, h: &BandwidthMatrix) -> Result<f64> {
        let (first, second) = self.it_terms(h)?;
        Ok(first + second)
    }

    /// The two summands of the IT residual.
    pub fn it_terms(&self, h: &BandwidthMatrix) -> Result<(f64, f64)> {
        let d = h.dim() as f64;
        Ok(((d + 2.0) * self.variance_term(h), -4.0 * self.scv_bias(h)?))
    }
}

/// Cross-validation criterion for the density gradient.
pub fn cv_criterion(h: &BandwidthMatrix, data: &DataSet) -> Result<f64> {
    Criteria::new(data, None)?.cv(h)
}

/// Plug-in criterion with pilot `g` for the sixth-order functional.
pub fn pi_criterion(h: &BandwidthMatrix, data: &DataSet, g: &BandwidthMatrix) -> Result<f64> {
    Criteria::new(data, Some(g))?.pi(h)
}

/// Smoothed cross-validation criterion with pilot `g`.
pub fn scv_criterion(h: &BandwidthMatrix, data: &DataSet, g: &BandwidthMatrix) -> Result<f64> {
    Criteria::new(data, Some(g))?.scv(h)
}

/// Left-hand side of the iterative bandwidth equation with pilot `g`.
pub fn it_residual(h: &BandwidthMatrix, data: &DataSet, g: &BandwidthMatrix) -> Result<f64> {
    Criteria::new(data, Some(g))?.it_residual(h)
}
