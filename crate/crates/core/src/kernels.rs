//! Gaussian kernel, SPD bandwidth matrices and kernel derivatives.
//!
//! Everything here works with the rescaled kernel
//! `K_H(x) = |H|^{-1/2} K(H^{-1/2} x)`, which for the Gaussian family is the
//! `N(0, H)` density. Derivative tensors use the multivariate Hermite
//! recursion and are laid out in recursive Kronecker order: entry `idx` of the
//! order-`r` tensor, read as an `r`-digit base-`d` number (most significant
//! digit first), lists the coordinates of differentiation.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Highest derivative order supported by [`gaussian_derivative_tensor`].
pub const MAX_DERIVATIVE_ORDER: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
}

/// A spherically symmetric `d`-variate kernel, `K(x) = k(x'x) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Kernel {
    dim: usize,
    family: KernelFamily,
}

impl Kernel {
    pub fn gaussian(dim: usize) -> Self {
        assert!(dim > 0, "kernel dimension must be positive");
        Self {
            dim,
            family: KernelFamily::Gaussian,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// `(2 pi)^{-d/2}`.
    pub fn normalizer(&self) -> f64 {
        gaussian_normalizer(self.dim)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let sq: f64 = x.iter().map(|v| v * v).sum();
        Ok(self.normalizer() * (-0.5 * sq).exp())
    }

    /// The profile `k(u) = 2 (2 pi)^{-d/2} exp(-u/2)`.
    pub fn profile(&self, u: f64) -> f64 {
        2.0 * self.normalizer() * (-0.5 * u).exp()
    }

    /// `g(u) = -k'(u)`, nonnegative for `u >= 0`.
    pub fn profile_slope(&self, u: f64) -> f64 {
        self.normalizer() * (-0.5 * u).exp()
    }
}

pub(crate) fn gaussian_normalizer(dim: usize) -> f64 {
    (2.0 * PI).powf(-(dim as f64) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthClass {
    Unconstrained,
    Diagonal,
    Scalar,
}

impl BandwidthClass {
    fn join(self, other: Self) -> Self {
        use BandwidthClass::*;
        match (self, other) {
            (Scalar, Scalar) => Scalar,
            (Unconstrained, _) | (_, Unconstrained) => Unconstrained,
            _ => Diagonal,
        }
    }
}

/// A symmetric positive definite `d x d` bandwidth matrix.
///
/// Only the lower triangle is read on construction, so the stored matrix is
/// exactly symmetric. Construction runs a Cholesky factorisation; every value
/// of this type is SPD and carries its inverse, factor and determinant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandwidthRepr", into = "BandwidthRepr")]
pub struct BandwidthMatrix {
    dim: usize,
    class: BandwidthClass,
    full: Vec<f64>,
    inv: Vec<f64>,
    chol: Vec<f64>,
    det: f64,
}

#[derive(Serialize, Deserialize)]
struct BandwidthRepr {
    class: BandwidthClass,
    matrix: Vec<Vec<f64>>,
}

impl TryFrom<BandwidthRepr> for BandwidthMatrix {
    type Error = Error;

    fn try_from(r: BandwidthRepr) -> Result<Self> {
        let d = r.matrix.len();
        let mut flat = Vec::with_capacity(d * d);
        for row in &r.matrix {
            check_dim(d, row.len())?;
            flat.extend_from_slice(row);
        }
        let h = Self::from_rows(d, &flat)?;
        h.into_class(r.class)
    }
}

impl From<BandwidthMatrix> for BandwidthRepr {
    fn from(h: BandwidthMatrix) -> Self {
        BandwidthRepr {
            class: h.class,
            matrix: h.full.chunks(h.dim).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl BandwidthMatrix {
    /// Builds from a full row-major matrix. The upper triangle must mirror the
    /// lower one to within `1e-12` relative; the lower triangle is kept.
    pub fn from_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        check_dim(dim * dim, entries.len())?;
        let scale = entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetric entries ({i},{j}) = {a} vs ({j},{i}) = {b}"
                    )));
                }
            }
        }
        let mut lower = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                lower.push(entries[i * dim + j]);
            }
        }
        Self::from_lower(dim, &lower)
    }

    /// Builds from the packed lower triangle `(0,0), (1,0), (1,1), (2,0), ...`.
    pub fn from_lower(dim: usize, lower: &[f64]) -> Result<Self> {
        check_dim(dim * (dim + 1) / 2, lower.len())?;
        let mut full = vec![0.0; dim * dim];
        let mut k = 0;
        for i in 0..dim {
            for j in 0..=i {
                full[i * dim + j] = lower[k];
                full[j * dim + i] = lower[k];
                k += 1;
            }
        }
        Self::build(dim, full, BandwidthClass::Unconstrained)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidArgument("bandwidth must be square".into()));
        }
        let d = m.nrows();
        let rows: Vec<f64> = (0..d * d).map(|k| m[(k / d, k % d)]).collect();
        Self::from_rows(d, &rows)
    }

    /// `diag(h_1^2, ..., h_d^2)` given the diagonal entries.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let mut full = vec![0.0; d * d];
        for (k, v) in diag.iter().enumerate() {
            full[k * d + k] = *v;
        }
        Self::build(d, full, BandwidthClass::Diagonal)
    }

    /// `h2 * I_d`.
    pub fn scalar(dim: usize, h2: f64) -> Result<Self> {
        let mut h = Self::diagonal(&vec![h2; dim])?;
        h.class = BandwidthClass::Scalar;
        Ok(h)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0).expect("identity is SPD")
    }

    fn build(dim: usize, full: Vec<f64>, class: BandwidthClass) -> Result<Self> {
        if full.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let m = DMatrix::from_row_slice(dim, dim, &full);
        let chol = Cholesky::new(m)
            .ok_or_else(|| Error::NotPositiveDefinite(format!("{full:?}")))?;
        let l = chol.l();
        let det = l.diagonal().iter().map(|v| v * v).product::<f64>();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "determinant {det} is not positive"
            )));
        }
        let inv_m = chol.inverse();
        let mut inv = vec![0.0; dim * dim];
        let mut lf = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                // Average the two triangles so the stored inverse is exactly symmetric.
                inv[i * dim + j] = 0.5 * (inv_m[(i, j)] + inv_m[(j, i)]);
                lf[i * dim + j] = l[(i, j)];
            }
        }
        Ok(Self {
            dim,
            class,
            full,
            inv,
            chol: lf,
            det,
        })
    }

    /// Reinterprets under a different class, checking that the structure
    /// allows it (diagonal needs zero off-diagonals, scalar a constant diagonal).
    pub fn into_class(mut self, class: BandwidthClass) -> Result<Self> {
        let d = self.dim;
        let off_zero = (0..d).all(|i| (0..d).all(|j| i == j || self.full[i * d + j] == 0.0));
        let ok = match class {
            BandwidthClass::Unconstrained => true,
            BandwidthClass::Diagonal => off_zero,
            BandwidthClass::Scalar => off_zero && (1..d).all(|k| self.full[k * d + k] == self.full[0]),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "matrix does not have {class:?} structure"
            )));
        }
        self.class = class;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class(&self) -> BandwidthClass {
        self.class
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.full[i * self.dim + j]
    }

    /// Row-major entries (also the column-stacked `vec`, by symmetry).
    pub fn entries(&self) -> &[f64] {
        &self.full
    }

    pub fn inverse_entries(&self) -> &[f64] {
        &self.inv
    }

    /// Row-major lower Cholesky factor `L` with `H = L L'`.
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    pub fn lower_packed(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|(i, j)| self.full[i * d + j]).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.full)
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|k| self.full[k * self.dim + k]).sum()
    }

    pub fn trace_inverse(&self) -> f64 {
        (0..self.dim).map(|k| self.inv[k * self.dim + k]).sum()
    }

    /// `c * H`, same class.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let full = self.full.iter().map(|v| v * c).collect();
        Self::build(self.dim, full, self.class)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let full = self
            .full
            .iter()
            .zip(&other.full)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::build(self.dim, full, self.class.join(other.class))
    }

    /// `S H S'`.
    pub fn congruence(&self, s: &DMatrix<f64>) -> Result<Self> {
        let m = s * self.to_matrix() * s.transpose();
        let m = (&m + m.transpose()) * 0.5;
        Self::from_matrix(&m)
    }

    /// `v' H^{-1} v`.
    #[inline]
    pub fn inv_quad(&self, v: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.inv[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..d {
                s += row[j] * v[j];
            }
            acc += v[i] * s;
        }
        acc
    }

    /// `H^{-1} v`.
    pub fn inv_mul(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.inv[i * d + j] * v[j]).sum())
            .collect()
    }

    /// `H v`.
    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.full[i * d + j] * v[j]).sum())
            .collect()
    }

    /// `L^{-1} v`, the whitening transform (Mahalanobis distance becomes Euclidean).
    pub fn whiten(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            let mut s = v[i];
            for j in 0..i {
                s -= self.chol[i * d + j] * out[j];
            }
            out[i] = s / self.chol[i * d + i];
        }
        out
    }
}

/// `K_H(x) = |H|^{-1/2} K(H^{-1/2} x)`, the `N(0, H)` density at `x`.
pub fn rescaled_kernel(x: &[f64], h: &BandwidthMatrix) -> Result<f64> {
    check_dim(h.dim(), x.len())?;
    Ok(rescaled_kernel_unchecked(x, h))
}

#[inline]
pub(crate) fn rescaled_kernel_unchecked(x: &[f64], h: &BandwidthMatrix) -> f64 {
    gaussian_normalizer(h.dim()) / h.determinant().sqrt() * (-0.5 * h.inv_quad(x)).exp()
}

/// Squared Mahalanobis distance `(x - y)' H^{-1} (x - y)`.
pub fn mahalanobis(x: &[f64], y: &[f64], h: &BandwidthMatrix) -> Result<f64> {
    check_dim(h.dim(), x.len())?;
    check_dim(h.dim(), y.len())?;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(h.inv_quad(&diff))
}

/// Laplacian of the rescaled Gaussian kernel,
/// `K_S(x) (x' S^{-2} x - tr S^{-1})`.
pub fn kernel_laplacian(x: &[f64], sigma: &BandwidthMatrix) -> Result<f64> {
    check_dim(sigma.dim(), x.len())?;
    let z = sigma.inv_mul(x);
    let zz: f64 = z.iter().map(|v| v * v).sum();
    let q: f64 = z.iter().zip(x).map(|(a, b)| a * b).sum();
    let k = gaussian_normalizer(sigma.dim()) / sigma.determinant().sqrt() * (-0.5 * q).exp();
    Ok(k * (zz - sigma.trace_inverse()))
}

/// All `order`-th partial derivatives of `K_G` at `x`, length `d^order`,
/// in recursive Kronecker order.
pub fn gaussian_derivative_tensor(
    x: &[f64],
    g: &BandwidthMatrix,
    order: usize,
) -> Result<Vec<f64>> {
    let eval = GaussianDerivatives::new(g, order)?;
    check_dim(g.dim(), x.len())?;
    let mut out = vec![0.0; eval.len()];
    let mut scratch = eval.scratch();
    eval.eval_into(x, &mut out, &mut scratch);
    Ok(out)
}

/// Reusable evaluator for the order-`r` derivative tensor of `K_G`.
///
/// With `z = G^{-1} x` and `P = G^{-1}`, the derivative along the index tuple
/// `t` is `K_G(x) h_t(x)`, where `h_{()} = 1` and
/// `h_{t+j} = -z_j h_t - sum_p P[j, t_p] h_{t \ p}`.
#[derive(Clone, Debug)]
pub struct GaussianDerivatives {
    dim: usize,
    order: usize,
    g: BandwidthMatrix,
    /// Per level `r >= 1`: for each index, `(last coordinate, parent index,
    /// [(removed coordinate, index with that position removed)])`.
    tables: Vec<Vec<RecursionEntry>>,
}

#[derive(Clone, Debug)]
struct RecursionEntry {
    last: usize,
    parent: usize,
    removals: Vec<(usize, usize)>,
}

/// Per-thread buffers for [`GaussianDerivatives::eval_into`].
#[derive(Clone, Debug)]
pub struct DerivativeScratch {
    levels: Vec<Vec<f64>>,
    z: Vec<f64>,
}

impl GaussianDerivatives {
    pub fn new(g: &BandwidthMatrix, order: usize) -> Result<Self> {
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        let d = g.dim();
        let mut tables = Vec::with_capacity(order);
        for r in 1..=order {
            let size = d.pow(r as u32);
            let mut level = Vec::with_capacity(size);
            for idx in 0..size {
                let last = idx % d;
                let parent = idx / d;
                let digits = to_digits(parent, d, r - 1);
                let removals = (0..digits.len())
                    .map(|p| {
                        let rest: Vec<usize> = digits
                            .iter()
                            .enumerate()
                            .filter(|(q, _)| *q != p)
                            .map(|(_, v)| *v)
                            .collect();
                        (digits[p], from_digits(&rest, d))
                    })
                    .collect();
                level.push(RecursionEntry {
                    last,
                    parent,
                    removals,
                });
            }
            tables.push(level);
        }
        Ok(Self {
            dim: d,
            order,
            g: g.clone(),
            tables,
        })
    }

    pub fn len(&self) -> usize {
        self.dim.pow(self.order as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scratch(&self) -> DerivativeScratch {
        DerivativeScratch {
            levels: (0..=self.order)
                .map(|r| vec![0.0; self.dim.pow(r as u32)])
                .collect(),
            z: vec![0.0; self.dim],
        }
    }

    /// Writes the tensor at `x` into `out`, which must have length [`Self::len`].
    pub fn eval_into(&self, x: &[f64], out: &mut [f64], s: &mut DerivativeScratch) {
        let d = self.dim;
        let inv = self.g.inverse_entries();
        for i in 0..d {
            s.z[i] = (0..d).map(|j| inv[i * d + j] * x[j]).sum();
        }
        let q: f64 = s.z.iter().zip(x).map(|(a, b)| a * b).sum();
        let k = gaussian_normalizer(d) / self.g.determinant().sqrt() * (-0.5 * q).exp();
        s.levels[0][0] = 1.0;
        for r in 1..=self.order {
            let (done, rest) = s.levels.split_at_mut(r);
            let cur = &mut rest[0];
            let prev = &done[r - 1];
            let prev2 = if r >= 2 { Some(&done[r - 2]) } else { None };
            for (idx, e) in self.tables[r - 1].iter().enumerate() {
                let mut v = -s.z[e.last] * prev[e.parent];
                if let Some(p2) = prev2 {
                    for &(coord, without) in &e.removals {
                        v -= inv[e.last * d + coord] * p2[without];
                    }
                }
                cur[idx] = v;
            }
        }
        for (o, h) in out.iter_mut().zip(&s.levels[self.order]) {
            *o = k * h;
        }
    }
}

fn to_digits(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut digits = vec![0; len];
    for p in (0..len).rev() {
        digits[p] = idx % base;
        idx /= base;
    }
    digits
}

fn from_digits(digits: &[usize], base: usize) -> usize {
    digits.iter().fold(0, |acc, d| acc * base + d)
}

/// `c_d` in `R(DK) = c_d I_d` for the standard Gaussian kernel:
/// `c_d = 2^{-(d+1)} pi^{-d/2}`.
pub fn grad_kernel_scalar(dim: usize) -> f64 {
    let d = dim as f64;
    2f64.powf(-(d + 1.0)) * PI.powf(-d / 2.0)
}

/// `R(DK) = int DK DK' dx`, a `d x d` matrix.
pub fn grad_kernel_constant(dim: usize) -> DMatrix<f64> {
    DMatrix::identity(dim, dim) * grad_kernel_scalar(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_laplacian(x: &[f64], h: &BandwidthMatrix, step: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..x.len() {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[k] += step;
            m[k] -= step;
            total += rescaled_kernel(&p, h).unwrap() - 2.0 * rescaled_kernel(x, h).unwrap()
                + rescaled_kernel(&m, h).unwrap();
        }
        total / (step * step)
    }

    #[test]
    fn rescaled_kernel_at_origin() {
        let z = [0.0, 0.0];
        let v = rescaled_kernel(&z, &BandwidthMatrix::identity(2)).unwrap();
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let v4 = rescaled_kernel(&z, &BandwidthMatrix::scalar(2, 4.0).unwrap()).unwrap();
        assert!((v4 - 1.0 / (8.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn rescaled_kernel_matches_bivariate_normal_closed_form() {
        // N(0, diag(1, 4)) at (1, 1): sd (1, 2), rho 0.
        let h = BandwidthMatrix::diagonal(&[1.0, 4.0]).unwrap();
        let (s1, s2) = (1.0_f64, 2.0_f64);
        let expect = (-(1.0 / (s1 * s1) + 1.0 / (s2 * s2)) / 2.0).exp() / (2.0 * PI * s1 * s2);
        let v = rescaled_kernel(&[1.0, 1.0], &h).unwrap();
        assert!((v - expect).abs() < 1e-15 * expect.max(1.0));

        // Correlated case against the textbook formula.
        let (s1, s2, rho) = (1.5_f64, 0.7_f64, -0.4_f64);
        let h = BandwidthMatrix::from_rows(
            2,
            &[s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2],
        )
        .unwrap();
        let (x, y) = (0.3, -1.1);
        let q = (x * x / (s1 * s1) - 2.0 * rho * x * y / (s1 * s2) + y * y / (s2 * s2))
            / (1.0 - rho * rho);
        let expect = (-q / 2.0).exp() / (2.0 * PI * s1 * s2 * (1.0 - rho * rho).sqrt());
        let v = rescaled_kernel(&[x, y], &h).unwrap();
        assert!((v - expect).abs() < 1e-14 * expect);
    }

    #[test]
    fn mahalanobis_cases() {
        let i = BandwidthMatrix::identity(2);
        assert_eq!(mahalanobis(&[1.0, 2.0], &[1.0, 2.0], &i).unwrap(), 0.0);
        assert_eq!(mahalanobis(&[1.0, 0.0], &[0.0, 0.0], &i).unwrap(), 1.0);
        let h = BandwidthMatrix::diagonal(&[4.0, 1.0]).unwrap();
        assert!((mahalanobis(&[2.0, 0.0], &[0.0, 0.0], &h).unwrap() - 1.0).abs() < 1e-15);
        assert!(mahalanobis(&[1.0], &[0.0, 0.0], &h).is_err());
    }

    #[test]
    fn laplacian_at_origin_and_sign() {
        let i = BandwidthMatrix::identity(2);
        let v = kernel_laplacian(&[0.0, 0.0], &i).unwrap();
        assert!((v + 1.0 / PI).abs() < 1e-15);
        assert!(kernel_laplacian(&[3.0, 0.0], &i).unwrap() > 0.0);
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        let h = BandwidthMatrix::from_rows(2, &[1.3, 0.4, 0.4, 0.8]).unwrap();
        for x in [[0.2, -0.5], [1.5, 0.7], [-2.0, 1.0]] {
            let exact = kernel_laplacian(&x, &h).unwrap();
            let fd = fd_laplacian(&x, &h, 1e-4);
            assert!((exact - fd).abs() < 1e-6 * exact.abs(), "{exact} vs {fd}");
        }
    }

    #[test]
    fn rejects_non_spd_and_asymmetric() {
        assert!(BandwidthMatrix::from_rows(2, &[1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(BandwidthMatrix::from_rows(2, &[1.0, 0.1, 0.2, 1.0]).is_err());
        assert!(BandwidthMatrix::diagonal(&[1.0, 0.0]).is_err());
        assert!(BandwidthMatrix::scalar(2, -1.0).is_err());
        assert!(BandwidthMatrix::diagonal(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn class_structure() {
        let d = BandwidthMatrix::diagonal(&[1.0, 2.0]).unwrap();
        assert_eq!(d.class(), BandwidthClass::Diagonal);
        assert_eq!(d.get(0, 1), 0.0);
        let s = BandwidthMatrix::scalar(3, 0.5).unwrap();
        assert_eq!(s.class(), BandwidthClass::Scalar);
        let u = BandwidthMatrix::from_rows(2, &[1.0, 0.3, 0.3, 1.0]).unwrap();
        assert!(u.clone().into_class(BandwidthClass::Diagonal).is_err());
    }

    #[test]
    fn derivative_tensor_low_orders() {
        let g = BandwidthMatrix::from_rows(2, &[1.0, 0.2, 0.2, 2.0]).unwrap();
        let d1 = gaussian_derivative_tensor(&[0.0, 0.0], &g, 1).unwrap();
        assert!(d1.iter().all(|v| v.abs() < 1e-300));
        let i = BandwidthMatrix::identity(2);
        let d2 = gaussian_derivative_tensor(&[0.0, 0.0], &i, 2).unwrap();
        let c = -1.0 / (2.0 * PI);
        for (got, want) in d2.iter().zip([c, 0.0, 0.0, c]) {
            assert!((got - want).abs() < 1e-15);
        }
        let d0 = gaussian_derivative_tensor(&[0.3, 0.1], &g, 0).unwrap();
        assert!((d0[0] - rescaled_kernel(&[0.3, 0.1], &g).unwrap()).abs() < 1e-16);
        assert!(matches!(
            gaussian_derivative_tensor(&[0.0, 0.0], &g, 7),
            Err(Error::UnsupportedOrder(7))
        ));
    }

    #[test]
    fn order_three_matches_finite_differences_of_hessian() {
        let g = BandwidthMatrix::from_rows(2, &[0.9, -0.3, -0.3, 1.4]).unwrap();
        let x = [0.4, -0.8];
        let d3 = gaussian_derivative_tensor(&x, &g, 3).unwrap();
        let step = 1e-5;
        for k in 0..2 {
            let mut p = x;
            let mut m = x;
            p[k] += step;
            m[k] -= step;
            let hp = gaussian_derivative_tensor(&p, &g, 2).unwrap();
            let hm = gaussian_derivative_tensor(&m, &g, 2).unwrap();
            for ab in 0..4 {
                let fd = (hp[ab] - hm[ab]) / (2.0 * step);
                let exact = d3[ab * 2 + k];
                assert!((fd - exact).abs() < 1e-8, "{fd} vs {exact}");
            }
        }
    }

    #[test]
    fn grad_kernel_constant_is_scalar_identity() {
        let r = grad_kernel_constant(3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(r[(i, j)], 0.0);
                } else {
                    assert!(r[(i, i)] > 0.0);
                }
            }
        }
        assert!((grad_kernel_scalar(1) - 1.0 / (4.0 * PI.sqrt())).abs() < 1e-16);
    }

    #[test]
    fn whitening_turns_mahalanobis_into_euclidean() {
        let h = BandwidthMatrix::from_rows(2, &[2.0, 0.7, 0.7, 0.5]).unwrap();
        let v = [0.3, -1.2];
        let w = h.whiten(&v);
        let e: f64 = w.iter().map(|a| a * a).sum();
        assert!((e - h.inv_quad(&v)).abs() < 1e-13);
    }

    #[test]
    fn serde_round_trip_keeps_class() {
        let h = BandwidthMatrix::diagonal(&[0.5, 2.0]).unwrap();
        let s = serde_json::to_string(&h).unwrap();
        let back: BandwidthMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(h, back);
        let bad = r#"{"class":"unconstrained","matrix":[[1.0,2.0],[2.0,1.0]]}"#;
        assert!(serde_json::from_str::<BandwidthMatrix>(bad).is_err());
    }
}
