use approx::assert_relative_eq;
use mslab::kernels::{
    gaussian_derivative_tensor, grad_kernel_constant, kernel_laplacian, mahalanobis,
    rescaled_kernel, GaussianDerivatives,
};
use mslab::{BandwidthClass, BandwidthMatrix, Error, Kernel};
use proptest::prelude::*;

fn spd2() -> impl Strategy<Value = BandwidthMatrix> {
    (0.05f64..2.0, 0.05f64..2.0, -0.9f64..0.9).prop_map(|(a, b, r)| {
        let c = r * (a * b).sqrt();
        BandwidthMatrix::from_rows(2, &[a, c, c, b]).unwrap()
    })
}

fn point2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 2)
}

#[test]
fn standard_kernel_values() {
    let k = Kernel::gaussian(2);
    assert_relative_eq!(k.eval(&[0.0, 0.0]).unwrap(), 1.0 / (2.0 * std::f64::consts::PI));
    let one = Kernel::gaussian(1);
    assert_relative_eq!(one.eval(&[1.0]).unwrap(), (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt());
    assert!(matches!(k.eval(&[0.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn bandwidth_validation() {
    assert!(BandwidthMatrix::from_rows(2, &[1.0, 0.5, 0.4, 1.0]).is_err());
    assert!(BandwidthMatrix::from_rows(2, &[1.0, 2.0, 2.0, 1.0]).is_err());
    assert!(BandwidthMatrix::from_rows(2, &[1.0, 0.0, 0.0]).is_err());
    assert!(BandwidthMatrix::diagonal(&[1.0, -1.0]).is_err());
    assert!(BandwidthMatrix::scalar(2, 0.0).is_err());
    let h = BandwidthMatrix::from_rows(2, &[1.0, 0.3, 0.3, 2.0]).unwrap();
    assert_eq!(h.class(), BandwidthClass::Unconstrained);
    assert!(h.clone().into_class(BandwidthClass::Diagonal).is_err());
    assert_relative_eq!(h.determinant(), 2.0 - 0.09, max_relative = 1e-14);
}

#[test]
fn laplacian_matches_second_differences() {
    let s = BandwidthMatrix::from_rows(2, &[0.7, -0.2, -0.2, 0.4]).unwrap();
    let x = [0.3, -0.5];
    let e = 1e-4;
    let f = |p: [f64; 2]| rescaled_kernel(&p, &s).unwrap();
    let fd = (f([x[0] + e, x[1]]) + f([x[0] - e, x[1]]) + f([x[0], x[1] + e]) + f([x[0], x[1] - e])
        - 4.0 * f(x))
        / (e * e);
    assert_relative_eq!(kernel_laplacian(&x, &s).unwrap(), fd, max_relative = 1e-6);
}

#[test]
fn first_order_tensor_is_the_gradient() {
    let g = BandwidthMatrix::from_rows(3, &[1.0, 0.2, 0.1, 0.2, 0.8, -0.1, 0.1, -0.1, 0.5]).unwrap();
    let x = [0.2, -0.4, 0.3];
    let t = gaussian_derivative_tensor(&x, &g, 1).unwrap();
    for k in 0..3 {
        let e = 1e-6;
        let mut p = x;
        p[k] += e;
        let up = rescaled_kernel(&p, &g).unwrap();
        p[k] -= 2.0 * e;
        let down = rescaled_kernel(&p, &g).unwrap();
        assert_relative_eq!(t[k], (up - down) / (2.0 * e), max_relative = 1e-7);
    }
}

#[test]
fn order_zero_and_unsupported_orders() {
    let g = BandwidthMatrix::identity(2);
    let t = gaussian_derivative_tensor(&[0.1, 0.2], &g, 0).unwrap();
    assert_eq!(t.len(), 1);
    assert_relative_eq!(t[0], rescaled_kernel(&[0.1, 0.2], &g).unwrap());
    assert!(matches!(GaussianDerivatives::new(&g, 7), Err(Error::UnsupportedOrder(7))));
}

#[test]
fn grad_kernel_constant_in_one_dimension() {
    // int (x phi(x))^2 dx = 1 / (4 sqrt(pi)).
    let c = grad_kernel_constant(1);
    assert_relative_eq!(c[(0, 0)], 1.0 / (4.0 * std::f64::consts::PI.sqrt()), max_relative = 1e-15);
    let c3 = grad_kernel_constant(3);
    assert_eq!(c3[(0, 1)], 0.0);
    assert_eq!(c3[(0, 0)], c3[(2, 2)]);
}

proptest! {
    #[test]
    fn kernel_is_even_and_positive(h in spd2(), x in point2()) {
        let a = rescaled_kernel(&x, &h).unwrap();
        let b = rescaled_kernel(&[-x[0], -x[1]], &h).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-15 * a);
    }

    #[test]
    fn kernel_scaling_law(h in spd2(), x in point2(), c in 0.3f64..3.0) {
        // K_{c^2 H}(c x) = c^{-d} K_H(x).
        let a = rescaled_kernel(&[c * x[0], c * x[1]], &h.scaled(c * c).unwrap()).unwrap();
        let b = rescaled_kernel(&x, &h).unwrap() / (c * c);
        prop_assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn inverse_products_round_trip(h in spd2(), v in point2()) {
        let back = h.mul(&h.inv_mul(&v));
        for k in 0..2 {
            prop_assert!((back[k] - v[k]).abs() <= 1e-9 * (1.0 + v[k].abs()));
        }
        let q = mahalanobis(&v, &[0.0, 0.0], &h).unwrap();
        let w = h.whiten(&v);
        prop_assert!((q - (w[0] * w[0] + w[1] * w[1])).abs() <= 1e-9 * (1.0 + q));
    }

    #[test]
    fn derivative_tensors_are_symmetric(h in spd2(), x in point2(), order in 2usize..=4) {
        let t = gaussian_derivative_tensor(&x, &h, order).unwrap();
        let scale = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (flat, &v) in t.iter().enumerate() {
            let mut bits: Vec<usize> = (0..order).map(|p| (flat >> (order - 1 - p)) & 1).collect();
            bits.sort();
            let sorted = bits.iter().fold(0, |acc, b| acc * 2 + b);
            prop_assert!((v - t[sorted]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn hessian_trace_is_the_laplacian(h in spd2(), x in point2()) {
        let t = gaussian_derivative_tensor(&x, &h, 2).unwrap();
        let lap = kernel_laplacian(&x, &h).unwrap();
        prop_assert!((t[0] + t[3] - lap).abs() <= 1e-12 * (t[0].abs() + t[3].abs()));
    }
}
