//! Gaussian kernel building blocks: SPD bandwidth matrices, the rescaled
//! kernel, its Laplacian and higher-order derivative tensors.

use mslab::kernels::{
    gaussian_derivative_tensor, grad_kernel_constant, kernel_laplacian, mahalanobis,
    rescaled_kernel,
};
use mslab::{BandwidthClass, BandwidthMatrix, Kernel};

fn main() -> mslab::Result<()> {
    let k = Kernel::gaussian(2);
    println!("K(0) = {:.6}, K(1, 0) = {:.6}", k.eval(&[0.0, 0.0])?, k.eval(&[1.0, 0.0])?);

    let h = BandwidthMatrix::from_rows(2, &[0.5, 0.2, 0.2, 0.3])?;
    println!("H = {:?}, class {:?}, |H| = {:.4}", h.entries(), h.class(), h.determinant());
    let diag = BandwidthMatrix::diagonal(&[0.5, 0.3])?;
    println!("diag(0.5, 0.3) has class {:?}", diag.class());
    let scalar = BandwidthMatrix::scalar(2, 0.4)?.into_class(BandwidthClass::Scalar)?;
    println!("0.4 I has class {:?}", scalar.class());

    let x = [0.4, -0.1];
    println!("K_H(x) = {:.6}", rescaled_kernel(&x, &h)?);
    println!("M_H(x, 0) = {:.6}", mahalanobis(&x, &[0.0, 0.0], &h)?);
    println!("Laplacian of K_H at x = {:.6}", kernel_laplacian(&x, &h)?);

    // The order-2 tensor is the Hessian; its trace is the Laplacian.
    let hess = gaussian_derivative_tensor(&x, &h, 2)?;
    println!("Hessian of K_H at x = {hess:.6?}, trace {:.6}", hess[0] + hess[3]);

    let d6 = gaussian_derivative_tensor(&x, &h, 6)?;
    println!("order-6 tensor has {} entries, D^6_(1..1) = {:.6}", d6.len(), d6[0]);

    println!("R(DK) for d = 2:\n{}", grad_kernel_constant(2));
    Ok(())
}
