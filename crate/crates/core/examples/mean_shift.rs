//! Mean shift on a two-cluster sample: one trajectory in detail, then the
//! clustering of the whole sample.

use mslab::meanshift::{kde, MeanShift};
use mslab::models::{Component, MixtureModel};
use mslab::{BandwidthMatrix, MeanShiftConfig, Model};

fn main() -> mslab::Result<()> {
    let model = Model::Mixture(MixtureModel::new(vec![
        Component {
            weight: 0.5,
            mean: vec![-1.5, 0.0],
            covariance: vec![vec![0.3, 0.1], vec![0.1, 0.2]],
        },
        Component {
            weight: 0.5,
            mean: vec![1.5, 0.5],
            covariance: vec![vec![0.2, -0.05], vec![-0.05, 0.3]],
        },
    ])?);
    let data = model.sample(300, 42)?;
    let h = BandwidthMatrix::from_rows(2, &[0.12, 0.02, 0.02, 0.1])?;
    let ms = MeanShift::new(&data, &h, &MeanShiftConfig::default())?;

    let t = ms.converge(&[0.2, 0.0])?;
    println!(
        "from (0.2, 0): mode {:.4?} after {} iterations, converged {}",
        t.mode, t.iterations, t.converged
    );
    println!(
        "density {:.5} -> {:.5}, ascending: {}",
        t.densities[0],
        t.densities[t.densities.len() - 1],
        t.is_ascending(1e-10)
    );
    println!("f_H at the mode = {:.5}", kde(&t.mode, &data, &h)?);

    let result = ms.cluster(&data)?;
    for (k, mode) in result.modes.iter().enumerate() {
        let size = result.labels.iter().filter(|&&l| l == k).count();
        println!("cluster {k}: mode {mode:.4?}, {size} points");
    }
    println!("non-converged: {}", result.non_converged());
    Ok(())
}
