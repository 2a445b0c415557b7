//! The built-in test densities: sampling, evaluation and the ideal
//! population clustering on a probability grid.

use mslab::models::AscentConfig;
use mslab::partition::build_grid;
use mslab::Registry;

fn main() -> mslab::Result<()> {
    let registry = Registry::builtin();
    for named in registry.models() {
        let model = &named.model;
        let sample = model.sample(1000, 7)?;
        let mean = sample.mean();
        let grid = build_grid(model, 40)?;
        let ideal = named.ideal_clustering(&grid, &AscentConfig::default())?;
        println!(
            "{:13} f(mean) = {:.4}, sample mean ({:+.3}, {:+.3}), {} clusters, masses {:.3?}",
            named.name,
            model.density(&model.mean())?,
            mean[0],
            mean[1],
            ideal.n_clusters(),
            ideal.partition.cluster_masses()
        );
    }
    Ok(())
}
