//! Distance in measure between the ideal clustering of a model and the
//! clustering induced by data-based mean shift under two bandwidths.

use mslab::models::AscentConfig;
use mslab::partition::{build_grid, distance_in_measure, label_grid};
use mslab::selectors::{select, SelectorSpec};
use mslab::{MeanShiftConfig, Registry};

fn main() -> mslab::Result<()> {
    let registry = Registry::builtin();
    let named = registry.get("quadrimodal")?;
    let grid = build_grid(&named.model, 50)?;
    let ideal = named.ideal_clustering(&grid, &AscentConfig::default())?;
    let data = named.model.sample(500, 11)?;

    for id in ["ns", "piu"] {
        let spec: SelectorSpec = id.parse()?;
        let h = select(&spec, &data)?.h;
        let (partition, result) = label_grid(
            &grid,
            &data,
            &h,
            &MeanShiftConfig::default(),
            Some(&named.model),
        )?;
        let report = distance_in_measure(&ideal.partition, &partition)?;
        println!(
            "{id}: {} clusters, distance in measure {:.4}, matching {:?}",
            result.n_clusters(),
            report.distance,
            report.permutation
        );
    }
    Ok(())
}
