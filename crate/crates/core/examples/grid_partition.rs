//! Data-only workflow: pick a bandwidth, label a grid around the sample with
//! estimated cell masses, export the partition as CSV and a gnuplot script.

use mslab::partition::{label_grid, GridSpec};
use mslab::selectors::{select, SelectorSpec};
use mslab::{MeanShiftConfig, Registry};

fn main() -> mslab::Result<()> {
    let data = Registry::builtin().get("eye")?.model.sample(500, 3)?;
    let h = select(&"scvu".parse::<SelectorSpec>()?, &data)?.h;
    let (lo, hi) = data.bounds();
    let pad: Vec<f64> = (0..2).map(|k| 3.0 * h.get(k, k).sqrt()).collect();
    let grid = GridSpec::new(
        lo.iter().zip(&pad).map(|(a, p)| a - p).collect(),
        hi.iter().zip(&pad).map(|(b, p)| b + p).collect(),
        60,
    )?;
    let (partition, result) = label_grid(&grid, &data, &h, &MeanShiftConfig::default(), None)?;
    println!(
        "{} clusters, estimated masses {:.3?}, mass on the grid {:.4}",
        result.n_clusters(),
        partition.cluster_masses(),
        partition.total_mass()
    );

    let dir = std::env::temp_dir().join("mslab-grid-example");
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("eye_partition.csv");
    partition.write_csv(&csv)?;
    let script = mslab::plot::emit(&csv, &dir)?;
    println!("wrote {} and {}", csv.display(), script.display());
    Ok(())
}
