//! A small replicated study over two models and four selectors, written to a
//! report directory like `mslab simulate` does.

use mslab::harness::{count_table, run, summarize, ExperimentConfig};

fn main() -> mslab::Result<()> {
    let config = ExperimentConfig::from_json(
        r#"{
            "models": ["broken-ring", "trimodal-iii"],
            "selectors": ["ns", "piu", "scvu", "itu"],
            "replications": 3,
            "sample_size": 300,
            "resolution": 30,
            "seed": 5
        }"#,
    )?;
    let report = run(&config)?;
    for s in summarize(&report.rows)? {
        if let (Some(median), Some(iqr)) = (s.median, s.iqr) {
            println!("{:13} {:5} median {median:.4} iqr {iqr:.4}", s.model, s.selector);
        }
    }
    for c in count_table(&report.rows)? {
        println!("{:13} {:5} cluster counts {:?}", c.model, c.selector, c.counts);
    }
    let dir = std::env::temp_dir().join("mslab-simulation-example");
    report.write_dir(&dir)?;
    println!("report written to {}", dir.display());
    Ok(())
}
