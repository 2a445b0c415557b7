//! Replicated simulation study: samples from each model, runs every selector,
//! clusters the whole grid and records the distance in measure to the ideal
//! population clustering.

pub mod stats;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::meanshift::{MeanShift, MeanShiftConfig};
use crate::models::{AscentConfig, IdealClustering, NamedModel, Registry};
use crate::partition::{build_grid, distance_in_measure, GridSpec, SpacePartition};
use crate::selectors::{select, PilotRule, SelectorSpec};

pub use stats::{quantile_sorted, quartiles};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Registry names; empty means every model of the registry.
    pub models: Vec<String>,
    /// Selector ids such as `ns` or `scvd`.
    pub selectors: Vec<String>,
    pub replications: usize,
    pub sample_size: usize,
    /// Grid points per coordinate.
    pub resolution: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,
    /// Fill the `seconds` column. Off by default so reruns are byte-identical.
    pub record_timing: bool,
    /// Registry file replacing the built-in models.
    pub registry: Option<PathBuf>,
    /// Directory for cached ideal clusterings.
    pub cache_dir: Option<PathBuf>,
    pub pilot: PilotRule,
    pub mean_shift: MeanShiftConfig,
    pub ascent: AscentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            selectors: SelectorSpec::roster().iter().map(|s| s.id()).collect(),
            replications: 20,
            sample_size: 500,
            resolution: 60,
            seed: 2013,
            threads: 0,
            record_timing: false,
            registry: None,
            cache_dir: None,
            pilot: PilotRule::NormalScale,
            mean_shift: MeanShiftConfig::default(),
            ascent: AscentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn load_registry(&self) -> Result<Registry> {
        match &self.registry {
            Some(p) => Registry::from_file(p),
            None => Ok(Registry::builtin()),
        }
    }

    /// Checks the config against a registry, returning the models and
    /// selectors it refers to.
    pub fn resolve(&self, registry: &Registry) -> Result<(Vec<NamedModel>, Vec<SelectorSpec>)> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidArgument("resolution must be at least 2".into()));
        }
        if self.selectors.is_empty() {
            return Err(Error::InvalidArgument("no selectors configured".into()));
        }
        self.mean_shift.validate()?;
        let models: Vec<NamedModel> = if self.models.is_empty() {
            registry.models().to_vec()
        } else {
            self.models
                .iter()
                .map(|m| registry.get(m).cloned())
                .collect::<Result<_>>()?
        };
        for m in &models {
            if self.sample_size < m.model.dim() + 1 {
                return Err(Error::InvalidArgument(format!(
                    "sample size {} too small for {}-dimensional model {}",
                    self.sample_size,
                    m.model.dim(),
                    m.name
                )));
            }
        }
        let selectors = self
            .selectors
            .iter()
            .map(|s| Ok(s.parse::<SelectorSpec>()?.with_pilot(self.pilot.clone())))
            .collect::<Result<_>>()?;
        Ok((models, selectors))
    }
}

/// Seed of replication `rep` of `model`, independent of the selector roster.
pub fn replication_seed(master: u64, model: &str, rep: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((model.len() as u64).to_le_bytes());
    h.update(model.as_bytes());
    h.update((rep as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// One (model, selector, replication) outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub model: String,
    pub selector: String,
    pub rep: usize,
    pub seed: u64,
    /// Absent when the job failed; the cause is in `flags`.
    pub distance: Option<f64>,
    pub n_clusters: Option<usize>,
    pub flags: Vec<String>,
    pub seconds: Option<f64>,
    /// Selected bandwidth, row-major.
    pub h: Vec<f64>,
}

impl Row {
    pub fn failed(&self) -> bool {
        self.distance.is_none()
    }
}

/// Summary of a model's ideal clustering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealSummary {
    pub model: String,
    pub clusters: usize,
    pub flagged: usize,
    pub total_mass: f64,
    pub grid: GridSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub ideal: Vec<IdealSummary>,
    pub rows: Vec<Row>,
}

fn ideal_cache_path(dir: &Path, model: &NamedModel, grid: &GridSpec, cfg: &AscentConfig) -> Result<PathBuf> {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(serde_json::to_vec(model)?);
    h.update(serde_json::to_vec(grid)?);
    h.update(serde_json::to_vec(cfg)?);
    let digest = h.finalize();
    let hex: String = digest[..12].iter().map(|b| format!("{b:02x}")).collect();
    Ok(dir.join(format!("ideal-{}-{hex}.json", model.name)))
}

/// Ideal clustering of `model` on `grid`, read from or written to `cache_dir`.
pub fn ideal_partition(
    model: &NamedModel,
    grid: &GridSpec,
    cfg: &AscentConfig,
    cache_dir: Option<&Path>,
) -> Result<IdealClustering> {
    let Some(dir) = cache_dir else {
        return model.ideal_clustering(grid, cfg);
    };
    let path = ideal_cache_path(dir, model, grid, cfg)?;
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(ideal) = serde_json::from_str::<IdealClustering>(&text) {
            return Ok(ideal);
        }
    }
    let ideal = model.ideal_clustering(grid, cfg)?;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(&ideal)?)?;
    std::fs::rename(&tmp, &path)?;
    Ok(ideal)
}

struct Job<'a> {
    model: &'a NamedModel,
    selector: &'a SelectorSpec,
    rep: usize,
    seed: u64,
}

fn run_job(job: &Job, cfg: &ExperimentConfig, grid: &GridSpec, ideal: &SpacePartition, points: &crate::DataSet) -> Row {
    let start = Instant::now();
    let mut row = Row {
        model: job.model.name.clone(),
        selector: job.selector.id(),
        rep: job.rep,
        seed: job.seed,
        distance: None,
        n_clusters: None,
        flags: Vec::new(),
        seconds: None,
        h: Vec::new(),
    };
    let outcome = (|| -> Result<()> {
        let data = job.model.model.sample(cfg.sample_size, job.seed)?;
        let sel = select(job.selector, &data)?;
        row.h = sel.h.entries().to_vec();
        if !sel.converged {
            row.flags.push("selector-not-converged".into());
        }
        let ms = MeanShift::new(&data, &sel.h, &cfg.mean_shift)?;
        let result = ms.cluster(points)?;
        let stuck = result.non_converged();
        if stuck > 0 {
            row.flags.push(format!("meanshift-not-converged={stuck}"));
        }
        let low = result.low_density_starts();
        if low > 0 {
            row.flags.push(format!("low-density-starts={low}"));
        }
        if result.ascent.iter().any(|a| !a) {
            row.flags.push("ascent-violated".into());
        }
        let partition = SpacePartition::new(grid.clone(), result.labels, ideal.masses().to_vec())?;
        let report = distance_in_measure(ideal, &partition)?;
        row.distance = Some(report.distance);
        row.n_clusters = Some(result.modes.len());
        Ok(())
    })();
    if let Err(e) = outcome {
        row.flags.push(format!("error: {e}"));
    }
    if cfg.record_timing {
        row.seconds = Some(start.elapsed().as_secs_f64());
    }
    row
}

/// Runs the whole study. Job failures become flagged rows; only an invalid
/// configuration or a model whose ideal clustering fails aborts the run.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let registry = config.load_registry()?;
    let (models, selectors) = config.resolve(&registry)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut ideal_summaries = Vec::new();
        let mut rows = Vec::new();
        for model in &models {
            let grid = build_grid(&model.model, config.resolution)?;
            let ideal = ideal_partition(model, &grid, &config.ascent, config.cache_dir.as_deref())?;
            ideal_summaries.push(IdealSummary {
                model: model.name.clone(),
                clusters: ideal.n_clusters(),
                flagged: ideal.flagged,
                total_mass: ideal.partition.total_mass(),
                grid: grid.clone(),
            });
            let points = grid.points();
            let jobs: Vec<Job> = (0..config.replications)
                .flat_map(|rep| {
                    let seed = replication_seed(config.seed, &model.name, rep);
                    selectors.iter().map(move |selector| Job {
                        model,
                        selector,
                        rep,
                        seed,
                    })
                })
                .collect();
            let model_rows: Vec<Row> = jobs
                .par_iter()
                .map(|job| run_job(job, config, &grid, &ideal.partition, &points))
                .collect();
            rows.extend(model_rows);
        }
        Ok(ExperimentReport {
            config: config.clone(),
            ideal: ideal_summaries,
            rows,
        })
    })
}

/// Median and IQR of the distances of one (model, selector) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub selector: String,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub iqr: Option<f64>,
    /// Replications with a distance.
    pub valid: usize,
    /// Replications with at least one flag.
    pub flagged: usize,
    pub flag_rate: f64,
}

/// Cluster-count distribution of one (model, selector) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub model: String,
    pub selector: String,
    /// Replications per number of clusters.
    pub counts: BTreeMap<usize, usize>,
    pub failed: usize,
}

impl CountRow {
    pub fn total(&self) -> usize {
        self.counts.values().sum::<usize>() + self.failed
    }

    /// Replications with exactly `k` clusters.
    pub fn count(&self, k: usize) -> usize {
        self.counts.get(&k).copied().unwrap_or(0)
    }
}

/// (model, selector) cells in first-appearance order.
fn cells(rows: &[Row]) -> Vec<(String, String, Vec<&Row>)> {
    let mut out: Vec<(String, String, Vec<&Row>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(m, s, _)| *m == r.model && *s == r.selector) {
            Some(cell) => cell.2.push(r),
            None => out.push((r.model.clone(), r.selector.clone(), vec![r])),
        }
    }
    out
}

/// Medians and interquartile ranges of the distances, quartiles by linear
/// interpolation between order statistics.
pub fn summarize(rows: &[Row]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("report has no rows".into()));
    }
    Ok(cells(rows)
        .into_iter()
        .map(|(model, selector, rs)| {
            let d: Vec<f64> = rs.iter().filter_map(|r| r.distance).collect();
            let q = (!d.is_empty()).then(|| quartiles(&d));
            let flagged = rs.iter().filter(|r| !r.flags.is_empty()).count();
            SummaryRow {
                model,
                selector,
                median: q.map(|q| q.1),
                q1: q.map(|q| q.0),
                q3: q.map(|q| q.2),
                iqr: q.map(|q| q.2 - q.0),
                valid: d.len(),
                flagged,
                flag_rate: flagged as f64 / rs.len() as f64,
            }
        })
        .collect())
}

/// Distribution of the number of clusters per (model, selector).
pub fn count_table(rows: &[Row]) -> Result<Vec<CountRow>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("report has no rows".into()));
    }
    Ok(cells(rows)
        .into_iter()
        .map(|(model, selector, rs)| {
            let mut counts = BTreeMap::new();
            let mut failed = 0;
            for r in rs {
                match r.n_clusters {
                    Some(k) => *counts.entry(k).or_insert(0) += 1,
                    None => failed += 1,
                }
            }
            CountRow {
                model,
                selector,
                counts,
                failed,
            }
        })
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Raw rows: `model,selector,rep,distance,n_clusters,flags,seconds,h11,h12,...`.
pub fn write_rows_csv<W: Write>(rows: &[Row], writer: W) -> Result<()> {
    let d = rows.iter().map(|r| (r.h.len() as f64).sqrt() as usize).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["model", "selector", "rep", "distance", "n_clusters", "flags", "seconds"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=d {
        for j in 1..=d {
            header.push(format!("h{i}{j}"));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.model.clone(),
            r.selector.clone(),
            r.rep.to_string(),
            fmt_opt(r.distance),
            r.n_clusters.map(|k| k.to_string()).unwrap_or_default(),
            r.flags.join(";"),
            fmt_opt(r.seconds),
        ];
        rec.extend(r.h.iter().map(|v| v.to_string()));
        rec.resize(header.len(), String::new());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format summary: one line per (model, selector).
pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "selector", "median", "q1", "q3", "iqr", "valid", "flagged", "flag_rate"])?;
    for s in summary {
        w.write_record([
            s.model.clone(),
            s.selector.clone(),
            fmt_opt(s.median),
            fmt_opt(s.q1),
            fmt_opt(s.q3),
            fmt_opt(s.iqr),
            s.valid.to_string(),
            s.flagged.to_string(),
            s.flag_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn distinct<'a>(items: impl Iterator<Item = &'a String>) -> Vec<&'a String> {
    let mut out: Vec<&String> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Selectors down, models across, each cell `median (IQR)` to four decimals.
pub fn write_table1_csv<W: Write>(summary: &[SummaryRow], writer: W) -> Result<()> {
    let models = distinct(summary.iter().map(|s| &s.model));
    let selectors = distinct(summary.iter().map(|s| &s.selector));
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["selector".to_string()];
    header.extend(models.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for sel in selectors {
        let mut rec = vec![sel.clone()];
        for m in &models {
            let cell = summary.iter().find(|s| &s.model == *m && &s.selector == sel);
            rec.push(match cell {
                Some(SummaryRow {
                    median: Some(med),
                    iqr: Some(iqr),
                    ..
                }) => format!("{med:.4} ({iqr:.4})"),
                _ => String::new(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per (model, selector) with a column per observed cluster count.
pub fn write_table2_csv<W: Write>(counts: &[CountRow], writer: W) -> Result<()> {
    let max = counts
        .iter()
        .filter_map(|c| c.counts.keys().next_back().copied())
        .max()
        .unwrap_or(1);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["model".to_string(), "selector".to_string()];
    header.extend((1..=max).map(|k| k.to_string()));
    header.push("failed".into());
    w.write_record(&header)?;
    for c in counts {
        let mut rec = vec![c.model.clone(), c.selector.clone()];
        rec.extend((1..=max).map(|k| c.count(k).to_string()));
        rec.push(c.failed.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Provenance written next to the report files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub ideal: Vec<IdealSummary>,
    pub rows: usize,
    pub failed_rows: usize,
    pub flagged_rows: usize,
    pub quantiles: String,
}

impl ExperimentReport {
    pub fn metadata(&self) -> RunMetadata {
        RunMetadata {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config: self.config.clone(),
            ideal: self.ideal.clone(),
            rows: self.rows.len(),
            failed_rows: self.rows.iter().filter(|r| r.failed()).count(),
            flagged_rows: self.rows.iter().filter(|r| !r.flags.is_empty()).count(),
            quantiles: "linear interpolation between order statistics (type 7)".into(),
        }
    }

    /// Writes `rows.csv`, `summary.csv`, `table1.csv`, `table2.csv` and
    /// `metadata.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let file = |name: &str| std::fs::File::create(dir.join(name));
        write_rows_csv(&self.rows, file("rows.csv")?)?;
        let summary = summarize(&self.rows)?;
        write_summary_csv(&summary, file("summary.csv")?)?;
        write_table1_csv(&summary, file("table1.csv")?)?;
        write_table2_csv(&count_table(&self.rows)?, file("table2.csv")?)?;
        let mut meta = serde_json::to_string_pretty(&self.metadata())?;
        meta.push('\n');
        std::fs::write(dir.join("metadata.json"), meta)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, sel: &str, rep: usize, d: Option<f64>, k: Option<usize>) -> Row {
        Row {
            model: model.into(),
            selector: sel.into(),
            rep,
            seed: 0,
            distance: d,
            n_clusters: k,
            flags: if d.is_none() { vec!["error: x".into()] } else { vec![] },
            seconds: None,
            h: vec![1.0, 0.0, 0.0, 1.0],
        }
    }

    #[test]
    fn seeds_depend_on_model_and_rep_only() {
        let a = replication_seed(1, "m", 0);
        assert_eq!(a, replication_seed(1, "m", 0));
        assert_ne!(a, replication_seed(1, "m", 1));
        assert_ne!(a, replication_seed(1, "n", 0));
        assert_ne!(a, replication_seed(2, "m", 0));
    }

    #[test]
    fn summaries_and_counts() {
        let rows = vec![
            row("a", "ns", 0, Some(0.1), Some(2)),
            row("a", "ns", 1, Some(0.3), Some(3)),
            row("a", "ns", 2, Some(0.2), Some(2)),
            row("a", "cvu", 0, None, None),
            row("a", "cvu", 1, Some(0.5), Some(4)),
            row("a", "cvu", 2, Some(0.5), Some(4)),
        ];
        let s = summarize(&rows).unwrap();
        assert_eq!(s[0].median, Some(0.2));
        assert_eq!(s[1].iqr, Some(0.0));
        assert_eq!(s[1].valid, 2);
        assert!((s[1].flag_rate - 1.0 / 3.0).abs() < 1e-15);
        let c = count_table(&rows).unwrap();
        assert_eq!(c[0].count(2), 2);
        assert_eq!(c[1].failed, 1);
        assert!(c.iter().all(|c| c.total() == 3));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn csv_layouts() {
        let rows = vec![row("a", "ns", 0, Some(0.25), Some(2)), row("b", "ns", 0, None, None)];
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,selector,rep,distance,n_clusters,flags,seconds,h11,h12,h21,h22\n"));
        assert!(text.contains("a,ns,0,0.25,2,,,1,0,0,1\n"));
        let mut buf = Vec::new();
        write_table1_csv(&summarize(&rows).unwrap(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "selector,a,b\nns,0.2500 (0.0000),\n");
        let mut buf = Vec::new();
        write_table2_csv(&count_table(&rows).unwrap(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "model,selector,1,2,failed\na,ns,0,1,0\nb,ns,0,0,1\n");
    }

    #[test]
    fn config_validation() {
        let reg = Registry::builtin();
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.resolve(&reg).unwrap().1.len(), 10);
        cfg.models = vec!["nope".into()];
        assert!(cfg.resolve(&reg).is_err());
        cfg.models.clear();
        cfg.selectors = vec!["bogus".into()];
        assert!(cfg.resolve(&reg).is_err());
        cfg.selectors = vec!["ns".into()];
        cfg.replications = 0;
        assert!(cfg.resolve(&reg).is_err());
        assert!(ExperimentConfig::from_json(r#"{"replications": 2, "unknown": 1}"#).is_err());
        assert_eq!(ExperimentConfig::from_json(r#"{"replications": 2}"#).unwrap().replications, 2);
    }
}
