use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mslab::harness::{self, ExperimentConfig};
use mslab::kernels::BandwidthMatrix;
use mslab::meanshift::{MeanShift, MeanShiftConfig};
use mslab::partition::{distance_in_measure, label_grid, GridSpec, SpacePartition};
use mslab::selectors::{select, PilotRule, SelectorSpec};
use mslab::{plot, DataSet, Error, Registry, Result};

#[derive(Parser)]
#[command(name = "mslab", version, about = "Mean shift clustering, gradient bandwidth selectors and partition distances")]
struct Cli {
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, global = true, env = "MSLAB_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a bandwidth matrix for a CSV sample.
    Select(SelectArgs),
    /// Cluster a CSV sample, and optionally a grid over it, by mean shift.
    Cluster(ClusterArgs),
    /// Distance in measure between two partition CSV files.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a simulation study from a JSON config.
    Simulate(SimulateArgs),
    /// Inspect the model registry.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
        /// Registry file to use instead of the built-in models.
        #[arg(long, global = true)]
        registry: Option<PathBuf>,
    },
    /// Write a gnuplot script for a partition or summary CSV.
    Plot {
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SelectorArgs {
    /// ns, at, cvu, cvd, piu, pid, scvu, scvd, itu or itd.
    #[arg(long)]
    selector: Option<String>,
    /// normal-scale, or fixed:<row-major entries>.
    #[arg(long, default_value = "normal-scale")]
    pilot: String,
    #[arg(long)]
    max_evals: Option<usize>,
    #[arg(long)]
    f_tol: Option<f64>,
    #[arg(long)]
    x_tol: Option<f64>,
    #[arg(long)]
    root_tol: Option<f64>,
    /// Skip the second simplex search.
    #[arg(long)]
    no_restart: bool,
}

impl SelectorArgs {
    fn spec(&self) -> Result<Option<SelectorSpec>> {
        let Some(id) = &self.selector else {
            return Ok(None);
        };
        let mut spec: SelectorSpec = id.parse()?;
        spec.pilot = self.pilot.parse::<PilotRule>()?;
        if let Some(v) = self.max_evals {
            spec.optimizer.max_evals = v;
        }
        if let Some(v) = self.f_tol {
            spec.optimizer.f_tol = v;
        }
        if let Some(v) = self.x_tol {
            spec.optimizer.x_tol = v;
        }
        if let Some(v) = self.root_tol {
            spec.root_tol = v;
        }
        spec.restart = !self.no_restart;
        Ok(Some(spec))
    }
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    selector: SelectorArgs,
    /// Evaluate the criterion at the search start and stop.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    data: PathBuf,
    /// Bandwidth matrix entries, row-major and comma separated.
    #[arg(long, conflicts_with = "selector")]
    h: Option<String>,
    #[command(flatten)]
    selector: SelectorArgs,
    /// Also label a grid with this many points per coordinate.
    #[arg(long)]
    grid: Option<usize>,
    /// Labels of the data points (default: stdout).
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Grid partition export; needs --grid.
    #[arg(long, requires = "grid")]
    partition_out: Option<PathBuf>,
    /// Modes, bandwidth and flags as JSON.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    #[arg(long)]
    step_tol: Option<f64>,
    #[arg(long)]
    merge_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated selector ids.
    #[arg(long, value_delimiter = ',')]
    selectors: Option<Vec<String>>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    record_timing: bool,
}

#[derive(Subcommand)]
enum ModelsAction {
    List,
    Show { name: String },
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let data = DataSet::read_csv(&args.data)?;
    let spec = args
        .selector
        .spec()?
        .ok_or_else(|| Error::InvalidArgument("--selector is required".into()))?;
    let text = if args.dry_run {
        let start = spec.start(&data)?;
        let value = spec.criterion_at(&data, &start)?;
        pretty(&json!({ "selector": spec.id(), "start": start, "criterion": value }))?
    } else {
        pretty(&select(&spec, &data)?)?
    };
    write_text(args.output.as_deref(), &text)
}

fn parse_matrix(s: &str) -> Result<BandwidthMatrix> {
    let entries: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("--h: {e}")))?;
    let d = (entries.len() as f64).sqrt().round() as usize;
    if d * d != entries.len() || d == 0 {
        return Err(Error::InvalidArgument("--h needs d x d entries".into()));
    }
    BandwidthMatrix::from_rows(d, &entries)
}

fn data_grid(data: &DataSet, h: &BandwidthMatrix, resolution: usize) -> Result<GridSpec> {
    let (mut lo, mut hi) = data.bounds();
    for k in 0..data.dim() {
        let pad = 3.0 * h.get(k, k).sqrt();
        lo[k] -= pad;
        hi[k] += pad;
    }
    GridSpec::new(lo, hi, resolution)
}

fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let data = DataSet::read_csv(&args.data)?;
    let (h, selection) = match (&args.h, args.selector.spec()?) {
        (Some(m), _) => (parse_matrix(m)?, None),
        (None, Some(spec)) => {
            let sel = select(&spec, &data)?;
            (sel.h.clone(), Some(sel))
        }
        (None, None) => return Err(Error::InvalidArgument("give --h or --selector".into())),
    };
    let mut cfg = MeanShiftConfig::default();
    if let Some(v) = args.step_tol {
        cfg.step_tol = v;
    }
    if let Some(v) = args.merge_tol {
        cfg.merge_tol = v;
    }
    if let Some(v) = args.max_iter {
        cfg.max_iter = v;
    }
    let result = MeanShift::new(&data, &h, &cfg)?.cluster(&data)?;

    let mut labels = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut labels);
        let d = data.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, l) in data.rows().zip(&result.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(l.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    write_text(args.labels_out.as_deref(), std::str::from_utf8(&labels).expect("utf8"))?;

    let mut grid_info = None;
    if let Some(res) = args.grid {
        let grid = data_grid(&data, &h, res)?;
        let (partition, grid_result) = label_grid(&grid, &data, &h, &cfg, None)?;
        if let Some(p) = &args.partition_out {
            partition.write_csv(p)?;
        }
        grid_info = Some(json!({
            "grid": grid,
            "clusters": partition.n_clusters(),
            "total_mass": partition.total_mass(),
            "not_converged": grid_result.non_converged(),
        }));
    }
    if let Some(p) = &args.summary_out {
        let summary = json!({
            "h": h,
            "selection": selection,
            "mean_shift": cfg,
            "clusters": result.n_clusters(),
            "modes": result.modes,
            "not_converged": result.non_converged(),
            "grid": grid_info,
        });
        std::fs::write(p, pretty(&summary)?)?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, threads: usize) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.threads = threads;
    if let Some(v) = args.replications {
        cfg.replications = v;
    }
    if let Some(v) = args.sample_size {
        cfg.sample_size = v;
    }
    if let Some(v) = args.resolution {
        cfg.resolution = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.models {
        cfg.models = v.clone();
    }
    if let Some(v) = &args.selectors {
        cfg.selectors = v.clone();
    }
    if let Some(v) = &args.cache_dir {
        cfg.cache_dir = Some(v.clone());
    }
    cfg.record_timing |= args.record_timing;
    let report = harness::run(&cfg)?;
    report.write_dir(&args.out)?;
    let meta = report.metadata();
    eprintln!(
        "{} rows written to {} ({} flagged, {} failed)",
        meta.rows,
        args.out.display(),
        meta.flagged_rows,
        meta.failed_rows
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Distance { a, b, output } => {
            let pa = SpacePartition::read_csv(a)?;
            let pb = SpacePartition::read_csv(b)?;
            write_text(output.as_deref(), &pretty(&distance_in_measure(&pa, &pb)?)?)
        }
        Command::Simulate(a) => cmd_simulate(a, cli.threads),
        Command::Models { action, registry } => {
            let reg = match registry {
                Some(p) => Registry::from_file(p)?,
                None => Registry::builtin(),
            };
            match action {
                ModelsAction::List => {
                    let mut out = String::new();
                    for m in reg.models() {
                        let kind = match m.model {
                            mslab::Model::Mixture(_) => "mixture",
                            mslab::Model::Ring(_) => "ring",
                        };
                        out.push_str(&format!("{}\t{kind}\t{} clusters\n", m.name, m.true_clusters));
                    }
                    write_text(None, &out)
                }
                ModelsAction::Show { name } => write_text(None, &pretty(reg.get(name)?)?),
            }
        }
        Command::Plot { input, out } => {
            let script = plot::emit(input, out)?;
            println!("{}", script.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
