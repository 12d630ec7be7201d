//! Command-line front end: `landscape`, `run` and `report`.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or config errors.
//! `FCS_THREADS` caps the number of worker threads.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, LandscapeSource, SyntheticSpec};
use crate::design::{run_methods, Method, TrialRecord};
use crate::error::{FcsError, Result};
use crate::fcs::CandidateGrid;
use crate::landscape::{
    estimate_noise_sd, generate_synthetic_landscape, load_landscape, FeatureMap, Landscape,
};
use crate::metrics::{jaccard_distance, order_key, summarize, tradeoff_curve};
use crate::records::{
    read_records, write_jaccard, write_records, write_summary, write_tradeoff, JaccardRow,
};

#[derive(Debug, Parser)]
#[command(
    name = "fcs",
    version,
    about = "Conformal confidence sets for designed sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic landscape or ingest one, writing a landscape CSV.
    Landscape(LandscapeArgs),
    /// Run trials for every (n, lambda) pair and write records and summary CSVs.
    Run(RunArgs),
    /// Build trade-off and Jaccard tables from records CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct LandscapeArgs {
    /// Experiment config whose landscape source is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Existing landscape CSV to ingest; missing noise is estimated.
    #[arg(long, conflicts_with = "config")]
    input: Option<PathBuf>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    max_order: Option<usize>,
    /// Coefficient standard deviation per interaction order.
    #[arg(long, value_delimiter = ',')]
    coeff_sd: Option<Vec<f64>>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Re-estimate noise from residuals of an interaction fit of this order.
    #[arg(long)]
    noise_order: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Candidate label grid `LO:HI:STEP`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<CandidateGrid>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    noise_scale: Option<f64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Records CSV files.
    #[arg(required = true)]
    records: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Fitness whose exceedance by the set minimum is reported.
    #[arg(long, allow_negative_numbers = true)]
    reference: Option<f64>,
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Landscape(a) => cmd_landscape(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("FCS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // fails only when a pool already exists, e.g. on repeated in-process calls
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn describe(landscape: &Landscape) {
    let (lo, hi) = landscape.fitness_range();
    println!(
        "L={} sequences={} fitness_range=[{lo}, {hi}]",
        landscape.length(),
        landscape.size()
    );
}

fn cmd_landscape(args: LandscapeArgs) -> Result<()> {
    let landscape = if let Some(input) = &args.input {
        load_landscape(input, FeatureMap::new(1, false))?
    } else {
        let mut spec = match &args.config {
            Some(path) => match ExperimentConfig::load(path)?.landscape {
                LandscapeSource::Synthetic(s) => s,
                LandscapeSource::Path(p) => {
                    return Err(FcsError::Config(format!(
                        "config landscape is the file {}; use --input to ingest it",
                        p.display()
                    )))
                }
            },
            None => SyntheticSpec::default(),
        };
        if let Some(v) = args.length {
            spec.length = v;
        }
        if let Some(v) = args.max_order {
            spec.max_order = v;
        }
        if let Some(v) = args.coeff_sd.clone() {
            spec.coeff_sd = v;
        }
        if let Some(v) = args.noise_sd {
            spec.noise_sd = v;
        }
        if let Some(v) = args.seed {
            spec.seed = v;
        }
        if spec.coeff_sd.len() != spec.max_order {
            let last = spec.coeff_sd.last().copied().unwrap_or(0.0);
            spec.coeff_sd.resize(spec.max_order, last);
        }
        generate_synthetic_landscape(
            spec.length,
            spec.max_order,
            &spec.coeff_sd,
            spec.noise_sd,
            spec.seed,
        )?
        .landscape
    };
    let landscape = match args.noise_order {
        Some(order) => estimate_noise_sd(&landscape, order)?,
        None => landscape,
    };
    landscape.write_csv(create(&args.out)?)?;
    describe(&landscape);
    Ok(())
}

fn resolve_run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = &args.method {
        cfg.methods = v.clone();
    }
    if let Some(v) = &args.lambda {
        cfg.lambda = v.clone();
    }
    if let Some(v) = &args.n {
        cfg.n = v.clone();
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.grid {
        cfg.grid = Some(v);
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.noise_scale {
        cfg.noise_scale = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = resolve_run_config(&args)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("fcs-out"));
    let landscape = cfg.build_landscape()?;
    describe(&landscape);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.json"), cfg.to_canonical_json())?;
    if matches!(cfg.landscape, LandscapeSource::Synthetic(_)) {
        landscape.write_csv(create(&out.join("landscape.csv"))?)?;
    }

    let mut records: Vec<TrialRecord> = Vec::new();
    for trial_cfg in cfg.trial_configs() {
        records.extend(run_methods(&trial_cfg, &cfg.methods, &landscape)?);
    }
    write_records(
        create(&out.join("records.csv"))?,
        &records,
        landscape.length(),
    )?;

    let (lo, hi) = landscape.fitness_range();
    let summaries = summarize(&records, hi - lo, cfg.reference_fitness(&landscape)?)?;
    write_summary(create(&out.join("summary.csv"))?, &summaries)?;
    for s in &summaries {
        println!(
            "n={} lambda={} method={} coverage={:.4} mean_width={:.4} fraction_infinite={:.4}",
            s.n, s.lambda, s.method, s.coverage, s.mean_width, s.fraction_infinite
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &args.records {
        let file = File::open(path)
            .map_err(|e| FcsError::Config(format!("cannot read {}: {e}", path.display())))?;
        records.extend(read_records(file)?);
    }
    if records.is_empty() {
        return Err(FcsError::input("no records to report on"));
    }
    std::fs::create_dir_all(&args.out)?;

    let summaries = summarize(&records, f64::NAN, args.reference)?;
    let mut cells: BTreeMap<(usize, Method), Vec<_>> = BTreeMap::new();
    for s in summaries {
        cells.entry((s.n, s.method)).or_default().push(s);
    }
    let mut rows = Vec::new();
    for ((n, method), group) in &cells {
        for (point, s) in tradeoff_curve(group)
            .into_iter()
            .zip(sorted_by_lambda(group))
        {
            rows.push((*n, *method, point, s.exceed_reference));
        }
    }
    write_tradeoff(create(&args.out.join("tradeoff.csv"))?, &rows)?;
    println!("wrote {}", args.out.join("tradeoff.csv").display());

    let jaccard = jaccard_rows(&records)?;
    if !jaccard.is_empty() {
        write_jaccard(create(&args.out.join("jaccard.csv"))?, &jaccard)?;
        println!("wrote {}", args.out.join("jaccard.csv").display());
    }
    Ok(())
}

fn sorted_by_lambda(group: &[crate::metrics::SweepSummary]) -> Vec<&crate::metrics::SweepSummary> {
    let mut v: Vec<_> = group.iter().collect();
    v.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    v
}

/// Pairwise distances between grid methods evaluated on the same trial.
fn jaccard_rows(records: &[TrialRecord]) -> Result<Vec<JaccardRow>> {
    let mut by_trial: BTreeMap<(usize, u64, usize), BTreeMap<Method, &TrialRecord>> =
        BTreeMap::new();
    for r in records.iter().filter(|r| r.method.is_grid()) {
        let key = (r.n, order_key(r.lambda), r.trial);
        if by_trial
            .entry(key)
            .or_default()
            .insert(r.method, r)
            .is_some()
        {
            return Err(FcsError::input(format!(
                "duplicate {} record for n={} lambda={} trial={}",
                r.method, r.n, r.lambda, r.trial
            )));
        }
    }
    let mut rows = Vec::new();
    for ((n, _, trial), methods) in &by_trial {
        let list: Vec<_> = methods.iter().collect();
        for (i, (ma, ra)) in list.iter().enumerate() {
            for (mb, rb) in &list[i + 1..] {
                let (a, b) = (ra.set.as_grid().unwrap(), rb.set.as_grid().unwrap());
                rows.push(JaccardRow {
                    n: *n,
                    lambda: ra.lambda,
                    trial: *trial,
                    method_a: **ma,
                    method_b: **mb,
                    jaccard: jaccard_distance(a, b)?,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("fcs").chain(args.iter().copied()))
    }

    #[test]
    fn run_flags_override_config() {
        let cli = parse(&[
            "run",
            "--lambda",
            "0,2",
            "--n",
            "16,32",
            "--method",
            "fcs_full,scs_full",
            "--grid",
            "-1:1:0.5",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else {
            panic!()
        };
        let cfg = resolve_run_config(&args).unwrap();
        assert_eq!(cfg.lambda, vec![0.0, 2.0]);
        assert_eq!(cfg.n, vec![16, 32]);
        assert_eq!(cfg.methods, vec![Method::FcsFull, Method::ScsFull]);
        assert_eq!(cfg.grid, Some(CandidateGrid::new(-1.0, 1.0, 0.5).unwrap()));
        assert_eq!(cfg.trial_configs().len(), 4);
    }

    #[test]
    fn unknown_method_is_a_usage_error() {
        let err = parse(&["run", "--method", "nope"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_alpha_maps_to_exit_code_two() {
        assert_eq!(
            main_with_args(["fcs", "run", "--alpha", "1.5", "--out", "/nonexistent/x"]),
            2
        );
    }
}
