//! `gcns` — command-line pipeline for spectral graph-convolution models on
//! multichannel signal datasets: graph building, training, evaluation,
//! cross-validation and architecture grids.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/file error, 4 numeric abort.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::Serialize;

use gcns_core::checkpoint;
use gcns_core::coarsen::{coarsen, CoarseningPlan};
use gcns_core::data::{
    detect_format, load_dataset, make_synthetic, save_dataset, split, FileFormat, SignalDataset,
    SplitKind, SplitPlan,
};
use gcns_core::graph::{build_graph, CorrelationGraph};
use gcns_core::metrics::eval_report;
use gcns_core::network::ModelSpec;
use gcns_core::train::{cross_validate, grid, predict, train, GridRow, TrainConfig};
use gcns_core::util::{fnv1a64, matrix_fingerprint};
use gcns_core::Error;

#[derive(Parser)]
#[command(
    name = "gcns",
    version,
    about = "Spectral graph-convolution pipeline for multichannel signals"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset (CSV or binary, by extension).
    Synth(SynthArgs),
    /// Compute the correlation graph of a dataset and write its matrices.
    BuildGraph(BuildGraphArgs),
    /// Train a model and write a checkpoint plus a JSON report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// K-fold cross-validation of one architecture.
    Cv(CvArgs),
    /// Train every architecture in a specs file and rank the results.
    Grid(GridArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    /// Output path; .bin selects the binary format, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, env = "GCNS_OUT_DIR")]
    out_dir: PathBuf,
    /// Compute correlations from a 90% training split instead of all samples.
    #[arg(long)]
    train_only_pcc: bool,
    /// Split seed used with --train-only-pcc.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ModelFlags {
    /// Architecture string, e.g. "(C-P)x2-S" or "C-C-P-F-S".
    #[arg(long)]
    arch: String,
    /// Comma-separated output filters, one per conv layer.
    #[arg(long, value_delimiter = ',')]
    filters: Vec<usize>,
    /// Chebyshev polynomial order K.
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Comma-separated hidden sizes, one per F layer.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    fc: Vec<usize>,
}

#[derive(Args, Clone)]
struct FitFlags {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 1e-6)]
    l2: f64,
    #[arg(long, default_value_t = 1024)]
    batch: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate GAA every this many epochs (0 = final epoch only).
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    /// Per-channel z-score using training-split statistics.
    #[arg(long)]
    zscore: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    fit: FitFlags,
    /// "holdout:<fraction>" or "kfold:<k>:<fold>".
    #[arg(long, default_value = "holdout:0.9")]
    split: String,
    #[arg(long, env = "GCNS_OUT_DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Split whose test side is evaluated; same syntax as train --split.
    #[arg(long, default_value = "holdout:0.9")]
    split_spec: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    zscore: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long, env = "GCNS_OUT_DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    /// One spec per line: <arch> <filters> <order>, e.g. "(C-P)x2-S 8,16 2".
    #[arg(long)]
    specs_file: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long, env = "GCNS_OUT_DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::BuildGraph(args) => cmd_build_graph(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Cv(args) => cmd_cv(args),
        Cmd::Grid(args) => cmd_grid(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::NonFiniteLoss { .. } => 4,
        Error::InvalidArgument(_) | Error::ArchParse(_) => 2,
        _ => 3,
    }
}

// ---------- manifest plumbing ----------

#[derive(Serialize)]
struct RunManifest {
    command: String,
    flags: serde_json::Value,
    seeds: Vec<u64>,
    input_digests: Vec<InputDigest>,
    started_unix: u64,
    finished_unix: u64,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    fnv1a64: String,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn digest_of(path: &Path) -> Result<InputDigest, Error> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
    })
}

/// Temp-then-rename so failed runs leave no partial artifact behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn matrix_csv(matrix: &Array2<f64>) -> Vec<u8> {
    let mut out = String::new();
    for row in matrix.outer_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

// ---------- shared pieces ----------

fn parse_split_spec(text: &str) -> Result<SplitKind, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["holdout", frac] => {
            let train_fraction: f64 = frac.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad holdout fraction '{frac}' in '{text}'"))
            })?;
            Ok(SplitKind::Holdout { train_fraction })
        }
        ["kfold", k, fold] => {
            let k: usize = k
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad k '{k}' in '{text}'")))?;
            let fold_id: usize = fold
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad fold '{fold}' in '{text}'")))?;
            Ok(SplitKind::KFold { k, fold_id })
        }
        ["all"] => Ok(SplitKind::All),
        _ => Err(Error::InvalidArgument(format!(
            "split '{text}' is not holdout:<fraction>, kfold:<k>:<fold> or all"
        ))),
    }
}

fn load_data(path: &Path) -> Result<SignalDataset, Error> {
    load_dataset(path, detect_format(path))
}

fn model_spec_of(flags: &ModelFlags, n_classes: usize, dropout: f64) -> Result<ModelSpec, Error> {
    ModelSpec::new(
        &flags.arch,
        flags.filters.clone(),
        flags.order,
        flags.fc.clone(),
        n_classes,
        dropout,
    )
}

/// Pooling depth is bounded by how often the channel count halves.
fn check_pool_budget(spec: &ModelSpec, n_channels: usize) -> Result<(), Error> {
    let budget = (n_channels as f64).log2().floor() as usize;
    if spec.n_pools() > budget {
        return Err(Error::InvalidArgument(format!(
            "{} pool layers exceed the limit of {budget} for {n_channels} channels",
            spec.n_pools()
        )));
    }
    Ok(())
}

fn plan_for(
    graph: &CorrelationGraph,
    spec: &ModelSpec,
    seed: u64,
) -> Result<CoarseningPlan, Error> {
    coarsen(graph, spec.n_pools().max(1), seed)
}

fn fit_config(fit: &FitFlags) -> TrainConfig {
    TrainConfig {
        learning_rate: fit.lr,
        l2_lambda: fit.l2,
        batch_size: fit.batch,
        epochs: fit.epochs,
        dropout_rate: fit.dropout,
        seed: fit.seed,
        eval_every: fit.eval_every,
    }
}

fn maybe_zscore(dataset: SignalDataset, plan: &SplitPlan, apply: bool) -> SignalDataset {
    if apply {
        dataset.zscore_on_train(&plan.train_indices)
    } else {
        dataset
    }
}

// ---------- commands ----------

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let dataset = make_synthetic(
        args.channels,
        args.per_class,
        args.classes,
        args.seed,
        args.separation,
    )?;
    let format = if args.out.extension().is_some_and(|e| e == "bin") {
        FileFormat::Binary
    } else {
        FileFormat::Csv
    };
    save_dataset(&dataset, &args.out, format)?;
    println!(
        "wrote {} samples x {} channels, {} classes to {}",
        dataset.n_samples,
        dataset.n_channels,
        dataset.n_classes,
        args.out.display()
    );
    Ok(())
}

fn cmd_build_graph(args: BuildGraphArgs) -> Result<(), Error> {
    let started = unix_now();
    let dataset = load_data(&args.data)?;
    let source = if args.train_only_pcc {
        let plan = split(
            &dataset,
            SplitKind::Holdout {
                train_fraction: 0.9,
            },
            args.seed,
        )?;
        subset(&dataset, &plan.train_indices)?
    } else {
        dataset.clone()
    };
    let graph = build_graph(&source)?;
    let lap = gcns_core::graph::laplacians(&graph.adjacency, &graph.degrees);

    let abs_pcc = graph.pcc.mapv(f64::abs);
    let files: [(&str, &Array2<f64>); 4] = [
        ("pcc.csv", &graph.pcc),
        ("abs_pcc.csv", &abs_pcc),
        ("adjacency.csv", &graph.adjacency),
        ("laplacian_norm.csv", &lap.normalized),
    ];
    let mut artifacts = Vec::new();
    for (name, matrix) in files {
        let path = args.out_dir.join(name);
        write_atomic(&path, &matrix_csv(matrix))?;
        artifacts.push(path.display().to_string());
    }

    let manifest_path = args.out_dir.join("manifest.json");
    artifacts.push(manifest_path.display().to_string());
    let manifest = RunManifest {
        command: "build-graph".into(),
        flags: serde_json::json!({
            "data": args.data.display().to_string(),
            "out_dir": args.out_dir.display().to_string(),
            "train_only_pcc": args.train_only_pcc,
            "seed": args.seed,
        }),
        seeds: vec![args.seed],
        input_digests: vec![digest_of(&args.data)?],
        started_unix: started,
        finished_unix: unix_now(),
        artifacts,
    };
    write_json(&manifest_path, &manifest)?;
    println!(
        "graph over {} nodes written to {}",
        graph.n_nodes,
        args.out_dir.display()
    );
    Ok(())
}

fn subset(dataset: &SignalDataset, indices: &[usize]) -> Result<SignalDataset, Error> {
    let mut values = Array2::<f64>::zeros((indices.len(), dataset.n_channels));
    let mut labels = Vec::with_capacity(indices.len());
    for (row, &ix) in indices.iter().enumerate() {
        values.row_mut(row).assign(&dataset.values.row(ix));
        labels.push(dataset.labels[ix]);
    }
    SignalDataset::new(
        values,
        labels,
        dataset.n_classes,
        dataset.class_names.clone(),
    )
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let started = unix_now();
    let dataset = load_data(&args.data)?;
    let spec = model_spec_of(&args.model, dataset.n_classes, args.fit.dropout)?;
    check_pool_budget(&spec, dataset.n_channels)?;
    let split_kind = parse_split_spec(&args.split)?;
    let config = fit_config(&args.fit);
    config.validate()?;

    let split_plan = split(&dataset, split_kind, config.seed)?;
    let dataset = maybe_zscore(dataset, &split_plan, args.fit.zscore);
    let graph = build_graph(&dataset)?;
    let fingerprint = matrix_fingerprint(&graph.adjacency);
    let plan = plan_for(&graph, &spec, config.seed)?;

    let outcome = train(&dataset, &split_plan, &plan, &spec, &config)?;

    let ckpt_path = args.out.join("model.ckpt");
    let report_path = args.out.join("report.json");
    let manifest_path = args.out.join("manifest.json");
    fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    checkpoint::save(&ckpt_path, &spec, &outcome.params, config.seed, fingerprint)?;
    // Reports are byte-reproducible given identical flags; wall time lives
    // in the manifest timestamps instead.
    let mut report = outcome.report;
    report.wall_time_seconds = 0.0;
    write_json(&report_path, &report)?;

    let manifest = RunManifest {
        command: "train".into(),
        flags: serde_json::json!({
            "data": args.data.display().to_string(),
            "arch": args.model.arch,
            "filters": args.model.filters,
            "order": args.model.order,
            "fc": args.model.fc,
            "epochs": args.fit.epochs,
            "lr": args.fit.lr,
            "l2": args.fit.l2,
            "batch": args.fit.batch,
            "dropout": args.fit.dropout,
            "seed": args.fit.seed,
            "eval_every": args.fit.eval_every,
            "zscore": args.fit.zscore,
            "split": args.split,
            "out": args.out.display().to_string(),
            "graph_fingerprint": format!("{fingerprint:016x}"),
        }),
        seeds: vec![config.seed],
        input_digests: vec![digest_of(&args.data)?],
        started_unix: started,
        finished_unix: unix_now(),
        artifacts: vec![
            ckpt_path.display().to_string(),
            report_path.display().to_string(),
            manifest_path.display().to_string(),
        ],
    };
    write_json(&manifest_path, &manifest)?;
    println!(
        "final test GAA {:.4} (train {:.4}); artifacts in {}",
        report.final_eval.gaa,
        report.final_train_gaa,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let dataset = load_data(&args.data)?;
    let split_kind = parse_split_spec(&args.split_spec)?;
    let split_plan = split(&dataset, split_kind, args.seed)?;
    let dataset = maybe_zscore(dataset, &split_plan, args.zscore);
    let graph = build_graph(&dataset)?;
    let fingerprint = matrix_fingerprint(&graph.adjacency);

    let ckpt = match checkpoint::load(&args.checkpoint, Some(fingerprint)) {
        Err(Error::FingerprintMismatch { expected, actual }) => {
            eprintln!(
                "graph fingerprint mismatch: dataset graph {expected:016x}, checkpoint {actual:016x}"
            );
            return Err(Error::FingerprintMismatch { expected, actual });
        }
        other => other?,
    };
    let spec = ckpt.descriptor.to_spec()?;
    let plan = plan_for(&graph, &spec, ckpt.coarsening_seed)?;
    let mut params = ckpt.into_params();

    let eval_indices: &[usize] = if split_plan.test_indices.is_empty() {
        &split_plan.train_indices
    } else {
        &split_plan.test_indices
    };
    let probs = predict(&mut params, &spec, &plan, &dataset, eval_indices)?;
    let labels: Vec<usize> = eval_indices.iter().map(|&i| dataset.labels[i]).collect();
    let report = eval_report(&probs, &labels)?;
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => {
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
            println!("{text}");
        }
    }
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<(), Error> {
    let started = unix_now();
    let dataset = load_data(&args.data)?;
    let spec = model_spec_of(&args.model, dataset.n_classes, args.fit.dropout)?;
    check_pool_budget(&spec, dataset.n_channels)?;
    let config = fit_config(&args.fit);
    config.validate()?;
    // Statistics for the optional z-score come from the full data here: each
    // fold would otherwise see a different graph and invalidate the plan.
    let dataset = if args.fit.zscore {
        let all: Vec<usize> = (0..dataset.n_samples).collect();
        dataset.zscore_on_train(&all)
    } else {
        dataset
    };
    let graph = build_graph(&dataset)?;
    let plan = plan_for(&graph, &spec, config.seed)?;
    let outcome = cross_validate(&dataset, args.k, &plan, &spec, &config)?;

    #[derive(Serialize)]
    struct CvDocument<'a> {
        summary: &'a gcns_core::train::CvSummary,
        folds: Vec<serde_json::Value>,
    }
    let folds = outcome
        .reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            serde_json::json!({
                "fold": i,
                "gaa": r.final_eval.gaa,
                "kappa": r.final_eval.kappa,
                "macro_f1": r.final_eval.macro_f1,
            })
        })
        .collect();
    let doc = CvDocument {
        summary: &outcome.summary,
        folds,
    };
    let cv_path = args.out.join("cv.json");
    let manifest_path = args.out.join("manifest.json");
    write_json(&cv_path, &doc)?;
    let manifest = RunManifest {
        command: "cv".into(),
        flags: serde_json::json!({
            "data": args.data.display().to_string(),
            "k": args.k,
            "arch": args.model.arch,
            "filters": args.model.filters,
            "order": args.model.order,
            "epochs": args.fit.epochs,
            "lr": args.fit.lr,
            "seed": args.fit.seed,
            "zscore": args.fit.zscore,
        }),
        seeds: vec![config.seed],
        input_digests: vec![digest_of(&args.data)?],
        started_unix: started,
        finished_unix: unix_now(),
        artifacts: vec![
            cv_path.display().to_string(),
            manifest_path.display().to_string(),
        ],
    };
    write_json(&manifest_path, &manifest)?;
    println!(
        "{}-fold GAA mean {:.4} (min {:.4}, max {:.4})",
        outcome.summary.k,
        outcome.summary.mean_gaa,
        outcome.summary.min_gaa,
        outcome.summary.max_gaa
    );
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<(), Error> {
    let started = unix_now();
    let dataset = load_data(&args.data)?;
    let text = fs::read_to_string(&args.specs_file)
        .map_err(|e| Error::io(args.specs_file.display().to_string(), e))?;

    let mut specs = Vec::new();
    let mut failed_rows: Vec<GridRow> = Vec::new();
    let mut max_pools = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_spec_line(line, dataset.n_classes, args.fit.dropout) {
            Ok(spec) => {
                if let Err(e) = check_pool_budget(&spec, dataset.n_channels) {
                    failed_rows.push(GridRow {
                        arch: spec.arch_text.clone(),
                        order: spec.order,
                        filters: spec.filters.clone(),
                        gaa: None,
                        error: Some(e.to_string()),
                    });
                } else {
                    max_pools = max_pools.max(spec.n_pools());
                    specs.push(spec);
                }
            }
            Err(e) => failed_rows.push(GridRow {
                arch: line.to_string(),
                order: 0,
                filters: vec![],
                gaa: None,
                error: Some(format!("line {}: {e}", line_no + 1)),
            }),
        }
    }
    if specs.is_empty() && failed_rows.is_empty() {
        return Err(Error::InvalidArgument("specs file has no spec lines".into()));
    }

    let config = fit_config(&args.fit);
    config.validate()?;
    let graph = build_graph(&dataset)?;
    let mut rows = if specs.is_empty() {
        Vec::new()
    } else {
        let plan = coarsen(&graph, max_pools.max(1), config.seed)?;
        grid(&dataset, &specs, &plan, &config)?
    };
    rows.extend(failed_rows);

    let grid_path = args.out.join("grid.json");
    let manifest_path = args.out.join("manifest.json");
    write_json(&grid_path, &rows)?;
    let manifest = RunManifest {
        command: "grid".into(),
        flags: serde_json::json!({
            "data": args.data.display().to_string(),
            "specs_file": args.specs_file.display().to_string(),
            "epochs": args.fit.epochs,
            "lr": args.fit.lr,
            "seed": args.fit.seed,
        }),
        seeds: vec![config.seed],
        input_digests: vec![digest_of(&args.data)?, digest_of(&args.specs_file)?],
        started_unix: started,
        finished_unix: unix_now(),
        artifacts: vec![
            grid_path.display().to_string(),
            manifest_path.display().to_string(),
        ],
    };
    write_json(&manifest_path, &manifest)?;
    for row in &rows {
        match (row.gaa, &row.error) {
            (Some(g), _) => println!("{:.4}  K={}  {}", g, row.order, row.arch),
            (None, Some(e)) => println!("failed  {}  ({e})", row.arch),
            (None, None) => {}
        }
    }
    Ok(())
}

/// "<arch> <comma-filters> <order>", whitespace-separated.
fn parse_spec_line(line: &str, n_classes: usize, dropout: f64) -> Result<ModelSpec, Error> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected '<arch> <filters> <order>', got {} fields",
            fields.len()
        )));
    }
    let filters: Vec<usize> = fields[1]
        .split(',')
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad filter count '{f}'")))
        })
        .collect::<Result<_, _>>()?;
    let order: usize = fields[2]
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad order '{}'", fields[2])))?;
    ModelSpec::new(fields[0], filters, order, vec![], n_classes, dropout)
}
