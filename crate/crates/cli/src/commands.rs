use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use domino::checkpoint::Checkpoint;
use domino::loss::mean_domino_penalty;
use domino::metrics::{CalibrationReport, ConfusionMatrix, ReportMetadata};
use domino::train::{
    evaluate, predict, train as train_arm, two_phase_cm_train, Method, TrainError, TrainHistory,
};
use domino::wmatrix::{
    build_w_cm, build_w_hc, load_w, parse_w_csv, write_w_csv, HierarchySpec, PenaltyMatrix,
    WMatrixError,
};
use domino::Dataset;

use crate::config::RunConfig;
use crate::error::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn w_error(stage: &str, e: WMatrixError) -> CliError {
    match e {
        WMatrixError::Io(_) => CliError::runtime(format!("{stage}: {e}")),
        _ => CliError::usage(format!("{stage}: {e}")),
    }
}

fn train_error(stage: &str, e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) | TrainError::ConfigDatasetMismatch(_) => {
            CliError::usage(format!("{stage}: {e}"))
        }
        _ => CliError::runtime(format!("{stage}: {e}")),
    }
}

fn summarize_w(w: &PenaltyMatrix) -> String {
    let n = w.n();
    let off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| w.get(i, j))
        .collect();
    let min = off.iter().copied().fold(f64::INFINITY, f64::min);
    let max = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    format!(
        "W: {n}x{n}, 0 violations, off-diagonal range [{min}, {max}], {}",
        if w.is_symmetric() {
            "symmetric"
        } else {
            "asymmetric"
        }
    )
}

pub fn wmatrix(
    from_confusion: Option<&Path>,
    from_hierarchy: Option<&Path>,
    out: &Path,
    floor: Option<f64>,
) -> Result<(), CliError> {
    let w = match (from_confusion, from_hierarchy) {
        (Some(path), None) => {
            let cm = ConfusionMatrix::from_csv(&read_text(path)?)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            build_w_cm(&cm, floor.unwrap_or(0.0)).map_err(|e| w_error("confusion-derived W", e))?
        }
        (None, Some(path)) => {
            if floor.is_some() {
                return Err(CliError::usage("--floor only applies to --from-confusion"));
            }
            let spec = HierarchySpec::from_csv(&read_text(path)?)
                .map_err(|e| w_error(&path.display().to_string(), e))?;
            build_w_hc(&spec)
        }
        _ => {
            return Err(CliError::usage(
                "pass exactly one of --from-confusion or --from-hierarchy",
            ))
        }
    };
    write_file(out, write_w_csv(&w, None))?;
    let reloaded = load_w(out).map_err(|e| w_error("reloading written W", e))?;
    if reloaded != w {
        return Err(CliError::runtime(format!(
            "{} did not reload to the same matrix",
            out.display()
        )));
    }
    println!("{}", summarize_w(&w));
    println!("wrote {}", out.display());
    Ok(())
}

fn load_penalty(path: &Path, num_classes: usize, what: &str) -> Result<PenaltyMatrix, CliError> {
    let (w, _) =
        parse_w_csv(&read_text(path)?).map_err(|e| w_error(&path.display().to_string(), e))?;
    if w.n() != num_classes {
        return Err(CliError::usage(format!(
            "{what} {}: W.n = {} but the dataset has num_classes = {num_classes}",
            path.display(),
            w.n()
        )));
    }
    Ok(w)
}

fn save_history(path: &Path, history: &TrainHistory) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(history).expect("history is serializable");
    json.push('\n');
    write_file(path, json)
}

fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CliError> {
    ckpt.save(path)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn metadata(cfg: &RunConfig, wallclock_s: f64) -> ReportMetadata {
    ReportMetadata {
        method: cfg.method.to_string(),
        beta: if cfg.method == Method::Baseline {
            0.0
        } else {
            cfg.beta
        },
        seed: cfg.seed,
        dataset: cfg.dataset_id.clone(),
        wallclock_s,
    }
}

fn report(
    ckpt: &Checkpoint,
    data: &Dataset,
    cfg: &RunConfig,
    wallclock_s: f64,
) -> Result<CalibrationReport, CliError> {
    evaluate(ckpt, data, metadata(cfg, wallclock_s), cfg.num_bins)
        .map_err(|e| train_error("evaluation", e))
}

pub fn train(config: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    let splits = cfg.load_splits()?;
    let tcfg = cfg.train_config(splits.train.feature_dim())?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out.display())))?;
    let names = cfg.class_names.as_deref();

    let start = Instant::now();
    let (ckpt, history) = match cfg.method {
        Method::Baseline => train_arm(&tcfg, &splits.train, &splits.val, None)
            .map_err(|e| train_error("training", e))?,
        Method::Hc => {
            let w = match (&cfg.hierarchy, &cfg.w_file) {
                (Some(h), _) => {
                    let spec = HierarchySpec::from_csv(&read_text(h)?)
                        .map_err(|e| w_error(&h.display().to_string(), e))?;
                    if spec.num_classes() != cfg.num_classes() {
                        return Err(CliError::usage(format!(
                            "hierarchy {} covers {} classes, config has num_classes = {}",
                            h.display(),
                            spec.num_classes(),
                            cfg.num_classes()
                        )));
                    }
                    build_w_hc(&spec)
                }
                (None, Some(p)) => load_penalty(p, cfg.num_classes(), "w_file")?,
                (None, None) => unreachable!("validated by the config parser"),
            };
            write_file(&out.join("w.csv"), write_w_csv(&w, names))?;
            train_arm(&tcfg, &splits.train, &splits.val, Some(&w))
                .map_err(|e| train_error("training", e))?
        }
        Method::Cm => {
            let run = two_phase_cm_train(&tcfg, &splits.train, &splits.val)
                .map_err(|e| train_error("two-phase training", e))?;
            save_checkpoint(&out.join("phase1.bin"), &run.phase1)?;
            save_history(&out.join("phase1_history.json"), &run.phase1_history)?;
            write_file(
                &out.join("phase1_val_confusion.csv"),
                run.confusion.to_csv(),
            )?;
            write_file(&out.join("w.csv"), write_w_csv(&run.penalty, names))?;
            (run.checkpoint, run.history)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    save_checkpoint(&out.join("checkpoint.bin"), &ckpt)?;
    save_history(&out.join("history.json"), &history)?;
    let rep = report(&ckpt, &splits.test, &cfg, elapsed)?;
    write_file(&out.join("report.json"), rep.to_json())?;
    write_file(&out.join("confusion.csv"), rep.confusion.to_csv())?;
    write_file(
        &out.join("confusion.txt"),
        rep.confusion.render_table(names),
    )?;
    println!(
        "{} beta={} seed={}: accuracy {:.4}, mean Brier {:.6}, ece {:.6}, {:.2}s -> {}",
        cfg.method,
        rep.metadata.beta,
        cfg.seed,
        rep.accuracy,
        rep.mean_brier,
        rep.ece,
        elapsed,
        out.display()
    );
    Ok(())
}

pub fn eval(
    checkpoint: &Path,
    data: &Path,
    split: &str,
    w_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if !checkpoint.exists() {
        return Err(CliError::usage(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let ckpt = Checkpoint::load(checkpoint)
        .map_err(|e| CliError::usage(format!("checkpoint {}: {e}", checkpoint.display())))?;
    let cfg = RunConfig::load(data)?;
    let splits = cfg.load_splits()?;
    let ds = match split {
        "train" => &splits.train,
        "val" => &splits.val,
        _ => &splits.test,
    };
    let params = &ckpt.params;
    if params.input_dim() != ds.feature_dim() || params.num_classes() != ds.num_classes() {
        return Err(CliError::usage(format!(
            "checkpoint expects {} features and {} classes, dataset has {} and {}",
            params.input_dim(),
            params.num_classes(),
            ds.feature_dim(),
            ds.num_classes()
        )));
    }
    let w = w_path
        .map(|p| load_penalty(p, ds.num_classes(), "--w"))
        .transpose()?;

    let start = Instant::now();
    let mut rep = report(&ckpt, ds, &cfg, 0.0)?;
    rep.metadata.wallclock_s = start.elapsed().as_secs_f64();
    let out_path = out.map(Path::to_path_buf).unwrap_or_else(|| {
        checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("eval_{split}.json"))
    });
    write_file(&out_path, rep.to_json())?;
    println!(
        "{split}: accuracy {:.4}, mean Brier {:.6}, ece {:.6}",
        rep.accuracy, rep.mean_brier, rep.ece
    );
    if let (Some(w), Some(p)) = (&w, w_path) {
        let (probs, _) = predict(&ckpt, ds).map_err(|e| train_error("prediction", e))?;
        let penalty = mean_domino_penalty(&probs, &ds.labels.labels, w)
            .map_err(|e| CliError::runtime(format!("penalty: {e}")))?;
        println!("mean penalty under {}: {penalty}", p.display());
        let sibling = penalty_path(&out_path);
        write_file(
            &sibling,
            format!("w = {}\nmean_penalty = {penalty:?}\n", p.display()),
        )?;
    }
    println!("wrote {}", out_path.display());
    Ok(())
}

/// `report.json` -> `report.penalty.txt`
pub fn penalty_path(report: &Path) -> PathBuf {
    report.with_extension("penalty.txt")
}

enum Better {
    Higher,
    Lower,
}

pub fn compare(paths: &[PathBuf]) -> Result<(), CliError> {
    if paths.len() < 2 {
        return Err(CliError::usage("compare needs at least two reports"));
    }
    let reports = paths
        .iter()
        .map(|p| {
            CalibrationReport::load(p)
                .map_err(|e| CliError::usage(format!("report {}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let first = &reports[0];
    for (r, p) in reports.iter().zip(paths).skip(1) {
        if r.metadata.dataset != first.metadata.dataset {
            return Err(CliError::usage(format!(
                "dataset id mismatch: {} has `{}`, {} has `{}`",
                paths[0].display(),
                first.metadata.dataset,
                p.display(),
                r.metadata.dataset
            )));
        }
        if r.per_class_brier.len() != first.per_class_brier.len() {
            return Err(CliError::usage(format!(
                "{} has {} classes, {} has {}",
                paths[0].display(),
                first.per_class_brier.len(),
                p.display(),
                r.per_class_brier.len()
            )));
        }
    }
    print!("{}", compare_table(&reports, paths));
    Ok(())
}

/// One row per metric, one column per report; `*` marks the best value of a row.
pub fn compare_table(reports: &[CalibrationReport], paths: &[PathBuf]) -> String {
    let mut rows: Vec<(String, Better, Vec<f64>)> = vec![(
        "accuracy".into(),
        Better::Higher,
        reports.iter().map(|r| r.accuracy).collect(),
    )];
    for c in 0..reports[0].per_class_brier.len() {
        rows.push((
            format!("brier[{c}]"),
            Better::Lower,
            reports.iter().map(|r| r.per_class_brier[c]).collect(),
        ));
    }
    rows.push((
        "mean_brier".into(),
        Better::Lower,
        reports.iter().map(|r| r.mean_brier).collect(),
    ));
    rows.push((
        "ece".into(),
        Better::Lower,
        reports.iter().map(|r| r.ece).collect(),
    ));

    let headers: Vec<String> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| format!("[{}] {}", i + 1, r.metadata.method))
        .collect();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, better, values)| {
            let best = match better {
                Better::Higher => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Better::Lower => values.iter().copied().fold(f64::INFINITY, f64::min),
            };
            values
                .iter()
                .map(|&v| format!("{v:.6}{}", if v == best { " *" } else { "  " }))
                .collect()
        })
        .collect();
    let label_w = rows
        .iter()
        .map(|r| r.0.len())
        .max()
        .unwrap_or(0)
        .max("metric".len());
    let col_w: Vec<usize> = (0..reports.len())
        .map(|j| {
            cells
                .iter()
                .map(|row| row[j].len())
                .chain([headers[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    writeln!(out, "dataset: {}", reports[0].metadata.dataset).unwrap();
    for (i, p) in paths.iter().enumerate() {
        let m = &reports[i].metadata;
        writeln!(
            out,
            "[{}] {} (method {}, beta {}, seed {})",
            i + 1,
            p.display(),
            m.method,
            m.beta,
            m.seed
        )
        .unwrap();
    }
    write!(out, "{:<label_w$}", "metric").unwrap();
    for (h, w) in headers.iter().zip(&col_w) {
        write!(out, "  {h:>w$}").unwrap();
    }
    out.push('\n');
    for ((label, _, _), row) in rows.iter().zip(&cells) {
        write!(out, "{label:<label_w$}").unwrap();
        for (c, w) in row.iter().zip(&col_w) {
            write!(out, "  {c:>w$}").unwrap();
        }
        out.push('\n');
    }
    out.push_str("* best value in row\n");
    out
}
