use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use keydetect_core::classifiers::ModelKind;
use keydetect_core::dataset::{filter_outliers, load_dataset, write_normalized, AnomalyProtocol, Dataset};
use keydetect_core::detectors::ocsvm::{OcSvmParams, NU_GRID};
use keydetect_core::detectors::DetectorKind;
use keydetect_core::eval::{
    sort_by_mean_eer_desc, sort_by_mean_zfr_asc, write_cells_csv, write_confusion_csv, write_feature_histograms_csv,
    write_feature_summary_csv, write_roc_csv, write_table_csv, BenchDetector, BenchmarkConfig, DetectorTableRow,
};
use keydetect_core::model_io::write_classifier;
use keydetect_core::Scalar;
use keydetect_service::{Service, ServiceConfig, Store};
use serde_json::json;

use crate::args::{EvalAnomalyArgs, IngestArgs, OutlierArgs, ReportArgs, ServeArgs, TrainArgs};
use crate::error::{CliError, Result};
use crate::pipeline::{train_classifier, ClassifierOptions, Real};

/// Sorts a core error into the exit-code groups.
pub fn core_error(context: impl std::fmt::Display, e: keydetect_core::Error) -> CliError {
    use keydetect_core::Error as E;
    match e {
        E::Schema(_)
        | E::Value { .. }
        | E::Csv(_)
        | E::InsufficientData { .. }
        | E::SubjectTooSmall { .. }
        | E::MalformedTrace(_)
        | E::Format(_) => CliError::data(context, e),
        E::InvalidParameter(_) => CliError::Usage(format!("{context}: {e}")),
        other => CliError::runtime(context, other),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::runtime(parent.display(), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(path.display(), e))
}

fn load<T: Scalar>(path: &Path, outliers: &OutlierArgs) -> Result<Dataset<T>> {
    if let Some(z) = outliers.outlier_z {
        if !(z > 0.0) {
            return Err(CliError::Usage(format!("--outlier-z must be positive, got {z}")));
        }
    }
    let started = Instant::now();
    let ds = load_dataset::<T>(path).map_err(|e| CliError::data(path.display(), e))?;
    log::info!(
        "loaded {} samples of {} subjects in {:.2?}",
        ds.len(),
        ds.subjects().len(),
        started.elapsed()
    );
    match outliers.outlier_z {
        Some(z) => {
            let (kept, removed) = filter_outliers(&ds, z).map_err(|e| core_error("outlier filter", e))?;
            println!("outliers removed (z > {z}): {removed}");
            Ok(kept)
        }
        None => Ok(ds),
    }
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let ds = load::<f64>(&args.input, &args.outliers)?;
    let mut w = create(&args.out)?;
    write_normalized(&ds, &mut w).map_err(|e| core_error(args.out.display(), e))?;
    w.flush().map_err(|e| CliError::runtime(args.out.display(), e))?;
    println!("subjects: {}", ds.subjects().len());
    println!("samples: {}", ds.len());
    if args.outliers.outlier_z.is_none() {
        println!("outliers removed: 0 (filtering off)");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn parse_detectors(names: &[String]) -> Result<Vec<BenchDetector>> {
    let mut out = Vec::new();
    for name in names {
        let found = if name.trim().eq_ignore_ascii_case("all") {
            DetectorKind::ALL.into_iter().map(BenchDetector::Stat).collect()
        } else {
            vec![BenchDetector::parse(name).map_err(|e| CliError::Usage(e.to_string()))?]
        };
        for d in found {
            if !out.contains(&d) {
                out.push(d);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no detectors selected".into()));
    }
    Ok(out)
}

fn print_table(title: &str, rows: &[DetectorTableRow]) {
    println!("{title}");
    println!(
        "  {:<28} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "detector", "mean_eer", "sd_eer", "mean_zfr", "sd_zfr", "subjects"
    );
    for r in rows {
        println!(
            "  {:<28} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8}",
            r.detector, r.mean_eer, r.sd_eer, r.mean_zfr, r.sd_zfr, r.subjects
        );
    }
}

pub fn eval_anomaly(args: &EvalAnomalyArgs) -> Result<()> {
    let detectors = parse_detectors(&args.detectors)?;
    if let Some(nu) = args.nu {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(CliError::Usage(format!("--nu must be in (0, 1], got {nu}")));
        }
    }
    let config = BenchmarkConfig {
        protocol: AnomalyProtocol {
            train_reps: args.train_reps,
            impostor_reps: args.impostor_reps,
        },
        z_threshold: args.z_threshold,
        ocsvm: OcSvmParams {
            nu: args.nu.unwrap_or(OcSvmParams::default().nu),
            ..OcSvmParams::default()
        },
        nu_grid: args.nu.map_or_else(|| NU_GRID.to_vec(), |nu| vec![nu]),
        subjects: args.subjects.clone(),
        ..BenchmarkConfig::default()
    };
    println!(
        "effective: {}",
        json!({
            "detectors": detectors.iter().map(|d| d.tag()).collect::<Vec<_>>(),
            "ocsvm": format!("{:?}", config.ocsvm),
            "nu_grid": config.nu_grid,
            "tuning_impostors_per_subject": config.tuning_impostors_per_subject,
        })
    );

    let ds = load::<f64>(&args.data, &args.outliers)?;
    if let Some(wanted) = &args.subjects {
        if let Some(missing) = wanted.iter().find(|s| ds.subject_index(s).is_none()) {
            return Err(CliError::Usage(format!("unknown subject {missing:?}")));
        }
    }
    let started = Instant::now();
    let report = keydetect_core::eval::run_anomaly_benchmark(&ds, &detectors, &config)
        .map_err(|e| core_error("benchmark", e))?;
    let elapsed = started.elapsed();

    for cell in report.cells.iter().filter(|c| c.outcome.is_err()) {
        log::warn!(
            "{} / {}: {}",
            cell.subject,
            cell.detector.tag(),
            cell.outcome.as_ref().err().map(String::as_str).unwrap_or_default()
        );
    }

    let mut by_eer = report.rows.clone();
    sort_by_mean_eer_desc(&mut by_eer);
    let mut by_zfr = report.rows.clone();
    sort_by_mean_zfr_asc(&mut by_zfr);

    let out = &args.out;
    let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> keydetect_core::Result<()>| -> Result<()> {
        let path = out.join(name);
        let mut w = create(&path)?;
        f(&mut w).map_err(|e| core_error(path.display(), e))?;
        w.flush().map_err(|e| CliError::runtime(path.display(), e))
    };
    write("table_eer.csv", &|w| write_table_csv(&by_eer, w))?;
    write("table_zfr.csv", &|w| write_table_csv(&by_zfr, w))?;
    write("cells.csv", &|w| write_cells_csv(&report.cells, w))?;
    if !args.no_roc {
        for cell in &report.cells {
            if let Ok(m) = &cell.outcome {
                let name = format!("roc/{}_{}.csv", cell.detector.tag(), cell.subject);
                write(&name, &|w| write_roc_csv(&m.roc, w))?;
            }
        }
    }

    print_table("Equal-error rates (descending mean)", &by_eer);
    print_table("Zero-miss false-alarm rates (ascending mean)", &by_zfr);
    println!("elapsed: {:.2} s", elapsed.as_secs_f64());
    println!("wrote {}", out.display());
    Ok(())
}

pub fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let kind: ModelKind = args.model.parse().map_err(|e: keydetect_core::Error| CliError::Usage(e.to_string()))?;
    if args.epochs == 0 || args.trees == 0 {
        return Err(CliError::Usage("--epochs and --trees must be positive".into()));
    }
    let ds = load::<Real>(&args.data, &args.outliers)?;
    let opts = ClassifierOptions {
        seed,
        epochs: args.epochs,
        trees: args.trees,
        known_subjects: args.known_subjects,
        negative_per_subject: args.negative_per_subject,
    };
    let started = Instant::now();
    let run = train_classifier(&ds, kind, &opts).map_err(|e| core_error(format!("training {kind}"), e))?;
    println!("effective: {}", run.effective);
    println!("accuracy: {:.4}", run.accuracy());
    if let Some(neg) = &run.negative {
        println!("negative recall: {:.4}", neg.recall);
        println!("negative precision: {:.4}", neg.precision);
        println!("negative f-score: {:.4}", neg.f_score);
    }
    println!("elapsed: {:.1} s", started.elapsed().as_secs_f64());

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| format!("model-{}.txt", kind.tag()).into());
    let mut w = create(&out)?;
    write_classifier(&run.model, &mut w).map_err(|e| core_error(out.display(), e))?;
    w.flush().map_err(|e| CliError::runtime(out.display(), e))?;
    println!("wrote {}", out.display());
    if let Some(path) = &args.confusion {
        let mut w = create(path)?;
        write_confusion_csv(&run.metrics, &run.split.label_map, &mut w).map_err(|e| core_error(path.display(), e))?;
        w.flush().map_err(|e| CliError::runtime(path.display(), e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let default_detector: DetectorKind = args
        .detector
        .parse()
        .map_err(|e: keydetect_core::Error| CliError::Usage(e.to_string()))?;
    if args.min_enroll < 2 {
        return Err(CliError::Usage("--min-enroll must be at least 2".into()));
    }
    let config = ServiceConfig {
        min_enroll: args.min_enroll,
        default_detector,
        ..ServiceConfig::default()
    };
    println!("effective: {}", json!({ "threshold_sds": config.threshold_sds }));
    let store = Store::open(&args.store).map_err(|e| CliError::runtime(args.store.display(), e))?;
    let service = Service::open(config, store).map_err(|e| CliError::data(args.store.display(), e))?;
    println!("store: {} ({} users)", args.store.display(), service.list_users().len());

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::runtime("tokio runtime", e))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::runtime(format!("cannot listen on {addr}"), e))?;
        let local: SocketAddr = listener.local_addr().map_err(|e| CliError::runtime(&addr, e))?;
        println!("listening on http://{local}");
        std::io::stdout().flush().ok();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("interrupt received, shutting down");
        };
        keydetect_service::serve(listener, Arc::new(service), shutdown)
            .await
            .map_err(|e| CliError::runtime("server", e))
    })?;
    // Every write is synced when it happens, so nothing is pending here.
    log::info!("stopped");
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    if args.bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    let ds = load::<f64>(&args.data, &args.outliers)?;
    for (name, hist) in [("feature_summary.csv", false), ("feature_histograms.csv", true)] {
        let path = args.out.join(name);
        let mut w = create(&path)?;
        let written = if hist {
            write_feature_histograms_csv(&ds, args.bins, &mut w)
        } else {
            write_feature_summary_csv(&ds, &mut w)
        };
        written.map_err(|e| core_error(path.display(), e))?;
        w.flush().map_err(|e| CliError::runtime(path.display(), e))?;
        println!("wrote {}", path.display());
    }
    println!("subjects: {}", ds.subjects().len());
    println!("samples: {}", ds.len());
    Ok(())
}
