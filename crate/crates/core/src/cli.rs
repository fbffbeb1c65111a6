//! `glyphspot` command line. Exit status: 0 success, 1 runtime error, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::classifiers::knn_sweep;
use crate::config::RunConfig;
use crate::encoder::EncoderHyper;
use crate::error::{Error, Result};
use crate::pipeline::{
    cascade_evaluate_oracle, extract_page, label_from_truth, load_model, model_id, overlay_png, predict_all,
    save_model, score_spotting, spot, train_encoder_model, train_knn, train_svm, CascadeMode, CascadeModel,
    ClassifierModel, KnnConfig, Metrics, SpotScore, SvmConfig,
};
use crate::raster::{load_image, save_png, synth_page, write_corpus_page, TruthFile};
use crate::segmentation::{build_manifest, kernel_file_name, LabelRecord, Manifest};
use crate::service::{bind, serve, ServiceState};
use crate::types::Label;

#[derive(Debug, Parser)]
#[command(
    name = "glyphspot",
    version,
    about = "Character spotting for degraded document images"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override (takes precedence over GLYPHSPOT_SEED and the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic pages with ground truth.
    Synth(SynthArgs),
    /// Cut kernels from pages and write a manifest.
    Extract(ExtractArgs),
    /// Rebuild a manifest from a kernels directory and label store.
    Manifest(ManifestArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Evaluate a model on a labeled manifest; Metrics JSON on stdout.
    Eval(EvalArgs),
    /// Spot characters on pages.
    Spot(SpotArgs),
    /// Run the labeling service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of pages to generate.
    #[arg(long)]
    pages: usize,
    /// Output directory for page PNGs and `.truth.json` files.
    #[arg(long)]
    out: PathBuf,
    /// Noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    /// Glyphs per page.
    #[arg(long)]
    glyphs: Option<usize>,
    /// Reject distractors per page.
    #[arg(long)]
    distractors: Option<usize>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Directory of page PNGs.
    #[arg(long)]
    pages: PathBuf,
    /// Kernel output directory.
    #[arg(long)]
    out: PathBuf,
    /// Label every kernel from the page's `.truth.json` (synthetic corpora only).
    #[arg(long)]
    labels_from_truth: bool,
    /// Label store; defaults to `<out>/labels.jsonl`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Manifest path; defaults to `<out>/manifest.jsonl`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ManifestArgs {
    /// Kernel directory.
    #[arg(long)]
    kernels: PathBuf,
    /// Label store to join; unlabeled kernels otherwise.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Manifest path to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelKind {
    Knn,
    Svm,
    Encoder,
    Cascade,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(value_enum)]
    kind: ModelKind,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Labeled training manifest (not used by `cascade`).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Neighbours for `knn`.
    #[arg(long)]
    k: Option<usize>,
    /// Regularization constant for `svm`.
    #[arg(long)]
    c: Option<f64>,
    /// Training epochs (`svm`, `encoder`).
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate (`encoder`).
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size (`encoder`).
    #[arg(long)]
    batch: Option<usize>,
    /// Per-epoch CSV for the encoder; defaults to `<out>.epochs.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// First-stage model file (cascade).
    #[arg(long)]
    first: Option<PathBuf>,
    /// Second-stage model file (cascade).
    #[arg(long)]
    second: Option<PathBuf>,
    /// Confidence below which the second stage decides (cascade).
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Labeled manifest to evaluate on.
    #[arg(long)]
    manifest: PathBuf,
    /// Write a `k,accuracy` sweep over the configured k values (KNN models).
    #[arg(long)]
    sweep_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpotArgs {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Page images, or directories of `*.png` pages.
    #[arg(long, required = true, num_args = 1..)]
    page: Vec<PathBuf>,
    /// Report directory; reports go to stdout as JSON lines when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write `<page>.overlay.png` (requires --out).
    #[arg(long, requires = "out")]
    overlay: bool,
    /// Score accepted boxes against `<page>.truth.json`; summary JSON on stdout.
    #[arg(long)]
    score: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Kernel directory; defaults to the configured `kernels_dir`.
    #[arg(long)]
    kernels: Option<PathBuf>,
    /// Label store; defaults to the configured `labels_file`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Built UI bundle to serve at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Extract(a) => cmd_extract(&cfg, a),
        Command::Manifest(a) => {
            let manifest = build_manifest(&a.kernels, a.labels.as_deref())?;
            manifest.write_jsonl(&a.out)
        }
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Spot(a) => cmd_spot(&cfg, a),
        Command::Serve(a) => cmd_serve(&cfg, a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Per-page seed, decorrelated from neighbouring corpus seeds.
fn page_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn cmd_synth(cfg: &RunConfig, a: SynthArgs) -> Result<()> {
    let mut synth = cfg.synth.clone();
    if let Some(noise) = a.noise {
        synth.noise_sigma = noise;
    }
    if let Some(g) = a.glyphs {
        synth.glyphs = g;
    }
    if let Some(d) = a.distractors {
        synth.distractors = d;
    }
    create_dir(&a.out)?;
    for i in 0..a.pages {
        let page = synth_page(&synth, page_seed(cfg.seed, i))?;
        write_corpus_page(&a.out, i, &page)?;
    }
    log::info!("wrote {} pages to {}", a.pages, a.out.display());
    Ok(())
}

fn page_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut pages = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "png"))
                .filter(|p| !p.to_string_lossy().ends_with(".overlay.png"))
                .collect();
            found.sort();
            pages.extend(found);
        } else {
            pages.push(input.clone());
        }
    }
    Ok(pages)
}

fn page_id(path: &Path) -> String {
    path.file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn read_truth(page: &Path) -> Result<TruthFile> {
    let path = page.with_extension("truth.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn cmd_extract(cfg: &RunConfig, a: ExtractArgs) -> Result<()> {
    create_dir(&a.out)?;
    let labels_path = a.labels.unwrap_or_else(|| a.out.join("labels.jsonl"));
    let mut truth_records = Vec::new();
    let mut count = 0;
    for page in page_files(std::slice::from_ref(&a.pages))? {
        let id = page_id(&page);
        let img = load_image(&page)?;
        let kernels = extract_page(&img, &id, &cfg.spot)?;
        let truth = if a.labels_from_truth {
            Some(read_truth(&page)?)
        } else {
            None
        };
        for k in &kernels {
            let name = kernel_file_name(&id, &k.source_box);
            save_png(&k.pixels, a.out.join(&name))?;
            if let Some(t) = &truth {
                truth_records.push(LabelRecord {
                    kernel: name,
                    label: Some(label_from_truth(&k.source_box, t)),
                    ts: 0,
                });
            }
        }
        count += kernels.len();
    }
    if a.labels_from_truth {
        // a truth-derived store is a generated artifact: rewrite, don't append
        let mut text = String::new();
        for r in &truth_records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        write_file(&labels_path, text)?;
    }
    let manifest = build_manifest(&a.out, labels_path.exists().then_some(labels_path.as_path()))?;
    let manifest_path = a.manifest.unwrap_or_else(|| a.out.join("manifest.jsonl"));
    manifest.write_jsonl(&manifest_path)?;
    log::info!(
        "extracted {count} kernels ({} labeled) into {}",
        manifest.labeled_count(),
        a.out.display()
    );
    Ok(())
}

fn require<'a, T>(value: &'a Option<T>, flag: &str, kind: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("train {kind} needs --{flag}")))
}

fn training_kernels(manifest: &Path) -> Result<Vec<crate::segmentation::Kernel>> {
    let manifest = Manifest::read_jsonl(manifest)?;
    if !manifest.is_fully_labeled() {
        return Err(Error::UnlabeledData);
    }
    manifest.load_kernels()
}

fn cmd_train(cfg: &RunConfig, a: TrainArgs) -> Result<()> {
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let model = match a.kind {
        ModelKind::Knn => {
            let kernels = training_kernels(require(&a.manifest, "manifest", "knn")?)?;
            let knn = KnnConfig {
                k: a.k.unwrap_or(cfg.knn_k),
                hog: cfg.hog,
                pca: cfg.components(),
            };
            train_knn(&kernels, &knn)?
        }
        ModelKind::Svm => {
            let kernels = training_kernels(require(&a.manifest, "manifest", "svm")?)?;
            let svm = SvmConfig {
                c: a.c.unwrap_or(cfg.svm_c),
                epochs: a.epochs.unwrap_or(cfg.svm_epochs),
                seed: cfg.seed,
                hog: cfg.hog,
                pca: cfg.components(),
            };
            train_svm(&kernels, &svm)?
        }
        ModelKind::Encoder => {
            let kernels = training_kernels(require(&a.manifest, "manifest", "encoder")?)?;
            let hyper = EncoderHyper {
                lr: a.lr.unwrap_or(cfg.encoder_lr),
                batch_size: a.batch.unwrap_or(cfg.encoder_batch),
                epochs: a.epochs.unwrap_or(cfg.encoder_epochs),
                seed: cfg.seed,
            };
            let (model, log) = train_encoder_model(&kernels, &hyper)?;
            let log_path = a.log.clone().unwrap_or_else(|| {
                let mut p = a.out.clone().into_os_string();
                p.push(".epochs.csv");
                PathBuf::from(p)
            });
            write_file(&log_path, log.to_csv())?;
            if let Some(last) = log.epochs.last() {
                log::info!(
                    "encoder final train loss {:.4}, accuracy {:.4}",
                    last.train_loss,
                    last.train_accuracy
                );
            }
            model
        }
        ModelKind::Cascade => {
            let first = load_model(require(&a.first, "first", "cascade")?)?;
            let second = load_model(require(&a.second, "second", "cascade")?)?;
            let threshold = a.threshold.unwrap_or(cfg.cascade_threshold);
            ClassifierModel::Cascade(Box::new(CascadeModel::new(
                first,
                second,
                CascadeMode::Confidence,
                threshold,
            )?))
        }
    };
    save_model(&model, &a.out)?;
    log::info!("saved {} to {}", model_id(&model), a.out.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let kernels = training_kernels(&a.manifest)?;
    let (preds, truth) = predict_all(&model, &kernels)?;
    let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
    let metrics = Metrics::from_labels(&labels, &truth);
    let mut out = json!({
        "model": model_id(&model),
        "kind": model.kind(),
        "samples": kernels.len(),
        "metrics": metrics,
    });
    if let ClassifierModel::Cascade(c) = &model {
        let routed = preds.iter().filter(|p| p.routed_to_second).count();
        let (oracle, _) = cascade_evaluate_oracle(&c.first, &c.second, &kernels)?;
        out["routed_to_second"] = json!(routed);
        out["threshold"] = json!(c.threshold);
        out["oracle_metrics"] = json!(oracle);
    }
    if let Some(csv) = &a.sweep_csv {
        let ClassifierModel::Knn { features, model: knn } = &model else {
            return Err(Error::Config("--sweep-csv needs a knn model".into()));
        };
        let validation = kernels
            .iter()
            .zip(&truth)
            .map(|(k, &t)| Ok((features.featurize(k)?, t)))
            .collect::<Result<Vec<_>>>()?;
        let ks: Vec<usize> = cfg.k_sweep.iter().copied().filter(|&k| k <= knn.points.len()).collect();
        let sweep = knn_sweep(knn.points.clone(), knn.labels.clone(), &validation, &ks)?;
        write_file(csv, sweep.to_csv())?;
        out["best_k"] = json!(sweep.best_k);
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("metrics serialize"));
    Ok(())
}

fn cmd_spot(cfg: &RunConfig, a: SpotArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let id = model_id(&model);
    if let Some(out) = &a.out {
        create_dir(out)?;
    }
    let mut total = SpotScore::default();
    let pages = page_files(&a.page)?;
    for page in &pages {
        let pid = page_id(page);
        let img = load_image(page)?;
        let report = spot(&img, &pid, &model, &id, &cfg.spot)?;
        let json = serde_json::to_string(&report).expect("report serializes");
        match &a.out {
            Some(dir) => {
                write_file(&dir.join(format!("{pid}.spot.json")), format!("{json}\n"))?;
                if a.overlay {
                    write_file(&dir.join(format!("{pid}.overlay.png")), overlay_png(&img, &report)?)?;
                }
            }
            None if !a.score => println!("{json}"),
            None => {}
        }
        if a.score {
            let truth = read_truth(page)?;
            let chars: Vec<_> = truth
                .boxes
                .iter()
                .zip(&truth.labels)
                .filter(|(_, &l)| l == Label::Character)
                .map(|(b, _)| *b)
                .collect();
            let accepted: Vec<_> = report.accepted.iter().map(|s| s.bbox).collect();
            total.add(score_spotting(&accepted, &chars));
        }
    }
    if a.score {
        let summary = json!({
            "pages": pages.len(),
            "tp": total.tp,
            "fp": total.fp,
            "fn": total.fn_,
            "precision": total.precision(),
            "recall": total.recall(),
            "f1": total.f1(),
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        );
    }
    Ok(())
}

fn cmd_serve(cfg: &RunConfig, a: ServeArgs) -> Result<()> {
    let kernels = a.kernels.unwrap_or_else(|| cfg.kernels_dir.clone());
    let labels = a.labels.unwrap_or_else(|| cfg.labels_file.clone());
    if !kernels.is_dir() {
        return Err(Error::Config(format!(
            "kernels directory {} does not exist",
            kernels.display()
        )));
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    runtime.block_on(async {
        let listener = bind(a.port).await?;
        serve(listener, ServiceState::new(kernels, labels, a.ui_dir)).await
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::LabelStore;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["glyphspot"]), 2);
        assert_eq!(run(["glyphspot", "frobnicate"]), 2);
        assert_eq!(run(["glyphspot", "synth", "--pages", "x", "--out", "d"]), 2);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(["glyphspot", "--help"]), 0);
    }

    #[test]
    fn runtime_errors_exit_1() {
        assert_eq!(
            run([
                "glyphspot",
                "eval",
                "--model",
                "/nonexistent.gsm",
                "--manifest",
                "/nonexistent.jsonl"
            ]),
            1
        );
    }

    #[test]
    fn page_seeds_differ() {
        assert_ne!(page_seed(7, 0), page_seed(7, 1));
        assert_ne!(page_seed(7, 1), page_seed(8, 0));
    }

    #[test]
    fn label_store_is_rewritten_for_truth_labels() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let kernels = dir.path().join("kernels");
        let s = |p: &Path| p.to_str().unwrap().to_string();
        assert_eq!(run(["glyphspot", "synth", "--pages", "1", "--out", &s(&corpus)]), 0);
        for _ in 0..2 {
            let code = run([
                "glyphspot",
                "extract",
                "--pages",
                &s(&corpus),
                "--out",
                &s(&kernels),
                "--labels-from-truth",
            ]);
            assert_eq!(code, 0);
        }
        let store = LabelStore::new(kernels.join("labels.jsonl"));
        let manifest = Manifest::read_jsonl(kernels.join("manifest.jsonl")).unwrap();
        assert_eq!(store.records().unwrap().len(), manifest.len());
        assert!(manifest.is_fully_labeled());
    }
}
