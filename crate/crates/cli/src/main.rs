//! `moodshift`: operator entry point.
//!
//! Exit codes: 0 on success, 1 on bad usage, 2 when the command itself fails.
//! Failures print `error: <Kind>: <message>` on stderr.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use moodshift::classifier::{self, CellKind, ClassifierModel, LabeledCorpus, TrainConfig};
use moodshift::embedding::EmbeddingStore;
use moodshift::face::{build_dataset, prep_face, CascadeModel, DetectParams, FaceImage, FACE_SIZE};
use moodshift::gan::{synthesize, ExpressionDomain, FaceSet, GanCheckpoint, GanConfig};
use moodshift::pipeline::Models;
use moodshift::synth;
use moodshift_server::ServerConfig;

#[derive(Parser)]
#[command(name = "moodshift", version, about = "Re-render a face with the emotion found in a piece of text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect, crop and equalize every photo under RAW_DIR/<domain>/.
    PrepDataset {
        #[arg(long)]
        raw_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Cascade XML; the bundled frontal face cascade when omitted.
        #[arg(long)]
        cascade: Option<PathBuf>,
        /// Output side length. Only 128 is supported.
        #[arg(long, default_value_t = FACE_SIZE)]
        size: usize,
    },
    /// Train the text emotion classifier on a `label,text` CSV.
    TrainEmotion {
        #[arg(long)]
        corpus: PathBuf,
        /// Word vectors in GloVe text format.
        #[arg(long)]
        glove: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, value_enum, default_value_t = Cell::Lstm)]
        cell: Cell,
        /// Held-out fraction for the stratified split.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Report train and test accuracy of a classifier on a corpus.
    EvalEmotion {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train the expression generator on DATASET/<domain>/*.png.
    TrainGan {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        steps: u64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Network size: the reduced desk-scale model or the full one.
        #[arg(long, value_enum, default_value_t = Preset::Smoke)]
        preset: Preset,
        #[arg(long)]
        lambda_cls: Option<f64>,
        #[arg(long)]
        lambda_rec: Option<f64>,
        /// Per-step metrics as JSON lines; OUT with `.metrics.jsonl` appended when omitted.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Classify TEXT and re-render the face in PHOTO with the matching expression.
    Infer {
        #[arg(long)]
        photo: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        emotion_model: PathBuf,
        #[arg(long)]
        gan_ckpt: PathBuf,
        #[arg(long, default_value = "out.png")]
        out: PathBuf,
        /// Also write OUT with `_grid` appended: the prepared face then all seven expressions.
        #[arg(long)]
        emit_grid: bool,
        /// Service config supplying the cascade, mapping and confidence threshold.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        /// TOML config; defaults plus MOODSHIFT_* environment overrides when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write the procedural face set, emotion corpus and word vectors.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        faces_per_domain: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 50)]
        dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Cell {
    Lstm,
    Rnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Smoke,
    Full,
}

/// A failure reported with its error kind.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Module errors already lead with their kind.
        if self.message.starts_with(self.kind) {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.kind, self.message)
        }
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Failure {
                Failure { kind: e.kind(), message: e.to_string() }
            }
        }
    )*};
}

failure_from!(
    classifier::ClassifierError,
    moodshift::embedding::EmbeddingError,
    moodshift::face::FaceError,
    moodshift::gan::GanError,
    moodshift::pipeline::PipelineError,
    moodshift_server::ConfigError,
    moodshift_server::ServeError
);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure { kind: "IoError", message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { kind: "Usage", message: message.into() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(if f.kind == "Usage" { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::PrepDataset { raw_dir, out_dir, cascade, size } => {
            if size != FACE_SIZE {
                return Err(usage(format!("--size must be {FACE_SIZE}")));
            }
            let cascade = load_cascade(cascade.as_deref())?;
            let manifest = build_dataset(&raw_dir, &cascade, &out_dir, DetectParams::default())?;
            for (domain, n) in &manifest.domains {
                println!("{domain}\t{n}");
            }
            for s in &manifest.skipped {
                println!("skipped\t{}\t{}", s.path, s.reason);
            }
            println!("prepared={} skipped={}", manifest.total(), manifest.skipped.len());
        }
        Command::TrainEmotion { corpus, glove, out, epochs, hidden, seed, batch, lr, cell, test_fraction } => {
            let corpus = LabeledCorpus::load(&corpus)?;
            let store = EmbeddingStore::load(&glove)?;
            let cell = match cell {
                Cell::Lstm => CellKind::Lstm,
                Cell::Rnn => CellKind::Rnn,
            };
            let cfg = TrainConfig { epochs, hidden_dim: hidden, batch_size: batch, seed, lr, cell, test_fraction, ..TrainConfig::default() };
            if cfg.epochs == 0 || cfg.hidden_dim == 0 || cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.test_fraction) {
                return Err(usage("--epochs, --hidden and --batch must be positive and --test-fraction in [0, 1)"));
            }
            let model = classifier::train(&corpus, &store, &cfg)?;
            model.save(&out)?;
            let m = &model.train_meta;
            println!("train_acc={:.4}, test_acc={:.4}", m.train_accuracy, m.test_accuracy);
        }
        Command::EvalEmotion { corpus, model } => {
            let name = corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let corpus = LabeledCorpus::load(&corpus)?;
            let model = ClassifierModel::load(&model)?;
            let (train, test) = model.evaluate_split(&corpus)?;
            print!("{}", accuracy_table(&format!("{} + {name}", model.params.cell.name().to_uppercase()), train, test));
            println!("train_acc={train:.4}, test_acc={test:.4}");
        }
        Command::TrainGan { dataset, out, steps, batch, lr, seed, preset, lambda_cls, lambda_rec, metrics } => {
            let mut cfg = match preset {
                Preset::Smoke => GanConfig::smoke(),
                Preset::Full => GanConfig::default(),
            };
            cfg.batch_size = batch;
            cfg.lr = lr;
            cfg.seed = seed;
            cfg.lambda_cls = lambda_cls.unwrap_or(cfg.lambda_cls);
            cfg.lambda_rec = lambda_rec.unwrap_or(cfg.lambda_rec);
            cfg.validate().map_err(usage)?;
            let set = FaceSet::load_dir(&dataset, cfg.image_size)?;
            let mut state = GanCheckpoint::new(cfg)?;
            let metrics = metrics.unwrap_or_else(|| with_suffix(&out, ".metrics.jsonl"));
            let mut log = BufWriter::new(File::create(&metrics)?);
            let mut write_err = None;
            state.train(&set, steps, |m| {
                if m.step % 50 == 0 || m.step == 1 {
                    log::info!("step {} d_loss {:.4} g_loss {:.4} rec {:.4}", m.step, m.d_loss, m.g_loss, m.rec);
                }
                if write_err.is_none() {
                    let line = serde_json::to_string(m).expect("metrics serialize");
                    write_err = writeln!(log, "{line}").err();
                }
            })?;
            if let Some(e) = write_err {
                return Err(e.into());
            }
            log.flush()?;
            state.save(&out)?;
            println!("steps={} checkpoint={} sha256={}", state.step, out.display(), state.checksum());
        }
        Command::Infer { photo, text, emotion_model, gan_ckpt, out, emit_grid, config } => {
            let cfg = match config {
                Some(p) => ServerConfig::load(p)?,
                None => ServerConfig::default(),
            };
            let mut models = Models::new(Some(ClassifierModel::load(&emotion_model)?), Some(GanCheckpoint::load(&gan_ckpt)?));
            models.mapping = cfg.emotion_map;
            models.low_confidence = cfg.low_confidence;
            models.cascade = load_cascade(cfg.cascade.as_deref())?;
            let face = FaceImage::decode(&std::fs::read(&photo)?)?;
            let prepped = prep_face(&face, &models.cascade)?;
            let t = models.express(&text, &prepped)?;
            t.avatar.save_png(&out)?;
            println!("emotion={} domain={} low_confidence={}", t.emotion, t.domain, t.low_confidence);
            let probs: Vec<String> =
                classifier::EmotionLabel::ALL.iter().map(|e| format!("{e}={:.4}", t.probabilities[e.code()])).collect();
            println!("probabilities {}", probs.join(" "));
            println!("wrote {}", out.display());
            if emit_grid {
                let gan = models.gan.as_ref().expect("loaded above");
                let mut tiles = vec![prepped.clone()];
                for d in ExpressionDomain::ALL {
                    tiles.push(synthesize(gan, &prepped, d)?);
                }
                let grid_path = grid_path(&out);
                strip(&tiles).save_png(&grid_path)?;
                println!("wrote {}", grid_path.display());
            }
        }
        Command::Serve { config } => {
            let cfg = ServerConfig::resolve(config.as_deref())?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(moodshift_server::serve(cfg))?;
        }
        Command::MakeSynthetic { out, faces_per_domain, size, per_class, dim, seed } => {
            if faces_per_domain == 0 || size < 16 || per_class == 0 || dim == 0 {
                return Err(usage("counts and --dim must be positive and --size at least 16"));
            }
            let faces = synth::synthetic_faces(faces_per_domain, size, seed);
            synth::write_face_folders(&out.join("faces"), &faces)?;
            synth::synthetic_corpus(per_class, seed).write_csv(File::create(out.join("corpus.csv"))?)?;
            std::fs::write(out.join("vectors.txt"), synth::synthetic_vectors(dim, seed))?;
            println!("faces={} corpus={} dim={dim}", faces.len(), per_class * classifier::NUM_EMOTIONS);
        }
    }
    Ok(())
}

fn load_cascade(path: Option<&Path>) -> Result<CascadeModel, Failure> {
    Ok(match path {
        Some(p) => CascadeModel::load(p)?,
        None => CascadeModel::frontal_face(),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `out.png` becomes `out_grid.png`.
fn grid_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "png".into());
    out.with_file_name(format!("{stem}_grid.{ext}"))
}

/// Places equally sized RGB tiles side by side.
fn strip(tiles: &[FaceImage]) -> FaceImage {
    let (w, h) = (tiles[0].width(), tiles[0].height());
    FaceImage::from_fn_rgb(w * tiles.len(), h, |x, y| {
        let t = &tiles[x / w];
        let i = (y * w + x % w) * 3;
        let p = t.pixels();
        [p[i], p[i + 1], p[i + 2]]
    })
}

fn accuracy_table(row: &str, train: f64, test: f64) -> String {
    let pct = |v: f64| format!("{:.0}%", v * 100.0);
    let w = row.len().max("Model+Dataset".len());
    format!(
        "{:<w$}  {:>10}  {:>9}\n{}\n{:<w$}  {:>10}  {:>9}\n",
        "Model+Dataset",
        "Train Acc.",
        "Test Acc.",
        "-".repeat(w + 23),
        row,
        pct(train),
        pct(test),
    )
}
