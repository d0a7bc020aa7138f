use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array1;

use footfall::audio::{read_recording, ReadOptions};
use footfall::detector::checkpoint;
use footfall::detector::gradcheck::{gradient_check, synthetic_batch};
use footfall::detector::{CachedFeatures, DetectorModel, TrainConfig, FEATURE_LEN};
use footfall::geometry::ArrayGeometry;
use footfall::harness::{
    evaluate_baselines, loocv_seeds, prepare, stream_track, train_full, ClipSource, ModelDetector, Report,
    ReportFormat, SimulatedPanSink, TrackerConfig,
};
use footfall::manifest::{Manifest, RobotCondition};
use footfall::sim::{generate_dataset, SimulationFile};
use footfall::spectro::{empty_profile, EmptyRoomProfile, Stft};
use footfall::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "footfall", version, about = "Acoustic person detection toolkit")]
struct Cli {
    /// Overrides the seed given in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Microphone array description (TOML); defaults to the built-in square array.
    #[arg(long, global = true)]
    geometry: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a simulation file into WAV recordings and a manifest.
    Simulate {
        scene_config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Average an empty-room recording into a subtraction profile.
    Profile {
        empty_wav: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "room")]
        room: String,
        #[arg(long, default_value = "static")]
        condition: String,
    },
    /// Train a detector on every sample of a manifest.
    Train {
        manifest: PathBuf,
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Leave-one-room-out evaluation with baseline rows.
    Eval {
        #[arg(long, required = true)]
        loocv: bool,
        manifest: PathBuf,
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Training seeds, counted up from the base seed; the report holds their median.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// GCC-PHAT, constant-front and uniform reference rows.
    Baseline {
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the streaming tracker over a recording.
    Track {
        input: PathBuf,
        checkpoint: PathBuf,
        profile: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Pan motor slew rate.
        #[arg(long, default_value_t = 90.0)]
        slew_deg_per_s: f64,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        /// Checkpoint to check; a freshly initialized model when omitted.
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut cfg = TrainConfig::from_toml(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let geometry = match &cli.geometry {
        Some(p) => ArrayGeometry::load(p)?,
        None => ArrayGeometry::default(),
    };
    let format = ReportFormat::from(cli.format);
    match cli.command {
        Command::Simulate { scene_config, output } => {
            let mut file = SimulationFile::load(&scene_config)?;
            if let (Some(seed), Some(plan)) = (cli.seed, file.plan.as_mut()) {
                plan.seed = seed;
            }
            let m = generate_dataset(&file.all_scenes(), &geometry, &output)?;
            println!(
                "wrote {} samples, {} profiles, {} pool recordings to {}",
                m.samples.len(),
                m.profiles.len(),
                m.augmentation.len(),
                output.display()
            );
        }
        Command::Profile {
            empty_wav,
            output,
            room,
            condition,
        } => {
            let condition: RobotCondition = condition.parse()?;
            let audio = read_recording(&empty_wav, ReadOptions::channels(geometry.n_mics()))?;
            let profile = empty_profile(&Stft::new(), &audio, &room, condition)?;
            let f = std::fs::File::create(&output).map_err(|e| Error::Io {
                path: output.clone(),
                source: e,
            })?;
            profile.write_to(std::io::BufWriter::new(f)).map_err(|e| Error::Io {
                path: output.clone(),
                source: e,
            })?;
            println!("profile from {} clips written to {}", profile.n_clips, output.display());
        }
        Command::Train {
            manifest,
            config,
            output,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let m = Manifest::load(&manifest)?;
            let (mut model, logs) = train_full(&m, &cfg)?;
            model.geometry_hash = geometry.fingerprint();
            checkpoint::save(&model, &output)?;
            if let Some(last) = logs.last() {
                println!(
                    "epoch {}: loss {:.4}, w_backsub {:.3}",
                    last.epoch, last.train.total, last.w_backsub
                );
            }
            println!("checkpoint written to {}", output.display());
        }
        Command::Eval {
            loocv: _,
            manifest,
            config,
            output,
            seeds,
        } => {
            let cfg = load_config(&config, cli.seed)?;
            let m = Manifest::load(&manifest)?;
            let data = prepare(&m, &cfg)?;
            let seed_list: Vec<u64> = (0..seeds.max(1)).map(|k| cfg.seed + k).collect();
            let (runs, detector) = loocv_seeds(&data, &cfg, &seed_list)?;
            let baselines = evaluate_baselines(&m, &geometry)?;
            let report = Report::from_runs(&runs, detector, baselines);
            report.write(&output, format)?;
            println!(
                "{} folds x {} seeds evaluated; report written to {}",
                data.folds.len(),
                seed_list.len(),
                output.display()
            );
        }
        Command::Baseline { manifest, output } => {
            let m = Manifest::load(&manifest)?;
            let report = Report {
                seeds: Vec::new(),
                tables: evaluate_baselines(&m, &geometry)?,
                folds: Vec::new(),
            };
            report.write(&output, format)?;
            println!("baseline report written to {}", output.display());
        }
        Command::Track {
            input,
            checkpoint: ckpt,
            profile,
            output,
            slew_deg_per_s,
        } => {
            let model = checkpoint::load(&ckpt)?;
            if model.geometry_hash != 0 && model.geometry_hash != geometry.fingerprint() {
                return Err(Error::GeometryMissing("checkpoint was trained for a different array".into()));
            }
            let f = std::fs::File::open(&profile).map_err(|e| Error::Io {
                path: profile.clone(),
                source: e,
            })?;
            let profile = EmptyRoomProfile::read_from(std::io::BufReader::new(f))?;
            let audio = read_recording(&input, ReadOptions::channels(geometry.n_mics()))?;
            let cfg = TrackerConfig::default();
            let mut sink = SimulatedPanSink::new(cfg.initial_pan_deg, slew_deg_per_s, 0.0);
            let mut detector = ModelDetector::new(&model, &profile);
            let out = stream_track(&mut ClipSource::new(audio), &mut detector, &mut sink, &cfg)?;
            out.save(&output)?;
            println!(
                "{} decisions, {} pans, slowest inference {:.1} ms; events written to {}",
                out.decisions().count(),
                out.pans.len(),
                out.max_compute().as_secs_f64() * 1e3,
                output.display()
            );
        }
        Command::Gradcheck { checkpoint: ckpt, probes } => {
            let seed = cli.seed.unwrap_or(0);
            let model = match ckpt {
                Some(p) => checkpoint::load(p)?,
                None => DetectorModel::new(seed, Array1::zeros(FEATURE_LEN), Array1::ones(FEATURE_LEN))?,
            };
            let (feats, targets) = synthetic_batch(seed, 16);
            let refs: Vec<&CachedFeatures> = feats.iter().collect();
            let report = gradient_check(
                &model,
                &refs,
                &targets,
                TrainConfig::default().loss_weights(),
                probes,
                seed,
            )?;
            println!("max relative error {:.3e} over {} probes", report.max_rel_error, report.probes.len());
            if !report.passed() {
                return Err(Error::Config(format!(
                    "gradient check failed: {:.3e}",
                    report.max_rel_error
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
