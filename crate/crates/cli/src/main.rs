//! `nodulecad`: command-line driver for the staged nodule-detection pipeline.
//!
//! Exit codes: 0 on success, 1 on validation or configuration errors, 2 on
//! I/O errors and malformed files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nodulecad_core::config::parse_stream;
use nodulecad_core::csvio::froc_points_from_csv;
use nodulecad_core::fpr::{build_msdnet, MsdNetSpec};
use nodulecad_core::nnet::Weights;
use nodulecad_core::phantom::PhantomSpec;
use nodulecad_core::pipeline::{
    classify_file, detect_file, evaluate_files, fuse_files, phantom_files, preprocess_file, run_pipeline,
    scan_id_from_path, segment_file, Scorer,
};
use nodulecad_core::{CpmReport, Error, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "nodulecad", version, about = "Lung-nodule detection pipeline")]
struct Cli {
    /// Seed for every randomized step; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic CT phantom and its nodule annotations.
    Phantom {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Voxels per side of the cubic volume.
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 1.0)]
        spacing_mm: f64,
        #[arg(long, default_value_t = 5)]
        nodules: usize,
        #[arg(long, default_value_t = 4.0)]
        min_diameter_mm: f64,
        #[arg(long, default_value_t = 16.0)]
        max_diameter_mm: f64,
        #[arg(long, default_value_t = 8)]
        vessels: usize,
        #[arg(long, default_value_t = 20.0)]
        noise_hu: f64,
        /// Share of ground-glass nodules.
        #[arg(long, default_value_t = 0.0)]
        ggn_fraction: f64,
        /// Scan id (default: output file stem).
        #[arg(long)]
        scan_id: Option<String>,
    },
    /// Resample a HU volume to isotropic spacing and window it to gray levels.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Axial lung segmentation of a gray volume (0/255 mask volume).
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Detect candidates in one stream: axial, coronal, sagittal or mip.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        plane: String,
        #[arg(long)]
        output: PathBuf,
        /// Scan id (default: input file stem).
        #[arg(long)]
        scan_id: Option<String>,
    },
    /// Fuse candidate streams.
    Fuse {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score fused candidates (heuristic scorer, or the network with --weights).
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Lung mask volume, used when `fpr.use_mask = true`.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// MPW weight file for the default multi-scale dense network.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// FROC/CPM evaluation of candidates against annotations, or CPM of
    /// precomputed FROC points.
    Evaluate {
        #[arg(long, requires = "annotations", conflicts_with = "froc_points")]
        candidates: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// CSV of `fp_per_scan,sensitivity` points.
        #[arg(long, required_unless_present = "candidates")]
        froc_points: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        froc: Option<PathBuf>,
    },
    /// Run every stage, writing all intermediate files to the output directory.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Scan id (default: input file stem).
        #[arg(long)]
        scan_id: Option<String>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(Error::from)
                .with_context(|| format!("reading config {}", p.display()))?;
            PipelineConfig::parse(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn scorer(weights: Option<&Path>) -> Result<Scorer> {
    Ok(match weights {
        None => Scorer::Heuristic,
        Some(p) => {
            let net = build_msdnet(&MsdNetSpec::default())?;
            let weights = Weights::read_file(p).with_context(|| format!("reading weights {}", p.display()))?;
            weights.check_bound(&net)?;
            Scorer::Network { net, weights }
        }
    })
}

fn scan_id(given: &Option<String>, path: &Path) -> String {
    given.clone().unwrap_or_else(|| scan_id_from_path(path))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config {
                key: "--threads".into(),
                reason: "must be >= 1".into(),
            }
            .into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Phantom {
            output,
            annotations,
            size,
            spacing_mm,
            nodules,
            min_diameter_mm,
            max_diameter_mm,
            vessels,
            noise_hu,
            ggn_fraction,
            scan_id: id,
        } => {
            let spec = PhantomSpec {
                scan_id: scan_id(id, output),
                dims: [*size; 3],
                spacing: [*spacing_mm; 3],
                n_nodules: *nodules,
                diameter_range_mm: (*min_diameter_mm, *max_diameter_mm),
                n_vessels: *vessels,
                noise_sigma: *noise_hu,
                ggn_fraction: *ggn_fraction,
                seed: cfg.seed,
                ..PhantomSpec::default()
            };
            let anns = phantom_files(&spec, output, annotations)?;
            println!("wrote {} with {} nodules", output.display(), anns.len());
        }
        Command::Preprocess { input, output } => preprocess_file(input, output, &cfg)?,
        Command::Segment { input, output } => segment_file(input, output, &cfg)?,
        Command::Detect {
            input,
            plane,
            output,
            scan_id: id,
        } => {
            let source = parse_stream(plane)?;
            let cands = detect_file(input, source, &scan_id(id, input), output, &cfg)?;
            println!("{} candidates", cands.len());
        }
        Command::Fuse { inputs, output } => {
            let fused = fuse_files(inputs, output, &cfg)?;
            println!("{} fused candidates", fused.len());
        }
        Command::Classify {
            input,
            candidates,
            output,
            mask,
            weights,
        } => {
            let s = scorer(weights.as_deref())?;
            let scored = classify_file(input, mask.as_deref(), candidates, &s, output, &cfg)?;
            println!("{} candidates scored", scored.len());
        }
        Command::Evaluate {
            candidates,
            annotations,
            froc_points,
            report,
            froc,
        } => match (candidates, annotations, froc_points) {
            (Some(c), Some(a), _) => {
                let ev = evaluate_files(c, a, report.as_deref(), froc.as_deref(), &cfg)?;
                print!("{}", ev.to_text());
            }
            (_, _, Some(p)) => {
                let bytes = std::fs::read(p).map_err(Error::from)?;
                let curve = froc_points_from_csv(&bytes)?;
                print!("{}", CpmReport::from_curve(&curve).to_text());
            }
            _ => unreachable!("clap enforces one evaluation mode"),
        },
        Command::Pipeline {
            input,
            out_dir,
            annotations,
            weights,
            scan_id: id,
        } => {
            let s = scorer(weights.as_deref())?;
            let (paths, ev) = run_pipeline(input, annotations.as_deref(), out_dir, &scan_id(id, input), &s, &cfg)?;
            println!("scored candidates: {}", paths.scored.display());
            if let Some(ev) = ev {
                print!("{}", ev.to_text());
            }
        }
    }
    Ok(())
}

/// 2 for I/O and malformed files, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Io(_)) | Some(Error::Format { .. }) => 2,
        _ => 1,
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
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
