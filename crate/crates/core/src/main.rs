use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nystrom_svs::data::{self, Dataset};
use nystrom_svs::harness::{self, ExperimentConfig, SynthKind};
use nystrom_svs::kernel::KernelConfig;
use nystrom_svs::nystrom::fit_standard;
use nystrom_svs::ridge::StandardClassifier;
use nystrom_svs::selection::{
    algorithm1, landmark_permutation, margin_bound_gap, CentroidMode, SelectionParams, StageVariant,
};
use nystrom_svs::Result;

#[derive(Parser)]
#[command(
    name = "nystrom-svs",
    about = "Nystrom kernel approximation with negative-margin support vector selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    TwoGaussians,
    RingVsBlob,
    Redundant,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Ensemble,
    Rsvd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CentroidArg {
    None,
    Inputs,
    Outputs,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset in LIBSVM format
    Synth {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 10)]
        repeat: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a two-stage supervised Nystrom classifier, write model JSON
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-5)]
        rho: f64,
        #[arg(long)]
        n0: usize,
        #[arg(long)]
        k0: Option<usize>,
        #[arg(long)]
        nf: usize,
        #[arg(long)]
        kf: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "standard")]
        variant: VariantArg,
        #[arg(long, default_value_t = 5)]
        ensemble_experts: usize,
        #[arg(long, default_value_t = 10)]
        rsvd_oversample: usize,
        #[arg(long, default_value_t = 2)]
        rsvd_power: usize,
        #[arg(long, value_enum, default_value = "none")]
        centroid_mode: CentroidArg,
        /// Fit [0,1] feature scaling on the training split
        #[arg(long)]
        scale: bool,
        #[arg(long)]
        model_out: PathBuf,
        /// Optional JSON diagnostics (stage times, selected indices, margins)
        #[arg(long)]
        diagnostics_out: Option<PathBuf>,
    },
    /// Apply a model JSON to a LIBSVM file; prints one label per line
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Re-apply the training-time [0,1] scaling parameters from this JSON
        #[arg(long)]
        scaling: Option<PathBuf>,
    },
    /// Run a benchmark experiment from a JSON config, write CSV records
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate both sides of the margin perturbation bound
    BoundCheck {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1e-2)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        scale: bool,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            kind,
            n,
            d,
            seed,
            separation,
            repeat,
            out,
        } => {
            let kind = match kind {
                KindArg::TwoGaussians => SynthKind::TwoGaussians { separation },
                KindArg::RingVsBlob => SynthKind::RingVsBlob,
                KindArg::Redundant => SynthKind::Redundant { repeat, separation },
            };
            let ds = harness::synth_dataset(kind, n, d, seed)?;
            data::write_libsvm(&ds, &out)?;
            eprintln!("wrote {} samples ({} features) to {}", ds.len(), ds.dim(), out.display());
        }
        Command::Train {
            train,
            gamma,
            rho,
            n0,
            k0,
            nf,
            kf,
            seed,
            variant,
            ensemble_experts,
            rsvd_oversample,
            rsvd_power,
            centroid_mode,
            scale,
            model_out,
            diagnostics_out,
        } => {
            let mut ds = data::load_libsvm(&train)?;
            if scale {
                data::fit_apply_unit_scaling(&mut ds, &mut [])?;
            }
            let kernel = KernelConfig::rbf(gamma)?;
            let stage = match variant {
                VariantArg::Standard => StageVariant::Standard,
                VariantArg::Ensemble => StageVariant::Ensemble { m: ensemble_experts },
                VariantArg::Rsvd => StageVariant::Rsvd {
                    oversample: rsvd_oversample,
                    power: rsvd_power,
                },
            };
            let mut p = SelectionParams::new(n0, k0.unwrap_or(n0), nf, kf.unwrap_or(nf), rho, seed);
            p.stage1 = stage;
            p.stage2 = stage;
            p.centroid_mode = match centroid_mode {
                CentroidArg::None => CentroidMode::None,
                CentroidArg::Inputs => CentroidMode::Inputs,
                CentroidArg::Outputs => CentroidMode::Outputs,
            };
            let (clf, diag) = algorithm1(&ds, &p, &kernel)?;
            clf.save_json(&model_out)?;
            if let Some(path) = diagnostics_out {
                let f = std::fs::File::create(path)?;
                serde_json::to_writer_pretty(f, &diag).map_err(nystrom_svs::Error::from)?;
            }
            eprintln!(
                "trained on {} samples: {} support vectors, stages {:.3}s / {:.3}s",
                ds.len(),
                clf.n_support(),
                diag.stage1_s,
                diag.stage2_s
            );
        }
        Command::Predict {
            model,
            data: data_path,
            out,
            scaling,
        } => {
            let clf = StandardClassifier::load_json(&model)?;
            let mut ds = load_for_model(&data_path, &clf)?;
            if let Some(path) = scaling {
                let f = std::fs::File::open(path)?;
                let params: data::ScalingParams =
                    serde_json::from_reader(f).map_err(nystrom_svs::Error::from)?;
                data::apply_scaling(&mut ds, &params)?;
            }
            let pred = clf.predict(&ds.x)?;
            let labels: Vec<String> = pred
                .iter()
                .map(|&c| {
                    clf.label_values
                        .get(c)
                        .map(|v| format!("{v}"))
                        .unwrap_or_else(|| format!("{c}"))
                })
                .collect();
            let text = labels.join("\n") + "\n";
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            // labels in the input file allow an accuracy readout
            if ds.label_values == clf.label_values {
                let acc = harness::accuracy(&pred, &ds.y);
                eprintln!("accuracy: {acc:.4}");
            }
        }
        Command::Bench { config, out } => {
            let mut cfg = ExperimentConfig::load_json(&config)?;
            if let Some(path) = out {
                cfg.output = Some(path);
            }
            let records = harness::run_experiment(&cfg)?;
            eprintln!("{} trial records", records.len());
            if let Some(path) = &cfg.output {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::BoundCheck {
            train,
            gamma,
            n,
            k,
            rho,
            seed,
            scale,
        } => {
            let mut ds = data::load_libsvm(&train)?;
            if scale {
                data::fit_apply_unit_scaling(&mut ds, &mut [])?;
            }
            let kernel = KernelConfig::rbf(gamma)?;
            let perm = landmark_permutation(ds.len(), seed);
            let map = fit_standard(&ds, &perm[..n], k.unwrap_or(n), &kernel)?;
            let (lhs, rhs) = margin_bound_gap(&ds, &map, rho)?;
            println!(
                "{}",
                serde_json::json!({ "lhs": lhs, "rhs": rhs, "holds": lhs <= rhs })
            );
        }
    }
    Ok(())
}

/// Load a LIBSVM file, padding or truncating features to the model width so
/// sparse test files with trailing zero features still line up.
fn load_for_model(path: &PathBuf, clf: &StandardClassifier) -> Result<Dataset> {
    let ds = data::load_libsvm(path)?;
    let want = clf.support.ncols();
    if ds.dim() == want {
        return Ok(ds);
    }
    if ds.dim() > want {
        return Err(nystrom_svs::Error::DimMismatch(format!(
            "data has {} features, model expects {want}",
            ds.dim()
        )));
    }
    let mut x = nalgebra::DMatrix::zeros(ds.len(), want);
    x.view_mut((0, 0), (ds.len(), ds.dim())).copy_from(&ds.x);
    Dataset::new(x, ds.y.clone(), ds.n_classes, ds.label_values.clone())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
