//! `corrmap`: dataset indicators, circuit training and study pipelines on
//! bitstring data.
//!
//! Every subcommand is deterministic given its inputs, flags and seeds: all
//! randomness flows from explicit `--seed` values, manifests carry no
//! timestamps, and reruns produce identical bytes. Exit codes: 0 success,
//! 2 configuration error, 3 data error, 4 numeric failure; errors print a
//! diagnostic JSON object on stderr.

mod manifest;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use corrmap::bits::fnv1a64;
use corrmap::cci::{cci, chow_liu_tree, mutual_info_matrix};
use corrmap::codec::{decode_dataset, encode_dataset, QuantizerSpec};
use corrmap::datasets::{BitDataset, DatasetFormat, DatasetManifest, FloatDataset};
use corrmap::envelope::{frontier_envelope, map_point, scatter_envelopes, McFallback, Provenance};
use corrmap::error::Error;
use corrmap::eval::{feature_mmd, pdf_js, FieldSnapshot, RandomConvEncoder, DEFAULT_PDF_BINS};
use corrmap::experiments::{
    self, run_coupling_study, run_mismatch_sweep, run_temporal_study, CouplingConfig, SweepConfig,
    TemporalConfig,
};
use corrmap::iqp::{self, IqpCircuit};
use corrmap::mmd::{KernelSpec, LossForm};
use corrmap::spectrum::{
    binomial_baseline, order_spectrum_exact, qcli_exact, qcli_mc, DEFAULT_MC_BUDGET,
    DENSE_SPECTRUM_LIMIT,
};
use corrmap::train::{
    adapt_latent, fit_core, generate_snapshot, interpolate_latent, train_mmd, LatentTrajectory,
    OptimizerConfig, ParamPartition, StepRecord,
};
use corrmap::{Real, Trajectory};

use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "corrmap",
    version,
    about = "Correlation-order indicators, circuit training and study pipelines for bitstring datasets",
    after_help = "Environment: CORRMAP_CACHE_DIR overrides where study row logs are cached (default: system temp)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    TextLines,
    PackedBinary,
    Csv,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::TextLines => DatasetFormat::TextLines,
            FormatArg::PackedBinary => DatasetFormat::PackedBinary,
            FormatArg::Csv => DatasetFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProvenanceArg {
    Classical,
    Quantum,
}

impl From<ProvenanceArg> for Provenance {
    fn from(p: ProvenanceArg) -> Self {
        match p {
            ProvenanceArg::Classical => Provenance::Classical,
            ProvenanceArg::Quantum => Provenance::Quantum,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Adam,
    Spsa,
}

#[derive(Args)]
struct DataArgs {
    /// Input bit dataset.
    #[arg(long)]
    input: PathBuf,
    /// Input file format.
    #[arg(long, value_enum, default_value = "text-lines")]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a float dataset (x,y,z CSV rows) into fixed-width bitstrings.
    Encode {
        /// CSV of x,y,z rows.
        #[arg(long)]
        input: PathBuf,
        /// Bits per coordinate.
        #[arg(long, default_value_t = 6)]
        bits: u32,
        /// Existing quantizer spec JSON; ranges come from the data otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text-lines")]
        format: FormatArg,
    },
    /// Decode a bit dataset back to coordinates using its quantizer spec.
    Decode {
        #[command(flatten)]
        data: DataArgs,
        /// Quantizer spec JSON written by `encode`.
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV of x,y,z rows.
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral indicator of a dataset (exact or Monte-Carlo).
    Qcli {
        #[command(flatten)]
        data: DataArgs,
        /// Force the exact dense path.
        #[arg(long, conflicts_with = "mc")]
        exact: bool,
        /// Use the Monte-Carlo subset estimator.
        #[arg(long)]
        mc: bool,
        /// Subset budget for the Monte-Carlo estimator.
        #[arg(long, default_value_t = DEFAULT_MC_BUDGET)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the (k, m_k, b_k, |m_k - b_k|) table as CSV.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Write the result JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Beyond-pairwise complexity indicator of a dataset.
    Cci {
        #[command(flatten)]
        data: DataArgs,
        /// Write the spanning tree as an edge-list CSV (i, j, weight).
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Place datasets on the indicator map; one CSV row per dataset.
    Map {
        /// Input datasets.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text-lines")]
        format: FormatArg,
        /// Labels aligned with --inputs (file stems otherwise).
        #[arg(long, num_args = 0..)]
        labels: Vec<String>,
        /// Provenance aligned with --inputs (classical otherwise).
        #[arg(long, value_enum, num_args = 0..)]
        provenance: Vec<ProvenanceArg>,
        /// Monte-Carlo budget for datasets too wide for the dense path.
        #[arg(long, default_value_t = DEFAULT_MC_BUDGET)]
        mc_budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional scatter plot.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Fit a circuit to a dataset; with --latent, fit only the core block
    /// and write a latent trajectory instead of a bare circuit.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        gates: usize,
        #[arg(long, default_value_t = 2)]
        locality: usize,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, value_enum, default_value = "adam")]
        method: MethodArg,
        #[arg(long, default_value_t = 0.1)]
        spsa_perturbation: f64,
        /// Model samples per loss evaluation (0 = exact dense loss).
        #[arg(long, default_value_t = 0)]
        batch_samples: usize,
        /// Kernel bandwidth (default: sqrt(n)/2).
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Latent block size; switches to the core-fit workflow.
        #[arg(long)]
        latent: Option<usize>,
        /// Time index of this snapshot (trajectory mode).
        #[arg(long, default_value_t = 1.0)]
        time: f64,
        /// Output: circuit JSON, or trajectory JSON in latent mode.
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines step log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Adapt a trajectory's latent block to a new snapshot.
    Adapt {
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Time index of the new snapshot; must exceed the last anchor.
        #[arg(long)]
        time: f64,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Sample a generator: a trajectory at time tau, or a bare circuit.
    Generate {
        #[arg(long, conflicts_with = "circuit")]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        circuit: Option<PathBuf>,
        /// Evaluation time (trajectory mode).
        #[arg(long, default_value_t = 1.0)]
        time: f64,
        #[arg(long, default_value_t = 100_000)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text-lines")]
        format: FormatArg,
    },
    /// Compare two directories of field snapshots (CSV grids or packed).
    Eval {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PDF_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        encoder_seed: u64,
        /// Snapshots per side (subsampled without replacement).
        #[arg(long, default_value_t = 200)]
        max_snapshots: usize,
        #[arg(long, default_value_t = 0)]
        subsample_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Support-mismatch sweep: fit restricted learners to targets of
    /// varying spectral indicator and tabulate the achieved loss.
    Sweep {
        /// Built-in preset: `sweep-desk` or `sweep-full`.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Config JSON overriding the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output rows CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional scatter + envelope plot.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Indicator-coupling study: ascend the spectral indicator, log both
    /// indicators, report their rank correlation.
    Coupling {
        /// Built-in preset: `coupling-desk` or `coupling-full-<n>`.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output scatter CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Temporal latent-adaptation study on the synthetic drifting source.
    Temporal {
        /// Built-in preset: `temporal-desk` or `temporal-full` (long-running).
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output report JSON.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("result serializes"));
        }
        Err(err) => {
            let class = exit_class(&err);
            let diag = json!({
                "error": err.to_string(),
                "class": match class {
                    2 => "config",
                    3 => "data",
                    _ => "numeric",
                },
            });
            eprintln!("{}", serde_json::to_string(&diag).expect("diagnostic serializes"));
            std::process::exit(class);
        }
    }
}

fn exit_class(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Capacity { .. }
        | Error::BudgetTooSmall { .. }
        | Error::InsufficientAnchors { .. } => 2,
        Error::Io { .. }
        | Error::Format(_)
        | Error::Parse(_)
        | Error::WidthMismatch { .. }
        | Error::Shape(_)
        | Error::InsufficientData(_)
        | Error::Coverage(_) => 3,
        Error::NonFiniteLoss { .. } | Error::UndefinedSpectrum => 4,
    }
}

type CmdResult = Result<Value, Error>;

fn run(command: Command) -> CmdResult {
    match command {
        Command::Encode {
            input,
            bits,
            spec,
            out,
            format,
        } => cmd_encode(&input, bits, spec.as_deref(), &out, format.into()),
        Command::Decode { data, spec, out } => cmd_decode(&data, &spec, &out),
        Command::Qcli {
            data,
            exact,
            mc,
            budget,
            seed,
            table,
            out,
        } => cmd_qcli(&data, exact, mc, budget, seed, table.as_deref(), out.as_deref()),
        Command::Cci { data, tree, out } => cmd_cci(&data, tree.as_deref(), out.as_deref()),
        Command::Map {
            inputs,
            format,
            labels,
            provenance,
            mc_budget,
            seed,
            out,
            svg,
        } => cmd_map(
            &inputs,
            format.into(),
            &labels,
            &provenance,
            mc_budget,
            seed,
            &out,
            svg.as_deref(),
        ),
        Command::Train {
            data,
            gates,
            locality,
            steps,
            lr,
            method,
            spsa_perturbation,
            batch_samples,
            sigma,
            seed,
            latent,
            time,
            out,
            log,
        } => cmd_train(
            &data,
            gates,
            locality,
            steps,
            lr,
            method,
            spsa_perturbation,
            batch_samples,
            sigma,
            seed,
            latent,
            time,
            &out,
            log.as_deref(),
        ),
        Command::Adapt {
            trajectory,
            data,
            time,
            steps,
            lr,
            sigma,
            seed,
            out,
            log,
        } => cmd_adapt(&trajectory, &data, time, steps, lr, sigma, seed, &out, log.as_deref()),
        Command::Generate {
            trajectory,
            circuit,
            time,
            shots,
            seed,
            out,
            format,
        } => cmd_generate(
            trajectory.as_deref(),
            circuit.as_deref(),
            time,
            shots,
            seed,
            &out,
            format.into(),
        ),
        Command::Eval {
            real,
            gen,
            bins,
            encoder_seed,
            max_snapshots,
            subsample_seed,
            out,
        } => cmd_eval(&real, &gen, bins, encoder_seed, max_snapshots, subsample_seed, out.as_deref()),
        Command::Sweep {
            preset,
            config,
            out,
            svg,
        } => cmd_sweep(preset.as_deref(), config.as_deref(), &out, svg.as_deref()),
        Command::Coupling {
            preset,
            config,
            out,
            svg,
        } => cmd_coupling(preset.as_deref(), config.as_deref(), &out, svg.as_deref()),
        Command::Temporal {
            preset,
            config,
            seed,
            out,
        } => cmd_temporal(preset.as_deref(), config.as_deref(), seed, &out),
    }
}

fn load_dataset(args: &DataArgs) -> Result<BitDataset, Error> {
    BitDataset::read(&args.input, args.format.into())
}

fn write_text(path: &Path, body: &str) -> Result<(), Error> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn kernel_or_default(n: usize, sigma: Option<f64>) -> Result<KernelSpec<Real>, Error> {
    match sigma {
        Some(s) => KernelSpec::new(s, LossForm::Pauli),
        None => Ok(KernelSpec::default_for_width(n)),
    }
}

fn write_step_log(path: &Path, history: &[StepRecord]) -> Result<(), Error> {
    let mut body = String::new();
    for rec in history {
        body.push_str(&serde_json::to_string(rec).expect("record serializes"));
        body.push('\n');
    }
    write_text(path, &body)
}

/// Directory for cached study row logs; `CORRMAP_CACHE_DIR` overrides.
fn cache_dir() -> PathBuf {
    std::env::var_os("CORRMAP_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("corrmap-cache"))
}

fn cache_rows(stem: &str, hash: u64, body: &str) -> Option<PathBuf> {
    let dir = cache_dir();
    fs::create_dir_all(&dir).ok()?;
    let path = dir.join(format!("{stem}-{hash:016x}.jsonl"));
    fs::write(&path, body).ok()?;
    Some(path)
}

// ---------------------------------------------------------------------------
// codec commands
// ---------------------------------------------------------------------------

fn cmd_encode(
    input: &Path,
    bits: u32,
    spec_path: Option<&Path>,
    out: &Path,
    format: DatasetFormat,
) -> CmdResult {
    let floats = FloatDataset::<Real>::read_csv(input)?;
    let spec = match spec_path {
        Some(p) => {
            let body = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<QuantizerSpec<Real>>(&body)
                .map_err(|e| Error::Parse(format!("quantizer spec: {e}")))?
        }
        None => QuantizerSpec::for_float_dataset(&floats, bits)?,
    };
    let encoded = encode_dataset(&floats, &spec)?;
    let spec_out = out.with_extension("spec.json");
    let ds_manifest_out = out.with_extension("dataset.json");

    let manifest = RunManifest::new(fnv1a64(
        serde_json::to_vec(&spec).expect("spec serializes"),
    ))
    .input(input)?
    .output(out)
    .output(&spec_out)
    .output(&ds_manifest_out);
    let manifest_file = manifest.write_for(out)?;

    encoded.bits.write(out, format)?;
    write_text(
        &spec_out,
        &serde_json::to_string_pretty(&spec).expect("spec serializes"),
    )?;
    DatasetManifest::describe(&encoded.bits, input.display().to_string())
        .write_json(&ds_manifest_out)?;

    Ok(json!({
        "n": encoded.bits.n(),
        "samples": encoded.bits.len(),
        "clamped_values": encoded.clamped,
        "spec": spec_out.display().to_string(),
        "out": out.display().to_string(),
        "manifest": manifest_file.display().to_string(),
    }))
}

fn cmd_decode(data: &DataArgs, spec_path: &Path, out: &Path) -> CmdResult {
    let bits = load_dataset(data)?;
    let body = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: QuantizerSpec<Real> =
        serde_json::from_str(&body).map_err(|e| Error::Parse(format!("quantizer spec: {e}")))?;
    let manifest = RunManifest::new(fnv1a64(body.bytes()))
        .input(&data.input)?
        .input(spec_path)?
        .output(out);
    let manifest_file = manifest.write_for(out)?;
    let floats = decode_dataset(&bits, &spec)?;
    floats.write_csv(out)?;
    Ok(json!({
        "samples": floats.samples.len(),
        "out": out.display().to_string(),
        "manifest": manifest_file.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// indicator commands
// ---------------------------------------------------------------------------

fn cmd_qcli(
    data: &DataArgs,
    exact: bool,
    mc: bool,
    budget: usize,
    seed: u64,
    table: Option<&Path>,
    out: Option<&Path>,
) -> CmdResult {
    let d = load_dataset(data)?;
    let n = d.n();
    let use_mc = mc || (!exact && n > DENSE_SPECTRUM_LIMIT);
    let baseline = binomial_baseline::<Real>(n);
    let (value, spectrum, per_order, mode) = if use_mc {
        let est = qcli_mc::<Real>(&d, budget, seed)?;
        (est.value, est.spectrum, Some(est.subsets_per_order), "mc")
    } else {
        let s = order_spectrum_exact::<Real>(&d)?;
        (qcli_exact::<Real>(&d)?, s, None, "exact")
    };

    let mut result = json!({
        "qcli": value,
        "n": n,
        "samples": d.len(),
        "mode": mode,
        "m": spectrum.fractions(),
        "b": baseline.fractions(),
    });
    if use_mc {
        result["seed"] = json!(seed);
        result["budget"] = json!(budget);
        result["subsets_per_order"] = json!(per_order);
    }

    let manifest = RunManifest::new(fnv1a64(
        serde_json::to_vec(&json!({"mode": mode, "budget": budget})).unwrap(),
    ))
    .seed(seed)
    .input(&data.input)?;

    if let Some(table_path) = table {
        let manifest_file = manifest.clone_with_output(table_path).write_for(table_path)?;
        let mut csv = format!("# manifest: {}\nk,m_k,b_k,abs_dev\n", manifest_file.display());
        for (k, (m, b)) in spectrum
            .fractions()
            .iter()
            .zip(baseline.fractions())
            .enumerate()
        {
            csv.push_str(&format!("{k},{m},{b},{}\n", (m - b).abs()));
        }
        write_text(table_path, &csv)?;
        result["table"] = json!(table_path.display().to_string());
        result["manifest"] = json!(manifest_file.display().to_string());
    } else {
        result["manifest"] = serde_json::to_value(&manifest).expect("manifest serializes");
    }

    if let Some(out) = out {
        write_text(out, &serde_json::to_string_pretty(&result).unwrap())?;
    }
    Ok(result)
}

fn cmd_cci(data: &DataArgs, tree: Option<&Path>, out: Option<&Path>) -> CmdResult {
    let d = load_dataset(data)?;
    let report = cci::<Real>(&d)?;
    let mut result = serde_json::to_value(&report).expect("report serializes");
    let manifest = RunManifest::new(0).input(&data.input)?;

    if let Some(tree_path) = tree {
        let model = chow_liu_tree(&mutual_info_matrix::<Real>(&d));
        let manifest_file = manifest.clone_with_output(tree_path).write_for(tree_path)?;
        let mut csv = format!("# manifest: {}\ni,j,weight\n", manifest_file.display());
        for (i, j, w) in &model.edges {
            csv.push_str(&format!("{i},{j},{w}\n"));
        }
        write_text(tree_path, &csv)?;
        result["tree"] = json!(tree_path.display().to_string());
        result["manifest"] = json!(manifest_file.display().to_string());
    } else {
        result["manifest"] = serde_json::to_value(&manifest).expect("manifest serializes");
    }

    if let Some(out) = out {
        write_text(out, &serde_json::to_string_pretty(&result).unwrap())?;
    }
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn cmd_map(
    inputs: &[PathBuf],
    format: DatasetFormat,
    labels: &[String],
    provenance: &[ProvenanceArg],
    mc_budget: usize,
    seed: u64,
    out: &Path,
    svg_path: Option<&Path>,
) -> CmdResult {
    if !labels.is_empty() && labels.len() != inputs.len() {
        return Err(Error::Config(format!(
            "{} labels for {} inputs",
            labels.len(),
            inputs.len()
        )));
    }
    if !provenance.is_empty() && provenance.len() != inputs.len() {
        return Err(Error::Config(format!(
            "{} provenance entries for {} inputs",
            provenance.len(),
            inputs.len()
        )));
    }
    let mut manifest = RunManifest::new(0).seed(seed);
    for input in inputs {
        manifest = manifest.input(input)?;
    }
    manifest = manifest.output(out);
    if let Some(svg) = svg_path {
        manifest = manifest.output(svg);
    }
    let manifest_file = manifest.write_for(out)?;

    let mut points = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        let d = BitDataset::read(input, format)?;
        let label = labels.get(i).cloned().unwrap_or_else(|| {
            input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("dataset-{i}"))
        });
        let prov: Provenance = provenance
            .get(i)
            .copied()
            .map(Into::into)
            .unwrap_or(Provenance::Classical);
        points.push(map_point::<Real>(
            &d,
            label,
            prov,
            Some(McFallback {
                budget: mc_budget,
                seed,
            }),
        )?);
    }

    let mut csv = format!("# manifest: {}\nlabel,qcli,cci,provenance\n", manifest_file.display());
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            p.label,
            p.qcli,
            p.cci,
            match p.provenance {
                Provenance::Classical => "classical",
                Provenance::Quantum => "quantum",
            }
        ));
    }
    write_text(out, &csv)?;

    if let Some(svg_out) = svg_path {
        let classical: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.provenance == Provenance::Classical)
            .map(|p| (p.qcli, p.cci))
            .collect();
        let quantum: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.provenance == Provenance::Quantum)
            .map(|p| (p.qcli, p.cci))
            .collect();
        let plot = svg::Plot {
            title: "correlation-complexity map",
            x_label: "qcli",
            y_label: "cci",
            series: vec![
                svg::Series {
                    label: "classical".into(),
                    color: "orange",
                    points: classical,
                    line: false,
                },
                svg::Series {
                    label: "quantum".into(),
                    color: "teal",
                    points: quantum,
                    line: false,
                },
            ],
        };
        write_text(svg_out, &plot.render())?;
    }

    Ok(json!({
        "points": points.len(),
        "out": out.display().to_string(),
        "manifest": manifest_file.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// training commands
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data: &DataArgs,
    gates: usize,
    locality: usize,
    steps: usize,
    lr: f64,
    method: MethodArg,
    spsa_perturbation: f64,
    batch_samples: usize,
    sigma: Option<f64>,
    seed: u64,
    latent: Option<usize>,
    time: f64,
    out: &Path,
    log: Option<&Path>,
) -> CmdResult {
    let d = load_dataset(data)?;
    let n = d.n();
    let kernel = kernel_or_default(n, sigma)?;
    let mut opt = match method {
        MethodArg::Adam => OptimizerConfig::adam(steps, lr, seed),
        MethodArg::Spsa => OptimizerConfig::spsa(steps, lr, spsa_perturbation, seed),
    };
    opt.batch_samples = batch_samples;

    let config_hash = fnv1a64(
        serde_json::to_vec(&json!({
            "gates": gates, "locality": locality, "opt": opt,
            "sigma": kernel.sigma, "latent": latent, "time": time,
        }))
        .unwrap(),
    );
    let mut manifest = RunManifest::new(config_hash).seed(seed).input(&data.input)?.output(out);
    if let Some(log_path) = log {
        manifest = manifest.output(log_path);
    }
    let manifest_file = manifest.write_for(out)?;

    let template: IqpCircuit<Real> = iqp::random_circuit(n, gates, locality, seed)?;
    let (final_loss, history_len) = if let Some(d_lat) = latent {
        let partition = ParamPartition::leading_latent(&template, d_lat)?;
        let fit = fit_core(&template, &d, &partition, &kernel, &opt, time)?;
        write_text(
            out,
            &serde_json::to_string_pretty(&fit.trajectory).expect("trajectory serializes"),
        )?;
        if let Some(log_path) = log {
            write_step_log(log_path, &fit.history)?;
        }
        (fit.history.last().map(|r| r.loss), fit.history.len())
    } else {
        let (trained, history) = train_mmd(&template, &d, &kernel, &opt, &[])?;
        write_text(out, &trained.to_json())?;
        if let Some(log_path) = log {
            write_step_log(log_path, &history)?;
        }
        (history.last().map(|r| r.loss), history.len())
    };

    Ok(json!({
        "n": n,
        "gates": template.gate_count(),
        "sigma": kernel.sigma,
        "steps": steps,
        "final_loss": final_loss,
        "history_records": history_len,
        "mode": if latent.is_some() { "core-fit" } else { "full-fit" },
        "out": out.display().to_string(),
        "manifest": manifest_file.display().to_string(),
    }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_adapt(
    trajectory: &Path,
    data: &DataArgs,
    time: f64,
    steps: usize,
    lr: f64,
    sigma: Option<f64>,
    seed: u64,
    out: &Path,
    log: Option<&Path>,
) -> CmdResult {
    let body = fs::read_to_string(trajectory).map_err(|e| Error::io(trajectory, e))?;
    let traj: Trajectory =
        serde_json::from_str(&body).map_err(|e| Error::Parse(format!("trajectory json: {e}")))?;
    let d = load_dataset(data)?;
    let kernel = kernel_or_default(d.n(), sigma)?;
    let opt = OptimizerConfig::adam(steps, lr, seed);

    let config_hash = fnv1a64(
        serde_json::to_vec(&json!({"time": time, "opt": opt, "sigma": kernel.sigma})).unwrap(),
    );
    let mut manifest = RunManifest::new(config_hash)
        .seed(seed)
        .input(trajectory)?
        .input(&data.input)?
        .output(out);
    if let Some(log_path) = log {
        manifest = manifest.output(log_path);
    }
    let manifest_file = manifest.write_for(out)?;

    let (adapted, history) = adapt_latent(&traj, time, &d, &kernel, &opt)?;
    write_text(
        out,
        &serde_json::to_string_pretty(&adapted).expect("trajectory serializes"),
    )?;
    if let Some(log_path) = log {
        write_step_log(log_path, &history)?;
    }
    Ok(json!({
        "anchors": adapted.anchors.len(),
        "final_loss": history.last().map(|r| r.loss),
        "out": out.display().to_string(),
        "manifest": manifest_file.display().to_string(),
    }))
}

fn cmd_generate(
    trajectory: Option<&Path>,
    circuit: Option<&Path>,
    time: f64,
    shots: usize,
    seed: u64,
    out: &Path,
    format: DatasetFormat,
) -> CmdResult {
    let config_hash = fnv1a64(
        serde_json::to_vec(&json!({"time": time, "shots": shots})).unwrap(),
    );
    let mut manifest = RunManifest::new(config_hash).seed(seed);
    let (bits, extrapolated, source) = match (trajectory, circuit) {
        (Some(traj_path), None) => {
            manifest = manifest.input(traj_path)?;
            let body = fs::read_to_string(traj_path).map_err(|e| Error::io(traj_path, e))?;
            let traj: LatentTrajectory<Real> = serde_json::from_str(&body)
                .map_err(|e| Error::Parse(format!("trajectory json: {e}")))?;
            let latent = interpolate_latent(&traj, time)?;
            let d = generate_snapshot(&traj, time, shots, seed)?;
            (d, Some(latent.extrapolated), traj_path.display().to_string())
        }
        (None, Some(circuit_path)) => {
            manifest = manifest.input(circuit_path)?;
            let body = fs::read_to_string(circuit_path).map_err(|e| Error::io(circuit_path, e))?;
            let c = IqpCircuit::<Real>::from_json(&body)?;
            (iqp::sample(&c, shots, seed)?, None, circuit_path.display().to_string())
        }
        _ => {
            return Err(Error::Config(
                "exactly one of --trajectory and --circuit is required".into(),
            ))
        }
    };
    let ds_manifest_out = out.with_extension("dataset.json");
    manifest = manifest.output(out).output(&ds_manifest_out);
    let manifest_file = manifest.write_for(out)?;
    bits.write(out, format)?;
    DatasetManifest::describe(&bits, source).write_json(&ds_manifest_out)?;
    Ok(json!({
        "n": bits.n(),
        "samples": bits.len(),
        "extrapolated": extrapolated,
        "out": out.display().to_string(),
        "manifest": manifest_file.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// field evaluation
// ---------------------------------------------------------------------------

fn load_snapshot_dir(dir: &Path) -> Result<Vec<FieldSnapshot<Real>>, Error> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no snapshot files in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            if p.extension().map(|e| e == "csv").unwrap_or(false) {
                FieldSnapshot::read_csv(p)
            } else {
                FieldSnapshot::read_packed(p)
            }
        })
        .collect()
}

fn subsample_fields(
    mut fields: Vec<FieldSnapshot<Real>>,
    max: usize,
    seed: u64,
) -> Vec<FieldSnapshot<Real>> {
    if fields.len() <= max {
        return fields;
    }
    use rand_shim::shuffle_indices;
    let order = shuffle_indices(fields.len(), seed);
    let keep: std::collections::HashSet<usize> = order.into_iter().take(max).collect();
    let mut i = 0;
    fields.retain(|_| {
        let keep_it = keep.contains(&i);
        i += 1;
        keep_it
    });
    fields
}

/// Tiny seeded Fisher–Yates so the CLI does not need a direct rand
/// dependency; splitmix-style generator, deterministic across platforms.
mod rand_shim {
    pub fn shuffle_indices(len: usize, seed: u64) -> Vec<usize> {
        let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
        let mut next = move || {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        };
        let mut order: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            let j = (next() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        order
    }
}

fn cmd_eval(
    real_dir: &Path,
    gen_dir: &Path,
    bins: usize,
    encoder_seed: u64,
    max_snapshots: usize,
    subsample_seed: u64,
    out: Option<&Path>,
) -> CmdResult {
    let real = subsample_fields(load_snapshot_dir(real_dir)?, max_snapshots, subsample_seed);
    let gen = subsample_fields(
        load_snapshot_dir(gen_dir)?,
        max_snapshots,
        subsample_seed.wrapping_add(1),
    );
    let encoder = RandomConvEncoder::<Real>::new(encoder_seed);
    let js = pdf_js(&real, &gen, bins)?;
    let fm = feature_mmd(&real, &gen, &encoder)?;
    let result = json!({
        "pdf_js": js.value,
        "pdf_js_degenerate": js.degenerate,
        "feature_mmd": fm.value,
        "feature_mmd_sigma": fm.sigma,
        "feature_mmd_degenerate": fm.degenerate,
        "config": {
            "bins": bins,
            "encoder": encoder.config(),
            "real_snapshots": real.len(),
            "gen_snapshots": gen.len(),
            "max_snapshots": max_snapshots,
            "subsample_seed": subsample_seed,
        },
    });
    if let Some(out) = out {
        write_text(out, &serde_json::to_string_pretty(&result).unwrap())?;
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// studies
// ---------------------------------------------------------------------------

fn load_config<C: serde::de::DeserializeOwned>(path: &Path) -> Result<C, Error> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&body).map_err(|e| Error::Parse(format!("config json: {e}")))
}

fn cmd_sweep(
    preset: Option<&str>,
    config: Option<&Path>,
    out: &Path,
    svg_path: Option<&Path>,
) -> CmdResult {
    let cfg: SweepConfig = match (preset, config) {
        (_, Some(path)) => load_config(path)?,
        (Some("sweep-desk") | None, None) => experiments::sweep_desk(),
        (Some("sweep-full"), None) => experiments::sweep_full(),
        (Some(other), None) => {
            return Err(Error::Config(format!("unknown sweep preset {other:?}")))
        }
    };
    let mut manifest = RunManifest::new(fnv1a64(serde_json::to_vec(&cfg).unwrap()))
        .seeds(&cfg.seeds)
        .output(out);
    if let Some(svg) = svg_path {
        manifest = manifest.output(svg);
    }
    let manifest_file = manifest.write_for(out)?;

    let output = run_mismatch_sweep(&cfg)?;
    let mut csv = format!(
        "# manifest: {}\nseed,generator_gates,boost_step,target_qcli,learner_gates,achieved_mmd,config_hash\n",
        manifest_file.display()
    );
    let mut jsonl = String::new();
    for r in &output.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{:016x}\n",
            r.seed,
            r.generator_gates,
            r.boost_step,
            r.target_qcli,
            r.learner_gates,
            r.achieved_mmd,
            r.config_hash
        ));
        jsonl.push_str(&serde_json::to_string(r).unwrap());
        jsonl.push('\n');
    }
    write_text(out, &csv)?;
    let cached = cache_rows("sweep", output.config_hash, &jsonl);

    if let Some(svg_out) = svg_path {
        let mut series = Vec::new();
        let colors = ["#d95f02", "#1b9e77", "#7570b3"];
        let mut sizes: Vec<usize> = output.rows.iter().map(|r| r.learner_gates).collect();
        sizes.sort_unstable();
        sizes.dedup();
        for (i, &g) in sizes.iter().enumerate() {
            let pts: Vec<(f64, f64)> = output
                .rows
                .iter()
                .filter(|r| r.learner_gates == g)
                .map(|r| (r.target_qcli, r.achieved_mmd))
                .collect();
            if let Ok((upper, lower)) = scatter_envelopes::<Real>(
                &pts,
                corrmap::envelope::DEFAULT_BIN_WIDTH,
                1,
                corrmap::envelope::DEFAULT_WINDOW,
            ) {
                series.push(svg::Series {
                    label: format!("learner {g} upper envelope"),
                    color: colors[i % colors.len()],
                    points: upper.smoothed.clone(),
                    line: true,
                });
                series.push(svg::Series {
                    label: format!("learner {g} lower envelope"),
                    color: colors[i % colors.len()],
                    points: lower.smoothed.clone(),
                    line: true,
                });
            }
            series.push(svg::Series {
                label: format!("learner {g}"),
                color: colors[i % colors.len()],
                points: pts,
                line: false,
            });
        }
        let plot = svg::Plot {
            title: "achieved loss vs target indicator",
            x_label: "target qcli",
            y_label: "achieved mmd",
            series,
        };
        write_text(svg_out, &plot.render())?;
    }

    Ok(json!({
        "rows": output.rows.len(),
        "failures": output.failures,
        "config_hash": format!("{:016x}", output.config_hash),
        "out": out.display().to_string(),
        "cache": cached.map(|p| p.display().to_string()),
        "manifest": manifest_file.display().to_string(),
    }))
}

fn cmd_coupling(
    preset: Option<&str>,
    config: Option<&Path>,
    out: &Path,
    svg_path: Option<&Path>,
) -> CmdResult {
    let cfg: CouplingConfig = match (preset, config) {
        (_, Some(path)) => load_config(path)?,
        (Some("coupling-desk") | None, None) => experiments::coupling_desk(),
        (Some("coupling-full-8"), None) => experiments::coupling_full(8),
        (Some("coupling-full-12"), None) => experiments::coupling_full(12),
        (Some("coupling-full-16"), None) => experiments::coupling_full(16),
        (Some(other), None) => {
            return Err(Error::Config(format!("unknown coupling preset {other:?}")))
        }
    };
    let mut manifest = RunManifest::new(fnv1a64(serde_json::to_vec(&cfg).unwrap()))
        .seed(cfg.seed)
        .output(out);
    if let Some(svg) = svg_path {
        manifest = manifest.output(svg);
    }
    let manifest_file = manifest.write_for(out)?;

    let output = run_coupling_study(&cfg)?;
    let mut csv = format!(
        "# manifest: {}\nrun,step,qcli,cci\n",
        manifest_file.display()
    );
    let mut jsonl = String::new();
    for p in &output.points {
        csv.push_str(&format!("{},{},{},{}\n", p.run, p.step, p.qcli, p.cci));
        jsonl.push_str(&serde_json::to_string(p).unwrap());
        jsonl.push('\n');
    }
    write_text(out, &csv)?;
    let cached = cache_rows("coupling", output.config_hash, &jsonl);

    if let Some(svg_out) = svg_path {
        let pts: Vec<(f64, f64)> = output.points.iter().map(|p| (p.qcli, p.cci)).collect();
        let mut series = vec![svg::Series {
            label: "trajectory points".into(),
            color: "teal",
            points: pts.clone(),
            line: false,
        }];
        if let Ok(frontier) = frontier_envelope::<Real>(
            &pts,
            corrmap::envelope::DEFAULT_FRONTIER_BINS,
            corrmap::envelope::DEFAULT_FRONTIER_MIN_COUNT,
            corrmap::envelope::DEFAULT_WINDOW,
        ) {
            series.push(svg::Series {
                label: "lower frontier".into(),
                color: "#666666",
                points: frontier.smoothed.clone(),
                line: true,
            });
        }
        let plot = svg::Plot {
            title: "indicator coupling under spectral ascent",
            x_label: "qcli",
            y_label: "cci",
            series,
        };
        write_text(svg_out, &plot.render())?;
    }

    Ok(json!({
        "points": output.points.len(),
        "spearman": output.spearman,
        "p_value": output.p_value,
        "config_hash": format!("{:016x}", output.config_hash),
        "out": out.display().to_string(),
        "cache": cached.map(|p| p.display().to_string()),
        "manifest": manifest_file.display().to_string(),
    }))
}

fn cmd_temporal(
    preset: Option<&str>,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
) -> CmdResult {
    let cfg: TemporalConfig = match (preset, config) {
        (_, Some(path)) => load_config(path)?,
        (Some("temporal-desk") | None, None) => experiments::temporal_desk(seed),
        (Some("temporal-full"), None) => experiments::temporal_full(seed),
        (Some(other), None) => {
            return Err(Error::Config(format!("unknown temporal preset {other:?}")))
        }
    };
    let manifest = RunManifest::new(fnv1a64(serde_json::to_vec(&cfg).unwrap()))
        .seed(cfg.seed)
        .output(out);
    let manifest_file = manifest.write_for(out)?;

    let output = run_temporal_study(&cfg)?;
    write_text(out, &serde_json::to_string_pretty(&output).unwrap())?;

    let mean = |rows: &[experiments::TauRow]| {
        rows.iter().map(|r| r.mmd).sum::<f64>() / rows.len().max(1) as f64
    };
    Ok(json!({
        "heldout_times": output.interpolated.rows.len(),
        "interp_wins": output.interp_wins,
        "mean_mmd": {
            &output.interpolated.model: mean(&output.interpolated.rows),
            &output.nearest_anchor.model: mean(&output.nearest_anchor.rows),
            &output.rbm.model: mean(&output.rbm.rows),
        },
        "config_hash": format!("{:016x}", output.config_hash),
        "out": out.display().to_string(),
        "manifest": manifest_file.display().to_string(),
    }))
}

impl RunManifest {
    fn clone_with_output(&self, path: &Path) -> RunManifest {
        let mut m = self.clone();
        m.outputs.push(path.display().to_string());
        m
    }
}
