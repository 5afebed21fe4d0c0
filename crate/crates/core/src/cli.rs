//! Command-line surface. `run` parses arguments, executes one subcommand and
//! returns the process exit code: 0 success, 1 usage error, 2 numeric
//! failure or divergence, 3 I/O or file-format error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datasets::{
    csv_read_path, csv_write_path, gen_banana, gen_curve1d, gen_embedded_gaussian, gen_scurve, gen_sine,
    load_mnist_idx, Dataset, Table,
};
use crate::error::{Error, Result};
use crate::extract::{project_batch, write_projection_csv_path};
use crate::flow::{Activation, FlowNetwork};
use crate::linear::{pca_oracle, train_linear};
use crate::numlin::{dot, Matrix};
use crate::objective::gradient_check;
use crate::optimize::{
    evaluate, load_checkpoint, sample, save_checkpoint, train, Model, RunMetrics, TrainConfig,
};
use crate::plot::plot_csv_path;
use crate::realnvp::RealNvp;
use crate::rng::GaussianRng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "flowlab", version, about = "Regularized normalizing flows and un-whitened components")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic or MNIST dataset as CSV.
    Generate(GenerateArgs),
    /// Train a flow and write a checkpoint.
    Train(TrainArgs),
    /// Print the mean log-likelihood of a dataset under a model.
    Eval(EvalArgs),
    /// Draw samples from a model.
    Sample(SampleArgs),
    /// Write per-point un-whitened components.
    Project(ProjectArgs),
    /// Compare a trained linear flow with the shrunk PCA solution.
    PcaCheck(PcaCheckArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Render a 2- or 3-column CSV as an SVG scatter.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DatasetName {
    Banana,
    Sine,
    Scurve,
    GaussEmbed,
    Curve1d,
    Mnist,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    dataset: DatasetName,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generative latents (synthetic sets only).
    #[arg(long)]
    latents: Option<PathBuf>,
    /// gauss-embed: intrinsic dimension.
    #[arg(long, default_value_t = 2)]
    d_intrinsic: usize,
    /// gauss-embed: ambient dimension.
    #[arg(long, default_value_t = 3)]
    d_ambient: usize,
    /// gauss-embed: latent variances, comma separated (default 4,1,...).
    #[arg(long, value_delimiter = ',')]
    spectrum: Vec<f64>,
    /// mnist: IDX image file.
    #[arg(long)]
    images: Option<PathBuf>,
    /// mnist: IDX label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// mnist: keep only this digit.
    #[arg(long)]
    class: Option<u8>,
    /// mnist: 1 keeps 28×28, 2 average-pools to 14×14.
    #[arg(long, default_value_t = 2)]
    downsample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arch {
    Dense,
    Realnvp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    Asinh,
    Softplus,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Asinh => Activation::Asinh,
            ActivationArg::Softplus => Activation::Softplus,
        }
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Use the data as is instead of subtracting its column means.
    #[arg(long)]
    no_center: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "dense")]
    arch: Arch,
    /// Hidden layers (dense) or coupling layers (realnvp).
    #[arg(long, default_value_t = 8)]
    layers: usize,
    #[arg(long, value_enum, default_value = "asinh")]
    activation: ActivationArg,
    /// Width of the coupling networks' hidden layers.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    validation: f64,
    /// Abort when a Jacobian singular value leaves [1/b, b]; 0 disables.
    #[arg(long, default_value_t = 1e6)]
    divergence_bound: f64,
    #[arg(long, default_value_t = 64)]
    monitor_samples: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Record wall-clock seconds in the metrics file (breaks byte-identical reruns).
    #[arg(long)]
    record_time: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PcaCheckArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 20_000)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e4)]
    divergence_bound: f64,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5e-5)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "asinh")]
    activation: ActivationArg,
    /// Batch size of the random test batch.
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Parse { .. } | Error::Format(_) | Error::UnsupportedVersion(_) => EXIT_IO,
        Error::InvalidArgument(_) | Error::Dimension(_) => EXIT_USAGE,
        Error::Sample { source, .. } => exit_code(source),
        Error::Domain(_)
        | Error::Singular { .. }
        | Error::SingularJacobian { .. }
        | Error::NoConvergence { .. }
        | Error::Overflow { .. }
        | Error::Divergence(_) => EXIT_NUMERIC,
    }
}

/// `digits` significant digits, `%g` style.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if exp < -4 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, v);
        trim_mantissa(&s)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }
}

fn trim_mantissa(s: &str) -> String {
    match s.split_once('e') {
        Some((m, e)) if m.contains('.') => {
            format!("{}e{e}", m.trim_end_matches('0').trim_end_matches('.'))
        }
        _ => s.to_string(),
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Sample(a) => sample_cmd(a, out),
        Command::Project(a) => project_cmd(a, out),
        Command::PcaCheck(a) => pca_check(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Plot(a) => {
            plot_csv_path(&a.input, &a.out)?;
            writeln!(out, "wrote {}", a.out.display())?;
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let ds = match a.dataset {
        DatasetName::Banana => gen_banana(a.n, a.seed),
        DatasetName::Sine => gen_sine(a.n, a.seed),
        DatasetName::Scurve => gen_scurve(a.n, a.seed),
        DatasetName::Curve1d => gen_curve1d(a.n, a.seed),
        DatasetName::GaussEmbed => {
            let spectrum = if a.spectrum.is_empty() {
                (0..a.d_intrinsic).map(|i| if i == 0 { 4.0 } else { 1.0 }).collect()
            } else {
                a.spectrum.clone()
            };
            gen_embedded_gaussian(a.n, a.seed, a.d_intrinsic, a.d_ambient, &spectrum)?
        }
        DatasetName::Mnist => {
            let (Some(images), Some(labels)) = (&a.images, &a.labels) else {
                return Err(Error::invalid("mnist needs --images and --labels"));
            };
            load_mnist_idx(images, labels, a.class, a.downsample)?
        }
    };
    let mut table = Table::from_matrix(ds.data.clone());
    if let Some(labels) = &ds.labels {
        table = with_label_column(table, labels);
    }
    csv_write_path(&a.out, &table)?;
    if let Some(path) = &a.latents {
        let lat = ds
            .latents
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("dataset {} has no latents", ds.name)))?;
        let mut t = Table::from_matrix(lat.clone());
        t.columns = (1..=lat.cols()).map(|i| format!("e{i}")).collect();
        csv_write_path(path, &t)?;
    }
    writeln!(out, "wrote {} rows × {} columns to {}", ds.len(), ds.dim(), a.out.display())?;
    Ok(())
}

fn with_label_column(table: Table, labels: &[u8]) -> Table {
    let (n, d) = table.data.shape();
    let data = Matrix::from_fn(n, d + 1, |i, j| if j < d { table.data[(i, j)] } else { labels[i] as f64 });
    let mut columns = table.columns;
    columns.push("label".into());
    Table { columns, data }
}

/// Reads a CSV dataset. A column named `label` is split off as class
/// labels; the rest are features, centered unless `no_center`.
fn load_data(a: &DataArgs) -> Result<Dataset> {
    let table = csv_read_path(&a.data)?;
    let ds = match table.column_index("label") {
        Some(li) => {
            let (n, d) = table.data.shape();
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let v = table.data[(i, li)];
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::parse(
                        i + 2,
                        format!("column {}: label {v} is not in 0..=255", li + 1),
                    ));
                }
                labels.push(v as u8);
            }
            let feats = Matrix::from_fn(n, d - 1, |i, j| table.data[(i, if j < li { j } else { j + 1 })]);
            let mut ds = Dataset::new("csv", feats);
            ds.labels = Some(labels);
            ds
        }
        None => Dataset::new("csv", table.data),
    };
    if ds.is_empty() {
        return Err(Error::invalid(format!("{} holds no rows", a.data.display())));
    }
    if a.no_center {
        Ok(ds)
    } else {
        ds.center()
    }
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let ds = load_data(&a.data)?;
    let config = TrainConfig {
        alpha: a.alpha,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        divergence_bound: if a.divergence_bound == 0.0 { f64::INFINITY } else { a.divergence_bound },
        monitor_samples: a.monitor_samples,
        validation_fraction: a.validation,
        ..TrainConfig::default()
    };
    config.validate()?;
    let (model, metrics): (Model, RunMetrics) = match a.arch {
        Arch::Dense => {
            let net = FlowNetwork::random(ds.dim(), a.layers, a.activation.into(), a.seed)?;
            let (net, m) = train(net, &ds, &config)?;
            (net.into(), m)
        }
        Arch::Realnvp => {
            let d = (ds.dim() / 2).max(1);
            let nvp = RealNvp::stack(ds.dim(), a.layers, d, a.hidden, a.seed)?;
            let (nvp, m) = train(nvp, &ds, &config)?;
            (nvp.into(), m)
        }
    };
    save_checkpoint(&a.out, &model)?;
    if let Some(path) = &a.metrics {
        metrics.write_csv_path(path, a.record_time)?;
    }
    if let Some(r) = metrics.last() {
        writeln!(
            out,
            "epochs {} train_ll {} val_ll {} loss {} smax {} smin {}",
            r.epoch + 1,
            fmt_sig(r.train_ll, 6),
            fmt_sig(r.val_ll, 6),
            fmt_sig(r.total_loss(), 6),
            fmt_sig(r.smax, 6),
            fmt_sig(r.smin, 6)
        )?;
    }
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let ds = load_data(&a.data)?;
    let ev = evaluate(&model, &ds.data)?;
    writeln!(out, "mean_log_likelihood {}", fmt_sig(ev.mean_log_likelihood, 12))?;
    writeln!(out, "samples {}", ds.len())?;
    Ok(())
}

fn sample_cmd(a: SampleArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let x = sample(&model, a.n, a.seed)?;
    csv_write_path(&a.out, &Table::from_matrix(x))?;
    writeln!(out, "wrote {} samples to {}", a.n, a.out.display())?;
    Ok(())
}

fn project_cmd(a: ProjectArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let ds = load_data(&a.data)?;
    let proj = project_batch(&model, &ds.data, a.k)?;
    write_projection_csv_path(&a.out, &proj, ds.labels.as_deref())?;
    writeln!(out, "wrote {} projections to {}", proj.rows(), a.out.display())?;
    Ok(())
}

fn pca_check(a: PcaCheckArgs, out: &mut dyn Write) -> Result<()> {
    let ds = load_data(&a.data)?;
    let config = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: a.seed,
        divergence_bound: if a.divergence_bound == 0.0 { f64::INFINITY } else { a.divergence_bound },
        ..TrainConfig::default()
    };
    let model = train_linear(&ds.data, a.alpha, &config)?;
    let (evals, evecs) = pca_oracle(&ds.data)?;
    let learned = model.variances();
    let dirs = model.components();
    writeln!(out, "component learned_variance oracle_variance angle_deg")?;
    let mut worst_rel: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    let d = evals.len();
    for i in 0..d {
        // learned components come in ascending-variance order
        let j = d - 1 - i;
        let target = evals[i] + a.alpha;
        let c = dot(&dirs.column(j), &evecs.column(i)).abs().min(1.0);
        let angle = c.acos().to_degrees();
        worst_rel = worst_rel.max((learned[j] - target).abs() / target);
        worst_angle = worst_angle.max(angle);
        writeln!(out, "{} {} {} {}", i + 1, fmt_sig(learned[j], 6), fmt_sig(target, 6), fmt_sig(angle, 6))?;
    }
    writeln!(
        out,
        "max_relative_variance_error {} max_angle_deg {}",
        fmt_sig(worst_rel, 6),
        fmt_sig(worst_angle, 6)
    )?;
    Ok(())
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    if a.dim == 0 || a.n == 0 {
        return Err(Error::invalid("dim and n must be positive"));
    }
    let mut net = FlowNetwork::random(a.dim, a.layers, a.activation.into(), a.seed)?;
    let mut rng = GaussianRng::new(a.seed.wrapping_add(1));
    let mut p = net.params();
    p.iter_mut().for_each(|v| *v += 0.1 * rng.normal());
    net.set_params(&p)?;
    let batch = rng.normal_matrix(a.n, a.dim);
    let err = gradient_check(&net, &batch, a.alpha, 1e-6)?;
    writeln!(out, "parameters {} max_relative_error {}", p.len(), fmt_sig(err, 6))?;
    if err < a.tolerance {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "gradient mismatch {} exceeds tolerance {}",
            fmt_sig(err, 6),
            fmt_sig(a.tolerance, 6)
        )))
    }
}
