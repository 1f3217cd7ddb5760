use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{eval_metrics, load_model, parse_properties, save_model, Dataset, Metrics, Model};
use crate::autodiff::AdamConfig;
use crate::bounds::{BoundOptions, BoundsMode};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fixtures::sample_box;
use crate::preimage::{synthesize_proxy_box, Synthesis};
use crate::repair::{
    generate_counterexample, point_wise_repair, region_wise_repair, Property, RepairConfig, RepairStats, RepairStatus,
};

#[derive(Debug, Parser)]
#[command(name = "netrepair", version, about = "Verify and provably repair dense ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Args)]
struct Opts {
    /// Proxy-box radius
    #[arg(long, global = true, default_value_t = 0.1)]
    radius: f64,
    /// Maximum proxy-box shifts per property
    #[arg(long, global = true, default_value_t = 100)]
    box_iters: usize,
    /// Maximum optimizer steps per point-wise repair
    #[arg(long, global = true, default_value_t = 1000)]
    repair_iters: usize,
    /// Maximum number of live sub-properties during region repair
    #[arg(long, global = true, default_value_t = 10_000)]
    budget: usize,
    /// Layer index where the frozen head begins
    #[arg(long, global = true)]
    split: Option<usize>,
    /// Bound propagation: `backward` or `ibp`
    #[arg(long, global = true, default_value = "backward")]
    bounds_mode: BoundsMode,
    /// Adam learning rate
    #[arg(long, global = true, default_value_t = 1e-2)]
    lr: f64,
    /// Seed for the post-repair sampling check
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Uniform samples per region property to re-check after repair
    #[arg(long, global = true, default_value_t = 0)]
    samples: usize,
    /// Write a JSON report here
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Write the repaired network here (.nnet or .json)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Include wall-clock time in the report
    #[arg(long, global = true)]
    timing: bool,
    /// Run everything on the calling thread
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bound every property and print VERIFIED or UNVERIFIED per line
    Verify { net: PathBuf, props: PathBuf },
    /// Repair a network against a property file
    Repair {
        mode: Mode,
        net: PathBuf,
        props: PathBuf,
    },
    /// Accuracy on a labelled CSV, plus satisfaction rates
    Eval {
        net: PathBuf,
        test: PathBuf,
        props: Option<PathBuf>,
        /// Generalization properties
        #[arg(long)]
        gene: Option<PathBuf>,
    },
    /// Print the proxy-box trajectory for one input as CSV
    SynthBox {
        net: PathBuf,
        /// Comma-separated input values, or a file containing them
        point: String,
        props: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    Point,
    Region,
}

impl Opts {
    fn bounds(&self) -> BoundOptions {
        BoundOptions {
            mode: self.bounds_mode,
            exec: if self.sequential { Exec::Sequential } else { Exec::default() },
        }
    }

    fn repair_config(&self) -> RepairConfig {
        RepairConfig {
            radius: self.radius,
            box_iters: self.box_iters,
            repair_iters: self.repair_iters,
            budget: self.budget,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            bounds: self.bounds(),
        }
    }

    fn load(&self, net: &Path) -> Result<Model> {
        let mut model = load_model(net)?;
        if let Some(k) = self.split {
            model.network = model.network.with_split(k)?;
        }
        Ok(model)
    }
}

#[derive(Serialize)]
struct VerifyEntry {
    label: String,
    verified: bool,
    min_lb: f64,
    lb: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterexample: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct Report {
    command: String,
    model: String,
    properties: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<RepairConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    status: Option<RepairStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<RepairStats>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    verification: Vec<VerifyEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampling: Option<Sampling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_secs: Option<f64>,
}

impl Report {
    fn new(command: &str, model: &Path, properties: usize) -> Self {
        Report {
            command: command.into(),
            model: model.display().to_string(),
            properties,
            config: None,
            status: None,
            stats: None,
            verification: vec![],
            metrics: None,
            sampling: None,
            wall_time_secs: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct Sampling {
    seed: u64,
    samples_per_property: usize,
    violations: usize,
}

/// Runs the CLI on the process arguments and standard streams.
pub fn run() -> i32 {
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_from(std::env::args_os(), &mut out, &mut err)
}

/// Runs the CLI on `args`; exit code 0 on success, 1 when a repair fails or a
/// property is not verified, 2 on usage, input or I/O errors.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            let text = e.render().to_string();
            return match e.kind() {
                DisplayHelp | DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let started = Instant::now();
    let opts = &cli.opts;
    let (code, mut report) = match &cli.command {
        Command::Verify { net, props } => verify(opts, net, props, out)?,
        Command::Repair { mode, net, props } => repair(opts, *mode, net, props, out)?,
        Command::Eval { net, test, props, gene } => eval(opts, net, test, props.as_deref(), gene.as_deref(), out)?,
        Command::SynthBox { net, point, props } => synth_box(opts, net, point, props, out, err)?,
    };
    if let Some(path) = &opts.report {
        if opts.timing {
            report.wall_time_secs = Some(started.elapsed().as_secs_f64());
        }
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io("<stdout>", e))?;
    Ok(code)
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn verify(opts: &Opts, net: &Path, props: &Path, out: &mut dyn Write) -> Result<(i32, Report)> {
    let model = opts.load(net)?;
    let props = parse_properties(props, Some(&model))?;
    let bounds = opts.bounds();
    let results = bounds
        .exec
        .map(&props, |p| generate_counterexample(&model.network, p, bounds))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut report = Report::new("verify", net, props.len());
    for (p, r) in props.iter().zip(results) {
        let min_lb = r.report.min_lb();
        if r.is_verified() {
            writeln!(out, "VERIFIED {} min_lb={min_lb:.6e}", p.label()).map_err(io_out)?;
        } else {
            let tag = if r.counterexample.is_some() { " counterexample" } else { "" };
            writeln!(out, "UNVERIFIED {} min_lb={min_lb:.6e}{tag}", p.label()).map_err(io_out)?;
        }
        report.verification.push(VerifyEntry {
            label: p.label().to_string(),
            verified: r.is_verified(),
            min_lb,
            lb: r.report.lb.clone(),
            counterexample: r.counterexample.map(|c| c.into_inner()),
        });
    }
    let code = if report.verification.iter().all(|v| v.verified) { 0 } else { 1 };
    Ok((code, report))
}

/// Counts sampled violations across `props`; points are checked directly.
fn sampled_violations(model: &Model, props: &[Property], samples: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for p in props {
        if p.is_point() {
            bad += usize::from(!model.network.satisfies(p.input().lower(), p));
            continue;
        }
        for _ in 0..samples {
            let x = sample_box(&mut rng, p.input());
            bad += usize::from(!model.network.satisfies(&x, p));
        }
    }
    bad
}

fn repair(opts: &Opts, mode: Mode, net: &Path, props_path: &Path, out: &mut dyn Write) -> Result<(i32, Report)> {
    let model = opts.load(net)?;
    let props = parse_properties(props_path, Some(&model))?;
    let cfg = opts.repair_config();
    let outcome = match mode {
        Mode::Point => point_wise_repair(&model.network, &props, &cfg)?,
        Mode::Region => region_wise_repair(&model.network, &props, &cfg)?,
    };
    let repaired = model.with_network(outcome.network.clone());
    if let Some(path) = &opts.out {
        save_model(&repaired, path)?;
    }
    let command = match mode {
        Mode::Point => "repair point",
        Mode::Region => "repair region",
    };
    let mut report = Report::new(command, net, props.len());
    if opts.samples > 0 {
        report.sampling = Some(Sampling {
            seed: opts.seed,
            samples_per_property: opts.samples,
            violations: sampled_violations(&repaired, &props, opts.samples, opts.seed),
        });
    }
    let s = &outcome.stats;
    match &outcome.status {
        RepairStatus::Repaired => writeln!(
            out,
            "REPAIRED {} properties: {} rounds, {} refinements, {} optimizer steps, {} final sub-properties",
            props.len(),
            s.rounds.len(),
            s.refinements,
            s.optimizer_steps,
            s.final_properties
        ),
        RepairStatus::Failed(reason) => writeln!(
            out,
            "FAILED {}: {} rounds, {} refinements, {} optimizer steps",
            serde_json::to_string(reason)?,
            s.rounds.len(),
            s.refinements,
            s.optimizer_steps
        ),
    }
    .map_err(io_out)?;
    if let Some(sm) = &report.sampling {
        writeln!(out, "sampled violations: {}", sm.violations).map_err(io_out)?;
    }
    let code = if outcome.is_repaired() { 0 } else { 1 };
    report.config = Some(cfg);
    report.status = Some(outcome.status);
    report.stats = Some(outcome.stats);
    Ok((code, report))
}

fn eval(
    opts: &Opts,
    net: &Path,
    test: &Path,
    props: Option<&Path>,
    gene: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(i32, Report)> {
    let model = opts.load(net)?;
    let data = model.prepare_dataset(&Dataset::load_csv(test)?)?;
    let load = |p: Option<&Path>| -> Result<Vec<Property>> {
        p.map_or(Ok(vec![]), |p| parse_properties(p, Some(&model)))
    };
    let props = load(props)?;
    let gene = load(gene)?;
    let m = eval_metrics(&model.network, &data, &props, &gene, opts.bounds())?;
    writeln!(out, "{}", serde_json::to_string(&m)?).map_err(io_out)?;
    let mut report = Report::new("eval", net, props.len());
    report.metrics = Some(m);
    Ok((0, report))
}

fn parse_point(arg: &str) -> Result<Vec<f64>> {
    let text = if Path::new(arg).is_file() {
        std::fs::read_to_string(arg).map_err(|e| Error::io(arg, e))?
    } else {
        arg.to_string()
    };
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad point coordinate '{t}'")))
        })
        .collect()
}

fn synth_box(
    opts: &Opts,
    net_path: &Path,
    point: &str,
    props: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(i32, Report)> {
    let model = opts.load(net_path)?;
    let props = parse_properties(props, Some(&model))?;
    let raw = parse_point(point)?;
    crate::error::ensure_dims("point", model.network.input_dim(), raw.len())?;
    let x = model.prepare_input(&raw);
    let net = &model.network;
    let h = net.forward_features(&x)?;
    let header: Vec<String> = (0..h.len()).map(|i| format!("h{i}")).collect();
    writeln!(out, "label,step,min_lb,{}", header.join(",")).map_err(io_out)?;
    let mut all_ok = true;
    for p in &props {
        let s: Synthesis = synthesize_proxy_box(
            &net.head(),
            &h,
            p.constraints(),
            opts.radius,
            opts.box_iters,
            opts.bounds(),
        )?;
        for (i, step) in s.trajectory.iter().enumerate() {
            let min_lb = step.lb.iter().cloned().fold(f64::INFINITY, f64::min);
            let coords: Vec<String> = step.center.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{i},{min_lb},{}", p.label(), coords.join(",")).map_err(io_out)?;
        }
        match &s.outcome {
            Ok(_) => {
                let _ = writeln!(err, "{}: certified after {} shifts", p.label(), s.shifts());
            }
            Err(f) => {
                all_ok = false;
                let _ = writeln!(err, "{}: no proxy box ({f:?})", p.label());
            }
        }
    }
    Ok((if all_ok { 0 } else { 1 }, Report::new("synth-box", net_path, props.len())))
}
