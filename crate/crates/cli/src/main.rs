//! Command-line front end: load a network manifest, run the reference or
//! accelerator path (or both, diffing them), produce static performance
//! reports, calibrate width policies, and generate fixtures.
//!
//! Exit codes: 0 success, 2 validation/configuration error, 3 divergence
//! between the accelerator and reference paths, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spikesim_core::bitplane::{calibrate_policy, DEFAULT_POLICY_CUTOFF};
use spikesim_core::ir::{
    load_manifest, save_manifest, save_manifest_with_stats, CalibrationDoc, NetworkDesc,
    OverflowPolicy, ParallelismConfig, PolicyMode, PoolMode, SewFunction,
};
use spikesim_core::sched::{estimate, PerfConfig};
use spikesim_core::{blob, gen, oracle, pipeline, Error};

const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "spikesim", version, about = "Bit-exact SNN accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a network on the reference path, the accelerator path, or both.
    Run(RunArgs),
    /// Static cycle/bandwidth/throughput estimate of a network.
    Perf(PerfArgs),
    /// Choose saturate-or-shift width policies from representative samples.
    Calibrate(CalibrateArgs),
    /// Generate fixture networks with matching input stimuli.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
    Accel,
    Compare,
}

#[derive(Args)]
struct ParFlags {
    /// Parallelism degrees m,v,n,s (output channels, input channels,
    /// pixels, time steps).
    #[arg(long, value_name = "M,V,N,S", default_value = "16,16,8,4")]
    par: String,
    /// Compute-clock frequency in MHz (the fabric runs at half).
    #[arg(long, default_value_t = 500.0)]
    fast_mhz: f64,
}

impl ParFlags {
    fn parse(&self) -> Result<ParallelismConfig, Error> {
        let parts: Vec<usize> = self
            .par
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Config(format!("--par: {e}")))?;
        if parts.len() != 4 {
            return Err(Error::Config(format!(
                "--par needs four comma-separated values, got {}",
                parts.len()
            )));
        }
        ParallelismConfig::new(parts[0], parts[1], parts[2], parts[3], self.fast_mhz)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Network manifest (JSON plus sibling tensor blobs).
    #[arg(long)]
    manifest: PathBuf,
    /// Input spike/image tensor blob.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Compare)]
    mode: Mode,
    #[command(flatten)]
    par: ParFlags,
    /// Directory for the run report (scores, diff summary, perf rows).
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct PerfArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    par: ParFlags,
    /// File to write the JSON report to.
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// On-chip weight cache capacity in KiB.
    #[arg(long, default_value_t = 128)]
    weight_cache_kib: u64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of per-layer sample blobs (`<layer-name>.bin`), holding
    /// pre-confinement values observed on representative inputs.
    #[arg(long)]
    samples: PathBuf,
    /// Fraction of out-of-range elements above which shifting is chosen.
    #[arg(long, default_value_t = DEFAULT_POLICY_CUTOFF)]
    policy_cutoff: f64,
    /// Directory for the updated manifest (defaults to in-place).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Seed for the generated network and stimulus.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit the seven-convolution demo network instead of a random one.
    #[arg(long)]
    snn7: bool,
    /// Output directory for manifest, blobs and input tensor.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Perf(args) => cmd_perf(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => EXIT_IO,
                _ => EXIT_VALIDATION,
            })
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Error> {
    let par = args.par.parse()?;
    let cfg = PerfConfig::default();
    let net = load_manifest(&args.manifest)?;
    let input = blob::read_spike_tensor(&args.input)?;
    let expected = net.input_spec();
    if (input.t, input.c, input.h, input.w, input.bits()) != expected {
        return Err(Error::Shape(format!(
            "input tensor ({},{},{},{}) @{}b does not match the network input {:?}",
            input.t,
            input.c,
            input.h,
            input.w,
            input.bits(),
            expected
        )));
    }

    let mut report = serde_json::json!({
        "network": net.name,
        "mode": match args.mode { Mode::Oracle => "oracle", Mode::Accel => "accel", Mode::Compare => "compare" },
    });
    let mut exit = ExitCode::SUCCESS;

    match args.mode {
        Mode::Oracle => {
            let run = oracle::run_reference(&net, &input)?;
            println!("scores: {:?}", run.scores);
            report["scores"] = serde_json::json!(run.scores);
        }
        Mode::Accel | Mode::Compare => {
            let run = pipeline::run_network_accel(&net, &input, &par, &cfg)?;
            println!("scores: {:?}", run.scores);
            report["scores"] = serde_json::json!(run.scores);
            report["perf"] = serde_json::to_value(&run.perf)?;
            if matches!(args.mode, Mode::Compare) {
                match &run.divergence {
                    None => {
                        println!("compare: accelerator matches the reference on every element");
                        report["divergence"] = serde_json::Value::Null;
                    }
                    Some(d) => {
                        eprintln!("DIVERGENCE: {d}");
                        report["divergence"] = serde_json::json!({
                            "layer": d.layer, "t": d.t, "c": d.c, "y": d.y, "x": d.x,
                            "reference": d.oracle, "accelerator": d.accel,
                        });
                        exit = ExitCode::from(EXIT_DIVERGENCE);
                    }
                }
            }
        }
    }

    if let Some(dir) = &args.report_out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("run_report.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        println!("report written to {}", path.display());
    }
    Ok(exit)
}

fn cmd_perf(args: PerfArgs) -> Result<ExitCode, Error> {
    let par = args.par.parse()?;
    let cfg = PerfConfig {
        weight_cache_bytes: args.weight_cache_kib * 1024,
        ..PerfConfig::default()
    };
    let net = load_manifest(&args.manifest)?;
    let report = estimate(&net, &par, &cfg)?;

    println!("{}", report.header.statement);
    println!(
        "config: ({},{},{},{}) @ {} MHz fast / {} MHz fabric",
        par.m,
        par.v,
        par.n,
        par.s,
        par.f_fast_mhz,
        par.f_slow_mhz()
    );
    println!(
        "peak: {} GOP/s on {} DSP slices ({} GOP/s/DSP)",
        report.totals.peak_gops,
        report.totals.dsp_count,
        report.totals.gops_per_dsp
    );
    println!(
        "{:<12} {:>14} {:>12} {:>12} {:>14} {:>12}",
        "layer", "compute_cyc", "read_bw_cyc", "write_bw_cyc", "modeled_cyc", "util"
    );
    for row in &report.layers {
        println!(
            "{:<12} {:>14} {:>12} {:>12} {:>14} {:>12.4}",
            row.name,
            row.compute_cycles,
            row.read_bw_cycles,
            row.write_bw_cycles,
            row.modeled_cycles,
            row.utilization
        );
    }
    println!(
        "total: {} cycles, {:.2} us, achieved {:.1} GOP/s, utilization {:.4}",
        report.totals.modeled_cycles,
        report.totals.latency_us,
        report.totals.achieved_gops,
        report.totals.utilization
    );
    if let Some(g) = report.totals.ann_equiv_gops {
        println!("ann-equivalent throughput: {g:.1} GOP/s (manifest FLOP count x T)");
    }

    if let Some(path) = &args.report_out {
        std::fs::write(path, report.to_json()?)?;
        println!("report written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// Layers that confine widened spike values: average pooling and ADD
/// residuals under the 2-bit policies.
fn confining_layers(net: &NetworkDesc) -> Vec<usize> {
    net.layers
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            l.pool == PoolMode::Avg2x2
                || l.residual.as_ref().is_some_and(|r| {
                    r.function == SewFunction::Add
                        && matches!(
                            r.overflow_policy,
                            OverflowPolicy::Saturate2 | OverflowPolicy::Shift2
                        )
                })
        })
        .map(|(i, _)| i)
        .collect()
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<ExitCode, Error> {
    let mut net = load_manifest(&args.manifest)?;
    let mut stats: Vec<(usize, CalibrationDoc)> = Vec::new();
    let mut calibrated = 0usize;

    for i in confining_layers(&net) {
        let sample_path = args.samples.join(format!("{}.bin", net.layers[i].name));
        if !sample_path.exists() {
            println!(
                "layer {} ({}): no samples, policy left as {:?}",
                i, net.layers[i].name, net.layers[i].width_policy
            );
            continue;
        }
        let samples = blob::read_spike_tensor(&sample_path)?;
        let policy = calibrate_policy(&[samples], args.policy_cutoff)?;
        net.layers[i].width_policy = policy.mode;
        if let Some(res) = &mut net.layers[i].residual {
            res.overflow_policy = match policy.mode {
                PolicyMode::Saturate => OverflowPolicy::Saturate2,
                PolicyMode::Shift => OverflowPolicy::Shift2,
            };
        }
        // downstream compensation shift must track the chosen policy
        let shifted = net.layers[i].shifts_output();
        if i + 1 < net.layers.len() {
            net.layers[i + 1].post_shift_left = u8::from(shifted);
        }
        println!(
            "layer {} ({}): {:?} ({} of {} values above 3)",
            i,
            net.layers[i].name,
            policy.mode,
            policy.exceeded_count,
            policy.total_count
        );
        stats.push((
            i,
            CalibrationDoc {
                exceeded_count: policy.exceeded_count,
                total_count: policy.total_count,
                shifted_mass: policy.shifted_mass,
            },
        ));
        calibrated += 1;
    }

    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| args.manifest.parent().unwrap_or(std::path::Path::new(".")).to_path_buf());
    let path = save_manifest_with_stats(&net, &out_dir, &stats)?;
    println!("calibrated {calibrated} layer(s); manifest written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, Error> {
    let (net, input) = if args.snn7 {
        let net = gen::snn7_cifar10();
        let mut lcg = args.seed as u32 | 1;
        let mut next = move || {
            lcg = lcg.wrapping_mul(1664525).wrapping_add(1013904223);
            lcg >> 16
        };
        let input = spikesim_core::ir::SpikeTensor::from_fn(1, 3, 32, 32, 8, |_, _, _, _| {
            (next() % 256) as u8
        })?;
        (net, input)
    } else {
        gen::random_network(args.seed)
    };
    let manifest = save_manifest(&net, &args.out)?;
    let input_path = args.out.join("input.bin");
    blob::write_spike_tensor(&input_path, &input)?;
    println!("manifest: {}", manifest.display());
    println!("input:    {}", input_path.display());
    Ok(ExitCode::SUCCESS)
}
