use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use resctl_cli::artifacts::{create, ensure_dir, write_json, write_trajectory};
use resctl_cli::reproduce::{reproduce, Figure, Options};
use resctl_cli::resolve_config;
use resctl_cli::sweep::{sweep, write_rows, Axis};
use resctl_core::experiment::{resolve_target, run_experiment, EmulationSpec};
use resctl_core::fpga_emu::EmulationConfig;
use resctl_core::plants::simulate_free;
use resctl_core::{
    closed_loop_run, emulate_control_run, quantize, DeepController, ExperimentConfig, FixedConfig, RunStatus, TanhLut,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "resctl", version, about = "Reservoir-computing control of nonlinear plants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config (.toml or .json); overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment.
    #[arg(long, default_value = "mackey-glass-uss")]
    preset: String,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// List presets, or print one as TOML.
    Presets { name: Option<String> },
    /// Train every layer of one run and save the controller.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run index; selects the seed stream.
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long, default_value = "out/train")]
        out: PathBuf,
    },
    /// Close the loop with a saved controller on a freshly burnt-in plant.
    /// Reservoirs resume from the states saved with them.
    Control {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Controller JSON written by `train`.
        #[arg(long)]
        controller: PathBuf,
        /// Closed-loop duration; defaults to the end of the error window.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = "out/control")]
        out: PathBuf,
    },
    /// Cartesian sweep over config fields, one CSV row per point and run.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `dotted.path=v1,v2,...`; repeatable.
        #[arg(long = "axis")]
        axes: Vec<Axis>,
        /// Runs per point.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value = "out/sweep.csv")]
        out: PathBuf,
    },
    /// Run a named experiment batch and write its tables and summaries.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train one run, then replay it through the fixed-point emulator.
    FpgaEmulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        run: usize,
        /// Table size as a power of two.
        #[arg(long)]
        lut_bits: Option<u32>,
        /// Power-of-two prescaling of the reservoir inputs.
        #[arg(long)]
        input_shift: Option<i32>,
        /// Also write the tanh table as one hex word per line.
        #[arg(long)]
        dump_lut: Option<PathBuf>,
        #[arg(long, default_value = "out/fpga")]
        out: PathBuf,
    },
}

fn status_code(status: &RunStatus) -> ExitCode {
    match status {
        RunStatus::Completed => ExitCode::SUCCESS,
        _ => ExitCode::from(2),
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig> {
    resolve_config(args.config.as_deref(), &args.preset, args.seed)
}

/// Emulator settings from the config, or a converter-free default clocked
/// at the integration step.
fn emulation_for(cfg: &ExperimentConfig, lut_bits: Option<u32>, input_shift: Option<i32>) -> EmulationSpec {
    let mut spec = cfg.emulation.clone().unwrap_or_else(|| EmulationSpec {
        fixed: FixedConfig::circuit().with_dt(cfg.h),
        clock: cfg.h,
        adc: None,
        dac: None,
    });
    if let Some(b) = lut_bits {
        spec.fixed.lut_bits = b;
    }
    if let Some(s) = input_shift {
        spec.fixed.input_shift = s;
    }
    spec
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Presets { name: None } => {
            for n in ExperimentConfig::preset_names() {
                println!("{n}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { name: Some(n) } => {
            let Some(cfg) = ExperimentConfig::preset(&n) else { bail!("unknown preset {n:?}") };
            print!("{}", cfg.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { cfg, run, out } => {
            let cfg = load(&cfg)?;
            ensure_dir(&out)?;
            let output = run_experiment(&cfg, run)?;
            write_json(&out.join("config.json"), &cfg)?;
            write_json(&out.join("controller.json"), &output.controller)?;
            write_json(&out.join("summary.json"), &output.summary)?;
            if let Some(r) = &output.last_run {
                write_trajectory(&out.join("trajectory.csv"), r, 1)?;
            }
            println!("{}", serde_json::to_string_pretty(&output.summary)?);
            Ok(status_code(&output.summary.status))
        }
        Command::Control { cfg, controller, duration, out } => {
            let cfg = load(&cfg)?;
            let text =
                std::fs::read_to_string(&controller).with_context(|| format!("reading {}", controller.display()))?;
            let mut ctrl: DeepController = serde_json::from_str(&text)?;
            let mut plant = cfg.plant.build()?;
            let target = resolve_target(&cfg, &plant)?;
            simulate_free(&mut plant, cfg.burn_in, cfg.h)?;
            let (a, b) = cfg.error_window();
            let duration = duration.unwrap_or(b);
            let t_on = resctl_core::Plant::time(&plant);
            let result = closed_loop_run(&mut plant, &mut ctrl, &target, duration, cfg.h);
            ensure_dir(&out)?;
            let report = match &result {
                Ok(r) => json!({
                    "status": "completed",
                    "layers": ctrl.len(),
                    "duration": duration,
                    "control_error": r.control_error(t_on + a, (duration - a).min(b - a)).ok(),
                    "control_rmse": r.control_rmse(t_on + a, (duration - a).min(b - a)).ok(),
                }),
                Err(e) => json!({ "status": "diverged", "message": e.to_string() }),
            };
            write_json(&out.join("control.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            match result {
                Ok(r) => {
                    write_trajectory(&out.join("trajectory.csv"), &r, 1)?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(_) => Ok(ExitCode::from(2)),
            }
        }
        Command::Sweep { cfg, axes, runs, out } => {
            let mut cfg = load(&cfg)?;
            if let Some(r) = runs {
                cfg.runs = r;
            }
            let rows = sweep(&cfg, &axes)?;
            write_rows(create(&out)?, &axes, &rows)?;
            let sidecar = out.with_extension("config.json");
            let axes_json: Vec<_> = axes.iter().map(|a| json!({ "path": a.path, "values": a.values })).collect();
            write_json(&sidecar, &json!({ "base": cfg, "axes": axes_json }))?;
            let ok = rows.iter().filter(|r| r.status == "completed").count();
            println!("{} rows ({ok} completed) -> {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce { figure, seed, runs, out } => {
            ensure_dir(&out)?;
            for f in reproduce(figure, &Options { seed, runs }, &out)? {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::FpgaEmulate { cfg, run, lut_bits, input_shift, dump_lut, out } => {
            let mut cfg = load(&cfg)?;
            let spec = emulation_for(&cfg, lut_bits, input_shift);
            if let Some(path) = &dump_lut {
                let lut = TanhLut::new(spec.fixed.qformat, spec.fixed.lut_bits, spec.fixed.lut_x_max)?;
                let mut w = create(path)?;
                lut.dump_hex(&mut w)?;
                std::io::Write::flush(&mut w)?;
            }
            // the experiment pipeline then scores every layer on both paths
            cfg.emulation = Some(spec.clone());
            let output = run_experiment(&cfg, run)?;
            let mut plant = cfg.plant.build()?;
            let target = resolve_target(&cfg, &plant)?;
            simulate_free(&mut plant, cfg.burn_in, cfg.h)?;
            let mut fixed = Vec::new();
            let mut reports = Vec::new();
            for layer in &output.controller.layers {
                let (f, r) = quantize(layer, &spec.fixed)?;
                fixed.push(f);
                reports.push(r);
            }
            let emu = EmulationConfig {
                clock: spec.clock,
                h: cfg.h,
                delta: cfg.timescales.delta,
                adc: spec.adc,
                dac: spec.dac,
            };
            let (_, b) = cfg.error_window();
            ensure_dir(&out)?;
            if let Ok(r) = emulate_control_run(&mut plant, &mut fixed, &target, b, &emu) {
                write_trajectory(&out.join("emulated_trajectory.csv"), &r, 1)?;
            }
            let report = json!({
                "emulation": spec,
                "summary": output.summary,
                "quantization": reports,
                "saturations": fixed.iter().map(|f| f.saturations()).collect::<Vec<_>>(),
            });
            write_json(&out.join("fpga.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report["summary"])?);
            Ok(status_code(&output.summary.status))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
