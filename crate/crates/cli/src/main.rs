//! Command-line front end: generate and validate architectures and assays,
//! run the synthesis pipeline, compare runs, and estimate costs and
//! wire-routing layers.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dmfb_core::arch::{self, ArchitectureSpec};
use dmfb_core::assay::{self, BioassayGraph, DurationTable};
use dmfb_core::cost::{total_cost, CostParams};
use dmfb_core::report::{compare, run, RunReport};
use dmfb_core::wire::{check_solution, escape_route, layer_sweep, problem_from_arch};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "dmfb",
    version,
    about = "Pin-constrained DMFB synthesis toolchain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Architecture generation and validation.
    Arch {
        #[command(subcommand)]
        cmd: ArchCmd,
    },
    /// Assay generation and validation.
    Assay {
        #[command(subcommand)]
        cmd: AssayCmd,
    },
    /// Run the full synthesis pipeline and emit a report.
    Run(RunArgs),
    /// Compare two or more run reports side by side.
    Compare(CompareArgs),
    /// Manufacturing cost model.
    Cost(CostArgs),
    /// Escape wire-routing and the metal-layer sweep.
    Wireroute(WirerouteArgs),
}

#[derive(Subcommand)]
enum ArchCmd {
    /// Generate an architecture preset and print or save it as JSON.
    Gen {
        /// Preset: egfpc_4_8, egfpc_6_12, efppc_4, efppc_8,
        /// or egfpc:M,S / efppc:M,S for custom counts.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        pitch_mm: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print the pin-assignment table.
        #[arg(long)]
        pin_table: bool,
    },
    /// Validate an architecture file; exits non-zero on violations.
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum AssayCmd {
    /// Generate a benchmark assay and print or save it as JSON.
    Gen {
        /// pcr | invitro_1..5 | protein_split_1..3, or
        /// invitro:S,R / protein:L for explicit parameters.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an assay file; exits non-zero on violations.
    Validate { file: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Architecture file.
    #[arg(long, conflicts_with = "preset")]
    arch: Option<PathBuf>,
    /// Architecture preset name (see `arch gen`).
    #[arg(long)]
    preset: Option<String>,
    /// Assay file.
    #[arg(long, conflicts_with = "assay_preset")]
    assay: Option<PathBuf>,
    /// Assay preset name (see `assay gen`).
    #[arg(long = "assay-preset")]
    assay_preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the report and stage exports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: String,
    /// Timestep length in seconds.
    #[arg(long, default_value_t = 0.01)]
    timestep_seconds: f64,
}

#[derive(Args)]
struct CompareArgs {
    /// Run-report JSON files (at least two).
    reports: Vec<PathBuf>,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    /// Pin count, or derive it from --arch/--preset.
    #[arg(long)]
    pins: Option<u32>,
    #[arg(long)]
    arch: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Array dimensions as WxH in millimeters, e.g. 16x11.
    #[arg(long)]
    array: Option<String>,
    #[arg(long, default_value_t = 2)]
    layers: u32,
    #[arg(long, default_value_t = 1.0)]
    pitch: f64,
    /// Override the pin count (for reproducing published rows).
    #[arg(long = "pin-override")]
    pin_override: Option<u32>,
    /// Name used for the board-price fixture lookup.
    #[arg(long)]
    design_name: Option<String>,
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct WirerouteArgs {
    #[arg(long, conflicts_with = "preset")]
    arch: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Single orthogonal capacity to route at.
    #[arg(long, default_value_t = 2)]
    capacity: u32,
    /// Sweep capacities 2..=8 and print the layer counts.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn arch_preset(name: &str, pitch: f64) -> Result<ArchitectureSpec> {
    let all = |n: u32| (0..n).collect::<BTreeSet<_>>();
    let spec = match name {
        "egfpc" | "egfpc_4_8" => arch::build_egfpc(4, 8, pitch, &all(8))?,
        "egfpc_6_12" => arch::build_egfpc(6, 12, pitch, &all(12))?,
        "efppc_4" => arch::build_efppc(4, 6, pitch)?,
        "efppc_8" => arch::build_efppc(8, 14, pitch)?,
        other => {
            if let Some(rest) = other.strip_prefix("egfpc:") {
                let (m, s) = parse_pair(rest)?;
                arch::build_egfpc(m, s, pitch, &all(s))?
            } else if let Some(rest) = other.strip_prefix("efppc:") {
                let (m, s) = parse_pair(rest)?;
                arch::build_efppc(m, s, pitch)?
            } else {
                bail!("unknown architecture preset `{other}`");
            }
        }
    };
    Ok(spec)
}

fn parse_pair(s: &str) -> Result<(u32, u32)> {
    let mut it = s.split(',');
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((a.trim().parse()?, b.trim().parse()?)),
        _ => bail!("expected `M,S`"),
    }
}

fn assay_preset(kind: &str) -> Result<BioassayGraph> {
    if let Some(g) = assay::preset(kind) {
        return Ok(g);
    }
    if let Some(rest) = kind.strip_prefix("invitro:") {
        let (s, r) = parse_pair(rest)?;
        return Ok(assay::gen_invitro(s, r));
    }
    if let Some(rest) = kind.strip_prefix("protein:") {
        return Ok(assay::gen_protein_split(rest.trim().parse()?));
    }
    bail!("unknown assay preset `{kind}`")
}

fn load_arch(
    args_arch: &Option<PathBuf>,
    args_preset: &Option<String>,
    pitch: f64,
) -> Result<ArchitectureSpec> {
    match (args_arch, args_preset) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(ArchitectureSpec::from_json(&text)?)
        }
        (None, Some(p)) => arch_preset(p, pitch),
        (None, None) => bail!("pass --arch FILE or --preset NAME"),
    }
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(path, content)?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{content}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Arch { cmd } => match cmd {
            ArchCmd::Gen {
                preset,
                pitch_mm,
                out,
                pin_table,
            } => {
                let spec = arch_preset(&preset, pitch_mm.unwrap_or(1.0))?;
                if pin_table {
                    println!("{}", arch::pin_table(&spec));
                }
                write_or_print(&out, &spec.to_json())?;
            }
            ArchCmd::Validate { file } => {
                let text = fs::read_to_string(&file)?;
                let spec = ArchitectureSpec::from_json(&text)?;
                let violations = arch::validate(&spec);
                if violations.is_empty() {
                    println!(
                        "{}: valid ({} pins, {} electrodes)",
                        spec.design_name,
                        spec.pin_count,
                        spec.electrode_count()
                    );
                } else {
                    for v in &violations {
                        eprintln!("violation: {v}");
                    }
                    bail!("{} violations", violations.len());
                }
            }
        },
        Command::Assay { cmd } => match cmd {
            AssayCmd::Gen { kind, out } => {
                let g = assay_preset(&kind)?;
                write_or_print(&out, &g.to_json())?;
            }
            AssayCmd::Validate { file } => {
                let text = fs::read_to_string(&file)?;
                let g = BioassayGraph::from_json(&text)?;
                println!("valid: {} nodes, {} edges", g.nodes.len(), g.edges.len());
            }
        },
        Command::Run(args) => {
            let spec = load_arch(&args.arch, &args.preset, 1.0)?;
            let (dag, assay_name) = match (&args.assay, &args.assay_preset) {
                (Some(path), _) => {
                    let text = fs::read_to_string(path)?;
                    (
                        BioassayGraph::from_json(&text)?,
                        path.file_stem()
                            .and_then(|s| s.to_str())
                            .unwrap_or("assay")
                            .to_string(),
                    )
                }
                (None, Some(p)) => (assay_preset(p)?, p.clone()),
                (None, None) => bail!("pass --assay FILE or --assay-preset NAME"),
            };
            let durations = DurationTable {
                timestep_seconds: args.timestep_seconds,
                ..DurationTable::default()
            };
            let artifacts =
                run(&spec, &dag, &assay_name, &durations, args.seed).map_err(|e| anyhow!("{e}"))?;
            let report = &artifacts.report;
            if let Some(dir) = &args.out {
                fs::create_dir_all(dir)?;
                let w = |name: &str, content: String| -> Result<()> {
                    fs::write(Path::new(dir).join(name), content)?;
                    Ok(())
                };
                w("report.json", report.to_json())?;
                w("schedule.csv", artifacts.schedule.to_csv(&dag))?;
                w("binding.csv", artifacts.binding.to_csv())?;
                w("routes.csv", artifacts.plan.to_csv())?;
                w("route_events.csv", artifacts.plan.events_csv())?;
                w("actuation.csv", artifacts.actuation.to_csv())?;
                eprintln!("wrote pipeline artifacts to {}", dir.display());
            }
            match args.format.as_str() {
                "json" => println!("{}", report.to_json()),
                "text" => println!(
                    "{} / {}: scheduling {:.2}s + routing {:.2}s = {:.2}s, {} droplets, {} layers, cost ${:.2}, violations {}",
                    report.design_name,
                    report.assay_name,
                    report.scheduling_seconds,
                    report.routing_seconds,
                    report.total_seconds,
                    report.droplets,
                    report.wireroute_layers,
                    report.cost.total_cost_cents as f64 / 100.0,
                    report.violations.total()
                ),
                other => bail!("unknown format `{other}`"),
            }
            if report.violations.total() > 0 {
                bail!("{} violations", report.violations.total());
            }
        }
        Command::Compare(args) => {
            if args.reports.len() < 2 {
                bail!("compare needs at least two report files");
            }
            let mut reports: Vec<RunReport> = Vec::new();
            for path in &args.reports {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let value: serde_json::Value = serde_json::from_str(&text)?;
                let get = |k: &str| -> Result<f64> {
                    value
                        .get(k)
                        .and_then(|v| v.as_f64())
                        .ok_or_else(|| anyhow!("{}: missing {k}", path.display()))
                };
                let field = |k: &str| {
                    value
                        .get(k)
                        .and_then(|v| v.as_str())
                        .unwrap_or("unknown")
                        .to_string()
                };
                reports.push(RunReport::fixture(
                    &field("design_name"),
                    &field("assay_name"),
                    get("scheduling_seconds")?,
                    get("routing_seconds")?,
                ));
            }
            let comparison = compare(&reports).map_err(|e| anyhow!("{e}"))?;
            let content = match args.format.as_str() {
                "csv" => comparison.to_csv(),
                _ => comparison.to_text(),
            };
            write_or_print(&args.out, &content)?;
        }
        Command::Cost(args) => {
            let (pins, array_mm, name, pitch) = if args.arch.is_some() || args.preset.is_some() {
                let spec = load_arch(&args.arch, &args.preset, args.pitch)?;
                (
                    spec.pin_count as u32,
                    (spec.array_width_mm(), spec.array_height_mm()),
                    spec.design_name.clone(),
                    spec.pitch_mm,
                )
            } else {
                let pins = args
                    .pins
                    .ok_or_else(|| anyhow!("pass --pins or --arch/--preset"))?;
                let array = args
                    .array
                    .as_ref()
                    .ok_or_else(|| anyhow!("pass --array WxH (mm)"))?;
                let (w, h) = array
                    .split_once('x')
                    .ok_or_else(|| anyhow!("--array expects WxH"))?;
                (
                    pins,
                    (w.trim().parse()?, h.trim().parse()?),
                    "custom".to_string(),
                    args.pitch,
                )
            };
            let pins = args.pin_override.unwrap_or(pins);
            let name = args.design_name.clone().unwrap_or(name);
            let report = total_cost(
                &name,
                pins,
                array_mm.0,
                array_mm.1,
                args.layers,
                pitch,
                &CostParams::default(),
            )?;
            match args.format.as_str() {
                "text" => {
                    println!("{}", dmfb_core::cost::CostReport::table_header());
                    println!("{}", report.table_row());
                }
                _ => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Wireroute(args) => {
            let spec = load_arch(&args.arch, &args.preset, 1.0)?;
            if args.sweep {
                let sweep = layer_sweep(&spec, 2..=8, args.seed)?;
                println!("design {}", spec.design_name);
                println!("capacity  layers");
                for (cap, layers) in sweep {
                    println!("{cap:>8}  {layers:>6}");
                }
            } else {
                let problem = problem_from_arch(&spec, args.capacity);
                let solution = escape_route(&problem, args.seed)?;
                let breaches = check_solution(&problem, &solution);
                if !breaches.is_empty() {
                    bail!(
                        "wire routing produced {} invariant breaches",
                        breaches.len()
                    );
                }
                println!(
                    "{}: {} nets routed on {} layers at capacity {}",
                    spec.design_name,
                    problem.nets.len(),
                    solution.layer_count(),
                    args.capacity
                );
                if let Some(out) = &args.out {
                    if let Some(parent) = out.parent() {
                        if !parent.as_os_str().is_empty() {
                            fs::create_dir_all(parent)?;
                        }
                    }
                    fs::write(out, solution.to_csv())?;
                    eprintln!("wrote {}", out.display());
                }
            }
        }
    }
    Ok(())
}
