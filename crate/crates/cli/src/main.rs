use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bnnsynth::cost::{self, TechLibrary};
use bnnsynth::fixtures;
use bnnsynth::lower::{self, LowerMode};
use bnnsynth::model::{load_model, save_model, BnnModel};
use bnnsynth::netlist::{parse_netlist, write_netlist, Netlist};
use bnnsynth::opt::{optimize, Pipeline};
use bnnsynth::reference::{format_stimuli, parse_stimuli, BinaryFrame};
use bnnsynth::report;
use bnnsynth::sim::{self, Strategy};

/// Compile binarized neural networks to combinational gate netlists.
#[derive(Parser)]
#[command(name = "bnnsynth", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lower a model to a netlist and optimize it.
    Compile {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        opt: OptArgs,
        /// Netlist output file.
        #[arg(short, long)]
        output: PathBuf,
        /// Write pass reports here instead of standard output.
        #[arg(long)]
        pass_report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Analytical compute, footprint and area table for a model.
    Estimate {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Gate counts and measured area of a netlist.
    Stats {
        #[arg(long)]
        netlist: PathBuf,
        /// Model used to compute GE/Op.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate a netlist on a stimuli file.
    Sim {
        #[arg(long)]
        netlist: PathBuf,
        /// One bit string per line.
        #[arg(long)]
        stimuli: PathBuf,
        /// Treat stimuli as image frames and drive parameter inputs from
        /// this model (requires --mode).
        #[arg(long, requires = "mode")]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Write the toggle profile here.
        #[arg(long)]
        toggles: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check a netlist against the reference interpreter.
    Verify {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Enumerate every image input instead of sampling.
        #[arg(long, conflicts_with_all = ["samples", "seed"])]
        exhaustive: bool,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Estimates plus measured area of both lowering modes.
    Report {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        opt: OptArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Estimated area growth across the bundled topologies.
    Extrapolate {
        #[arg(long, default_value_t = fixtures::FIXTURE_SEED)]
        seed: u64,
        #[command(flatten)]
        tech: TechArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write a bundled model with seeded random parameters.
    Fixture {
        /// bnn16, bnn32, bnn64, micro or single.
        name: String,
        #[arg(long, default_value_t = fixtures::FIXTURE_SEED)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArg {
    /// Model JSON file.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct TechArg {
    /// Technology library; the bundled defaults are used when unset.
    #[arg(long, env = "BNNSYNTH_TECH")]
    tech: Option<PathBuf>,
}

#[derive(Args)]
struct OutArgs {
    #[command(flatten)]
    tech: TechArg,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output file; standard output when unset.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OptArgs {
    /// Optimization level.
    #[arg(long, default_value = "O2", conflicts_with = "passes")]
    opt: String,
    /// Comma separated pass list, e.g. const_fold,cse,dce.
    #[arg(long)]
    passes: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fixed,
    Variable,
}

impl From<Mode> for LowerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Fixed => LowerMode::Fixed,
            Mode::Variable => LowerMode::Variable,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// An error message with its exit code.
struct Failure(u8, String);

type Res<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(2, msg.into())
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: Option<&Path>, text: &str) -> Res<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

fn model(path: &Path) -> Res<BnnModel> {
    load_model(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn netlist(path: &Path) -> Res<Netlist> {
    parse_netlist(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn tech(arg: &TechArg) -> Res<TechLibrary> {
    match &arg.tech {
        Some(p) => TechLibrary::load(p).map_err(|e| usage(e.to_string())),
        None => Ok(TechLibrary::default()),
    }
}

fn pipeline(o: &OptArgs) -> Res<Pipeline> {
    match &o.passes {
        Some(list) => Pipeline::from_list(list),
        None => Pipeline::from_level(&o.opt),
    }
    .map_err(|e| usage(e.to_string()))
}

fn run(cli: Cli) -> Res<()> {
    match cli.cmd {
        Cmd::Compile {
            model: m,
            mode,
            opt,
            output,
            pass_report,
            format,
        } => {
            let m = model(&m.model)?;
            let p = pipeline(&opt)?;
            let raw = lower::lower_model(&m, mode.into()).map_err(|e| usage(e.to_string()))?;
            let (n, reports) = optimize(&raw, &p);
            drop(raw);
            write(Some(&output), &write_netlist(&n))?;
            let text = match format {
                Format::Text => reports
                    .iter()
                    .map(|r| {
                        format!(
                            "{:<10} gates {} -> {}, removed {}, merged {}\n",
                            r.pass.name(),
                            r.before.total(),
                            r.after.total(),
                            r.nodes_removed,
                            r.nodes_merged
                        )
                    })
                    .collect::<String>(),
                Format::Json => json_text(&serde_json::json!({
                    "format_version": report::FORMAT_VERSION,
                    "pipeline": p.label(),
                    "passes": reports.iter().map(|r| serde_json::json!({
                        "pass": r.pass.name(),
                        "gates_before": r.before.total(),
                        "gates_after": r.after.total(),
                        "nodes_removed": r.nodes_removed,
                        "nodes_merged": r.nodes_merged,
                    })).collect::<Vec<_>>(),
                })),
            };
            write(pass_report.as_deref(), &text)
        }
        Cmd::Estimate { model: m, out } => {
            let m = model(&m.model)?;
            let r = report::estimate_report(&m, &tech(&out.tech)?);
            emit_report(&r, &out)
        }
        Cmd::Report { model: m, opt, out } => {
            let m = model(&m.model)?;
            let r = report::full_report(&m, &tech(&out.tech)?, &pipeline(&opt)?)
                .map_err(|e| usage(e.to_string()))?;
            emit_report(&r, &out)
        }
        Cmd::Stats {
            netlist: np,
            model: mp,
            out,
        } => {
            let n = netlist(&np)?;
            let t = tech(&out.tech)?;
            let area = cost::measured_area(&n, &t).map_err(|e| usage(e.to_string()))?;
            let ops: Option<u64> = match &mp {
                Some(p) => Some(cost::op_count(&model(p)?).iter().sum()),
                None => None,
            };
            let s = n.stats();
            let text = match out.format {
                Format::Text => {
                    let mut t = format!(
                        "nodes {}\ninputs {}\noutputs {}\nconstants {}\n",
                        n.len(),
                        n.num_inputs(),
                        n.outputs().len(),
                        s.constants()
                    );
                    for (g, c) in s.logic_counts() {
                        t += &format!("{g} {c}\n");
                    }
                    t += &format!("gates {}\n", s.total());
                    t += &format!("area_um2 {:.3}\narea_mm2 {:.6}\nge {:.1}\n", area.um2, area.mm2(), area.ge);
                    if let Some(ops) = ops {
                        t += &format!("ops {ops}\nge_per_op {:.4}\n", area.ge_per_op(ops));
                    }
                    t
                }
                Format::Json => json_text(&serde_json::json!({
                    "format_version": report::FORMAT_VERSION,
                    "nodes": n.len(),
                    "inputs": n.num_inputs(),
                    "outputs": n.outputs().len(),
                    "constants": s.constants(),
                    "gates": s.logic_counts()
                        .map(|(g, c)| (g.name().to_string(), serde_json::json!(c)))
                        .collect::<serde_json::Map<_, _>>(),
                    "total": s.total(),
                    "area_um2": area.um2,
                    "area_ge": area.ge,
                    "ops": ops,
                    "ge_per_op": ops.map(|o| area.ge_per_op(o)),
                })),
            };
            write(out.output.as_deref(), &text)
        }
        Cmd::Sim {
            netlist: np,
            stimuli,
            model: mp,
            mode,
            toggles,
            out,
        } => {
            let n = netlist(&np)?;
            let text = read(&stimuli)?;
            let vectors = match (&mp, mode) {
                (Some(p), Some(mode)) => {
                    let m = model(p)?;
                    let frames = parse_stimuli(&text, m.input.len())
                        .map_err(|e| usage(format!("{}: {e}", stimuli.display())))?;
                    frames
                        .into_iter()
                        .map(|bits| {
                            let f = BinaryFrame { shape: m.input, bits };
                            lower::input_vector(&m, mode.into(), &f)
                        })
                        .collect()
                }
                _ => parse_stimuli(&text, n.num_inputs())
                    .map_err(|e| usage(format!("{}: {e}", stimuli.display())))?,
            };
            let outputs = sim::batch_evaluate(&n, &vectors).map_err(|e| usage(e.to_string()))?;
            write(out.output.as_deref(), &format_stimuli(&outputs))?;
            if let Some(tp) = toggles {
                let p = sim::toggle_profile(&n, &vectors).map_err(|e| usage(e.to_string()))?;
                let text = match out.format {
                    Format::Text => p.to_text(),
                    Format::Json => json_text(&p.to_json()),
                };
                write(Some(&tp), &text)?;
            }
            Ok(())
        }
        Cmd::Verify {
            model: mp,
            netlist: np,
            mode,
            exhaustive,
            samples,
            seed,
        } => {
            let m = model(&mp.model)?;
            let n = netlist(&np)?;
            let strategy = if exhaustive {
                Strategy::Exhaustive
            } else {
                Strategy::Random {
                    count: samples,
                    seed,
                }
            };
            let r = sim::check_equivalence(&n, &m, mode.into(), strategy)
                .map_err(|e| usage(e.to_string()))?;
            match &r.first {
                None => {
                    println!("PASS {} vectors", r.vectors);
                    Ok(())
                }
                Some(cx) => {
                    println!("FAIL {} of {} vectors mismatch", r.mismatches, r.vectors);
                    println!("first mismatch at vector {}", cx.index);
                    println!("input {}", cx.frame.to_line());
                    println!("expected {:?}", cx.expected);
                    println!("got {:?}", cx.got);
                    Err(Failure(1, "verification failed".into()))
                }
            }
        }
        Cmd::Extrapolate { seed, tech: t, output } => {
            let models: Vec<BnnModel> = ["bnn16", "bnn32", "bnn64"]
                .iter()
                .map(|n| fixtures::by_name(n, seed).expect("bundled"))
                .collect();
            write(output.as_deref(), &report::extrapolation_text(&models, &tech(&t)?))
        }
        Cmd::Fixture { name, seed, output } => {
            let m = fixtures::by_name(&name, seed)
                .ok_or_else(|| usage(format!("unknown fixture {name:?}")))?;
            write(output.as_deref(), &save_model(&m))
        }
    }
}

fn emit_report(r: &report::Report, out: &OutArgs) -> Res<()> {
    let text = match out.format {
        Format::Text => r.to_text(),
        Format::Json => json_text(&r.to_json()),
    };
    write(out.output.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("bnnsynth: {msg}");
            ExitCode::from(code)
        }
    }
}
