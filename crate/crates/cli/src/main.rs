use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use opcirc::circuit::validate;
use opcirc::dsl::{emit_dot, format_number, format_ratio, format_value, parse, Circuit, RunOptions};
use opcirc::gadgets::{entanglement_swap_demo, teleportation_demo, DemoVerdict};
use opcirc::physicality::RATIO_TOL;
use opcirc::reconstruction::{filter_nonflatten_check, k_multiplicative_search, nonflatten_suite, prelude_filter, prelude_set, signature_vector, span_report, SpanReport};
use opcirc::{ContractionOrder, Error};

#[derive(Parser)]
#[command(name = "opcirc", version, about = "Evaluate, check and render operator circuits")]
struct Cli {
    /// Relative tolerance for probability ratios.
    #[arg(long, global = true, default_value_t = RATIO_TOL)]
    tol: f64,
    /// Seed for randomised demos.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Contraction order (automatic when omitted).
    #[arg(long, global = true, value_enum)]
    order: Option<Order>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Greedy,
    Optimal,
    Naive,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the directives of a document (or evaluate it if it has none).
    Eval { file: PathBuf },
    /// Parse, resolve and validate a document.
    Check { file: PathBuf },
    /// Compare two operators of a document.
    Ratio { file: PathBuf, a: String, b: String },
    /// Run a built-in demonstration.
    Demo {
        #[arg(value_enum)]
        which: Demo,
    },
    /// Write the dot diagram of a document.
    Render {
        file: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    Teleport,
    Swap,
    Prelude,
    Kn,
    Signature,
}

/// Exit 1 for validation failures, 2 for I/O and parse errors.
enum Failure {
    Validation(Vec<String>),
    Input(Vec<String>),
}

impl Failure {
    fn from_engine(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Syntax { .. } | Error::Format { .. } | Error::HermiticityViolation { .. } => Failure::Input(vec![e.to_string()]),
            other => Failure::Validation(vec![other.to_string()]),
        }
    }
}

type Outcome = Result<(), Failure>;

fn load(file: &Path) -> Result<Circuit, Failure> {
    let shown = file.display();
    let text = std::fs::read_to_string(file).map_err(|e| Failure::Input(vec![format!("{shown}: {e}")]))?;
    let doc = parse(&text).map_err(|ds| Failure::Input(ds.iter().map(|d| format!("{shown}:{d}")).collect()))?;
    let base = file.parent().unwrap_or(Path::new("."));
    doc.build(base).map_err(|ds| {
        let lines = ds.iter().map(|d| format!("{shown}:{d}")).collect();
        if ds.iter().any(|d| matches!(d, Error::Io { .. } | Error::Format { .. } | Error::HermiticityViolation { .. })) {
            Failure::Input(lines)
        } else {
            Failure::Validation(lines)
        }
    })
}

fn options(cli: &Cli, file: &Path) -> RunOptions {
    let order = match cli.order {
        None => ContractionOrder::Auto,
        Some(Order::Greedy) => ContractionOrder::Greedy,
        Some(Order::Optimal) => ContractionOrder::Optimal,
        Some(Order::Naive) => ContractionOrder::Naive,
    };
    RunOptions { order, tol: cli.tol, base_dir: file.parent().unwrap_or(Path::new(".")).to_path_buf() }
}

fn eval(cli: &Cli, file: &Path) -> Outcome {
    let c = load(file)?;
    let opts = options(cli, file);
    if c.directives.is_empty() {
        println!("{}", format_value(c.eval(opts.order).map_err(Failure::from_engine)?));
        return Ok(());
    }
    for (_, d) in &c.directives {
        println!("{}", c.execute(d, &opts).map_err(Failure::from_engine)?);
    }
    Ok(())
}

fn check(file: &Path) -> Outcome {
    let c = load(file)?;
    let report = validate(&c.graph);
    for v in &report.violations {
        println!("violation: {v}");
    }
    let ports = |ps: &[(opcirc::PortRef, opcirc::SystemType)]| ps.iter().map(|(p, t)| format!("{}.{} {t}", p.node, p.port)).collect::<Vec<_>>().join(", ");
    println!("nodes: {}, wires: {}", c.graph.node_count(), c.graph.wires().len());
    if report.is_circuit {
        println!("closed circuit");
    } else {
        println!("open inputs: [{}]", ports(&report.open_inputs));
        println!("open outputs: [{}]", ports(&report.open_outputs));
    }
    if report.is_valid() {
        println!("valid");
        Ok(())
    } else {
        Err(Failure::Validation(vec![format!("{} violation(s)", report.violations.len())]))
    }
}

fn ratio(cli: &Cli, file: &Path, a: &str, b: &str) -> Outcome {
    let c = load(file)?;
    println!("{}", format_ratio(&c.ratio(a, b, cli.tol).map_err(Failure::from_engine)?));
    Ok(())
}

fn render(file: &Path, out: &Path) -> Outcome {
    let c = load(file)?;
    std::fs::write(out, emit_dot(&c.graph)).map_err(|e| Failure::Input(vec![format!("{}: {e}", out.display())]))
}

fn print_verdict(name: &str, v: &DemoVerdict) -> Outcome {
    println!("{name}: {}", if v.verdict { "PASS" } else { "FAIL" });
    println!("  equatorial angle: {}", format_number(v.b_angle));
    match v.ratio {
        Some(k) => println!("  ratio to reference: {}", format_number(k)),
        None => println!("  ratio to reference: ill-conditioned"),
    }
    println!("  deviation from reference/8: {:e}", v.deviation);
    if v.verdict {
        Ok(())
    } else {
        Err(Failure::Validation(vec![format!("{name} demo did not reproduce reference/8")]))
    }
}

fn span_line(name: &str, r: &SpanReport) {
    let kind = if r.nonflat { "nonflat" } else { "flat" };
    println!("  {name:<6} states {:>2}  support {}  span {:>2}  {kind}", r.input_count, r.support_dim, r.span_dim);
}

fn demo(cli: &Cli, which: Demo) -> Outcome {
    let engine = Failure::from_engine;
    match which {
        Demo::Teleport => print_verdict("teleportation", &teleportation_demo().map_err(engine)?.1),
        Demo::Swap => print_verdict("entanglement swapping", &entanglement_swap_demo().map_err(engine)?.1),
        Demo::Prelude => {
            println!("sets on a 4-level system:");
            for s in ['A', 'B', 'C'] {
                span_line(&s.to_string(), &span_report(&prelude_set(s).map_err(engine)?).map_err(engine)?);
            }
            for (s, f) in [('A', 'F'), ('C', 'G')] {
                let check = filter_nonflatten_check(&prelude_set(s).map_err(engine)?, &prelude_filter(f).map_err(engine)?).map_err(engine)?;
                match check.after {
                    Some(r) => span_line(&format!("{s}|{f}"), &r),
                    None => println!("  {s}|{f}   all states blocked"),
                }
            }
            let suite = nonflatten_suite(&[3, 4, 5], 5, 5, cli.seed).map_err(engine)?;
            println!("random non-flat sets through random filters (seed {}): {}/{} stay nonflat", cli.seed, suite.passed, suite.cases);
            if suite.passed == suite.cases {
                Ok(())
            } else {
                Err(Failure::Validation(vec!["a filter flattened a non-flat set".into()]))
            }
        }
        Demo::Kn => {
            let r = k_multiplicative_search(30, 3).map_err(engine)?;
            println!("monotone multiplicative K with K(p) = p^r, r <= {}, on N <= {}:", r.max_r, r.range_n);
            for a in &r.surviving_functions {
                let rs: Vec<u32> = a.iter().map(|&(_, e)| e).collect();
                let uniform = rs.iter().all(|&e| e == rs[0]);
                println!("  {} ({})", if uniform { format!("K(N) = N^{}", rs[0]) } else { "mixed".into() }, rs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","));
            }
            Ok(())
        }
        Demo::Signature => {
            for r in 1..=4 {
                let v = signature_vector(r, 4).map_err(engine)?;
                println!("r = {r}: ({})", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Eval { file } => eval(&cli, file),
        Cmd::Check { file } => check(file),
        Cmd::Ratio { file, a, b } => ratio(&cli, file, a, b),
        Cmd::Demo { which } => demo(&cli, *which),
        Cmd::Render { file, out } => render(file, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msgs)) => {
            msgs.iter().for_each(|m| eprintln!("error: {m}"));
            ExitCode::from(1)
        }
        Err(Failure::Input(msgs)) => {
            msgs.iter().for_each(|m| eprintln!("error: {m}"));
            ExitCode::from(2)
        }
    }
}
