//! `qpt`: runs verification suites for quantum point transformations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qpt::config::{load_config, parse_config, Format, SuiteConfig};
use qpt::operators::symbolic_momentum_coefficients;
use qpt::verify::{run_suite, VerificationReport};
use qpt::Error;

const SINH_DEMO: &str = include_str!("../../../demos/sinh.cfg");
const POLAR_DEMO: &str = include_str!("../../../demos/polar.cfg");
const SHEAR2D_DEMO: &str = include_str!("../../../demos/shear2d.cfg");

#[derive(Parser)]
#[command(name = "qpt", version, about = "Verify quantum point transformations on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Demo {
    Sinh,
    PolarFail,
    Shear2d,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suite described by a configuration file.
    Run {
        config: PathBuf,
        /// Report path; stdout when neither this nor `output.path` is set.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a built-in scenario.
    Demo {
        #[arg(value_enum)]
        name: Demo,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Print the symbolic coefficients of the momentum operator `P_k`.
    PrintOperator {
        config: PathBuf,
        #[arg(long)]
        alpha: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            format,
            seed,
        } => load_config(&config).and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            execute(&cfg, out, format)
        }),
        Command::Demo { name, out, format } => demo(name, out, format),
        Command::PrintOperator { config, alpha } => print_operator(&config, alpha),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cfg: &SuiteConfig, out: Option<PathBuf>, format: Option<FormatArg>) -> qpt::Result<bool> {
    let format = match format {
        Some(FormatArg::Json) => Format::Json,
        Some(FormatArg::Csv) => Format::Csv,
        None => cfg.format,
    };
    let report = run_suite(cfg)?;
    summarize(&report);
    let text = match format {
        Format::Json => report.to_json_string(),
        Format::Csv => report.to_csv(),
    };
    match out.or_else(|| cfg.output_path.clone()) {
        Some(path) => write_atomic(&path, &text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::config("<stdout>", e.to_string()))?;
        }
    }
    Ok(report.overall_pass)
}

fn summarize(report: &VerificationReport) {
    for c in &report.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        eprintln!("{status} {} ({} ms)", c.name, c.runtime_ms);
        if let Some(e) = &c.error {
            eprintln!("     {e}");
        }
        for r in c.failures() {
            eprintln!("     {} = {:e} (needs {})", r.name, r.value, r.limit.describe());
        }
        if c.name == "validate" && !c.pass {
            for (k, v) in &c.context {
                eprintln!("     {k}: {v}");
            }
        }
    }
    let overall = if report.overall_pass { "PASS" } else { "FAIL" };
    eprintln!("overall: {overall}");
}

/// Writes to a temporary sibling, then renames over `path`.
fn write_atomic(path: &Path, text: &str) -> qpt::Result<()> {
    let io = |e: std::io::Error| Error::config(path.display().to_string(), e.to_string());
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(path.display().to_string(), "not a file path"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(text.as_bytes())?;
            f.sync_all()
        })
        .and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn demo(name: Demo, out: Option<PathBuf>, format: Option<FormatArg>) -> qpt::Result<bool> {
    let text = match name {
        Demo::Sinh => SINH_DEMO,
        Demo::PolarFail => POLAR_DEMO,
        Demo::Shear2d => SHEAR2D_DEMO,
    };
    let cfg = parse_config(text)?;
    if let Demo::Sinh = name {
        print_sinh_coefficients(&cfg)?;
    }
    execute(&cfg, out, format)
}

fn print_sinh_coefficients(cfg: &SuiteConfig) -> qpt::Result<()> {
    let m = cfg.map()?;
    let c = symbolic_momentum_coefficients(&m, 0)?;
    let zeroth = c.zeroth_order();
    let grid = qpt::Grid::cube(1, -10.0, 10.0, 401)?;
    let mut worst = 0.0f64;
    for x in grid.points() {
        let first_closed = 1.0 / x[0].cosh();
        let zeroth_closed = -0.5 * x[0].tanh() / x[0].cosh();
        worst = worst
            .max((c.first_order[0].eval(&x)? - first_closed).abs())
            .max((zeroth.eval(&x)? - zeroth_closed).abs());
    }
    eprintln!("symbolic:    c = {}    b/2 = {}", c.first_order[0], zeroth);
    eprintln!("closed form: c = 1/cosh(x1)    b/2 = -0.5*tanh(x1)/cosh(x1)");
    eprintln!("max grid discrepancy on [-10, 10], N = 401: {worst:e}");
    Ok(())
}

fn print_operator(path: &Path, alpha: usize) -> qpt::Result<bool> {
    let cfg = load_config(path)?;
    if alpha == 0 || alpha > cfg.dimension {
        return Err(Error::config(
            "--alpha",
            format!("must be in 1..={}", cfg.dimension),
        ));
    }
    let m = cfg.map()?;
    let c = symbolic_momentum_coefficients(&m, alpha - 1)?;
    println!("P{alpha} = -i ( sum_b c_b d/dx_b + z )");
    for (b, e) in c.first_order.iter().enumerate() {
        println!("c{} = {e}", b + 1);
    }
    println!("z = {}", c.zeroth_order());
    Ok(true)
}
