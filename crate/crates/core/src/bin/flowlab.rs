use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowlab::config::{RunConfig, SurgeryConfig, Task};
use flowlab::par::thread_count;
use flowlab::report::run;
use flowlab::tables::{build_case, case_ids};
use flowlab::FlowError;

#[derive(Parser)]
#[command(name = "flowlab", version, about = "Numerical laboratory for flows on surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TaskArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Report path; overrides `output.report`. Without either, the report
    /// goes to stdout.
    #[arg(short, long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// List catalog fields, surgeries and table cases.
    List,
    /// Integrate trajectories.
    Simulate(TaskArgs),
    /// Classify alpha and omega limit sets.
    Classify(TaskArgs),
    /// Search for a wandering disk.
    Wandering(TaskArgs),
    /// Hamiltonian verdict with evidence.
    HamCheck(TaskArgs),
    /// Reproduce the limit-set table.
    Tables(TaskArgs),
    /// Render a phase portrait to SVG.
    Render(TaskArgs),
    /// Edit the surgery stack of a configuration.
    Surgery {
        #[command(subcommand)]
        action: SurgeryAction,
    },
}

#[derive(Subcommand)]
enum SurgeryAction {
    /// Append a surgery to the field of a configuration, checking that the
    /// result is valid.
    Apply {
        #[arg(short, long)]
        config: PathBuf,
        /// TOML file with `kind = { type = ..., ... }` and optional `tau`.
        #[arg(short, long)]
        surgery: PathBuf,
        /// Output configuration; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn write_file(path: &Path, text: &str) -> Result<(), FlowError> {
    std::fs::write(path, text).map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))
}

fn run_task(task: Task, args: &TaskArgs) -> Result<(), FlowError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None if task == Task::Tables => RunConfig::new(Task::Tables),
        None => {
            return Err(FlowError::Config { field: "--config".into(), message: format!("{} needs a configuration file", task.as_str()) });
        }
    };
    if cfg.task != task {
        eprintln!("note: configuration task {} replaced by {}", cfg.task.as_str(), task.as_str());
        cfg.task = task;
    }
    if task == Task::Render && cfg.output.svg.is_none() {
        return Err(FlowError::Config { field: "output.svg".into(), message: "render needs an SVG path".into() });
    }
    let out = run(&cfg, thread_count())?;
    let report_path = args.report.clone().or_else(|| cfg.output.report.clone());
    if let (Some(text), Some(p)) = (&out.trajectory, &cfg.output.trajectory) {
        write_file(p, text)?;
    }
    if let (Some(svg), Some(p)) = (&out.svg, &cfg.output.svg) {
        write_file(p, svg)?;
    }
    if let (Some(dot), Some(p)) = (&out.dot, &cfg.output.dot) {
        write_file(p, dot)?;
    }
    match report_path {
        Some(p) => {
            write_file(&p, &out.report)?;
            for line in &out.summary {
                println!("{line}");
            }
        }
        None => {
            for line in &out.summary {
                eprintln!("{line}");
            }
            print!("{}", out.report);
        }
    }
    Ok(())
}

fn list() {
    println!("base fields ([field] base = {{ type = ... }}):");
    for line in [
        "linear_torus { slope }",
        "denjoy_suspension { rho, gap_constant, depth }",
        "hamiltonian { id = torus_sin_sin | sphere_height | torus_constant }",
        "gradient { id = torus_sin_sin | sphere_height }",
        "single_limit_cycle_torus",
        "reeb_singular_circle_torus",
        "morse_smale_sphere",
        "trivial_annulus",
    ] {
        println!("  {line}");
    }
    println!("surgeries ([[field.surgery]] kind = {{ type = ... }}, optional tau):");
    for line in [
        "fake_saddle { point, radius }",
        "cantor_strip { placement = { type = affine | polar, ... }, depth }",
        "singularize_section { section, half_width }",
        "generic_bump { zeros, radius, modulation }",
    ] {
        println!("  {line}");
    }
    println!("table cases:");
    for id in case_ids() {
        if let Ok(c) = build_case(id) {
            println!("  {:<3} {}", id, c.description);
        }
    }
}

fn apply_surgery_cmd(config: &Path, surgery: &Path, output: Option<&Path>) -> Result<(), FlowError> {
    let mut cfg = RunConfig::load(config)?;
    let text = std::fs::read_to_string(surgery).map_err(|e| FlowError::Io(format!("{}: {e}", surgery.display())))?;
    let s: SurgeryConfig = toml::from_str(&text).map_err(|e| FlowError::Config { field: surgery.display().to_string(), message: e.message().to_string() })?;
    let field = cfg.field.as_mut().ok_or_else(|| FlowError::Config { field: "field".into(), message: "configuration has no [field]".into() })?;
    field.surgery.push(s);
    cfg.validate()?;
    let out = cfg.to_toml()?;
    match output {
        Some(p) => write_file(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::List => {
            list();
            Ok(())
        }
        Command::Simulate(a) => run_task(Task::Simulate, a),
        Command::Classify(a) => run_task(Task::Classify, a),
        Command::Wandering(a) => run_task(Task::Wandering, a),
        Command::HamCheck(a) => run_task(Task::HamCheck, a),
        Command::Tables(a) => run_task(Task::Tables, a),
        Command::Render(a) => run_task(Task::Render, a),
        Command::Surgery { action: SurgeryAction::Apply { config, surgery, output } } => {
            apply_surgery_cmd(config, surgery, output.as_deref())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, FlowError::Config { .. }) { 2 } else { 1 })
        }
    }
}
