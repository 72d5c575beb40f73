use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use assistkit::eval::{evaluate, host_params, parse_suite, EvalSetup};
use assistkit::instrument::{ConflictPolicy, PlanOptions, Severity, UnresolvablePolicy};
use assistkit::par::Parallelism;
use assistkit::pipeline::{analyze, Analysis, AnalysisOptions, Status};
use assistkit::qfs::{Mode, QfsOptions, DEFAULT_CAP};
use assistkit::runtime::{run_program_with, step_budget_from_env, QueryLog, RunOptions};
use assistkit::sqlschema::{load_schema, Schema};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Finds SQL injection holes in QScript programs and inserts the right
/// sanitizer for each user input.
#[derive(Parser)]
#[command(name = "assistkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the queries, placeholder types and planned sanitizers.
    Analyze {
        program: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the program with sanitizer calls inserted.
    Instrument {
        program: PathBuf,
        /// Output file for the instrumented source (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run original and instrumented program on a labelled test suite.
    Eval {
        program: PathBuf,
        suite: PathBuf,
        /// Write the executed queries of both versions as a tab-separated log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Run inputs one at a time.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Covering)]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, value_enum, default_value_t = ConflictArg::Error)]
    conflict: ConflictArg,
    #[arg(long, value_enum, default_value_t = UnresolvableArg::String)]
    unresolvable: UnresolvableArg,
    /// Print the flow graph in Graphviz format to stderr.
    #[arg(long)]
    dump_flowgraph: bool,
    /// Print the abstract queries of every execution point to stderr.
    #[arg(long)]
    dump_queries: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Include per-phase timings in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Covering,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConflictArg {
    Numeric,
    Error,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnresolvableArg {
    String,
    Skip,
}

impl Common {
    fn options(&self) -> AnalysisOptions {
        let mode = match self.mode {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Covering => Mode::Covering,
        };
        AnalysisOptions {
            qfs: QfsOptions::new(mode, self.cap),
            plan: PlanOptions {
                conflict: match self.conflict {
                    ConflictArg::Numeric => ConflictPolicy::Numeric,
                    ConflictArg::Error => ConflictPolicy::Error,
                },
                unresolvable: match self.unresolvable {
                    UnresolvableArg::String => UnresolvablePolicy::String,
                    UnresolvableArg::Skip => UnresolvablePolicy::Skip,
                },
            },
            parallelism: Parallelism::default(),
        }
    }
}

/// Failure with the process exit code to use.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn program_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load(program: &Path, common: &Common) -> Result<(Schema, Analysis), Failure> {
    let schema_text = read(&common.schema)?;
    let schema = load_schema(&schema_text)
        .map_err(|e| usage(format!("{}: {e}", common.schema.display())))?;
    let source = read(program)?;
    let id = program
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| program.display().to_string());
    let mut analysis =
        analyze(&id, &source, &schema, &common.options()).map_err(|e| usage(e.to_string()))?;
    analysis.report.program = program_id(program);
    if !common.timings {
        analysis.report.timings = None;
    }
    if common.dump_flowgraph {
        eprint!("{}", analysis.graph.to_dot());
    }
    if common.dump_queries {
        let mut text = String::new();
        for ep in &analysis.report.exec_points {
            let _ = writeln!(text, "executeQuery at {}:", ep.loc);
            for q in &ep.queries {
                let mark = if q.is_valid() { "  " } else { "x " };
                let _ = writeln!(text, "  {mark}{}", q.query);
            }
        }
        eprint!("{text}");
    }
    for d in &analysis.report.plan.diagnostics {
        let severity = match d.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        eprintln!("{severity}: {} ({})", d.message, d.action);
    }
    Ok((schema, analysis))
}

fn emit_report(common: &Common, json: &str) -> Result<(), Failure> {
    match &common.report {
        Some(path) => write(path, &format!("{json}\n")),
        None => stdout(&format!("{json}\n")),
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn stdout(text: &str) -> Result<(), Failure> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
            Err(usage(format!("cannot write to stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn conflict_failure() -> Failure {
    Failure {
        code: 1,
        message: "conflicting placeholder types; rerun with --conflict numeric to sanitize them as numbers".into(),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze { program, common } => {
            let (_, analysis) = load(&program, &common)?;
            emit_report(&common, &analysis.report.to_json())?;
            match analysis.report.status {
                Status::Ok => Ok(()),
                Status::Conflict => Err(conflict_failure()),
            }
        }
        Command::Instrument {
            program,
            out,
            common,
        } => {
            let (_, analysis) = load(&program, &common)?;
            if let Some(path) = &common.report {
                write(path, &format!("{}\n", analysis.report.to_json()))?;
            }
            if analysis.report.status == Status::Conflict {
                return Err(conflict_failure());
            }
            let source = analysis
                .instrumented_source()
                .map_err(|e| usage(e.to_string()))?;
            match out {
                Some(path) => write(&path, &source),
                None => stdout(&source),
            }
        }
        Command::Eval {
            program,
            suite,
            log,
            sequential,
            common,
        } => {
            let (schema, analysis) = load(&program, &common)?;
            if analysis.report.status == Status::Conflict {
                return Err(conflict_failure());
            }
            let suite_text = read(&suite)?;
            let inputs =
                parse_suite(&suite_text).map_err(|e| usage(format!("{}: {e}", suite.display())))?;
            let instrumented = analysis.instrumented().map_err(|e| usage(e.to_string()))?;
            let hosts = host_params(&analysis.graph);
            let id = program_id(&program);
            let run_opts = RunOptions {
                step_budget: step_budget_from_env(),
            };
            let setup = EvalSetup {
                program_id: &id,
                original: &analysis.program,
                instrumented: &instrumented,
                schema: &schema,
                host_params: &hosts,
                run: run_opts,
                parallelism: if sequential {
                    Parallelism::Sequential
                } else {
                    Parallelism::Parallel
                },
            };
            let result = evaluate(&setup, &inputs);
            if let Some(path) = log {
                let mut qlog = QueryLog::new();
                for (version, prog) in [
                    ("original", &analysis.program),
                    ("instrumented", &instrumented),
                ] {
                    let pid = format!("{id}:{version}");
                    for input in &inputs {
                        if let Ok(queries) = run_program_with(prog, &input.params, run_opts) {
                            for q in queries {
                                qlog.push(&pid, &input.id, q);
                            }
                        }
                    }
                }
                write(&path, &qlog.to_tsv())?;
            }
            let json = serde_json::to_string_pretty(&result).expect("eval result serializes");
            emit_report(&common, &json)?;
            let s = &result.summary;
            eprintln!(
                "{} inputs: {} attacks neutralized, {} unchanged ({} harmless), {} legit unchanged, {} legit modified ({} structurally), {} successful attacks",
                s.total,
                s.attack_neutralized,
                s.attack_unchanged,
                s.attack_unchanged_harmless,
                s.legit_unchanged,
                s.legit_modified,
                s.structural_false_positives,
                s.false_negatives
            );
            if result.passed() {
                Ok(())
            } else {
                Err(Failure {
                    code: 1,
                    message: "successful attacks or structurally modified legitimate queries"
                        .into(),
                })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
