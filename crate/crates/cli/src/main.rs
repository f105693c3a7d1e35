use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use surface_stokes::checks::{run_suite, Suite};
use surface_stokes::manufactured::FhMode;
use surface_stokes::mesh::SurfaceMesh;
use surface_stokes::solver::{SolverMethod, SolverOptions};
use surface_stokes::study::{run_study, LevelRange, StudyConfig, SurfaceSpec};
use surface_stokes_cli::{study_json, study_rows, write_csv, THREADS_ENV};

#[derive(Parser)]
#[command(
    version,
    about = "Tangential MINI elements for the surface Stokes problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FhArg {
    Piola,
    Projected,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Direct,
    Iterative,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Geometry,
    Conformity,
    Interpolant,
    Infsup,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study against the manufactured solution.
    Study {
        /// `ellipsoid:a,b,c` or `sphere:r`.
        #[arg(long, default_value = "ellipsoid:1.1,1.2,1.3")]
        surface: String,
        /// Inclusive level range `a..b`.
        #[arg(long, default_value = "1..5")]
        levels: String,
        #[arg(long, value_enum, default_value = "piola")]
        fh_mode: FhArg,
        /// Quadrature exactness degree (2, 4 or 6).
        #[arg(long, default_value_t = 6)]
        quadrature: usize,
        #[arg(long, value_enum, default_value = "direct")]
        solver: SolverArg,
        /// Relative residual tolerance per block.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = "study.csv")]
        csv: PathBuf,
        #[arg(long, default_value = "study.json")]
        json: PathBuf,
    },
    /// Run an invariant suite and print JSON verdicts.
    Check {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value = "ellipsoid:1.1,1.2,1.3")]
        surface: String,
        /// Level for single-level suites.
        #[arg(long, default_value_t = 3)]
        level: usize,
        /// Level range for multi-level suites; each suite has its own default.
        #[arg(long)]
        levels: Option<String>,
        /// Also write the verdicts to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write the mesh of one level as ASCII OFF.
    ExportMesh {
        #[arg(long, default_value = "ellipsoid:1.1,1.2,1.3")]
        surface: String,
        #[arg(long)]
        level: usize,
        /// Output file; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn fail(stage: &str, err: impl std::fmt::Display) -> ExitCode {
    let msg = serde_json::json!({ "error": { "stage": stage, "message": err.to_string() } });
    eprintln!("{msg}");
    ExitCode::from(2)
}

fn parse_surface(s: &str) -> Result<SurfaceSpec, String> {
    s.parse().map_err(|e| format!("--surface: {e}"))
}

fn parse_levels(s: &str) -> Result<LevelRange, String> {
    s.parse().map_err(|e| format!("--levels: {e}"))
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return fail("config", e);
    }
    match cli.command {
        Command::Study {
            surface,
            levels,
            fh_mode,
            quadrature,
            solver,
            tol,
            csv,
            json,
        } => {
            let (surface, levels) =
                match parse_surface(&surface).and_then(|s| Ok((s, parse_levels(&levels)?))) {
                    Ok(v) => v,
                    Err(e) => return fail("config", e),
                };
            let config = StudyConfig {
                surface,
                levels,
                fh_mode: match fh_mode {
                    FhArg::Piola => FhMode::Piola,
                    FhArg::Projected => FhMode::Projected,
                },
                quadrature_degree: quadrature,
                solver: SolverOptions {
                    method: match solver {
                        SolverArg::Direct => SolverMethod::Direct,
                        SolverArg::Iterative => SolverMethod::Iterative,
                    },
                    tol,
                    ..Default::default()
                },
            };
            let outcome = match run_study(&config) {
                Ok(o) => o,
                Err(e) => return fail("study", e),
            };
            let rows = study_rows(&outcome);
            let written = File::create(&csv)
                .map_err(|e| e.to_string())
                .and_then(|f| write_csv(&rows, BufWriter::new(f)).map_err(|e| e.to_string()));
            if let Err(e) = written {
                return fail("output", e);
            }
            let doc = study_json(&config, &outcome);
            let written = File::create(&json)
                .map_err(|e| e.to_string())
                .and_then(|f| {
                    serde_json::to_writer_pretty(BufWriter::new(f), &doc).map_err(|e| e.to_string())
                });
            if let Err(e) = written {
                return fail("output", e);
            }
            let mut stdout = io::stdout().lock();
            let _ = write_csv(&rows, &mut stdout);
            for f in &outcome.failures {
                eprintln!("level {}: {}", f.level, f.error);
            }
            if outcome.converged() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Check {
            suite,
            surface,
            level,
            levels,
            json,
        } => {
            let suite = match suite {
                SuiteArg::Geometry => Suite::Geometry,
                SuiteArg::Conformity => Suite::Conformity,
                SuiteArg::Interpolant => Suite::Interpolant,
                SuiteArg::Infsup => Suite::Infsup,
                SuiteArg::All => Suite::All,
            };
            let surface =
                match parse_surface(&surface).and_then(|s| s.build().map_err(|e| e.to_string())) {
                    Ok(s) => s,
                    Err(e) => return fail("config", e),
                };
            let levels = match levels.as_deref().map(parse_levels).transpose() {
                Ok(l) => l,
                Err(e) => return fail("config", e),
            };
            let verdicts = match run_suite(suite, &surface, level, levels) {
                Ok(v) => v,
                Err(e) => return fail("check", e),
            };
            let passed = verdicts.iter().all(|v| v.passed);
            let doc = serde_json::json!({ "passed": passed, "verdicts": verdicts });
            let text = serde_json::to_string_pretty(&doc).expect("verdicts serialize");
            if let Some(path) = json {
                if let Err(e) = std::fs::write(&path, &text) {
                    return fail("output", e);
                }
            }
            let _ = writeln!(io::stdout().lock(), "{text}");
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::ExportMesh {
            surface,
            level,
            output,
        } => {
            let surface =
                match parse_surface(&surface).and_then(|s| s.build().map_err(|e| e.to_string())) {
                    Ok(s) => s,
                    Err(e) => return fail("config", e),
                };
            let mesh = match SurfaceMesh::generate(&surface, level) {
                Ok(m) => m,
                Err(e) => return fail("mesh", e),
            };
            let result = match output {
                Some(path) => File::create(path).and_then(|f| {
                    let mut w = BufWriter::new(f);
                    mesh.write_off(&mut w)?;
                    w.flush()
                }),
                None => mesh.write_off(io::stdout().lock()),
            };
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail("output", e),
            }
        }
    }
}
