//! `tutor`: validate packs, serve the API, lint R files, replay scripted
//! sessions and compute study statistics.
//!
//! Exit codes: 0 success, 1 findings (invalid pack, lint hits, failed run),
//! 2 usage errors (bad flags, missing input files).

mod script;

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tutor_core::analytics::{study_report, DEFAULT_ALPHA};
use tutor_core::knowledge::{check_curriculum, lint_target, LintContext, RuleSet};
use tutor_core::{load_pack, shipped, validate_pack, LessonPack, LoadError};
use tutor_service::{pack_files, ServiceConfig, SessionStore};

#[derive(Debug, Parser)]
#[command(name = "tutor", version, about = "Python-to-R tutor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a lesson pack and report every violation.
    Validate {
        pack: PathBuf,
        /// Also check that annotations cite rules of the right kind.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Serve the HTTP API and the client bundle.
    Serve {
        /// Directory holding `*.pack.json` files.
        #[arg(long, default_value = "packs")]
        packs: PathBuf,
        #[arg(long, default_value = "packs/rules.json")]
        rules: PathBuf,
        #[arg(long, env = "TUTOR_STORE", default_value = "sessions")]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Built client bundle to serve at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Report pitfalls carried over from Python in an R file.
    Lint {
        file: PathBuf,
        /// Names known to be data frames, comma separated.
        #[arg(long, value_delimiter = ',')]
        frames: Vec<String>,
        /// Rule set to use instead of the built-in one.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Play a scripted session without the UI and check that it replays.
    Run {
        pack: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Persist the session here; defaults to `TUTOR_STORE` when set.
        #[arg(long, env = "TUTOR_STORE")]
        store: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Pre/post deltas, signed-rank test and survey summary for stored sessions.
    Stats {
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        /// Pack the sessions were taken with; the built-in pack by default.
        #[arg(long)]
        pack: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
    },
}

/// A failure with its exit code.
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

fn finding(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn load_error(path: &Path, err: LoadError) -> Failure {
    match err {
        LoadError::MissingFile(_) => usage(format!("{}: no such file", path.display())),
        other => finding(format!("{}: {other}", path.display())),
    }
}

fn read_pack(path: &Path) -> Result<LessonPack, Failure> {
    load_pack(path).map_err(|e| load_error(path, e))
}

fn read_rules(path: Option<&Path>) -> Result<RuleSet, Failure> {
    match path {
        None => Ok(shipped::rules()),
        Some(p) => RuleSet::load(p).map_err(|e| match e {
            tutor_core::knowledge::RuleError::Load(inner) => load_error(p, inner),
            other => finding(format!("{}: {other}", p.display())),
        }),
    }
}

fn validate(pack_path: &Path, rules: Option<&Path>) -> Result<(), Failure> {
    let pack = read_pack(pack_path)?;
    let mut report = validate_pack(&pack);
    if let Some(rules_path) = rules {
        let rules = read_rules(Some(rules_path))?;
        report
            .violations
            .extend(check_curriculum(&pack, &rules).violations);
    }
    if report.is_valid() {
        println!(
            "pack valid: {} lessons, {} questions",
            pack.lessons.len(),
            pack.pretest.len()
        );
        return Ok(());
    }
    for v in &report.violations {
        println!("{}: {v}", pack_path.display());
    }
    Err(finding(format!(
        "pack invalid: {} violation(s)",
        report.violations.len()
    )))
}

fn lint(file: &Path, frames: Vec<String>, rules: Option<&Path>) -> Result<(), Failure> {
    let rules = read_rules(rules)?;
    let source =
        std::fs::read_to_string(file).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    let shown = file.display().to_string();
    let findings = lint_target(&rules, &source, &LintContext::with_frames(frames))
        .map_err(|e| finding(format!("{shown}: {e}")))?;
    for f in &findings {
        println!("{}", f.diagnostic(&shown));
    }
    if findings.is_empty() {
        Ok(())
    } else {
        Err(finding(format!("{} finding(s)", findings.len())))
    }
}

fn run_script(
    pack: &Path,
    script_path: &Path,
    seed: u64,
    store: Option<PathBuf>,
    format: Format,
) -> Result<(), Failure> {
    let pack = read_pack(pack)?;
    let text = std::fs::read_to_string(script_path)
        .map_err(|e| usage(format!("{}: {e}", script_path.display())))?;
    let script: script::Script = serde_json::from_str(&text)
        .map_err(|e| finding(format!("{}: {e}", script_path.display())))?;
    let store = store
        .map(SessionStore::open)
        .transpose()
        .map_err(|e| finding(format!("store: {e}")))?;
    let summary = script::run(&pack, &script, seed, store.as_ref())
        .map_err(|e| finding(format!("run failed: {e}")))?;
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        ),
        Format::Text => {
            let phases: Vec<String> = summary.phases.iter().map(ToString::to_string).collect();
            println!(
                "session {} ({}, seed {})",
                summary.session_id, summary.participant, summary.seed
            );
            println!("phases: {}", phases.join(" -> "));
            println!(
                "lessons: {} visited, {} steps",
                summary.lessons_visited, summary.steps_taken
            );
            println!(
                "scores: pretest {}/{}, posttest {}/{}",
                summary.pretest_score,
                pack.pretest.len(),
                summary.posttest_score,
                pack.pretest.len()
            );
            if let Some(record) = &summary.record {
                println!("record: {record}");
            }
            println!(
                "replay: {}",
                if summary.replay_identical {
                    "identical"
                } else {
                    "DIFFERS"
                }
            );
        }
    }
    if summary.replay_identical {
        Ok(())
    } else {
        Err(finding("replayed record differs from the live session"))
    }
}

fn stats(dir: &Path, format: Format, pack: Option<&Path>, alpha: f64) -> Result<(), Failure> {
    if !dir.is_dir() {
        return Err(usage(format!("{}: not a directory", dir.display())));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage("--alpha must be between 0 and 1"));
    }
    let pack = match pack {
        Some(p) => read_pack(p)?,
        None => shipped::pack(),
    };
    let store = SessionStore::open(dir).map_err(|e| finding(format!("{}: {e}", dir.display())))?;
    let (sessions, errors) = store.load_all();
    for e in &errors {
        eprintln!("warning: skipped {e}");
    }
    let report = study_report(&pack, &sessions, alpha).map_err(|e| finding(e.to_string()))?;
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
        Format::Text => print!("{report}"),
    }
    Ok(())
}

fn serve(
    packs: PathBuf,
    rules: PathBuf,
    store: PathBuf,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
) -> Result<(), Failure> {
    let pack_paths = pack_files(&packs).map_err(|e| usage(format!("{}: {e}", packs.display())))?;
    let config = ServiceConfig {
        pack_paths,
        rules_path: rules,
        store_root: store,
        addr,
        static_dir,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| finding(e.to_string()))?;
    runtime
        .block_on(tutor_service::serve(config))
        .map_err(|e| finding(format!("serve: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { pack, rules } => validate(&pack, rules.as_deref()),
        Command::Serve {
            packs,
            rules,
            store,
            port,
            host,
            static_dir,
        } => serve(packs, rules, store, SocketAddr::new(host, port), static_dir),
        Command::Lint {
            file,
            frames,
            rules,
        } => lint(&file, frames, rules.as_deref()),
        Command::Run {
            pack,
            script,
            seed,
            store,
            format,
        } => run_script(&pack, &script, seed, store, format),
        Command::Stats {
            dir,
            format,
            pack,
            alpha,
        } => stats(&dir, format, pack.as_deref(), alpha),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
