use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hepx_core::bundled;
use hepx_core::induction::{induce_kb, tree_to_rules};
use hepx_core::lang::{format_experience_report, parse_prolog_cases, serialize_rule};
use hepx_core::learner::{
    experience_generalize, install_induced_rules, subsume_generalize, ExperienceOptions, GeneralizationReport,
    LearnerError,
};
use hepx_core::model::{AttributeDef, KnowledgeBase, Schema};
use hepx_core::store::{self, SharedKb};
use hepx_core::validate::validate_kb;

mod consult;

#[derive(Parser)]
#[command(name = "hepx", version, about = "Adaptive rule-based expert-system shell")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct KbArg {
    /// Knowledge base file. Without one the bundled hepatitis base is used
    /// read-only.
    #[arg(long, env = "HEPX_KB")]
    kb: Option<PathBuf>,
}

impl KbArg {
    fn load(&self) -> Result<KnowledgeBase> {
        match &self.kb {
            Some(path) => store::load(path).with_context(|| format!("loading {}", path.display())),
            None => Ok(bundled::hepatitis()),
        }
    }

    fn writable(&self) -> Result<&Path> {
        self.kb
            .as_deref()
            .context("this command changes the knowledge base; pass --kb FILE")
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Subsume,
    Experience,
}

#[derive(Subcommand)]
enum Command {
    /// Run a consultation. Exit code 0 when concluded, 2 when unknown.
    Consult {
        #[command(flatten)]
        kb: KbArg,
        /// Attribute to prove; defaults to the knowledge base goal.
        #[arg(long)]
        goal: Option<String>,
        /// Read answers from FILE instead of the terminal and print the trace.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Use the HBV rules exactly as written by the clinicians.
        #[arg(long)]
        paper_literal: bool,
        /// Do not credit fired rules in the knowledge base file.
        #[arg(long)]
        no_record: bool,
    },
    /// Induce a decision tree from the stored cases.
    Induce {
        #[command(flatten)]
        kb: KbArg,
        /// Print the experience report.
        #[arg(long)]
        report: bool,
        /// Replace the induced goal rules in the knowledge base.
        #[arg(long)]
        emit_rules: bool,
    },
    /// Generalize the rule base.
    Generalize {
        #[command(flatten)]
        kb: KbArg,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = ExperienceOptions::default().threshold)]
        threshold: u64,
        #[arg(long, default_value_t = ExperienceOptions::default().max_minority)]
        max_minority: u64,
        /// Report what would change without saving.
        #[arg(long)]
        dry_run: bool,
    },
    /// Check a knowledge base. Exit code 1 when it has errors.
    Validate {
        #[command(flatten)]
        kb: KbArg,
        #[arg(long)]
        paper_literal: bool,
    },
    /// Convert a Prolog case listing to a knowledge base file.
    ImportProlog {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Attribute the case labels belong to.
        #[arg(long, default_value = bundled::GOAL)]
        goal: String,
        /// Take schema, rules and advice from this knowledge base and only
        /// replace its cases.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        kb: KbArg,
        #[arg(long, env = hepx_service::ADDR_ENV, default_value = hepx_service::DEFAULT_ADDR)]
        addr: SocketAddr,
    },
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

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Consult {
            kb,
            goal,
            script,
            paper_literal,
            no_record,
        } => {
            let mut base = kb.load()?;
            if paper_literal {
                base = bundled::with_literal_rules(base);
            }
            let record = if no_record || paper_literal { None } else { kb.kb.as_deref() };
            consult::run(&base, goal.as_deref(), script.as_deref(), record)
        }
        Command::Induce { kb, report, emit_rules } => induce(&kb, report, emit_rules),
        Command::Generalize {
            kb,
            mode,
            threshold,
            max_minority,
            dry_run,
        } => {
            let options = ExperienceOptions { threshold, max_minority };
            let apply = |kb: &mut KnowledgeBase| -> Result<GeneralizationReport, LearnerError> {
                match mode {
                    Mode::Subsume => Ok(subsume_generalize(kb)),
                    Mode::Experience => experience_generalize(kb, options),
                }
            };
            let report = if dry_run {
                apply(&mut kb.load()?)?
            } else {
                store::commit(kb.writable()?, apply)?.1
            };
            print!("{report}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { kb, paper_literal } => {
            let mut base = kb.load()?;
            if paper_literal {
                base = bundled::with_literal_rules(base);
            }
            let diags = validate_kb(&base);
            for d in &diags {
                println!("{d}");
            }
            let errors = diags.iter().filter(|d| d.is_error()).count();
            eprintln!("{errors} error(s), {} warning(s)", diags.len() - errors);
            Ok(if errors > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::ImportProlog { cases, out, goal, base } => {
            let text = std::fs::read_to_string(&cases).with_context(|| format!("reading {}", cases.display()))?;
            let records =
                parse_prolog_cases(&text, &goal).map_err(|e| anyhow::anyhow!("{}: {}", cases.display(), e.0))?;
            let kb = match base {
                Some(path) => {
                    let mut kb = store::load(&path).with_context(|| format!("loading {}", path.display()))?;
                    if kb.goal_attribute != goal {
                        bail!("base goal is '{}', not '{goal}'", kb.goal_attribute);
                    }
                    kb.cases = records;
                    kb
                }
                None => schema_from_cases(records, &goal),
            };
            store::save(&kb, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("imported {} cases into {}", kb.cases.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { kb, addr } => {
            let shared = match &kb.kb {
                Some(path) => SharedKb::open(path).with_context(|| format!("loading {}", path.display()))?,
                None => SharedKb::in_memory(bundled::hepatitis()),
            };
            let state = hepx_service::AppState::new(shared, hepx_service::Config::default());
            let runtime = tokio::runtime::Runtime::new()?;
            eprintln!("listening on {addr}");
            runtime.block_on(hepx_service::serve(state, addr))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn induce(kb: &KbArg, report: bool, emit_rules: bool) -> Result<ExitCode> {
    let base = kb.load()?;
    let induced = induce_kb(&base)?;
    let compiled = tree_to_rules(&induced.tree, &base.goal_attribute, base.allow_defaults);
    for d in induced.diagnostics.iter().chain(&compiled.diagnostics) {
        eprintln!("warning: {d}");
    }
    if report {
        print!("{}", format_experience_report(&induced.tree));
    } else {
        for r in &compiled.rules {
            println!("{}", serialize_rule(r));
        }
    }
    if emit_rules {
        let path = kb.writable()?;
        store::commit::<_, LearnerError>(path, |kb| {
            install_induced_rules(kb, compiled.rules);
            Ok(())
        })?;
        eprintln!("induced rules written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// Builds a schema from the observed values: every observed attribute is
/// askable, domains list values in first-seen order.
fn schema_from_cases(cases: Vec<hepx_core::model::CaseRecord>, goal: &str) -> KnowledgeBase {
    let mut schema = Schema::new();
    let mut labels = AttributeDef::new(goal, &[], false);
    for case in &cases {
        for f in &case.observations {
            schema.extend_with(&f.attribute, &f.value);
        }
        if !labels.allows(&case.label.value) {
            labels.domain.push(case.label.value.clone());
        }
    }
    schema.push(labels);
    let mut kb = KnowledgeBase::new(schema, goal);
    kb.cases = cases;
    kb
}
