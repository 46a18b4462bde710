//! Question and answer loop.
//!
//! Script files hold one answer per line: a bare value for the pending
//! question, or `attribute=value` to name it explicitly. `why` prints the
//! reason for the pending question and `unknown` declines to answer. Blank
//! lines and lines starting with `#` are skipped.

use std::io::{self, BufRead, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use hepx_core::inference::{Outcome, Session, SessionStatus, UNKNOWN_ANSWER};
use hepx_core::learner::{record_firings, LearnerError};
use hepx_core::model::KnowledgeBase;
use hepx_core::store;

pub const EXIT_UNKNOWN: u8 = 2;

enum Input {
    Why,
    Answer { attribute: Option<String>, value: String },
}

fn parse_input(line: &str) -> Input {
    let line = line.trim();
    if line.eq_ignore_ascii_case("why") {
        return Input::Why;
    }
    match line.split_once('=') {
        Some((a, v)) => Input::Answer {
            attribute: Some(a.trim().to_string()),
            value: v.trim().to_string(),
        },
        None => Input::Answer {
            attribute: None,
            value: line.to_string(),
        },
    }
}

pub fn run(kb: &KnowledgeBase, goal: Option<&str>, script: Option<&Path>, record: Option<&Path>) -> Result<ExitCode> {
    let goal = goal.unwrap_or(&kb.goal_attribute);
    let mut session = Session::start("cli", kb, goal, &[])?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut shown = 0;

    match script {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut lines = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
            loop {
                for event in &session.trace()[shown..] {
                    writeln!(out, "{event}")?;
                }
                shown = session.trace().len();
                let Some(pending) = session.pending().cloned() else { break };
                let Some((n, line)) = lines.next() else {
                    bail!("script ended while '{}' was pending", pending.attribute);
                };
                match parse_input(line) {
                    Input::Why => write!(out, "{}", session.explain_why(kb)?)?,
                    Input::Answer { attribute, value } => {
                        let attribute = attribute.unwrap_or(pending.attribute);
                        session
                            .answer(kb, &attribute, &value)
                            .with_context(|| format!("{}:{}", path.display(), n + 1))?;
                    }
                }
            }
        }
        None => {
            let stdin = io::stdin();
            let mut input = stdin.lock();
            while let Some(pending) = session.pending().cloned() {
                let attr = kb.attribute(&pending.attribute);
                let mut choices = attr.map(|a| a.domain.clone()).unwrap_or_default();
                choices.extend([UNKNOWN_ANSWER.to_string(), "why".to_string()]);
                let prompt = attr.map(|a| a.prompt_text()).unwrap_or_else(|| pending.attribute.clone());
                write!(out, "{prompt} [{}] ", choices.join("/"))?;
                out.flush()?;
                let mut line = String::new();
                if input.read_line(&mut line)? == 0 {
                    bail!("input ended while '{}' was pending", pending.attribute);
                }
                match parse_input(&line) {
                    Input::Why => write!(out, "{}", session.explain_why(kb)?)?,
                    Input::Answer { attribute, value } => {
                        let attribute = attribute.unwrap_or(pending.attribute);
                        if let Err(e) = session.answer(kb, &attribute, &value) {
                            writeln!(out, "{e}")?;
                        }
                    }
                }
            }
        }
    }

    match (session.status(), session.outcome()) {
        (SessionStatus::Concluded, Some(Outcome::Proved { fact, .. })) => {
            writeln!(out, "result: {fact}")?;
            if let Some(advice) = kb.advice_for(fact) {
                writeln!(out, "advice: {advice}")?;
            }
            write!(out, "{}", session.explain_how()?)?;
            if let Some(path) = record {
                let fired = session.fired_rules().to_vec();
                store::commit::<_, LearnerError>(path, |kb| {
                    let present: Vec<String> = fired.iter().filter(|id| kb.rule(id).is_some()).cloned().collect();
                    record_firings(kb, &present)
                })?;
            }
            Ok(ExitCode::SUCCESS)
        }
        (_, outcome) => {
            writeln!(out, "result: unknown")?;
            if let Some(Outcome::Unknown { missing }) = outcome {
                for set in missing {
                    let text: Vec<String> = set.iter().map(ToString::to_string).collect();
                    writeln!(out, "missing: {}", text.join(" AND "))?;
                }
            }
            Ok(ExitCode::from(EXIT_UNKNOWN))
        }
    }
}
