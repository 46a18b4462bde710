//! The `.kb` text format and file persistence.
//!
//! ```text
//! kbv1
//! @schema
//! GOAL hbv
//! ATTR hbsagreact {yes, no} askable "Is HBsAg reactive?"
//! @cases
//! CASE 1 positive: hbsagreact=yes
//! @rules
//! RULE r2: IF hbsagreact=yes THEN hbv=positive [exp=9]
//! @advice
//! ADVICE hbv=positive "Refer for antiviral assessment."
//! @audit
//! AUDIT 2024-01-01T00:00:00Z system rule_added ids=r2 | RULE r2: ...
//! ```
//!
//! Sections appear in this order, each at most once. Blank lines and lines
//! starting with `#` are ignored. Cases may also be written as Prolog
//! clauses.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::lang::{
    parse_advice, parse_audit, parse_case_checked, parse_rule, parse_schema_line, serialize_advice, serialize_attribute,
    serialize_audit, serialize_case, serialize_rule, ParseDiagnostic, SchemaLine,
};
use crate::model::{KnowledgeBase, Schema};

pub const VERSION: &str = "kbv1";

const SECTIONS: [&str; 5] = ["schema", "cases", "rules", "advice", "audit"];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("knowledge base file is empty")]
    Empty,
    #[error("unsupported version tag '{found}', expected '{VERSION}'")]
    Version { found: String },
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
    #[error("{0}")]
    Parse(ParseDiagnostic),
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn structure(line: usize, message: impl Into<String>) -> Self {
        StoreError::Structure {
            line,
            message: message.into(),
        }
    }
}

/// Canonical text of a knowledge base.
pub fn serialize_kb(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    let mut line = |s: &str| {
        out.push_str(s);
        out.push('\n');
    };
    line(VERSION);
    line("@schema");
    line(&format!("GOAL {}", kb.goal_attribute));
    if kb.allow_defaults {
        line("ALLOW_DEFAULTS");
    }
    for a in kb.schema.iter() {
        line(&serialize_attribute(a));
    }
    line("@cases");
    for c in &kb.cases {
        line(&serialize_case(c));
    }
    line("@rules");
    for r in &kb.rules {
        line(&serialize_rule(r));
    }
    line("@advice");
    for (fact, text) in &kb.advice {
        line(&serialize_advice(fact, text));
    }
    line("@audit");
    for e in &kb.audit {
        line(&serialize_audit(e));
    }
    out
}

/// Parses `.kb` text. Errors carry 1-based line numbers.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase, StoreError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (first_no, first) = lines.next().ok_or(StoreError::Empty)?;
    if first.trim() != VERSION {
        if first.trim().starts_with("kbv") {
            return Err(StoreError::Version {
                found: first.trim().to_string(),
            });
        }
        return Err(StoreError::structure(first_no, format!("expected version tag '{VERSION}'")));
    }

    let mut schema = Schema::new();
    let mut goal: Option<String> = None;
    let mut kb = KnowledgeBase::new(Schema::new(), "");
    let mut section: Option<usize> = None;
    let mut case_attrs: Option<Vec<String>> = None;
    let at = |line_no: usize| move |e: crate::lang::ParseError| StoreError::Parse(e.on_line(line_no).0);

    for (no, raw) in lines {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('@') {
            let idx = SECTIONS
                .iter()
                .position(|s| *s == name)
                .ok_or_else(|| StoreError::structure(no, format!("unknown section '@{name}'")))?;
            if section.is_some_and(|cur| idx <= cur) {
                return Err(StoreError::structure(no, format!("section '@{name}' is out of order or repeated")));
            }
            if idx > 0 && goal.is_none() {
                return Err(StoreError::structure(no, "the schema must declare a GOAL"));
            }
            section = Some(idx);
            continue;
        }
        match section.map(|i| SECTIONS[i]) {
            None => return Err(StoreError::structure(no, "statement outside any section")),
            Some("schema") => match parse_schema_line(line).map_err(at(no))? {
                SchemaLine::Attribute(a) => schema.push(a),
                SchemaLine::Goal(g) => {
                    if goal.is_some() {
                        return Err(StoreError::structure(no, "GOAL declared twice"));
                    }
                    goal = Some(g);
                }
                SchemaLine::AllowDefaults => kb.allow_defaults = true,
            },
            Some("cases") => {
                let g = goal.as_deref().expect("checked at section start");
                let parsed = match &case_attrs {
                    Some(expected) => parse_case_checked(line, g, expected),
                    None => crate::lang::parse_case(line, g),
                }
                .map_err(at(no))?;
                if let Some(case) = parsed {
                    if kb.cases.iter().any(|c| c.id == case.id) {
                        return Err(StoreError::structure(no, format!("duplicate case id {}", case.id)));
                    }
                    if case_attrs.is_none() {
                        case_attrs = Some(case.observations.iter().map(|f| f.attribute.clone()).collect());
                    }
                    kb.cases.push(case);
                }
            }
            Some("rules") => kb.rules.push(parse_rule(line).map_err(at(no))?),
            Some("advice") => {
                let (fact, text) = parse_advice(line).map_err(at(no))?;
                kb.advice.insert(fact, text);
            }
            Some(_) => kb.audit.push(parse_audit(line).map_err(at(no))?),
        }
    }
    kb.goal_attribute = goal.ok_or_else(|| StoreError::structure(first_no, "the schema must declare a GOAL"))?;
    kb.schema = schema;
    Ok(kb)
}

pub fn load(path: &Path) -> Result<KnowledgeBase, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    parse_kb(&text)
}

/// Points at which [`save_with_faults`] consults its hook. An error from the
/// hook aborts the save as if the process died there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// The temporary file is partly written.
    PartialWrite,
    /// The temporary file is complete but not yet renamed.
    BeforeRename,
}

/// Atomically replaces `path` with the canonical text of `kb`. Returns
/// `false` without touching the file when it already holds that text.
pub fn save(kb: &KnowledgeBase, path: &Path) -> Result<bool, StoreError> {
    save_with_faults(kb, path, &|_| Ok(()))
}

pub fn save_with_faults(
    kb: &KnowledgeBase,
    path: &Path,
    fault: &dyn Fn(FaultPoint) -> io::Result<()>,
) -> Result<bool, StoreError> {
    let text = serialize_kb(kb);
    if fs::read_to_string(path).is_ok_and(|old| old == text) {
        return Ok(false);
    }
    let tmp = temp_path(path);
    let write = || -> io::Result<()> {
        let mut f = File::create(&tmp)?;
        let half = text.len() / 2;
        f.write_all(&text.as_bytes()[..half])?;
        fault(FaultPoint::PartialWrite)?;
        f.write_all(&text.as_bytes()[half..])?;
        f.sync_all()?;
        fault(FaultPoint::BeforeRename)?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| StoreError::io(path, e))?;
    Ok(true)
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

fn lock_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.lock"))
}

#[derive(Debug, thiserror::Error)]
pub enum CommitError<E> {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Mutation(E),
}

/// Loads the file under an exclusive lock, applies `mutation` and saves.
/// Nothing is written when the mutation fails or leaves the knowledge base
/// unchanged.
pub fn commit<T, E>(
    path: &Path,
    mutation: impl FnOnce(&mut KnowledgeBase) -> Result<T, E>,
) -> Result<(KnowledgeBase, T), CommitError<E>> {
    commit_with_faults(path, &|_| Ok(()), mutation)
}

/// [`commit`] with the save step routed through [`save_with_faults`].
pub fn commit_with_faults<T, E>(
    path: &Path,
    fault: &dyn Fn(FaultPoint) -> io::Result<()>,
    mutation: impl FnOnce(&mut KnowledgeBase) -> Result<T, E>,
) -> Result<(KnowledgeBase, T), CommitError<E>> {
    let lock_file = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(lock_path(path))
        .map_err(|e| StoreError::io(path, e))?;
    lock_file.lock().map_err(|e| StoreError::io(path, e))?;
    let result = (|| {
        let mut kb = load(path)?;
        let value = mutation(&mut kb).map_err(CommitError::Mutation)?;
        save_with_faults(&kb, path, fault)?;
        Ok((kb, value))
    })();
    let _ = lock_file.unlock();
    result
}

/// A knowledge base shared between threads with a single writer.
///
/// Readers take cheap snapshots. Writers are serialized; with a backing
/// file each mutation is committed to disk before the new snapshot becomes
/// visible.
#[derive(Debug)]
pub struct SharedKb {
    path: Option<PathBuf>,
    current: Mutex<Arc<KnowledgeBase>>,
}

impl SharedKb {
    pub fn in_memory(kb: KnowledgeBase) -> Self {
        Self {
            path: None,
            current: Mutex::new(Arc::new(kb)),
        }
    }

    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Ok(Self {
            path: Some(path.to_path_buf()),
            current: Mutex::new(Arc::new(load(path)?)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn snapshot(&self) -> Arc<KnowledgeBase> {
        self.current.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Applies `mutation` to the latest state. On error the shared state
    /// and the file are left as they were.
    pub fn mutate<T, E>(
        &self,
        mutation: impl FnOnce(&mut KnowledgeBase) -> Result<T, E>,
    ) -> Result<T, CommitError<E>> {
        let mut guard = self.current.lock().unwrap_or_else(|e| e.into_inner());
        let (kb, value) = match &self.path {
            Some(path) => commit(path, mutation)?,
            None => {
                let mut kb = (**guard).clone();
                let value = mutation(&mut kb).map_err(CommitError::Mutation)?;
                (kb, value)
            }
        };
        *guard = Arc::new(kb);
        Ok(value)
    }
}
