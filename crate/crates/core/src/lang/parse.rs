use std::collections::HashSet;

use chrono::{DateTime, Utc};

use super::lexer::{Cursor, Tok};
use super::{ParseDiagnostic, ParseError, SourceSpan};
use crate::model::{
    Actor, AttributeDef, AuditAction, AuditEntry, CaseRecord, Condition, Fact, Rule, RuleOrigin,
    Schema,
};

/// A parsed value together with non-fatal diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<ParseDiagnostic>,
}

/// What to do with attributes or values the schema does not know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownAttributes {
    /// Report a warning and leave the schema alone.
    #[default]
    Warn,
    /// Add the attribute (askable) or value to the schema.
    Extend,
}

fn condition(cur: &mut Cursor) -> Result<(Condition, SourceSpan), ParseError> {
    let (attribute, span) = cur.expect_ident("attribute name")?;
    cur.expect_punct('=')?;
    let (value, vspan) = cur.expect_ident("value")?;
    Ok((
        Fact::new(attribute, value),
        SourceSpan::new(span.line, span.start, vspan.end),
    ))
}

fn annotation(cur: &mut Cursor, rule: &mut Rule) -> Result<(), ParseError> {
    if !cur.eat_punct('[') {
        return Ok(());
    }
    let mut seen = HashSet::new();
    loop {
        let (key, span) = cur.expect_ident("annotation key")?;
        let key = key.to_ascii_lowercase();
        if !seen.insert(key.clone()) {
            return Err(ParseError::at(span, format!("duplicate annotation '{key}'")));
        }
        cur.expect_punct('=')?;
        match key.as_str() {
            "exp" => rule.stats.support = cur.expect_uint("experience count")?,
            "fired" => rule.stats.firings = cur.expect_uint("firing count")?,
            "origin" => {
                let (o, ospan) = cur.expect_ident("rule origin")?;
                rule.origin = RuleOrigin::parse(&o)
                    .ok_or_else(|| ParseError::at(ospan, format!("unknown rule origin '{o}'")))?;
            }
            _ => return Err(ParseError::at(span, format!("unknown annotation '{key}'"))),
        }
        if cur.eat_punct(']') {
            return Ok(());
        }
        cur.expect_punct(',')?;
    }
}

fn rule_with_spans(text: &str) -> Result<(Rule, Vec<SourceSpan>), ParseError> {
    let mut cur = Cursor::new(text, 1)?;
    cur.expect_keyword("RULE")?;
    let (id, _) = cur.expect_ident("rule id")?;
    cur.expect_punct(':')?;
    let mut premises = Vec::new();
    let mut spans = Vec::new();
    if !cur.eat_keyword("DEFAULT") {
        cur.expect_keyword("IF")?;
        loop {
            let (c, span) = condition(&mut cur)?;
            if premises.iter().any(|p: &Condition| p.attribute == c.attribute) {
                return Err(ParseError::at(
                    span,
                    format!("attribute '{}' tested twice in one rule", c.attribute),
                ));
            }
            premises.push(c);
            spans.push(span);
            if !cur.eat_keyword("AND") {
                break;
            }
        }
    }
    cur.expect_keyword("THEN")?;
    let (conclusion, cspan) = condition(&mut cur)?;
    if premises.iter().any(|p| p.attribute == conclusion.attribute) {
        return Err(ParseError::at(
            cspan,
            format!(
                "conclusion attribute '{}' also appears as a premise",
                conclusion.attribute
            ),
        ));
    }
    spans.push(cspan);
    let mut rule = Rule::new(id, premises, conclusion);
    annotation(&mut cur, &mut rule)?;
    cur.expect_end()?;
    Ok((rule, spans))
}

/// Parses `RULE id: IF a=v AND ... THEN g=v [exp=N]`.
///
/// Premises keep their written order. The optional annotation may also carry
/// `fired=N` and `origin=...`; without it, stats are zero and the origin is
/// `authored`.
pub fn parse_rule(text: &str) -> Result<Rule, ParseError> {
    rule_with_spans(text).map(|(r, _)| r)
}

/// Parses a rule and checks it against `schema`.
pub fn parse_rule_in(
    text: &str,
    schema: &mut Schema,
    mode: UnknownAttributes,
) -> Result<Parsed<Rule>, ParseError> {
    let (rule, spans) = rule_with_spans(text)?;
    let mut warnings = Vec::new();
    let conds = rule.premises.iter().chain(std::iter::once(&rule.conclusion));
    for (cond, span) in conds.zip(spans) {
        let known = schema.get(&cond.attribute).map(|a| a.allows(&cond.value));
        match (known, mode) {
            (Some(true), _) => {}
            (_, UnknownAttributes::Extend) => schema.extend_with(&cond.attribute, &cond.value),
            (None, UnknownAttributes::Warn) => warnings.push(ParseDiagnostic::warning(
                span,
                format!("unknown attribute '{}'", cond.attribute),
            )),
            (Some(false), UnknownAttributes::Warn) => warnings.push(ParseDiagnostic::warning(
                span,
                format!("value '{}' not in domain of '{}'", cond.value, cond.attribute),
            )),
        }
    }
    Ok(Parsed {
        value: rule,
        warnings,
    })
}

fn observations(
    cur: &mut Cursor,
    close: Option<char>,
) -> Result<Vec<(Fact, SourceSpan)>, ParseError> {
    let mut out: Vec<(Fact, SourceSpan)> = Vec::new();
    if let Some(c) = close {
        if cur.eat_punct(c) {
            return Ok(out);
        }
    }
    loop {
        let (f, span) = condition(cur)?;
        if out.iter().any(|(g, _)| g.attribute == f.attribute) {
            return Err(ParseError::at(
                span,
                format!("duplicate attribute '{}' in case", f.attribute),
            ));
        }
        out.push((f, span));
        if !cur.eat_punct(',') {
            break;
        }
    }
    if let Some(c) = close {
        cur.expect_punct(c)?;
    }
    Ok(out)
}

fn case_with_spans(
    text: &str,
    goal: &str,
) -> Result<Option<(CaseRecord, Vec<(Fact, SourceSpan)>)>, ParseError> {
    let mut cur = Cursor::new(text, 1)?;
    if cur.at_end() {
        return Err(cur.error("empty case"));
    }
    if matches!(cur.peek().map(|t| &t.tok), Some(Tok::Neck)) {
        // Prolog directive such as `:- dynamic (hepatitis/3).`
        return Ok(None);
    }
    let (id, label, obs) = if cur.eat_keyword("CASE") {
        let id = cur.expect_uint("case id")?;
        let (label, _) = cur.expect_ident("case label")?;
        cur.expect_punct(':')?;
        let obs = observations(&mut cur, None)?;
        (id, label, obs)
    } else {
        cur.expect_ident("CASE or a clause functor")?;
        cur.expect_punct('(')?;
        let id = cur.expect_uint("case id")?;
        cur.expect_punct(',')?;
        let (label, _) = cur.expect_ident("case label")?;
        cur.expect_punct(',')?;
        cur.expect_punct('[')?;
        let obs = observations(&mut cur, Some(']'))?;
        cur.expect_punct(')')?;
        cur.expect_punct('.')?;
        (id, label, obs)
    };
    cur.expect_end()?;
    let id = u32::try_from(id)
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ParseError::at(SourceSpan::new(1, 1, 1), "case id must be a positive 32-bit integer"))?;
    let record = CaseRecord {
        id,
        label: Fact::new(goal, label),
        observations: obs.iter().map(|(f, _)| f.clone()).collect(),
    };
    Ok(Some((record, obs)))
}

/// Parses one case in native (`CASE 1 positive: a=yes, b=no`) or Prolog
/// clause (`hepatitis(1,positive,[a=yes,b=no]).`) form. Directives
/// (`:- ...`) yield `None`.
pub fn parse_case(text: &str, goal: &str) -> Result<Option<CaseRecord>, ParseError> {
    case_with_spans(text, goal).map(|o| o.map(|(c, _)| c))
}

/// Like [`parse_case`], but requires exactly the attributes in `expected`.
pub fn parse_case_checked(
    text: &str,
    goal: &str,
    expected: &[String],
) -> Result<Option<CaseRecord>, ParseError> {
    let Some((record, spans)) = case_with_spans(text, goal)? else {
        return Ok(None);
    };
    for (f, span) in &spans {
        if !expected.contains(&f.attribute) {
            return Err(ParseError::at(
                *span,
                format!("attribute '{}' is not a case attribute", f.attribute),
            ));
        }
    }
    if let Some(missing) = expected.iter().find(|a| record.value_of(a).is_none()) {
        return Err(ParseError::at(
            SourceSpan::new(1, 1, text.len() + 1),
            format!("case {} is missing attribute '{missing}'", record.id),
        ));
    }
    Ok(Some(record))
}

/// Strips an editor listing number (`12 hepatitis(...)`) from a line.
fn strip_listing_number(line: &str) -> (&str, usize) {
    let trimmed = line.trim_start();
    let digits = trimmed.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return (line, 0);
    }
    let rest = &trimmed[digits..];
    let body = rest.trim_start();
    if body.len() < rest.len() && (body.starts_with(":-") || body.starts_with(|c: char| c.is_ascii_alphabetic())) {
        (body, line.len() - body.len())
    } else {
        (line, 0)
    }
}

/// Imports a Prolog case file: one `name(Id,Label,[a=v,...]).` clause per
/// line. Directives, blank lines and `%` comments are skipped, as are editor
/// listing numbers in front of a clause.
pub fn parse_prolog_cases(text: &str, goal: &str) -> Result<Vec<CaseRecord>, ParseError> {
    let mut out: Vec<CaseRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let (line, offset) = strip_listing_number(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let shift = |e: ParseError| {
            let mut e = e.on_line(line_no);
            e.0.span.start += offset;
            e.0.span.end += offset;
            e
        };
        if let Some(case) = parse_case(line, goal).map_err(shift)? {
            if out.iter().any(|c| c.id == case.id) {
                return Err(ParseError::at(
                    SourceSpan::new(line_no, 1, raw.len() + 1),
                    format!("duplicate case id {}", case.id),
                ));
            }
            out.push(case);
        }
    }
    Ok(out)
}

/// Parses `ATTR name {v1, v2} askable "prompt"`.
pub fn parse_attribute(text: &str) -> Result<AttributeDef, ParseError> {
    match parse_schema_line(text)? {
        SchemaLine::Attribute(a) => Ok(a),
        _ => Err(ParseError::at(SourceSpan::new(1, 1, 1), "expected ATTR")),
    }
}

/// One statement of the `@schema` section.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemaLine {
    Attribute(AttributeDef),
    Goal(String),
    AllowDefaults,
}

pub fn parse_schema_line(text: &str) -> Result<SchemaLine, ParseError> {
    let mut cur = Cursor::new(text, 1)?;
    let line = if cur.eat_keyword("ATTR") {
        let (name, _) = cur.expect_ident("attribute name")?;
        cur.expect_punct('{')?;
        let mut domain: Vec<String> = Vec::new();
        loop {
            let (v, span) = cur.expect_ident("domain value")?;
            if domain.contains(&v) {
                return Err(ParseError::at(span, format!("duplicate domain value '{v}'")));
            }
            domain.push(v);
            if cur.eat_punct('}') {
                break;
            }
            cur.expect_punct(',')?;
        }
        let askable = cur.eat_keyword("askable");
        let prompt = cur.eat_string();
        SchemaLine::Attribute(AttributeDef {
            name,
            domain,
            askable,
            prompt,
        })
    } else if cur.eat_keyword("GOAL") {
        SchemaLine::Goal(cur.expect_ident("goal attribute")?.0)
    } else if cur.eat_keyword("ALLOW_DEFAULTS") {
        SchemaLine::AllowDefaults
    } else {
        return Err(cur.error("expected ATTR, GOAL or ALLOW_DEFAULTS"));
    };
    cur.expect_end()?;
    Ok(line)
}

/// Parses `ADVICE attr=value "text"`.
pub fn parse_advice(text: &str) -> Result<(Fact, String), ParseError> {
    let mut cur = Cursor::new(text, 1)?;
    cur.expect_keyword("ADVICE")?;
    let (fact, _) = condition(&mut cur)?;
    let advice = cur.expect_string("advice text")?;
    cur.expect_end()?;
    Ok((fact, advice))
}

/// Parses `AUDIT <rfc3339> <actor> <action> ids=a,b | RULE ... | RULE ...`.
pub fn parse_audit(text: &str) -> Result<AuditEntry, ParseError> {
    let trimmed = text.trim_start();
    let lead = text.len() - trimmed.len();
    let kw_end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
    if !trimmed[..kw_end].eq_ignore_ascii_case("AUDIT") {
        return Err(ParseError::at(SourceSpan::new(1, lead + 1, lead + kw_end + 1), "expected AUDIT"));
    }
    let after_kw = &trimmed[kw_end..];
    let ts_text = after_kw.trim_start();
    let ts_start = lead + kw_end + (after_kw.len() - ts_text.len());
    let ts_len = ts_text.find(char::is_whitespace).unwrap_or(ts_text.len());
    let ts_span = SourceSpan::new(1, ts_start + 1, ts_start + ts_len + 1);
    let timestamp: DateTime<Utc> = DateTime::parse_from_rfc3339(&ts_text[..ts_len])
        .map_err(|e| ParseError::at(ts_span, format!("invalid timestamp: {e}")))?
        .with_timezone(&Utc);

    let rest_start = ts_start + ts_len;
    let rest = &text[rest_start..];
    // Header and rule texts are separated by top-level `|`.
    let mut cur = Cursor::new(rest, 1).map_err(|e| shift_cols(e, rest_start))?;
    let header = (|| {
        let actor = if cur.eat_keyword("system") {
            Actor::System
        } else if cur.eat_keyword("expert") {
            Actor::Expert(cur.expect_string("expert identity")?)
        } else {
            return Err(cur.error("expected actor 'system' or 'expert \"name\"'"));
        };
        let (action_word, aspan) = cur.expect_ident("audit action")?;
        let action = AuditAction::parse(&action_word)
            .ok_or_else(|| ParseError::at(aspan, format!("unknown audit action '{action_word}'")))?;
        cur.expect_keyword("ids")?;
        cur.expect_punct('=')?;
        let mut ids = Vec::new();
        if !cur.at_end() && !cur.is_punct('|') {
            loop {
                ids.push(cur.expect_ident("rule id")?.0);
                if !cur.eat_punct(',') {
                    break;
                }
            }
        }
        Ok((actor, action, ids))
    })()
    .map_err(|e| shift_cols(e, rest_start))?;
    let (actor, action, rule_ids) = header;

    let mut rules = Vec::new();
    if !cur.at_end() {
        let bar = cur.peek().map(|t| t.start).unwrap_or(rest.len());
        cur.expect_punct('|').map_err(|e| shift_cols(e, rest_start))?;
        let body_start = rest_start + bar + 1;
        let mut offset = body_start;
        for part in text[body_start..].split('|') {
            let rule = parse_rule(part.trim()).map_err(|e| {
                let lead = part.len() - part.trim_start().len();
                shift_cols(e, offset + lead)
            })?;
            if !rule_ids.contains(&rule.id) {
                return Err(ParseError::at(
                    SourceSpan::new(1, offset + 1, offset + part.len() + 1),
                    format!("rule '{}' is not listed in ids", rule.id),
                ));
            }
            rules.push(rule);
            offset += part.len() + 1;
        }
    }
    Ok(AuditEntry {
        timestamp,
        actor,
        action,
        rule_ids,
        rules,
    })
}

fn shift_cols(mut e: ParseError, by: usize) -> ParseError {
    e.0.span.start += by;
    e.0.span.end += by;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExperienceStats;

    #[test]
    fn parses_long_leaf_rule() {
        let r = parse_rule("RULE r2: IF hbsagreact=yes AND igmantihbcreact=no THEN hbv=positive [exp=9]")
            .unwrap();
        assert_eq!(r.id, "r2");
        assert_eq!(r.premises.len(), 2);
        assert_eq!(r.premises[0], Fact::new("hbsagreact", "yes"));
        assert_eq!(r.conclusion, Fact::new("hbv", "positive"));
        assert_eq!(r.stats.support, 9);
        assert_eq!(r.origin, RuleOrigin::Authored);
    }

    #[test]
    fn minimal_rule_has_zero_experience() {
        let r = parse_rule("RULE t: IF a=yes THEN g=positive").unwrap();
        assert_eq!(r.premises.len(), 1);
        assert_eq!(r.experience(), 0);
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let a = parse_rule("rule t: if a=yes and b=no then g=p").unwrap();
        let b = parse_rule("RULE t: IF a=yes AND b=no THEN g=p").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_annotation() {
        let r = parse_rule("RULE d1: IF a=yes THEN g=p [exp=2, fired=5, origin=discovered]").unwrap();
        assert_eq!(r.stats, ExperienceStats { support: 2, firings: 5 });
        assert_eq!(r.origin, RuleOrigin::Discovered);
    }

    #[test]
    fn default_rule_syntax() {
        let r = parse_rule("RULE d: DEFAULT THEN g=negative").unwrap();
        assert!(r.is_default());
    }

    #[test]
    fn syntax_errors_carry_spans() {
        let e = parse_rule("RULE r1: IF a=yes THEN").unwrap_err();
        assert_eq!(e.0.span.line, 1);
        assert_eq!(e.0.span.start, 23);
        let e = parse_rule("RULE r1 IF a=yes THEN g=p").unwrap_err();
        assert!(e.0.message.contains("':'"), "{}", e.0.message);
        assert_eq!(e.0.span.start, 9);
    }

    #[test]
    fn rejects_repeated_premise_attribute_and_self_conclusion() {
        assert!(parse_rule("RULE r: IF a=yes AND a=no THEN g=p").is_err());
        assert!(parse_rule("RULE r: IF a=yes THEN a=no").is_err());
        assert!(parse_rule("RULE r: IF a=yes THEN g=p [exp=1, exp=2]").is_err());
        assert!(parse_rule("RULE r: IF a=yes THEN g=p [bogus=1]").is_err());
    }

    #[test]
    fn unknown_attribute_warns_or_extends() {
        let mut schema: Schema = [AttributeDef::new("a", &["yes", "no"], true)].into_iter().collect();
        let p = parse_rule_in("RULE r: IF a=yes AND hiv=positive THEN g=p", &mut schema, UnknownAttributes::Warn)
            .unwrap();
        assert_eq!(p.warnings.len(), 2);
        assert!(p.warnings[0].message.contains("hiv"));
        assert_eq!(p.warnings[0].span.start, 22);
        assert!(!schema.contains("hiv"));

        let p = parse_rule_in("RULE r: IF a=yes AND hiv=positive THEN g=p", &mut schema, UnknownAttributes::Extend)
            .unwrap();
        assert!(p.warnings.is_empty());
        assert!(schema.get("hiv").unwrap().askable);
        assert!(schema.contains("g"));
    }

    #[test]
    fn prolog_case_line() {
        let c = parse_case(
            "hepatitis(2,positive,[symptoms=yes,jaundice=yes,hbsagreact=yes,hbsagnonreact=yes,igmantihbcreact=no,checkHBV=no]).",
            "hbv",
        )
        .unwrap()
        .unwrap();
        assert_eq!(c.id, 2);
        assert_eq!(c.label, Fact::new("hbv", "positive"));
        assert_eq!(c.observations.len(), 6);
        assert_eq!(c.value_of("checkHBV"), Some("no"));
    }

    #[test]
    fn directive_is_skipped() {
        assert_eq!(parse_case(":- dynamic (hepatitis/3).", "hbv").unwrap(), None);
    }

    #[test]
    fn both_case_syntaxes_agree() {
        let a = parse_case("hepatitis(7,negative,[a=yes,b=no]).", "g").unwrap();
        let b = parse_case("CASE 7 negative: a=yes, b=no", "g").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn case_errors() {
        assert!(parse_case("CASE 1 p: a=yes, a=no", "g").is_err());
        assert!(parse_case("CASE 0 p: a=yes", "g").is_err());
        assert!(parse_case("hepatitis(1,p,[a=yes])", "g").is_err());
        let expected = vec!["a".to_string(), "b".to_string()];
        let e = parse_case_checked("CASE 1 p: a=yes", "g", &expected).unwrap_err();
        assert!(e.0.message.contains("missing attribute 'b'"));
        let e = parse_case_checked("CASE 1 p: a=yes, b=no, c=no", "g", &expected).unwrap_err();
        assert!(e.0.message.contains("'c'"));
        assert!(parse_case_checked("CASE 1 p: b=no, a=yes", "g", &expected).is_ok());
    }

    #[test]
    fn prolog_import_with_listing_numbers() {
        let text = "1 :- dynamic (hepatitis/3).\n2 hepatitis(1,positive,[a=no]).\n\n% note\nhepatitis(2,negative,[a=yes]).\n";
        let cases = parse_prolog_cases(text, "g").unwrap();
        assert_eq!(cases.len(), 2);
        let e = parse_prolog_cases("hepatitis(1,p,[a=no]).\nhepatitis(1,p,[a=no]).", "g").unwrap_err();
        assert_eq!(e.0.span.line, 2);
        let e = parse_prolog_cases("hepatitis(1,p,[a=no]).\n7 hepatitis(2,p,[a=no]", "g").unwrap_err();
        assert_eq!(e.0.span.line, 2);
        assert!(e.0.span.start > 2);
    }

    #[test]
    fn schema_and_advice_lines() {
        let a = parse_attribute(r#"ATTR hbsagreact {yes, no} askable "Is HBsAg reactive?""#).unwrap();
        assert_eq!(a.domain, vec!["yes", "no"]);
        assert!(a.askable);
        assert_eq!(a.prompt.as_deref(), Some("Is HBsAg reactive?"));
        assert!(parse_attribute("ATTR x {a, a}").is_err());
        assert_eq!(parse_schema_line("GOAL hbv").unwrap(), SchemaLine::Goal("hbv".into()));
        let (f, t) = parse_advice(r#"ADVICE hbv=positive "Refer to hepatology.""#).unwrap();
        assert_eq!(f, Fact::new("hbv", "positive"));
        assert_eq!(t, "Refer to hepatology.");
    }

    #[test]
    fn audit_line() {
        let e = parse_audit(
            r#"AUDIT 2026-10-18T09:30:00Z expert "Dr. A | B" rule_added ids=d1,r3 | RULE d1: IF a=yes THEN g=p [exp=0, origin=discovered]"#,
        )
        .unwrap();
        assert_eq!(e.actor, Actor::Expert("Dr. A | B".into()));
        assert_eq!(e.action, AuditAction::RuleAdded);
        assert_eq!(e.rule_ids, vec!["d1", "r3"]);
        assert_eq!(e.rules.len(), 1);
        assert_eq!(e.rules[0].origin, RuleOrigin::Discovered);

        let e = parse_audit("AUDIT 2026-10-18T09:30:00Z system rule_removed ids=r1").unwrap();
        assert!(e.rules.is_empty());
        assert!(parse_audit("AUDIT yesterday system rule_removed ids=r1").is_err());
        assert!(parse_audit("AUDIT 2026-10-18T09:30:00Z system rule_added ids=r1 | RULE r2: IF a=b THEN c=d").is_err());
    }
}
