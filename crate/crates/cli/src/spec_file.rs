//! Sectioned game files.
//!
//! ```text
//! [game]
//! N = 2
//! d = 1
//! T = 1
//!
//! [actions]
//! a1 = -1, 0, 1
//! a2 = (0, 1), (1, 0)      # multi-component actions in parentheses
//!
//! [dynamics]
//! b1 = a1 + a2_1
//!
//! [running]                # or [table] with rows `0, (1, 0) => 2, 1`
//! f1 = 0
//! f2 = 0
//!
//! [terminal]
//! g1 = tanh(x1 - 0.5)
//! g2 = -tanh(x1 - 0.5)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use sdgame_core::dsl::parse_str;
use sdgame_core::game::{Action, GameSpec, GameSpecBuilder};

use crate::error::CliError;

const SECTIONS: [&str; 6] = ["game", "actions", "dynamics", "running", "table", "terminal"];

#[derive(Debug, Default)]
struct Section {
    line: usize,
    entries: Vec<(usize, String)>,
}

struct Source<'a> {
    origin: &'a str,
}

impl Source<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> CliError {
        CliError::Spec {
            file: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }
}

pub fn load_spec(path: &Path) -> Result<GameSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_spec(&text, &path.display().to_string())
}

fn split_key(src: &Source<'_>, line: usize, text: &str) -> Result<(String, String), CliError> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| src.err(line, format!("expected 'key = value', found '{text}'")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Splits on commas outside parentheses.
fn split_top(text: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => parts.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    parts.push(cur);
    parts.into_iter().map(|p| p.trim().to_string()).collect()
}

fn parse_number(src: &Source<'_>, line: usize, text: &str) -> Result<f64, CliError> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| src.err(line, format!("'{text}' is not a finite number")))
}

fn parse_action(src: &Source<'_>, line: usize, text: &str) -> Result<Action, CliError> {
    let text = text.trim();
    if let Some(inner) = text.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
        inner.split(',').map(|p| parse_number(src, line, p)).collect()
    } else {
        Ok(vec![parse_number(src, line, text)?])
    }
}

/// Expressions keyed `prefix1 .. prefixK`, in index order.
fn indexed_exprs(
    src: &Source<'_>,
    section: &Section,
    name: &str,
    prefix: &str,
    expected: usize,
) -> Result<Vec<String>, CliError> {
    let mut found: BTreeMap<usize, String> = BTreeMap::new();
    for (line, text) in &section.entries {
        let (key, value) = split_key(src, *line, text)?;
        let index = key
            .strip_prefix(prefix)
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| {
                src.err(
                    *line,
                    format!("[{name}] keys are {prefix}1, {prefix}2, …; found '{key}'"),
                )
            })?;
        parse_str(&value).map_err(|e| src.err(*line, format!("{key}: {e}")))?;
        if found.insert(index, value).is_some() {
            return Err(src.err(*line, format!("{key} given twice")));
        }
    }
    if found.len() != expected || found.keys().last() != Some(&expected) {
        return Err(src.err(
            section.line,
            format!(
                "dimension mismatch: [{name}] has {} expression(s), expected {expected} ({prefix}1..{prefix}{expected})",
                found.len()
            ),
        ));
    }
    Ok(found.into_values().collect())
}

pub fn parse_spec(text: &str, origin: &str) -> Result<GameSpec, CliError> {
    let src = Source { origin };
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            let name = name.trim().to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(src.err(line, format!("unknown section [{name}]")));
            }
            if sections.contains_key(&name) {
                return Err(src.err(line, format!("section [{name}] appears twice")));
            }
            sections.insert(
                name.clone(),
                Section {
                    line,
                    entries: Vec::new(),
                },
            );
            current = Some(name);
            continue;
        }
        match &current {
            Some(name) => sections
                .get_mut(name)
                .expect("section exists")
                .entries
                .push((line, content.to_string())),
            None => return Err(src.err(line, "content before the first section")),
        }
    }
    let require = |name: &str| -> Result<&Section, CliError> {
        sections.get(name).ok_or_else(|| CliError::MissingSection {
            file: origin.to_string(),
            section: name.to_string(),
        })
    };

    let game = require("game")?;
    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (line, text) in &game.entries {
        let (key, value) = split_key(&src, *line, text)?;
        header.insert(key, (*line, value));
    }
    let get = |key: &str| {
        header
            .get(key)
            .ok_or_else(|| src.err(game.line, format!("[game] is missing '{key}'")))
    };
    let count = |key: &str| -> Result<usize, CliError> {
        let (line, v) = get(key)?;
        v.parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| src.err(*line, format!("{key} must be a positive integer, found '{v}'")))
    };
    let n = count("N")?;
    let d = count("d")?;
    let horizon = {
        let (line, v) = get("T")?;
        parse_number(&src, *line, v)?
    };

    let actions = require("actions")?;
    let mut grids: BTreeMap<usize, Vec<Action>> = BTreeMap::new();
    for (line, text) in &actions.entries {
        let (key, value) = split_key(&src, *line, text)?;
        let player = key
            .strip_prefix('a')
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| (1..=n).contains(&k))
            .ok_or_else(|| src.err(*line, format!("action key '{key}' is not one of a1..a{n}")))?;
        let grid = split_top(&value)
            .iter()
            .map(|p| parse_action(&src, *line, p))
            .collect::<Result<Vec<_>, _>>()?;
        grids.insert(player, grid);
    }
    if grids.len() != n {
        return Err(src.err(
            actions.line,
            format!("dimension mismatch: [actions] lists {} player(s), N = {n}", grids.len()),
        ));
    }

    let mut builder = GameSpecBuilder::new(n, d, horizon);
    for grid in grids.into_values() {
        builder = builder.actions(grid);
    }
    builder = builder.drift(&indexed_exprs(&src, require("dynamics")?, "dynamics", "b", d)?);
    match (sections.get("running"), sections.get("table")) {
        (Some(_), Some(table)) => {
            return Err(src.err(table.line, "give either [running] or [table], not both"));
        }
        (Some(running), None) => {
            builder = builder.running(&indexed_exprs(&src, running, "running", "f", n)?);
        }
        (None, Some(table)) => {
            for (line, text) in &table.entries {
                let (lhs, rhs) = text
                    .split_once("=>")
                    .ok_or_else(|| src.err(*line, "table rows read 'a1, a2, … => f1, f2, …'"))?;
                let profile = split_top(lhs)
                    .iter()
                    .map(|p| parse_action(&src, *line, p))
                    .collect::<Result<Vec<_>, _>>()?;
                let payoff = rhs
                    .split(',')
                    .map(|p| parse_number(&src, *line, p))
                    .collect::<Result<Vec<_>, _>>()?;
                if profile.len() != n || payoff.len() != n {
                    return Err(src.err(
                        *line,
                        format!("dimension mismatch: table row needs {n} actions and {n} payoffs"),
                    ));
                }
                builder = builder.table_row(profile, payoff);
            }
        }
        (None, None) => {
            return Err(CliError::MissingSection {
                file: origin.to_string(),
                section: "running".into(),
            })
        }
    }
    builder = builder.terminal(&indexed_exprs(&src, require("terminal")?, "terminal", "g", n)?);
    builder.build().map_err(|e| src.err(0, e.to_string()))
}
