//! How actions are shown to a policy under each context mode.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error};

/// How much semantic context accompanies each offered action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextMode {
    /// `Action i`
    #[serde(rename = "io")]
    IndexOnly,
    /// The action's name.
    #[serde(rename = "no")]
    NameOnly,
    /// `Action i: <description>`
    #[serde(rename = "do")]
    DescriptionOnly,
    /// `<name>: <description>`
    #[serde(rename = "nd")]
    NameAndDescription,
}

impl ContextMode {
    pub const ALL: [ContextMode; 4] = [
        ContextMode::IndexOnly,
        ContextMode::NameOnly,
        ContextMode::DescriptionOnly,
        ContextMode::NameAndDescription,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ContextMode::IndexOnly => "io",
            ContextMode::NameOnly => "no",
            ContextMode::DescriptionOnly => "do",
            ContextMode::NameAndDescription => "nd",
        }
    }

    pub fn shows_name(self) -> bool {
        matches!(self, ContextMode::NameOnly | ContextMode::NameAndDescription)
    }

    pub fn shows_description(self) -> bool {
        matches!(self, ContextMode::DescriptionOnly | ContextMode::NameAndDescription)
    }

    /// The token a policy uses to name the action at 1-based `index`.
    pub fn label(self, index: usize, name: &str) -> String {
        if self.shows_name() {
            name.to_string()
        } else {
            format!("Action {index}")
        }
    }

    /// One line of the action list.
    pub fn block(self, index: usize, name: &str, description: &str) -> String {
        let label = self.label(index, name);
        if self.shows_description() {
            format!("{label}: {description}")
        } else {
            label
        }
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "io" => Ok(ContextMode::IndexOnly),
            "no" => Ok(ContextMode::NameOnly),
            "do" => Ok(ContextMode::DescriptionOnly),
            "nd" | "dn" => Ok(ContextMode::NameAndDescription),
            other => Err(domain(format!("unknown context mode {other:?}"))),
        }
    }
}

/// An action as offered to a policy: its label plus whatever the mode reveals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OfferedAction {
    pub label: String,
    pub name: Option<String>,
    pub description: Option<String>,
}

/// Renders the action list and the parallel offered-action metadata.
pub fn offer<'a, I>(mode: ContextMode, actions: I) -> (String, Vec<OfferedAction>)
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut lines = Vec::new();
    let mut offered = Vec::new();
    for (i, (name, description)) in actions.into_iter().enumerate() {
        let index = i + 1;
        lines.push(mode.block(index, name, description));
        offered.push(OfferedAction {
            label: mode.label(index, name),
            name: mode.shows_name().then(|| name.to_string()),
            description: mode.shows_description().then(|| description.to_string()),
        });
    }
    (lines.join("\n"), offered)
}

/// Resolves a policy's answer to an index into the offered list: exact or
/// prefix match on names, then `Action i` or a bare `i`.
pub fn match_label(answer: &str, names: &[&str]) -> Option<usize> {
    let answer = answer
        .trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '[' | ']' | '.' | ','))
        .trim();
    if answer.is_empty() {
        return None;
    }
    let lower = answer.to_lowercase();
    if let Some(i) = names.iter().position(|n| n.to_lowercase() == lower) {
        return Some(i);
    }
    let prefix = names
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            let n = n.to_lowercase();
            lower.starts_with(&n)
                && lower[n.len()..]
                    .chars()
                    .next()
                    .is_none_or(|c| !c.is_alphanumeric())
        })
        .max_by_key(|(_, n)| n.len())
        .map(|(i, _)| i);
    if prefix.is_some() {
        return prefix;
    }
    parse_index(&lower, names.len())
}

/// Parses `Action i` or a bare `i` (1-based, case-insensitive) into a 0-based index below `n`.
pub fn parse_index(answer: &str, n: usize) -> Option<usize> {
    let lower = answer.trim().to_lowercase();
    let rest = lower.strip_prefix("action").unwrap_or(&lower).trim_start();
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() || rest[digits.len()..].chars().next().is_some_and(|c| c.is_alphanumeric()) {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    (1..=n).contains(&index).then(|| index - 1)
}
