//! Template-driven formative feedback.
//!
//! A [`TemplatePack`] is an ordered list of rules. For each modality, every
//! rule whose predicate holds contributes its fragment, in pack order; the
//! modality default is used only when no rule fires.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LevelAssignment;
use crate::rubric::{CategoryId, CategoryVector, Modality, Polarity, RubricSpec};

const ELECTROSCOPE_PACK: &str = include_str!("../data/electroscope_feedback.json");

/// Largest modality the totality check will enumerate (2^20 vectors).
const MAX_ENUMERATED_IDS: usize = 20;

pub const PLACEHOLDERS: [&str; 3] = ["level", "missing_ids", "triggered_ids"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FragmentClass {
    Praise,
    Guidance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub ids_one: BTreeSet<CategoryId>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub ids_zero: BTreeSet<CategoryId>,
}

impl Predicate {
    pub fn holds(&self, level: u8, v: &CategoryVector) -> bool {
        self.level.is_none_or(|l| l == level)
            && self.ids_one.iter().all(|id| v.is_one(*id))
            && self.ids_zero.iter().all(|id| !v.is_one(*id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRule {
    pub id: String,
    pub modality: Modality,
    pub class: FragmentClass,
    #[serde(default)]
    pub applies_when: Predicate,
    pub fragment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefaultFragment {
    pub class: FragmentClass,
    pub fragment: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<DefaultFragment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<DefaultFragment>,
}

impl Defaults {
    pub fn get(&self, modality: Modality) -> Option<&DefaultFragment> {
        match modality {
            Modality::Model => self.model.as_ref(),
            Modality::Explanation => self.explanation.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePack {
    #[serde(default)]
    pub version: String,
    pub rules: Vec<FeedbackRule>,
    #[serde(default)]
    pub defaults: Defaults,
}

impl TemplatePack {
    /// The shipped electroscope pack (unvalidated).
    pub fn electroscope() -> Self {
        Self::from_json_str(ELECTROSCOPE_PACK, "electroscope_feedback.json").expect("shipped pack parses")
    }

    pub fn from_json_str(src: &str, source_name: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::parse(source_name, Some(e.line()), e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&src, &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeedbackStatement {
    pub response_id: String,
    pub model_text: String,
    pub explanation_text: String,
    pub matched_rule_ids: Vec<String>,
}

impl FeedbackStatement {
    pub fn text(&self, modality: Modality) -> &str {
        match modality {
            Modality::Model => &self.model_text,
            Modality::Explanation => &self.explanation_text,
        }
    }
}

/// Rule id reported when a modality falls back to its default fragment.
pub fn default_rule_id(modality: Modality) -> String {
    format!("default/{modality}")
}

/// A pack checked against a rubric; the only way to render feedback.
#[derive(Debug, Clone)]
pub struct ValidatedPack {
    pack: TemplatePack,
    accurate: BTreeMap<Modality, Vec<CategoryId>>,
    inaccurate: BTreeMap<Modality, Vec<CategoryId>>,
}

impl ValidatedPack {
    pub fn pack(&self) -> &TemplatePack {
        &self.pack
    }

    /// Class of a matched rule id, including default ids.
    pub fn class_of(&self, rule_id: &str) -> Option<FragmentClass> {
        if let Some(r) = self.pack.rules.iter().find(|r| r.id == rule_id) {
            return Some(r.class);
        }
        Modality::ALL
            .into_iter()
            .find(|m| default_rule_id(*m) == rule_id)
            .and_then(|m| self.pack.defaults.get(m).map(|d| d.class))
    }

    fn modality_of(&self, rule_id: &str) -> Option<Modality> {
        self.pack
            .rules
            .iter()
            .find(|r| r.id == rule_id)
            .map(|r| r.modality)
            .or_else(|| Modality::ALL.into_iter().find(|m| default_rule_id(*m) == rule_id))
    }

    /// Matched rule ids of `statement` that belong to `modality`.
    pub fn matched_for<'a>(
        &'a self,
        statement: &'a FeedbackStatement,
        modality: Modality,
    ) -> impl Iterator<Item = &'a str> + 'a {
        statement
            .matched_rule_ids
            .iter()
            .filter(move |id| self.modality_of(id) == Some(modality))
            .map(String::as_str)
    }

    fn matching<'a>(
        &'a self,
        modality: Modality,
        level: u8,
        v: &'a CategoryVector,
    ) -> impl Iterator<Item = &'a FeedbackRule> + 'a {
        self.pack
            .rules
            .iter()
            .filter(move |r| r.modality == modality && r.applies_when.holds(level, v))
    }

    fn substitute(&self, template: &str, modality: Modality, level: u8, v: &CategoryVector) -> String {
        let list = |ids: Vec<CategoryId>| {
            if ids.is_empty() {
                "none".to_string()
            } else {
                ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            }
        };
        let mut out = String::with_capacity(template.len());
        for piece in split_placeholders(template) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Placeholder("level") => out.push_str(&level.to_string()),
                Piece::Placeholder("missing_ids") => out.push_str(&list(
                    self.accurate[&modality]
                        .iter()
                        .copied()
                        .filter(|id| !v.is_one(*id))
                        .collect(),
                )),
                Piece::Placeholder("triggered_ids") => out.push_str(&list(
                    self.inaccurate[&modality]
                        .iter()
                        .copied()
                        .filter(|id| v.is_one(*id))
                        .collect(),
                )),
                Piece::Placeholder(other) => unreachable!("placeholder {other} passed validation"),
            }
        }
        out
    }

    /// Compose feedback for one response. `assignment` must come from `v`.
    pub fn render(
        &self,
        response_id: &str,
        assignment: &LevelAssignment,
        v: &CategoryVector,
    ) -> Result<FeedbackStatement> {
        let mut texts = Vec::with_capacity(2);
        let mut matched = Vec::new();
        for modality in Modality::ALL {
            let level = assignment.level(modality).value;
            let mut fragments = Vec::new();
            for rule in self.matching(modality, level, v) {
                fragments.push(self.substitute(&rule.fragment, modality, level, v));
                matched.push(rule.id.clone());
            }
            if fragments.is_empty() {
                let d = self
                    .pack
                    .defaults
                    .get(modality)
                    .ok_or(Error::NoMatchingRule(modality))?;
                fragments.push(self.substitute(&d.fragment, modality, level, v));
                matched.push(default_rule_id(modality));
            }
            texts.push(fragments.join(" "));
        }
        let explanation_text = texts.pop().unwrap_or_default();
        let model_text = texts.pop().unwrap_or_default();
        Ok(FeedbackStatement {
            response_id: response_id.to_string(),
            model_text,
            explanation_text,
            matched_rule_ids: matched,
        })
    }
}

/// Convenience wrapper over [`ValidatedPack::render`].
pub fn render_feedback(
    pack: &ValidatedPack,
    response_id: &str,
    assignment: &LevelAssignment,
    v: &CategoryVector,
) -> Result<FeedbackStatement> {
    pack.render(response_id, assignment, v)
}

enum Piece<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

/// Splits `{name}` placeholders (name = lowercase ascii and `_`) from literal text.
fn split_placeholders(s: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = s;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            if open > 0 {
                pieces.push(Piece::Text(&rest[..open]));
            }
            pieces.push(Piece::Placeholder(&after[..name_len]));
            rest = &after[name_len + 1..];
        } else {
            pieces.push(Piece::Text(&rest[..=open]));
            rest = after;
        }
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    pieces
}

/// Check id references, placeholders and totality of `pack` against `rubric`.
///
/// Totality is checked by enumerating every bit pattern of each modality's
/// categories, computing its level with the rubric rules, and requiring at
/// least one matching rule or a default.
pub fn validate_pack(pack: &TemplatePack, rubric: &RubricSpec) -> Result<ValidatedPack> {
    let mut ids = BTreeSet::new();
    for rule in &pack.rules {
        if !ids.insert(rule.id.as_str()) {
            return Err(Error::InvalidPack(format!("duplicate rule id {}", rule.id)));
        }
        for id in rule.applies_when.ids_one.iter().chain(&rule.applies_when.ids_zero) {
            let cat = rubric.category(*id).ok_or(Error::UnknownCategoryId(*id))?;
            if cat.modality != rule.modality {
                return Err(Error::InvalidPack(format!(
                    "rule {} ({}) references {} category {id}",
                    rule.id, rule.modality, cat.modality
                )));
            }
        }
        check_placeholders(&rule.fragment, &rule.id)?;
    }
    for modality in Modality::ALL {
        if let Some(d) = pack.defaults.get(modality) {
            check_placeholders(&d.fragment, &default_rule_id(modality))?;
        }
    }

    let validated = ValidatedPack {
        pack: pack.clone(),
        accurate: Modality::ALL
            .map(|m| (m, rubric.ids_with(m, Polarity::Accurate)))
            .into(),
        inaccurate: Modality::ALL
            .map(|m| (m, rubric.ids_with(m, Polarity::Inaccurate)))
            .into(),
    };

    for modality in Modality::ALL {
        if pack.defaults.get(modality).is_some() {
            continue;
        }
        let mod_ids = rubric.ids(modality);
        if mod_ids.len() > MAX_ENUMERATED_IDS {
            return Err(Error::InvalidPack(format!(
                "{modality} has {} categories; totality check enumerates at most {MAX_ENUMERATED_IDS}",
                mod_ids.len()
            )));
        }
        for_each_pattern(&mod_ids, |v| {
            let level = rubric.level_rules().level(modality, v).value;
            if validated.matching(modality, level, v).next().is_none() {
                return Err(Error::NonTotalPack {
                    modality,
                    level,
                    witness: v.describe(&mod_ids),
                });
            }
            Ok(())
        })?;
    }
    Ok(validated)
}

fn check_placeholders(fragment: &str, rule_id: &str) -> Result<()> {
    for piece in split_placeholders(fragment) {
        if let Piece::Placeholder(name) = piece {
            if !PLACEHOLDERS.contains(&name) {
                return Err(Error::UnknownPlaceholder(name.to_string(), rule_id.to_string()));
            }
        }
    }
    Ok(())
}

/// Calls `f` with every 0/1 assignment over `ids` (bit i of the counter is `ids[i]`).
pub fn for_each_pattern(ids: &[CategoryId], mut f: impl FnMut(&CategoryVector) -> Result<()>) -> Result<()> {
    let mut v = CategoryVector::from_scores(ids.iter().map(|id| (*id, 0)));
    for bits in 0u64..(1u64 << ids.len()) {
        for (i, id) in ids.iter().enumerate() {
            v.set(*id, ((bits >> i) & 1) as u8);
        }
        f(&v)?;
    }
    Ok(())
}
