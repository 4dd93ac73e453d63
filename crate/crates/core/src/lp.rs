//! Learning-progression level assignment.
//!
//! Each modality carries an ordered list of [`LevelRule`]s evaluated from the
//! highest level down; the first rule whose constraints all hold decides the
//! level. Every list ends in an unconstrained level-0 rule, so assignment is
//! total over valid vectors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rubric::{CategoryId, CategoryVector, Modality, Polarity, RubricSpec};

/// Level on the progression (0-3); the electroscope rules only reach 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LpLevel {
    pub value: u8,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinCount {
    pub ids: BTreeSet<CategoryId>,
    pub threshold: usize,
}

/// One row of a level table. Absent fields impose no constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRule {
    pub level: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_count: Option<MinCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub require_zero: Option<BTreeSet<CategoryId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub require_any_one: Option<BTreeSet<CategoryId>>,
}

impl LevelRule {
    pub fn catch_all() -> Self {
        LevelRule {
            level: 0,
            min_count: None,
            require_zero: None,
            require_any_one: None,
        }
    }

    fn is_unconstrained(&self) -> bool {
        self.min_count.is_none() && self.require_zero.is_none() && self.require_any_one.is_none()
    }

    pub fn matches(&self, v: &CategoryVector) -> bool {
        if let Some(mc) = &self.min_count {
            if mc.ids.iter().filter(|id| v.is_one(**id)).count() < mc.threshold {
                return false;
            }
        }
        if let Some(zero) = &self.require_zero {
            if zero.iter().any(|id| v.is_one(*id)) {
                return false;
            }
        }
        if let Some(any) = &self.require_any_one {
            if !any.iter().any(|id| v.is_one(*id)) {
                return false;
            }
        }
        true
    }

    fn referenced_ids(&self) -> impl Iterator<Item = CategoryId> + '_ {
        let mc = self.min_count.iter().flat_map(|m| m.ids.iter());
        let z = self.require_zero.iter().flatten();
        let a = self.require_any_one.iter().flatten();
        mc.chain(z).chain(a).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRuleSet {
    pub model: Vec<LevelRule>,
    pub explanation: Vec<LevelRule>,
}

impl LevelRuleSet {
    pub fn rules(&self, modality: Modality) -> &[LevelRule] {
        match modality {
            Modality::Model => &self.model,
            Modality::Explanation => &self.explanation,
        }
    }

    pub(crate) fn check(&self, rubric: &RubricSpec) -> Result<()> {
        for modality in Modality::ALL {
            let rules = self.rules(modality);
            let Some(last) = rules.last() else {
                return Err(Error::InvalidRubric(format!("no level rules for {modality}")));
            };
            if last.level != 0 || !last.is_unconstrained() {
                return Err(Error::InvalidRubric(format!(
                    "{modality} rules must end with an unconstrained level 0 rule"
                )));
            }
            if rules.windows(2).any(|w| w[0].level <= w[1].level) {
                return Err(Error::InvalidRubric(format!(
                    "{modality} rules must be in strictly descending level order"
                )));
            }
            for rule in rules {
                if rule.level > 3 {
                    return Err(Error::InvalidRubric(format!("level {} out of range 0-3", rule.level)));
                }
                if let Some(mc) = &rule.min_count {
                    if mc.threshold > mc.ids.len() {
                        return Err(Error::InvalidRubric(format!(
                            "{modality} level {} threshold {} exceeds {} ids",
                            rule.level,
                            mc.threshold,
                            mc.ids.len()
                        )));
                    }
                }
                for id in rule.referenced_ids() {
                    let cat = rubric.category(id).ok_or(Error::UnknownCategoryId(id))?;
                    if cat.modality != modality {
                        return Err(Error::InvalidRubric(format!(
                            "{modality} level {} rule references {} category {id}",
                            rule.level, cat.modality
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Index of the first matching rule for `modality`.
    pub fn matching_rule(&self, modality: Modality, v: &CategoryVector) -> usize {
        self.rules(modality)
            .iter()
            .position(|r| r.matches(v))
            .expect("rule lists end with a catch-all")
    }

    pub fn level(&self, modality: Modality, v: &CategoryVector) -> LpLevel {
        let idx = self.matching_rule(modality, v);
        LpLevel {
            value: self.rules(modality)[idx].level,
            modality,
        }
    }

    pub fn assign_model_level(&self, v: &CategoryVector) -> LpLevel {
        self.level(Modality::Model, v)
    }

    pub fn assign_explanation_level(&self, v: &CategoryVector) -> LpLevel {
        self.level(Modality::Explanation, v)
    }

    pub fn max_level(&self, modality: Modality) -> u8 {
        self.rules(modality).first().map_or(0, |r| r.level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelAssignment {
    pub model_level: LpLevel,
    pub explanation_level: LpLevel,
    /// `"<modality>/level<n>"` for the rule that fired in each modality.
    pub matched_rule_ids: Vec<String>,
    pub accurate_count_model: usize,
    pub triggered_inaccuracies: BTreeSet<CategoryId>,
}

impl LevelAssignment {
    pub fn level(&self, modality: Modality) -> LpLevel {
        match modality {
            Modality::Model => self.model_level,
            Modality::Explanation => self.explanation_level,
        }
    }
}

/// Assign both modality levels plus diagnostics. `v` should already be validated.
pub fn assign(rubric: &RubricSpec, v: &CategoryVector) -> LevelAssignment {
    let rules = rubric.level_rules();
    let model_level = rules.assign_model_level(v);
    let explanation_level = rules.assign_explanation_level(v);
    let accurate_count_model = rubric
        .ids_with(Modality::Model, Polarity::Accurate)
        .into_iter()
        .filter(|id| v.is_one(*id))
        .count();
    let triggered_inaccuracies = Modality::ALL
        .iter()
        .flat_map(|m| rubric.ids_with(*m, Polarity::Inaccurate))
        .filter(|id| v.is_one(*id))
        .collect();
    LevelAssignment {
        matched_rule_ids: vec![
            format!("model/level{}", model_level.value),
            format!("explanation/level{}", explanation_level.value),
        ],
        model_level,
        explanation_level,
        accurate_count_model,
        triggered_inaccuracies,
    }
}
