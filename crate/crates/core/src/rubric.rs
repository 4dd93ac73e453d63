//! Declarative analytic rubric: categories, modalities, polarity, and
//! validation of per-response category vectors.
//!
//! A rubric is loaded from a JSON file (see [`RubricSpec::from_json_str`]) and
//! carries the level rules used by [`crate::lp`]. The electroscope rubric ships
//! as [`RubricSpec::electroscope`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LevelRuleSet;

const ELECTROSCOPE_RUBRIC: &str = include_str!("../data/electroscope_rubric.json");

/// Rubric category identifier (1-based in the shipped rubric).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u16);

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u16> for CategoryId {
    fn from(v: u16) -> Self {
        CategoryId(v)
    }
}

/// Representational channel of a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    /// Drawn scientific model.
    Model,
    /// Written explanation.
    Explanation,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Model, Modality::Explanation];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Model => "model",
            Modality::Explanation => "explanation",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a category marks an expected idea or a flagged inaccuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Accurate,
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Category {
    pub id: CategoryId,
    pub modality: Modality,
    pub polarity: Polarity,
    /// Stored for reporting; never interpreted.
    pub description: String,
}

#[derive(Deserialize)]
struct RawCategory {
    id: CategoryId,
    modality: Modality,
    polarity: Option<Polarity>,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
struct RawRubric {
    version: String,
    categories: Vec<RawCategory>,
    level_rules: LevelRuleSet,
}

/// A validated rubric. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RubricSpec {
    pub version: String,
    categories: Vec<Category>,
    level_rules: LevelRuleSet,
}

impl RubricSpec {
    pub fn new(version: impl Into<String>, categories: Vec<Category>, level_rules: LevelRuleSet) -> Result<Self> {
        let rubric = RubricSpec {
            version: version.into(),
            categories,
            level_rules,
        };
        rubric.check()?;
        Ok(rubric)
    }

    /// The shipped electroscope rubric (21 categories, levels 0-2).
    pub fn electroscope() -> Self {
        Self::from_json_str(ELECTROSCOPE_RUBRIC, "electroscope_rubric.json").expect("shipped rubric is valid")
    }

    /// Canonical text of the shipped rubric file.
    pub fn electroscope_source() -> &'static str {
        ELECTROSCOPE_RUBRIC
    }

    pub fn from_json_str(src: &str, source_name: &str) -> Result<Self> {
        let raw: RawRubric =
            serde_json::from_str(src).map_err(|e| Error::parse(source_name, Some(e.line()), e.to_string()))?;
        let categories = raw
            .categories
            .into_iter()
            .map(|c| {
                Ok(Category {
                    id: c.id,
                    modality: c.modality,
                    polarity: c.polarity.ok_or(Error::MissingPolarity(c.id))?,
                    description: c.description,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(raw.version, categories, raw.level_rules)
    }

    /// Canonical form: sorted keys, 2-space indent, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("rubric serializes");
        let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
        out.push('\n');
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_canonical_json()).map_err(|e| Error::io(path, e))
    }

    fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.categories {
            if !seen.insert(c.id) {
                return Err(Error::DuplicateCategoryId(c.id));
            }
        }
        self.level_rules.check(self)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn level_rules(&self) -> &LevelRuleSet {
        &self.level_rules
    }

    pub fn category(&self, id: CategoryId) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        self.category(id).is_some()
    }

    /// Category ids of one modality, ascending.
    pub fn ids(&self, modality: Modality) -> Vec<CategoryId> {
        self.select(|c| c.modality == modality)
    }

    pub fn ids_with(&self, modality: Modality, polarity: Polarity) -> Vec<CategoryId> {
        self.select(|c| c.modality == modality && c.polarity == polarity)
    }

    fn select(&self, pred: impl Fn(&Category) -> bool) -> Vec<CategoryId> {
        let mut ids: Vec<_> = self.categories.iter().filter(|c| pred(c)).map(|c| c.id).collect();
        ids.sort();
        ids
    }
}

/// Load and validate a rubric file.
pub fn load_rubric(path: impl AsRef<Path>) -> Result<RubricSpec> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RubricSpec::from_json_str(&src, &path.display().to_string())
}

/// Binary category scores for one response.
///
/// Ids missing from `scores` are unscored. After [`validate_vector`] every
/// rubric id has a score and an unscored modality is recorded as absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CategoryVector {
    scores: BTreeMap<CategoryId, u8>,
    model_absent: bool,
    explanation_absent: bool,
}

impl CategoryVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_scores<I, K>(scores: I) -> Self
    where
        I: IntoIterator<Item = (K, u8)>,
        K: Into<CategoryId>,
    {
        CategoryVector {
            scores: scores.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            ..Self::default()
        }
    }

    /// Vector with the given ids scored 1 and every other id of `rubric` scored 0.
    pub fn with_ones(rubric: &RubricSpec, ones: &[u16]) -> Self {
        let ones: BTreeSet<CategoryId> = ones.iter().copied().map(CategoryId).collect();
        CategoryVector {
            scores: rubric
                .categories()
                .iter()
                .map(|c| (c.id, u8::from(ones.contains(&c.id))))
                .collect(),
            ..Self::default()
        }
    }

    pub fn set(&mut self, id: impl Into<CategoryId>, value: u8) -> &mut Self {
        self.scores.insert(id.into(), value);
        self
    }

    pub fn get(&self, id: CategoryId) -> Option<u8> {
        self.scores.get(&id).copied()
    }

    /// Unscored ids read as 0.
    pub fn is_one(&self, id: CategoryId) -> bool {
        self.get(id) == Some(1)
    }

    pub fn scores(&self) -> &BTreeMap<CategoryId, u8> {
        &self.scores
    }

    pub fn explanation_absent(&self) -> bool {
        self.explanation_absent
    }

    pub fn model_absent(&self) -> bool {
        self.model_absent
    }

    pub fn is_absent(&self, modality: Modality) -> bool {
        match modality {
            Modality::Model => self.model_absent,
            Modality::Explanation => self.explanation_absent,
        }
    }

    /// Mark the explanation absent when the response text is empty or whitespace.
    pub fn with_explanation_text(mut self, text: &str) -> Self {
        if text.trim().is_empty() {
            self.explanation_absent = true;
        }
        self
    }

    pub fn mark_absent(&mut self, modality: Modality) -> &mut Self {
        match modality {
            Modality::Model => self.model_absent = true,
            Modality::Explanation => self.explanation_absent = true,
        }
        self
    }

    /// Compact `id=bit` listing for diagnostics.
    pub fn describe(&self, ids: &[CategoryId]) -> String {
        ids.iter()
            .map(|id| format!("{id}={}", self.get(*id).unwrap_or(0)))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Check ids and values against `rubric` and normalize an unscored modality
/// to all-zero scores with its absence flag set.
pub fn validate_vector(rubric: &RubricSpec, vector: &CategoryVector) -> Result<CategoryVector> {
    for (&id, &value) in &vector.scores {
        if !rubric.contains(id) {
            return Err(Error::UnknownCategoryId(id));
        }
        if value > 1 {
            return Err(Error::NonBinaryValue {
                context: format!("category {id}"),
                value: value.to_string(),
            });
        }
    }

    let mut out = vector.clone();
    for modality in Modality::ALL {
        let ids = rubric.ids(modality);
        let present: Vec<_> = ids.iter().filter(|id| vector.scores.contains_key(id)).collect();
        if present.is_empty() {
            for id in &ids {
                out.scores.insert(*id, 0);
            }
            out.mark_absent(modality);
            continue;
        }
        if let Some(missing) = ids.iter().find(|id| !vector.scores.contains_key(id)) {
            return Err(Error::IncompleteModality {
                modality,
                missing: *missing,
            });
        }
        if vector.is_absent(modality) {
            if let Some(id) = ids.iter().find(|id| vector.is_one(**id)) {
                return Err(Error::ConflictingAbsence(*id));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rubric() -> RubricSpec {
        RubricSpec::electroscope()
    }

    #[test]
    fn shipped_rubric_shape() {
        let r = rubric();
        assert_eq!(r.categories().len(), 21);
        assert_eq!(r.ids(Modality::Model).len(), 13);
        assert_eq!(r.ids(Modality::Explanation).len(), 8);
        assert_eq!(r.ids_with(Modality::Model, Polarity::Accurate).len(), 10);
        assert_eq!(r.ids_with(Modality::Model, Polarity::Inaccurate).len(), 3);
        assert_eq!(r.ids_with(Modality::Explanation, Polarity::Accurate).len(), 5);
        assert_eq!(r.ids_with(Modality::Explanation, Polarity::Inaccurate).len(), 3);
        let ids: Vec<u16> = r.categories().iter().map(|c| c.id.0).collect();
        assert_eq!(ids, (1..=21).collect::<Vec<_>>());
        assert_eq!(
            r.ids_with(Modality::Explanation, Polarity::Inaccurate),
            vec![CategoryId(19), CategoryId(20), CategoryId(21)]
        );
    }

    #[test]
    fn canonical_form_is_byte_identical() {
        let r = rubric();
        assert_eq!(r.to_canonical_json(), RubricSpec::electroscope_source());
        let again = RubricSpec::from_json_str(&r.to_canonical_json(), "again").unwrap();
        assert_eq!(again, r);
    }

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(RubricSpec::electroscope_source()).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn duplicate_id_rejected() {
        let src = edit(|v| v["categories"][7]["id"] = 7.into());
        let err = RubricSpec::from_json_str(&src, "dup").unwrap_err();
        assert!(matches!(err, Error::DuplicateCategoryId(CategoryId(7))), "{err}");
    }

    #[test]
    fn missing_polarity_rejected() {
        let src = edit(|v| {
            v["categories"][2].as_object_mut().unwrap().remove("polarity");
        });
        let err = RubricSpec::from_json_str(&src, "pol").unwrap_err();
        assert!(matches!(err, Error::MissingPolarity(CategoryId(3))), "{err}");
    }

    #[test]
    fn rule_with_unknown_id_rejected() {
        let src = edit(|v| v["level_rules"]["model"][0]["require_zero"] = serde_json::json!([11, 12, 99]));
        let err = RubricSpec::from_json_str(&src, "rule").unwrap_err();
        assert!(matches!(err, Error::UnknownCategoryId(CategoryId(99))), "{err}");
    }

    #[test]
    fn parse_failure_reports_line() {
        let err = RubricSpec::from_json_str("{\n  \"version\": \n", "broken.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("broken.json:"), "{msg}");
    }

    #[test]
    fn non_binary_value() {
        let mut v = CategoryVector::with_ones(&rubric(), &[]);
        v.set(3, 2);
        assert!(matches!(
            validate_vector(&rubric(), &v),
            Err(Error::NonBinaryValue { .. })
        ));
    }

    #[test]
    fn unknown_id() {
        let mut v = CategoryVector::with_ones(&rubric(), &[]);
        v.set(22, 0);
        assert!(matches!(
            validate_vector(&rubric(), &v),
            Err(Error::UnknownCategoryId(CategoryId(22)))
        ));
    }

    #[test]
    fn all_zero_vector_is_valid() {
        let v = CategoryVector::with_ones(&rubric(), &[]);
        let out = validate_vector(&rubric(), &v).unwrap();
        assert_eq!(out.scores().len(), 21);
        assert!(!out.explanation_absent());
    }

    #[test]
    fn model_only_vector_marks_explanation_absent() {
        let mut v = CategoryVector::from_scores((1..=13u16).map(|i| (i, u8::from(i == 11))));
        v = v.with_explanation_text("");
        let out = validate_vector(&rubric(), &v).unwrap();
        assert!(out.explanation_absent());
        assert!(!out.model_absent());
        assert!((14..=21).all(|i| out.get(CategoryId(i)) == Some(0)));
        assert_eq!(validate_vector(&rubric(), &out).unwrap(), out);
    }

    #[test]
    fn partial_modality_rejected() {
        let v = CategoryVector::from_scores((1..=15u16).map(|i| (i, 0)));
        assert!(matches!(
            validate_vector(&rubric(), &v),
            Err(Error::IncompleteModality {
                modality: Modality::Explanation,
                missing: CategoryId(16)
            })
        ));
    }

    #[test]
    fn absent_flag_conflicts_with_ones() {
        let mut v = CategoryVector::with_ones(&rubric(), &[14]);
        v.mark_absent(Modality::Explanation);
        assert!(matches!(
            validate_vector(&rubric(), &v),
            Err(Error::ConflictingAbsence(CategoryId(14)))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn validation_is_idempotent(
                bits in proptest::collection::vec(0u8..2, 21),
                drop_model in any::<bool>(),
                drop_expl in any::<bool>(),
            ) {
                let r = rubric();
                let mut v = CategoryVector::from_scores(
                    bits.iter().enumerate().map(|(i, b)| ((i + 1) as u16, *b))
                        .filter(|(i, _)| !(drop_model && *i <= 13) && !(drop_expl && *i >= 14)),
                );
                if drop_expl {
                    v = v.with_explanation_text("  ");
                }
                let once = validate_vector(&r, &v).unwrap();
                let twice = validate_vector(&r, &once).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
