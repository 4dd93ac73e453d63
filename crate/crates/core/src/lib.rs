//! Scoring engine for multi-modal constructed responses: rubric category
//! vectors, learning-progression levels, templated feedback, inter-rater
//! reliability, human-machine agreement, SMOTE oversampling and a text
//! classifier for the explanation categories.

pub mod augment;
pub mod error;
pub mod feedback;
pub mod labels;
pub mod lp;
pub mod metrics;
pub mod reliability;
pub mod rubric;
pub mod textclf;

pub use error::{Error, Result};
pub use feedback::{render_feedback, validate_pack, FeedbackStatement, TemplatePack, ValidatedPack};
pub use labels::LabelTable;
pub use lp::{assign, LevelAssignment, LevelRuleSet, LpLevel};
pub use metrics::{agreement_report, imbalance_report, AgreementReport, CiMethod, ConfusionCounts, ImbalanceReport};
pub use reliability::{gate_categories, krippendorff_alpha, AlphaReport, RatingsMatrix};
pub use rubric::{validate_vector, Category, CategoryId, CategoryVector, Modality, Polarity, RubricSpec};
