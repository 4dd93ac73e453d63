//! Human-machine agreement statistics and class-imbalance reports.
//!
//! The human label is always the reference: "positive" means human label 1.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{csv_line, Error, Result};
use crate::labels::LabelTable;
use crate::rubric::CategoryId;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.n())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall; undefined when either is
    /// undefined or both are zero.
    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }

    pub fn statistic(&self, s: Statistic) -> Option<f64> {
        match s {
            Statistic::Accuracy => self.accuracy(),
            Statistic::Precision => self.precision(),
            Statistic::Recall => self.recall(),
            Statistic::F1 => self.f1(),
        }
    }

    fn add(&mut self, human: u8, machine: u8) {
        match (human, machine) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (1, 0) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    /// Paired label sequences reproducing these counts.
    fn expand(&self) -> (Vec<u8>, Vec<u8>) {
        let cells = [(1, 1, self.tp), (0, 1, self.fp), (1, 0, self.fn_), (0, 0, self.tn)];
        let mut human = Vec::with_capacity(self.n() as usize);
        let mut machine = Vec::with_capacity(self.n() as usize);
        for (h, m, count) in cells {
            for _ in 0..count {
                human.push(h);
                machine.push(m);
            }
        }
        (human, machine)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_binary(xs: &[u8], which: &str) -> Result<()> {
    match xs.iter().find(|x| **x > 1) {
        Some(x) => Err(Error::NonBinaryValue {
            context: format!("{which} label"),
            value: x.to_string(),
        }),
        None => Ok(()),
    }
}

/// Confusion counts with `human` as the reference labels.
pub fn confusion(human: &[u8], machine: &[u8]) -> Result<ConfusionCounts> {
    if human.len() != machine.len() {
        return Err(Error::LengthMismatch(human.len(), machine.len()));
    }
    if human.is_empty() {
        return Err(Error::EmptyTable);
    }
    check_binary(human, "human")?;
    check_binary(machine, "machine")?;
    let mut c = ConfusionCounts::default();
    for (h, m) in human.iter().zip(machine) {
        c.add(*h, *m);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricFlag {
    UndefinedPrecision,
    UndefinedRecall,
    UndefinedF1,
}

impl MetricFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricFlag::UndefinedPrecision => "undefined_precision",
            MetricFlag::UndefinedRecall => "undefined_recall",
            MetricFlag::UndefinedF1 => "undefined_f1",
        }
    }
}

impl FromStr for MetricFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            MetricFlag::UndefinedPrecision,
            MetricFlag::UndefinedRecall,
            MetricFlag::UndefinedF1,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown metric flag {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    Accuracy,
    Precision,
    Recall,
    F1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiMethod {
    /// Normal approximation, not clipped to [0, 1].
    Wald,
    /// Percentile bootstrap over paired resamples.
    Bootstrap { resamples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: CategoryId,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub flags: BTreeSet<MetricFlag>,
}

/// Two-sided standard normal quantile for `confidence`.
pub fn z_value(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence {confidence} must lie in (0, 1)"
        )));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + confidence / 2.0))
}

/// `accuracy ± z·sqrt(accuracy·(1 − accuracy)/n)`, unclipped.
pub fn wald_bounds(accuracy: f64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    let half = z_value(confidence)? * (accuracy * (1.0 - accuracy) / n as f64).sqrt();
    Ok((accuracy - half, accuracy + half))
}

pub fn wald_interval(c: &ConfusionCounts, confidence: f64) -> Result<(f64, f64)> {
    let acc = c.accuracy().ok_or(Error::EmptyTable)?;
    wald_bounds(acc, c.n(), confidence)
}

/// Point metrics and an accuracy interval. Zero-denominator metrics are 0.0 with a flag.
pub fn summarize(
    category: CategoryId,
    c: &ConfusionCounts,
    method: CiMethod,
    confidence: f64,
) -> Result<CategoryMetrics> {
    let accuracy = c.accuracy().ok_or(Error::EmptyTable)?;
    let (ci_low, ci_high) = match method {
        CiMethod::Wald => wald_interval(c, confidence)?,
        CiMethod::Bootstrap { resamples, seed } => {
            let (h, m) = c.expand();
            bootstrap_ci(&h, &m, Statistic::Accuracy, resamples, confidence, seed)?
        }
    };
    let mut flags = BTreeSet::new();
    let mut value = |v: Option<f64>, flag| {
        v.unwrap_or_else(|| {
            flags.insert(flag);
            0.0
        })
    };
    let precision = value(c.precision(), MetricFlag::UndefinedPrecision);
    let recall = value(c.recall(), MetricFlag::UndefinedRecall);
    let f1 = value(c.f1(), MetricFlag::UndefinedF1);
    Ok(CategoryMetrics {
        category,
        accuracy,
        ci_low,
        ci_high,
        precision,
        recall,
        f1,
        flags,
    })
}

/// Percentile bootstrap interval for `statistic`, resampling (human, machine) pairs.
pub fn bootstrap_ci(
    human: &[u8],
    machine: &[u8],
    statistic: Statistic,
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if human.len() != machine.len() {
        return Err(Error::LengthMismatch(human.len(), machine.len()));
    }
    if human.len() < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 pairs".into()));
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be positive".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence {confidence} must lie in (0, 1)"
        )));
    }
    check_binary(human, "human")?;
    check_binary(machine, "machine")?;

    let n = human.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(resamples);
    let mut undefined = 0;
    for _ in 0..resamples {
        let mut c = ConfusionCounts::default();
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            c.add(human[i], machine[i]);
        }
        match c.statistic(statistic) {
            Some(v) => values.push(v),
            None => undefined += 1,
        }
    }
    if 2 * undefined > resamples {
        return Err(Error::DegenerateStatistic { undefined, resamples });
    }
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    Ok((quantile(&values, alpha / 2.0), quantile(&values, 1.0 - alpha / 2.0)))
}

/// Linear-interpolation quantile of sorted, non-empty data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Unweighted means over category rows. Not part of the per-category layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rows: Vec<CategoryMetrics>,
    pub macro_average: Option<MacroAverage>,
}

const REPORT_HEADER: &str = "category,accuracy,ci_low,ci_high,precision,recall,f1,flags";
const MACRO_LABEL: &str = "macro";
const MACRO_FLAG: &str = "extension";

impl AgreementReport {
    pub fn new(rows: Vec<CategoryMetrics>) -> Self {
        let macro_average = (!rows.is_empty()).then(|| {
            let n = rows.len() as f64;
            let mean = |f: fn(&CategoryMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
            MacroAverage {
                accuracy: mean(|r| r.accuracy),
                precision: mean(|r| r.precision),
                recall: mean(|r| r.recall),
                f1: mean(|r| r.f1),
            }
        });
        AgreementReport { rows, macro_average }
    }

    pub fn row(&self, category: CategoryId) -> Option<&CategoryMetrics> {
        self.rows.iter().find(|r| r.category == category)
    }

    /// Machine-readable form. Floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let flags: Vec<_> = r.flags.iter().map(|f| f.as_str()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.category,
                r.accuracy,
                r.ci_low,
                r.ci_high,
                r.precision,
                r.recall,
                r.f1,
                flags.join(";")
            ));
        }
        if let Some(m) = &self.macro_average {
            out.push_str(&format!(
                "{MACRO_LABEL},{},,,{},{},{},{MACRO_FLAG}\n",
                m.accuracy, m.precision, m.recall, m.f1
            ));
        }
        out
    }

    pub fn from_csv<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(source_name, Some(1), e.to_string()))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != REPORT_HEADER {
            return Err(Error::parse(
                source_name,
                Some(1),
                format!("expected header {REPORT_HEADER}"),
            ));
        }
        let mut rows = Vec::new();
        let mut macro_average = None;
        for record in rdr.records() {
            let record = record.map_err(|e| Error::parse(source_name, csv_line(&e), e.to_string()))?;
            let line = record.position().map(|p| p.line() as usize);
            let num = |i: usize| -> Result<f64> {
                record[i]
                    .parse()
                    .map_err(|_| Error::parse(source_name, line, format!("bad number {:?}", &record[i])))
            };
            if &record[0] == MACRO_LABEL {
                macro_average = Some(MacroAverage {
                    accuracy: num(1)?,
                    precision: num(4)?,
                    recall: num(5)?,
                    f1: num(6)?,
                });
                continue;
            }
            let category = record[0]
                .parse()
                .map(CategoryId)
                .map_err(|_| Error::parse(source_name, line, format!("bad category {:?}", &record[0])))?;
            let flags = record[7]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<BTreeSet<_>>>()
                .map_err(|e| Error::parse(source_name, line, e.to_string()))?;
            rows.push(CategoryMetrics {
                category,
                accuracy: num(1)?,
                ci_low: num(2)?,
                ci_high: num(3)?,
                precision: num(4)?,
                recall: num(5)?,
                f1: num(6)?,
                flags,
            });
        }
        Ok(AgreementReport { rows, macro_average })
    }

    /// Aligned plain-text table: accuracy, CI, precision, recall, F1 per category.
    pub fn to_table(&self, confidence: f64) -> String {
        let ci_label = format!("{}% CI", fmt_percent_label(confidence));
        let mut lines = vec![format!(
            "{:<8}  {:>8}  {:<14}  {:>9}  {:>6}  {:>8}  {}",
            "Category", "accuracy", ci_label, "precision", "recall", "F1 score", "flags"
        )];
        for r in &self.rows {
            let flags: Vec<_> = r.flags.iter().map(|f| f.as_str()).collect();
            lines.push(format!(
                "{:<8}  {:>8.2}  {:<14}  {:>9.2}  {:>6.2}  {:>8.2}  {}",
                format!("C{}", r.category),
                r.accuracy,
                format!("({:.2}, {:.2})", r.ci_low, r.ci_high),
                r.precision,
                r.recall,
                r.f1,
                flags.join(";")
            ));
        }
        if let Some(m) = &self.macro_average {
            lines.push(format!(
                "{:<8}  {:>8.2}  {:<14}  {:>9.2}  {:>6.2}  {:>8.2}  {}",
                "macro*", m.accuracy, "", m.precision, m.recall, m.f1, MACRO_FLAG
            ));
        }
        let mut out = lines
            .into_iter()
            .map(|l| l.trim_end().to_string())
            .collect::<Vec<_>>()
            .join("\n");
        out.push('\n');
        out
    }
}

fn fmt_percent_label(confidence: f64) -> String {
    let pct = confidence * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}

/// Per-category agreement between two label tables with identical schemas.
///
/// Pairs where either side is unscored are skipped. Each bootstrap category
/// uses `seed` mixed with its id so categories draw independent streams.
pub fn agreement_report(
    human: &LabelTable,
    machine: &LabelTable,
    method: CiMethod,
    confidence: f64,
) -> Result<AgreementReport> {
    let hc: BTreeSet<_> = human.categories().iter().collect();
    let mc: BTreeSet<_> = machine.categories().iter().collect();
    if hc != mc {
        let missing: Vec<String> = hc.symmetric_difference(&mc).map(|c| format!("c{c}")).collect();
        return Err(Error::SchemaMismatch(format!(
            "categories differ: {}",
            missing.join(", ")
        )));
    }
    let hi: BTreeSet<_> = human.response_ids().collect();
    let mi: BTreeSet<_> = machine.response_ids().collect();
    if hi != mi {
        let diff: Vec<&str> = hi.symmetric_difference(&mi).copied().take(5).collect();
        return Err(Error::SchemaMismatch(format!(
            "response ids differ (e.g. {})",
            diff.join(", ")
        )));
    }
    let mut categories: Vec<CategoryId> = human.categories().to_vec();
    categories.sort();
    let mut rows = Vec::with_capacity(categories.len());
    for id in categories {
        let h_col = human.column(id).expect("category present");
        let m_col = machine.column(id).expect("category present");
        let (hs, ms): (Vec<u8>, Vec<u8>) = human
            .response_ids()
            .filter_map(|rid| Some((h_col[rid]?, m_col[rid]?)))
            .unzip();
        if hs.is_empty() {
            return Err(Error::SchemaMismatch(format!(
                "category c{id} has no response scored by both tables"
            )));
        }
        let counts = confusion(&hs, &ms)?;
        let method = match method {
            CiMethod::Bootstrap { resamples, seed } => CiMethod::Bootstrap {
                resamples,
                seed: seed ^ u64::from(id.0).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            },
            wald => wald,
        };
        rows.push(summarize(id, &counts, method, confidence)?);
    }
    Ok(AgreementReport::new(rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceRow {
    pub category: CategoryId,
    pub positives: usize,
    pub n: usize,
}

impl ImbalanceRow {
    pub fn percent_positive(&self) -> f64 {
        100.0 * self.positives as f64 / self.n as f64
    }
}

impl fmt::Display for ImbalanceRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.percent_positive())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport {
    pub rows: Vec<ImbalanceRow>,
}

impl ImbalanceReport {
    pub fn row(&self, category: CategoryId) -> Option<&ImbalanceRow> {
        self.rows.iter().find(|r| r.category == category)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,percent_positive,n\n");
        for r in &self.rows {
            out.push_str(&format!("{},{r},{}\n", r.category, r.n));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8}  {}\n", "Category", "Percent of positive cases (%)");
        for r in &self.rows {
            out.push_str(&format!("{:<8}  {r}\n", r.category));
        }
        out
    }
}

/// Share of positive (1) labels per category over scored cells.
pub fn imbalance_report(labels: &LabelTable) -> Result<ImbalanceReport> {
    if labels.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut categories = labels.categories().to_vec();
    categories.sort();
    let rows = categories
        .into_iter()
        .map(|id| {
            let col = labels.column(id).expect("category present");
            let scored: Vec<u8> = col.values().flatten().copied().collect();
            if scored.is_empty() {
                return Err(Error::EmptyTable);
            }
            Ok(ImbalanceRow {
                category: id,
                positives: scored.iter().filter(|v| **v == 1).count(),
                n: scored.len(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ImbalanceReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn confusion_counts() {
        assert_eq!(
            confusion(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap(),
            ConfusionCounts::new(1, 0, 1, 2)
        );
        assert_eq!(confusion(&[1, 0], &[0, 1]).unwrap(), ConfusionCounts::new(0, 1, 1, 0));
        let h = [1, 0, 1, 1, 0];
        let c = confusion(&h, &h).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert!(matches!(confusion(&[1], &[1, 0]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(confusion(&[2], &[1]), Err(Error::NonBinaryValue { .. })));
    }

    #[test]
    fn summarize_fixture() {
        let m = summarize(CategoryId(1), &ConfusionCounts::new(3, 1, 2, 4), CiMethod::Wald, 0.95).unwrap();
        assert_abs_diff_eq!(m.precision, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(m.recall, 0.60, epsilon = 1e-12);
        assert_abs_diff_eq!(m.f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.accuracy, 0.70, epsilon = 1e-12);
        assert!(m.flags.is_empty());
    }

    #[test]
    fn degenerate_positives_are_flagged() {
        let m = summarize(CategoryId(1), &ConfusionCounts::new(0, 0, 0, 10), CiMethod::Wald, 0.95).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, 0.0);
        assert!(m.flags.contains(&MetricFlag::UndefinedPrecision));
        assert!(m.flags.contains(&MetricFlag::UndefinedRecall));
        assert!(m.flags.contains(&MetricFlag::UndefinedF1));
    }

    #[test]
    fn z_at_95() {
        assert_abs_diff_eq!(z_value(0.95).unwrap(), 1.959964, epsilon = 1e-6);
        assert!(z_value(1.0).is_err());
    }

    #[test]
    fn wald_is_unclipped() {
        // 58/60 ≈ 0.967; 0.967 + 1.96·sqrt(0.967·0.033/60) ≈ 1.012
        let c = ConfusionCounts::new(20, 1, 1, 38);
        let (lo, hi) = wald_interval(&c, 0.95).unwrap();
        assert!(hi > 1.0, "{hi}");
        assert!(lo < c.accuracy().unwrap());
    }

    #[test]
    fn bootstrap_cases() {
        let h: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        assert_eq!(
            bootstrap_ci(&h, &h, Statistic::Accuracy, 500, 0.95, 7).unwrap(),
            (1.0, 1.0)
        );
        assert!(bootstrap_ci(&h, &h, Statistic::Accuracy, 0, 0.95, 7).is_err());
        assert!(bootstrap_ci(&h[..1], &h[..1], Statistic::Accuracy, 10, 0.95, 7).is_err());

        let mut m = h.clone();
        for i in 0..4 {
            m[i * 10] ^= 1;
        }
        let (lo, hi) = bootstrap_ci(&h, &m, Statistic::Accuracy, 2000, 0.95, 11).unwrap();
        assert!(lo <= 0.9 && 0.9 <= hi, "({lo}, {hi})");
        assert_eq!(
            bootstrap_ci(&h, &m, Statistic::Accuracy, 2000, 0.95, 11).unwrap(),
            (lo, hi)
        );

        let zeros = vec![0u8; 30];
        assert!(matches!(
            bootstrap_ci(&zeros, &zeros, Statistic::Precision, 100, 0.95, 1),
            Err(Error::DegenerateStatistic { .. })
        ));
    }

    #[test]
    fn bootstrap_summary_uses_counts() {
        let c = ConfusionCounts::new(30, 3, 2, 25);
        let m = summarize(
            CategoryId(4),
            &c,
            CiMethod::Bootstrap {
                resamples: 1000,
                seed: 3,
            },
            0.95,
        )
        .unwrap();
        assert!(m.ci_low <= m.accuracy && m.accuracy <= m.ci_high);
        assert!(m.ci_high <= 1.0);
    }

    fn table(src: &str) -> LabelTable {
        LabelTable::read_csv(src.as_bytes(), "t").unwrap()
    }

    #[test]
    fn agreement_identity_and_schema() {
        let h = table("response_id,c1,c2\na,1,0\nb,0,1\nc,1,1\n");
        let r = agreement_report(&h, &h, CiMethod::Wald, 0.95).unwrap();
        assert!(r.rows.iter().all(|m| m.accuracy == 1.0 && m.f1 == 1.0));

        let missing = table("response_id,c1\na,1\nb,0\nc,1\n");
        assert!(matches!(
            agreement_report(&h, &missing, CiMethod::Wald, 0.95),
            Err(Error::SchemaMismatch(_))
        ));
        let other_ids = table("response_id,c1,c2\na,1,0\nb,0,1\nd,1,1\n");
        assert!(matches!(
            agreement_report(&h, &other_ids, CiMethod::Wald, 0.95),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn agreement_skips_unscored_pairs() {
        let h = table("response_id,c1\na,1\nb,0\nc,\n");
        let m = table("response_id,c1\nc,1\nb,1\na,1\n");
        let r = agreement_report(&h, &m, CiMethod::Wald, 0.95).unwrap();
        assert_abs_diff_eq!(r.rows[0].accuracy, 0.5);
        assert_abs_diff_eq!(r.rows[0].precision, 0.5);
    }

    #[test]
    fn report_csv_round_trip() {
        let h = table("response_id,c2,c1\na,1,0\nb,0,0\nc,1,0\nd,0,0\n");
        let m = table("response_id,c2,c1\na,1,0\nb,1,0\nc,0,0\nd,0,0\n");
        let r = agreement_report(&h, &m, CiMethod::Wald, 0.95).unwrap();
        assert_eq!(r.rows[0].category, CategoryId(1));
        let back = AgreementReport::from_csv(r.to_csv().as_bytes(), "r").unwrap();
        assert_eq!(back, r);
        let t = r.to_table(0.95);
        assert!(t.starts_with("Category  accuracy  95% CI"), "{t}");
        assert!(t.contains("(0.01, 0.99)"), "{t}");
    }

    #[test]
    fn imbalance() {
        let t = table("response_id,c14,c15\na,1,1\nb,1,1\nc,0,1\nd,0,1\ne,0,1\nf,0,1\n");
        let r = imbalance_report(&t).unwrap();
        assert_eq!(r.rows[0].to_string(), "33.33");
        assert_eq!(r.rows[1].to_string(), "100.00");
        assert_eq!(r.to_csv(), "category,percent_positive,n\n14,33.33,6\n15,100.00,6\n");
        let empty = LabelTable::new(vec![CategoryId(1)]);
        assert!(matches!(imbalance_report(&empty), Err(Error::EmptyTable)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2000))]

            #[test]
            fn f1_between_precision_and_recall(tp in 1u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
                let c = ConfusionCounts::new(tp, fp, fn_, tn);
                let (p, r, f) = (c.precision().unwrap(), c.recall().unwrap(), c.f1().unwrap());
                prop_assert!(p.min(r) <= f + 1e-15 && f <= p.max(r) + 1e-15);
            }

            #[test]
            fn role_swap(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..60)) {
                let (h, m): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
                let a = confusion(&h, &m).unwrap();
                let b = confusion(&m, &h).unwrap();
                prop_assert_eq!(a.accuracy(), b.accuracy());
                prop_assert_eq!(a.precision(), b.recall());
            }

            #[test]
            fn wald_half_width_scales(tp in 0u64..300, fp in 0u64..300, fn_ in 0u64..300, tn in 0u64..300) {
                prop_assume!(tp + fp + fn_ + tn > 0);
                let c = ConfusionCounts::new(tp, fp, fn_, tn);
                let d = ConfusionCounts::new(2 * tp, 2 * fp, 2 * fn_, 2 * tn);
                let (lo1, hi1) = wald_interval(&c, 0.95).unwrap();
                let (lo2, hi2) = wald_interval(&d, 0.95).unwrap();
                let (w1, w2) = ((hi1 - lo1) / 2.0, (hi2 - lo2) / 2.0);
                prop_assert!((w2 - w1 / 2f64.sqrt()).abs() <= 1e-12, "{w1} {w2}");
            }
        }
    }
}
