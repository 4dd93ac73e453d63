//! Inter-rater reliability: Krippendorff's alpha for nominal data, and the
//! per-category acceptance gate.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{csv_line, Error, Result};
use crate::rubric::CategoryId;

/// Default acceptance threshold; a category passes only when alpha is strictly greater.
pub const DEFAULT_ALPHA_THRESHOLD: f64 = 0.8;

/// Ratings of units by raters. Missing (unit, rater) entries are allowed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingsMatrix {
    units: Vec<String>,
    raters: Vec<String>,
    values: BTreeMap<(usize, usize), u8>,
}

impl RatingsMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense matrix from one column per rater over the same units; `None` is missing.
    pub fn from_columns(columns: &[Vec<Option<u8>>]) -> Result<Self> {
        let mut m = Self::new();
        for (r, col) in columns.iter().enumerate() {
            for (u, value) in col.iter().enumerate() {
                if let Some(value) = value {
                    m.insert(&format!("u{u}"), &format!("r{r}"), *value)?;
                }
            }
        }
        Ok(m)
    }

    /// Two raters, no missing data.
    pub fn from_pair(a: &[u8], b: &[u8]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch(a.len(), b.len()));
        }
        let wrap = |xs: &[u8]| xs.iter().map(|x| Some(*x)).collect::<Vec<_>>();
        Self::from_columns(&[wrap(a), wrap(b)])
    }

    /// Record a rating; re-rating the same (unit, rater) is an error.
    pub fn insert(&mut self, unit: &str, rater: &str, value: u8) -> Result<()> {
        if value > 1 {
            return Err(Error::NonBinaryValue {
                context: format!("unit {unit}, rater {rater}"),
                value: value.to_string(),
            });
        }
        let u = intern(&mut self.units, unit);
        let r = intern(&mut self.raters, rater);
        if self.values.insert((u, r), value).is_some() {
            return Err(Error::InvalidArgument(format!(
                "unit {unit} rated twice by rater {rater}"
            )));
        }
        Ok(())
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    /// Values recorded for each unit, in unit order.
    fn unit_values(&self) -> Vec<Vec<u8>> {
        let mut per_unit = vec![Vec::new(); self.units.len()];
        for (&(u, _), &v) in &self.values {
            per_unit[u].push(v);
        }
        per_unit
    }
}

fn intern(names: &mut Vec<String>, name: &str) -> usize {
    match names.iter().position(|n| n == name) {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    }
}

/// Alpha plus the bookkeeping behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEstimate {
    /// `None` when expected disagreement is zero (all pairable values identical).
    pub alpha: Option<f64>,
    /// Number of pairable values (sum of the coincidence matrix).
    pub n_pairable: usize,
    /// Units with fewer than two ratings.
    pub excluded_units: usize,
}

/// Nominal Krippendorff's alpha, `1 - D_o / D_e`, from the coincidence matrix.
///
/// Each unit with `m_u >= 2` ratings adds `1 / (m_u - 1)` to `o[c][k]` for every
/// ordered pair of its ratings taken from different coders.
pub fn krippendorff_alpha(m: &RatingsMatrix) -> Result<Option<f64>> {
    alpha_estimate(m).map(|e| e.alpha)
}

pub fn alpha_estimate(m: &RatingsMatrix) -> Result<AlphaEstimate> {
    let mut coincidence: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    let mut excluded_units = 0;
    let mut n_pairable = 0;
    for values in m.unit_values() {
        let m_u = values.len();
        if m_u < 2 {
            excluded_units += 1;
            continue;
        }
        n_pairable += m_u;
        let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
        for v in values {
            *counts.entry(v).or_default() += 1;
        }
        let weight = 1.0 / (m_u - 1) as f64;
        for (&c, &n_c) in &counts {
            for (&k, &n_k) in &counts {
                let pairs = if c == k { n_c * (n_c - 1) } else { n_c * n_k };
                if pairs > 0 {
                    *coincidence.entry((c, k)).or_default() += pairs as f64 * weight;
                }
            }
        }
    }
    if n_pairable == 0 {
        return Err(Error::NoPairableUnits);
    }

    let mut marginals: BTreeMap<u8, f64> = BTreeMap::new();
    for (&(c, _), &o) in &coincidence {
        *marginals.entry(c).or_default() += o;
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = coincidence.iter().filter(|((c, k), _)| c != k).map(|(_, o)| o).sum();
    let mut expected_pairs = 0.0;
    for (&c, &n_c) in &marginals {
        for (&k, &n_k) in &marginals {
            if c != k {
                expected_pairs += n_c * n_k;
            }
        }
    }
    let d_o = observed / n;
    let d_e = expected_pairs / (n * (n - 1.0));
    let alpha = (d_e > 0.0).then(|| 1.0 - d_o / d_e);
    Ok(AlphaEstimate {
        alpha,
        n_pairable,
        excluded_units,
    })
}

/// Strict comparison: alpha must exceed the threshold.
pub fn passes(alpha: Option<f64>, threshold: f64) -> bool {
    alpha.is_some_and(|a| a > threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAlpha {
    pub category: CategoryId,
    pub alpha: Option<f64>,
    pub n_pairable: usize,
    pub excluded_units: usize,
    pub pass: bool,
    /// Set when no unit of this category had two ratings.
    pub no_pairable_units: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub threshold: f64,
    pub categories: Vec<CategoryAlpha>,
}

impl AlphaReport {
    /// Categories below the gate, for rubric revision.
    pub fn failing(&self) -> impl Iterator<Item = &CategoryAlpha> {
        self.categories.iter().filter(|c| !c.pass)
    }

    /// CSV with header `category_id,alpha,n_pairable,pass`; undefined alpha is empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category_id,alpha,n_pairable,pass\n");
        for c in &self.categories {
            let alpha = c.alpha.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", c.category, alpha, c.n_pairable, c.pass));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>8}  {:>8}  {:>10}  {:>8}  {}\n",
            "category", "alpha", "n_pairable", "excluded", "pass"
        );
        for c in &self.categories {
            let alpha = c.alpha.map_or_else(|| "undef".to_string(), |a| format!("{a:.4}"));
            let note = if c.no_pairable_units {
                "  (no pairable units)"
            } else {
                ""
            };
            out.push_str(&format!(
                "{:>8}  {:>8}  {:>10}  {:>8}  {}{}\n",
                format!("C{}", c.category),
                alpha,
                c.n_pairable,
                c.excluded_units,
                if c.pass { "yes" } else { "no" },
                note
            ));
        }
        out
    }
}

/// Alpha and pass flag for every category, ordered by category id.
pub fn gate_categories(ratings: &BTreeMap<CategoryId, RatingsMatrix>, threshold: f64) -> Result<AlphaReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    let categories = ratings
        .iter()
        .map(|(&category, m)| match alpha_estimate(m) {
            Ok(e) => CategoryAlpha {
                category,
                alpha: e.alpha,
                n_pairable: e.n_pairable,
                excluded_units: e.excluded_units,
                pass: passes(e.alpha, threshold),
                no_pairable_units: false,
            },
            Err(_) => CategoryAlpha {
                category,
                alpha: None,
                n_pairable: 0,
                excluded_units: m.units().len(),
                pass: false,
                no_pairable_units: true,
            },
        })
        .collect();
    Ok(AlphaReport { threshold, categories })
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    unit_id: String,
    rater_id: String,
    category_id: u16,
    value: String,
}

/// Parse a ratings CSV (`unit_id,rater_id,category_id,value`) into per-category matrices.
///
/// `known` lists categories that should appear in the result even when no row mentions them.
pub fn read_ratings_csv<R: Read>(
    reader: R,
    source_name: &str,
    known: &[CategoryId],
) -> Result<BTreeMap<CategoryId, RatingsMatrix>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source_name, Some(1), e.to_string()))?
        .clone();
    let expected = ["unit_id", "rater_id", "category_id", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            source_name,
            Some(1),
            format!("expected header {}", expected.join(",")),
        ));
    }
    let mut out: BTreeMap<CategoryId, RatingsMatrix> = known.iter().map(|id| (*id, RatingsMatrix::new())).collect();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::parse(source_name, csv_line(&e), e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize);
        let row: RatingRow = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(source_name, line, e.to_string()))?;
        let value = match row.value.as_str() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::parse(
                    source_name,
                    line,
                    format!("value {other:?} is not 0 or 1"),
                ));
            }
        };
        out.entry(CategoryId(row.category_id))
            .or_default()
            .insert(&row.unit_id, &row.rater_id, value)
            .map_err(|e| Error::parse(source_name, line, e.to_string()))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_agreement() {
        let a = [0, 1, 1, 0, 1, 0, 0, 1, 1, 1];
        let m = RatingsMatrix::from_pair(&a, &a).unwrap();
        assert_eq!(krippendorff_alpha(&m).unwrap(), Some(1.0));
    }

    #[test]
    fn four_unit_fixture() {
        // o00 = 2, o01 = o10 = 1, o11 = 4; D_o = 2/8, D_e = 30/56
        let m = RatingsMatrix::from_pair(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        let expected = 1.0 - 0.25 / (30.0 / 56.0);
        assert_abs_diff_eq!(krippendorff_alpha(&m).unwrap().unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 8.0 / 15.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_data_is_undefined() {
        let m = RatingsMatrix::from_pair(&[0; 6], &[0; 6]).unwrap();
        assert_eq!(krippendorff_alpha(&m).unwrap(), None);
    }

    #[test]
    fn no_pairable_units() {
        let m = RatingsMatrix::from_columns(&[vec![Some(1), Some(0)], vec![None, None]]).unwrap();
        assert!(matches!(krippendorff_alpha(&m), Err(Error::NoPairableUnits)));
    }

    #[test]
    fn missing_data_three_raters() {
        // unit 0: {1,1,0}; unit 1: {0,0}; unit 2: {1} (excluded)
        // o11 = 2/2 = 1, o10 = o01 = 2/2 = 1, o00 = 2/1 = 2 => n1 = 2, n0 = 3, n = 5
        // D_o = 2/5, D_e = 2*2*3/(5*4) = 0.6, alpha = 1 - (0.4/0.6) = 1/3
        let m = RatingsMatrix::from_columns(&[
            vec![Some(1), Some(0), Some(1)],
            vec![Some(1), Some(0), None],
            vec![Some(0), None, None],
        ])
        .unwrap();
        let e = alpha_estimate(&m).unwrap();
        assert_abs_diff_eq!(e.alpha.unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(e.n_pairable, 5);
        assert_eq!(e.excluded_units, 1);
    }

    #[test]
    fn gate_is_strict() {
        assert!(!passes(Some(0.8), 0.8));
        assert!(passes(Some(0.8000001), 0.8));
        assert!(!passes(None, 0.8));
    }

    #[test]
    fn gate_report() {
        let perfect = RatingsMatrix::from_pair(&[0, 1, 1], &[0, 1, 1]).unwrap();
        let weak = RatingsMatrix::from_pair(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        let ratings = BTreeMap::from([
            (CategoryId(2), weak),
            (CategoryId(1), perfect),
            (CategoryId(3), RatingsMatrix::new()),
        ]);
        let report = gate_categories(&ratings, DEFAULT_ALPHA_THRESHOLD).unwrap();
        let ids: Vec<_> = report.categories.iter().map(|c| c.category.0).collect();
        assert_eq!(ids, [1, 2, 3]);
        assert!(report.categories[0].pass);
        assert!(!report.categories[1].pass);
        assert!(report.categories[2].no_pairable_units && !report.categories[2].pass);
        assert_eq!(report.failing().count(), 2);
        assert!(gate_categories(&ratings, 0.0).is_err());
        assert!(gate_categories(&ratings, 1.5).is_err());
    }

    #[test]
    fn csv_ingest() {
        let src = "unit_id,rater_id,category_id,value\nu1,a,1,1\nu1,b,1,1\nu2,a,1,0\nu2,b,1,0\nu1,a,2,1\n";
        let m = read_ratings_csv(src.as_bytes(), "r.csv", &[]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(krippendorff_alpha(&m[&CategoryId(1)]).unwrap(), Some(1.0));
        assert!(matches!(
            krippendorff_alpha(&m[&CategoryId(2)]),
            Err(Error::NoPairableUnits)
        ));

        let bad = "unit_id,rater_id,category_id,value\nu1,a,1,1\nu1,b,1,2\n";
        let err = read_ratings_csv(bad.as_bytes(), "r.csv", &[]).unwrap_err();
        assert!(err.to_string().starts_with("r.csv:3:"), "{err}");

        let dup = "unit_id,rater_id,category_id,value\nu1,a,1,1\nu1,a,1,0\n";
        assert!(read_ratings_csv(dup.as_bytes(), "r.csv", &[]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Direct pairwise definition for two complete raters: D_o is the share of
        /// disagreeing units, D_e the share of ordered pairs of distinct pooled
        /// values that disagree.
        fn brute_force_alpha(a: &[u8], b: &[u8]) -> Option<f64> {
            let units = a.len() as f64;
            let d_o = a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / units;
            let pooled: Vec<u8> = a.iter().chain(b).copied().collect();
            let mut differing = 0usize;
            let mut total = 0usize;
            for i in 0..pooled.len() {
                for j in 0..pooled.len() {
                    if i != j {
                        total += 1;
                        differing += usize::from(pooled[i] != pooled[j]);
                    }
                }
            }
            let d_e = differing as f64 / total as f64;
            (d_e > 0.0).then(|| 1.0 - d_o / d_e)
        }

        fn pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
            (1usize..=6).prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u8..2, n),
                    proptest::collection::vec(0u8..2, n),
                )
            })
        }

        proptest! {
            #[test]
            fn matches_brute_force((a, b) in pair()) {
                let m = RatingsMatrix::from_pair(&a, &b).unwrap();
                let got = krippendorff_alpha(&m).unwrap();
                let want = brute_force_alpha(&a, &b);
                match (got, want) {
                    (Some(g), Some(w)) => prop_assert!((g - w).abs() <= 1e-12, "{g} vs {w}"),
                    (None, None) => {}
                    other => prop_assert!(false, "{other:?}"),
                }
            }

            #[test]
            fn invariant_under_rater_and_unit_permutation(
                (a, b) in pair(),
                c in proptest::collection::vec(proptest::option::of(0u8..2), 6),
                seed in any::<u64>(),
            ) {
                let c: Vec<_> = c.into_iter().take(a.len()).collect();
                let wrap = |xs: &[u8]| xs.iter().map(|x| Some(*x)).collect::<Vec<_>>();
                let cols = vec![wrap(&a), wrap(&b), c];
                let base = krippendorff_alpha(&RatingsMatrix::from_columns(&cols).unwrap()).unwrap();

                let mut order: Vec<usize> = (0..a.len()).collect();
                let mut s = seed;
                for i in (1..order.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    order.swap(i, (s >> 33) as usize % (i + 1));
                }
                let permuted: Vec<Vec<Option<u8>>> = [2, 0, 1]
                    .iter()
                    .map(|&r| order.iter().map(|&u| cols[r][u]).collect())
                    .collect();
                let other = krippendorff_alpha(&RatingsMatrix::from_columns(&permuted).unwrap()).unwrap();
                match (base, other) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }

            #[test]
            fn single_rating_unit_is_ignored((a, b) in pair(), extra in 0u8..2) {
                let base = krippendorff_alpha(&RatingsMatrix::from_pair(&a, &b).unwrap()).unwrap();
                let mut m = RatingsMatrix::from_pair(&a, &b).unwrap();
                m.insert("lonely", "r0", extra).unwrap();
                prop_assert_eq!(krippendorff_alpha(&m).unwrap(), base);
            }

            #[test]
            fn alpha_is_one_iff_units_agree((a, b) in pair()) {
                let m = RatingsMatrix::from_pair(&a, &b).unwrap();
                if let Some(alpha) = krippendorff_alpha(&m).unwrap() {
                    prop_assert_eq!(alpha == 1.0, a == b);
                }
            }
        }
    }
}
