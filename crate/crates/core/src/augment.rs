//! SMOTE oversampling over real-valued feature vectors.
//!
//! Each synthetic row interpolates between a minority parent and one of its
//! k nearest minority neighbours: `x + gap * (neighbour - x)`, `gap ∈ [0, 1]`.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{csv_line, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: u8,
}

/// Rows of equal dimension with binary labels and finite features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDataset {
    dim: usize,
    rows: Vec<Sample>,
}

impl FeatureDataset {
    pub fn new(rows: Vec<Sample>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.features.len());
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be at least 1".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.features.len(),
                });
            }
            if r.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteFeature(i));
            }
            if r.label > 1 {
                return Err(Error::NonBinaryValue {
                    context: format!("label of row {}", r.id),
                    value: r.label.to_string(),
                });
            }
        }
        Ok(FeatureDataset { dim, rows })
    }

    /// Rows with ids `row-<i>`.
    pub fn from_points(points: &[(Vec<f64>, u8)]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .enumerate()
                .map(|(i, (f, l))| Sample {
                    id: format!("row-{i}"),
                    features: f.clone(),
                    label: *l,
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, label: u8) -> usize {
        self.rows.iter().filter(|r| r.label == label).count()
    }

    /// The less frequent label; ties go to 1.
    pub fn minority_label(&self) -> u8 {
        if self.count(1) <= self.count(0) {
            1
        } else {
            0
        }
    }

    /// Feature CSV: `id,f1,...,fd,label`.
    pub fn read_csv<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(source_name, Some(1), e.to_string()))?
            .clone();
        let n_cols = headers.len();
        if n_cols < 3 || &headers[0] != "id" || &headers[n_cols - 1] != "label" {
            return Err(Error::parse(source_name, Some(1), "expected header id,f1,...,fd,label"));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::parse(source_name, csv_line(&e), e.to_string()))?;
            let line = record.position().map(|p| p.line() as usize);
            let features = (1..n_cols - 1)
                .map(|i| {
                    let x: f64 = record[i]
                        .parse()
                        .map_err(|_| Error::parse(source_name, line, format!("bad feature {:?}", &record[i])))?;
                    if x.is_finite() {
                        Ok(x)
                    } else {
                        Err(Error::parse(source_name, line, "feature is not finite"))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let label = match &record[n_cols - 1] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::parse(
                        source_name,
                        line,
                        format!("label {other:?} is not 0 or 1"),
                    ))
                }
            };
            rows.push(Sample {
                id: record[0].to_string(),
                features,
                label,
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    /// Floats use shortest round-trip formatting, so output is byte-stable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for j in 1..=self.dim {
            out.push_str(&format!(",f{j}"));
        }
        out.push_str(",label\n");
        for r in &self.rows {
            out.push_str(&r.id);
            for x in &r.features {
                out.push_str(&format!(",{x}"));
            }
            out.push_str(&format!(",{}\n", r.label));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Minority/majority ratio to reach, in (0, 1].
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

/// Source of the random choices SMOTE makes. Injectable so tests can force them.
pub trait SmoteSampler {
    /// Index into the minority rows, uniform over `0..n`.
    fn parent(&mut self, n: usize) -> usize;
    /// Index into the parent's neighbour list, uniform over `0..k`.
    fn neighbor(&mut self, k: usize) -> usize;
    /// Interpolation gap in [0, 1].
    fn gap(&mut self) -> f64;
}

pub struct RngSampler<R>(pub R);

impl<R: Rng> SmoteSampler for RngSampler<R> {
    fn parent(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    fn neighbor(&mut self, k: usize) -> usize {
        self.0.gen_range(0..k)
    }

    fn gap(&mut self) -> f64 {
        self.0.gen_range(0.0..=1.0)
    }
}

/// Where a synthetic row came from (dataset row indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    pub parent: usize,
    pub neighbor: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    pub dataset: FeatureDataset,
    /// One entry per appended row, in order.
    pub origins: Vec<SyntheticOrigin>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_k(minority: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be at least 1".into()));
    }
    if minority <= k {
        return Err(Error::TooFewMinoritySamples { minority, k });
    }
    Ok(())
}

/// The `k` rows sharing row `i`'s label (excluding `i`) nearest to it by
/// Euclidean distance, nearest first; ties go to the lower row index.
pub fn knn_minority(data: &FeatureDataset, i: usize, k: usize) -> Result<Vec<usize>> {
    let row = data
        .rows
        .get(i)
        .ok_or_else(|| Error::InvalidArgument(format!("row {i} out of range")))?;
    let label = row.label;
    check_k(data.count(label), k)?;
    let mut candidates: Vec<(f64, usize)> = data
        .rows
        .iter()
        .enumerate()
        .filter(|(j, r)| *j != i && r.label == label)
        .map(|(j, r)| (squared_distance(&row.features, &r.features), j))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(candidates.into_iter().take(k).map(|(_, j)| j).collect())
}

/// Number of minority rows needed so that minority/majority >= ratio.
fn target_minority(majority: usize, ratio: f64) -> usize {
    let mut m = (ratio * majority as f64).ceil() as usize;
    while m > 0 && (m - 1) as f64 / majority as f64 >= ratio {
        m -= 1;
    }
    m
}

/// SMOTE with a seeded ChaCha stream.
pub fn smote(data: &FeatureDataset, cfg: &SmoteConfig) -> Result<FeatureDataset> {
    let mut sampler = RngSampler(ChaCha8Rng::seed_from_u64(cfg.seed));
    smote_with(data, cfg, &mut sampler).map(|o| o.dataset)
}

/// SMOTE driven by an explicit sampler; also reports each row's origin.
///
/// Original rows are kept in order; synthetic rows (ids `synthetic-<n>`) are
/// appended until the minority count reaches `target_ratio` of the majority.
pub fn smote_with(data: &FeatureDataset, cfg: &SmoteConfig, sampler: &mut impl SmoteSampler) -> Result<SmoteOutput> {
    if !(cfg.target_ratio > 0.0 && cfg.target_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target_ratio {} must lie in (0, 1]",
            cfg.target_ratio
        )));
    }
    let minority_label = data.minority_label();
    let minority: Vec<usize> = (0..data.len())
        .filter(|&i| data.rows[i].label == minority_label)
        .collect();
    let majority = data.len() - minority.len();
    if minority.is_empty() || majority == 0 {
        return Err(Error::SingleClassDataset);
    }
    check_k(minority.len(), cfg.k_neighbors)?;

    let needed = target_minority(majority, cfg.target_ratio).saturating_sub(minority.len());
    let mut rows = data.rows.clone();
    let mut origins = Vec::with_capacity(needed);
    if needed > 0 {
        let neighbours = minority
            .iter()
            .map(|&i| knn_minority(data, i, cfg.k_neighbors))
            .collect::<Result<Vec<_>>>()?;
        for n in 0..needed {
            let p = sampler.parent(minority.len());
            let parent = minority[p];
            let neighbor = neighbours[p][sampler.neighbor(cfg.k_neighbors)];
            let gap = sampler.gap();
            let x = &data.rows[parent].features;
            let z = &data.rows[neighbor].features;
            let features = x.iter().zip(z).map(|(xi, zi)| xi + gap * (zi - xi)).collect();
            rows.push(Sample {
                id: format!("synthetic-{n}"),
                features,
                label: minority_label,
            });
            origins.push(SyntheticOrigin { parent, neighbor, gap });
        }
    }
    Ok(SmoteOutput {
        dataset: FeatureDataset { dim: data.dim, rows },
        origins,
    })
}
