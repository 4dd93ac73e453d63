//! Per-response label tables: CSV with header `response_id,c<id>,...`.
//!
//! Cells hold `0`, `1`, or nothing (unscored). A table may cover one modality
//! only; [`LabelTable::merge`] joins modality files on `response_id`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use crate::error::{csv_line, Error, Result};
use crate::rubric::{CategoryId, CategoryVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub response_id: String,
    pub values: Vec<Option<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    categories: Vec<CategoryId>,
    rows: Vec<LabelRow>,
}

fn parse_category_column(name: &str) -> Option<CategoryId> {
    name.strip_prefix('c')?.parse().ok().map(CategoryId)
}

impl LabelTable {
    pub fn new(categories: Vec<CategoryId>) -> Self {
        LabelTable {
            categories,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, response_id: impl Into<String>, values: Vec<Option<u8>>) -> Result<()> {
        if values.len() != self.categories.len() {
            return Err(Error::LengthMismatch(values.len(), self.categories.len()));
        }
        if let Some(v) = values.iter().flatten().find(|v| **v > 1) {
            return Err(Error::NonBinaryValue {
                context: "label cell".into(),
                value: v.to_string(),
            });
        }
        let response_id = response_id.into();
        if self.rows.iter().any(|r| r.response_id == response_id) {
            return Err(Error::SchemaMismatch(format!("duplicate response_id {response_id}")));
        }
        self.rows.push(LabelRow { response_id, values });
        Ok(())
    }

    pub fn categories(&self) -> &[CategoryId] {
        &self.categories
    }

    pub fn rows(&self) -> &[LabelRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, id: CategoryId) -> Option<usize> {
        self.categories.iter().position(|c| *c == id)
    }

    pub fn row(&self, response_id: &str) -> Option<&LabelRow> {
        self.rows.iter().find(|r| r.response_id == response_id)
    }

    pub fn response_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.response_id.as_str())
    }

    pub fn read_csv<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(source_name, Some(1), e.to_string()))?
            .clone();
        let mut cols = headers.iter();
        if cols.next() != Some("response_id") {
            return Err(Error::parse(source_name, Some(1), "first column must be response_id"));
        }
        let mut categories = Vec::new();
        for name in cols {
            let id = parse_category_column(name)
                .ok_or_else(|| Error::parse(source_name, Some(1), format!("bad category column {name:?}")))?;
            if categories.contains(&id) {
                return Err(Error::parse(source_name, Some(1), format!("duplicate column {name}")));
            }
            categories.push(id);
        }
        let mut table = LabelTable::new(categories);
        for record in rdr.records() {
            let record = record.map_err(|e| Error::parse(source_name, csv_line(&e), e.to_string()))?;
            let line = record.position().map(|p| p.line() as usize);
            let values = record
                .iter()
                .skip(1)
                .zip(&table.categories)
                .map(|(cell, id)| match cell {
                    "" => Ok(None),
                    "0" => Ok(Some(0)),
                    "1" => Ok(Some(1)),
                    other => Err(Error::parse(
                        source_name,
                        line,
                        format!("c{id} value {other:?} is not 0, 1 or empty"),
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            table
                .push(&record[0], values)
                .map_err(|e| Error::parse(source_name, line, e.to_string()))?;
        }
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("response_id");
        for id in &self.categories {
            out.push_str(&format!(",c{id}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.response_id);
            for v in &row.values {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Join tables with disjoint categories over the same response ids.
    /// Rows follow the order of the first table.
    pub fn merge(tables: &[LabelTable]) -> Result<LabelTable> {
        let Some(first) = tables.first() else {
            return Err(Error::EmptyTable);
        };
        let ids: BTreeSet<&str> = first.response_ids().collect();
        let mut categories = Vec::new();
        for t in tables {
            let other: BTreeSet<&str> = t.response_ids().collect();
            if other != ids {
                return Err(Error::SchemaMismatch(
                    "label tables cover different response ids".into(),
                ));
            }
            for c in &t.categories {
                if categories.contains(c) {
                    return Err(Error::SchemaMismatch(format!("category c{c} appears in two tables")));
                }
                categories.push(*c);
            }
        }
        let mut merged = LabelTable::new(categories);
        for row in &first.rows {
            let values = tables
                .iter()
                .flat_map(|t| t.row(&row.response_id).expect("same ids").values.iter().copied())
                .collect();
            merged.push(row.response_id.clone(), values)?;
        }
        Ok(merged)
    }

    /// Scored cells of each row as a category vector (unscored cells omitted).
    pub fn vectors(&self) -> Vec<(String, CategoryVector)> {
        self.rows
            .iter()
            .map(|row| {
                let v = CategoryVector::from_scores(
                    self.categories
                        .iter()
                        .zip(&row.values)
                        .filter_map(|(id, v)| v.map(|v| (*id, v))),
                );
                (row.response_id.clone(), v)
            })
            .collect()
    }

    /// Column of one category keyed by response id.
    pub fn column(&self, id: CategoryId) -> Option<BTreeMap<&str, Option<u8>>> {
        let idx = self.column_index(id)?;
        Some(
            self.rows
                .iter()
                .map(|r| (r.response_id.as_str(), r.values[idx]))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_write() {
        let src = "response_id,c14,c15\nr1,1,0\nr2,,\n";
        let t = LabelTable::read_csv(src.as_bytes(), "t.csv").unwrap();
        assert_eq!(t.categories(), &[CategoryId(14), CategoryId(15)]);
        assert_eq!(t.rows()[1].values, vec![None, None]);
        assert_eq!(t.to_csv(), src);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let src = "response_id,c1\nr1,1\nr2,7\n";
        let err = LabelTable::read_csv(src.as_bytes(), "t.csv").unwrap_err();
        assert!(err.to_string().starts_with("t.csv:3:"), "{err}");
        let dup = "response_id,c1\nr1,1\nr1,0\n";
        let err = LabelTable::read_csv(dup.as_bytes(), "t.csv").unwrap_err();
        assert!(err.to_string().starts_with("t.csv:3:"), "{err}");
        assert!(matches!(
            LabelTable::read_csv("response_id,c1\n".as_bytes(), "t.csv"),
            Err(Error::EmptyTable)
        ));
        assert!(LabelTable::read_csv("id,c1\nr1,1\n".as_bytes(), "t.csv").is_err());
    }

    #[test]
    fn merge_modalities() {
        let a = LabelTable::read_csv("response_id,c1\nr1,1\nr2,0\n".as_bytes(), "a").unwrap();
        let b = LabelTable::read_csv("response_id,c14\nr2,1\nr1,0\n".as_bytes(), "b").unwrap();
        let m = LabelTable::merge(&[a.clone(), b]).unwrap();
        assert_eq!(m.to_csv(), "response_id,c1,c14\nr1,1,0\nr2,0,1\n");
        let c = LabelTable::read_csv("response_id,c14\nr3,1\n".as_bytes(), "c").unwrap();
        assert!(matches!(
            LabelTable::merge(&[a.clone(), c]),
            Err(Error::SchemaMismatch(_))
        ));
        assert!(matches!(
            LabelTable::merge(&[a.clone(), a]),
            Err(Error::SchemaMismatch(_))
        ));
    }
}
