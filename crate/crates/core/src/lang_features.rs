//! Typological language distances and syntactic feature vectors.
//!
//! Both tables are ingested from CSV files produced from a URIEL-style database;
//! nothing here computes distances itself.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Geographic,
    Genetic,
    Inventory,
    Syntactic,
    Phonological,
    Featural,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 6] = [
        DistanceKind::Geographic,
        DistanceKind::Genetic,
        DistanceKind::Inventory,
        DistanceKind::Syntactic,
        DistanceKind::Phonological,
        DistanceKind::Featural,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Geographic => "geographic",
            DistanceKind::Genetic => "genetic",
            DistanceKind::Inventory => "inventory",
            DistanceKind::Syntactic => "syntactic",
            DistanceKind::Phonological => "phonological",
            DistanceKind::Featural => "featural",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        DistanceKind::ALL.into_iter().find(|k| k.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Symmetric pairwise distances, stored once per unordered pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistanceTable {
    entries: HashMap<(String, String), [f64; 6]>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl DistanceTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }

    /// Reads `lang_a,lang_b,geographic,genetic,inventory,syntactic,phonological,featural`.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let a_col = col("lang_a")?;
        let b_col = col("lang_b")?;
        let kind_cols = DistanceKind::ALL
            .iter()
            .map(|k| col(k.name()))
            .collect::<Result<Vec<_>>>()?;

        let mut table = DistanceTable::default();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let a = row.get(a_col).unwrap_or("");
            let b = row.get(b_col).unwrap_or("");
            if a.is_empty() || b.is_empty() {
                return Err(Error::InvalidDistance {
                    row: line,
                    message: "empty language code".into(),
                });
            }
            let mut values = [0.0; 6];
            for (slot, (&c, kind)) in values
                .iter_mut()
                .zip(kind_cols.iter().zip(DistanceKind::ALL))
            {
                let raw = row.get(c).unwrap_or("");
                let v: f64 = raw.parse().map_err(|_| Error::InvalidDistance {
                    row: line,
                    message: format!("{} value `{raw}` is not a number", kind.name()),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidDistance {
                        row: line,
                        message: format!("{} distance {v} outside [0, 1]", kind.name()),
                    });
                }
                *slot = v;
            }
            table
                .insert(a, b, values)
                .map_err(|message| Error::InvalidDistance { row: line, message })?;
        }
        Ok(table)
    }

    /// Adds one pair; a repeated pair must carry identical values and a self pair must be zero.
    pub fn insert(
        &mut self,
        a: &str,
        b: &str,
        values: [f64; 6],
    ) -> std::result::Result<(), String> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("distance outside [0, 1]".into());
        }
        if a == b && values.iter().any(|&v| v != 0.0) {
            return Err(format!("self-distance of `{a}` is not zero"));
        }
        let key = pair_key(a, b);
        if let Some(existing) = self.entries.get(&key) {
            if *existing != values {
                return Err(format!("asymmetric duplicate pair {a},{b}"));
            }
            return Ok(());
        }
        self.entries.insert(key, values);
        Ok(())
    }

    /// Stored distance in either order; identical codes are at distance zero; unknown pairs are missing.
    pub fn distance(&self, l1: &str, l2: &str, kind: DistanceKind) -> Option<f64> {
        if l1 == l2 {
            return Some(0.0);
        }
        self.entries
            .get(&pair_key(l1, l2))
            .map(|values| values[kind.index()])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntaxVector {
    pub lang: String,
    pub values: Vec<Option<f64>>,
}

/// Per-language syntactic feature vectors of a fixed width.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SyntaxTable {
    width: usize,
    vectors: HashMap<String, Vec<Option<f64>>>,
}

impl SyntaxTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }

    /// Reads `lang,f1,...,fN`; empty cells are missing values.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("lang") {
            return Err(Error::MissingColumn("lang".into()));
        }
        let width = headers.len() - 1;
        let mut vectors = HashMap::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let lang = row.get(0).unwrap_or("").to_string();
            let values = row
                .iter()
                .skip(1)
                .enumerate()
                .map(|(j, raw)| {
                    if raw.is_empty() {
                        return Ok(None);
                    }
                    raw.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Some)
                        .ok_or_else(|| Error::NotNumeric {
                            row: line,
                            column: headers.get(j + 1).unwrap_or("").to_string(),
                            value: raw.to_string(),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            vectors.insert(lang, values);
        }
        Ok(SyntaxTable { width, vectors })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Stored vector, or an all-missing vector of the table width for unknown languages.
    pub fn syntax_vector(&self, lang: &str) -> SyntaxVector {
        let values = self
            .vectors
            .get(lang)
            .cloned()
            .unwrap_or_else(|| vec![None; self.width]);
        SyntaxVector {
            lang: lang.to_string(),
            values,
        }
    }
}
