use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label: String,
    pub sensitive: String,
    pub subset: String,
    /// Also feed the sensitive column to the model as an input feature.
    #[serde(default = "default_true")]
    pub sensitive_as_feature: bool,
    /// Categorical columns expanded into one indicator feature per value.
    #[serde(default)]
    pub one_hot: Vec<String>,
    /// Columns ignored entirely.
    #[serde(default)]
    pub ignore: Vec<String>,
}

fn default_true() -> bool {
    true
}

impl CsvSchema {
    pub fn new(label: &str, sensitive: &str, subset: &str) -> Self {
        Self {
            label: label.into(),
            sensitive: sensitive.into(),
            subset: subset.into(),
            sensitive_as_feature: true,
            one_hot: Vec::new(),
            ignore: Vec::new(),
        }
    }
}

/// Per-feature statistics used for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Samples of one set materialized for a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: Vec<usize>,
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub attrs: Vec<u8>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row positions (within the batch) whose sensitive attribute is `a`.
    pub fn group(&self, a: u8) -> Vec<usize> {
        (0..self.attrs.len()).filter(|&i| self.attrs[i] == a).collect()
    }

    /// Row positions with attribute `a` and label `y`.
    pub fn cell(&self, a: u8, y: usize) -> Vec<usize> {
        (0..self.attrs.len())
            .filter(|&i| self.attrs[i] == a && self.labels[i] == y)
            .collect()
    }
}

/// A binary-label, binary-sensitive tabular dataset partitioned into subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    features: Tensor,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
    subset_id: Vec<usize>,
    subset_names: Vec<String>,
    feature_names: Vec<String>,
    sensitive_feature: Option<usize>,
    subset_rows: Vec<Vec<usize>>,
    dropped_rows: usize,
}

impl DatasetTable {
    /// Builds a table from aligned columns. Subset ids index `subset_names`.
    pub fn new(
        features: Tensor,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
        subset_id: Vec<usize>,
        subset_names: Vec<String>,
        feature_names: Vec<String>,
        sensitive_feature: Option<usize>,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || sensitive.len() != n || subset_id.len() != n {
            return Err(Error::Validation(format!(
                "misaligned columns: {n} feature rows, {} labels, {} sensitive, {} subset ids",
                labels.len(),
                sensitive.len(),
                subset_id.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Validation(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(i) = labels.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!("row {i}: label {} is not binary", labels[i])));
        }
        if let Some(i) = sensitive.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!(
                "row {i}: sensitive attribute {} is not binary",
                sensitive[i]
            )));
        }
        if let Some(col) = sensitive_feature {
            if col >= features.cols() {
                return Err(Error::Validation(format!("sensitive feature column {col} out of range")));
            }
        }
        let mut subset_rows = vec![Vec::new(); subset_names.len()];
        for (row, &s) in subset_id.iter().enumerate() {
            let slot = subset_rows.get_mut(s).ok_or_else(|| {
                Error::Validation(format!("row {row}: subset id {s} has no name"))
            })?;
            slot.push(row);
        }
        if let Some(s) = subset_rows.iter().position(Vec::is_empty) {
            return Err(Error::Validation(format!("subset `{}` is empty", subset_names[s])));
        }
        Ok(Self {
            features,
            labels,
            sensitive,
            subset_id,
            subset_names,
            feature_names,
            sensitive_feature,
            subset_rows,
            dropped_rows: 0,
        })
    }

    /// Reads a headered, comma-delimited CSV. Rows with missing values
    /// (empty, `?`, `NA`) are dropped and counted in [`Self::dropped_rows`].
    /// Features are left unscaled; call [`Self::standardize`] once the
    /// meta-training subsets are known.
    pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(file, schema)
    }

    pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
        };
        let label_col = find(&schema.label)?;
        let sens_col = find(&schema.sensitive)?;
        let subset_col = find(&schema.subset)?;
        for c in schema.one_hot.iter().chain(&schema.ignore) {
            find(c)?;
        }

        let mut records = Vec::new();
        let mut dropped = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let fields: Vec<String> = rec.iter().map(|f| f.trim().to_string()).collect();
            let missing = fields.iter().enumerate().any(|(i, f)| {
                !schema.ignore.contains(&header[i]) && matches!(f.as_str(), "" | "?" | "NA" | "NaN")
            });
            if missing || fields.len() != header.len() {
                dropped += 1;
                continue;
            }
            records.push(fields);
        }

        let parse_binary = |v: &str, col: &str, row: usize| -> Result<u8> {
            match v.parse::<f64>() {
                Ok(x) if x == 0.0 => Ok(0),
                Ok(x) if x == 1.0 => Ok(1),
                _ => Err(Error::Validation(format!(
                    "row {row}: column `{col}` has non-binary value `{v}`"
                ))),
            }
        };

        // Feature layout in header order.
        enum Source {
            Numeric(usize),
            OneHot(usize, String),
        }
        let mut sources = Vec::new();
        let mut feature_names = Vec::new();
        let mut sensitive_feature = None;
        for (i, name) in header.iter().enumerate() {
            if i == label_col || i == subset_col || schema.ignore.contains(name) {
                continue;
            }
            if i == sens_col {
                if schema.sensitive_as_feature {
                    sensitive_feature = Some(sources.len());
                    sources.push(Source::Numeric(i));
                    feature_names.push(name.clone());
                }
                continue;
            }
            if schema.one_hot.contains(name) {
                let values: BTreeSet<&str> = records.iter().map(|r| r[i].as_str()).collect();
                for v in values {
                    sources.push(Source::OneHot(i, v.to_string()));
                    feature_names.push(format!("{name}={v}"));
                }
            } else {
                sources.push(Source::Numeric(i));
                feature_names.push(name.clone());
            }
        }

        let subset_names: Vec<String> = records
            .iter()
            .map(|r| r[subset_col].clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let subset_index: BTreeMap<&str, usize> = subset_names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();

        let n = records.len();
        let d = sources.len();
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut sensitive = Vec::with_capacity(n);
        let mut subset_id = Vec::with_capacity(n);
        for (row, r) in records.iter().enumerate() {
            labels.push(parse_binary(&r[label_col], &schema.label, row)?);
            sensitive.push(parse_binary(&r[sens_col], &schema.sensitive, row)?);
            subset_id.push(subset_index[r[subset_col].as_str()]);
            for src in &sources {
                let v = match src {
                    Source::Numeric(c) => r[*c].parse::<f64>().map_err(|_| {
                        Error::Validation(format!(
                            "row {row}: column `{}` has non-numeric value `{}`",
                            header[*c], r[*c]
                        ))
                    })?,
                    Source::OneHot(c, value) => f64::from(u8::from(&r[*c] == value)),
                };
                if !v.is_finite() {
                    return Err(Error::Validation(format!("row {row}: non-finite feature")));
                }
                data.push(v);
            }
        }
        let features = Tensor::from_vec(n, d, data)?;
        let mut table = Self::new(
            features,
            labels,
            sensitive,
            subset_id,
            subset_names,
            feature_names,
            sensitive_feature,
        )?;
        table.dropped_rows = dropped;
        Ok(table)
    }

    /// Writes the table as CSV. The sensitive feature column, if any, is
    /// folded into the sensitive column so that reloading with
    /// `sensitive_as_feature` reproduces the same layout.
    pub fn write_csv(&self, path: impl AsRef<Path>, schema: &CsvSchema) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        let mut header: Vec<String> = Vec::new();
        for (c, name) in self.feature_names.iter().enumerate() {
            if Some(c) == self.sensitive_feature {
                header.push(schema.sensitive.clone());
            } else {
                header.push(name.clone());
            }
        }
        if self.sensitive_feature.is_none() {
            header.push(schema.sensitive.clone());
        }
        header.push(schema.label.clone());
        header.push(schema.subset.clone());
        w.write_record(&header)?;
        for r in 0..self.n_samples() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            for c in 0..self.n_features() {
                if Some(c) == self.sensitive_feature {
                    rec.push(self.sensitive[r].to_string());
                } else {
                    rec.push(format!("{}", self.features.get(r, c)));
                }
            }
            if self.sensitive_feature.is_none() {
                rec.push(self.sensitive[r].to_string());
            }
            rec.push(self.labels[r].to_string());
            rec.push(self.subset_names[self.subset_id[r]].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Z-scores every feature column with statistics from the given subsets
    /// only. Constant columns are centered but not rescaled.
    pub fn standardize(&mut self, fit_subsets: &[usize]) -> Result<FeatureStats> {
        let rows: Vec<usize> = fit_subsets
            .iter()
            .map(|&s| {
                self.subset_rows
                    .get(s)
                    .ok_or_else(|| Error::Validation(format!("unknown subset id {s}")))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .copied()
            .collect();
        if rows.is_empty() {
            return Err(Error::Validation("no rows to fit feature statistics".into()));
        }
        let d = self.n_features();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in &rows {
            for (m, v) in mean.iter_mut().zip(self.features.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in &rows {
            for ((s, v), m) in var.iter_mut().zip(self.features.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        self.apply_stats(&FeatureStats {
            mean: mean.clone(),
            std: std.clone(),
        })?;
        Ok(FeatureStats { mean, std })
    }

    pub fn apply_stats(&mut self, stats: &FeatureStats) -> Result<()> {
        let d = self.n_features();
        if stats.mean.len() != d || stats.std.len() != d {
            return Err(Error::shape("standardize", "statistics length mismatch"));
        }
        let data = self.features.data_mut();
        for (k, v) in data.iter_mut().enumerate() {
            let c = k % d;
            *v = (*v - stats.mean[c]) / stats.std[c];
        }
        Ok(())
    }

    /// Sets the sensitive feature column (if present) to zero for every row.
    pub fn zero_sensitive_feature(&mut self) {
        if let Some(c) = self.sensitive_feature {
            for r in 0..self.features.rows() {
                self.features.set(r, c, 0.0);
            }
        }
    }

    pub fn batch(&self, rows: &[usize]) -> Batch {
        let d = self.n_features();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend_from_slice(self.features.row(r));
        }
        Batch {
            rows: rows.to_vec(),
            x: Tensor::from_vec(rows.len(), d, data).expect("row-aligned batch"),
            labels: rows.iter().map(|&r| usize::from(self.labels[r])).collect(),
            attrs: rows.iter().map(|&r| self.sensitive[r]).collect(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_subsets(&self) -> usize {
        self.subset_names.len()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn subset_ids(&self) -> &[usize] {
        &self.subset_id
    }

    pub fn subset_names(&self) -> &[String] {
        &self.subset_names
    }

    pub fn subset_rows(&self, subset: usize) -> &[usize] {
        &self.subset_rows[subset]
    }

    pub fn subset_of(&self, row: usize) -> usize {
        self.subset_id[row]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sensitive_feature(&self) -> Option<usize> {
        self.sensitive_feature
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn subset_index(&self, name: &str) -> Option<usize> {
        self.subset_names.iter().position(|s| s == name)
    }
}
