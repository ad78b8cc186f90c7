//! Synthetic Gaussian-mixture datasets with per-class difficulty, stratified
//! validation splits, and a small CSV format (`label,x0,...,x{d-1}`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub mean: Vec<f64>,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub classes: Vec<ClassSpec>,
    /// Box every sample is clamped to.
    pub domain: (f64, f64),
    pub seed: u64,
}

impl MixtureSpec {
    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::InvalidParameter("a mixture needs at least 2 classes".into()));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidParameter("class means must be nonempty".into()));
        }
        let (lo, hi) = self.domain;
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!("domain box [{lo}, {hi}] is empty")));
        }
        for (k, c) in self.classes.iter().enumerate() {
            if c.mean.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "class mean",
                    expected: d,
                    got: c.mean.len(),
                });
            }
            if c.count == 0 {
                return Err(Error::InvalidParameter(format!("class {k} has count 0")));
            }
            if !(c.std > 0.0 && c.std.is_finite()) {
                return Err(Error::InvalidParameter(format!("class {k} has std {}", c.std)));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::NonFinite(format!("class {k} mean")));
            }
        }
        Ok(())
    }

    /// Same classes with different counts and seed.
    pub fn resampled(&self, count_per_class: usize, seed: u64) -> Self {
        let mut spec = self.clone();
        for c in &mut spec.classes {
            c.count = count_per_class;
        }
        spec.seed = seed;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// `class_indices[k]` lists the rows with label `k`, ascending.
    pub class_indices: Vec<Vec<usize>>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, classes: usize, provenance: impl Into<String>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: inputs.rows(),
                got: labels.len(),
            });
        }
        let mut class_indices = vec![Vec::new(); classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::LabelOutOfRange { label: y, classes });
            }
            class_indices[y].push(i);
        }
        Ok(Self {
            inputs,
            labels,
            classes,
            class_indices,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.class_indices.iter().map(Vec::len).collect()
    }

    /// Error naming the first class with no members.
    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_indices.iter().position(Vec::is_empty) {
            Some(k) => Err(Error::MissingClass(k)),
            None => Ok(()),
        }
    }

    pub fn is_balanced(&self) -> bool {
        let counts = self.class_counts();
        counts.windows(2).all(|w| w[0] == w[1])
    }

    pub fn subset(&self, rows: &[usize], provenance: impl Into<String>) -> Self {
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(self.inputs.select_rows(rows), labels, self.classes, provenance).expect("labels already validated")
    }
}

pub fn gaussian_mixture(spec: &MixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.dim();
    let (lo, hi) = spec.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n: usize = spec.classes.iter().map(|c| c.count).sum();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (k, class) in spec.classes.iter().enumerate() {
        let noise = Normal::new(0.0, class.std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for _ in 0..class.count {
            for &m in &class.mean {
                data.push((m + noise.sample(&mut rng)).clamp(lo, hi));
            }
            labels.push(k);
        }
    }
    let inputs = Matrix::from_vec(n, d, data)?;
    Dataset::new(inputs, labels, spec.classes.len(), format!("gaussian-mixture(seed={})", spec.seed))
}

/// Moves the first `per_class_val` members of every class to the validation split.
pub fn stratified_split(data: &Dataset, per_class_val: usize) -> Result<(Dataset, Dataset)> {
    for (k, members) in data.class_indices.iter().enumerate() {
        if members.len() <= per_class_val {
            return Err(Error::InvalidParameter(format!(
                "class {k} has {} members, need more than {per_class_val}",
                members.len()
            )));
        }
    }
    let mut in_val = vec![false; data.len()];
    for members in &data.class_indices {
        for &i in &members[..per_class_val] {
            in_val[i] = true;
        }
    }
    let (val_rows, train_rows): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| in_val[i]);
    Ok((
        data.subset(&train_rows, format!("{}:train", data.provenance)),
        data.subset(&val_rows, format!("{}:val", data.provenance)),
    ))
}

/// Writes the dataset with 17 significant digits per feature.
pub fn write_csv_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..data.dim()).map(|j| format!("x{j}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (row, y) in data.inputs.iter_rows().zip(&data.labels) {
        write!(out, "{y}")?;
        for v in row {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_csv_dataset(path: &Path) -> Result<Dataset> {
    load_csv(path, None)
}

/// Like [`load_csv_dataset`], but rejects any label `≥ classes`.
pub fn load_csv_dataset_with_classes(path: &Path, classes: usize) -> Result<Dataset> {
    load_csv(path, Some(classes))
}

fn load_csv(path: &Path, declared_classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Io(e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::Csv { line: 1, message: e.to_string() })?.clone();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("label".to_string())
        .chain((0..d).map(|j| format!("x{j}")))
        .collect();
    if d == 0 || header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::Csv {
            line: 1,
            message: "header must be label,x0,x1,...".into(),
        });
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut line_of_label: Vec<(usize, u64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != d + 1 {
            return Err(Error::Csv {
                line,
                message: format!("expected {} fields, found {}", d + 1, record.len()),
            });
        }
        let label: usize = record[0].trim().parse().map_err(|_| Error::Csv {
            line,
            message: format!("label {:?} is not a nonnegative integer", &record[0]),
        })?;
        if let Some(k) = declared_classes {
            if label >= k {
                return Err(Error::Csv {
                    line,
                    message: format!("label {label} out of range for {k} classes"),
                });
            }
        }
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
                line,
                message: format!("feature {field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    line,
                    message: format!("feature {field:?} is not finite"),
                });
            }
            data.push(v);
        }
        labels.push(label);
        line_of_label.push((label, line));
    }
    if labels.is_empty() {
        return Err(Error::Csv {
            line: 1,
            message: "no data rows".into(),
        });
    }

    let classes = declared_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let mut seen = vec![false; classes];
    for &y in &labels {
        seen[y] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        // The largest label is the one that breaks contiguity.
        let top = labels.iter().copied().max().unwrap_or(0);
        let line = line_of_label.iter().find(|(y, _)| *y == top).map_or(0, |(_, l)| *l);
        return Err(Error::Csv {
            line,
            message: format!("labels are not contiguous: label {top} present but {missing} absent"),
        });
    }
    if classes < 2 {
        return Err(Error::Csv {
            line: line_of_label[0].1,
            message: "need at least two classes".into(),
        });
    }
    let inputs = Matrix::from_vec(labels.len(), d, data)?;
    Dataset::new(inputs, labels, classes, path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(counts: &[usize], seed: u64) -> MixtureSpec {
        MixtureSpec {
            classes: counts
                .iter()
                .enumerate()
                .map(|(k, &count)| ClassSpec {
                    mean: vec![0.2 + 0.3 * k as f64, 0.5],
                    std: 0.05 * (k + 1) as f64,
                    count,
                })
                .collect(),
            domain: (0.0, 1.0),
            seed,
        }
    }

    #[test]
    fn counts_are_exact() {
        let data = gaussian_mixture(&spec(&[100, 200, 300], 1)).unwrap();
        assert_eq!(data.class_counts(), vec![100, 200, 300]);
        assert_eq!(data.len(), 600);
        assert!(data.inputs.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gaussian_mixture(&spec(&[20, 20], 4)).unwrap(), gaussian_mixture(&spec(&[20, 20], 4)).unwrap());
        assert_ne!(
            gaussian_mixture(&spec(&[20, 20], 4)).unwrap().inputs,
            gaussian_mixture(&spec(&[20, 20], 5)).unwrap().inputs
        );
    }

    #[test]
    fn degenerate_specs_rejected() {
        assert!(gaussian_mixture(&spec(&[10], 0)).is_err());
        assert!(gaussian_mixture(&spec(&[10, 0], 0)).is_err());
        let mut s = spec(&[10, 10], 0);
        s.classes[1].std = 0.0;
        assert!(gaussian_mixture(&s).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let data = gaussian_mixture(&spec(&[30, 40, 50], 2)).unwrap();
        let (train, val) = stratified_split(&data, 10).unwrap();
        assert_eq!(val.class_counts(), vec![10, 10, 10]);
        assert_eq!(train.class_counts(), vec![20, 30, 40]);
        let mut rows: Vec<Vec<f64>> = train.inputs.iter_rows().chain(val.inputs.iter_rows()).map(<[f64]>::to_vec).collect();
        let mut original: Vec<Vec<f64>> = data.inputs.iter_rows().map(<[f64]>::to_vec).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        original.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, original);

        let (all, none) = stratified_split(&data, 0).unwrap();
        assert_eq!(all.inputs, data.inputs);
        assert!(none.is_empty());
        assert!(stratified_split(&data, 30).is_err());
    }

    #[test]
    fn split_follows_cifar_protocol() {
        let data = gaussian_mixture(&MixtureSpec {
            classes: (0..10)
                .map(|k| ClassSpec {
                    mean: vec![k as f64 / 10.0],
                    std: 0.1,
                    count: 5000,
                })
                .collect(),
            domain: (0.0, 1.0),
            seed: 0,
        })
        .unwrap();
        let (train, val) = stratified_split(&data, 300).unwrap();
        assert_eq!(val.len(), 3000);
        assert!(val.class_counts().iter().all(|&c| c == 300));
        assert_eq!(train.len(), 47_000);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let data = gaussian_mixture(&spec(&[5, 7], 3)).unwrap();
        let path = dir.path().join("d.csv");
        write_csv_dataset(&path, &data).unwrap();
        let loaded = load_csv_dataset(&path).unwrap();
        assert_eq!(loaded.inputs, data.inputs);
        assert_eq!(loaded.labels, data.labels);
        assert_eq!(loaded.class_indices, data.class_indices);

        let header_only = dir.path().join("h.csv");
        std::fs::write(&header_only, "label,x0,x1\n").unwrap();
        let err = load_csv_dataset(&header_only).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");

        let gap = dir.path().join("g.csv");
        std::fs::write(&gap, "label,x0\n0,0.1\n2,0.3\n").unwrap();
        let err = load_csv_dataset(&gap).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");

        let ragged = dir.path().join("r.csv");
        std::fs::write(&ragged, "label,x0,x1\n0,0.1,0.2\n1,0.3\n").unwrap();
        assert!(matches!(load_csv_dataset(&ragged), Err(Error::Csv { line: 3, .. })));

        let out_of_range = dir.path().join("o.csv");
        std::fs::write(&out_of_range, "label,x0\n0,0.1\n1,0.2\n2,0.3\n").unwrap();
        let err = load_csv_dataset_with_classes(&out_of_range, 2).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 4, .. }), "{err}");

        let bad = dir.path().join("b.csv");
        std::fs::write(&bad, "label,x0\n0,abc\n1,0.2\n").unwrap();
        assert!(matches!(load_csv_dataset(&bad), Err(Error::Csv { line: 2, .. })));
    }
}
