//! Datasets, symmetric class vectors, synthetic generators, CSV ingestion,
//! and fold splitting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A feature vector. All entries are finite; the dimension is fixed across
/// a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    features: Vec<f64>,
}

impl Observation {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::domain("observation needs at least one feature"));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "observation contains non-finite value {bad}"
            )));
        }
        Ok(Observation { features })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// Symmetric per-class membership vector: +1 at the true class and
/// -1/(C-1) everywhere else, so the entries sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVector {
    entries: Vec<f64>,
    true_class: usize,
}

impl ClassVector {
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entry(&self, c: usize) -> f64 {
        self.entries[c]
    }

    pub fn true_class(&self) -> usize {
        self.true_class
    }

    pub fn class_count(&self) -> usize {
        self.entries.len()
    }
}

/// Build the symmetric class vector for `label` out of `c_count` classes.
pub fn encode_class_vector(label: usize, c_count: usize) -> Result<ClassVector> {
    if c_count < 2 {
        return Err(Error::domain(format!(
            "class vectors need at least 2 classes, got {c_count}"
        )));
    }
    if label >= c_count {
        return Err(Error::domain(format!(
            "label {label} out of range for {c_count} classes"
        )));
    }
    let off = -1.0 / (c_count as f64 - 1.0);
    let mut entries = vec![off; c_count];
    entries[label] = 1.0;
    Ok(ClassVector {
        entries,
        true_class: label,
    })
}

/// One labeled example: an observation with its class vector and an id that
/// is its index within the owning dataset.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: usize,
    pub observation: Observation,
    pub class_vector: ClassVector,
}

/// An immutable set of labeled examples sharing a feature dimension and a
/// class alphabet.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<Example>,
    class_names: Vec<String>,
    n: usize,
}

impl Dataset {
    /// Assemble a dataset from parallel feature rows and label indices.
    pub fn from_rows(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::domain("dataset needs at least one example"));
        }
        if features.len() != labels.len() {
            return Err(Error::domain(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let c_count = class_names.len();
        if c_count < 2 {
            return Err(Error::domain("dataset needs at least two classes"));
        }
        let n = features[0].len();
        let mut examples = Vec::with_capacity(features.len());
        for (id, (row, label)) in features.into_iter().zip(labels).enumerate() {
            if row.len() != n {
                return Err(Error::domain(format!(
                    "example {id} has {} features, expected {n}",
                    row.len()
                )));
            }
            examples.push(Example {
                id,
                observation: Observation::new(row)?,
                class_vector: encode_class_vector(label, c_count)?,
            });
        }
        Ok(Dataset {
            examples,
            class_names,
            n,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of classes.
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        self.examples[i].observation.features()
    }

    pub fn label(&self, i: usize) -> usize {
        self.examples[i].class_vector.true_class()
    }

    /// Class-vector entry y_ic.
    pub fn y(&self, i: usize, c: usize) -> f64 {
        self.examples[i].class_vector.entry(c)
    }

    /// A new dataset holding the given examples (re-indexed from 0).
    pub fn subset(&self, ids: &[usize]) -> Result<Dataset> {
        if ids.is_empty() {
            return Err(Error::domain("subset selection is empty"));
        }
        let mut examples = Vec::with_capacity(ids.len());
        for (new_id, &old) in ids.iter().enumerate() {
            if old >= self.len() {
                return Err(Error::domain(format!("subset id {old} out of range")));
            }
            let mut ex = self.examples[old].clone();
            ex.id = new_id;
            examples.push(ex);
        }
        Ok(Dataset {
            examples,
            class_names: self.class_names.clone(),
            n: self.n,
        })
    }

    /// Min-max scale every feature to [0, 1]; constant features map to 0.
    pub fn normalize_minmax(&self) -> Dataset {
        let mut lo = vec![f64::INFINITY; self.n];
        let mut hi = vec![f64::NEG_INFINITY; self.n];
        for ex in &self.examples {
            for (d, &v) in ex.observation.features().iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let mut out = self.clone();
        for ex in &mut out.examples {
            for (d, v) in ex.observation.features.iter_mut().enumerate() {
                let span = hi[d] - lo[d];
                *v = if span > 0.0 { (*v - lo[d]) / span } else { 0.0 };
            }
        }
        out
    }

    /// Content hash tying caches to this exact dataset.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.n as u64).to_le_bytes());
        h.update((self.class_count() as u64).to_le_bytes());
        for name in &self.class_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for ex in &self.examples {
            h.update((ex.class_vector.true_class() as u64).to_le_bytes());
            for &v in ex.observation.features() {
                h.update(v.to_le_bytes());
            }
        }
        let digest = h.finalize();
        let mut s = String::with_capacity(64);
        for b in digest {
            let _ = write!(s, "{b:02x}");
        }
        s
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion and export
// ---------------------------------------------------------------------------

/// Load a dataset from a UTF-8 CSV file with a header row.
///
/// Feature columns are all non-label columns in header order; the class
/// alphabet is the set of distinct labels, ordered lexicographically.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_to_error)?;
    let headers = reader.headers().map_err(csv_to_error)?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::domain(format!(
                "label column '{label_column}' not found in header of {}",
                path.display()
            ))
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::domain("CSV has no feature columns"));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (rec_no, record) in reader.records().enumerate() {
        let record = record.map_err(csv_to_error)?;
        // Header is file row 1.
        let row_no = rec_no + 2;
        let mut feats = Vec::with_capacity(feature_names.len());
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let col_name = headers.get(col).unwrap_or("?");
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                column: col_name.to_string(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    column: col_name.to_string(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            feats.push(value);
        }
        if feats.len() != feature_names.len() {
            return Err(Error::Parse {
                row: row_no,
                column: "-".to_string(),
                message: format!(
                    "expected {} feature cells, found {}",
                    feature_names.len(),
                    feats.len()
                ),
            });
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::domain(format!("{} has no data rows", path.display())));
    }

    // Lexicographic class ordering makes ingestion deterministic.
    let mut class_index: BTreeMap<String, usize> = BTreeMap::new();
    for label in &raw_labels {
        let next = class_index.len();
        class_index.entry(label.clone()).or_insert(next);
    }
    let class_names: Vec<String> = class_index.keys().cloned().collect();
    if class_names.len() < 2 {
        return Err(Error::domain(format!(
            "dataset has a single class '{}'",
            class_names[0]
        )));
    }
    let name_to_idx: BTreeMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|name| name_to_idx[name.as_str()])
        .collect();

    Dataset::from_rows(rows, labels, class_names)
}

fn csv_to_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => Error::Internal("csv io error".into()),
        }
    } else {
        Error::Domain(format!("csv error: {e}"))
    }
}

/// Render a dataset in the same CSV layout `load_csv` ingests
/// (features `f0..f{n-1}` then a `label` column).
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    for d in 0..dataset.dim() {
        let _ = write!(out, "f{d},");
    }
    out.push_str("label\n");
    for ex in dataset.examples() {
        for &v in ex.observation.features() {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(
            out,
            "{}",
            dataset.class_names()[ex.class_vector.true_class()]
        );
    }
    out
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_csv(dataset))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Component means of the two-class Ripley mixture, `[class][component]`.
/// Class 0 is "N", class 1 is "P"; every component is isotropic with
/// variance [`RIPLEY_VARIANCE`].
pub const RIPLEY_CENTERS: [[(f64, f64); 2]; 2] = [
    [(-0.3, 0.7), (0.4, 0.7)],
    [(-0.7, 0.3), (0.3, 0.3)],
];

pub const RIPLEY_VARIANCE: f64 = 0.03;

/// Draw a train/test pair from the two-class Ripley mixture.
///
/// Classes are balanced (sizes differ by at most one) and the draw is a pure
/// function of the arguments. Train and test use independent seeded streams,
/// so the same seed yields the same test set for any train size.
pub fn gen_ripley(m_train: usize, m_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if m_train < 2 || m_test < 2 {
        return Err(Error::domain("ripley generator needs at least 2 points per set"));
    }
    let mut rng_train = ChaCha8Rng::seed_from_u64(seed);
    rng_train.set_stream(0);
    let mut rng_test = ChaCha8Rng::seed_from_u64(seed);
    rng_test.set_stream(1);
    Ok((
        ripley_draw(m_train, &mut rng_train)?,
        ripley_draw(m_test, &mut rng_test)?,
    ))
}

fn ripley_draw(m: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let std = RIPLEY_VARIANCE.sqrt();
    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let class = i % 2;
        let component = usize::from(rng.gen_bool(0.5));
        let (cx, cy) = RIPLEY_CENTERS[class][component];
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        rows.push(vec![cx + std * zx, cy + std * zy]);
        labels.push(class);
    }
    Dataset::from_rows(rows, labels, vec!["N".to_string(), "P".to_string()])
}

/// Isotropic Gaussian clusters with deterministic centers.
///
/// Centers sit on scaled standard-basis points: class `c` is centered at
/// `(1 + c/n) * e_{c mod n}`, so separation is controlled entirely by
/// `spread` (the per-coordinate standard deviation).
pub fn gen_blobs(
    c_count: usize,
    m_per_class: usize,
    n: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if c_count < 2 {
        return Err(Error::domain("blobs need at least 2 classes"));
    }
    if n < 1 || m_per_class < 1 {
        return Err(Error::domain("blobs need n >= 1 and m_per_class >= 1"));
    }
    if !(spread > 0.0) {
        return Err(Error::domain("blob spread must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(c_count * m_per_class);
    let mut labels = Vec::with_capacity(c_count * m_per_class);
    for c in 0..c_count {
        let mut center = vec![0.0; n];
        center[c % n] = 1.0 + (c / n) as f64;
        for _ in 0..m_per_class {
            let row: Vec<f64> = center
                .iter()
                .map(|&mu| mu + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    let class_names = (0..c_count).map(|c| format!("c{c}")).collect();
    Dataset::from_rows(rows, labels, class_names)
}

// ---------------------------------------------------------------------------
// Fold splitting
// ---------------------------------------------------------------------------

/// Partition example ids into `folds` disjoint cells of near-equal size
/// (sizes differ by at most one), deterministically from `seed`. Ids within
/// each cell are sorted.
pub fn kfold_cells(m: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::domain("need at least 2 folds"));
    }
    if folds > m {
        return Err(Error::domain(format!(
            "cannot split {m} examples into {folds} folds"
        )));
    }
    let mut ids: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xF01D);
    // Fisher-Yates
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        ids.swap(i, j);
    }
    let base = m / folds;
    let extra = m % folds;
    let mut cells = Vec::with_capacity(folds);
    let mut cursor = 0usize;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut cell: Vec<usize> = ids[cursor..cursor + size].to_vec();
        cell.sort_unstable();
        cells.push(cell);
        cursor += size;
    }
    Ok(cells)
}

/// Standard k-fold pairs: for each cell, `(train, test)` where `test` is the
/// cell and `train` is its complement. Every id appears in exactly one test
/// fold, and train and test together cover all ids.
pub fn split_kfold(
    dataset: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let cells = kfold_cells(dataset.len(), folds, seed)?;
    let m = dataset.len();
    Ok(cells
        .into_iter()
        .map(|test| {
            let mut in_test = vec![false; m];
            for &id in &test {
                in_test[id] = true;
            }
            let train: Vec<usize> = (0..m).filter(|&i| !in_test[i]).collect();
            (train, test)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn class_vector_binary_and_multiclass() {
        let v = encode_class_vector(0, 2).unwrap();
        assert_eq!(v.entries(), &[1.0, -1.0]);

        let v = encode_class_vector(1, 4).unwrap();
        assert_eq!(v.entry(1), 1.0);
        for c in [0, 2, 3] {
            assert_abs_diff_eq!(v.entry(c), -1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(v.entries().iter().sum::<f64>(), 0.0, epsilon = 1e-12);

        let v = encode_class_vector(2, 8).unwrap();
        assert_eq!(v.entry(2), 1.0);
        for c in (0..8).filter(|&c| c != 2) {
            assert_abs_diff_eq!(v.entry(c), -1.0 / 7.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(v.entries().iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn class_vector_rejects_bad_inputs() {
        assert!(encode_class_vector(2, 2).is_err());
        assert!(encode_class_vector(0, 1).is_err());
    }

    #[test]
    fn class_vector_injective_over_labels() {
        let all: Vec<_> = (0..5).map(|l| encode_class_vector(l, 5).unwrap()).collect();
        for a in 0..5 {
            for b in 0..5 {
                assert_eq!(all[a].entries() == all[b].entries(), a == b);
            }
        }
    }

    #[test]
    fn observation_rejects_non_finite() {
        assert!(Observation::new(vec![1.0, f64::NAN]).is_err());
        assert!(Observation::new(vec![f64::INFINITY]).is_err());
        assert!(Observation::new(vec![]).is_err());
    }

    #[test]
    fn csv_roundtrip_small() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        std::fs::write(&path, "x,y,label\n0.5,1.5,a\n1.0,2.0,b\n0.0,0.25,a\n").unwrap();
        let ds = load_csv(&path, "label").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.class_names(), &["a", "b"]);
        assert_eq!(ds.features(1), &[1.0, 2.0]);
        assert_eq!(ds.label(1), 1);
    }

    #[test]
    fn csv_rejects_nan_cell_naming_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.csv");
        std::fs::write(&path, "x,y,label\n0.5,NaN,a\n1.0,2.0,b\n").unwrap();
        let err = load_csv(&path, "label").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn csv_rejects_single_class_and_missing_label_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        std::fs::write(&path, "x,label\n1,a\n2,a\n").unwrap();
        assert!(matches!(load_csv(&path, "label"), Err(Error::Domain(_))));
        assert!(matches!(load_csv(&path, "target"), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_wide_descriptor_file() {
        // 512 feature columns, 8 labels.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.csv");
        let mut text = String::new();
        for d in 0..512 {
            text.push_str(&format!("g{d},"));
        }
        text.push_str("label\n");
        for row in 0..16 {
            for d in 0..512 {
                text.push_str(&format!("{}.5,", (row * 7 + d) % 10));
            }
            text.push_str(&format!("cat{}\n", row % 8));
        }
        std::fs::write(&path, text).unwrap();
        let ds = load_csv(&path, "label").unwrap();
        assert_eq!(ds.dim(), 512);
        assert_eq!(ds.class_count(), 8);
    }

    #[test]
    fn csv_export_reimports_identically() {
        let ds = gen_blobs(3, 5, 4, 0.2, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path, "label").unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.class_names(), ds.class_names());
        for i in 0..ds.len() {
            assert_eq!(back.features(i), ds.features(i), "row {i}");
            assert_eq!(back.label(i), ds.label(i));
        }
    }

    #[test]
    fn ripley_sizes_and_determinism() {
        let (train, test) = gen_ripley(250, 1000, 7).unwrap();
        assert_eq!(train.len(), 250);
        assert_eq!(test.len(), 1000);
        assert_eq!(train.dim(), 2);
        assert_eq!(train.class_count(), 2);

        let (train2, test2) = gen_ripley(250, 1000, 7).unwrap();
        for i in 0..train.len() {
            assert_eq!(train.features(i), train2.features(i));
            assert_eq!(train.label(i), train2.label(i));
        }
        assert_eq!(test.features(999), test2.features(999));

        let (train3, _) = gen_ripley(250, 1000, 8).unwrap();
        assert_ne!(train.features(0), train3.features(0));
    }

    #[test]
    fn ripley_classes_balanced() {
        let (train, _) = gen_ripley(251, 100, 3).unwrap();
        let c0 = (0..train.len()).filter(|&i| train.label(i) == 0).count();
        let c1 = train.len() - c0;
        assert!(c0.abs_diff(c1) <= 1);
    }

    #[test]
    fn blobs_shape_and_separable_case() {
        let ds = gen_blobs(8, 100, 16, 0.3, 5).unwrap();
        assert_eq!(ds.len(), 800);
        assert_eq!(ds.class_count(), 8);
        assert_eq!(ds.dim(), 16);

        // Well-separated clusters: every point's nearest other point is in
        // its own class.
        let tight = gen_blobs(2, 10, 2, 0.01, 1).unwrap();
        for i in 0..tight.len() {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..tight.len() {
                if j == i {
                    continue;
                }
                let d: f64 = tight
                    .features(i)
                    .iter()
                    .zip(tight.features(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            assert_eq!(tight.label(best.1), tight.label(i));
        }
    }

    #[test]
    fn kfold_sizes_and_coverage() {
        let cells = kfold_cells(6, 3, 1).unwrap();
        assert_eq!(cells.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 2]);
        let mut all: Vec<usize> = cells.concat();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());

        let cells = kfold_cells(7, 3, 1).unwrap();
        let mut sizes: Vec<usize> = cells.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);

        let cells = kfold_cells(2688, 3, 42).unwrap();
        assert!(cells.iter().all(|c| c.len() == 896));

        assert!(kfold_cells(4, 5, 1).is_err());
    }

    #[test]
    fn split_pairs_cover_everything() {
        let ds = gen_blobs(2, 6, 2, 0.1, 2).unwrap();
        let pairs = split_kfold(&ds, 3, 11).unwrap();
        let mut seen_in_test = vec![0usize; ds.len()];
        for (train, test) in &pairs {
            let mut union: Vec<usize> = train.iter().chain(test).copied().collect();
            union.sort_unstable();
            assert_eq!(union, (0..ds.len()).collect::<Vec<_>>());
            for &id in test {
                seen_in_test[id] += 1;
            }
        }
        assert!(seen_in_test.iter().all(|&c| c == 1));
    }

    #[test]
    fn normalize_minmax_bounds() {
        let ds = gen_blobs(2, 20, 3, 0.5, 4).unwrap().normalize_minmax();
        for i in 0..ds.len() {
            for &v in ds.features(i) {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn content_hash_tracks_content() {
        let a = gen_blobs(2, 5, 2, 0.1, 1).unwrap();
        let b = gen_blobs(2, 5, 2, 0.1, 1).unwrap();
        let c = gen_blobs(2, 5, 2, 0.1, 2).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
    }

    proptest! {
        #[test]
        fn prop_class_vectors_sum_to_zero(label in 0usize..12, extra in 0usize..12) {
            let c_count = label + 2 + extra;
            let v = encode_class_vector(label, c_count).unwrap();
            prop_assert!(v.entries().iter().sum::<f64>().abs() <= 1e-12);
        }

        #[test]
        fn prop_kfold_is_partition(m in 2usize..200, folds in 2usize..8, seed in 0u64..50) {
            prop_assume!(folds <= m);
            let cells = kfold_cells(m, folds, seed).unwrap();
            let mut all: Vec<usize> = cells.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
            let sizes: Vec<usize> = cells.iter().map(Vec::len).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            // Determinism.
            prop_assert_eq!(cells, kfold_cells(m, folds, seed).unwrap());
        }
    }
}
