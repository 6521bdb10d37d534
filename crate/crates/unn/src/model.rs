//! The trained leveraged k-NN model and its textual serialization.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::neighbors::MetricSpec;

/// A prototype set with its learned leveraging coefficients.
///
/// `alpha[j][c]` weighs prototype `j`'s vote for class `c`. Filtering keeps
/// the coefficients of retained prototypes unchanged and only shrinks the
/// prototype set; `prototype_ids` preserves each prototype's id in the
/// original training set.
#[derive(Debug, Clone)]
pub struct LeveragedModel {
    prototypes: Dataset,
    prototype_ids: Vec<usize>,
    alpha: Vec<Vec<f64>>,
    k: usize,
    metric: MetricSpec,
    loss: LossKind,
    /// Per-class retained pools (indices into `prototypes`), set only by
    /// per-class filtering.
    class_pools: Option<Vec<Vec<usize>>>,
}

impl LeveragedModel {
    /// An untrained model over a full training set: all coefficients zero.
    pub fn zeroed(dataset: Dataset, k: usize, metric: MetricSpec, loss: LossKind) -> Self {
        let m = dataset.len();
        let c_count = dataset.class_count();
        LeveragedModel {
            prototype_ids: (0..m).collect(),
            alpha: vec![vec![0.0; c_count]; m],
            prototypes: dataset,
            k,
            metric,
            loss,
            class_pools: None,
        }
    }

    pub(crate) fn from_parts(
        prototypes: Dataset,
        prototype_ids: Vec<usize>,
        alpha: Vec<Vec<f64>>,
        k: usize,
        metric: MetricSpec,
        loss: LossKind,
        class_pools: Option<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        if prototype_ids.len() != prototypes.len() || alpha.len() != prototypes.len() {
            return Err(Error::domain(
                "prototype ids, coefficients, and prototypes must have equal length",
            ));
        }
        let c_count = prototypes.class_count();
        for row in &alpha {
            if row.len() != c_count {
                return Err(Error::domain("coefficient row width must equal class count"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("coefficients must be finite"));
            }
        }
        Ok(LeveragedModel {
            prototypes,
            prototype_ids,
            alpha,
            k,
            metric,
            loss,
            class_pools,
        })
    }

    pub fn prototypes(&self) -> &Dataset {
        &self.prototypes
    }

    /// Original training-set ids of the retained prototypes.
    pub fn prototype_ids(&self) -> &[usize] {
        &self.prototype_ids
    }

    pub fn alpha(&self, j: usize, c: usize) -> f64 {
        self.alpha[j][c]
    }

    pub fn alpha_row(&self, j: usize) -> &[f64] {
        &self.alpha[j]
    }

    /// Overwrite one coefficient; mainly for building synthetic models.
    pub fn set_alpha(&mut self, j: usize, c: usize, value: f64) {
        self.alpha[j][c] = value;
    }

    /// Squared Euclidean norm of prototype `j`'s coefficient row.
    pub fn alpha_norm_sq(&self, j: usize) -> f64 {
        self.alpha[j].iter().map(|a| a * a).sum()
    }

    /// L1 norm of class `c`'s coefficient column.
    pub fn alpha_col_norm1(&self, c: usize) -> f64 {
        self.alpha.iter().map(|row| row[c].abs()).sum()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> MetricSpec {
        self.metric
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn class_count(&self) -> usize {
        self.prototypes.class_count()
    }

    pub fn class_pools(&self) -> Option<&[Vec<usize>]> {
        self.class_pools.as_deref()
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &str = "unn-model v1";

/// Render the model in its versioned textual format. Floats are written in
/// shortest round-trip form, so save/load/save is byte-stable.
pub fn model_to_string(model: &LeveragedModel) -> String {
    let ds = model.prototypes();
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC}");
    let _ = writeln!(out, "loss {}", model.loss().name());
    let _ = writeln!(out, "metric {}", model.metric().name());
    let _ = writeln!(out, "k {}", model.k());
    let _ = writeln!(out, "n {}", ds.dim());
    let _ = writeln!(out, "classes {}", ds.class_count());
    for name in ds.class_names() {
        let _ = writeln!(out, "class {name}");
    }
    match model.class_pools() {
        None => {
            let _ = writeln!(out, "pools none");
        }
        Some(pools) => {
            let _ = writeln!(out, "pools per-class");
            for (c, pool) in pools.iter().enumerate() {
                let _ = write!(out, "pool {c}:");
                for &j in pool {
                    let _ = write!(out, " {j}");
                }
                out.push('\n');
            }
        }
    }
    let _ = writeln!(out, "m {}", ds.len());
    for j in 0..ds.len() {
        let _ = write!(out, "proto {} {}", model.prototype_ids()[j], ds.label(j));
        for c in 0..ds.class_count() {
            let _ = write!(out, " {}", model.alpha(j, c));
        }
        for &v in ds.features(j) {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

pub fn save_model(model: &LeveragedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LeveragedModel> {
    let text = std::fs::read_to_string(path.as_ref())?;
    model_from_str(&text)
}

pub fn model_from_str(text: &str) -> Result<LeveragedModel> {
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or("");
    if magic != MODEL_MAGIC {
        return Err(Error::VersionMismatch {
            expected: MODEL_MAGIC.to_string(),
            found: magic.to_string(),
        });
    }
    let loss = LossKind::parse(field(lines.next(), "loss")?)?;
    let metric = MetricSpec::parse(field(lines.next(), "metric")?)?;
    let k: usize = parse_field(field(lines.next(), "k")?)?;
    let n: usize = parse_field(field(lines.next(), "n")?)?;
    let c_count: usize = parse_field(field(lines.next(), "classes")?)?;
    let mut class_names = Vec::with_capacity(c_count);
    for _ in 0..c_count {
        class_names.push(field(lines.next(), "class")?.to_string());
    }
    let pools_mode = field(lines.next(), "pools")?;
    let class_pools = match pools_mode {
        "none" => None,
        "per-class" => {
            let mut pools = Vec::with_capacity(c_count);
            for c in 0..c_count {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::domain("model file truncated in pools"))?;
                let tail = line
                    .strip_prefix(&format!("pool {c}:"))
                    .ok_or_else(|| Error::domain(format!("bad pool line '{line}'")))?;
                let pool: Vec<usize> = tail
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|_| Error::domain(format!("bad pool index '{t}'")))
                    })
                    .collect::<Result<_>>()?;
                pools.push(pool);
            }
            Some(pools)
        }
        other => return Err(Error::domain(format!("bad pools mode '{other}'"))),
    };
    let m: usize = parse_field(field(lines.next(), "m")?)?;

    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    let mut ids = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| Error::domain("model file truncated in prototypes"))?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some("proto") {
            return Err(Error::domain(format!("bad prototype line '{line}'")));
        }
        let id: usize = parse_tok(toks.next(), line)?;
        let label: usize = parse_tok(toks.next(), line)?;
        let mut row_alpha = Vec::with_capacity(c_count);
        for _ in 0..c_count {
            row_alpha.push(parse_tok::<f64>(toks.next(), line)?);
        }
        let mut feats = Vec::with_capacity(n);
        for _ in 0..n {
            feats.push(parse_tok::<f64>(toks.next(), line)?);
        }
        if toks.next().is_some() {
            return Err(Error::domain(format!(
                "trailing tokens on prototype line '{line}'"
            )));
        }
        ids.push(id);
        labels.push(label);
        alpha.push(row_alpha);
        rows.push(feats);
    }
    if lines.next() != Some("end") {
        return Err(Error::domain("model file missing end marker"));
    }
    let prototypes = Dataset::from_rows(rows, labels, class_names)?;
    LeveragedModel::from_parts(prototypes, ids, alpha, k, metric, loss, class_pools)
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::domain(format!("model file missing '{key}' line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::domain(format!("expected '{key} ...', found '{line}'")))
}

fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::domain(format!("bad numeric field '{s}'")))
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, line: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::domain(format!("short or malformed prototype line '{line}'")))
}
