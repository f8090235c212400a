use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labelled nonnegative counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    labels: Vec<String>,
    counts: Vec<f64>,
    n: f64,
}

impl Histogram {
    pub fn new(labels: Vec<String>, counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::domain("a histogram needs at least one bin"));
        }
        if labels.len() != counts.len() {
            return Err(Error::domain(format!(
                "{} labels for {} counts",
                labels.len(),
                counts.len()
            )));
        }
        if let Some(bad) = counts.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::domain(format!(
                "counts must be finite and >= 0, got {bad}"
            )));
        }
        let n = counts.iter().sum();
        Ok(Self { labels, counts, n })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }
}

/// Read a `label,count` CSV.
pub fn load_histogram(path: impl AsRef<Path>) -> Result<Histogram> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let fail = |line: u64, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| fail(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != ["label", "count"] {
        return Err(fail(
            1,
            format!("expected header 'label,count', found '{}'", names.join(",")),
        ));
    }
    let mut labels = Vec::new();
    let mut counts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            fail(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let raw = record[1].trim();
        let count: f64 = raw
            .parse()
            .map_err(|_| fail(line, format!("count '{raw}' is not a number")))?;
        if !(count >= 0.0 && count.is_finite()) {
            return Err(fail(
                line,
                format!("count {raw} must be finite and nonnegative"),
            ));
        }
        labels.push(record[0].trim().to_string());
        counts.push(count);
    }
    if counts.is_empty() {
        return Err(fail(2, "no data rows after the header".to_string()));
    }
    Histogram::new(labels, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// 64 cells, 22 occupied, 70 records.
    Mildew,
    /// 64 cells, 63 occupied, 1841 records.
    Czech,
}

impl SynthKind {
    fn shape(self) -> (usize, usize, u32) {
        match self {
            SynthKind::Mildew => (64, 22, 70),
            SynthKind::Czech => (64, 63, 1841),
        }
    }
}

/// Multinomial counts over a random subset of 6-bit cells with flat
/// Dirichlet weights.
pub fn synth_dataset<R: Rng + ?Sized>(kind: SynthKind, rng: &mut R) -> Histogram {
    let (bins, occupied, n) = kind.shape();
    let mut support = index::sample(rng, bins, occupied).into_vec();
    support.sort_unstable();
    let weights: Vec<f64> = (0..occupied)
        .map(|_| {
            let w: f64 = rng.sample(Exp1);
            w.max(f64::MIN_POSITIVE)
        })
        .collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights");
    let mut counts = vec![0.0; bins];
    for _ in 0..n {
        counts[support[pick.sample(rng)]] += 1.0;
    }
    let width = bins.trailing_zeros() as usize;
    let labels = (0..bins).map(|i| format!("{i:0width$b}")).collect();
    Histogram::new(labels, counts).expect("valid synthetic counts")
}
