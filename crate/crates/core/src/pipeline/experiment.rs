use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use super::data::{load_histogram, synth_dataset, Histogram, SynthKind};
use crate::analysis::{
    kl_divergence, l1_distance, write_curve_csv, TailCurvePoint, KL_PSEUDOCOUNT,
};
use crate::calibration::PrivacyParams;
use crate::error::{Error, Result};
use crate::mechanisms::{MechanismKind, MechanismSpec, PostOp, Sanitizer};
use crate::numerics::RngStream;
use crate::sensitivity::SensitivityProfile;

pub const REPORT_VERSION: u32 = 1;

/// Stream id reserved for dataset synthesis; cells use their index.
const DATASET_STREAM: u64 = u64::MAX;
/// Substream of a cell stream used for calibration; repeats use their index.
const CALIBRATION_SUBSTREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    Synthetic(SynthKind),
    File(PathBuf),
}

impl DatasetSource {
    pub fn descriptor(&self) -> String {
        match self {
            DatasetSource::Synthetic(SynthKind::Mildew) => "synthetic-mildew".into(),
            DatasetSource::Synthetic(SynthKind::Czech) => "synthetic-czech".into(),
            DatasetSource::File(p) => p.display().to_string(),
        }
    }

    pub fn resolve(&self, seed: u64) -> Result<Histogram> {
        match self {
            DatasetSource::Synthetic(kind) => Ok(synth_dataset(
                *kind,
                &mut RngStream::new(seed, DATASET_STREAM),
            )),
            DatasetSource::File(path) => load_histogram(path),
        }
    }
}

impl From<&str> for DatasetSource {
    fn from(s: &str) -> Self {
        match s {
            "synthetic-mildew" => DatasetSource::Synthetic(SynthKind::Mildew),
            "synthetic-czech" => DatasetSource::Synthetic(SynthKind::Czech),
            path => DatasetSource::File(PathBuf::from(path)),
        }
    }
}

impl Serialize for DatasetSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.descriptor())
    }
}

impl<'de> Deserialize<'de> for DatasetSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(DatasetSource::from(s.as_str()))
    }
}

/// A mechanism in the experiment menu: a bare kind name, or `{"kind", "p"}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MechanismEntry {
    pub kind: MechanismKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
}

impl<'de> Deserialize<'de> for MechanismEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Full {
            kind: MechanismKind,
            #[serde(default)]
            p: Option<u32>,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(MechanismKind),
            Full(Full),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Name(kind) => MechanismEntry { kind, p: None },
            Raw::Full(f) => MechanismEntry {
                kind: f.kind,
                p: f.p,
            },
        })
    }
}

impl From<MechanismKind> for MechanismEntry {
    fn from(kind: MechanismKind) -> Self {
        Self { kind, p: None }
    }
}

fn default_mechanisms() -> Vec<MechanismEntry> {
    vec![
        MechanismKind::Laplace.into(),
        MechanismKind::GaussPdp.into(),
        MechanismKind::GaussAdp.into(),
        MechanismEntry {
            kind: MechanismKind::GgPdp,
            p: Some(3),
        },
    ]
}

fn default_epsilons() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_deltas() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.25]
}

fn default_repeats() -> usize {
    500
}

fn default_postprocess() -> Vec<PostOp> {
    vec![PostOp::Clamp, PostOp::Normalize]
}

/// Experiment description.
///
/// Pure ε-DP kinds run once per ε with δ = 0; the others run over `deltas`.
/// Post-processing clamps to `[0, n]`, normalizes to `n` and optionally
/// rounds, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<MechanismEntry>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub seed: u64,
    #[serde(default = "default_postprocess")]
    pub postprocess: Vec<PostOp>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource, seed: u64) -> Self {
        Self {
            dataset,
            mechanisms: default_mechanisms(),
            epsilons: default_epsilons(),
            deltas: default_deltas(),
            repeats: default_repeats(),
            seed,
            postprocess: default_postprocess(),
        }
    }

    fn validate_postprocess(&self) -> Result<()> {
        let rank = |op: &PostOp| match op {
            PostOp::Clamp => 0,
            PostOp::Normalize => 1,
            PostOp::Round => 2,
        };
        if self.postprocess.first() != Some(&PostOp::Clamp) {
            return Err(Error::config(
                "postprocess must start with clamp so metrics see nonnegative counts",
            ));
        }
        if self
            .postprocess
            .windows(2)
            .any(|w| rank(&w[0]) >= rank(&w[1]))
        {
            return Err(Error::config(
                "postprocess steps must follow the order clamp, normalize, round without repeats",
            ));
        }
        Ok(())
    }

    /// Every (mechanism, ε, δ) combination, in report order.
    fn cells(&self, profile: &SensitivityProfile) -> Result<Vec<MechanismSpec>> {
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if self.mechanisms.is_empty() || self.epsilons.is_empty() {
            return Err(Error::config(
                "experiment needs at least one mechanism and one epsilon",
            ));
        }
        self.validate_postprocess()?;
        let mut cells = Vec::new();
        for m in &self.mechanisms {
            for &eps in &self.epsilons {
                let deltas: &[f64] = if m.kind.is_pure() {
                    &[0.0]
                } else {
                    &self.deltas
                };
                if deltas.is_empty() {
                    return Err(Error::config(format!(
                        "{} needs at least one delta",
                        m.kind
                    )));
                }
                for &delta in deltas {
                    let privacy = PrivacyParams::new(eps, delta).map_err(|e| {
                        Error::config(format!("{} at epsilon {eps}, delta {delta}: {e}", m.kind))
                    })?;
                    cells.push(MechanismSpec::new(m.kind, m.p, privacy, profile.clone())?);
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mechanism: MechanismKind,
    pub p: u32,
    pub epsilon: f64,
    pub delta: f64,
    /// `b`, or `σ` for the Gaussian kinds.
    pub scale: f64,
    pub mean_l1: f64,
    pub sd_l1: f64,
    pub mean_kl: f64,
    pub sd_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub repeats: usize,
    pub dataset: String,
    pub bins: usize,
    pub n: f64,
    pub postprocess: Vec<PostOp>,
    pub toolkit_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub metadata: ReportMetadata,
    pub cells: Vec<CellSummary>,
}

impl ExperimentReport {
    pub fn cell(&self, kind: MechanismKind, epsilon: f64, delta: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.mechanism == kind && c.epsilon == epsilon && c.delta == delta)
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn one_repeat(
    sanitizer: &Sanitizer,
    hist: &Histogram,
    ops: &[PostOp],
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let mut out = sanitizer.apply(hist.counts(), rng)?;
    for op in ops {
        out = match op {
            PostOp::Clamp => out.clamp(&[0.0], &[hist.n()])?,
            PostOp::Normalize => out.normalize(hist.n())?,
            PostOp::Round => out.round(),
        };
    }
    let l1 = l1_distance(&out.values, hist.counts())?;
    let kl = kl_divergence(hist.counts(), &out.values, KL_PSEUDOCOUNT)?;
    Ok((l1, kl))
}

/// Run every cell for `repeats` repetitions.
///
/// Repeat `i` of cell `c` draws from `RngStream::new(seed, c).substream(i)`,
/// and results are aggregated in index order, so the report does not depend
/// on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let hist = config.dataset.resolve(config.seed)?;
    if !(hist.n() > 0.0) {
        return Err(Error::config("dataset has no records"));
    }
    let profile = SensitivityProfile::histogram(hist.bins(), hist.n())?;
    let cells = config.cells(&profile)?;

    let mut summaries = Vec::with_capacity(cells.len());
    for (c, spec) in cells.into_iter().enumerate() {
        let cell_stream = RngStream::new(config.seed, c as u64);
        let sanitizer = Sanitizer::new(spec, &mut cell_stream.substream(CALIBRATION_SUBSTREAM))?;
        let metrics: Vec<(f64, f64)> = (0..config.repeats)
            .into_par_iter()
            .map(|i| {
                let mut rng = cell_stream.substream(i as u64);
                one_repeat(&sanitizer, &hist, &config.postprocess, &mut rng)
            })
            .collect::<Result<_>>()?;
        let l1: Vec<f64> = metrics.iter().map(|m| m.0).collect();
        let kl: Vec<f64> = metrics.iter().map(|m| m.1).collect();
        let (mean_l1, sd_l1) = mean_sd(&l1);
        let (mean_kl, sd_kl) = mean_sd(&kl);
        let spec = sanitizer.spec();
        summaries.push(CellSummary {
            mechanism: spec.kind(),
            p: spec.p(),
            epsilon: spec.privacy().epsilon,
            delta: spec.privacy().delta,
            scale: sanitizer.scale_used(),
            mean_l1,
            sd_l1,
            mean_kl,
            sd_kl,
        });
    }

    Ok(ExperimentReport {
        version: REPORT_VERSION,
        metadata: ReportMetadata {
            seed: config.seed,
            repeats: config.repeats,
            dataset: config.dataset.descriptor(),
            bins: hist.bins(),
            n: hist.n(),
            postprocess: config.postprocess.clone(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        cells: summaries,
    })
}

fn create(path: &Path, overwrite: bool) -> Result<BufWriter<std::fs::File>> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if overwrite {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let file = opts.open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            Error::config(format!(
                "{} already exists; pass the overwrite flag to replace it",
                path.display()
            ))
        } else {
            Error::io(path, e)
        }
    })?;
    Ok(BufWriter::new(file))
}

/// Write the report as pretty JSON. Refuses to replace an existing file
/// unless `overwrite` is set.
pub fn emit_report(
    report: &ExperimentReport,
    path: impl AsRef<Path>,
    overwrite: bool,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path, overwrite)?;
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Write a tail curve as CSV. Refuses to replace an existing file unless
/// `overwrite` is set.
pub fn emit_curve(
    points: &[TailCurvePoint],
    path: impl AsRef<Path>,
    overwrite: bool,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path, overwrite)?;
    write_curve_csv(points, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}
