//! Dataset ingestion, genome files and CSV output.
//!
//! CIFAR archives are read in their binary distribution layout: CIFAR-10
//! records are one label byte plus 3072 pixel bytes, CIFAR-100 records carry
//! a coarse and a fine label byte before the pixels. Pixels are channel
//! planar (R, G, B), row-major, and scaled by 1/255.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::grn::{validate_genome, Genome, GrnConfig, Protein, ProteinKind, Violation};
use crate::grneat::EvolutionHistory;
use crate::neuromod::{BaseOptimizer, TelemetryRow, N_INPUTS};
use crate::nn::Tensor;

pub const IMAGE_BYTES: usize = 3 * 32 * 32;
pub const CIFAR10_RECORD: usize = IMAGE_BYTES + 1;
pub const CIFAR100_RECORD: usize = IMAGE_BYTES + 2;

pub const GENOME_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("line {line}: {message}")]
    Genome { line: usize, message: String },
    #[error("unsupported genome file version {0}")]
    Version(String),
    #[error("genome fails validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGenome(Vec<Violation>),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Write(#[from] io::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub label: u8,
    /// Present for CIFAR-100 only.
    pub coarse_label: Option<u8>,
    pub pixels: Vec<u8>,
}

fn check_length(bytes: &[u8], record: usize) -> Result<(), DataError> {
    if !bytes.len().is_multiple_of(record) {
        return Err(DataError::Format {
            offset: bytes.len() - bytes.len() % record,
            message: format!("length {} not multiple of {record}", bytes.len()),
        });
    }
    Ok(())
}

pub fn parse_cifar10(bytes: &[u8]) -> Result<Vec<ImageRecord>, DataError> {
    check_length(bytes, CIFAR10_RECORD)?;
    bytes
        .chunks_exact(CIFAR10_RECORD)
        .enumerate()
        .map(|(i, rec)| {
            if rec[0] > 9 {
                return Err(DataError::Format {
                    offset: i * CIFAR10_RECORD,
                    message: format!("label {} > 9", rec[0]),
                });
            }
            Ok(ImageRecord {
                label: rec[0],
                coarse_label: None,
                pixels: rec[1..].to_vec(),
            })
        })
        .collect()
}

pub fn parse_cifar100(bytes: &[u8]) -> Result<Vec<ImageRecord>, DataError> {
    check_length(bytes, CIFAR100_RECORD)?;
    bytes
        .chunks_exact(CIFAR100_RECORD)
        .enumerate()
        .map(|(i, rec)| {
            let offset = i * CIFAR100_RECORD;
            if rec[0] > 19 {
                return Err(DataError::Format {
                    offset,
                    message: format!("coarse label {} > 19", rec[0]),
                });
            }
            if rec[1] > 99 {
                return Err(DataError::Format {
                    offset: offset + 1,
                    message: format!("fine label {} > 99", rec[1]),
                });
            }
            Ok(ImageRecord {
                label: rec[1],
                coarse_label: Some(rec[0]),
                pixels: rec[2..].to_vec(),
            })
        })
        .collect()
}

/// Inputs scaled to `[0, 1]` with one label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample input shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn from_records(records: &[ImageRecord], n_classes: usize) -> Dataset {
        let mut data = Vec::with_capacity(records.len() * IMAGE_BYTES);
        for r in records {
            data.extend(r.pixels.iter().map(|&b| f64::from(b) / 255.0));
        }
        Dataset {
            inputs: Tensor::new(vec![records.len(), 3, 32, 32], data).expect("record sizes"),
            labels: records.iter().map(|r| usize::from(r.label)).collect(),
            n_classes,
        }
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Dataset {
            inputs: self.inputs.gather_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(io_err(path))
}

/// `(train, test)` from the five training batches and the test batch.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset), DataError> {
    let mut train = Vec::new();
    for i in 1..=5 {
        train.extend(parse_cifar10(&read(&dir.join(format!("data_batch_{i}.bin")))?)?);
    }
    let test = parse_cifar10(&read(&dir.join("test_batch.bin"))?)?;
    Ok((Dataset::from_records(&train, 10), Dataset::from_records(&test, 10)))
}

/// `(train, test)` with fine labels.
pub fn load_cifar100(dir: &Path) -> Result<(Dataset, Dataset), DataError> {
    let train = parse_cifar100(&read(&dir.join("train.bin"))?)?;
    let test = parse_cifar100(&read(&dir.join("test.bin"))?)?;
    Ok((Dataset::from_records(&train, 100), Dataset::from_records(&test, 100)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Blobs,
    Spirals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub n_classes: usize,
    /// Standard deviation of the Gaussian jitter.
    pub noise: f64,
    pub seed: u64,
}

/// Two-dimensional points in the unit square. Class `k` gets samples
/// `i` with `i % n_classes == k`, so counts are balanced within one.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset, DataError> {
    if spec.n_classes == 0 || spec.n < spec.n_classes {
        return Err(DataError::Dataset(format!(
            "need n >= n_classes >= 1, got n = {}, classes = {}",
            spec.n, spec.n_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.n_classes as f64;
    let mut samples: Vec<([f64; 2], usize)> = (0..spec.n)
        .map(|i| {
            let class = i % spec.n_classes;
            let base = std::f64::consts::TAU * class as f64 / k;
            let jitter = |rng: &mut ChaCha8Rng| -> f64 {
                let z: f64 = StandardNormal.sample(rng);
                spec.noise * z
            };
            let (x, y) = match spec.kind {
                SynthKind::Blobs => (0.5 + 0.35 * base.cos(), 0.5 + 0.35 * base.sin()),
                SynthKind::Spirals => {
                    let t: f64 = rng.random();
                    let r = 0.05 + 0.4 * t;
                    let theta = base + 3.0 * std::f64::consts::PI * t;
                    (0.5 + r * theta.cos(), 0.5 + r * theta.sin())
                }
            };
            let p = [
                (x + jitter(&mut rng)).clamp(0.0, 1.0),
                (y + jitter(&mut rng)).clamp(0.0, 1.0),
            ];
            (p, class)
        })
        .collect();
    samples.shuffle(&mut rng);
    let data = samples.iter().flat_map(|(p, _)| p.iter().copied()).collect();
    Ok(Dataset {
        inputs: Tensor::new(vec![spec.n, 2], data).expect("two features per sample"),
        labels: samples.iter().map(|s| s.1).collect(),
        n_classes: spec.n_classes,
    })
}

/// A genome together with the optimizer it was evolved for.
#[derive(Debug, Clone, PartialEq)]
pub struct GenomeFile {
    pub base: BaseOptimizer,
    pub genome: Genome,
}

/// 17 significant digits, enough for an exact `f64` round trip.
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_genome<W: Write>(mut w: W, file: &GenomeFile) -> io::Result<()> {
    writeln!(w, "version {GENOME_FORMAT_VERSION}")?;
    writeln!(w, "base {}", file.base)?;
    writeln!(w, "beta {}", real(file.genome.beta))?;
    writeln!(w, "delta {}", real(file.genome.delta))?;
    for p in file.genome.proteins() {
        writeln!(w, "{} {} {} {}", p.kind, real(p.id), real(p.enh), real(p.inh))?;
    }
    Ok(())
}

pub fn save_genome(path: &Path, file: &GenomeFile) -> Result<(), DataError> {
    let mut buf = Vec::new();
    write_genome(&mut buf, file)?;
    fs::write(path, buf).map_err(io_err(path))
}

pub fn parse_genome(text: &str, config: &GrnConfig) -> Result<GenomeFile, DataError> {
    let mut version = None;
    let mut base = None;
    let mut beta = None;
    let mut delta = None;
    let mut proteins = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| DataError::Genome { line, message };
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}'")));
        match fields[0] {
            "version" if fields.len() == 2 => {
                if fields[1] != GENOME_FORMAT_VERSION.to_string() {
                    return Err(DataError::Version(fields[1].to_string()));
                }
                version = Some(());
            }
            _ if version.is_none() => return Err(err("file must start with a version line".into())),
            "base" if fields.len() == 2 => base = Some(fields[1].parse::<BaseOptimizer>().map_err(err)?),
            "beta" if fields.len() == 2 => beta = Some(num(fields[1])?),
            "delta" if fields.len() == 2 => delta = Some(num(fields[1])?),
            kind @ ("input" | "output" | "regulator") if fields.len() == 4 => {
                let kind = match kind {
                    "input" => ProteinKind::Input,
                    "output" => ProteinKind::Output,
                    _ => ProteinKind::Regulator,
                };
                if proteins.last().is_some_and(|p: &Protein| p.kind > kind) {
                    return Err(err("proteins must be ordered input, output, regulator".into()));
                }
                proteins.push(Protein::new(kind, num(fields[1])?, num(fields[2])?, num(fields[3])?));
            }
            _ => return Err(err(format!("malformed line '{content}'"))),
        }
    }
    let missing = |what: &str| DataError::Genome {
        line: 0,
        message: format!("missing {what}"),
    };
    if version.is_none() {
        return Err(missing("version"));
    }
    let genome = Genome::new(
        proteins,
        beta.ok_or_else(|| missing("beta"))?,
        delta.ok_or_else(|| missing("delta"))?,
    );
    let violations = validate_genome(&genome, config);
    if !violations.is_empty() {
        return Err(DataError::InvalidGenome(violations));
    }
    Ok(GenomeFile {
        base: base.ok_or_else(|| missing("base"))?,
        genome,
    })
}

pub fn load_genome(path: &Path, config: &GrnConfig) -> Result<GenomeFile, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_genome(&text, config)
}

/// Shortest round-trip decimal form; independent of locale.
fn num(x: f64) -> String {
    x.to_string()
}

pub fn telemetry_header(base: BaseOptimizer) -> Vec<String> {
    let mut h: Vec<String> = ["run_id", "iteration", "layer_index", "group"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..N_INPUTS).map(|i| format!("in{i}")));
    h.extend(base.output_names().iter().map(|s| s.to_string()));
    h
}

pub fn write_telemetry_csv<W: Write>(
    w: W,
    run_id: &str,
    base: BaseOptimizer,
    rows: &[TelemetryRow],
) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(telemetry_header(base))?;
    for r in rows {
        let mut rec = vec![
            run_id.to_string(),
            r.iteration.to_string(),
            r.key.layer_index.to_string(),
            r.key.group.short().to_string(),
        ];
        rec.extend(r.inputs.iter().map(|&v| num(v)));
        rec.extend(r.outputs.iter().map(|&v| num(v)));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

pub const HISTORY_HEADER: [&str; 7] = [
    "generation",
    "best_fitness",
    "mean_fitness",
    "best_ever",
    "species_count",
    "model",
    "seed",
];

pub fn write_history_csv<W: Write>(w: W, history: &EvolutionHistory) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HISTORY_HEADER)?;
    for r in &history.records {
        out.write_record([
            r.generation.to_string(),
            num(r.best_fitness),
            num(r.mean_fitness),
            num(r.best_ever),
            r.species_count.to_string(),
            r.context.clone(),
            r.seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One epoch of one method in a comparison run.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub epoch: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn write_compare_csv<W: Write>(w: W, rows: &[CompareRow]) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "epoch", "train_accuracy", "test_accuracy"])?;
    for r in rows {
        out.write_record([
            r.method.clone(),
            r.epoch.to_string(),
            num(r.train_accuracy),
            num(r.test_accuracy),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuromod::GroupKey;
    use crate::nn::GroupKind;

    fn cifar10_fixture() -> Vec<u8> {
        let mut b = vec![3u8];
        b.extend((0..IMAGE_BYTES).map(|i| (i % 256) as u8));
        b.push(9);
        b.extend(std::iter::repeat_n(255u8, IMAGE_BYTES));
        b
    }

    #[test]
    fn cifar10_fixture_parses() {
        let recs = parse_cifar10(&cifar10_fixture()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].label, 3);
        assert_eq!(recs[1].label, 9);
        let ds = Dataset::from_records(&recs, 10);
        assert_eq!(ds.inputs.shape(), &[2, 3, 32, 32]);
        assert!(ds.inputs.row(1).iter().all(|&v| v == 1.0));
        assert!(ds.inputs.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn cifar10_errors() {
        let err = parse_cifar10(&vec![0u8; 3074]).unwrap_err();
        assert!(err.to_string().contains("not multiple of 3073"), "{err}");
        let mut b = cifar10_fixture();
        b[CIFAR10_RECORD] = 10;
        assert!(matches!(parse_cifar10(&b), Err(DataError::Format { offset: 3073, .. })));
    }

    #[test]
    fn cifar100_fixture_parses() {
        let mut b = vec![19u8, 99];
        b.extend(std::iter::repeat_n(0u8, IMAGE_BYTES));
        b.extend([4u8, 42]);
        b.extend(std::iter::repeat_n(7u8, IMAGE_BYTES));
        let recs = parse_cifar100(&b).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[0].coarse_label, recs[0].label), (Some(19), 99));
        assert_eq!((recs[1].coarse_label, recs[1].label), (Some(4), 42));
        assert!(parse_cifar100(&b[..3075]).is_err());
        b[1] = 100;
        assert!(parse_cifar100(&b).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_balanced() {
        let spec = SynthSpec {
            kind: SynthKind::Blobs,
            n: 100,
            n_classes: 2,
            noise: 0.05,
            seed: 7,
        };
        let a = synth_dataset(&spec).unwrap();
        assert_eq!(a, synth_dataset(&spec).unwrap());
        assert_eq!(a.class_counts(), vec![50, 50]);
        let s = synth_dataset(&SynthSpec {
            kind: SynthKind::Spirals,
            n: 31,
            n_classes: 3,
            ..spec.clone()
        })
        .unwrap();
        let c = s.class_counts();
        assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
        assert!(s.inputs.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(synth_dataset(&SynthSpec { n: 1, ..spec }).is_err());
    }

    fn sample_genome() -> GenomeFile {
        let mut p = vec![Protein::new(ProteinKind::Input, 0.1, 1.0 / 3.0, 0.7)];
        p.push(Protein::new(ProteinKind::Output, 0.5, 0.2, 0.9));
        p.push(Protein::new(ProteinKind::Output, 0.0, 1.0, std::f64::consts::FRAC_1_PI));
        p.push(Protein::new(ProteinKind::Regulator, 0.8, 0.45, 0.05));
        GenomeFile {
            base: BaseOptimizer::Sgd,
            genome: Genome::new(p, 1.0 / 7.0, 1.9999999999999998),
        }
    }

    #[test]
    fn genome_round_trip_is_bitwise() {
        let g = sample_genome();
        let mut buf = Vec::new();
        write_genome(&mut buf, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = parse_genome(&text, &GrnConfig::default()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.genome.beta.to_bits(), g.genome.beta.to_bits());
        assert!(text.starts_with("version 1\nbase sgd\n"));
    }

    #[test]
    fn genome_load_errors() {
        let cfg = GrnConfig::default();
        let mut buf = Vec::new();
        write_genome(&mut buf, &sample_genome()).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let bad_tag = text.replace("regulator 8.0000000000000004e-1", "regulator 1.2");
        assert!(matches!(parse_genome(&bad_tag, &cfg), Err(DataError::InvalidGenome(_))));

        let bad_version = text.replace("version 1", "version 7");
        assert!(matches!(parse_genome(&bad_version, &cfg), Err(DataError::Version(_))));

        let bad_line = text.replace("delta", "gamma");
        assert!(matches!(parse_genome(&bad_line, &cfg), Err(DataError::Genome { line: 4, .. })));
    }

    #[test]
    fn csv_outputs() {
        let mut buf = Vec::new();
        write_telemetry_csv(&mut buf, "r", BaseOptimizer::Adam, &[]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1);
        assert!(s.trim_end().ends_with("in12,eta,beta1,beta2,epsilon"));

        let row = TelemetryRow {
            iteration: 3,
            key: GroupKey {
                layer_index: 1,
                group: GroupKind::Biases,
            },
            inputs: [0.5; N_INPUTS],
            outputs: vec![0.25, 0.125],
        };
        let mut buf = Vec::new();
        write_telemetry_csv(&mut buf, "r", BaseOptimizer::Sgd, &[row]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), format!("r,3,1,b,{}0.25,0.125", "0.5,".repeat(13)));
    }
}
