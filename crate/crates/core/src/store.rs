//! Line-oriented persistence for rated sentence pairs, plus deterministic
//! mixing of generated datasets into a baseline.
//!
//! Dataset files are newline-delimited JSON with a fixed key order
//! (`reference, candidate, score, score_scale, language, origin, metadata`),
//! UTF-8 encoded, one record per line. Each line is written atomically so a
//! failed write leaves a valid prefix behind.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreScale {
    ZeroFour,
    Unit,
    /// A scale this toolkit does not know how to convert; mixing such
    /// records requires an explicit user mapping first.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Generated,
    Baseline,
    HumanEval,
}

/// One (reference, candidate, score) triple with provenance metadata; the
/// unit of everything the toolkit stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub reference: String,
    pub candidate: String,
    pub score: f64,
    pub score_scale: ScoreScale,
    pub language: String,
    pub origin: Origin,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl DatasetRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.reference.is_empty() || self.reference.contains('\n') {
            return Err("reference must be non-empty single-line text".into());
        }
        if self.candidate.is_empty() || self.candidate.contains('\n') {
            return Err("candidate must be non-empty single-line text".into());
        }
        if !self.score.is_finite() {
            return Err("score must be finite".into());
        }
        let range_ok = match self.score_scale {
            ScoreScale::ZeroFour => (0.0..=4.0).contains(&self.score),
            ScoreScale::Unit => (0.0..=1.0).contains(&self.score),
            ScoreScale::External => true,
        };
        if !range_ok {
            return Err(format!(
                "score {} out of range for scale {:?}",
                self.score, self.score_scale
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("write failed after {written} records: {source}")]
    Write { written: usize, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("record has external score scale; supply an explicit mapping before converting")]
    ExternalScale,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("mix spec must include at least one part")]
    EmptyMixSpec,
    #[error("mix spec output scale must be zero-four or unit")]
    BadOutputScale,
    #[error("{part}: record {index}: {source}")]
    MixRecord {
        part: PathBuf,
        index: usize,
        source: Box<StoreError>,
    },
}

fn io_err(path: &Path, source: io::Error) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Append records to `path` as newline-delimited JSON. Returns the number
/// written. On failure the error reports how many lines made it out; those
/// lines are complete records.
pub fn write_records<'a, I>(path: &Path, records: I) -> Result<usize, StoreError>
where
    I: IntoIterator<Item = &'a DatasetRecord>,
{
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let mut written = 0usize;
    for record in records {
        record.validate().map_err(StoreError::InvalidRecord)?;
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        out.write_all(line.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|source| StoreError::Write { written, source })?;
        written += 1;
    }
    Ok(written)
}

/// Stream records with their 1-based line numbers. Malformed lines come
/// through as `Err` so callers choose between fail-fast and
/// skip-with-warning.
pub fn stream_records(
    path: &Path,
) -> Result<impl Iterator<Item = Result<(usize, DatasetRecord), StoreError>>, StoreError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let path = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| {
            let line_no = i + 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(io_err(&path, e))),
            };
            if line.trim().is_empty() {
                return None;
            }
            let parsed: Result<DatasetRecord, _> = serde_json::from_str(&line);
            Some(match parsed {
                Ok(record) => match record.validate() {
                    Ok(()) => Ok((line_no, record)),
                    Err(message) => Err(StoreError::MalformedLine {
                        path: path.clone(),
                        line: line_no,
                        message,
                    }),
                },
                Err(e) => Err(StoreError::MalformedLine {
                    path: path.clone(),
                    line: line_no,
                    message: e.to_string(),
                }),
            })
        }))
}

/// Read a whole dataset, failing on the first malformed line.
pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>, StoreError> {
    stream_records(path)?
        .map(|item| item.map(|(_, r)| r))
        .collect()
}

/// Read a dataset, skipping malformed lines and reporting them as warnings.
pub fn read_records_lenient(path: &Path) -> Result<(Vec<DatasetRecord>, Vec<String>), StoreError> {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for item in stream_records(path)? {
        match item {
            Ok((_, r)) => records.push(r),
            Err(e @ StoreError::MalformedLine { .. }) => warnings.push(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    Ok((records, warnings))
}

/// Convert a record between the zero-four and unit scales. Same-scale
/// conversion is the identity; external scales are refused.
pub fn normalize_score(
    record: &DatasetRecord,
    target: ScoreScale,
) -> Result<DatasetRecord, StoreError> {
    let score = match (record.score_scale, target) {
        (ScoreScale::External, _) | (_, ScoreScale::External) => {
            return Err(StoreError::ExternalScale)
        }
        (from, to) if from == to => record.score,
        (ScoreScale::ZeroFour, ScoreScale::Unit) => record.score / 4.0,
        (ScoreScale::Unit, ScoreScale::ZeroFour) => record.score * 4.0,
        _ => unreachable!(),
    };
    let mut out = record.clone();
    out.score = score;
    out.score_scale = target;
    Ok(out)
}

/// Tab-separated adapter for externally sourced data: one
/// `reference<TAB>candidate<TAB>score` triple per line.
pub fn read_tsv_records(
    path: &Path,
    language: &str,
    score_scale: ScoreScale,
    origin: Origin,
) -> Result<Vec<DatasetRecord>, StoreError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| StoreError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let mut fields = line.split('\t');
        let (reference, candidate, score) = match (fields.next(), fields.next(), fields.next()) {
            (Some(r), Some(c), Some(s)) => (r, c, s),
            _ => return Err(malformed("expected 3 tab-separated fields".into())),
        };
        if fields.next().is_some() {
            return Err(malformed("expected exactly 3 tab-separated fields".into()));
        }
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|e| malformed(format!("bad score: {e}")))?;
        let record = DatasetRecord {
            reference: reference.to_string(),
            candidate: candidate.to_string(),
            score,
            score_scale,
            language: language.to_string(),
            origin,
            metadata: BTreeMap::new(),
        };
        record
            .validate()
            .map_err(|message| malformed(message))?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartFormat {
    #[default]
    Ndjson,
    Tsv,
}

/// One input dataset in a mix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixPart {
    pub path: PathBuf,
    pub language: String,
    #[serde(default = "default_true")]
    pub include: bool,
    #[serde(default)]
    pub format: PartFormat,
    /// Scale of the scores in this part; required for TSV parts, which
    /// carry no per-record scale. NDJSON parts declare scale per record
    /// and ignore this field.
    #[serde(default)]
    pub score_scale: Option<ScoreScale>,
}

fn default_true() -> bool {
    true
}

/// Composition of one training mix: which parts go in, the shuffle seed,
/// and the scale every score is normalized to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixSpec {
    pub parts: Vec<MixPart>,
    pub shuffle_seed: u64,
    pub output_score_scale: ScoreScale,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestPart {
    pub path: PathBuf,
    pub language: String,
    pub count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixManifest {
    pub seed: u64,
    pub parts: Vec<ManifestPart>,
    pub total: usize,
    pub output_sha256: String,
}

pub fn sha256_hex_file(path: &Path) -> Result<String, StoreError> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Fisher-Yates with indices drawn from a ChaCha20 stream seeded by
/// `seed`. Written out by hand so the permutation for a given seed never
/// changes, whatever happens to library shuffle implementations.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Path of the manifest written next to a mix output: `x.jsonl` gets
/// `x.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

/// Concatenate the included parts, normalize every score to the output
/// scale, shuffle with the seeded generator, and write the result plus a
/// manifest. The same spec over the same inputs produces byte-identical
/// output.
pub fn mix_datasets(spec: &MixSpec, output: &Path) -> Result<MixManifest, StoreError> {
    if matches!(spec.output_score_scale, ScoreScale::External) {
        return Err(StoreError::BadOutputScale);
    }
    let included: Vec<&MixPart> = spec.parts.iter().filter(|p| p.include).collect();
    if included.is_empty() {
        return Err(StoreError::EmptyMixSpec);
    }

    let mut manifest_parts = Vec::new();
    let mut records = Vec::new();
    for part in &included {
        let part_records = match part.format {
            PartFormat::Ndjson => read_records(&part.path)?,
            PartFormat::Tsv => {
                let scale = part.score_scale.ok_or(StoreError::ExternalScale)?;
                read_tsv_records(&part.path, &part.language, scale, Origin::Baseline)?
            }
        };
        manifest_parts.push(ManifestPart {
            path: part.path.clone(),
            language: part.language.clone(),
            count: part_records.len(),
            sha256: sha256_hex_file(&part.path)?,
        });
        for (index, record) in part_records.iter().enumerate() {
            let normalized =
                normalize_score(record, spec.output_score_scale).map_err(|source| {
                    StoreError::MixRecord {
                        part: part.path.clone(),
                        index: index + 1,
                        source: Box::new(source),
                    }
                })?;
            records.push(normalized);
        }
    }

    seeded_shuffle(&mut records, spec.shuffle_seed);

    if output.exists() {
        std::fs::remove_file(output).map_err(|e| io_err(output, e))?;
    }
    let total = write_records(output, records.iter())?;

    let manifest = MixManifest {
        seed: spec.shuffle_seed,
        parts: manifest_parts,
        total,
        output_sha256: sha256_hex_file(output)?,
    };
    let manifest_file = manifest_path(output);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    std::fs::write(&manifest_file, json).map_err(|e| io_err(&manifest_file, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(reference: &str, score: f64) -> DatasetRecord {
        DatasetRecord {
            reference: reference.to_string(),
            candidate: "Candidate text.".to_string(),
            score,
            score_scale: ScoreScale::ZeroFour,
            language: "en".to_string(),
            origin: Origin::Generated,
            metadata: BTreeMap::from([("template_id".to_string(), "t1".to_string())]),
        }
    }

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let records = vec![record("One sentence here.", 3.5), record("Another one.", 0.0)];
        assert_eq!(write_records(&path, records.iter()).unwrap(), 2);
        assert_eq!(read_records(&path).unwrap(), records);
    }

    #[test]
    fn write_appends_and_empty_write_is_noop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        assert_eq!(write_records(&path, std::iter::empty()).unwrap(), 0);
        write_records(&path, [record("First.", 1.0)].iter()).unwrap();
        write_records(&path, [record("Second.", 2.0)].iter()).unwrap();
        assert_eq!(read_records(&path).unwrap().len(), 2);
    }

    #[test]
    fn fixed_key_order_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        write_records(&path, [record("Key order check.", 1.0)].iter()).unwrap();
        let line = std::fs::read_to_string(&path).unwrap();
        let keys: Vec<usize> = [
            "\"reference\"",
            "\"candidate\"",
            "\"score\"",
            "\"score_scale\"",
            "\"language\"",
            "\"origin\"",
            "\"metadata\"",
        ]
        .iter()
        .map(|k| line.find(k).unwrap())
        .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted, "keys out of order in {line}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let good = serde_json::to_string(&record("A valid record.", 2.0)).unwrap();
        let content = format!("{good}\n{good}\n{good}\n{good}\nnot json\n{good}\n");
        std::fs::write(&path, content).unwrap();
        let err = read_records(&path).unwrap_err();
        match err {
            StoreError::MalformedLine { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected error: {other}"),
        }
        let (records, warnings) = read_records_lenient(&path).unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("line 5"));
    }

    #[test]
    fn empty_file_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_records(&path).unwrap().is_empty());
    }

    #[test]
    fn normalize_endpoints_and_identity() {
        let r = record("Scale conversion test.", 4.0);
        let unit = normalize_score(&r, ScoreScale::Unit).unwrap();
        assert_eq!(unit.score, 1.0);
        assert_eq!(unit.score_scale, ScoreScale::Unit);

        let mut r29 = record("Scale conversion test.", 2.9);
        assert_eq!(normalize_score(&r29, ScoreScale::Unit).unwrap().score, 0.725);
        r29.score = 0.0;
        assert_eq!(normalize_score(&r29, ScoreScale::Unit).unwrap().score, 0.0);

        let same = normalize_score(&r, ScoreScale::ZeroFour).unwrap();
        assert_eq!(same, r);
    }

    #[test]
    fn normalize_rejects_external() {
        let mut r = record("External scale record.", 77.0);
        r.score_scale = ScoreScale::External;
        assert!(matches!(
            normalize_score(&r, ScoreScale::Unit),
            Err(StoreError::ExternalScale)
        ));
    }

    #[test]
    fn tsv_adapter_reads_triples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baseline.tsv");
        std::fs::write(&path, "Ref one.\tCand one.\t0.5\nRef two.\tCand two.\t1\n").unwrap();
        let records =
            read_tsv_records(&path, "en", ScoreScale::Unit, Origin::Baseline).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].reference, "Ref one.");
        assert_eq!(records[0].score, 0.5);
        assert_eq!(records[1].origin, Origin::Baseline);

        std::fs::write(&path, "only two\tfields\n").unwrap();
        assert!(matches!(
            read_tsv_records(&path, "en", ScoreScale::Unit, Origin::Baseline),
            Err(StoreError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn seeded_shuffle_is_deterministic_and_seed_sensitive() {
        let base: Vec<u32> = (0..100).collect();
        let mut a = base.clone();
        let mut b = base.clone();
        seeded_shuffle(&mut a, 7);
        seeded_shuffle(&mut b, 7);
        assert_eq!(a, b);
        let mut c = base.clone();
        seeded_shuffle(&mut c, 8);
        assert_ne!(a, c);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, base);
    }

    #[test]
    fn mix_concatenates_normalizes_and_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let baseline = dir.path().join("baseline.jsonl");
        let generated = dir.path().join("gen.jsonl");
        let mut b1 = record("Baseline record one.", 0.25);
        b1.score_scale = ScoreScale::Unit;
        b1.origin = Origin::Baseline;
        let mut b2 = b1.clone();
        b2.reference = "Baseline record two.".to_string();
        b2.score = 1.0;
        write_records(&baseline, [b1, b2].iter()).unwrap();
        write_records(&generated, [record("Generated record.", 2.0)].iter()).unwrap();

        let spec = MixSpec {
            parts: vec![
                MixPart {
                    path: baseline.clone(),
                    language: "all".into(),
                    include: true,
                    format: PartFormat::Ndjson,
                    score_scale: None,
                },
                MixPart {
                    path: generated.clone(),
                    language: "en".into(),
                    include: true,
                    format: PartFormat::Ndjson,
                    score_scale: None,
                },
            ],
            shuffle_seed: 7,
            output_score_scale: ScoreScale::Unit,
        };
        let out = dir.path().join("mixed.jsonl");
        let manifest = mix_datasets(&spec, &out).unwrap();
        assert_eq!(manifest.total, 3);
        assert_eq!(manifest.parts[0].count, 2);
        assert_eq!(manifest.parts[1].count, 1);
        assert_eq!(manifest.seed, 7);
        assert!(manifest_path(&out).exists());

        let mixed = read_records(&out).unwrap();
        assert_eq!(mixed.len(), 3);
        assert!(mixed.iter().all(|r| r.score_scale == ScoreScale::Unit));
        let gen = mixed.iter().find(|r| r.origin == Origin::Generated).unwrap();
        assert_eq!(gen.score, 0.5);

        // Re-running the same spec produces byte-identical output.
        let first_bytes = std::fs::read(&out).unwrap();
        let manifest2 = mix_datasets(&spec, &out).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), first_bytes);
        assert_eq!(manifest2.output_sha256, manifest.output_sha256);
    }

    #[test]
    fn mix_requires_an_included_part() {
        let spec = MixSpec {
            parts: vec![],
            shuffle_seed: 0,
            output_score_scale: ScoreScale::Unit,
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            mix_datasets(&spec, &dir.path().join("out.jsonl")),
            Err(StoreError::EmptyMixSpec)
        ));
    }

    #[test]
    fn record_validation_rejects_bad_shapes() {
        let mut r = record("ok", 1.0);
        r.reference = String::new();
        assert!(r.validate().is_err());
        let mut r = record("ok", 1.0);
        r.candidate = "two\nlines".into();
        assert!(r.validate().is_err());
        let mut r = record("ok", 5.0);
        r.score = 5.0;
        assert!(r.validate().is_err());
    }
}
