//! Dataset loading: CSV text/label tables and fastText `__label__K` files.
//!
//! Ingest is the only place samples are validated. A row that fails
//! (unknown label, label outside the space, empty text) is recorded as a
//! [`Rejection`] with its line number; strict loaders turn the first
//! rejection into an error, while [`scan`] returns all of them for
//! diagnostics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DomainTag, LabelSpace, Polarity, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Fasttext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub text: String,
    pub label: String,
}

/// What a raw label maps to: a polarity, or dropped from evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelTarget {
    Positive,
    Negative,
    Neutral,
    Excluded,
}

impl LabelTarget {
    pub fn polarity(self) -> Option<Polarity> {
        match self {
            LabelTarget::Positive => Some(Polarity::Positive),
            LabelTarget::Negative => Some(Polarity::Negative),
            LabelTarget::Neutral => Some(Polarity::Neutral),
            LabelTarget::Excluded => None,
        }
    }
}

impl From<Option<Polarity>> for LabelTarget {
    fn from(p: Option<Polarity>) -> Self {
        match p {
            Some(Polarity::Positive) => LabelTarget::Positive,
            Some(Polarity::Negative) => LabelTarget::Negative,
            Some(Polarity::Neutral) => LabelTarget::Neutral,
            None => LabelTarget::Excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub format: DatasetFormat,
    pub path: PathBuf,
    pub domain: DomainTag,
    pub label_space: LabelSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_map: Option<ColumnMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<BTreeMap<String, LabelTarget>>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::DatasetSpec(self.name.clone(), m.to_string()));
        if self.name.trim().is_empty() {
            return bad("name must be non-empty");
        }
        match self.format {
            DatasetFormat::Csv if self.column_map.is_none() => bad("csv datasets need column_map"),
            DatasetFormat::Fasttext if self.label_map.is_none() => {
                bad("fasttext datasets need label_map")
            }
            _ => Ok(()),
        }
    }
}

/// JSON file listing the datasets available to the CLI. Relative paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub datasets: Vec<DatasetSpec>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in &mut manifest.datasets {
            spec.validate()?;
            if spec.path.is_relative() {
                spec.path = base.join(&spec.path);
            }
        }
        Ok(manifest)
    }

    pub fn get(&self, name: &str) -> Result<&DatasetSpec> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| {
                let known: Vec<_> = self.datasets.iter().map(|d| d.name.as_str()).collect();
                Error::Config(format!(
                    "dataset {name:?} not in manifest (known: {})",
                    known.join(", ")
                ))
            })
    }
}

/// Maps a 1–5 star rating: 1–2 negative, 4–5 positive, 3 excluded.
pub fn map_stars(stars: i64) -> Result<Option<Polarity>> {
    match stars {
        1 | 2 => Ok(Some(Polarity::Negative)),
        3 => Ok(None),
        4 | 5 => Ok(Some(Polarity::Positive)),
        other => Err(Error::StarsOutOfRange(other)),
    }
}

/// `__label__1` … `__label__5` star tokens mapped through [`map_stars`].
pub fn star_label_map() -> BTreeMap<String, LabelTarget> {
    (1..=5)
        .map(|s| (format!("__label__{s}"), map_stars(s).unwrap().into()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub samples: Vec<Sample>,
    pub rejected: Vec<Rejection>,
    /// Rows dropped on purpose by an `excluded` label mapping.
    pub excluded: usize,
    /// Rows containing invalid UTF-8 that was replaced.
    pub invalid_utf8_rows: usize,
}

impl LoadReport {
    pub fn label_counts(&self) -> BTreeMap<Polarity, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.gold()).or_insert(0) += 1;
        }
        counts
    }

    fn into_samples(self, path: &Path) -> Result<Vec<Sample>> {
        if self.invalid_utf8_rows > 0 {
            log::warn!(
                "{}: replaced invalid UTF-8 in {} row(s)",
                path.display(),
                self.invalid_utf8_rows
            );
        }
        match self.rejected.into_iter().next() {
            Some(r) => Err(Error::Row {
                path: path.to_path_buf(),
                line: r.line,
                message: r.message,
            }),
            None => Ok(self.samples),
        }
    }
}

fn make_sample(
    spec: &DatasetSpec,
    line: usize,
    text: &str,
    gold: Polarity,
) -> std::result::Result<Sample, String> {
    Sample::new(
        format!("{}:{line}", spec.name),
        text,
        gold,
        spec.domain.clone(),
        spec.label_space,
    )
    .map_err(|e| e.to_string())
}

/// Reads a CSV dataset, collecting every row-level problem. Sample ids use
/// the 1-based data row number (the header is not counted).
pub fn scan_csv(spec: &DatasetSpec) -> Result<LoadReport> {
    spec.validate()?;
    let columns = spec.column_map.as_ref().expect("validated");
    let file = std::fs::File::open(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader.byte_headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| String::from_utf8_lossy(h).trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                path: spec.path.clone(),
                column: name.to_string(),
            })
    };
    let text_col = find(&columns.text)?;
    let label_col = find(&columns.label)?;

    let mut report = LoadReport::default();
    for (i, record) in reader.byte_records().enumerate() {
        let row = i + 1;
        let record = record?;
        let lossy = |col: usize| {
            let raw = record.get(col).unwrap_or_default();
            (
                String::from_utf8_lossy(raw).into_owned(),
                std::str::from_utf8(raw).is_err(),
            )
        };
        let (text, bad_text) = lossy(text_col);
        let (label, bad_label) = lossy(label_col);
        if bad_text || bad_label {
            report.invalid_utf8_rows += 1;
        }
        let gold = match label.parse::<Polarity>() {
            Ok(p) => p,
            Err(_) => {
                report.rejected.push(Rejection {
                    line: row,
                    message: format!("unknown label value {:?}", label.trim()),
                });
                continue;
            }
        };
        match make_sample(spec, row, &text, gold) {
            Ok(s) => report.samples.push(s),
            Err(message) => report.rejected.push(Rejection { line: row, message }),
        }
    }
    Ok(report)
}

/// Reads a fastText-format dataset: `__label__<token> <text>` per line.
/// Sample ids use the 1-based line number; blank lines are skipped.
pub fn scan_fasttext(spec: &DatasetSpec) -> Result<LoadReport> {
    spec.validate()?;
    let labels = spec.label_map.as_ref().expect("validated");
    let bytes = std::fs::read(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
    let mut report = LoadReport::default();
    for (i, raw) in bytes.split(|b| *b == b'\n').enumerate() {
        let line_no = i + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        if std::str::from_utf8(raw).is_err() {
            report.invalid_utf8_rows += 1;
        }
        let line = String::from_utf8_lossy(raw);
        let (token, text) = line.split_once(' ').unwrap_or((&line, ""));
        let reject = |message: String| Rejection {
            line: line_no,
            message,
        };
        if !token.starts_with("__label__") {
            report.rejected.push(reject(format!(
                "line does not start with a __label__ token: {token:?}"
            )));
            continue;
        }
        let gold = match labels.get(token).map(|t| t.polarity()) {
            Some(Some(p)) => p,
            Some(None) => {
                report.excluded += 1;
                continue;
            }
            None => {
                report
                    .rejected
                    .push(reject(format!("unmapped label token {token:?}")));
                continue;
            }
        };
        match make_sample(spec, line_no, text, gold) {
            Ok(s) => report.samples.push(s),
            Err(message) => report.rejected.push(reject(message)),
        }
    }
    Ok(report)
}

pub fn scan(spec: &DatasetSpec) -> Result<LoadReport> {
    match spec.format {
        DatasetFormat::Csv => scan_csv(spec),
        DatasetFormat::Fasttext => scan_fasttext(spec),
    }
}

pub fn load_csv(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    scan_csv(spec)?.into_samples(&spec.path)
}

pub fn load_fasttext(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    scan_fasttext(spec)?.into_samples(&spec.path)
}

/// Strict load: fails on the first rejected row.
pub fn load(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    scan(spec)?.into_samples(&spec.path)
}

/// Seeded pseudo-random subset of size `n`, kept in original order.
pub fn sample_subset(samples: &[Sample], n: usize, seed: u64) -> Result<Vec<Sample>> {
    if n > samples.len() {
        return Err(Error::SubsetTooLarge {
            requested: n,
            available: samples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, samples.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| samples[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_spec(path: &Path, space: LabelSpace) -> DatasetSpec {
        DatasetSpec {
            name: "movie".into(),
            format: DatasetFormat::Csv,
            path: path.to_path_buf(),
            domain: DomainTag::Movie,
            label_space: space,
            column_map: Some(ColumnMap {
                text: "review".into(),
                label: "sentiment".into(),
            }),
            label_map: None,
        }
    }

    fn ft_spec(path: &Path) -> DatasetSpec {
        DatasetSpec {
            name: "shopping".into(),
            format: DatasetFormat::Fasttext,
            path: path.to_path_buf(),
            domain: DomainTag::Shopping,
            label_space: LabelSpace::Binary,
            column_map: None,
            label_map: Some(
                [
                    ("__label__1".to_string(), LabelTarget::Negative),
                    ("__label__2".to_string(), LabelTarget::Positive),
                ]
                .into(),
            ),
        }
    }

    fn write(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    #[test]
    fn stars() {
        assert_eq!(map_stars(1).unwrap(), Some(Polarity::Negative));
        assert_eq!(map_stars(2).unwrap(), Some(Polarity::Negative));
        assert_eq!(map_stars(3).unwrap(), None);
        assert_eq!(map_stars(4).unwrap(), Some(Polarity::Positive));
        assert_eq!(map_stars(5).unwrap(), Some(Polarity::Positive));
        assert!(map_stars(0).is_err());
        assert!(map_stars(6).is_err());
        assert_eq!(star_label_map()["__label__3"], LabelTarget::Excluded);
    }

    #[test]
    fn csv_rows() {
        let f = write(b"id,review,sentiment\n1,great movie,positive\n2,\"bad, \"\"really\"\" bad\",Negative\n");
        let samples = load_csv(&csv_spec(f.path(), LabelSpace::Binary)).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].gold(), Polarity::Positive);
        assert_eq!(samples[0].id(), "movie:1");
        assert_eq!(samples[1].text(), "bad, \"really\" bad");
        assert_eq!(samples[1].gold(), Polarity::Negative);
    }

    #[test]
    fn csv_label_outside_space() {
        let f = write(b"review,sentiment\nfine,positive\nmeh,neutral\n");
        let err = load_csv(&csv_spec(f.path(), LabelSpace::Binary)).unwrap_err();
        assert!(matches!(err, Error::Row { line: 2, .. }), "{err}");
        let report = scan_csv(&csv_spec(f.path(), LabelSpace::Binary)).unwrap();
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.samples.len(), 1);
        assert!(load_csv(&csv_spec(f.path(), LabelSpace::Ternary)).is_ok());
    }

    #[test]
    fn csv_missing_column_and_empty_text() {
        let f = write(b"review,label\nfine,positive\n");
        assert!(matches!(
            load_csv(&csv_spec(f.path(), LabelSpace::Binary)),
            Err(Error::MissingColumn { .. })
        ));
        let f = write(b"review,sentiment\n  ,positive\n");
        assert!(matches!(
            load_csv(&csv_spec(f.path(), LabelSpace::Binary)),
            Err(Error::Row { line: 1, .. })
        ));
    }

    #[test]
    fn csv_invalid_utf8_is_replaced() {
        let f = write(b"review,sentiment\ngr\xffeat,positive\n");
        let report = scan_csv(&csv_spec(f.path(), LabelSpace::Binary)).unwrap();
        assert_eq!(report.invalid_utf8_rows, 1);
        assert_eq!(report.samples[0].text(), "gr\u{fffd}eat");
    }

    #[test]
    fn fasttext_lines() {
        let f = write(b"__label__2 Stuning even for the non-gamer: great\n__label__1 Batteries died fast.\r\n\n");
        let samples = load_fasttext(&ft_spec(f.path())).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].gold(), Polarity::Positive);
        assert_eq!(samples[0].text(), "Stuning even for the non-gamer: great");
        assert_eq!(samples[1].gold(), Polarity::Negative);
        assert_eq!(samples[1].text(), "Batteries died fast.");
        assert_eq!(samples[1].id(), "shopping:2");
    }

    #[test]
    fn fasttext_errors() {
        let f = write(b"__label__2 ok\n__label__9 text\n");
        let err = load_fasttext(&ft_spec(f.path())).unwrap_err();
        assert!(
            matches!(&err, Error::Row { line: 2, message, .. } if message.contains("__label__9"))
        );
        let f = write(b"__label__2\n");
        assert!(load_fasttext(&ft_spec(f.path())).is_err());
        let f = write(b"positive great\n");
        assert!(load_fasttext(&ft_spec(f.path())).is_err());
    }

    #[test]
    fn fasttext_star_tokens() {
        let f = write(b"__label__5 love\n__label__3 ok\n__label__1 hate\n");
        let mut spec = ft_spec(f.path());
        spec.label_map = Some(star_label_map());
        let report = scan_fasttext(&spec).unwrap();
        assert_eq!(report.samples.len(), 2);
        assert_eq!(report.excluded, 1);
        assert!(report.rejected.is_empty());
    }

    #[test]
    fn spec_requires_maps() {
        let mut spec = ft_spec(Path::new("x"));
        spec.label_map = None;
        assert!(spec.validate().is_err());
        let mut spec = csv_spec(Path::new("x"), LabelSpace::Binary);
        spec.column_map = None;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(
            &m,
            r#"{"datasets":[{"name":"fin","format":"csv","path":"fin.csv","domain":"finance",
            "label_space":"ternary","column_map":{"text":"Sentence","label":"Sentiment"}}]}"#,
        )
        .unwrap();
        let manifest = Manifest::load(&m).unwrap();
        let spec = manifest.get("fin").unwrap();
        assert_eq!(spec.path, dir.path().join("fin.csv"));
        assert_eq!(spec.domain, DomainTag::Finance);
        assert!(manifest.get("nope").is_err());
    }

    fn numbered(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                Sample::new(
                    format!("d:{i}"),
                    "t",
                    Polarity::Positive,
                    DomainTag::Movie,
                    LabelSpace::Binary,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn subsets() {
        let all = numbered(10);
        assert_eq!(sample_subset(&all, 10, 7).unwrap(), all);
        let a = sample_subset(&all, 3, 1).unwrap();
        assert_eq!(a, sample_subset(&all, 3, 1).unwrap());
        assert_ne!(a, sample_subset(&all, 3, 2).unwrap());
        let ids: Vec<usize> = a.iter().map(|s| s.id()[2..].parse().unwrap()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(
            sample_subset(&all, 11, 0),
            Err(Error::SubsetTooLarge { .. })
        ));
    }
}
