//! Batch generation and correction of answer sheets.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assess::{annotate, grade, read_answers, AnswerKey, Flag, GradeRecord};
use crate::codec::{encode_quiz, SpiralAlphabet};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::layout::{render_sheet, SheetLayout, StudentRecord};
use crate::rectify::{decode_identity, rectify, HIGH_RESIDUAL_PX};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const REVIEW_FILE: &str = "review.csv";
pub const ANNOTATED_DIR: &str = "annotated";

/// One roster line: the student and the quiz they receive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    #[serde(rename = "index")]
    pub student_index: u32,
    pub name: String,
    pub email: String,
    pub person_id: String,
    pub quiz_index: u32,
}

impl RosterEntry {
    pub fn record(&self) -> StudentRecord {
        StudentRecord {
            student_index: self.student_index,
            name: self.name.clone(),
            email: self.email.clone(),
            person_id: self.person_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Roster {
    entries: Vec<RosterEntry>,
}

impl Roster {
    pub fn new(entries: Vec<RosterEntry>) -> Result<Self> {
        let alphabet = SpiralAlphabet::default();
        let mut seen = HashSet::new();
        for e in &entries {
            if e.student_index >= alphabet.student_count() {
                return Err(Error::Roster(format!("student index {} out of range", e.student_index)));
            }
            if e.quiz_index >= alphabet.quiz_count() {
                return Err(Error::Roster(format!(
                    "student {} assigned quiz {} out of range",
                    e.student_index, e.quiz_index
                )));
            }
            if !seen.insert(e.student_index) {
                return Err(Error::Roster(format!("duplicate student index {}", e.student_index)));
            }
        }
        Ok(Roster { entries })
    }

    pub fn entries(&self) -> &[RosterEntry] {
        &self.entries
    }

    pub fn get(&self, student_index: u32) -> Option<&RosterEntry> {
        self.entries.iter().find(|e| e.student_index == student_index)
    }

    /// Reads `index,name,email,person_id,quiz_index` rows with a header.
    pub fn from_csv(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let entries = rdr.deserialize().collect::<std::result::Result<Vec<RosterEntry>, _>>()?;
        Roster::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Answer keys by quiz index. On disk: a JSON object mapping the quiz index
/// to its 20 alternatives (0 = A .. 3 = D).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerKeys {
    keys: BTreeMap<u32, AnswerKey>,
}

impl AnswerKeys {
    pub fn new(keys: impl IntoIterator<Item = AnswerKey>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for k in keys {
            k.validate()?;
            if map.insert(k.quiz_index, k).is_some() {
                return Err(Error::Domain("duplicate answer key".into()));
            }
        }
        Ok(AnswerKeys { keys: map })
    }

    pub fn get(&self, quiz_index: u32) -> Option<&AnswerKey> {
        self.keys.get(&quiz_index)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<u32, Vec<u8>> = serde_json::from_str(text)?;
        Self::new(raw.into_iter().map(|(quiz_index, correct)| AnswerKey { quiz_index, correct }))
    }

    pub fn to_json(&self) -> Result<String> {
        let raw: BTreeMap<u32, &Vec<u8>> = self.keys.iter().map(|(q, k)| (*q, &k.correct)).collect();
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub student_index: u32,
    pub quiz_index: u32,
}

pub fn sheet_file_name(student_index: u32) -> String {
    format!("sheet_{student_index:04}.png")
}

/// Renders one sheet per roster entry into `out_dir` and writes the
/// manifest. A [`Roster`] is validated on construction, so duplicate
/// students never reach this point.
pub fn generate_batch(layout: &SheetLayout, roster: &Roster, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    layout.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest = roster
        .entries()
        .par_iter()
        .map(|e| {
            let sheet = render_sheet(layout, &encode_quiz(e.quiz_index)?, &e.record())?;
            let file = sheet_file_name(e.student_index);
            sheet.save(out_dir.join(&file))?;
            Ok(ManifestEntry {
                file,
                student_index: e.student_index,
                quiz_index: e.quiz_index,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One graded sheet as written to the results file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRow {
    pub source: String,
    pub student_index: u32,
    pub name: String,
    pub email: String,
    pub person_id: String,
    pub quiz_index: u32,
    pub score: u32,
    /// One letter per question: C correct, X incorrect, B blank, M multiple.
    pub verdicts: String,
    /// Semicolon-separated flags.
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub source: String,
    pub reason: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchReport {
    pub rows: Vec<ResultRow>,
    pub records: Vec<GradeRecord>,
    pub review: Vec<ReviewEntry>,
}

/// Everything needed to correct a batch.
#[derive(Debug, Clone)]
pub struct CorrectionSetup {
    pub layout: SheetLayout,
    pub keys: AnswerKeys,
    pub roster: Roster,
    /// Write annotated PNGs next to the results.
    pub annotate: bool,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
}

fn is_scan(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "tif" | "tiff")
    )
}

/// Scan files in `dir`, sorted by file name.
pub fn list_scans(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_scan(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Grades one scan already in memory.
pub fn correct_sheet(
    scan: &GrayImage,
    source: &str,
    setup: &CorrectionSetup,
) -> Result<(ResultRow, GradeRecord, Option<crate::image::ColorImage>)> {
    let layout = &setup.layout;
    let sheet = rectify(scan, layout)?;
    let identity = decode_identity(&sheet, layout)?;
    let student = setup
        .roster
        .get(identity.student_index)
        .ok_or_else(|| Error::Roster(format!("student {} is not on the roster", identity.student_index)))?;
    let key = setup
        .keys
        .get(identity.quiz_index)
        .ok_or(Error::MissingKey(identity.quiz_index))?;
    let readings = read_answers(&sheet, layout)?;
    let mut record = grade(&readings, key, identity.student_index, identity.quiz_index)?;
    if identity.low_confidence() {
        record.flags.push(Flag::LowConfidence);
    }
    if sheet.residual > HIGH_RESIDUAL_PX {
        record.flags.push(Flag::HighResidual);
    }
    let annotated = if setup.annotate {
        Some(annotate(&sheet, layout, &record, key)?)
    } else {
        None
    };
    let row = ResultRow {
        source: source.to_string(),
        student_index: student.student_index,
        name: student.name.clone(),
        email: student.email.clone(),
        person_id: student.person_id.clone(),
        quiz_index: identity.quiz_index,
        score: record.score,
        verdicts: record.verdict_string(),
        flags: record.flags.iter().map(Flag::to_string).collect::<Vec<_>>().join(";"),
    };
    Ok((row, record, annotated))
}

/// Corrects every scan in `scan_dir`. Per-sheet failures go to the review
/// list and never stop the batch; output order follows file names.
pub fn correct_batch(scan_dir: &Path, setup: &CorrectionSetup, out_dir: &Path) -> Result<BatchReport> {
    setup.layout.validate()?;
    let files = list_scans(scan_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let annotated_dir = out_dir.join(ANNOTATED_DIR);
    if setup.annotate {
        fs::create_dir_all(&annotated_dir).map_err(|e| Error::io(&annotated_dir, e))?;
    }

    let process = |path: &PathBuf| -> std::result::Result<(ResultRow, GradeRecord), ReviewEntry> {
        let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let outcome = GrayImage::load(path)
            .and_then(|scan| correct_sheet(&scan, &source, setup))
            .and_then(|(row, record, annotated)| {
                if let Some(img) = annotated {
                    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    img.save(annotated_dir.join(format!("{stem}.png")))?;
                }
                Ok((row, record))
            });
        outcome.map_err(|e| ReviewEntry {
            source,
            reason: e.reason_code().to_string(),
            detail: e.to_string(),
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(setup.workers)
        .build()
        .map_err(|e| Error::Domain(format!("worker pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| files.par_iter().map(process).collect());

    let mut report = BatchReport::default();
    for o in outcomes {
        match o {
            Ok((row, record)) => {
                report.rows.push(row);
                report.records.push(record);
            }
            Err(r) => report.review.push(r),
        }
    }
    write_results(&out_dir.join(RESULTS_FILE), &report.rows)?;
    write_review(&out_dir.join(REVIEW_FILE), &report.review)?;
    Ok(report)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const RESULT_HEADER: [&str; 9] = [
    "source",
    "student_index",
    "name",
    "email",
    "person_id",
    "quiz_index",
    "score",
    "verdicts",
    "flags",
];

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_csv(path, rows, &RESULT_HEADER)
}

pub fn write_review(path: &Path, rows: &[ReviewEntry]) -> Result<()> {
    write_csv(path, rows, &["source", "reason", "detail"])
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

pub fn read_review(path: impl AsRef<Path>) -> Result<Vec<ReviewEntry>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<ReviewEntry>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(i: u32, q: u32) -> RosterEntry {
        RosterEntry {
            student_index: i,
            name: format!("Student {i}"),
            email: format!("s{i}@example.org"),
            person_id: format!("P{i}"),
            quiz_index: q,
        }
    }

    #[test]
    fn roster_rejects_duplicates_and_ranges() {
        assert!(Roster::new(vec![entry(1, 0), entry(1, 2)]).is_err());
        assert!(Roster::new(vec![entry(1296, 0)]).is_err());
        assert!(Roster::new(vec![entry(0, 125)]).is_err());
        assert!(Roster::new(vec![entry(0, 124), entry(1295, 0)]).is_ok());
    }

    #[test]
    fn roster_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = Roster::new(vec![entry(3, 1), RosterEntry { name: "Doe, Jane \"JD\"".into(), ..entry(4, 2) }]).unwrap();
        let p = dir.path().join("roster.csv");
        r.save(&p).unwrap();
        assert_eq!(Roster::load(&p).unwrap(), r);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("index,name,email,person_id,quiz_index"));
        assert!(text.contains("\"Doe, Jane \"\"JD\"\"\""));
    }

    #[test]
    fn keys_json_round_trip() {
        let keys = AnswerKeys::new([AnswerKey::new(7, vec![1; 20]).unwrap()]).unwrap();
        let back = AnswerKeys::from_json(&keys.to_json().unwrap()).unwrap();
        assert_eq!(back, keys);
        assert!(AnswerKeys::from_json("{\"1\": [0, 1]}").is_err());
    }

    #[test]
    fn results_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let row = ResultRow {
            source: "a.png".into(),
            student_index: 5,
            name: "O'Neil, Pat".into(),
            email: "p@example.org".into(),
            person_id: "1".into(),
            quiz_index: 9,
            score: 12,
            verdicts: "C".repeat(20),
            flags: "low_confidence;high_residual".into(),
        };
        let p = dir.path().join("r.csv");
        write_results(&p, std::slice::from_ref(&row)).unwrap();
        assert_eq!(read_results(&p).unwrap(), vec![row]);
        write_results(&p, &[]).unwrap();
        assert!(read_results(&p).unwrap().is_empty());
    }
}
