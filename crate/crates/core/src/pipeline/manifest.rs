//! Dataset manifests: `image_path,patient_id,side,kl_grade` CSV files.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const NUM_GRADES: usize = 5;

/// Reference per-grade knee counts (grades 0 to 4) of the source cohort.
pub const KL_REFERENCE_COUNTS: [usize; NUM_GRADES] = [3253, 1495, 2175, 1086, 251];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l" | "left" => Ok(Side::Left),
            "r" | "right" => Ok(Side::Right),
            other => Err(format!("side `{other}` is not L/R")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sample {
    /// Resolved against the manifest's directory at load time.
    pub image_path: PathBuf,
    pub patient_id: String,
    pub side: Side,
    pub kl_grade: u8,
}

impl Sample {
    /// Stable identity of the knee, independent of file location.
    pub fn knee_key(&self) -> String {
        format!("{}/{}", self.patient_id, self.side)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ManifestOptions {
    /// Augmented manifests list several images per knee.
    pub allow_repeated_knees: bool,
}

const HEADER: [&str; 4] = ["image_path", "patient_id", "side", "kl_grade"];

pub fn load_manifest(path: &Path) -> Result<Vec<Sample>> {
    load_manifest_with(path, ManifestOptions::default())
}

pub fn load_manifest_with(path: &Path, opts: ManifestOptions) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base, opts)
}

/// Parses manifest text; relative image paths are joined onto `base`.
pub fn parse_manifest(text: &str, base: &Path, opts: ManifestOptions) -> Result<Vec<Sample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", HEADER.join(",")),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("");
        if field(0).is_empty() || field(1).is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty image_path or patient_id".into(),
            });
        }
        let side: Side = field(2)
            .parse()
            .map_err(|message| Error::Parse { line, message })?;
        let kl_grade = match field(3).parse::<u8>() {
            Ok(g) if (g as usize) < NUM_GRADES => g,
            _ => {
                return Err(Error::BadGrade {
                    line,
                    value: field(3).to_string(),
                })
            }
        };
        let sample = Sample {
            image_path: base.join(field(0)),
            patient_id: field(1).to_string(),
            side,
            kl_grade,
        };
        if !opts.allow_repeated_knees && !seen.insert((sample.patient_id.clone(), side)) {
            return Err(Error::DuplicateKnee {
                line,
                patient_id: sample.patient_id,
                side: side.to_string(),
            });
        }
        out.push(sample);
    }
    Ok(out)
}

/// Writes a manifest whose image paths are relative to its own directory
/// whenever possible.
pub fn write_manifest(path: &Path, samples: &[Sample]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(HEADER).map_err(csv_err)?;
    for s in samples {
        let rel = s.image_path.strip_prefix(base).unwrap_or(&s.image_path);
        let rel = rel.to_string_lossy().replace('\\', "/");
        w.write_record([
            rel.as_str(),
            &s.patient_id,
            s.side.as_str(),
            &s.kl_grade.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn grade_counts(samples: &[Sample]) -> [usize; NUM_GRADES] {
    let mut counts = [0; NUM_GRADES];
    samples
        .iter()
        .for_each(|s| counts[s.kl_grade as usize] += 1);
    counts
}

/// Checks that per-grade proportions are within `tolerance` (absolute) of
/// the reference cohort.
pub fn validate_distribution(counts: &[usize; NUM_GRADES], tolerance: f64) -> Result<()> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidParameter("manifest has no samples".into()));
    }
    let ref_total: usize = KL_REFERENCE_COUNTS.iter().sum();
    for (k, (&c, &r)) in counts.iter().zip(&KL_REFERENCE_COUNTS).enumerate() {
        let (p, q) = (c as f64 / total as f64, r as f64 / ref_total as f64);
        if (p - q).abs() > tolerance {
            return Err(Error::InvalidParameter(format!(
                "grade {k} proportion {p:.4} differs from reference {q:.4} by more than {tolerance}"
            )));
        }
    }
    Ok(())
}
