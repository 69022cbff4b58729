use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// A sample file: `# key: value` header lines followed by one decimal
/// observation per line.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub header: Vec<(String, String)>,
    pub observations: Vec<f64>,
}

impl SampleFile {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Writes the header and the observations. Values use the shortest
/// round-trip decimal form.
pub fn write_sample_file(path: &Path, file: &SampleFile) -> std::io::Result<()> {
    let mut out = String::with_capacity(file.observations.len() * 22 + 256);
    for (k, v) in &file.header {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    for x in &file.observations {
        out.push_str(&format!("{x}\n"));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    f.sync_all()
}

/// Parses a sample file. Blank lines are skipped; any other non-comment
/// line must be a finite number.
pub fn read_sample_file(path: &Path) -> Result<SampleFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidSample(format!("cannot read {}: {e}", path.display())))?;
    parse_sample(&text)
}

pub(crate) fn parse_sample(text: &str) -> Result<SampleFile> {
    let mut header = Vec::new();
    let mut observations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once(':') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => observations.push(v),
            _ => {
                return Err(Error::InvalidSample(format!(
                    "line {}: '{line}' is not a finite number",
                    idx + 1
                )))
            }
        }
    }
    if observations.is_empty() {
        return Err(Error::InvalidSample("file contains no observations".into()));
    }
    Ok(SampleFile { header, observations })
}
