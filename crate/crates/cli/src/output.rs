use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `%.12g`-style formatting.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    } else {
        let s = format!("{v:.11e}");
        let (mantissa, exponent) = s.split_once('e').expect("scientific format");
        format!("{}e{exponent}", trim(mantissa.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the rows as RFC-4180 CSV and returns the bytes written.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_sig(*v)))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    std::fs::write(path, &bytes)?;
    Ok(bytes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Value,
    pub tool_version: String,
    /// Output file name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; not covered by `checksum`.
    pub timestamp: u64,
    /// SHA-256 of the canonical text of every other field except `timestamp`.
    pub checksum: String,
}

impl RunManifest {
    pub fn new(command: &str, parameters: Value, outputs: BTreeMap<String, String>) -> Result<Self, CliError> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut m = Self {
            command: command.into(),
            parameters,
            tool_version: TOOL_VERSION.into(),
            outputs,
            timestamp,
            checksum: String::new(),
        };
        m.checksum = m.content_checksum()?;
        Ok(m)
    }

    pub fn content_checksum(&self) -> Result<String, CliError> {
        let mut v = serde_json::to_value(self)?;
        let obj = v.as_object_mut().expect("manifest is an object");
        obj.remove("timestamp");
        obj.remove("checksum");
        Ok(sha256_hex(canonical_text(&v)?.as_bytes()))
    }

    /// Key-sorted, pretty-printed JSON with a trailing newline.
    pub fn to_canonical(&self) -> Result<String, CliError> {
        canonical_text(&serde_json::to_value(self)?)
    }

    pub fn path_for(out: &Path) -> PathBuf {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = Self::path_for(out);
        std::fs::write(&path, self.to_canonical()?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn canonical_text(v: &Value) -> Result<String, CliError> {
    // serde_json's default map is ordered by key.
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}
