//! Artifact formatting: floats, CSV, hashes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.csv";
pub const SUMMARY: &str = "summary.json";

/// 17 significant digits, round-trip exact; non-finite values as
/// `inf`, `-inf`, `nan`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.16e}")
    }
}

/// RFC-4180 CSV built in memory.
pub struct Csv {
    w: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Csv { w }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.w.into_inner().expect("in-memory flush")
    }
}

pub fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files produced by a task, in write order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    /// A verification verdict was FAIL.
    pub failed: bool,
    /// Some workers did not finish.
    pub partial: bool,
    pub verdict: Option<String>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub stream_rule: String,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub wall_clock_secs: f64,
    /// SHA-256 of every output file, by name.
    pub files: BTreeMap<String, String>,
    pub status: String,
    pub partial: bool,
    pub verdict: Option<String>,
    pub error: Option<String>,
}

pub fn write_files(dir: &Path, art: &Artifacts) -> io::Result<BTreeMap<String, String>> {
    fs::create_dir_all(dir)?;
    let mut hashes = BTreeMap::new();
    for (name, bytes) in &art.files {
        fs::write(dir.join(name), bytes)?;
        hashes.insert(name.clone(), sha256_hex(bytes));
    }
    Ok(hashes)
}

pub fn write_manifest(dir: &Path, m: &Manifest) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST), json_bytes(m))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, String> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [1.0, 0.1, -2.5e-300, 1.0 / 3.0, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn csv_quotes_and_crlf() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(["x,y", "1"]);
        assert_eq!(String::from_utf8(c.into_bytes()).unwrap(), "a,b\r\n\"x,y\",1\r\n");
    }
}
