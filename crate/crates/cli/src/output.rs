use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical JSON of `(label, config)`, hex encoded.
pub fn config_hash<L: serde::Serialize, C: serde::Serialize>(label: L, config: &C) -> String {
    let doc: Value = serde_json::json!({ "kind": label, "config": config });
    // serde_json maps are sorted by key, so this rendering is canonical
    let bytes = serde_json::to_vec(&doc).expect("configs serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Opens `path` for writing and emits the provenance comment line.
pub fn csv_writer(path: &Path, hash: &str) -> io::Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# edmc {VERSION} config_sha256={hash}")?;
    Ok(w)
}
