use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn to_hex(digest: &[u8]) -> String {
    let mut hex = String::with_capacity(digest.len() * 2);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

pub fn hash_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(to_hex(&hasher.finalize()))
}

/// The freshness condition a stamped stage checks: the hashes of its inputs
/// plus the configuration hash and tool version. Matching header and intact
/// outputs mean the stage has nothing to do.
pub struct Expectation {
    header: String,
}

pub fn expectation(inputs: &[PathBuf], config_hash: &str) -> io::Result<Expectation> {
    let mut header = format!("tool retrocorpus {TOOL_VERSION}\nconfig {config_hash}\n");
    for input in inputs {
        let _ = writeln!(header, "input {} {}", input.display(), hash_file(input)?);
    }
    Ok(Expectation { header })
}

pub fn is_current(stamp: &Path, expected: &Expectation, outputs: &[PathBuf]) -> bool {
    let Ok(recorded) = fs::read_to_string(stamp) else {
        return false;
    };
    let Some(output_section) = recorded.strip_prefix(expected.header.as_str()) else {
        return false;
    };
    let mut recorded_outputs = Vec::new();
    for line in output_section.lines() {
        let Some(rest) = line.strip_prefix("output ") else {
            return false;
        };
        let Some((path, hash)) = rest.rsplit_once(' ') else {
            return false;
        };
        recorded_outputs.push((PathBuf::from(path), hash.to_string()));
    }
    if recorded_outputs.len() != outputs.len()
        || recorded_outputs.iter().zip(outputs).any(|((p, _), o)| p != o)
    {
        return false;
    }
    recorded_outputs
        .iter()
        .all(|(path, hash)| hash_file(path).is_ok_and(|actual| actual == *hash))
}

pub fn record(stamp: &Path, expected: &Expectation, outputs: &[PathBuf]) -> io::Result<()> {
    if let Some(dir) = stamp.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut content = expected.header.clone();
    for output in outputs {
        let _ = writeln!(content, "output {} {}", output.display(), hash_file(output)?);
    }
    fs::write(stamp, content)
}

/// Provenance sidecar: `<artifact>.meta` names the tool version, producing
/// stage, and configuration hash, so any artifact is traceable to its exact
/// settings without embedding headers in the data formats themselves.
pub fn write_meta(artifact: &Path, stage: &str, config_hash: &str) -> io::Result<()> {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta");
    let path = artifact.with_file_name(name);
    fs::write(
        path,
        format!("tool=retrocorpus {TOOL_VERSION}\nstage={stage}\nconfig={config_hash}\n"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamp_round_trip_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        let output = dir.path().join("out.txt");
        let stamp = dir.path().join(".stamps/demo.stamp");
        fs::write(&input, "one").unwrap();
        fs::write(&output, "result").unwrap();

        let expected = expectation(&[input.clone()], "cafe0123cafe0123").unwrap();
        assert!(!is_current(&stamp, &expected, &[output.clone()]));
        record(&stamp, &expected, &[output.clone()]).unwrap();
        assert!(is_current(&stamp, &expected, &[output.clone()]));

        fs::write(&output, "tampered").unwrap();
        assert!(!is_current(&stamp, &expected, &[output.clone()]));
        fs::write(&output, "result").unwrap();
        assert!(is_current(&stamp, &expected, &[output.clone()]));

        fs::write(&input, "two").unwrap();
        let changed = expectation(&[input], "cafe0123cafe0123").unwrap();
        assert!(!is_current(&stamp, &changed, &[output]));
    }

    #[test]
    fn meta_sidecar_contents() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = dir.path().join("mapping.tsv.gz");
        fs::write(&artifact, "x").unwrap();
        write_meta(&artifact, "fetch", "0011223344556677").unwrap();
        let meta = fs::read_to_string(dir.path().join("mapping.tsv.gz.meta")).unwrap();
        assert_eq!(
            meta,
            format!("tool=retrocorpus {TOOL_VERSION}\nstage=fetch\nconfig=0011223344556677\n")
        );
    }
}
