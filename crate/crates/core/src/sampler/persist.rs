//! Line-delimited posterior files.
//!
//! Layout: a header line `{"format":"hemojoint-posterior","version":1}`,
//! one JSON object per retained iteration, and a footer `{"end":<count>}`.
//! A file without its footer was cut short and is rejected whole.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::GlobalParams;
use crate::trajectory::PatientEffects;

pub const POSTERIOR_FORMAT: &str = "hemojoint-posterior";
pub const EFFECTS_FORMAT: &str = "hemojoint-effects";
pub const FORMAT_VERSION: u32 = 1;

/// One retained iteration's population parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub iteration: u64,
    #[serde(flatten)]
    pub params: GlobalParams,
}

/// Every patient's latent effects at one retained iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsSample {
    pub iteration: u64,
    pub patients: BTreeMap<String, PatientEffects>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Footer {
    end: usize,
}

/// Run metadata written next to the posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub seed: u64,
    pub n_records: usize,
    pub config: String,
    pub acceptance: BTreeMap<String, f64>,
}

fn write_records<T: Serialize>(path: &Path, format: &str, records: &[T]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", to_json(&Header { format: format.into(), version: FORMAT_VERSION })?).map_err(io)?;
    for r in records {
        writeln!(w, "{}", to_json(r)?).map_err(io)?;
    }
    writeln!(w, "{}", to_json(&Footer { end: records.len() })?).map_err(io)?;
    w.flush().map_err(io)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Format(format!("serialization failed: {e}")))
}

fn read_records<T: DeserializeOwned>(path: &Path, format: &str) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display();
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{name}: empty file")))?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::Format(format!("{name}: bad header: {e}")))?;
    if header.format != format {
        return Err(Error::Format(format!("{name}: expected format {format}, found {}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{name}: unsupported version {} (expected {FORMAT_VERSION})",
            header.version
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Ok(f) = serde_json::from_str::<Footer>(&line) {
            if f.end != out.len() {
                return Err(Error::Format(format!(
                    "{name}: footer counts {} records but {} were read",
                    f.end,
                    out.len()
                )));
            }
            return Ok(out);
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{name}:{}: {e}", i + 2)))?;
        out.push(rec);
    }
    Err(Error::Format(format!("{name}: truncated (no end marker)")))
}

pub fn write_posterior(path: &Path, samples: &[PosteriorSample]) -> Result<()> {
    write_records(path, POSTERIOR_FORMAT, samples)
}

pub fn read_posterior(path: &Path) -> Result<Vec<PosteriorSample>> {
    read_records(path, POSTERIOR_FORMAT)
}

pub fn write_effects(path: &Path, samples: &[EffectsSample]) -> Result<()> {
    write_records(path, EFFECTS_FORMAT, samples)
}

pub fn read_effects(path: &Path) -> Result<Vec<EffectsSample>> {
    read_records(path, EFFECTS_FORMAT)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::model::ModelContext;

    fn samples() -> Vec<PosteriorSample> {
        let ctx = ModelContext::new(&ModelConfig { p: 3, b: 2, grid_size: 48, ..ModelConfig::default() }).unwrap();
        let mut g = GlobalParams::initial(&ctx);
        (0..4)
            .map(|i| {
                g.sigma2 = 0.1 + 1.0 / 3.0 * i as f64;
                g.psi[1][2] = std::f64::consts::PI * i as f64 - 1e-17;
                g.zeta[0] = -2.0 / 7.0;
                PosteriorSample { iteration: i, params: g.clone() }
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posterior.jsonl");
        let s = samples();
        write_posterior(&path, &s).unwrap();
        let back = read_posterior(&path).unwrap();
        assert_eq!(back, s);
        for (a, b) in back.iter().zip(&s) {
            assert_eq!(a.params.psi[1][2].to_bits(), b.params.psi[1][2].to_bits());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"sigma2\":"));
    }

    #[test]
    fn truncation_and_version_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        write_posterior(&path, &samples()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: Vec<&str> = text.lines().collect();
        std::fs::write(&path, cut[..cut.len() - 1].join("\n")).unwrap();
        assert!(matches!(read_posterior(&path), Err(Error::Format(_))));
        std::fs::write(&path, text.replace("\"version\":1", "\"version\":2")).unwrap();
        assert!(matches!(read_posterior(&path), Err(Error::Format(_))));
        std::fs::write(&path, text.replacen("{\"end\":4}", "{\"end\":5}", 1)).unwrap();
        assert!(matches!(read_posterior(&path), Err(Error::Format(_))));
    }
}
