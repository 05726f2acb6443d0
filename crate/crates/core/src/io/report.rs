//! Sweep CSV/JSON reports and training history CSV.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::SweepRow;
use crate::train::HistoryEntry;

/// Serde adapter writing infinite values as the strings `"inf"`/`"-inf"`.
pub mod inf_as_string {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    _ => Err(E::custom(format!("unexpected string '{v}'"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

fn fmt6(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

/// Sweep rows as CSV: `tau,kept,psnr_db,ssim,sqr,acs`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("tau,kept,psnr_db,ssim,sqr,acs\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt6(r.tau),
            r.kept,
            fmt6(r.psnr),
            fmt6(r.ssim),
            fmt6(r.sqr),
            fmt6(r.acs)
        );
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, sweep_csv(rows))?;
    Ok(())
}

/// Description of the scene a report was computed on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneMeta {
    pub path: String,
    pub n_splats: usize,
    pub sh_degree: u8,
    pub mode: String,
    pub n_views: usize,
}

/// JSON sweep report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scene: SceneMeta,
    pub config_hash: String,
    pub seed: u64,
    pub sqr_scale: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("report serialization: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Training history as CSV.
pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from("iteration,total,recon,sparse,entropy,saliency,active,mean_confidence\n");
    for h in history {
        let l = &h.loss;
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{},{:.9}",
            h.iteration, l.total, l.recon, l.sparse, l.entropy, l.saliency, h.active, h.mean_confidence
        );
    }
    out
}

pub fn write_history_csv(history: &[HistoryEntry], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, history_csv(history))?;
    Ok(())
}
