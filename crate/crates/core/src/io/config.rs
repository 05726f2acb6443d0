//! TOML configuration with sections `[train]`, `[loss]`, `[saliency]` and
//! `[render]`. Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::RenderSettings;
use crate::scene::{LossWeights, SaliencyConfig};
use crate::train::TrainConfig;

/// A fully commented config listing every key at its default value.
pub const DEFAULT_CONFIG_TOML: &str = r#"[train]
iterations = 1000          # optimization steps
lr_confidence = 0.01       # Adam lr of the raw Beta parameters
lr_position = 0.05         # 2D only, pixels
lr_scale = 0.01            # 2D only, log scale
lr_rotation = 0.01         # 2D only, radians
lr_color = 0.01            # 2D only, SH coefficients
lr_opacity = 0.02          # 2D only, opacity logits
lr_decay = 1.0             # per-step lr multiplier; 1 = constant
seed = 42
snapshot_every = 10        # history row every N steps
cameras_per_step = 1       # confidence fitting: views per step

[loss]
lambda_sparse = 0.01       # weight of mean confidence
lambda_entropy = 0.001     # weight of mean negative Beta entropy
lambda_saliency = 0.01     # weight of the saliency ranking hinge
recon_ssim_mix = 0.2       # share of (1 - SSIM) in the reconstruction loss

[saliency]
pairs_per_step = 256
quantile = 0.25            # size of the top/bottom pools as a fraction of N
ema_decay = 0.9            # 0 disables smoothing

[render]
background = [0.0, 0.0, 0.0]
alpha_min = 0.00392156862745098   # 1/255
alpha_max = 0.999
transmittance_floor = 0.0001
cov_dilation = 0.3         # 3D only
"#;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    train: TrainConfig,
    loss: LossWeights,
    saliency: SaliencyConfig,
    render: RenderSettings,
}

/// Validated settings plus a digest identifying them.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    pub render: RenderSettings,
    /// Hex SHA-256 of the canonicalized (defaults filled in) settings.
    pub hash: String,
}

impl Default for Config {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl Config {
    /// Re-derive the hash after settings were changed in code.
    pub fn rehash(&mut self) {
        self.hash = digest(&self.file());
    }

    fn file(&self) -> ConfigFile {
        ConfigFile {
            train: self.train.clone(),
            loss: self.train.weights,
            saliency: self.train.saliency,
            render: self.render,
        }
    }
}

fn digest(file: &ConfigFile) -> String {
    let canonical = serde_json::to_string(file).expect("config serializes");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn key_of(err: &toml::de::Error) -> String {
    let msg = err.message();
    // serde names the offending field in backticks
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "<toml>".into()
}

pub fn parse_config(text: &str) -> Result<Config> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config { key: key_of(&e), message: e.to_string() })?;
    let mut train = file.train.clone();
    train.weights = file.loss;
    train.saliency = file.saliency;
    train.validate()?;
    file.render.validate()?;
    Ok(Config { train, render: file.render, hash: digest(&file) })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { key: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.render, RenderSettings::default());
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn documented_defaults_match() {
        let c = parse_config(DEFAULT_CONFIG_TOML).unwrap();
        assert_eq!(c, parse_config("").unwrap());
    }

    #[test]
    fn validation_names_the_key() {
        let err = parse_config("[loss]\nlambda_sparse = -1\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "loss.lambda_sparse"), "{err}");
        let err = parse_config("[train]\nbogus = 1\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "bogus"), "{err}");
        assert!(parse_config("[nope]\n").is_err());
        assert!(parse_config("[render]\nalpha_max = 2.0\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_content_based() {
        let a = parse_config("[train]\nseed = 7\n").unwrap();
        let b = parse_config("# comment\n[train]\nseed   = 7\n").unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, parse_config("").unwrap().hash);
        let mut c = parse_config("").unwrap();
        c.train.seed = 7;
        c.rehash();
        assert_eq!(c.hash, a.hash);
    }
}
