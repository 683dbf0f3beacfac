//! Experiment configuration: serde-backed, with flat `key=value` overrides
//! and a content hash for run metadata.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gauss::HaarConvention;
use crate::heads::HeadKind;
use crate::wigner::RepSpec;
use crate::{Error, Result};

/// Which generative setup is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Deterministic autoencoder; the encoder mean is the latent.
    Ae,
    /// Variational autoencoder with the rotation-valued posterior.
    Vae,
    /// Variational autoencoder with a Gaussian posterior on three ZYZ angles.
    VaeNormal3,
}

impl ModelKind {
    pub fn token(self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::Vae => "vae",
            ModelKind::VaeNormal3 => "vae-normal3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ae" => Ok(ModelKind::Ae),
            "vae" => Ok(ModelKind::Vae),
            "vae-normal3" => Ok(ModelKind::VaeNormal3),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed for training noise, minibatching and evaluation sampling.
    pub seed: u64,
    /// Seed of the fixed content vector behind the toy dataset.
    pub content_seed: u64,
    pub model: String,
    pub head: String,
    /// Representation degrees 0..=degrees, each with `multiplicity` copies.
    pub degrees: usize,
    pub multiplicity: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    /// Fraction of the run over which the KL weight ramps linearly 0 -> 1.
    pub kl_warmup: f64,
    pub hidden: usize,
    pub sigma_floor: f64,
    pub k_max: u32,
    /// Importance samples for the marginal-likelihood estimate.
    pub nll_samples: usize,
    /// Fresh posterior samples per example when estimating the ELBO.
    pub elbo_samples: usize,
    pub n_paths: usize,
    pub path_steps: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub haar: HaarConvention,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            content_seed: 7,
            model: "ae".into(),
            head: "s2s2".into(),
            degrees: 3,
            multiplicity: 3,
            n_train: 8192,
            n_eval: 512,
            batch_size: 64,
            steps: 4000,
            lr: 3e-3,
            kl_warmup: 0.3,
            hidden: 128,
            sigma_floor: 1e-4,
            k_max: 5,
            nll_samples: 500,
            elbo_samples: 16,
            n_paths: 100,
            path_steps: 100,
            gamma: 10.0,
            alpha: 90.0,
            haar: HaarConvention::Normalized,
        }
    }
}

impl ExperimentConfig {
    pub fn rep_spec(&self) -> Result<RepSpec> {
        RepSpec::degrees_up_to(self.degrees, self.multiplicity)
    }

    pub fn head_kind(&self) -> Result<HeadKind> {
        HeadKind::parse(&self.head)
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.model)
    }

    pub fn validate(&self) -> Result<()> {
        self.rep_spec()?;
        self.model_kind()?;
        if self.model_kind()? != ModelKind::VaeNormal3 {
            self.head_kind()?;
        }
        let positive = [
            ("n_train", self.n_train),
            ("n_eval", self.n_eval),
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("hidden", self.hidden),
            ("nll_samples", self.nll_samples),
            ("elbo_samples", self.elbo_samples),
            ("n_paths", self.n_paths),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.path_steps < 8 {
            return Err(Error::Config("path_steps must be at least 8".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.kl_warmup) {
            return Err(Error::Config("kl_warmup must be in [0, 1]".into()));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::Config("sigma_floor must be positive".into()));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if !(self.gamma > 0.0) || !(0.0..=100.0).contains(&self.alpha) {
            return Err(Error::Config("invalid continuity parameters".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies flat `key=value` overrides. Unknown keys and unparsable
    /// values are configuration errors.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        if sets.is_empty() {
            return Ok(());
        }
        let mut obj = match serde_json::to_value(&*self).expect("config serializes") {
            serde_json::Value::Object(o) => o,
            _ => unreachable!("config is a JSON object"),
        };
        for kv in sets {
            let (key, raw) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
            let slot = obj
                .get_mut(key)
                .ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))?;
            *slot = parse_override(slot, raw)
                .ok_or_else(|| Error::Config(format!("cannot parse '{raw}' for key '{key}'")))?;
        }
        let next: ExperimentConfig = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::Config(format!("override produced bad config: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex-truncated to 16 chars.
    pub fn hash(&self) -> String {
        let js = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(js.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Interprets an override string in the type of the existing value.
fn parse_override(current: &serde_json::Value, raw: &str) -> Option<serde_json::Value> {
    use serde_json::Value as J;
    match current {
        J::Number(n) if n.is_u64() => raw.parse::<u64>().ok().map(J::from),
        J::Number(_) => raw.parse::<f64>().ok().map(|x| {
            serde_json::Number::from_f64(x).map(J::Number).unwrap_or(J::Null)
        }),
        J::String(_) => Some(J::String(raw.to_string())),
        J::Bool(_) => raw.parse::<bool>().ok().map(J::Bool),
        _ => None,
    }
}
