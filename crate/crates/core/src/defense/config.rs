use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::TransformKind;
use crate::error::{invalid, Error, Result};
use crate::kv;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DefenseMode {
    /// Undefended passthrough.
    None,
    /// Fixed-σ Gaussian noise on embeddings and projections.
    StaticNoise { sigma: f64 },
    #[default]
    Adage,
}

impl DefenseMode {
    pub fn is_none(self) -> bool {
        matches!(self, Self::None)
    }
}

impl fmt::Display for DefenseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::StaticNoise { sigma } => write!(f, "static_noise:{sigma}"),
            Self::Adage => f.write_str("adage"),
        }
    }
}

/// `none`, `adage`, or `static_noise:<σ>`.
impl FromStr for DefenseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "adage" => Ok(Self::Adage),
            _ => {
                let sigma = s
                    .strip_prefix("static_noise:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| invalid(format!("unknown defense mode `{s}`")))?;
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(invalid(format!("static noise σ must be ≥ 0, got {sigma}")));
                }
                Ok(Self::StaticNoise { sigma })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseConfig {
    pub mode: DefenseMode,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Same account and same query features give the same noise draw.
    pub deterministic_noise: bool,
    pub transform: TransformKind,
    /// Deployment seed from which account transform seeds are derived.
    pub seed: u64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            mode: DefenseMode::Adage,
            eta: 10.0,
            alpha: 1.0,
            beta: 0.9,
            lambda: 1e-6,
            deterministic_noise: false,
            transform: TransformKind::None,
            seed: 0,
        }
    }
}

impl DefenseConfig {
    pub const KEYS: [&'static str; 8] = [
        "mode",
        "eta",
        "alpha",
        "beta",
        "lambda",
        "deterministic_noise",
        "transform",
        "seed",
    ];

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!("η must be > 0, got {}", self.eta)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(invalid(format!(
                "λ must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.alpha > self.lambda && self.alpha.is_finite()) {
            return Err(invalid(format!("α must exceed λ, got α = {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid(format!("β must lie in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    /// Sets one field from its textual value. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| invalid(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "mode" => self.mode = value.parse()?,
            "eta" => self.eta = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "deterministic_noise" => self.deterministic_noise = num(key, value)?,
            "transform" => self.transform = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for e in kv::parse(text, path)? {
            cfg.set(&e.key, &e.value).map_err(|err| match err {
                Error::UnknownKey(_) => {
                    Error::parse(path, e.line, format!("unknown key `{}`", e.key))
                }
                other => Error::parse(path, e.line, other.to_string()),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn to_text(&self) -> String {
        format!(
            "mode={}\neta={}\nalpha={}\nbeta={}\nlambda={}\ndeterministic_noise={}\ntransform={}\nseed={}\n",
            self.mode,
            self.eta,
            self.alpha,
            self.beta,
            self.lambda,
            self.deterministic_noise,
            self.transform,
            self.seed
        )
    }
}
