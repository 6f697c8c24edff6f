use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{DEFAULT_LOCAL_MU, DEFAULT_WEIGHT_EPSILON};
use crate::perturb::PerturbationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    Completeness,
    Continuity,
    Contrastivity,
    Complexity,
    Compactness,
    Performance,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 6] = [
        SuiteKind::Completeness,
        SuiteKind::Continuity,
        SuiteKind::Contrastivity,
        SuiteKind::Complexity,
        SuiteKind::Compactness,
        SuiteKind::Performance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Completeness => "completeness",
            SuiteKind::Continuity => "continuity",
            SuiteKind::Contrastivity => "contrastivity",
            SuiteKind::Complexity => "complexity",
            SuiteKind::Compactness => "compactness",
            SuiteKind::Performance => "performance",
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown suite `{s}`")))
    }
}

/// Where saliency maps come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaliencySource {
    /// Maps exported with the bundle (original and perturbed side).
    #[default]
    Ingested,
    /// Cubic upscaling of the prototype's similarity map to image size.
    Upscale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub suites: Vec<SuiteKind>,
    pub perturbation: PerturbationConfig,
    /// Most activated prototypes evaluated per sample.
    pub top_k: usize,
    /// Weight magnitude treated as non-zero by the compactness metrics.
    pub epsilon: f64,
    /// Normalized-score threshold of the local size.
    pub mu: f64,
    /// Worker threads; `None` defers to the caller (CLI: environment, then 1).
    pub parallelism: Option<usize>,
    pub seed: u64,
    pub saliency: SaliencySource,
    pub entropy_bins: usize,
    /// `k` of the top-k accuracy (single-label only).
    pub accuracy_top_k: usize,
    /// Logit threshold of multi-label predictions.
    pub multilabel_threshold: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            suites: SuiteKind::ALL.to_vec(),
            perturbation: PerturbationConfig::default(),
            top_k: 5,
            epsilon: DEFAULT_WEIGHT_EPSILON,
            mu: DEFAULT_LOCAL_MU,
            parallelism: None,
            seed: 0,
            saliency: SaliencySource::Ingested,
            entropy_bins: 10,
            accuracy_top_k: 3,
            multilabel_threshold: 0.0,
        }
    }
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("invalid suite config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.perturbation.validate()?;
        if self.top_k == 0 {
            return Err(Error::Validation("top_k must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Validation(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::Validation(format!("mu {} outside [0, 1)", self.mu)));
        }
        if self.parallelism == Some(0) {
            return Err(Error::Validation("parallelism must be at least 1".into()));
        }
        if self.entropy_bins == 0 || self.accuracy_top_k == 0 {
            return Err(Error::Validation(
                "entropy_bins and accuracy_top_k must be positive".into(),
            ));
        }
        if !self.multilabel_threshold.is_finite() {
            return Err(Error::Validation(
                "multilabel_threshold must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn wants(&self, suite: SuiteKind) -> bool {
        self.suites.contains(&suite)
    }

    /// SHA-256 of the canonical JSON of every result-affecting setting
    /// (parallelism excluded, since it cannot change results).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.parallelism = None;
        canonical.suites.sort();
        canonical.suites.dedup();
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg = SuiteConfig::from_json(r#"{"seed": 7, "suites": ["compactness"]}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.suites, vec![SuiteKind::Compactness]);
        assert_eq!(cfg.top_k, 5);
        assert_eq!(cfg.perturbation, PerturbationConfig::default());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(SuiteConfig::from_json(r#"{"seeds": 1}"#).is_err());
        assert!(SuiteConfig::from_json(r#"{"top_k": 0}"#).is_err());
        assert!(SuiteConfig::from_json(r#"{"suites": ["speed"]}"#).is_err());
    }

    #[test]
    fn hash_ignores_parallelism_only() {
        let a = SuiteConfig::default();
        let b = SuiteConfig {
            parallelism: Some(8),
            ..SuiteConfig::default()
        };
        let c = SuiteConfig {
            seed: 1,
            ..SuiteConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn suite_names_round_trip() {
        for s in SuiteKind::ALL {
            assert_eq!(s.name().parse::<SuiteKind>().unwrap(), s);
        }
        assert!(matches!("all".parse::<SuiteKind>(), Err(Error::Usage(_))));
    }
}
