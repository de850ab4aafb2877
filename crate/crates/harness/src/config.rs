//! Experiment configuration, read from a JSON document with sections
//! `model`, `initial`, `sim`, `ode`, `checks` and `output`.

use std::path::{Path, PathBuf};

use hostpar_core::models::ModelRegistry;
use hostpar_core::ode::OdeSettings;
use hostpar_core::rates::Envelopes;
use hostpar_core::{DensityVector, ModelSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub initial: InitialSpec,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub ode: OdeSettings,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub params: Value,
    /// Multiplies the declared envelopes; anything other than 1 misdeclares
    /// the model and is meant for fault injection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_scale: Option<EnvelopeScale>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeScale {
    pub a01: f64,
    pub a11: f64,
    pub b01: f64,
    pub b11: f64,
    pub d1: f64,
}

impl Default for EnvelopeScale {
    fn default() -> Self {
        Self {
            a01: 1.0,
            a11: 1.0,
            b01: 1.0,
            b11: 1.0,
            d1: 1.0,
        }
    }
}

impl EnvelopeScale {
    fn apply(&self, e: Envelopes) -> Envelopes {
        Envelopes {
            a01: e.a01.scaled(self.a01),
            a11: e.a11.scaled(self.a11),
            b01: e.b01.scaled(self.b01),
            b11: e.b11.scaled(self.b11),
            d1: e.d1.scaled(self.d1),
            ..e
        }
    }
}

/// Initial density `x₀` with `‖x₀‖₁ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Density { values: Vec<f64> },
    UnitMass { load: usize },
    /// Poisson law truncated at `max_load` and renormalized.
    Poisson { mean: f64, max_load: usize },
}

impl InitialSpec {
    pub fn density(&self) -> Result<DensityVector, HarnessError> {
        let values = match self {
            InitialSpec::Density { values } => values.clone(),
            InitialSpec::UnitMass { load } => DensityVector::unit_mass(*load).into_values(),
            InitialSpec::Poisson { mean, max_load } => {
                if !(*mean >= 0.0 && mean.is_finite()) {
                    return Err(HarnessError::Config(format!("bad Poisson mean {mean}")));
                }
                let mut p = Vec::with_capacity(max_load + 1);
                let mut term = (-mean).exp();
                for k in 0..=*max_load {
                    if k > 0 {
                        term *= mean / k as f64;
                    }
                    p.push(term);
                }
                let s: f64 = p.iter().sum();
                p.iter().map(|v| v / s).collect()
            }
        };
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(HarnessError::Config("initial density must be finite and >= 0".into()));
        }
        let mass: f64 = values.iter().sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(HarnessError::Config(format!("initial density has mass {mass}, not 1")));
        }
        Ok(DensityVector::from_values(values))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Population sizes, strictly increasing.
    pub n: Vec<u64>,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub event_cap: u64,
    /// Uniform subintervals for the sup-error evaluation grid.
    pub error_grid: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n: vec![100],
            horizon: 1.0,
            replicas: 100,
            seed: 0,
            event_cap: hostpar_core::ssa::DEFAULT_EVENT_CAP,
            error_grid: 200,
        }
    }
}

pub const ALL_CERTIFICATES: [&str; 12] = [
    "growth",
    "tail",
    "lipschitz",
    "semigroup_moment",
    "semigroup_l11",
    "mild_residual",
    "moment_bound",
    "concentration",
    "window",
    "sqrt_mass",
    "host_growth",
    "coupling",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    /// Acceptance band for the fitted log-log slope.
    pub slope_band: [f64; 2],
    /// Certificates to run; see [`ALL_CERTIFICATES`].
    pub suite: Vec<String>,
    pub lipschitz_pairs: usize,
    pub replicas: usize,
    pub coupled_replicas: usize,
    pub semigroup_truncation: usize,
    pub semigroup_times: Vec<f64>,
    pub mild_panels: usize,
    pub mild_tolerance: f64,
    pub concentration_k: f64,
    pub window_k: f64,
    pub window_a: f64,
    pub window_max_frequency: f64,
    pub battery: usize,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            slope_band: [-0.65, -0.35],
            suite: ALL_CERTIFICATES.iter().map(|s| s.to_string()).collect(),
            lipschitz_pairs: 200,
            replicas: 1000,
            coupled_replicas: 200,
            semigroup_truncation: 200,
            semigroup_times: vec![0.1, 1.0, 2.0],
            mild_panels: 64,
            mild_tolerance: 1e-5,
            concentration_k: 1.0,
            window_k: 1.0,
            window_a: 1.0,
            window_max_frequency: 0.01,
            battery: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Command-line overrides applied after loading.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), HarnessError> {
        if let Some(n) = o.n {
            self.sim.n = vec![n];
        }
        if let Some(s) = o.seed {
            self.sim.seed = s;
        }
        if let Some(r) = o.replicas {
            self.sim.replicas = r;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let s = &self.sim;
        if s.n.is_empty() || s.n.windows(2).any(|w| w[0] >= w[1]) || s.n[0] == 0 {
            return Err(HarnessError::Config(
                "sim.n must be a nonempty, strictly increasing list of positive sizes".into(),
            ));
        }
        if s.replicas == 0 {
            return Err(HarnessError::Config("sim.replicas must be >= 1".into()));
        }
        if !(s.horizon > 0.0 && s.horizon.is_finite()) {
            return Err(HarnessError::Config("sim.horizon must be > 0".into()));
        }
        let band = self.checks.slope_band;
        if !(band[0] < band[1]) {
            return Err(HarnessError::Config("checks.slope_band must be increasing".into()));
        }
        if let Some(bad) = self
            .checks
            .suite
            .iter()
            .find(|c| !ALL_CERTIFICATES.contains(&c.as_str()))
        {
            return Err(HarnessError::Config(format!("unknown certificate {bad:?}")));
        }
        self.initial.density()?;
        Ok(())
    }

    /// Builds the configured model through the registry, applying any
    /// envelope scaling.
    pub fn build_model(&self, registry: &ModelRegistry) -> Result<ModelSpec, HarnessError> {
        let m = registry.build(&self.model.name, &self.model.params)?;
        Ok(match &self.model.envelope_scale {
            Some(s) => m.with_envelopes(s.apply(m.envelopes())),
            None => m,
        })
    }

    /// SHA-256 of the canonical JSON form without the output section, as
    /// lowercase hex. Where results are written does not change them.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("output");
        }
        let bytes = serde_json::to_vec(&v).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"name": "pure_death", "params": {"mu": 1.0}},
        "initial": {"family": "unit_mass", "load": 1}
    }"#;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.sim.n, vec![100]);
        assert_eq!(c.checks.suite.len(), ALL_CERTIFICATES.len());
        assert_eq!(c.ode, OdeSettings::default());
    }

    #[test]
    fn rejects_bad_n_lists_and_unknown_keys() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.sim.n = vec![100, 50];
        assert!(c.validate().is_err());
        c.sim.n = vec![];
        assert!(c.validate().is_err());
        let bad = MINIMAL.replace("\"initial\"", "\"bogus\": 1, \"initial\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn initial_mass_must_be_one() {
        let bad = MINIMAL.replace(
            r#"{"family": "unit_mass", "load": 1}"#,
            r#"{"family": "density", "values": [0.5, 0.4]}"#,
        );
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let p = InitialSpec::Poisson { mean: 1.0, max_load: 10 }.density().unwrap();
        assert!((p.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.apply(&Overrides {
            seed: Some(9),
            ..Overrides::default()
        })
        .unwrap();
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn envelope_scale_halves_a01() {
        let text = r#"{
            "model": {"name": "luchsinger_nonlinear",
                      "params": {"lambda": 1.0, "mu": 1.0, "offspring": {"family": "poisson", "mean": 0.8}},
                      "envelope_scale": {"a01": 0.5}},
            "initial": {"family": "unit_mass", "load": 0}
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        let m = c.build_model(&ModelRegistry::default()).unwrap();
        assert_eq!(m.envelopes().a01.eval(0.0), 0.5);
    }
}
