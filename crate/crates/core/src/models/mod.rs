//! Concrete models and the name-keyed registry used by configuration files.
//!
//! | name                   | parameters |
//! |------------------------|------------|
//! | `luchsinger_nonlinear` | `lambda`, `mu`, `kappa`, `offspring` |
//! | `luchsinger_linear`    | `lambda`, `mu`, `kappa`, `offspring` |
//! | `kretzschmar_modified` | `nu`, `offspring`, `mu`, `kappa`, `alpha_extra`, `beta_birth`, `birth_discount`, `c` |
//! | `pure_death`           | `mu` |
//! | `baseline_only`        | `mu`, `decay_floor`, `catastrophe`, `host_death`, `host_death_per_load`, `host_death_floor` |
//! | `constant_rates`       | `alpha_up`, `immigration`, `immigration_load`, `delta`, `baseline` |
//! | `null`                 | none |
//!
//! `offspring` is one of `{"family": "point_mass", "at": k}`,
//! `{"family": "poisson", "mean": m}`, `{"family": "geometric", "p": p}` or
//! `{"family": "table", "probs": [...]}`.

pub mod kretzschmar;
pub mod luchsinger;
pub mod offspring;
pub mod simple;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::DeserializeOwned;

pub use kretzschmar::kretzschmar_modified;
pub use luchsinger::{luchsinger_linear, luchsinger_nonlinear};
pub use offspring::{ConvolutionTable, OffspringLaw};
pub use simple::{baseline_only, constant_rates, null_model, pure_death, ConstantInteraction};

use crate::error::ModelError;
use crate::rates::interaction::ModelSpec;

pub(crate) fn parse_params<T: DeserializeOwned>(params: &serde_json::Value) -> Result<T, ModelError> {
    serde_json::from_value(params.clone())
        .map_err(|e| ModelError::InvalidParameter(format!("bad model parameters: {e}")))
}

pub type ModelBuilder =
    Arc<dyn Fn(&serde_json::Value) -> Result<ModelSpec, ModelError> + Send + Sync>;

/// Model constructors keyed by name.
#[derive(Clone)]
pub struct ModelRegistry {
    builders: BTreeMap<String, ModelBuilder>,
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRegistry")
            .field("names", &self.builders.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("luchsinger_nonlinear", luchsinger_nonlinear);
        r.register("luchsinger_linear", luchsinger_linear);
        r.register("kretzschmar_modified", kretzschmar_modified);
        r.register("pure_death", pure_death);
        r.register("baseline_only", baseline_only);
        r.register("constant_rates", constant_rates);
        r.register("null", null_model);
        r
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    /// Adds or replaces a constructor.
    pub fn register<F>(&mut self, name: &str, builder: F)
    where
        F: Fn(&serde_json::Value) -> Result<ModelSpec, ModelError> + Send + Sync + 'static,
    {
        self.builders.insert(name.to_string(), Arc::new(builder));
    }

    pub fn build(&self, name: &str, params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| ModelError::UnknownModel(name.to_string()))?;
        builder(params)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }
}

/// Builds a model from the default registry.
pub fn build_model(name: &str, params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
    ModelRegistry::default().build(name, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn registry_builds_by_name() {
        let r = ModelRegistry::default();
        let m = r
            .build("pure_death", &json!({"mu": 1.0}))
            .unwrap();
        assert_eq!(m.name(), "pure_death");
        assert!(matches!(
            r.build("nope", &json!({})),
            Err(ModelError::UnknownModel(_))
        ));
        assert!(r.names().any(|n| n == "kretzschmar_modified"));
    }

    #[test]
    fn custom_models_can_be_registered() {
        let mut r = ModelRegistry::empty();
        r.register("mine", |p| pure_death(p));
        assert!(r.build("mine", &json!({"mu": 2.0})).is_ok());
        assert!(r.build("pure_death", &json!({"mu": 2.0})).is_err());
    }
}
