//! Host birth and load-dependent death with infection rates damped by the
//! host density: `α_{i,i+j}(x) = ν Σ_{l≥1} xˡ p_{lj} / (c + Σ_l xˡ)`.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::Deserialize;

use super::offspring::{ConvolutionTable, OffspringLaw};
use crate::error::ModelError;
use crate::rates::baseline::{BaselineGenerator, LoadDecay};
use crate::rates::interaction::{pos, Envelope, Envelopes, Interaction, ModelSpec};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KretzschmarParams {
    pub nu: f64,
    pub offspring: OffspringLaw,
    pub mu: f64,
    #[serde(default)]
    pub kappa: f64,
    /// Extra host death per parasite.
    #[serde(default)]
    pub alpha_extra: f64,
    pub beta_birth: f64,
    /// Per-parasite discount of the birth rate, in `[0, 1]`.
    #[serde(default = "one")]
    pub birth_discount: f64,
    pub c: f64,
}

fn one() -> f64 {
    1.0
}

impl KretzschmarParams {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "c must be positive (got {}): with c <= 0 the infection rate is not \
                 Lipschitz in the host norm and no finite envelope exists",
                self.c
            )));
        }
        let nonneg = [self.nu, self.mu, self.kappa, self.alpha_extra, self.beta_birth];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ModelError::InvalidParameter(
                "nu, mu, kappa, alpha_extra and beta_birth must be finite and nonnegative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.birth_discount) {
            return Err(ModelError::InvalidParameter(format!(
                "birth_discount must lie in [0, 1], got {}",
                self.birth_discount
            )));
        }
        self.offspring.validate()
    }
}

#[derive(Debug)]
pub struct KretzschmarInteraction {
    nu: f64,
    theta: f64,
    c: f64,
    beta_birth: f64,
    birth_discount: f64,
    table: ConvolutionTable,
}

impl KretzschmarInteraction {
    pub fn new(nu: f64, law: OffspringLaw, c: f64, beta_birth: f64, birth_discount: f64) -> Self {
        Self {
            nu,
            theta: law.mean(),
            c,
            beta_birth,
            birth_discount,
            table: ConvolutionTable::new(law, ConvolutionTable::DEFAULT_CAP),
        }
    }

    /// `λ = νθ`, the mean parasite transmission rate per unit parasite density.
    pub fn lambda(&self) -> f64 {
        self.nu * self.theta
    }

    fn damping(&self, x: &[f64]) -> f64 {
        self.nu / (self.c + x.iter().map(|&v| pos(v)).sum::<f64>())
    }

    fn infectious_weight(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .skip(1)
            .map(|(l, &xl)| pos(xl) * (1.0 - self.table.zero_prob(l)))
            .sum()
    }

    /// `g_j = Σ_{l≥1} x₊ˡ p_{lj}` for `0 ≤ j ≤ cap`, with `g_0 = 0`.
    fn increments(&self, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(cap + 1, 0.0);
        for (l, &xl) in x.iter().enumerate().skip(1) {
            let xl = pos(xl);
            if xl > 0.0 {
                self.table.add_row(l, xl, out);
            }
        }
        if let Some(g0) = out.first_mut() {
            *g0 = 0.0;
        }
    }
}

impl Interaction for KretzschmarInteraction {
    fn alpha_total(&self, _load: usize, x: &[f64]) -> f64 {
        self.damping(x) * self.infectious_weight(x)
    }

    fn alpha_sample(&self, load: usize, x: &[f64], rng: &mut dyn RngCore) -> usize {
        let total = self.infectious_weight(x);
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut source = 0;
        for (l, &xl) in x.iter().enumerate().skip(1) {
            let w = pos(xl) * (1.0 - self.table.zero_prob(l));
            if w > 0.0 {
                acc += w;
                source = l;
                if u < acc {
                    break;
                }
            }
        }
        load + self.table.law().sample_positive_sum(source, rng)
    }

    fn alpha_pointwise(&self, load: usize, target: usize, x: &[f64]) -> f64 {
        if target <= load {
            return 0.0;
        }
        let j = target - load;
        self.damping(x)
            * x.iter()
                .enumerate()
                .skip(1)
                .map(|(l, &xl)| pos(xl) * self.table.prob(l, j))
                .sum::<f64>()
    }

    fn alpha_moment(&self, load: usize, x: &[f64]) -> Option<f64> {
        // Σ_j (load + j + 1) α_{load,load+j}
        let parasites: f64 = x
            .iter()
            .enumerate()
            .map(|(l, &xl)| pos(xl) * l as f64 * self.theta)
            .sum();
        Some((load as f64 + 1.0) * self.alpha_total(load, x) + self.damping(x) * parasites)
    }

    fn alpha_row(&self, load: usize, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        let mut g = Vec::new();
        self.increments(x, cap.saturating_sub(load), &mut g);
        let d = self.damping(x);
        out.clear();
        out.resize(cap + 1, 0.0);
        for (j, gj) in g.iter().enumerate().skip(1) {
            out[load + j] = d * gj;
        }
    }

    fn beta_total(&self, x: &[f64]) -> f64 {
        let mut weight = 1.0;
        let mut total = 0.0;
        for &xi in x {
            total += pos(xi) * weight;
            weight *= self.birth_discount;
        }
        self.beta_birth * total
    }

    fn beta_sample(&self, _x: &[f64], _rng: &mut dyn RngCore) -> usize {
        0
    }

    fn beta_pointwise(&self, load: usize, x: &[f64]) -> f64 {
        if load == 0 {
            self.beta_total(x)
        } else {
            0.0
        }
    }

    fn beta_moment(&self, x: &[f64]) -> Option<f64> {
        Some(self.beta_total(x))
    }

    fn beta_row(&self, x: &[f64], cap: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(cap + 1, 0.0);
        out[0] = self.beta_total(x);
    }

    fn has_immigration(&self) -> bool {
        self.beta_birth > 0.0
    }

    fn envelopes(&self) -> Envelopes {
        let k = 2.0 * self.nu.max(self.lambda());
        Envelopes {
            a01: Envelope::Constant(2.0 * self.nu / self.c),
            a11: Envelope::Affine {
                at_zero: k / self.c,
                slope: k / (self.c * self.c),
            },
            b01: Envelope::Constant(self.beta_birth),
            b11: Envelope::Constant(self.beta_birth),
            ..Envelopes::ZERO
        }
    }

    fn add_drift(&self, x: &[f64], out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let cap = out.len() - 1;
        let d = self.damping(x);
        let total = d * self.infectious_weight(x);
        let mut g = Vec::new();
        self.increments(x, cap, &mut g);
        for (k, &xk) in x.iter().enumerate().take(cap + 1) {
            let xk = pos(xk);
            if xk <= 0.0 {
                continue;
            }
            out[k] -= xk * total;
            for (j, gj) in g.iter().enumerate().take(cap + 1 - k).skip(1) {
                out[k + j] += xk * d * gj;
            }
        }
        out[0] += self.beta_total(x);
    }
}

/// Density-damped infection with host births and load-dependent deaths.
pub fn kretzschmar_modified(params: &serde_json::Value) -> Result<ModelSpec, ModelError> {
    let p: KretzschmarParams = super::parse_params(params)?;
    p.validate()?;
    let baseline = LoadDecay {
        mu: p.mu,
        decay_floor: 1,
        catastrophe: 0.0,
        host_death: p.kappa,
        host_death_per_load: p.alpha_extra,
        host_death_floor: 0,
    };
    let m1 = (p.mu + p.alpha_extra).max(p.kappa).max(1.0);
    let baseline = BaselineGenerator::new(Arc::new(baseline), m1, 1.0, 0.0)?;
    Ok(ModelSpec::new(
        "kretzschmar_modified",
        params.clone(),
        baseline,
        Arc::new(KretzschmarInteraction::new(
            p.nu,
            p.offspring,
            p.c,
            p.beta_birth,
            p.birth_discount,
        )),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    fn model(discount: f64) -> ModelSpec {
        kretzschmar_modified(&json!({
            "nu": 2.0, "offspring": {"family": "poisson", "mean": 0.75},
            "mu": 1.0, "kappa": 0.2, "alpha_extra": 0.1,
            "beta_birth": 0.5, "birth_discount": discount, "c": 1.5
        }))
        .unwrap()
    }

    #[test]
    fn unit_discount_gives_births_proportional_to_hosts() {
        let m = model(1.0);
        let x = [0.3, 0.2, 0.4];
        assert_abs_diff_eq!(m.interaction().beta_total(&x), 0.5 * 0.9, epsilon = 1e-15);
        let m = model(0.5);
        assert_abs_diff_eq!(
            m.interaction().beta_total(&x),
            0.5 * (0.3 + 0.1 + 0.1),
            epsilon = 1e-15
        );
    }

    #[test]
    fn empty_population_infects_no_one() {
        let m = model(1.0);
        let x = [0.0; 5];
        for i in 0..5 {
            assert_eq!(m.interaction().alpha_total(i, &x), 0.0);
            assert_eq!(m.interaction().alpha_pointwise(i, i + 1, &x), 0.0);
        }
    }

    #[test]
    fn mean_parasite_influx_matches_damped_parasite_density() {
        // Σ_j j α_{i,i+j}(x) = λ Σ_l l xˡ / (c + Σ xˡ)
        let m = model(1.0);
        let lambda = 2.0 * 0.75;
        let x = [0.2, 0.3, 0.1, 0.25];
        let lhs: f64 = (1..300)
            .map(|j| j as f64 * m.interaction().alpha_pointwise(2, 2 + j, &x))
            .sum();
        let s: f64 = x.iter().sum();
        let rhs = lambda * (0.3 + 0.2 + 0.75) / (1.5 + s);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn drift_override_matches_generic_drift() {
        #[derive(Debug)]
        struct Generic<'a>(&'a KretzschmarInteraction);
        impl Interaction for Generic<'_> {
            fn alpha_total(&self, l: usize, x: &[f64]) -> f64 {
                self.0.alpha_total(l, x)
            }
            fn alpha_sample(&self, l: usize, x: &[f64], r: &mut dyn RngCore) -> usize {
                self.0.alpha_sample(l, x, r)
            }
            fn alpha_pointwise(&self, l: usize, t: usize, x: &[f64]) -> f64 {
                self.0.alpha_pointwise(l, t, x)
            }
            fn beta_pointwise(&self, l: usize, x: &[f64]) -> f64 {
                self.0.beta_pointwise(l, x)
            }
            fn has_immigration(&self) -> bool {
                true
            }
            fn envelopes(&self) -> Envelopes {
                self.0.envelopes()
            }
        }
        let k = KretzschmarInteraction::new(
            2.0,
            OffspringLaw::Geometric { p: 0.6 },
            1.5,
            0.5,
            0.8,
        );
        let x = [0.2, 0.3, 0.1, 0.25, 0.0, 0.05];
        let mut fast = vec![0.0; 40];
        let mut slow = vec![0.0; 40];
        k.add_drift(&x, &mut fast);
        Generic(&k).add_drift(&x, &mut slow);
        for (a, b) in fast.iter().zip(&slow) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn moment_matches_pointwise_sum() {
        let m = model(1.0);
        let x = [0.2, 0.3, 0.1, 0.25];
        let sum: f64 = (4..400)
            .map(|l| (l as f64 + 1.0) * m.interaction().alpha_pointwise(3, l, &x))
            .sum();
        assert_abs_diff_eq!(sum, m.interaction().alpha_moment(3, &x).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn nonpositive_c_is_rejected() {
        let err = kretzschmar_modified(&json!({
            "nu": 1.0, "offspring": {"family": "point_mass", "at": 1},
            "mu": 1.0, "beta_birth": 1.0, "c": 0.0
        }))
        .unwrap_err();
        assert!(err.to_string().contains("Lipschitz"));
    }
}
