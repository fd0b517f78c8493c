use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::particles::ParticleSet;
use super::InferenceError;
use crate::frames::{ContextRole, ElementBelief, PreconditionBelief, Role};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialParams {
    /// Measurement Gaussian scale, shared by every frame-object pair.
    pub sigma_m: f64,
    /// Context Gaussian scale between a frame and its precondition.
    pub sigma_c: f64,
    /// Per-step prediction scale for movable frames without their own.
    pub sigma_p_movable: f64,
    pub reinvigoration_fraction: f64,
    /// Reinvigorate when ESS / P falls below this.
    pub ess_threshold: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        PotentialParams {
            sigma_m: 0.5,
            sigma_c: 0.5,
            sigma_p_movable: 0.05,
            reinvigoration_fraction: 0.05,
            ess_threshold: 0.5,
        }
    }
}

impl PotentialParams {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let sigmas = [self.sigma_m, self.sigma_c, self.sigma_p_movable];
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(InferenceError::InvalidParams("sigmas must be positive".into()));
        }
        for f in [self.reinvigoration_fraction, self.ess_threshold] {
            if !(0.0..=1.0).contains(&f) {
                return Err(InferenceError::InvalidParams(
                    "fractions must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Spatial kernel coupling a frame position to one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// Isotropic bivariate Gaussian centred on the particle.
    Gaussian { sigma: f64 },
    /// Gaussian in distance around a circle of `radius`: the places a robot
    /// can stand to reach the particle.
    Ring { sigma: f64, radius: f64 },
}

/// Terms with exponent beyond this are skipped on the fast path.
const CUTOFF: f64 = 50.0;

impl Kernel {
    fn exponent(&self, x: &Point, o: &Point) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => x.distance_sq(o) / (2.0 * sigma * sigma),
            Kernel::Ring { sigma, radius } => {
                let d = x.distance(o) - radius;
                d * d / (2.0 * sigma * sigma)
            }
        }
    }

    fn log_norm(&self) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => -(2.0 * PI * sigma * sigma).ln(),
            // large-radius approximation of the ring's integral
            Kernel::Ring { sigma, radius } if radius > 0.0 => -((2.0 * PI).powf(1.5) * sigma * radius).ln(),
            Kernel::Ring { sigma, .. } => -(2.0 * PI * sigma * sigma).ln(),
        }
    }

    pub fn density(&self, x: &Point, o: &Point) -> f64 {
        (self.log_norm() - self.exponent(x, o)).exp()
    }

    /// ln Σ_s α_s K(x, o_s), exact even when every term underflows.
    /// Entries of `support` are (position, weight) with positive weight.
    pub fn log_mixture(&self, x: &Point, support: &[(Point, f64)]) -> f64 {
        let mut sum = 0.0;
        let mut min_q = f64::INFINITY;
        for &(o, w) in support {
            let q = self.exponent(x, &o);
            min_q = min_q.min(q);
            if q < CUTOFF {
                sum += w * (-q).exp();
            }
        }
        if sum > 1e-15 {
            return self.log_norm() + sum.ln();
        }
        // every particle is far away: log-sum-exp relative to the nearest
        let shifted: f64 = support
            .iter()
            .map(|(o, w)| w * (min_q - self.exponent(x, o)).exp())
            .sum();
        self.log_norm() - min_q + shifted.ln()
    }
}

/// ln of the measurement factor, `-inf` when the object is Disjoint.
pub fn log_measurement_factor(
    frame_particle: &Point,
    object_support: &[(Point, f64)],
    rel: &ElementBelief,
    kernel: Kernel,
) -> f64 {
    // Core and Other share the same Gaussian, so the role sum collapses to
    // the involved mass times one mixture.
    let involved = rel.weight(Role::Core) + rel.weight(Role::Other);
    if involved <= 0.0 {
        return f64::NEG_INFINITY;
    }
    involved.ln() + kernel.log_mixture(frame_particle, object_support)
}

/// Σ_{r ∈ {Core, Other}} B(r) Σ_s α_s N(x; o_s, σ_m² I).
pub fn measurement_factor(
    frame_particle: &Point,
    object_set: &ParticleSet,
    rel: &ElementBelief,
    params: &PotentialParams,
) -> f64 {
    let kernel = Kernel::Gaussian {
        sigma: params.sigma_m,
    };
    log_measurement_factor(frame_particle, &object_set.support(), rel, kernel).exp()
}

pub fn log_context_factor(
    frame_particle: &Point,
    precond_support: &[(Point, f64)],
    rel: &PreconditionBelief,
    sigma_c: f64,
) -> f64 {
    let b = rel.weight(ContextRole::Precondition);
    if b <= 0.0 {
        return f64::NEG_INFINITY;
    }
    b.ln() + Kernel::Gaussian { sigma: sigma_c }.log_mixture(frame_particle, precond_support)
}

/// B(Precondition) Σ_l α_l N(x; f_l, σ_c² I).
pub fn context_factor(
    frame_particle: &Point,
    precond_set: &ParticleSet,
    rel: &PreconditionBelief,
    params: &PotentialParams,
) -> f64 {
    log_context_factor(frame_particle, &precond_set.support(), rel, params.sigma_c).exp()
}
