//! Physical parameters and vessel geometry.

use crate::error::{MuskatError, Result};
use crate::grid::GridFn1D;
use serde::{Deserialize, Serialize};

/// Constants of the normalized model (viscosity, permeability and density set to one).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysParams {
    pub g: f64,
    pub sigma: f64,
    pub gamma_jump: f64,
    pub mass: f64,
}

impl PhysParams {
    pub fn new(g: f64, sigma: f64, gamma_jump: f64, mass: f64) -> Result<Self> {
        let p = Self { g, sigma, gamma_jump, mass };
        p.validate()?;
        Ok(p)
    }

    /// All violated preconditions, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let finite = [self.g, self.sigma, self.gamma_jump, self.mass].iter().all(|x| x.is_finite());
        if !finite {
            v.push("params: all entries must be finite".to_string());
            return v;
        }
        if self.g <= 0.0 {
            v.push(format!("params.g must be positive (got {})", self.g));
        }
        if self.sigma <= 0.0 {
            v.push(format!("params.sigma must be positive (got {})", self.sigma));
        }
        if self.mass <= 0.0 {
            v.push(format!("params.mass must be positive (got {})", self.mass));
        }
        if self.sigma > 0.0 && self.gamma_jump.abs() >= self.sigma {
            v.push(format!(
                "params.gamma_jump violates Young's law partial wetting: |[gamma]| = {} must be < sigma = {}",
                self.gamma_jump.abs(),
                self.sigma
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma > 0.0 && self.gamma_jump.abs() >= self.sigma && self.violations().len() == 1 {
            return Err(MuskatError::PartialWetting { gamma_jump: self.gamma_jump, sigma: self.sigma });
        }
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(MuskatError::Config(v))
        }
    }

    /// `cos(omega_eq) = [gamma]/sigma`.
    pub fn young_cosine(&self) -> f64 {
        self.gamma_jump / self.sigma
    }
}

/// Analytic lower-wall families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum WallProfile {
    /// `h_w = level`.
    Flat { level: f64 },
    /// `h_w = base + curvature * x^2`.
    Parabolic { base: f64, curvature: f64 },
    /// `h_w = base + amplitude * cos(mode * pi * x)`.
    Cosine { base: f64, amplitude: f64, mode: u32 },
}

impl WallProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WallProfile::Flat { level } => level,
            WallProfile::Parabolic { base, curvature } => base + curvature * x * x,
            WallProfile::Cosine { base, amplitude, mode } => {
                base + amplitude * (mode as f64 * std::f64::consts::PI * x).cos()
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            WallProfile::Flat { level } => level.is_finite(),
            WallProfile::Parabolic { base, curvature } => base.is_finite() && curvature.is_finite(),
            WallProfile::Cosine { base, amplitude, .. } => base.is_finite() && amplitude.is_finite(),
        }
    }
}

/// Lower wall `h_w` on [-1, 1], sampled from an analytic profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VesselGeometry {
    pub profile: WallProfile,
    pub n_samples: usize,
}

impl VesselGeometry {
    pub fn new(profile: WallProfile, n_samples: usize) -> Result<Self> {
        if n_samples < 2 || n_samples % 2 == 1 {
            return Err(MuskatError::Invalid(format!(
                "vessel sampling needs an even interval count >= 2, got {n_samples}"
            )));
        }
        if !profile.is_finite() {
            return Err(MuskatError::Invalid("vessel coefficients must be finite".into()));
        }
        Ok(Self { profile, n_samples })
    }

    pub fn flat(level: f64, n_samples: usize) -> Result<Self> {
        Self::new(WallProfile::Flat { level }, n_samples)
    }

    pub fn h_w(&self, x: f64) -> f64 {
        self.profile.eval(x)
    }

    pub fn samples(&self) -> GridFn1D {
        self.sampled_on(self.n_samples)
    }

    pub fn sampled_on(&self, n: usize) -> GridFn1D {
        GridFn1D::from_fn(n, |x| self.h_w(x))
    }

    pub fn with_samples(&self, n: usize) -> Self {
        Self { profile: self.profile, n_samples: n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn young_violation_is_named() {
        let e = PhysParams::new(1.0, 1.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(e, MuskatError::PartialWetting { .. }));
        assert!(e.to_string().contains("Young"));
    }

    #[test]
    fn collects_all_violations() {
        let p = PhysParams { g: -1.0, sigma: 1.0, gamma_jump: 2.0, mass: 0.0 };
        assert_eq!(p.violations().len(), 3);
    }

    #[test]
    fn wall_families() {
        assert_eq!(WallProfile::Flat { level: -1.0 }.eval(0.3), -1.0);
        assert_eq!(WallProfile::Parabolic { base: -1.0, curvature: 0.5 }.eval(1.0), -0.5);
        let c = WallProfile::Cosine { base: 0.0, amplitude: 0.2, mode: 1 };
        assert!((c.eval(1.0) + 0.2).abs() < 1e-15);
    }
}
