use crate::dynamics::{DnRefresh, InitialShape, Scheme, StepperConfig};
use crate::error::{MuskatError, Result};
use crate::model::{PhysParams, VesselGeometry, WallProfile};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Smallest accepted number of surface intervals.
pub const MIN_NX: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub params: PhysParams,
    #[serde(default)]
    pub vessel: VesselSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub stepper: StepperSpec,
    #[serde(default)]
    pub initial_eta: InitialEta,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselSpec {
    pub wall: WallProfile,
    /// Sampling of the wall; defaults to `grid.nx`.
    #[serde(default)]
    pub n_samples: Option<usize>,
}

impl Default for VesselSpec {
    fn default() -> Self {
        Self { wall: WallProfile::Flat { level: -1.0 }, n_samples: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    /// Layers of the bulk mesh; defaults to `max(4, nx / 4)`.
    #[serde(default)]
    pub ny: Option<usize>,
}

impl GridSpec {
    pub fn ny(&self) -> usize {
        self.ny.unwrap_or((self.nx / 4).max(4))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperSpec {
    pub dt: f64,
    pub scheme: Scheme,
    /// Defaults to every step up to `nx = 128`, every fifth above.
    pub dn_refresh: Option<DnRefresh>,
    pub t_end: f64,
}

impl Default for StepperSpec {
    fn default() -> Self {
        Self { dt: 1e-3, scheme: Scheme::SemiImplicit, dn_refresh: None, t_end: 5.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialEta {
    pub shape: InitialShape,
    pub amplitude: f64,
    pub zero_mean: bool,
}

impl Default for InitialEta {
    fn default() -> Self {
        Self { shape: InitialShape::Cosine { mode: 1 }, amplitude: 0.01, zero_mean: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSpec {
    /// Excess regularity in `H^{3/2+delta}`, in (0, 1].
    pub delta: f64,
    /// Decay fit window; defaults to the second half of the run.
    pub fit_window: Option<[f64; 2]>,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self { delta: 0.5, fit_window: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Field snapshot every this many steps; 0 disables snapshots.
    pub snapshot_stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), snapshot_stride: 0 }
    }
}

/// Thresholds behind the verdicts of `diagnose`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Allowed `|mass(t) - mass(0)|` relative to `||eta(0)||_{L2}`.
    pub mass_drift: f64,
    /// Minimum `r^2` of the decay fit.
    pub decay_r_squared: f64,
    /// Bounds on `(frakE + frakF) / frakE`.
    pub sandwich: [f64; 2],
    /// Allowed change of `E_phys` between records after step 3.
    pub monotone_slack: f64,
    /// Relative agreement between replayed and recorded CSV columns.
    pub roundtrip: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { mass_drift: 1e-6, decay_r_squared: 0.99, sandwich: [0.5, 1.5], monotone_slack: 0.0, roundtrip: 1e-12 }
    }
}

impl SimConfig {
    /// Minimal configuration with every optional section at its default.
    pub fn with_defaults(params: PhysParams, nx: usize) -> Self {
        Self {
            params,
            vessel: VesselSpec::default(),
            grid: GridSpec { nx, ny: None },
            stepper: StepperSpec::default(),
            initial_eta: InitialEta::default(),
            diagnostics: DiagnosticsSpec::default(),
            output: OutputSpec::default(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            dt: self.stepper.dt,
            scheme: self.stepper.scheme,
            dn_refresh: self.stepper.dn_refresh.unwrap_or_else(|| DnRefresh::default_for(self.grid.nx)),
            t_end: self.stepper.t_end,
            snapshot_stride: self.output.snapshot_stride,
        }
    }

    pub fn vessel(&self) -> Result<VesselGeometry> {
        VesselGeometry::new(self.vessel.wall, self.vessel.n_samples.unwrap_or(self.grid.nx))
    }

    pub fn fit_window(&self) -> [f64; 2] {
        self.diagnostics.fit_window.unwrap_or([0.5 * self.stepper.t_end, self.stepper.t_end])
    }

    /// Every violated precondition.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.params.violations();
        let nx = self.grid.nx;
        if nx < MIN_NX {
            v.push(format!("grid.nx must be at least {MIN_NX} (got {nx})"));
        }
        if nx % 2 == 1 {
            v.push(format!("grid.nx must be even (got {nx})"));
        }
        if self.grid.ny() < 2 {
            v.push(format!("grid.ny must be at least 2 (got {})", self.grid.ny()));
        }
        if !self.vessel.wall.is_finite() {
            v.push("vessel.wall coefficients must be finite".to_string());
        }
        if let Some(n) = self.vessel.n_samples {
            if n < 2 || n % 2 == 1 {
                v.push(format!("vessel.n_samples must be even and >= 2 (got {n})"));
            }
        }
        v.extend(self.stepper_config().violations());
        if !self.initial_eta.amplitude.is_finite() {
            v.push("initial_eta.amplitude must be finite".to_string());
        }
        if let InitialShape::Cosine { mode: 0 } = self.initial_eta.shape {
            v.push("initial_eta.shape cosine needs mode >= 1".to_string());
        }
        let d = self.diagnostics.delta;
        if !(d > 0.0 && d <= 1.0) {
            v.push(format!("diagnostics.delta must lie in (0, 1] (got {d})"));
        }
        if let Some([a, b]) = self.diagnostics.fit_window {
            if !(a >= 0.0 && a < b && b <= self.stepper.t_end) {
                v.push(format!("diagnostics.fit_window [{a}, {b}] must satisfy 0 <= a < b <= t_end"));
            }
        }
        let t = &self.tolerances;
        if !(t.mass_drift > 0.0 && t.roundtrip > 0.0 && t.monotone_slack >= 0.0) {
            v.push("tolerances.mass_drift and roundtrip must be positive, monotone_slack non-negative".to_string());
        }
        if !(t.decay_r_squared > 0.0 && t.decay_r_squared <= 1.0) {
            v.push(format!("tolerances.decay_r_squared must lie in (0, 1] (got {})", t.decay_r_squared));
        }
        if !(t.sandwich[0] > 0.0 && t.sandwich[0] <= 1.0 && t.sandwich[1] >= 1.0) {
            v.push(format!("tolerances.sandwich {:?} must bracket 1", t.sandwich));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        let p = &self.params;
        if v.len() == 1 && p.sigma > 0.0 && p.gamma_jump.abs() >= p.sigma {
            return Err(MuskatError::PartialWetting { gamma_jump: p.gamma_jump, sigma: p.sigma });
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(MuskatError::Config(v))
        }
    }
}

/// Parses one JSON document and validates it.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = serde_json::from_str(text).map_err(|e| MuskatError::Config(vec![e.to_string()]))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MuskatError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}
