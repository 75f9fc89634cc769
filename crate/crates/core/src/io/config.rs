//! Run configuration: JSON schema, defaults, dotted overrides and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classical::{BridgeTolerances, LangevinParams};
use crate::error::{Error, Result};
use crate::models::{KickedRotorParams, Potential};
use crate::qbm::{GridSpec, QbmParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Master,
    Born,
    Qsd,
    TickerTape,
    KickedRotor,
    Langevin,
    Bridge,
    Scales,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Master => "master",
            Experiment::Born => "born",
            Experiment::Qsd => "qsd",
            Experiment::TickerTape => "ticker_tape",
            Experiment::KickedRotor => "kicked_rotor",
            Experiment::Langevin => "langevin",
            Experiment::Bridge => "bridge",
            Experiment::Scales => "scales",
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitChannel {
    AmplitudeDamping,
    Dephasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitInitial {
    Excited,
    Ground,
    Plus,
}

/// Initial wave packet for grid models. `width` is the amplitude width σ of
/// exp(−(x−x0)²/2σ²); it defaults to the coherent width of the model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Steps of the deterministic no-jump flow (at numerics.dt) applied
    /// before the tilt, to start from the flow's stationary shape.
    #[serde(default)]
    pub relax_steps: usize,
    /// Relative linear tilt (1 + a(x−x0)/σ_x) applied last; breaks parity.
    #[serde(default)]
    pub tilt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Qubit {
        channel: QubitChannel,
        gamma: f64,
        /// H = ħω σ_z / 2
        #[serde(default)]
        omega: f64,
        #[serde(default = "one")]
        hbar: f64,
        initial: QubitInitial,
    },
    RandomLindblad {
        dim: usize,
        n_lindblads: usize,
        gamma: f64,
        #[serde(default)]
        model_seed: u64,
        #[serde(default = "one")]
        hbar: f64,
    },
    Qbm {
        mass: f64,
        temperature: f64,
        gamma: f64,
        #[serde(default = "one")]
        kb: f64,
        #[serde(default = "one")]
        hbar: f64,
        #[serde(default)]
        potential: Potential,
        #[serde(default)]
        caldeira_leggett: bool,
        #[serde(default)]
        initial: PacketConfig,
    },
    KickedRotor {
        kick_strength: f64,
        #[serde(default = "one")]
        inertia: f64,
        #[serde(default = "one")]
        period: f64,
        #[serde(default = "one")]
        hbar: f64,
        dim: usize,
        #[serde(default)]
        theta0: f64,
        #[serde(default)]
        l0: f64,
        /// Defaults to √(ħτ/I), round in scaled phase-space units.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    Measurement {
        c1_sq: f64,
        #[serde(default = "one")]
        coupling: f64,
        #[serde(default = "one")]
        hbar: f64,
        /// Number of fresh environment qubits; the same interaction each time.
        #[serde(default = "default_steps")]
        n_steps: usize,
    },
    Langevin {
        mass: f64,
        gamma: f64,
        temperature: f64,
        #[serde(default = "one")]
        kb: f64,
        #[serde(default)]
        potential: Potential,
        #[serde(default)]
        symplectic: bool,
        #[serde(default)]
        position_noise: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        p0: f64,
        #[serde(default)]
        var_x0: f64,
        #[serde(default)]
        var_p0: f64,
    },
    Scales {
        mass: f64,
        temperature: f64,
        gamma: f64,
        #[serde(default = "one")]
        kb: f64,
        #[serde(default = "one")]
        hbar: f64,
        /// Lyapunov exponent (1/time) for the localization scales.
        lambda: f64,
        /// Characteristic action J for the Ehrenfest time ln(J/ħ)/λ.
        action: f64,
        /// Optional standard-map parameter whose exponent is also estimated.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k_eff: Option<f64>,
    },
}

fn default_steps() -> usize {
    1
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Qubit { .. } => "qubit",
            ModelConfig::RandomLindblad { .. } => "random_lindblad",
            ModelConfig::Qbm { .. } => "qbm",
            ModelConfig::KickedRotor { .. } => "kicked_rotor",
            ModelConfig::Measurement { .. } => "measurement",
            ModelConfig::Langevin { .. } => "langevin",
            ModelConfig::Scales { .. } => "scales",
        }
    }

    pub fn qbm_params(&self) -> Option<QbmParams> {
        match self {
            ModelConfig::Qbm { mass, temperature, gamma, kb, hbar, potential, caldeira_leggett, .. } => Some(QbmParams {
                mass: *mass,
                temperature: *temperature,
                gamma: *gamma,
                kb: *kb,
                hbar: *hbar,
                potential: potential.clone(),
                caldeira_leggett: *caldeira_leggett,
            }),
            _ => None,
        }
    }

    pub fn rotor_params(&self) -> Option<KickedRotorParams> {
        match self {
            ModelConfig::KickedRotor { kick_strength, inertia, period, hbar, dim, .. } => {
                Some(KickedRotorParams { kick_strength: *kick_strength, inertia: *inertia, period: *period, hbar: *hbar, dim: *dim })
            }
            _ => None,
        }
    }

    pub fn langevin_params(&self, dt: f64) -> Option<LangevinParams> {
        match self {
            ModelConfig::Langevin { mass, gamma, temperature, kb, potential, symplectic, position_noise, .. } => Some(LangevinParams {
                mass: *mass,
                gamma: *gamma,
                kt: kb * temperature,
                potential: potential.clone(),
                dt,
                symplectic: *symplectic,
                position_noise: *position_noise,
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HusimiGrid {
    pub ntheta: usize,
    pub l_min: f64,
    pub l_max: f64,
    pub nl: usize,
}

impl Default for HusimiGrid {
    fn default() -> Self {
        Self { ntheta: 128, l_min: -80.0, l_max: 80.0, nl: 321 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub n_traj: usize,
    /// Grid for qbm models.
    pub grid: GridSpec,
    /// Keep free-particle trajectories centred on the grid (born/qsd/bridge).
    pub recenter: bool,
    /// Classical points (langevin, bridge, kicked_rotor).
    pub n_points: usize,
    /// Ticker-tape trajectories sampled.
    pub n_samples: usize,
    pub n_kicks: usize,
    pub husimi: HusimiGrid,
    pub lyapunov_steps: usize,
    pub lyapunov_samples: usize,
    /// Super-selection coupling threshold 1/T for the branch-Schmidt check.
    pub sector_coupling_threshold: f64,
    pub bridge: BridgeTolerances,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_final: 1.0,
            record_every: 10,
            n_traj: 100,
            grid: GridSpec { n: 128, length: 20.0 },
            recenter: false,
            n_points: 10_000,
            n_samples: 10_000,
            n_kicks: 6,
            husimi: HusimiGrid::default(),
            lyapunov_steps: 1000,
            lyapunov_samples: 50,
            sector_coupling_threshold: 1e-6,
            bridge: BridgeTolerances::default(),
        }
    }
}

impl NumericsConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Trajectories written in full (born/qsd).
    pub keep_trajectories: usize,
    /// Integrate the master equation alongside ensembles and report distances.
    pub oracle: bool,
    /// Record indices (kick numbers for the rotor) at which phase-space
    /// fields and classical clouds are written.
    pub dump_records: Vec<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), keep_trajectories: 1, oracle: true, dump_records: vec![0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub model: ModelConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn cfg_err(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config { path: path.into(), reason: reason.into() }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(path, format!("must be positive, got {v}")))
    }
}

fn nonnegative(path: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(path, format!("must be nonnegative, got {v}")))
    }
}

fn potential_ok(path: &str, p: &Potential) -> Result<()> {
    p.validate().map_err(|e| cfg_err(path, e.to_string()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.numerics;
        positive("numerics.dt", n.dt)?;
        positive("numerics.t_final", n.t_final)?;
        if n.record_every == 0 {
            return Err(cfg_err("numerics.record_every", "must be at least 1"));
        }
        if n.n_traj == 0 {
            return Err(cfg_err("numerics.n_traj", "must be at least 1"));
        }
        if n.n_points < 2 {
            return Err(cfg_err("numerics.n_points", "must be at least 2"));
        }
        positive("numerics.sector_coupling_threshold", n.sector_coupling_threshold)?;
        positive("numerics.bridge.slope_rel", n.bridge.slope_rel)?;
        nonnegative("numerics.bridge.mean_abs", n.bridge.mean_abs)?;
        self.validate_model()?;
        let kind = self.model.kind();
        let allowed: &[&str] = match self.experiment {
            Experiment::Master => &["qubit", "random_lindblad", "qbm"],
            Experiment::Born | Experiment::Qsd => &["qubit", "random_lindblad", "qbm"],
            Experiment::TickerTape => &["measurement"],
            Experiment::KickedRotor => &["kicked_rotor"],
            Experiment::Langevin => &["langevin"],
            Experiment::Bridge => &["qbm"],
            Experiment::Scales => &["scales"],
        };
        if !allowed.contains(&kind) {
            return Err(cfg_err(
                "model.kind",
                format!("`{kind}` cannot drive experiment `{}` (expected one of {allowed:?})", self.experiment.name()),
            ));
        }
        if let ModelConfig::Qbm { caldeira_leggett: true, .. } = self.model {
            if matches!(self.experiment, Experiment::Born | Experiment::Qsd | Experiment::Bridge) {
                return Err(cfg_err("model.caldeira_leggett", "the Caldeira-Leggett truncation cannot be unravelled"));
            }
        }
        if self.experiment == Experiment::Bridge {
            if let ModelConfig::Qbm { potential, .. } = &self.model {
                if *potential != Potential::Free {
                    return Err(cfg_err("model.potential", "the bridge experiment uses the free particle"));
                }
            }
        }
        if n.recenter && self.experiment == Experiment::Master {
            return Err(cfg_err("numerics.recenter", "only applies to trajectory ensembles"));
        }
        if n.recenter && self.output.oracle && matches!(self.experiment, Experiment::Born | Experiment::Qsd) {
            return Err(cfg_err("output.oracle", "cannot compare against the master equation while recentering"));
        }
        let steps = n.n_steps();
        if steps == 0 || (steps as f64 * n.dt - n.t_final).abs() > 1e-9 * n.t_final {
            return Err(cfg_err("numerics.t_final", "must be a whole number of steps dt"));
        }
        if !steps.is_multiple_of(n.record_every) && !matches!(self.experiment, Experiment::KickedRotor | Experiment::Scales | Experiment::TickerTape)
        {
            return Err(cfg_err("numerics.record_every", format!("must divide the step count {steps}")));
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<()> {
        match &self.model {
            ModelConfig::Qubit { gamma, hbar, omega, .. } => {
                positive("model.gamma", *gamma)?;
                positive("model.hbar", *hbar)?;
                if !omega.is_finite() {
                    return Err(cfg_err("model.omega", "must be finite"));
                }
            }
            ModelConfig::RandomLindblad { dim, n_lindblads, gamma, hbar, .. } => {
                if *dim < 2 {
                    return Err(cfg_err("model.dim", "must be at least 2"));
                }
                if *n_lindblads == 0 {
                    return Err(cfg_err("model.n_lindblads", "must be at least 1"));
                }
                positive("model.gamma", *gamma)?;
                positive("model.hbar", *hbar)?;
            }
            ModelConfig::Qbm { mass, temperature, gamma, kb, hbar, potential, initial, .. } => {
                positive("model.mass", *mass)?;
                positive("model.temperature", *temperature)?;
                positive("model.gamma", *gamma)?;
                positive("model.kb", *kb)?;
                positive("model.hbar", *hbar)?;
                potential_ok("model.potential", potential)?;
                if let Some(w) = initial.width {
                    positive("model.initial.width", w)?;
                }
                let g = &self.numerics.grid;
                if g.n < 16 || !g.n.is_multiple_of(2) {
                    return Err(cfg_err("numerics.grid.n", "must be even and at least 16"));
                }
                positive("numerics.grid.length", g.length)?;
            }
            ModelConfig::KickedRotor { kick_strength, inertia, period, hbar, dim, sigma, .. } => {
                if !kick_strength.is_finite() {
                    return Err(cfg_err("model.kick_strength", "must be finite"));
                }
                positive("model.inertia", *inertia)?;
                positive("model.period", *period)?;
                positive("model.hbar", *hbar)?;
                if dim % 2 == 0 || *dim < 65 {
                    return Err(cfg_err("model.dim", "must be odd and at least 65"));
                }
                if let Some(s) = sigma {
                    positive("model.sigma", *s)?;
                }
                let h = &self.numerics.husimi;
                if h.ntheta < 8 || h.nl < 8 || !(h.l_max > h.l_min) {
                    return Err(cfg_err("numerics.husimi", "needs ntheta, nl ≥ 8 and l_max > l_min"));
                }
            }
            ModelConfig::Measurement { c1_sq, coupling, hbar, n_steps } => {
                if !(0.0..=1.0).contains(c1_sq) {
                    return Err(cfg_err("model.c1_sq", "must lie in [0, 1]"));
                }
                positive("model.coupling", *coupling)?;
                positive("model.hbar", *hbar)?;
                if *n_steps == 0 || *n_steps > 12 {
                    return Err(cfg_err("model.n_steps", "must lie in 1..=12"));
                }
            }
            ModelConfig::Langevin { mass, gamma, temperature, kb, potential, position_noise, var_x0, var_p0, .. } => {
                positive("model.mass", *mass)?;
                nonnegative("model.gamma", *gamma)?;
                nonnegative("model.temperature", *temperature)?;
                positive("model.kb", *kb)?;
                nonnegative("model.position_noise", *position_noise)?;
                nonnegative("model.var_x0", *var_x0)?;
                nonnegative("model.var_p0", *var_p0)?;
                potential_ok("model.potential", potential)?;
            }
            ModelConfig::Scales { mass, temperature, gamma, kb, hbar, lambda, action, k_eff } => {
                positive("model.mass", *mass)?;
                positive("model.temperature", *temperature)?;
                positive("model.gamma", *gamma)?;
                positive("model.kb", *kb)?;
                positive("model.hbar", *hbar)?;
                positive("model.lambda", *lambda)?;
                positive("model.action", *action)?;
                if let Some(k) = k_eff {
                    positive("model.k_eff", *k)?;
                }
            }
        }
        Ok(())
    }
}

/// Set `path` (dotted keys) in a JSON tree, creating objects on the way. The
/// value is read as JSON when it parses, otherwise as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| cfg_err(assignment, "override must look like key=value"))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(cfg_err(path, "empty key in override path"));
    }
    let mut cur = root;
    for (i, k) in keys.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| cfg_err(keys[..i].join("."), "is not an object"))?;
        if i + 1 == keys.len() {
            obj.insert(k.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last key")
}

/// Deserialize and validate a configuration tree.
pub fn config_from_value(v: Value) -> Result<RunConfig> {
    let cfg: RunConfig = serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        cfg_err(if path == "." { String::new() } else { path }, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| cfg_err("", format!("invalid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut v, o)?;
    }
    config_from_value(v)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(path.display().to_string(), format!("cannot read: {e}")))?;
    parse_config_str(&text, overrides)
}
