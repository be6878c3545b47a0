//! Experiment configuration: built-in profiles, flat `key = value` files and
//! the resolved per-scene parameters.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::allocation::{EnergyMode, GridSpec};
use crate::channel::GainMode;
use crate::error::{invalid, Error, Result};
use crate::geometry::SceneConfig;
use crate::metasurface::{AmplitudeMode, AmplitudeModel};
use crate::optimizer::OptimizerConfig;
use crate::scalar::dbm_to_watts;

/// Speed of light used to turn `freq_hz` into a wavelength.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Baseline being evaluated in a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Codebook start refined by gradient descent.
    Proposed,
    /// Best of the codebook candidates, no refinement.
    Codebook,
    /// A single random phase configuration.
    Random,
    /// Fully digital zero forcing used directly as the precoder.
    ZfOracle,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::Codebook, Scheme::Random, Scheme::ZfOracle];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Codebook => "codebook",
            Scheme::Random => "random",
            Scheme::ZfOracle => "zf-oracle",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.label() == s.trim())
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

/// Which amplitude model the meta-atoms follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeKind {
    Coupled,
    Ideal,
}

/// How the transmit budget is split across streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerPolicy {
    WaterFilling,
    Uniform,
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Full-size scene: 15x15 atoms, up to 12 layers, 100 trials.
    Paper,
    /// Reduced scene for quick runs: 7x7 atoms, up to 6 layers, 20 trials.
    Desk,
}

/// Everything a harness run needs. Powers are stored in watts; the dBm
/// values given by the user are converted once, when they are set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub wavelength: f64,
    /// Carrier used by the circuit model.
    pub freq_hz: f64,
    pub bs_rows: usize,
    pub bs_cols: usize,
    /// Default number of users `K` (and active antennas `S`).
    pub users: usize,
    pub layers: usize,
    pub atoms_per_side: usize,
    /// Spacings as multiples of the wavelength.
    pub d_s_factor: f64,
    pub d_m_factor: f64,
    pub d_l_factor: f64,
    pub height: f64,
    pub ue_center: (f64, f64),
    pub ue_radius: f64,
    pub amplitude: AmplitudeModel<f64>,
    pub amplitude_kind: AmplitudeKind,
    pub optimizer: OptimizerConfig<f64>,
    p_t_w: f64,
    noise_w: f64,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
    /// Gain model of the channel used to score sum rates.
    pub gain_mode: GainMode,
    pub schemes: Vec<Scheme>,
    pub layer_list: Vec<usize>,
    pub user_list: Vec<usize>,
    pub out_dir: PathBuf,
    pub power_policy: PowerPolicy,
    pub wf_rounds: usize,
    pub wf_tol: f64,
    /// Virtual-user distance of the planar-wavefront arm.
    pub far_reference: f64,
    /// Transmit power used by the near/far comparison.
    p_t_compare_w: f64,
    pub heatmap_grid: GridSpec<f64>,
    pub energy_mode: EnergyMode,
    /// Layer counts optimised for the heatmap arms.
    pub heatmap_layers: Vec<usize>,
    /// Rayon worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::profile(Profile::Paper)
    }
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let base = Self {
            wavelength: 0.03,
            freq_hz: 10e9,
            bs_rows: 2,
            bs_cols: 2,
            users: 4,
            layers: 12,
            atoms_per_side: 15,
            d_s_factor: 1.0,
            d_m_factor: 1.0,
            d_l_factor: 1.2,
            height: 3.0,
            ue_center: (3.0, 3.0),
            ue_radius: 3.0,
            amplitude: AmplitudeModel::default(),
            amplitude_kind: AmplitudeKind::Coupled,
            optimizer: OptimizerConfig {
                decay: 0.98,
                max_iters: 400,
                ..OptimizerConfig::default()
            },
            p_t_w: dbm_to_watts(5.0),
            noise_w: dbm_to_watts(-120.0),
            alpha: 2.8,
            trials: 100,
            seed: 1,
            gain_mode: GainMode::Physical,
            schemes: vec![Scheme::Proposed, Scheme::Codebook, Scheme::Random, Scheme::ZfOracle],
            layer_list: (1..=12).collect(),
            user_list: vec![2, 4, 6],
            out_dir: PathBuf::from("results"),
            power_policy: PowerPolicy::WaterFilling,
            wf_rounds: 100,
            wf_tol: 1e-8,
            far_reference: 150.0,
            p_t_compare_w: dbm_to_watts(-40.0),
            heatmap_grid: GridSpec {
                x_min: -2.5,
                x_max: 2.5,
                nx: 50,
                y_min: 0.0,
                y_max: 10.0,
                ny: 100,
            },
            energy_mode: EnergyMode::Incoherent,
            heatmap_layers: vec![1, 2, 4],
            workers: 0,
        };
        match profile {
            Profile::Paper => base,
            Profile::Desk => Self {
                layers: 6,
                atoms_per_side: 7,
                trials: 20,
                layer_list: (1..=6).collect(),
                ..base
            },
        }
    }

    pub fn p_t_watts(&self) -> f64 {
        self.p_t_w
    }

    pub fn noise_watts(&self) -> f64 {
        self.noise_w
    }

    pub fn compare_p_t_watts(&self) -> f64 {
        self.p_t_compare_w
    }

    pub fn set_p_t_dbm(&mut self, dbm: f64) {
        self.p_t_w = dbm_to_watts(dbm);
    }

    pub fn set_noise_dbm(&mut self, dbm: f64) {
        self.noise_w = dbm_to_watts(dbm);
    }

    pub fn set_compare_p_t_dbm(&mut self, dbm: f64) {
        self.p_t_compare_w = dbm_to_watts(dbm);
    }

    pub fn atoms(&self) -> usize {
        self.atoms_per_side * self.atoms_per_side
    }

    pub fn amplitude_mode(&self) -> AmplitudeMode<f64> {
        match self.amplitude_kind {
            AmplitudeKind::Coupled => AmplitudeMode::Coupled(self.amplitude),
            AmplitudeKind::Ideal => AmplitudeMode::Ideal,
        }
    }

    /// Scene parameters for `users` users and `layers` layers. With the
    /// configured user count the BS grid is `bs_rows x bs_cols`; otherwise
    /// `S = K` antennas are laid out on the most square grid.
    pub fn scene(&self, users: usize, layers: usize) -> SceneConfig<f64> {
        let lambda = self.wavelength;
        let base = SceneConfig {
            wavelength: lambda,
            antennas: self.bs_rows * self.bs_cols,
            bs_cols: self.bs_cols,
            layers,
            atoms: self.atoms(),
            users,
            antenna_spacing: self.d_s_factor * lambda,
            atom_spacing: self.d_m_factor * lambda,
            layer_spacing: self.d_l_factor * lambda,
            height: self.height,
            ue_center: self.ue_center,
            ue_radius: self.ue_radius,
        };
        if users == self.bs_rows * self.bs_cols {
            base
        } else {
            base.with_users(users)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) {
            return Err(invalid("wavelength_m", "must be positive"));
        }
        if self.bs_rows == 0 || self.bs_cols == 0 {
            return Err(invalid("bs_rows/bs_cols", "must be at least 1"));
        }
        if self.users == 0 || self.layers == 0 || self.atoms_per_side == 0 {
            return Err(invalid("users/layers/atoms_per_side", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "at least one scheme required"));
        }
        if self.layer_list.contains(&0) || self.user_list.contains(&0) {
            return Err(invalid("layer_list/user_list", "entries must be at least 1"));
        }
        if self.wf_rounds == 0 {
            return Err(invalid("wf_rounds", "must be at least 1"));
        }
        AmplitudeModel::new(self.amplitude.a_min, self.amplitude.offset, self.amplitude.iota)?;
        self.optimizer.validate()
    }

    /// Reads a config file on top of `self`.
    pub fn load(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)?;
        Ok(self)
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are
    /// ignored; unknown keys are an error.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|reason| Error::Config {
                line: i + 1,
                reason,
            })?;
        }
        self.validate()
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| num(key, s.trim()))
                .collect()
        }
        match key {
            "wavelength_m" => self.wavelength = num(key, value)?,
            "freq_hz" => {
                self.freq_hz = num(key, value)?;
                self.wavelength = SPEED_OF_LIGHT / self.freq_hz;
            }
            "bs_rows" => self.bs_rows = num(key, value)?,
            "bs_cols" => self.bs_cols = num(key, value)?,
            "users" => self.users = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "atoms_per_side" => self.atoms_per_side = num(key, value)?,
            "d_s_factor" => self.d_s_factor = num(key, value)?,
            "d_m_factor" => self.d_m_factor = num(key, value)?,
            "d_l_factor" => self.d_l_factor = num(key, value)?,
            "height_m" => self.height = num(key, value)?,
            "ue_center_x" => self.ue_center.0 = num(key, value)?,
            "ue_center_y" => self.ue_center.1 = num(key, value)?,
            "ue_radius_m" => self.ue_radius = num(key, value)?,
            "a_min" => self.amplitude.a_min = num(key, value)?,
            "theta_offset_rad" => self.amplitude.offset = num(key, value)?,
            "iota" => self.amplitude.iota = num(key, value)?,
            "eta0" => self.optimizer.learning_rate = num(key, value)?,
            "rho" => self.optimizer.decay = num(key, value)?,
            "max_iters" => self.optimizer.max_iters = num(key, value)?,
            "tolerance" => self.optimizer.tolerance = num(key, value)?,
            "codebook_size" => self.optimizer.codebook_size = num(key, value)?,
            "p_t_dbm" => self.set_p_t_dbm(num(key, value)?),
            "noise_dbm" => self.set_noise_dbm(num(key, value)?),
            "compare_p_t_dbm" => self.set_compare_p_t_dbm(num(key, value)?),
            "alpha" => self.alpha = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "gain_mode" => {
                self.gain_mode = match value {
                    "physical" => GainMode::Physical,
                    "normalized" => GainMode::Normalized,
                    _ => return Err(format!("gain_mode must be physical or normalized, got `{value}`")),
                }
            }
            "amplitude_mode" => {
                self.amplitude_kind = match value {
                    "coupled" => AmplitudeKind::Coupled,
                    "ideal" => AmplitudeKind::Ideal,
                    _ => return Err(format!("amplitude_mode must be coupled or ideal, got `{value}`")),
                }
            }
            "power" => {
                self.power_policy = match value {
                    "waterfilling" => PowerPolicy::WaterFilling,
                    "uniform" => PowerPolicy::Uniform,
                    _ => return Err(format!("power must be waterfilling or uniform, got `{value}`")),
                }
            }
            "energy_mode" => {
                self.energy_mode = match value {
                    "incoherent" => EnergyMode::Incoherent,
                    "coherent" => EnergyMode::Coherent,
                    _ => return Err(format!("energy_mode must be incoherent or coherent, got `{value}`")),
                }
            }
            "schemes" => self.schemes = list(key, value)?,
            "layer_list" => self.layer_list = list(key, value)?,
            "user_list" => self.user_list = list(key, value)?,
            "heatmap_layers" => self.heatmap_layers = list(key, value)?,
            "heatmap_nx" => self.heatmap_grid.nx = num(key, value)?,
            "heatmap_ny" => self.heatmap_grid.ny = num(key, value)?,
            "far_reference_m" => self.far_reference = num(key, value)?,
            "wf_rounds" => self.wf_rounds = num(key, value)?,
            "wf_tol" => self.wf_tol = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}
