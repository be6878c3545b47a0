//! One Monte Carlo trial: scene draw, channel, every requested scheme,
//! power allocation and rate metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, PowerPolicy, Scheme};
use crate::allocation::{rate_report, water_filling};
use crate::channel::{farfield_channel, nearfield_channel, zf_target, GainMode};
use crate::error::Result;
use crate::geometry::{build_scene, SceneGeometry};
use crate::metasurface::SimState;
use crate::optimizer::{codebook_init, optimize_from, FitProblem};
use crate::propagation::{build_propagation, sim_response, PropagationSet};
use crate::scalar::CMatrix;

/// Random streams carved out of one trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scene = 0,
    Codebook = 1,
    Random = 2,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index`: `splitmix64(master ^ splitmix64(index))`.
/// Depends only on the pair, so adding trials never changes earlier ones.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Independent ChaCha stream `stream` of a trial seed.
pub fn trial_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Wavefront model of the user channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelModel {
    NearField,
    /// Planar wavefront from virtual users at the given distance.
    FarField { reference: f64 },
}

/// What a trial simulates, beyond the shared config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub users: usize,
    pub layers: usize,
    pub channel: ChannelModel,
    pub gain_mode: GainMode,
    /// Transmit budget in watts.
    pub budget: f64,
}

impl TrialSpec {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            users: config.users,
            layers: config.layers,
            channel: ChannelModel::NearField,
            gain_mode: config.gain_mode,
            budget: config.p_t_watts(),
        }
    }
}

/// Outcome of one scheme in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub scheme: Scheme,
    pub users: usize,
    pub layers: usize,
    pub atoms: usize,
    /// Final (best) fitting NMSE.
    pub nmse: f64,
    pub iterations: usize,
    pub sum_rate: f64,
    pub sinr: Vec<f64>,
    pub powers: Vec<f64>,
    /// NMSE after initialisation and after each descent step; empty for
    /// schemes without a descent.
    pub trace: Vec<f64>,
    /// Set when the trial failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl TrialResult {
    fn failed(trial: usize, scheme: Scheme, spec: &TrialSpec, atoms: usize, reason: String) -> Self {
        Self {
            trial,
            scheme,
            users: spec.users,
            layers: spec.layers,
            atoms,
            nmse: f64::NAN,
            iterations: 0,
            sum_rate: f64::NAN,
            sinr: Vec::new(),
            powers: Vec::new(),
            trace: Vec::new(),
            error: Some(reason),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn min_sinr_db(&self) -> f64 {
        self.sinr.iter().copied().fold(f64::NAN, f64::min).log10() * 10.0
    }

    pub fn max_sinr_db(&self) -> f64 {
        self.sinr.iter().copied().fold(f64::NAN, f64::max).log10() * 10.0
    }
}

/// Trial `index` at the config's default size, near field.
pub fn run_trial(config: &ExperimentConfig, index: usize) -> Vec<TrialResult> {
    run_trial_with(config, &TrialSpec::from_config(config), index)
}

/// Trial `index` under `spec`. Never fails: errors become one marked
/// result per requested scheme.
pub fn run_trial_with(config: &ExperimentConfig, spec: &TrialSpec, index: usize) -> Vec<TrialResult> {
    let seed = trial_seed(config.seed, index as u64);
    match try_trial(config, spec, index, seed) {
        Ok(rows) => rows,
        Err(e) => config
            .schemes
            .iter()
            .map(|&s| TrialResult::failed(index, s, spec, config.atoms(), e.to_string()))
            .collect(),
    }
}

/// The scene of trial `index`, as drawn by [`run_trial_with`].
pub fn trial_scene(config: &ExperimentConfig, spec: &TrialSpec, index: usize) -> Result<SceneGeometry<f64>> {
    let seed = trial_seed(config.seed, index as u64);
    build_scene(&config.scene(spec.users, spec.layers), &mut trial_rng(seed, Stream::Scene))
}

/// A configuration found for one scheme, before power allocation.
struct Precoder {
    scheme: Scheme,
    g: CMatrix<f64>,
    nmse: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn try_trial(config: &ExperimentConfig, spec: &TrialSpec, index: usize, seed: u64) -> Result<Vec<TrialResult>> {
    let geometry = trial_scene(config, spec, index)?;
    let prop = build_propagation(&geometry)?;
    let channel = match spec.channel {
        ChannelModel::NearField => nearfield_channel(&geometry, spec.gain_mode, config.alpha)?,
        ChannelModel::FarField { reference } => {
            farfield_channel(&geometry, reference, spec.gain_mode, config.alpha)?
        }
    };
    // The fit always targets unit-norm channels: with path loss in H the
    // target Λ = I is out of reach of a passive stack.
    let h_fit = channel.normalized().h;
    let precoders = fit_schemes(config, &prop, &h_fit, seed)?;

    let noise = vec![config.noise_watts(); spec.users];
    let mut rows = Vec::with_capacity(precoders.len());
    for p in precoders {
        let q = channel.h.adjoint() * &p.g;
        let powers = match config.power_policy {
            PowerPolicy::WaterFilling => {
                water_filling(&q, &noise, spec.budget, config.wf_rounds, config.wf_tol)?.powers
            }
            PowerPolicy::Uniform => vec![spec.budget / spec.users as f64; spec.users],
        };
        let report = rate_report(&q, &powers, &noise)?;
        rows.push(TrialResult {
            trial: index,
            scheme: p.scheme,
            users: spec.users,
            layers: spec.layers,
            atoms: prop.atoms(),
            nmse: p.nmse,
            iterations: p.iterations,
            sum_rate: report.sum_rate,
            sinr: report.sinr,
            powers,
            trace: p.trace,
            error: None,
        });
    }
    Ok(rows)
}

/// Runs every requested scheme against the unit-norm channel `h`.
/// Proposed and codebook share the same codebook start.
fn fit_schemes(
    config: &ExperimentConfig,
    prop: &PropagationSet<f64>,
    h: &CMatrix<f64>,
    seed: u64,
) -> Result<Vec<Precoder>> {
    let target = zf_target(h)?;
    let problem = FitProblem::new(prop, h, &target)?;
    let mode = config.amplitude_mode();
    let needs_codebook = config
        .schemes
        .iter()
        .any(|s| matches!(s, Scheme::Proposed | Scheme::Codebook));
    let start = if needs_codebook {
        let mut rng = trial_rng(seed, Stream::Codebook);
        Some(codebook_init(config.optimizer.codebook_size, &mut rng, &problem, mode)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(config.schemes.len());
    for &scheme in &config.schemes {
        let p = match scheme {
            Scheme::Proposed => {
                let (init, _) = start.clone().expect("codebook computed");
                let report = optimize_from(&config.optimizer, &problem, init)?;
                Precoder {
                    scheme,
                    g: sim_response(&report.best_state, prop)?,
                    nmse: report.best_nmse,
                    iterations: report.iterations,
                    trace: report.trace,
                }
            }
            Scheme::Codebook => {
                let (state, nmse) = start.clone().expect("codebook computed");
                Precoder {
                    scheme,
                    g: sim_response(&state, prop)?,
                    nmse,
                    iterations: 0,
                    trace: Vec::new(),
                }
            }
            Scheme::Random => {
                let mut rng = trial_rng(seed, Stream::Random);
                let state = SimState::random(prop.num_layers(), prop.atoms(), mode, &mut rng);
                Precoder {
                    scheme,
                    nmse: problem.objective(&state)?,
                    g: sim_response(&state, prop)?,
                    iterations: 0,
                    trace: Vec::new(),
                }
            }
            Scheme::ZfOracle => Precoder {
                scheme,
                g: target.w_zf.clone(),
                nmse: 0.0,
                iterations: 0,
                trace: Vec::new(),
            },
        };
        out.push(p);
    }
    Ok(out)
}
