//! The four experiments and the gradient check, built on [`run_trial_with`].

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Scheme};
use super::trial::{run_trial_with, trial_scene, trial_seed, trial_rng, ChannelModel, Stream, TrialResult, TrialSpec};
use crate::allocation::{focusing_dominance, heatmap, Heatmap};
use crate::channel::{nearfield_channel, zf_target, GainMode};
use crate::error::{invalid, Result};
use crate::geometry::{build_scene, SceneConfig, SceneGeometry};
use crate::metasurface::{AmplitudeMode, SimState};
use crate::optimizer::{codebook_init, finite_difference_gradient, max_relative_error, optimize_from, FitProblem};
use crate::propagation::{build_propagation, sim_response};
use crate::scalar::CMatrix;

/// Mean and sample standard deviation over one `(scheme, K, L)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub users: usize,
    pub layers: usize,
    pub atoms: usize,
    pub completed: usize,
    pub failed: usize,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub mean_nmse: f64,
    pub std_nmse: f64,
    pub mean_iterations: f64,
}

/// Per-trial rows plus their per-cell aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

impl SweepTable {
    pub fn cell(&self, scheme: Scheme, users: usize, layers: usize) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.scheme == scheme && r.users == users && r.layers == layers)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates rows (already ordered by cell, then trial) cell by cell, in
/// order of first appearance.
pub fn summarize(rows: &[TrialResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, usize, Scheme)> = Vec::new();
    for r in rows {
        let k = (r.users, r.layers, r.scheme);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(users, layers, scheme)| {
            let cell: Vec<&TrialResult> = rows
                .iter()
                .filter(|r| r.users == users && r.layers == layers && r.scheme == scheme)
                .collect();
            let ok: Vec<&&TrialResult> = cell.iter().filter(|r| r.is_ok()).collect();
            let rates: Vec<f64> = ok.iter().map(|r| r.sum_rate).collect();
            let nmse: Vec<f64> = ok.iter().map(|r| r.nmse).collect();
            let (mean_sum_rate, std_sum_rate) = mean_std(&rates);
            let (mean_nmse, std_nmse) = mean_std(&nmse);
            let iters: Vec<f64> = ok.iter().map(|r| r.iterations as f64).collect();
            SummaryRow {
                scheme,
                users,
                layers,
                atoms: cell[0].atoms,
                completed: ok.len(),
                failed: cell.len() - ok.len(),
                mean_sum_rate,
                std_sum_rate,
                mean_nmse,
                std_nmse,
                mean_iterations: mean_std(&iters).0,
            }
        })
        .collect()
}

/// Runs `config.trials` trials for every spec. Trials run in parallel; the
/// output is ordered by spec, then trial index, then scheme.
pub fn run_grid(config: &ExperimentConfig, specs: &[TrialSpec]) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..config.trials).map(move |t| (s, t)))
        .collect();
    let work = || -> Vec<TrialResult> {
        jobs.par_iter()
            .map(|&(s, t)| run_trial_with(config, &specs[s], t))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    };
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?;
        Ok(pool.install(work))
    } else {
        Ok(work())
    }
}

/// Sum rate and NMSE against the number of layers, `K` fixed.
pub fn sweep_layers(config: &ExperimentConfig) -> Result<SweepTable> {
    let base = TrialSpec::from_config(config);
    let specs: Vec<TrialSpec> = config
        .layer_list
        .iter()
        .map(|&layers| TrialSpec { layers, ..base })
        .collect();
    let rows = run_grid(config, &specs)?;
    Ok(SweepTable {
        summary: summarize(&rows),
        rows,
    })
}

/// Sum rate and NMSE against the number of users, with `S = K` and `L`
/// fixed at `config.layers`.
pub fn sweep_users(config: &ExperimentConfig) -> Result<SweepTable> {
    let base = TrialSpec::from_config(config);
    let specs: Vec<TrialSpec> = config
        .user_list
        .iter()
        .map(|&users| TrialSpec { users, ..base })
        .collect();
    let rows = run_grid(config, &specs)?;
    Ok(SweepTable {
        summary: summarize(&rows),
        rows,
    })
}

/// Paired near-field / far-field means for one scheme and layer count.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldComparison {
    pub scheme: Scheme,
    pub layers: usize,
    pub near_sum_rate: f64,
    pub far_sum_rate: f64,
    /// `near / far`.
    pub ratio: f64,
    pub near_nmse: f64,
    pub far_nmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub near: Vec<TrialResult>,
    pub far: Vec<TrialResult>,
    pub comparison: Vec<FieldComparison>,
}

/// Near- against far-field channels with the same seeds, unit-norm gains and
/// the comparison transmit power, across `config.layer_list`.
pub fn compare_field(config: &ExperimentConfig) -> Result<FieldTable> {
    let base = TrialSpec {
        gain_mode: GainMode::Normalized,
        budget: config.compare_p_t_watts(),
        ..TrialSpec::from_config(config)
    };
    let arm = |channel| -> Vec<TrialSpec> {
        config
            .layer_list
            .iter()
            .map(|&layers| TrialSpec { layers, channel, ..base })
            .collect()
    };
    let near = run_grid(config, &arm(ChannelModel::NearField))?;
    let far = run_grid(
        config,
        &arm(ChannelModel::FarField {
            reference: config.far_reference,
        }),
    )?;
    let (ns, fs) = (summarize(&near), summarize(&far));
    let comparison = ns
        .iter()
        .zip(&fs)
        .map(|(n, f)| FieldComparison {
            scheme: n.scheme,
            layers: n.layers,
            near_sum_rate: n.mean_sum_rate,
            far_sum_rate: f.mean_sum_rate,
            ratio: n.mean_sum_rate / f.mean_sum_rate,
            near_nmse: n.mean_nmse,
            far_nmse: f.mean_nmse,
        })
        .collect();
    Ok(FieldTable { near, far, comparison })
}

/// One heatmap arm: a layer count, or the fully digital reference.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapArm {
    /// `L<n>` or `zf`.
    pub name: String,
    pub layers: Option<usize>,
    pub nmse: f64,
    pub heatmap: Heatmap<f64>,
    /// Per-user self-location energy dominance.
    pub dominance: Vec<bool>,
}

/// Four users on the boresight ground line, 1.5 m apart.
pub fn focusing_layout() -> Vec<Point3<f64>> {
    (1..=4).map(|k| Point3::new(0.0, 1.5 * k as f64, 0.0)).collect()
}

fn focusing_scene(config: &ExperimentConfig, layers: usize) -> Result<SceneGeometry<f64>> {
    let users = focusing_layout();
    let spec = TrialSpec {
        users: users.len(),
        layers,
        ..TrialSpec::from_config(config)
    };
    trial_scene(config, &spec, 0)?.with_user_positions(users)
}

/// Optimises the focusing layout at each of `config.heatmap_layers` plus
/// the zero-forcing arm and samples the received energy on the grid.
pub fn emit_heatmap(config: &ExperimentConfig) -> Result<Vec<HeatmapArm>> {
    config.validate()?;
    let seed = trial_seed(config.seed, 0);
    let mut arms = Vec::new();
    for &layers in &config.heatmap_layers {
        let geometry = focusing_scene(config, layers)?;
        let (g, nmse) = optimize_scene(config, &geometry, seed)?;
        arms.push(HeatmapArm {
            name: format!("L{layers}"),
            layers: Some(layers),
            nmse,
            heatmap: heatmap(&geometry, &g, config.heatmap_grid, config.energy_mode)?,
            dominance: focusing_dominance(&geometry, &g)?,
        });
    }
    let geometry = focusing_scene(config, config.heatmap_layers.first().copied().unwrap_or(1))?;
    let h = nearfield_channel(&geometry, GainMode::Normalized, config.alpha)?.h;
    let g = zf_target(&h)?.w_zf;
    arms.push(HeatmapArm {
        name: "zf".into(),
        layers: None,
        nmse: 0.0,
        heatmap: heatmap(&geometry, &g, config.heatmap_grid, config.energy_mode)?,
        dominance: focusing_dominance(&geometry, &g)?,
    });
    Ok(arms)
}

/// Codebook start plus descent on a fixed scene; returns `G` and its NMSE.
pub fn optimize_scene(
    config: &ExperimentConfig,
    geometry: &SceneGeometry<f64>,
    seed: u64,
) -> Result<(CMatrix<f64>, f64)> {
    let prop = build_propagation(geometry)?;
    let h = nearfield_channel(geometry, GainMode::Normalized, config.alpha)?.h;
    let target = zf_target(&h)?;
    let problem = FitProblem::new(&prop, &h, &target)?;
    let mut rng = trial_rng(seed, Stream::Codebook);
    let (init, _) = codebook_init(config.optimizer.codebook_size, &mut rng, &problem, config.amplitude_mode())?;
    let report = optimize_from(&config.optimizer, &problem, init)?;
    Ok((sim_response(&report.best_state, &prop)?, report.best_nmse))
}

/// Result of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub instances: usize,
    pub max_relative_error: f64,
    /// Worst error per amplitude mode label.
    pub per_mode: Vec<(&'static str, f64)>,
}

impl GradcheckReport {
    pub fn passed(&self, threshold: f64) -> bool {
        self.max_relative_error < threshold
    }
}

/// Finite-difference step of the gradient check.
pub const FD_STEP: f64 = 1e-6;

/// Worst relative gradient error on `count` random small instances
/// (`M = 4`, `L ∈ {1, 2, 3}`, `K = S = 2`) in one amplitude mode.
/// `corrupt` scales the analytic gradient by `1 + corrupt`, a negative
/// control for the check itself.
pub fn gradcheck_instances(
    seed: u64,
    count: usize,
    mode: AmplitudeMode<f64>,
    corrupt: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempt = 0u64;
    while done < count {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, attempt));
        attempt += 1;
        let atoms = 4;
        let layers = 1 + (attempt as usize % 3);
        let cfg = SceneConfig::<f64> {
            atoms,
            layers,
            ue_radius: 1.0,
            ue_center: (0.5, 1.0),
            ..SceneConfig::default()
        }
        .with_users(2);
        let geometry = build_scene(&cfg, &mut rng)?;
        let prop = build_propagation(&geometry)?;
        let h = nearfield_channel(&geometry, GainMode::Normalized, 2.8)?.h;
        // two users drawn almost on top of each other: redraw
        let Ok(target) = zf_target(&h) else { continue };
        let problem = FitProblem::new(&prop, &h, &target)?;
        let state = SimState::random(layers, atoms, mode, &mut rng);
        let (_, analytic) = problem.value_and_gradient(&state)?;
        let analytic = analytic * (1.0 + corrupt);
        let numeric = finite_difference_gradient(&problem, &state, FD_STEP)?;
        worst = worst.max(max_relative_error(&analytic, &numeric));
        done += 1;
    }
    Ok(worst)
}

/// Gradient check in both amplitude modes.
pub fn gradcheck(config: &ExperimentConfig, instances: usize, corrupt: f64) -> Result<GradcheckReport> {
    let modes = [
        ("coupled", AmplitudeMode::Coupled(config.amplitude)),
        ("ideal", AmplitudeMode::Ideal),
    ];
    let mut per_mode = Vec::new();
    for (name, mode) in modes {
        per_mode.push((name, gradcheck_instances(config.seed, instances, mode, corrupt)?));
    }
    Ok(GradcheckReport {
        instances,
        max_relative_error: per_mode.iter().map(|(_, e)| *e).fold(0.0, f64::max),
        per_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Profile;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::profile(Profile::Desk);
        c.atoms_per_side = 3;
        c.trials = 2;
        c.optimizer.codebook_size = 4;
        c.optimizer.max_iters = 10;
        c
    }

    #[test]
    fn single_layer_single_trial_gives_one_row_per_scheme() {
        let mut c = tiny();
        c.layer_list = vec![1];
        c.trials = 1;
        let t = sweep_layers(&c).unwrap();
        assert_eq!(t.summary.len(), c.schemes.len());
        assert!(t.summary.iter().all(|r| r.layers == 1 && r.completed == 1));
    }

    #[test]
    fn rows_are_ordered_by_cell_then_trial() {
        let mut c = tiny();
        c.layer_list = vec![2, 1];
        let t = sweep_layers(&c).unwrap();
        let keys: Vec<(usize, usize)> = t.rows.iter().map(|r| (r.layers, r.trial)).collect();
        let n = c.schemes.len();
        assert_eq!(keys[0], (2, 0));
        assert_eq!(keys[n], (2, 1));
        assert_eq!(keys[2 * n], (1, 0));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut c = tiny();
        c.layer_list = vec![1, 2];
        let a = sweep_layers(&c).unwrap();
        c.workers = 1;
        let b = sweep_layers(&c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn sweep_users_enforces_square_bs() {
        let mut c = tiny();
        c.user_list = vec![1, 3];
        c.layers = 3;
        c.trials = 1;
        c.optimizer.max_iters = 200;
        let t = sweep_users(&c).unwrap();
        assert!(t.rows.iter().all(|r| r.is_ok()));
        let one = t.cell(Scheme::Proposed, 1, 3).unwrap();
        assert!(one.mean_nmse < 1e-3, "single user should be easy: {}", one.mean_nmse);
    }

    #[test]
    fn field_arms_share_user_bearings() {
        let mut c = tiny();
        c.layer_list = vec![1];
        c.trials = 1;
        let t = compare_field(&c).unwrap();
        assert_eq!(t.near.len(), t.far.len());
        assert!(t.near.iter().chain(&t.far).all(|r| r.is_ok()));
        assert_eq!(t.comparison.len(), c.schemes.len());
    }

    #[test]
    fn heatmap_arms_share_axes() {
        let mut c = tiny();
        c.heatmap_layers = vec![1, 2];
        c.heatmap_grid.nx = 5;
        c.heatmap_grid.ny = 7;
        let arms = emit_heatmap(&c).unwrap();
        let names: Vec<&str> = arms.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["L1", "L2", "zf"]);
        for a in &arms {
            assert_eq!(a.heatmap.grid, c.heatmap_grid);
            assert_eq!(a.heatmap.values.len(), 35);
        }
        assert!(arms[2].dominance.iter().all(|d| *d));
    }

    #[test]
    fn gradcheck_passes_and_negative_control_fails() {
        let c = tiny();
        assert!(gradcheck(&c, 5, 0.0).unwrap().passed(1e-5));
        assert!(!gradcheck(&c, 2, 1e-3).unwrap().passed(1e-5));
    }
}
