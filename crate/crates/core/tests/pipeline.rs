use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wavefocus::channel::{nearfield_channel, zf_target, GainMode};
use wavefocus::geometry::{build_scene, SceneConfig};
use wavefocus::harness::{run_trial, sweep_layers, ExperimentConfig, Profile};
use wavefocus::metasurface::{AmplitudeMode, AmplitudeModel, SimState};
use wavefocus::optimizer::{nmse, FitProblem};
use wavefocus::propagation::{build_propagation, sim_response};

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::profile(Profile::Desk);
    c.atoms_per_side = 3;
    c.layers = 2;
    c.layer_list = vec![2];
    c.trials = 6;
    c.optimizer.codebook_size = 4;
    c.optimizer.max_iters = 15;
    c
}

#[test]
fn a_trial_alone_matches_the_same_trial_inside_a_sweep() {
    let c = small();
    let table = sweep_layers(&c).unwrap();
    let alone = run_trial(&c, 4);
    let inside: Vec<_> = table.rows.iter().filter(|r| r.trial == 4).cloned().collect();
    assert_eq!(alone, inside);
}

#[test]
fn more_trials_keep_earlier_trials() {
    let mut c = small();
    let few = sweep_layers(&c).unwrap().rows;
    c.trials = 9;
    let many = sweep_layers(&c).unwrap().rows;
    assert_eq!(few[..], many[..few.len()]);
}

#[test]
fn single_precision_tracks_double_precision() {
    let cfg64 = SceneConfig::<f64> { atoms: 16, layers: 3, ..SceneConfig::default() };
    let cfg32 = SceneConfig::<f32> { atoms: 16, layers: 3, ..SceneConfig::default() };
    let g64 = build_scene(&cfg64, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let g32 = build_scene(&cfg32, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();

    let s64 = SimState::random(3, 16, AmplitudeMode::Coupled(AmplitudeModel::<f64>::default()), &mut ChaCha8Rng::seed_from_u64(5));
    let s32 = SimState::new(s64.phases().map(|p| p as f32), AmplitudeMode::Coupled(AmplitudeModel::<f32>::default()));

    let value = |g: &wavefocus::SceneGeometry, s: &wavefocus::SimState| {
        let prop = build_propagation(g).unwrap();
        let h = nearfield_channel(g, GainMode::Normalized, 2.8).unwrap().h;
        let t = zf_target(&h).unwrap();
        nmse(&(h.adjoint() * sim_response(s, &prop).unwrap()), &t).unwrap()
    };
    let v64 = value(&g64, &s64);

    let prop = build_propagation(&g32).unwrap();
    let h = nearfield_channel(&g32, GainMode::Normalized, 2.8f32).unwrap().h;
    let t = zf_target(&h).unwrap();
    let v32 = FitProblem::new(&prop, &h, &t).unwrap().objective(&s32).unwrap();

    assert!(((v32 as f64) - v64).abs() < 1e-3 * v64.max(1.0), "{v32} vs {v64}");
}
