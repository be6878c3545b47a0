//! Phase optimisation: fit `H^H G` to the zero-forcing target `Λ` by
//! normalised gradient descent over every meta-atom phase.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ZfTarget;
use crate::error::{dims, invalid, Error, Result};
use crate::metasurface::{AmplitudeMode, SimState};
use crate::propagation::{scale_rows, PropagationSet};
use crate::scalar::{frob2, lit, CMatrix, Cplx, Real};

/// Knobs of the descent loop.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig<T: Real> {
    /// Initial learning rate `η₀`.
    pub learning_rate: T,
    /// Per-iteration decay `ρ` of the learning rate.
    pub decay: T,
    pub max_iters: usize,
    /// Stop once `|ϖ_t − ϖ_{t−1}|` stays below this for [`STOP_PATIENCE`] steps.
    pub tolerance: T,
    /// Number of random candidates `T` screened for the starting point.
    pub codebook_size: usize,
    pub seed: u64,
    /// Layers whose largest gradient magnitude is below this are not rescaled.
    pub grad_floor: T,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: lit(0.99),
            decay: lit(0.9),
            max_iters: 200,
            tolerance: lit(1e-6),
            codebook_size: 200,
            seed: 0,
            grad_floor: lit(1e-12),
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = T::zero()..T::one();
        if !unit.contains(&self.learning_rate) || self.learning_rate == T::zero() {
            return Err(invalid("eta0", "must lie in (0, 1)"));
        }
        if !unit.contains(&self.decay) || self.decay == T::zero() {
            return Err(invalid("rho", "must lie in (0, 1)"));
        }
        if self.codebook_size == 0 {
            return Err(invalid("codebook_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one optimisation run.
#[derive(Debug, Clone)]
pub struct OptimizerReport<T: Real> {
    /// `ϖ` after initialisation followed by one entry per iteration.
    pub trace: Vec<T>,
    pub best_nmse: T,
    pub best_state: SimState<T>,
    pub iterations: usize,
    pub initial_nmse: T,
    pub elapsed: Duration,
}

/// `ϖ = ‖Q − Λ‖_F^2 / τ`.
pub fn nmse<T: Real>(q: &CMatrix<T>, target: &ZfTarget<T>) -> Result<T> {
    if !(target.tau > T::zero()) {
        return Err(Error::ZeroTarget);
    }
    if q.shape() != target.lambda.shape() {
        return Err(dims(
            "nmse",
            format!("{:?}", target.lambda.shape()),
            format!("{:?}", q.shape()),
        ));
    }
    Ok(frob2(&(q - &target.lambda)) / target.tau)
}

/// Fixed data of the fitting problem: propagation, user channel and target.
#[derive(Debug, Clone, Copy)]
pub struct FitProblem<'a, T: Real> {
    pub prop: &'a PropagationSet<T>,
    /// User channel `H`, `M x K`.
    pub h: &'a CMatrix<T>,
    pub target: &'a ZfTarget<T>,
}

/// Cached partial products of one state.
///
/// `inputs[l]` is the `M x K` field arriving at layer `l` before its
/// diagonal is applied; `outputs[l]` is `H^H Φ^L W^L ⋯ Φ^{l+1} W^{l+1}`
/// (`K x M`), i.e. what layer `l`'s output sees on the way to the users.
#[derive(Debug, Clone)]
pub struct Partials<T: Real> {
    pub inputs: Vec<CMatrix<T>>,
    pub outputs: Vec<CMatrix<T>>,
    pub q: CMatrix<T>,
}

impl<'a, T: Real> FitProblem<'a, T> {
    pub fn new(prop: &'a PropagationSet<T>, h: &'a CMatrix<T>, target: &'a ZfTarget<T>) -> Result<Self> {
        if h.nrows() != prop.atoms() {
            return Err(dims("channel rows", prop.atoms(), h.nrows()));
        }
        if h.ncols() != prop.antennas() {
            return Err(dims("users vs antennas", prop.antennas(), h.ncols()));
        }
        if target.lambda.shape() != (h.ncols(), h.ncols()) {
            return Err(dims(
                "target",
                format!("{0}x{0}", h.ncols()),
                format!("{:?}", target.lambda.shape()),
            ));
        }
        Ok(Self { prop, h, target })
    }

    fn check_state(&self, state: &SimState<T>) -> Result<()> {
        if state.num_layers() != self.prop.num_layers() || state.atoms_per_layer() != self.prop.atoms() {
            return Err(dims(
                "state",
                format!("{}x{}", self.prop.num_layers(), self.prop.atoms()),
                format!("{}x{}", state.num_layers(), state.atoms_per_layer()),
            ));
        }
        Ok(())
    }

    /// `ϖ` of a state via a single forward pass.
    pub fn objective(&self, state: &SimState<T>) -> Result<T> {
        let g = crate::propagation::sim_response(state, self.prop)?;
        nmse(&(self.h.adjoint() * g), self.target)
    }

    pub fn partials(&self, state: &SimState<T>) -> Result<Partials<T>> {
        self.check_state(state)?;
        let coeffs = state.coefficients();
        let layers = coeffs.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut field = self.prop.input().clone();
        for l in 0..layers {
            if l > 0 {
                field = self.prop.feeding(l) * &field;
            }
            inputs.push(field.clone());
            scale_rows(&mut field, &coeffs[l]);
        }
        let q = self.h.adjoint() * &field;

        let mut outputs = vec![CMatrix::zeros(0, 0); layers];
        let mut back = self.h.adjoint();
        for l in (0..layers).rev() {
            if l + 1 < layers {
                let mut scaled = outputs[l + 1].clone();
                for (mut col, s) in scaled.column_iter_mut().zip(coeffs[l + 1].iter()) {
                    col *= *s;
                }
                back = scaled * self.prop.feeding(l + 1);
            }
            outputs[l] = back.clone();
        }
        Ok(Partials { inputs, outputs, q })
    }

    /// `ϖ` and its exact gradient with respect to every phase (`L x M`).
    pub fn value_and_gradient(&self, state: &SimState<T>) -> Result<(T, DMatrix<T>)> {
        let p = self.partials(state)?;
        let value = nmse(&p.q, self.target)?;
        let err = &p.q - &self.target.lambda;
        let k = err.nrows();
        let m = state.atoms_per_layer();
        let scale = T::two() / self.target.tau;
        let mut grad = DMatrix::zeros(state.num_layers(), m);
        for l in 0..state.num_layers() {
            let dphi = state.layer_coefficient_derivatives(l)?;
            let input = &p.inputs[l];
            let output = &p.outputs[l];
            for a in 0..m {
                // Σ_{k,k̃} conj(E[k,k̃]) · outputs[k,a] · inputs[a,k̃]
                let mut acc = Cplx::new(T::zero(), T::zero());
                for kk in 0..k {
                    let mut inner = Cplx::new(T::zero(), T::zero());
                    for kt in 0..k {
                        inner += err[(kk, kt)].conj() * input[(a, kt)];
                    }
                    acc += output[(kk, a)] * inner;
                }
                grad[(l, a)] = scale * (dphi[a] * acc).re;
            }
        }
        Ok((value, grad))
    }
}

/// Cascaded channel `v[k, k̃]` through atom `atom` of layer `layer`, with that
/// atom's own coefficient left out.
pub fn cascaded_channel<T: Real>(
    state: &SimState<T>,
    prop: &PropagationSet<T>,
    h: &CMatrix<T>,
    layer: usize,
    atom: usize,
) -> Result<CMatrix<T>> {
    if layer >= state.num_layers() {
        return Err(Error::IndexOutOfRange {
            what: "layer",
            index: layer,
            range: format!("0..{}", state.num_layers()),
        });
    }
    if atom >= state.atoms_per_layer() {
        return Err(Error::IndexOutOfRange {
            what: "atom",
            index: atom,
            range: format!("0..{}", state.atoms_per_layer()),
        });
    }
    let k = h.ncols();
    let target = ZfTarget {
        w_zf: CMatrix::zeros(h.nrows(), k),
        lambda: CMatrix::zeros(k, k),
        tau: T::one(),
    };
    let problem = FitProblem::new(prop, h, &target)?;
    let p = problem.partials(state)?;
    let out = p.outputs[layer].column(atom);
    let inp = p.inputs[layer].row(atom);
    Ok(out * inp)
}

/// Free-function form of [`FitProblem::value_and_gradient`], returning only
/// the gradient.
pub fn gradient<T: Real>(
    state: &SimState<T>,
    prop: &PropagationSet<T>,
    target: &ZfTarget<T>,
    h: &CMatrix<T>,
) -> Result<DMatrix<T>> {
    FitProblem::new(prop, h, target)?
        .value_and_gradient(state)
        .map(|(_, g)| g)
}

/// Rescales each layer's row so its largest magnitude is `π`. Rows whose
/// largest magnitude is below `floor` are left as they are.
pub fn normalize_gradient<T: Real>(grad: &DMatrix<T>, floor: T) -> DMatrix<T> {
    let mut out = grad.clone();
    for mut row in out.row_iter_mut() {
        let mu = row.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        if mu >= floor && mu > T::zero() {
            row *= T::pi() / mu;
        }
    }
    out
}

/// Best of `size` random-phase candidates drawn from `rng`, with its `ϖ`.
pub fn codebook_init<T: Real, R: Rng + ?Sized>(
    size: usize,
    rng: &mut R,
    problem: &FitProblem<'_, T>,
    mode: AmplitudeMode<T>,
) -> Result<(SimState<T>, T)> {
    if size == 0 {
        return Err(invalid("codebook_size", "must be at least 1"));
    }
    let (l, m) = (problem.prop.num_layers(), problem.prop.atoms());
    let mut best: Option<(SimState<T>, T)> = None;
    for _ in 0..size {
        let cand = SimState::random(l, m, mode, rng);
        let v = problem.objective(&cand)?;
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((cand, v));
        }
    }
    Ok(best.expect("size >= 1"))
}

/// Consecutive small changes needed before the descent stops. While the
/// step is still large the objective oscillates, and a single near-repeat
/// value is a coincidence, not convergence.
pub const STOP_PATIENCE: usize = 3;

/// Gradient descent from `init`: normalise, step, re-wrap, decay `η`.
/// Returns the best state seen.
pub fn optimize_from<T: Real>(
    config: &OptimizerConfig<T>,
    problem: &FitProblem<'_, T>,
    init: SimState<T>,
) -> Result<OptimizerReport<T>> {
    config.validate()?;
    let start = Instant::now();
    let mut state = init;
    let (mut current, mut grad) = problem.value_and_gradient(&state)?;
    let initial_nmse = current;
    let mut trace = vec![current];
    let mut best_nmse = current;
    let mut best_state = state.clone();
    let mut eta = config.learning_rate;
    let mut iterations = 0;
    let mut quiet = 0;
    while iterations < config.max_iters && current > T::zero() {
        let step = normalize_gradient(&grad, config.grad_floor) * eta;
        state.step(&step);
        eta *= config.decay;
        let (next, next_grad) = problem.value_and_gradient(&state)?;
        iterations += 1;
        trace.push(next);
        if next < best_nmse {
            best_nmse = next;
            best_state = state.clone();
        }
        let change = (next - current).abs();
        current = next;
        grad = next_grad;
        quiet = if change < config.tolerance { quiet + 1 } else { 0 };
        if quiet >= STOP_PATIENCE {
            break;
        }
    }
    Ok(OptimizerReport {
        trace,
        best_nmse,
        best_state,
        iterations,
        initial_nmse,
        elapsed: start.elapsed(),
    })
}

/// Codebook initialisation followed by [`optimize_from`].
pub fn optimize<T: Real>(
    config: &OptimizerConfig<T>,
    problem: &FitProblem<'_, T>,
    mode: AmplitudeMode<T>,
) -> Result<OptimizerReport<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (init, _) = codebook_init(config.codebook_size, &mut rng, problem, mode)?;
    optimize_from(config, problem, init)
}

/// Central finite-difference gradient of `ϖ`, one phase at a time.
pub fn finite_difference_gradient<T: Real>(
    problem: &FitProblem<'_, T>,
    state: &SimState<T>,
    step: T,
) -> Result<DMatrix<T>> {
    let mut grad = DMatrix::zeros(state.num_layers(), state.atoms_per_layer());
    for l in 0..state.num_layers() {
        for m in 0..state.atoms_per_layer() {
            let theta = state.phases()[(l, m)];
            let mut plus = state.clone();
            plus.set_phase(l, m, theta + step);
            let mut minus = state.clone();
            minus.set_phase(l, m, theta - step);
            grad[(l, m)] =
                (problem.objective(&plus)? - problem.objective(&minus)?) / (T::two() * step);
        }
    }
    Ok(grad)
}

/// Largest entrywise relative error between two gradients. Each entry is
/// measured against `max(|reference|, 1e-3 · max|reference|)` so entries that
/// are numerically zero do not dominate.
pub fn max_relative_error<T: Real>(analytic: &DMatrix<T>, reference: &DMatrix<T>) -> T {
    let peak = reference.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let floor = lit::<T>(1e-3) * peak;
    analytic
        .iter()
        .zip(reference.iter())
        .map(|(a, r)| {
            let denom = r.abs().max(floor);
            if denom == T::zero() {
                (*a - *r).abs()
            } else {
                (*a - *r).abs() / denom
            }
        })
        .fold(T::zero(), |a, b| a.max(b))
}

/// Real-operation counts of the descent loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopCount {
    /// `4 I [(2L − 2) M^3 + M L K^2]`.
    pub total: u128,
    /// One forward pass, `4[(2L − 2) M^3 + 2K^2 (M + 1) + M^2 S]`.
    pub forward: u128,
    /// `4 M L K^2`.
    pub gradient: u128,
    /// `4 M L`.
    pub regularization: u128,
    /// `M L`.
    pub update: u128,
    pub learning_rate: u128,
}

pub fn gda_flops(iterations: u64, layers: u64, atoms: u64, users: u64, antennas: u64) -> FlopCount {
    let (i, l, m, k, s) = (
        iterations as u128,
        layers as u128,
        atoms as u128,
        users as u128,
        antennas as u128,
    );
    let cube = (2 * l).saturating_sub(2) * m * m * m;
    FlopCount {
        total: 4 * i * (cube + m * l * k * k),
        forward: 4 * (cube + 2 * k * k * (m + 1) + m * m * s),
        gradient: 4 * m * l * k * k,
        regularization: 4 * m * l,
        update: m * l,
        learning_rate: 1,
    }
}
