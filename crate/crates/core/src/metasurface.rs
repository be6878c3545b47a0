//! Meta-atom response models and the per-layer phase state.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::scalar::{cabs, carg, cis, lit, wrap_phase, CMatrix, CVector, Cplx, Real};

/// Free-space impedance in ohms.
pub const FREE_SPACE_IMPEDANCE: f64 = 376.73;

/// Equivalent RLC circuit of a varactor-loaded meta-atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaAtomCircuit<T: Real> {
    /// Varactor capacitance (F).
    pub capacitance: T,
    /// Loss resistance (Ω).
    pub resistance: T,
    /// Bottom-layer inductance `L1` (H).
    pub l_bottom: T,
    /// Top-layer inductance `L2` (H).
    pub l_top: T,
    /// Reference impedance (Ω).
    pub z0: T,
}

impl<T: Real> Default for MetaAtomCircuit<T> {
    fn default() -> Self {
        Self {
            capacitance: lit(2.35e-12),
            resistance: lit(2.5),
            l_bottom: lit(2.5e-9),
            l_top: lit(0.7e-9),
            z0: lit(FREE_SPACE_IMPEDANCE),
        }
    }
}

impl<T: Real> MetaAtomCircuit<T> {
    pub fn with_capacitance(self, capacitance: T) -> Self {
        Self {
            capacitance,
            ..self
        }
    }
}

/// Input impedance of the meta-atom circuit at frequency `freq_hz`:
/// `jωL1 (jωL2 + 1/(jωC) + R) / (jωL1 + jωL2 + 1/(jωC) + R)`.
pub fn impedance<T: Real>(circuit: &MetaAtomCircuit<T>, freq_hz: T) -> Result<Cplx<T>> {
    if !(freq_hz > T::zero()) {
        return Err(invalid("frequency", "must be positive"));
    }
    if !(circuit.capacitance > T::zero()) {
        return Err(invalid("capacitance", "must be positive"));
    }
    if circuit.resistance < T::zero() {
        return Err(invalid("resistance", "must be non-negative"));
    }
    let omega = T::two_pi() * freq_hz;
    let j = Cplx::new(T::zero(), T::one());
    let series = j * omega * circuit.l_top
        + Cplx::new(T::zero(), -T::one() / (omega * circuit.capacitance))
        + Cplx::new(circuit.resistance, T::zero());
    let shunt = j * omega * circuit.l_bottom;
    let denom = shunt + series;
    if cabs(denom) <= T::epsilon() * cabs(shunt) {
        return Err(Error::SingularCircuit("parallel resonance"));
    }
    Ok(shunt * series / denom)
}

/// Reflection coefficient `(Z - Z0) / (Z + Z0)` of a load `z`.
pub fn reflection_from_impedance<T: Real>(z: Cplx<T>, z0: T) -> Result<Cplx<T>> {
    let denom = z + Cplx::new(z0, T::zero());
    if cabs(denom) == T::zero() {
        return Err(Error::SingularCircuit("Z = -Z0"));
    }
    Ok((z - Cplx::new(z0, T::zero())) / denom)
}

/// Complex diffraction coefficient of one meta-atom with its amplitude and
/// phase split out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffraction<T: Real> {
    pub coefficient: Cplx<T>,
    pub amplitude: T,
    /// Phase in `[0, 2pi)`.
    pub phase: T,
}

pub fn diffraction_coefficient<T: Real>(
    circuit: &MetaAtomCircuit<T>,
    freq_hz: T,
) -> Result<Diffraction<T>> {
    let z = impedance(circuit, freq_hz)?;
    let gamma = reflection_from_impedance(z, circuit.z0)?;
    Ok(Diffraction {
        coefficient: gamma,
        amplitude: cabs(gamma),
        phase: wrap_phase(carg(gamma)),
    })
}

/// Sweeps the capacitance over `capacitances` and returns the circuit
/// response at each point.
pub fn phase_for_capacitance<T: Real>(
    circuit: &MetaAtomCircuit<T>,
    freq_hz: T,
    capacitances: &[T],
) -> Result<Vec<(T, Diffraction<T>)>> {
    capacitances
        .iter()
        .map(|&c| diffraction_coefficient(&circuit.with_capacitance(c), freq_hz).map(|d| (c, d)))
        .collect()
}

/// Largest gap between the circuit amplitude and the coupled model evaluated
/// at the circuit's own phase, over a capacitance sweep.
pub fn coupled_model_deviation<T: Real>(
    sweep: &[(T, Diffraction<T>)],
    model: &AmplitudeModel<T>,
) -> T {
    sweep
        .iter()
        .map(|(_, d)| (d.amplitude - model.amplitude(d.phase)).abs())
        .fold(T::zero(), |a, b| a.max(b))
}

/// Coupled amplitude–phase law
/// `a(θ) = (1 - a_min) ((sin(θ - offset) + 1) / 2)^iota + a_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeModel<T: Real> {
    pub a_min: T,
    pub offset: T,
    pub iota: T,
}

impl<T: Real> Default for AmplitudeModel<T> {
    fn default() -> Self {
        Self {
            a_min: lit(0.2),
            offset: lit::<T>(0.43) * T::pi(),
            iota: lit(1.6),
        }
    }
}

impl<T: Real> AmplitudeModel<T> {
    pub fn new(a_min: T, offset: T, iota: T) -> Result<Self> {
        if !(a_min >= T::zero() && a_min <= T::one()) {
            return Err(invalid("a_min", "must lie in [0, 1]"));
        }
        if !(iota > T::zero()) {
            return Err(invalid("iota", "must be positive"));
        }
        Ok(Self {
            a_min,
            offset: wrap_phase(offset),
            iota,
        })
    }

    pub fn amplitude(&self, theta: T) -> T {
        let base = ((theta - self.offset).sin() + T::one()) / T::two();
        // sin can overshoot 1 by an ulp
        let base = base.clamp(T::zero(), T::one());
        (T::one() - self.a_min) * base.powf(self.iota) + self.a_min
    }

    /// Exact `da/dθ`.
    pub fn derivative(&self, theta: T) -> T {
        let s = theta - self.offset;
        let base = ((s.sin() + T::one()) / T::two()).clamp(T::zero(), T::one());
        let cos = s.cos();
        if cos == T::zero() {
            return T::zero();
        }
        (T::one() - self.a_min) * self.iota / T::two() * cos * base.powf(self.iota - T::one())
    }
}

pub fn amplitude_of_phase<T: Real>(model: &AmplitudeModel<T>, theta: T) -> T {
    model.amplitude(theta)
}

pub fn amplitude_phase_derivative<T: Real>(model: &AmplitudeModel<T>, theta: T) -> T {
    model.derivative(theta)
}

/// How a meta-atom's amplitude follows its phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeMode<T: Real> {
    /// Amplitude tied to phase through [`AmplitudeModel`].
    Coupled(AmplitudeModel<T>),
    /// Unit amplitude for every phase.
    Ideal,
}

impl<T: Real> AmplitudeMode<T> {
    pub fn amplitude(&self, theta: T) -> T {
        match self {
            Self::Coupled(m) => m.amplitude(theta),
            Self::Ideal => T::one(),
        }
    }

    pub fn derivative(&self, theta: T) -> T {
        match self {
            Self::Coupled(m) => m.derivative(theta),
            Self::Ideal => T::zero(),
        }
    }

    /// `φ(θ) = a(θ) e^{jθ}`.
    pub fn coefficient(&self, theta: T) -> Cplx<T> {
        cis(theta) * self.amplitude(theta)
    }

    /// `dφ/dθ = (a'(θ) + j a(θ)) e^{jθ}`.
    pub fn coefficient_derivative(&self, theta: T) -> Cplx<T> {
        cis(theta) * Cplx::new(self.derivative(theta), self.amplitude(theta))
    }
}

/// Phase configuration of the whole stack: an `L x M` matrix of phases in
/// `[0, 2pi)`, row `l` holding layer `l` (0 = closest to the BS).
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T: Real> {
    phases: DMatrix<T>,
    mode: AmplitudeMode<T>,
}

impl<T: Real> SimState<T> {
    pub fn new(phases: DMatrix<T>, mode: AmplitudeMode<T>) -> Self {
        Self {
            phases: phases.map(wrap_phase),
            mode,
        }
    }

    pub fn zeros(layers: usize, atoms: usize, mode: AmplitudeMode<T>) -> Self {
        Self::new(DMatrix::zeros(layers, atoms), mode)
    }

    /// I.i.d. uniform phases over `[0, 2pi)`.
    pub fn random<R: Rng + ?Sized>(
        layers: usize,
        atoms: usize,
        mode: AmplitudeMode<T>,
        rng: &mut R,
    ) -> Self {
        let phases = DMatrix::from_fn(layers, atoms, |_, _| {
            T::two_pi() * lit::<T>(rng.gen::<f64>())
        });
        Self::new(phases, mode)
    }

    pub fn phases(&self) -> &DMatrix<T> {
        &self.phases
    }

    pub fn mode(&self) -> &AmplitudeMode<T> {
        &self.mode
    }

    pub fn num_layers(&self) -> usize {
        self.phases.nrows()
    }

    pub fn atoms_per_layer(&self) -> usize {
        self.phases.ncols()
    }

    pub fn set_phase(&mut self, layer: usize, atom: usize, theta: T) {
        self.phases[(layer, atom)] = wrap_phase(theta);
    }

    /// Applies `θ ← θ - step` elementwise and re-wraps.
    pub fn step(&mut self, delta: &DMatrix<T>) {
        self.phases.zip_apply(delta, |t, d| *t = wrap_phase(*t - d));
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.num_layers() {
            return Err(Error::IndexOutOfRange {
                what: "layer",
                index: layer,
                range: format!("0..{}", self.num_layers()),
            });
        }
        Ok(())
    }

    pub fn amplitude(&self, layer: usize, atom: usize) -> T {
        self.mode.amplitude(self.phases[(layer, atom)])
    }

    /// Diagonal of `Φ^l`.
    pub fn layer_coefficients(&self, layer: usize) -> Result<CVector<T>> {
        self.check_layer(layer)?;
        Ok(CVector::from_iterator(
            self.atoms_per_layer(),
            self.phases.row(layer).iter().map(|&t| self.mode.coefficient(t)),
        ))
    }

    /// `dφ/dθ` for every atom of one layer.
    pub fn layer_coefficient_derivatives(&self, layer: usize) -> Result<CVector<T>> {
        self.check_layer(layer)?;
        Ok(CVector::from_iterator(
            self.atoms_per_layer(),
            self.phases
                .row(layer)
                .iter()
                .map(|&t| self.mode.coefficient_derivative(t)),
        ))
    }

    /// Coefficients of every layer, in order.
    pub fn coefficients(&self) -> Vec<CVector<T>> {
        (0..self.num_layers())
            .map(|l| self.layer_coefficients(l).expect("layer in range"))
            .collect()
    }
}

/// Dense diagonal response matrix `Φ^l` of one layer.
pub fn layer_matrix<T: Real>(state: &SimState<T>, layer: usize) -> Result<CMatrix<T>> {
    let d = state.layer_coefficients(layer)?;
    Ok(CMatrix::from_diagonal(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    #[test]
    fn impedance_reference_point() {
        // independent complex-arithmetic evaluation
        let z = impedance(&MetaAtomCircuit::<f64>::default(), 10e9).unwrap();
        assert!((z.re - 1.633_840_818_558_9).abs() < 1e-9, "{z}");
        assert!((z.im - 30.104_465_431_289_9).abs() < 1e-9, "{z}");
    }

    #[test]
    fn lossless_circuit_is_reactive() {
        for c in [0.47e-12, 1.0e-12, 2.35e-12] {
            let circ = MetaAtomCircuit::<f64> {
                resistance: 0.0,
                capacitance: c,
                ..Default::default()
            };
            let z = impedance(&circ, 10e9).unwrap();
            assert!(z.re.abs() < 1e-9 * z.im.abs().max(1.0));
            let d = diffraction_coefficient(&circ, 10e9).unwrap();
            assert!((d.amplitude - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shorted_capacitor_limit() {
        let circ = MetaAtomCircuit::<f64> {
            capacitance: 1e6,
            ..Default::default()
        };
        let f = 10e9;
        let w = TAU * f;
        let j = Cplx::new(0.0, 1.0);
        let expected = j * w * circ.l_bottom * (circ.resistance + j * w * circ.l_top)
            / (circ.resistance + j * w * (circ.l_bottom + circ.l_top));
        let z = impedance(&circ, f).unwrap();
        assert!((z - expected).norm() < 1e-9 * expected.norm());
    }

    #[test]
    fn parallel_resonance_is_singular() {
        // jωL1 + jωL2 + 1/(jωC) = 0 with R = 0
        let f = 10e9;
        let w = TAU * f;
        let l1 = 2.5e-9;
        let l2 = 0.7e-9;
        let c = 1.0 / (w * w * (l1 + l2));
        let circ = MetaAtomCircuit {
            capacitance: c,
            resistance: 0.0,
            l_bottom: l1,
            l_top: l2,
            z0: FREE_SPACE_IMPEDANCE,
        };
        assert_eq!(
            impedance(&circ, f),
            Err(Error::SingularCircuit("parallel resonance"))
        );
        assert!(impedance(&MetaAtomCircuit::<f64>::default(), 0.0).is_err());
    }

    #[test]
    fn reflection_cases() {
        let g = reflection_from_impedance(Cplx::new(376.73, 0.0), 376.73).unwrap();
        assert_eq!(g, Cplx::new(0.0, 0.0));
        assert!(reflection_from_impedance(Cplx::new(-376.73, 0.0), 376.73).is_err());
        let d = diffraction_coefficient(&MetaAtomCircuit::<f64>::default(), 10e9).unwrap();
        assert!((d.amplitude - 0.991_418_216_615).abs() < 1e-9);
        assert!((d.phase - 2.982_108_723_022_6).abs() < 1e-9);
    }

    #[test]
    fn capacitance_sweep_is_passive() {
        let caps: Vec<f64> = (0..1000).map(|i| 0.47e-12 + 1.88e-12 * i as f64 / 999.0).collect();
        let sweep = phase_for_capacitance(&MetaAtomCircuit::default(), 10e9, &caps).unwrap();
        assert_eq!(sweep.len(), 1000);
        assert!(sweep.iter().all(|(_, d)| d.amplitude <= 1.0 + 1e-12));
        let one = phase_for_capacitance(&MetaAtomCircuit::default(), 10e9, &caps[..1]).unwrap();
        assert_eq!(one.len(), 1);
        let dev = coupled_model_deviation(&sweep, &AmplitudeModel::default());
        assert!(dev.is_finite() && dev >= 0.0);
    }

    #[test]
    fn amplitude_examples() {
        let m = AmplitudeModel::<f64>::default();
        assert!((m.amplitude(m.offset + FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert!((m.amplitude(m.offset - FRAC_PI_2) - 0.2).abs() < 1e-15);
        assert!((m.amplitude(m.offset) - (0.8 * 0.5f64.powf(1.6) + 0.2)).abs() < 1e-15);
        assert!((m.amplitude(m.offset) - 0.463_901_582_154_6).abs() < 1e-12);
    }

    #[test]
    fn derivative_examples() {
        let m = AmplitudeModel::<f64>::default();
        assert!(m.derivative(m.offset + FRAC_PI_2).abs() < 1e-12);
        let lin = AmplitudeModel::new(0.0, 0.3, 1.0).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.13;
            assert!((lin.derivative(t) - (t - 0.3).cos() / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let m = AmplitudeModel::<f64>::default();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..1000 {
            let t = TAU * i as f64 / 1000.0;
            let fd = (m.amplitude(t + h) - m.amplitude(t - h)) / (2.0 * h);
            let an = m.derivative(t);
            // scale-aware relative error; near the extrema both sides vanish
            let err = (fd - an).abs() / an.abs().max(1e-2);
            worst = worst.max(err);
        }
        assert!(worst < 1e-8, "worst relative error {worst}");
    }

    #[test]
    fn amplitude_model_validation() {
        assert!(AmplitudeModel::new(1.5, 0.0, 1.0).is_err());
        assert!(AmplitudeModel::new(0.2, 0.0, 0.0).is_err());
        let m = AmplitudeModel::new(0.2, -PI, 1.0).unwrap();
        assert!((m.offset - PI).abs() < 1e-15);
    }

    #[test]
    fn layer_matrix_cases() {
        let s = SimState::<f64>::zeros(2, 9, AmplitudeMode::Ideal);
        let phi = layer_matrix(&s, 1).unwrap();
        assert_eq!(phi, CMatrix::identity(9, 9));
        assert!(matches!(layer_matrix(&s, 2), Err(Error::IndexOutOfRange { .. })));

        let model = AmplitudeModel::<f64>::default();
        let top = model.offset + FRAC_PI_2;
        let s = SimState::new(DMatrix::from_element(1, 4, top), AmplitudeMode::Coupled(model));
        let phi = layer_matrix(&s, 0).unwrap();
        for m in 0..4 {
            assert!((phi[(m, m)] - cis(top)).norm() < 1e-15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = SimState::random(3, 25, AmplitudeMode::Coupled(model), &mut rng);
        for l in 0..3 {
            let phi = layer_matrix(&s, l).unwrap();
            let nnz = phi.iter().filter(|z| z.norm() > 0.0).count();
            assert_eq!(nnz, 25);
            for m in 0..25 {
                let a = phi[(m, m)].norm();
                assert!((0.2 - 1e-12..=1.0 + 1e-12).contains(&a));
            }
        }
    }

    #[test]
    fn recanonicalization_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SimState::<f64>::random(2, 16, AmplitudeMode::Coupled(Default::default()), &mut rng);
        let again = SimState::new(s.phases().clone(), *s.mode());
        assert_eq!(s.coefficients(), again.coefficients());
        let shifted = SimState::new(s.phases().map(|t| t + TAU), *s.mode());
        for (a, b) in s.coefficients().iter().zip(shifted.coefficients()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn amplitude_in_range(theta in -50.0f64..50.0, a_min in 0.0f64..1.0, iota in 0.1f64..4.0) {
                let m = AmplitudeModel::new(a_min, 0.43 * PI, iota).unwrap();
                let a = m.amplitude(theta);
                prop_assert!(a >= a_min - 1e-12 && a <= 1.0 + 1e-12);
            }

            #[test]
            fn passive_for_any_lossy_circuit(c in 0.1e-12f64..10e-12, r in 0.0f64..50.0, f in 1e9f64..30e9) {
                let circ = MetaAtomCircuit { capacitance: c, resistance: r, ..Default::default() };
                if let Ok(d) = diffraction_coefficient(&circ, f) {
                    prop_assert!(d.amplitude <= 1.0 + 1e-12);
                }
            }
        }
    }
}
