//! Rayleigh–Sommerfeld propagation between layers and the composite SIM
//! response `G = Φ^L W^L ⋯ Φ^1 W^1`.

use std::sync::Arc;

use nalgebra::{Point3, Vector3};

use crate::error::{dims, invalid, Error, Result};
use crate::geometry::{link_angle, link_distance, SceneGeometry};
use crate::metasurface::SimState;
use crate::scalar::{cis, lit, CMatrix, CVector, Cplx, Real};

/// Source-plane normal shared by the BS array and all layers.
pub fn plane_normal<T: Real>() -> Vector3<T> {
    Vector3::new(T::zero(), T::one(), T::zero())
}

/// Free-space transfer coefficient from `src` to `dst`:
/// `cos(ψ) S_a / r · (1/(2πr) − j/λ) · e^{j2πr/λ}`.
pub fn rs_coefficient<T: Real>(
    src: &Point3<T>,
    dst: &Point3<T>,
    src_normal: &Vector3<T>,
    wavelength: T,
    atom_area: T,
) -> Result<Cplx<T>> {
    if !(wavelength > T::zero()) {
        return Err(invalid("wavelength", "must be positive"));
    }
    if !(atom_area > T::zero()) {
        return Err(invalid("atom_area", "must be positive"));
    }
    let r = link_distance(src, dst);
    let psi = link_angle(src, dst, src_normal)?;
    let scale = psi.cos() * atom_area / r;
    let bracket = Cplx::new(T::one() / (T::two_pi() * r), -T::one() / wavelength);
    Ok(bracket * cis(T::two_pi() * r / wavelength) * scale)
}

/// Transfer matrix from `sources` (columns) to `targets` (rows).
fn transfer_matrix<T: Real>(
    sources: &[Point3<T>],
    targets: &[Point3<T>],
    wavelength: T,
    atom_area: T,
) -> Result<CMatrix<T>> {
    let normal = plane_normal();
    let mut w = CMatrix::zeros(targets.len(), sources.len());
    for (i, dst) in targets.iter().enumerate() {
        for (j, src) in sources.iter().enumerate() {
            w[(i, j)] = rs_coefficient(src, dst, &normal, wavelength, atom_area)?;
        }
    }
    Ok(w)
}

/// Fixed propagation matrices of one scene.
#[derive(Debug, Clone)]
pub struct PropagationSet<T: Real> {
    input: CMatrix<T>,
    inter: Vec<Arc<CMatrix<T>>>,
    fingerprint: u64,
}

impl<T: Real> PropagationSet<T> {
    /// Assembles a set from explicit matrices. `inter[i]` maps layer `i` to
    /// layer `i + 1`.
    pub fn from_matrices(input: CMatrix<T>, inter: Vec<CMatrix<T>>) -> Result<Self> {
        let m = input.nrows();
        for w in &inter {
            if w.shape() != (m, m) {
                return Err(dims("PropagationSet", format!("{m}x{m}"), format!("{:?}", w.shape())));
            }
        }
        Ok(Self {
            input,
            inter: inter.into_iter().map(Arc::new).collect(),
            fingerprint: 0,
        })
    }

    /// `W^1`, BS array to layer 1 (`M x S`).
    pub fn input(&self) -> &CMatrix<T> {
        &self.input
    }

    /// Matrix feeding layer `layer` (0-based): `W^1` for layer 0, otherwise
    /// the inter-layer matrix from `layer - 1`.
    pub fn feeding(&self, layer: usize) -> &CMatrix<T> {
        if layer == 0 {
            &self.input
        } else {
            &self.inter[layer - 1]
        }
    }

    pub fn num_layers(&self) -> usize {
        self.inter.len() + 1
    }

    pub fn atoms(&self) -> usize {
        self.input.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.input.ncols()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// True when every inter-layer matrix is one shared allocation.
    pub fn shares_inter_layer(&self) -> bool {
        self.inter.windows(2).all(|w| Arc::ptr_eq(&w[0], &w[1]))
    }
}

/// True when layer `l` is layer 0 rigidly translated by `l` times the first
/// gap, for every `l`.
fn layers_isomorphic<T: Real>(layers: &[Vec<Point3<T>>]) -> bool {
    if layers.len() < 3 {
        return true;
    }
    let first = &layers[0];
    let gap = layers[1][0] - first[0];
    let tol = lit::<T>(1e-12) * (gap.norm() + T::one());
    layers.iter().enumerate().all(|(l, layer)| {
        let shift = gap * lit::<T>(l as f64);
        layer.len() == first.len()
            && layer
                .iter()
                .zip(first)
                .all(|(p, q)| (p - (q + shift)).norm() <= tol * lit::<T>(l as f64 + 1.0))
    })
}

/// Builds `W^1 … W^L` for a scene, computing the inter-layer matrix once when
/// the layers are equally spaced copies of each other.
pub fn build_propagation<T: Real>(geometry: &SceneGeometry<T>) -> Result<PropagationSet<T>> {
    build_propagation_with(geometry, true)
}

/// As [`build_propagation`] but always computes every matrix from scratch.
pub fn build_propagation_unshared<T: Real>(
    geometry: &SceneGeometry<T>,
) -> Result<PropagationSet<T>> {
    build_propagation_with(geometry, false)
}

fn build_propagation_with<T: Real>(
    geometry: &SceneGeometry<T>,
    share: bool,
) -> Result<PropagationSet<T>> {
    let (lambda, area) = (geometry.wavelength, geometry.atom_area);
    let layers = &geometry.layers;
    if layers.is_empty() {
        return Err(invalid("layers", "scene has no metasurface layers"));
    }
    let input = transfer_matrix(&geometry.bs, &layers[0], lambda, area)?;
    let mut inter: Vec<Arc<CMatrix<T>>> = Vec::with_capacity(layers.len() - 1);
    if share && layers.len() > 1 && layers_isomorphic(layers) {
        let w = Arc::new(transfer_matrix(&layers[0], &layers[1], lambda, area)?);
        inter.resize(layers.len() - 1, w);
    } else {
        for pair in layers.windows(2) {
            inter.push(Arc::new(transfer_matrix(&pair[0], &pair[1], lambda, area)?));
        }
    }
    Ok(PropagationSet {
        input,
        inter,
        fingerprint: geometry.fingerprint(),
    })
}

/// `G` from explicit per-layer diagonals.
pub fn sim_response_from_coefficients<T: Real>(
    coefficients: &[CVector<T>],
    prop: &PropagationSet<T>,
) -> Result<CMatrix<T>> {
    if coefficients.len() != prop.num_layers() {
        return Err(dims("sim_response layers", prop.num_layers(), coefficients.len()));
    }
    let m = prop.atoms();
    let mut acc: Option<CMatrix<T>> = None;
    for (l, phi) in coefficients.iter().enumerate() {
        if phi.len() != m {
            return Err(dims("sim_response atoms", m, phi.len()));
        }
        let mut f = match acc {
            None => prop.input().clone(),
            Some(prev) => prop.feeding(l) * prev,
        };
        scale_rows(&mut f, phi);
        acc = Some(f);
    }
    acc.ok_or(Error::DimensionMismatch {
        context: "sim_response",
        expected: ">= 1 layer".into(),
        got: "0".into(),
    })
}

/// End-to-end SIM response `G` (`M x S`).
pub fn sim_response<T: Real>(state: &SimState<T>, prop: &PropagationSet<T>) -> Result<CMatrix<T>> {
    if state.num_layers() != prop.num_layers() || state.atoms_per_layer() != prop.atoms() {
        return Err(dims(
            "sim_response",
            format!("{}x{}", prop.num_layers(), prop.atoms()),
            format!("{}x{}", state.num_layers(), state.atoms_per_layer()),
        ));
    }
    sim_response_from_coefficients(&state.coefficients(), prop)
}

/// `diag(d) · a` in place.
pub(crate) fn scale_rows<T: Real>(a: &mut CMatrix<T>, d: &CVector<T>) {
    for (mut row, s) in a.row_iter_mut().zip(d.iter()) {
        row *= *s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_scene, SceneConfig};
    use crate::metasurface::AmplitudeMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_scene(atoms: usize, layers: usize, users: usize, seed: u64) -> SceneGeometry<f64> {
        let cfg = SceneConfig {
            atoms,
            layers,
            ..SceneConfig::default()
        }
        .with_users(users);
        build_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn on_axis_reference_value() {
        let lambda = 0.03f64;
        let src = Point3::new(0.0, 0.0, 0.0);
        let dst = Point3::new(0.0, 1.2 * lambda, 0.0);
        let w = rs_coefficient(&src, &dst, &plane_normal(), lambda, lambda * lambda).unwrap();
        assert!((w.norm() - 0.840_630_749_989_1).abs() < 1e-9);
        assert!((w.arg() - (-0.182_299_710_197_6)).abs() < 1e-9);
    }

    #[test]
    fn grazing_and_far_limits() {
        let lambda = 0.03f64;
        let o = Point3::new(0.0, 0.0, 0.0);
        let w = rs_coefficient(&o, &Point3::new(1.0, 0.0, 0.0), &plane_normal(), lambda, lambda * lambda)
            .unwrap();
        assert!(w.norm() < 1e-15);

        let r = 1e6 * lambda;
        let w = rs_coefficient(&o, &Point3::new(0.0, r, 0.0), &plane_normal(), lambda, lambda * lambda)
            .unwrap();
        let far = lambda * lambda / (lambda * r);
        assert!((w.norm() - far).abs() / far < 1e-4);
        assert!((w.norm() - 1e-6).abs() < 1e-9);
        assert!(rs_coefficient(&o, &o, &plane_normal(), lambda, 1.0).is_err());
    }

    #[test]
    fn default_scene_shapes_and_sharing() {
        let g = build_scene(&SceneConfig::<f64>::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let p = build_propagation(&g).unwrap();
        assert_eq!(p.input().shape(), (225, 4));
        assert_eq!(p.num_layers(), 12);
        assert_eq!(p.feeding(1).shape(), (225, 225));
        assert_eq!(p.feeding(2), p.feeding(1));
        assert!(p.shares_inter_layer());
        assert!(p.input().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn single_layer_has_input_only() {
        let p = build_propagation(&small_scene(9, 1, 2, 0)).unwrap();
        assert_eq!(p.num_layers(), 1);
    }

    #[test]
    fn pointwise_matches() {
        let g = small_scene(4, 3, 2, 3);
        let p = build_propagation(&g).unwrap();
        let n = plane_normal();
        for m in 0..4 {
            for s in 0..2 {
                let w = rs_coefficient(&g.bs[s], &g.layers[0][m], &n, g.wavelength, g.atom_area).unwrap();
                assert!((p.input()[(m, s)] - w).norm() < 1e-15);
            }
            for l in 1..3 {
                for mp in 0..4 {
                    let w = rs_coefficient(&g.layers[l - 1][mp], &g.layers[l][m], &n, g.wavelength, g.atom_area)
                        .unwrap();
                    assert!((p.feeding(l)[(m, mp)] - w).norm() < 1e-12);
                }
            }
        }
    }

    /// Chained product with explicit triple loops and dense diagonals.
    fn naive_chain(phis: &[CMatrix<f64>], ws: &[CMatrix<f64>]) -> CMatrix<f64> {
        fn mul(a: &CMatrix<f64>, b: &CMatrix<f64>) -> CMatrix<f64> {
            let mut c = CMatrix::zeros(a.nrows(), b.ncols());
            for i in 0..a.nrows() {
                for j in 0..b.ncols() {
                    let mut s = Cplx::new(0.0, 0.0);
                    for k in 0..a.ncols() {
                        s += a[(i, k)] * b[(k, j)];
                    }
                    c[(i, j)] = s;
                }
            }
            c
        }
        let mut acc = mul(&phis[0], &ws[0]);
        for l in 1..phis.len() {
            acc = mul(&phis[l], &mul(&ws[l], &acc));
        }
        acc
    }

    #[test]
    fn response_matches_naive_chain() {
        let g = small_scene(4, 3, 2, 11);
        let p = build_propagation(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = SimState::random(3, 4, AmplitudeMode::Coupled(Default::default()), &mut rng);
        let got = sim_response(&s, &p).unwrap();
        let phis: Vec<_> = (0..3).map(|l| crate::metasurface::layer_matrix(&s, l).unwrap()).collect();
        let ws: Vec<_> = (0..3).map(|l| p.feeding(l).clone()).collect();
        let want = naive_chain(&phis, &ws);
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn single_identity_layer_gives_input() {
        let g = small_scene(9, 1, 2, 1);
        let p = build_propagation(&g).unwrap();
        let s = SimState::zeros(1, 9, AmplitudeMode::Ideal);
        assert_eq!(sim_response(&s, &p).unwrap(), *p.input());
    }

    #[test]
    fn multilinear_scaling_and_superposition() {
        let g = small_scene(9, 3, 2, 2);
        let p = build_propagation(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = SimState::random(3, 9, AmplitudeMode::Ideal, &mut rng);
        let coeffs = s.coefficients();
        let base = sim_response_from_coefficients(&coeffs, &p).unwrap();
        let c = Cplx::new(0.7, -0.4);
        let scaled: Vec<_> = coeffs.iter().map(|v| v * c).collect();
        let got = sim_response_from_coefficients(&scaled, &p).unwrap();
        assert!((got - &base * c.powu(3)).norm() < 1e-12 * base.norm());

        let mut a = coeffs.clone();
        let mut b = coeffs.clone();
        a[0] = CVector::from_fn(9, |_, _| Cplx::new(rng.gen(), rng.gen()));
        b[0] = CVector::from_fn(9, |_, _| Cplx::new(rng.gen(), rng.gen()));
        let mut ab = coeffs.clone();
        ab[0] = &a[0] + &b[0];
        let ga = sim_response_from_coefficients(&a, &p).unwrap();
        let gb = sim_response_from_coefficients(&b, &p).unwrap();
        let gab = sim_response_from_coefficients(&ab, &p).unwrap();
        assert!((gab - (ga + gb)).norm() < 1e-12 * base.norm().max(1.0));
    }

    #[test]
    fn shared_and_fresh_agree() {
        let g = small_scene(16, 4, 2, 4);
        let shared = build_propagation(&g).unwrap();
        let fresh = build_propagation_unshared(&g).unwrap();
        assert!(shared.shares_inter_layer());
        assert!(!fresh.shares_inter_layer());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = SimState::random(4, 16, AmplitudeMode::Coupled(Default::default()), &mut rng);
        let a = sim_response(&s, &shared).unwrap();
        let b = sim_response(&s, &fresh).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn norm_bound_ideal_phases() {
        let g = small_scene(9, 3, 2, 6);
        let p = build_propagation(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = SimState::random(3, 9, AmplitudeMode::Ideal, &mut rng);
        let gm = sim_response(&s, &p).unwrap();
        let spec = |m: &CMatrix<f64>| m.singular_values().max();
        let bound = spec(p.feeding(2)) * spec(p.feeding(1)) * p.input().norm();
        assert!(gm.norm() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn dimension_mismatch() {
        let p = build_propagation(&small_scene(4, 2, 2, 0)).unwrap();
        let s = SimState::<f64>::zeros(3, 4, AmplitudeMode::Ideal);
        assert!(matches!(sim_response(&s, &p), Err(Error::DimensionMismatch { .. })));
    }
}
