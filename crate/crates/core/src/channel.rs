//! User channels, path loss, the zero-forcing target and the end-to-end matrix.

use nalgebra::{DMatrix, Point3};

use crate::error::{dims, invalid, Error, Result};
use crate::geometry::{link_distance, SceneGeometry};
use crate::scalar::{cabs2, cis, frob2, lit, CMatrix, Cplx, Real};

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Whether channel columns carry path loss or are scaled to unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMode {
    #[default]
    Physical,
    Normalized,
}

/// Channel from `K` users to the `M` atoms of the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet<T: Real> {
    /// `M x K`; column `k` is `h_k`.
    pub h: CMatrix<T>,
    pub mode: GainMode,
    /// Distance used for each user's path loss.
    pub distances: Vec<T>,
    /// Path-loss power gain `β_k` for each user.
    pub path_gains: Vec<T>,
}

impl<T: Real> ChannelSet<T> {
    pub fn num_users(&self) -> usize {
        self.h.ncols()
    }

    /// The same channel with unit-norm columns.
    pub fn normalized(&self) -> Self {
        let mut h = self.h.clone();
        normalize_columns(&mut h);
        Self {
            h,
            mode: GainMode::Normalized,
            ..self.clone()
        }
    }
}

fn normalize_columns<T: Real>(h: &mut CMatrix<T>) {
    for mut col in h.column_iter_mut() {
        let n = col.iter().fold(T::zero(), |a, z| a + cabs2(*z)).sqrt();
        if n > T::zero() {
            col.unscale_mut(n);
        }
    }
}

/// `β = (λ / 4π)^2 d^{-α}`.
pub fn path_loss<T: Real>(distance: T, wavelength: T, alpha: T) -> Result<T> {
    if !(distance > T::zero()) {
        return Err(invalid("distance", "path loss needs a positive distance"));
    }
    let a = wavelength / (lit::<T>(4.0) * T::pi());
    Ok(a * a * distance.powf(-alpha))
}

/// `e^{-j2π d/λ}` with the whole number of wavelengths removed first, which
/// keeps the phase accurate at long range.
fn spherical_phase<T: Real>(distance: T, wavelength: T) -> Cplx<T> {
    let cycles = distance / wavelength;
    cis(-T::two_pi() * (cycles - cycles.floor()))
}

/// Normalized near-field row vector entries for an arbitrary ground point.
pub(crate) fn nearfield_column<T: Real>(
    atoms: &[Point3<T>],
    point: &Point3<T>,
    wavelength: T,
) -> Result<Vec<Cplx<T>>> {
    atoms
        .iter()
        .map(|a| {
            let d = link_distance(a, point);
            if d == T::zero() {
                Err(Error::CoincidentPoints("user on a meta-atom"))
            } else {
                Ok(spherical_phase(d, wavelength))
            }
        })
        .collect()
}

/// Spherical-wavefront channel `h_{m,k} = √β_k e^{-j2π d_{m,k}/λ}` with `d_{m,k}`
/// the exact distance from user `k` to atom `m` of the last layer. `β_k` uses
/// the distance to the centre of that layer.
pub fn nearfield_channel<T: Real>(
    geometry: &SceneGeometry<T>,
    mode: GainMode,
    alpha: T,
) -> Result<ChannelSet<T>> {
    let atoms = geometry
        .layers
        .last()
        .ok_or_else(|| invalid("layers", "scene has no layers"))?;
    let center = geometry.output_center();
    let k = geometry.num_users();
    let mut h = CMatrix::zeros(atoms.len(), k);
    let mut distances = Vec::with_capacity(k);
    let mut path_gains = Vec::with_capacity(k);
    for (j, ue) in geometry.users.iter().enumerate() {
        let d = link_distance(&center, ue);
        let beta = path_loss(d, geometry.wavelength, alpha)?;
        let amp = beta.sqrt();
        for (i, z) in nearfield_column(atoms, ue, geometry.wavelength)?
            .into_iter()
            .enumerate()
        {
            h[(i, j)] = z * amp;
        }
        distances.push(d);
        path_gains.push(beta);
    }
    if mode == GainMode::Normalized {
        normalize_columns(&mut h);
    }
    Ok(ChannelSet {
        h,
        mode,
        distances,
        path_gains,
    })
}

/// Planar-wavefront channel: each user is replaced by a virtual user at
/// `reference_distance` along its true bearing from the output-layer centre,
/// and the phase across the aperture is linearised,
/// `h_{m,k} = √β e^{-j2π (D - u_k·p_m)/λ}` with `p_m` relative to the centre.
pub fn farfield_channel<T: Real>(
    geometry: &SceneGeometry<T>,
    reference_distance: T,
    mode: GainMode,
    alpha: T,
) -> Result<ChannelSet<T>> {
    if !(reference_distance > T::zero()) {
        return Err(invalid("reference_distance", "must be positive"));
    }
    let atoms = geometry
        .layers
        .last()
        .ok_or_else(|| invalid("layers", "scene has no layers"))?;
    let center = geometry.output_center();
    let lambda = geometry.wavelength;
    let beta = path_loss(reference_distance, lambda, alpha)?;
    let k = geometry.num_users();
    let mut h = CMatrix::zeros(atoms.len(), k);
    for (j, ue) in geometry.users.iter().enumerate() {
        let bearing = ue - center;
        let n = bearing.norm();
        if n == T::zero() {
            return Err(Error::CoincidentPoints("zero-length bearing"));
        }
        let u = bearing / n;
        for (i, a) in atoms.iter().enumerate() {
            let path = reference_distance - u.dot(&(a - center));
            h[(i, j)] = spherical_phase(path, lambda) * beta.sqrt();
        }
    }
    if mode == GainMode::Normalized {
        normalize_columns(&mut h);
    }
    Ok(ChannelSet {
        h,
        mode,
        distances: vec![reference_distance; k],
        path_gains: vec![beta; k],
    })
}

/// Zero-forcing precoder and the target it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfTarget<T: Real> {
    /// `W_ZF = H (H^H H)^{-1}`, `M x K`.
    pub w_zf: CMatrix<T>,
    /// `Λ = H^H W_ZF`, `K x K`.
    pub lambda: CMatrix<T>,
    /// `τ = ‖Λ‖_F^2`.
    pub tau: T,
}

pub fn zf_target<T: Real>(h: &CMatrix<T>) -> Result<ZfTarget<T>> {
    let hh = h.adjoint();
    let gram = &hh * h;
    let sv = gram.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > T::zero() {
        crate::scalar::to_f64(smax / smin)
    } else {
        f64::INFINITY
    };
    if !(cond < MAX_CONDITION) {
        return Err(Error::IllConditioned { condition: cond });
    }
    let inv = gram
        .try_inverse()
        .ok_or(Error::IllConditioned { condition: cond })?;
    let w_zf = h * inv;
    let lambda = hh * &w_zf;
    let tau = frob2(&lambda);
    Ok(ZfTarget { w_zf, lambda, tau })
}

/// `Q = H^H G`; row `k` is user `k`'s end-to-end channel.
pub fn end_to_end<T: Real>(h: &CMatrix<T>, g: &CMatrix<T>) -> Result<CMatrix<T>> {
    if h.nrows() != g.nrows() {
        return Err(dims("end_to_end", h.nrows(), g.nrows()));
    }
    Ok(h.adjoint() * g)
}

/// Phase of every entry relative to the first entry of its column.
pub fn relative_phases<T: Real>(h: &CMatrix<T>) -> DMatrix<T> {
    DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| {
        let z = h[(i, j)] * h[(0, j)].conj();
        z.im.atan2(z.re)
    })
}
