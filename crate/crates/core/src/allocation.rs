//! Power allocation over the end-to-end channel, SINR / sum-rate evaluation
//! and received-energy maps.

use nalgebra::Point3;
use rayon::prelude::*;

use crate::channel::nearfield_column;
use crate::error::{dims, invalid, Error, Result};
use crate::geometry::SceneGeometry;
use crate::scalar::{cabs2, lit, CMatrix, Cplx, Real};

/// Per-user SINR
/// `γ_k = p_k |Q[k,k]|² / (Σ_{k'≠k} p_{k'} |Q[k,k']|² + σ²_k)`.
pub fn sinr<T: Real>(q: &CMatrix<T>, powers: &[T], noise: &[T]) -> Result<Vec<T>> {
    let k = q.nrows();
    if q.ncols() != k || powers.len() != k || noise.len() != k {
        return Err(dims("sinr", k, format!("{}x{} / {} / {}", q.nrows(), q.ncols(), powers.len(), noise.len())));
    }
    Ok((0..k)
        .map(|i| {
            let interference = (0..k)
                .filter(|&j| j != i)
                .fold(T::zero(), |acc, j| acc + powers[j] * cabs2(q[(i, j)]));
            powers[i] * cabs2(q[(i, i)]) / (interference + noise[i])
        })
        .collect())
}

/// `Σ log₂(1 + γ_k)` in bit/s/Hz.
pub fn sum_rate<T: Real>(gamma: &[T]) -> T {
    gamma
        .iter()
        .fold(T::zero(), |acc, g| acc + (T::one() + *g).log2())
}

/// SINR, per-user rates and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport<T: Real> {
    pub sinr: Vec<T>,
    pub rates: Vec<T>,
    pub sum_rate: T,
    pub noise: Vec<T>,
}

pub fn rate_report<T: Real>(q: &CMatrix<T>, powers: &[T], noise: &[T]) -> Result<RateReport<T>> {
    let sinr = sinr(q, powers, noise)?;
    let rates: Vec<T> = sinr.iter().map(|g| (T::one() + *g).log2()).collect();
    let sum_rate = rates.iter().fold(T::zero(), |a, r| a + *r);
    Ok(RateReport {
        sinr,
        rates,
        sum_rate,
        noise: noise.to_vec(),
    })
}

/// Result of iterative water-filling.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<T: Real> {
    pub powers: Vec<T>,
    pub total: T,
    /// Water level `κ` of the final round.
    pub level: T,
    pub rounds: usize,
    /// False when `max_rounds` ran out before the powers settled.
    pub converged: bool,
}

/// Water-filling for fixed inverse gains: `p_k = (κ − e_k)⁺`, `Σ p_k = budget`.
/// The level is bracketed by bisection and then solved exactly on the active set.
pub fn pour<T: Real>(inverse_gains: &[T], budget: T) -> (Vec<T>, T) {
    let filled = |level: T| {
        inverse_gains
            .iter()
            .fold(T::zero(), |acc, e| acc + (level - *e).max(T::zero()))
    };
    let lowest = inverse_gains.iter().cloned().fold(inverse_gains[0], |a, b| a.min(b));
    let highest = inverse_gains.iter().cloned().fold(inverse_gains[0], |a, b| a.max(b));
    let (mut lo, mut hi) = (lowest, highest + budget);
    for _ in 0..200 {
        let mid = (lo + hi) / T::two();
        if mid <= lo || mid >= hi {
            break;
        }
        if filled(mid) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let bracket = (lo + hi) / T::two();
    let active: Vec<usize> = (0..inverse_gains.len())
        .filter(|&i| inverse_gains[i] < bracket)
        .collect();
    let level = if active.is_empty() {
        bracket
    } else {
        let sum = active.iter().fold(T::zero(), |a, &i| a + inverse_gains[i]);
        (budget + sum) / lit::<T>(active.len() as f64)
    };
    let powers = inverse_gains
        .iter()
        .map(|e| (level - *e).max(T::zero()))
        .collect();
    (powers, level)
}

/// Iterative water-filling: inverse gains
/// `e_k = (Σ_{k'≠k} p_{k'}|Q[k,k']|² + σ²_k) / |Q[k,k]|²` are recomputed from
/// the previous powers each round, starting from a uniform split. Stops when
/// the largest power change is below `tol · budget`.
pub fn water_filling<T: Real>(
    q: &CMatrix<T>,
    noise: &[T],
    budget: T,
    max_rounds: usize,
    tol: T,
) -> Result<PowerAllocation<T>> {
    let k = q.nrows();
    if q.ncols() != k || noise.len() != k || k == 0 {
        return Err(dims("water_filling", k, format!("{}x{} / {}", q.nrows(), q.ncols(), noise.len())));
    }
    if !(budget > T::zero()) {
        return Err(invalid("p_t", "power budget must be positive"));
    }
    let gains: Vec<T> = (0..k).map(|i| cabs2(q[(i, i)])).collect();
    if let Some(i) = gains.iter().position(|g| !(*g > T::zero())) {
        return Err(Error::ZeroDiagonal(i));
    }
    let mut powers = vec![budget / lit::<T>(k as f64); k];
    let mut level = T::zero();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        let inverse: Vec<T> = (0..k)
            .map(|i| {
                let interference = (0..k)
                    .filter(|&j| j != i)
                    .fold(T::zero(), |acc, j| acc + powers[j] * cabs2(q[(i, j)]));
                (interference + noise[i]) / gains[i]
            })
            .collect();
        let (next, kappa) = pour(&inverse, budget);
        rounds += 1;
        level = kappa;
        let change = next
            .iter()
            .zip(&powers)
            .fold(T::zero(), |a, (n, p)| a.max((*n - *p).abs()));
        powers = next;
        if change < tol * budget {
            converged = true;
            break;
        }
    }
    Ok(PowerAllocation {
        powers,
        total: budget,
        level,
        rounds,
        converged,
    })
}

/// Sample grid on the ground plane; both axes inclusive of their end points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T: Real> {
    pub x_min: T,
    pub x_max: T,
    pub nx: usize,
    pub y_min: T,
    pub y_max: T,
    pub ny: usize,
}

impl<T: Real> GridSpec<T> {
    fn axis(min: T, max: T, n: usize, i: usize) -> T {
        if n <= 1 {
            return min;
        }
        min + (max - min) * lit::<T>(i as f64 / (n - 1) as f64)
    }

    pub fn x(&self, i: usize) -> T {
        Self::axis(self.x_min, self.x_max, self.nx, i)
    }

    pub fn y(&self, j: usize) -> T {
        Self::axis(self.y_min, self.y_max, self.ny, j)
    }
}

/// How per-stream energies combine at a sample point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyMode {
    /// `Σ_k |h^H g_k|²`.
    #[default]
    Incoherent,
    /// `|Σ_k h^H g_k|²`.
    Coherent,
}

/// Received energy over a ground grid, row-major with `ny` rows of `nx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T: Real> {
    pub grid: GridSpec<T>,
    pub values: Vec<T>,
}

impl<T: Real> Heatmap<T> {
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[iy * self.grid.nx + ix]
    }
}

/// Per-stream projections `h_p^H g_k` at ground point `p`, with the unit-norm
/// near-field channel of `p`.
pub fn stream_projections<T: Real>(
    geometry: &SceneGeometry<T>,
    g: &CMatrix<T>,
    point: &Point3<T>,
) -> Result<Vec<Cplx<T>>> {
    let atoms = geometry
        .layers
        .last()
        .ok_or_else(|| invalid("layers", "scene has no layers"))?;
    if g.nrows() != atoms.len() {
        return Err(dims("heatmap G rows", atoms.len(), g.nrows()));
    }
    let col = nearfield_column(atoms, point, geometry.wavelength)?;
    let norm = lit::<T>(atoms.len() as f64).sqrt();
    Ok(g.column_iter()
        .map(|gk| {
            col.iter()
                .zip(gk.iter())
                .fold(Cplx::new(T::zero(), T::zero()), |acc, (h, x)| acc + h.conj() * *x)
                / norm
        })
        .collect())
}

fn energy<T: Real>(proj: &[Cplx<T>], mode: EnergyMode) -> T {
    match mode {
        EnergyMode::Incoherent => proj.iter().fold(T::zero(), |a, z| a + cabs2(*z)),
        EnergyMode::Coherent => cabs2(
            proj.iter()
                .fold(Cplx::new(T::zero(), T::zero()), |a, z| a + *z),
        ),
    }
}

pub fn heatmap<T: Real>(
    geometry: &SceneGeometry<T>,
    g: &CMatrix<T>,
    grid: GridSpec<T>,
    mode: EnergyMode,
) -> Result<Heatmap<T>> {
    if grid.nx == 0 || grid.ny == 0 {
        return Err(invalid("grid", "resolution must be at least 1x1"));
    }
    let values: Result<Vec<T>> = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map(|idx| {
            let p = Point3::new(grid.x(idx % grid.nx), grid.y(idx / grid.nx), T::zero());
            stream_projections(geometry, g, &p).map(|proj| energy(&proj, mode))
        })
        .collect();
    Ok(Heatmap {
        grid,
        values: values?,
    })
}

/// For each stream `k`, whether user `k` receives more of that stream's
/// energy than every other user does: `|h_k^H g_k|² > |h_j^H g_k|²`, `j ≠ k`.
pub fn focusing_dominance<T: Real>(
    geometry: &SceneGeometry<T>,
    g: &CMatrix<T>,
) -> Result<Vec<bool>> {
    let per_user: Vec<Vec<Cplx<T>>> = geometry
        .users
        .iter()
        .map(|u| stream_projections(geometry, g, u))
        .collect::<Result<_>>()?;
    let k = g.ncols();
    Ok((0..k)
        .map(|s| {
            let own = cabs2(per_user[s][s]);
            (0..per_user.len())
                .filter(|&j| j != s)
                .all(|j| own > cabs2(per_user[j][s]))
        })
        .collect())
}
