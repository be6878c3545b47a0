//! Scene layout: base-station array, metasurface layers and user positions.
//!
//! Coordinates are in metres. The BS array and every metasurface layer sit in
//! planes parallel to x–z, stacked along +y; users stand on the ground plane
//! `z = 0`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{Point3, Vector3};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Parameters from which a [`SceneGeometry`] is built.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig<T: Real> {
    pub wavelength: T,
    /// Number of active BS antennas `S`.
    pub antennas: usize,
    /// Columns of the BS grid; antennas fill it row by row.
    pub bs_cols: usize,
    /// Number of metasurface layers `L`.
    pub layers: usize,
    /// Meta-atoms per layer `M`; must be a perfect square.
    pub atoms: usize,
    /// Number of users `K`.
    pub users: usize,
    pub antenna_spacing: T,
    pub atom_spacing: T,
    pub layer_spacing: T,
    /// Height of the BS array and of the SIM centre.
    pub height: T,
    pub ue_center: (T, T),
    pub ue_radius: T,
}

impl<T: Real> Default for SceneConfig<T> {
    fn default() -> Self {
        let wavelength = lit::<T>(0.03);
        Self {
            wavelength,
            antennas: 4,
            bs_cols: 2,
            layers: 12,
            atoms: 225,
            users: 4,
            antenna_spacing: wavelength,
            atom_spacing: wavelength,
            layer_spacing: lit::<T>(1.2) * wavelength,
            height: lit(3.0),
            ue_center: (lit(3.0), lit(3.0)),
            ue_radius: lit(3.0),
        }
    }
}

impl<T: Real> SceneConfig<T> {
    /// Sets `K = S = users` and picks the most square BS grid that holds them.
    pub fn with_users(mut self, users: usize) -> Self {
        self.users = users;
        self.antennas = users;
        self.bs_cols = (users as f64).sqrt().ceil().max(1.0) as usize;
        self
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    fn validate(&self) -> Result<usize> {
        if self.antennas == 0 {
            return Err(invalid("antennas", "must be at least 1"));
        }
        if self.bs_cols == 0 {
            return Err(invalid("bs_cols", "must be at least 1"));
        }
        if self.layers == 0 {
            return Err(invalid("layers", "must be at least 1"));
        }
        if self.users == 0 {
            return Err(invalid("users", "must be at least 1"));
        }
        if self.atoms == 0 {
            return Err(invalid("atoms", "must be at least 1"));
        }
        let side = (self.atoms as f64).sqrt().round() as usize;
        if side * side != self.atoms {
            return Err(Error::NonSquareLayer(self.atoms));
        }
        let positive = [
            ("wavelength", self.wavelength),
            ("antenna_spacing", self.antenna_spacing),
            ("atom_spacing", self.atom_spacing),
            ("layer_spacing", self.layer_spacing),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.ue_radius >= T::zero()) || !self.ue_radius.is_finite() {
            return Err(invalid("ue_radius", "must be non-negative and finite"));
        }
        if !self.height.is_finite() || !self.ue_center.0.is_finite() || !self.ue_center.1.is_finite()
        {
            return Err(invalid("height", "coordinates must be finite"));
        }
        Ok(side)
    }
}

/// Every position in the scene plus the derived spacings.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry<T: Real> {
    pub wavelength: T,
    pub antenna_spacing: T,
    pub atom_spacing: T,
    pub layer_spacing: T,
    /// Meta-atom area, `d_M^2`.
    pub atom_area: T,
    pub height: T,
    pub ue_center: (T, T),
    pub ue_radius: T,
    pub atoms_per_side: usize,
    pub bs: Vec<Point3<T>>,
    /// `layers[l][m]`, layer 0 closest to the BS.
    pub layers: Vec<Vec<Point3<T>>>,
    pub users: Vec<Point3<T>>,
}

/// Points of an `n`-column grid in the x–z plane, centred on `center`,
/// filled row by row. Only the first `count` points are emitted.
fn planar_grid<T: Real>(center: Point3<T>, cols: usize, count: usize, spacing: T) -> Vec<Point3<T>> {
    let rows = count.div_ceil(cols);
    let half_c = lit::<T>((cols as f64 - 1.0) / 2.0);
    let half_r = lit::<T>((rows as f64 - 1.0) / 2.0);
    (0..count)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let dx = (lit::<T>(c as f64) - half_c) * spacing;
            let dz = (lit::<T>(r as f64) - half_r) * spacing;
            Point3::new(center.x + dx, center.y, center.z + dz)
        })
        .collect()
}

/// Lays out the BS array, the SIM layers and draws the users uniformly over
/// the disk of radius `ue_radius` around `ue_center`.
pub fn build_scene<T: Real, R: Rng + ?Sized>(
    config: &SceneConfig<T>,
    rng: &mut R,
) -> Result<SceneGeometry<T>> {
    let side = config.validate()?;
    let bs = planar_grid(
        Point3::new(T::zero(), T::zero(), config.height),
        config.bs_cols,
        config.antennas,
        config.antenna_spacing,
    );
    let layers = (1..=config.layers)
        .map(|l| {
            let center = Point3::new(
                T::zero(),
                lit::<T>(l as f64) * config.layer_spacing,
                config.height,
            );
            planar_grid(center, side, config.atoms, config.atom_spacing)
        })
        .collect();
    let users = (0..config.users)
        .map(|_| {
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let r = config.ue_radius * lit::<T>(u.sqrt());
            let a = T::two_pi() * lit::<T>(v);
            Point3::new(
                config.ue_center.0 + r * a.cos(),
                config.ue_center.1 + r * a.sin(),
                T::zero(),
            )
        })
        .collect();
    Ok(SceneGeometry {
        wavelength: config.wavelength,
        antenna_spacing: config.antenna_spacing,
        atom_spacing: config.atom_spacing,
        layer_spacing: config.layer_spacing,
        atom_area: config.atom_spacing * config.atom_spacing,
        height: config.height,
        ue_center: config.ue_center,
        ue_radius: config.ue_radius,
        atoms_per_side: side,
        bs,
        layers,
        users,
    })
}

impl<T: Real> SceneGeometry<T> {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn atoms_per_layer(&self) -> usize {
        self.atoms_per_side * self.atoms_per_side
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.bs.len()
    }

    /// Centre of the last (user-facing) layer.
    pub fn output_center(&self) -> Point3<T> {
        let l = self.layers.len() as f64;
        Point3::new(T::zero(), lit::<T>(l) * self.layer_spacing, self.height)
    }

    /// Replaces the users with fixed ground positions. The user disk is
    /// recentred on their centroid and sized to enclose them.
    pub fn with_user_positions(mut self, users: Vec<Point3<T>>) -> Result<Self> {
        if users.is_empty() {
            return Err(invalid("users", "at least one user required"));
        }
        if users.iter().any(|p| p.z != T::zero() || !p.x.is_finite() || !p.y.is_finite()) {
            return Err(invalid("users", "users must lie on the ground plane z = 0"));
        }
        let n = lit::<T>(users.len() as f64);
        let cx = users.iter().fold(T::zero(), |a, p| a + p.x) / n;
        let cy = users.iter().fold(T::zero(), |a, p| a + p.y) / n;
        let radius = users
            .iter()
            .map(|p| (p.x - cx).hypot(p.y - cy))
            .fold(T::zero(), |a, b| a.max(b));
        self.ue_center = (cx, cy);
        self.ue_radius = radius;
        self.users = users;
        Ok(self)
    }

    /// Stable hash of every position and the wavelength.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        to_f64(self.wavelength).to_bits().hash(&mut h);
        to_f64(self.atom_area).to_bits().hash(&mut h);
        let all = self.bs.iter().chain(self.layers.iter().flatten());
        for p in all {
            for c in [p.x, p.y, p.z] {
                to_f64(c).to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// `2 D^2 / lambda` with `D` the diagonal aperture of one layer.
pub fn rayleigh_distance<T: Real>(geometry: &SceneGeometry<T>) -> T {
    let side = lit::<T>(geometry.atoms_per_side as f64);
    let diag = T::two().sqrt() * (side - T::one()) * geometry.atom_spacing;
    T::two() * diag * diag / geometry.wavelength
}

/// Euclidean distance between two points.
pub fn link_distance<T: Real>(p: &Point3<T>, q: &Point3<T>) -> T {
    (q - p).norm()
}

/// Angle in `[0, pi]` between `q - p` and `normal`.
pub fn link_angle<T: Real>(p: &Point3<T>, q: &Point3<T>, normal: &Vector3<T>) -> Result<T> {
    let d = q - p;
    let dn = d.norm();
    if dn == T::zero() {
        return Err(Error::CoincidentPoints("link_angle"));
    }
    let nn = normal.norm();
    if nn == T::zero() {
        return Err(invalid("normal", "zero-length normal"));
    }
    let c = (d.dot(normal) / (dn * nn)).clamp(-T::one(), T::one());
    Ok(c.acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(cfg: &SceneConfig<f64>, seed: u64) -> SceneGeometry<f64> {
        build_scene(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn default_scene_layout() {
        let g = scene(&SceneConfig::default(), 1);
        assert_eq!(g.layers.len(), 12);
        assert!(g.layers.iter().all(|l| l.len() == 225));
        assert_eq!(g.bs.len(), 4);
        let c = g.layers[0].iter().fold(Vector3::zeros(), |a, p| a + p.coords) / 225.0;
        assert!((c - Vector3::new(0.0, 0.036, 3.0)).norm() < 1e-12);
        let bc = g.bs.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / 4.0;
        assert!((bc - Vector3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
        // 15 distinct x and z values, spaced by d_M
        let mut xs: Vec<f64> = g.layers[3].iter().map(|p| p.x).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(xs.len(), 15);
        assert!((xs[1] - xs[0] - 0.03).abs() < 1e-12);
    }

    #[test]
    fn single_atom_layer() {
        let cfg = SceneConfig {
            atoms: 1,
            layers: 1,
            ..SceneConfig::default()
        };
        let g = scene(&cfg, 0);
        let p = g.layers[0][0];
        assert!((p - Point3::new(0.0, 0.036, 3.0)).norm() < 1e-15);
    }

    #[test]
    fn users_inside_disk_and_deterministic() {
        let cfg = SceneConfig::<f64>::default().with_users(6);
        let a = scene(&cfg, 42);
        let b = scene(&cfg, 42);
        assert_eq!(a.users, b.users);
        for u in &a.users {
            assert_eq!(u.z, 0.0);
            assert!((u.x - 3.0).hypot(u.y - 3.0) <= 3.0 + 1e-12);
        }
        let c = scene(&cfg, 43);
        assert_ne!(a.users, c.users);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SceneConfig::<f64> {
            atoms: 50,
            ..Default::default()
        };
        assert_eq!(build_scene(&cfg, &mut rng), Err(Error::NonSquareLayer(50)));
        let cfg = SceneConfig::<f64> {
            layer_spacing: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            build_scene(&cfg, &mut rng),
            Err(Error::InvalidParameter { name: "layer_spacing", .. })
        ));
        let cfg = SceneConfig::<f64> {
            atom_spacing: -0.01,
            ..Default::default()
        };
        assert!(build_scene(&cfg, &mut rng).is_err());
    }

    #[test]
    fn rayleigh_values() {
        let g = scene(&SceneConfig::default(), 0);
        assert!((rayleigh_distance(&g) - 23.52).abs() < 1e-9);
        let g1 = scene(&SceneConfig { atoms: 1, ..Default::default() }, 0);
        assert_eq!(rayleigh_distance(&g1), 0.0);
        let g4 = scene(&SceneConfig { atoms: 4, ..Default::default() }, 0);
        assert!((rayleigh_distance(&g4) - 0.12).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_monotone() {
        let base = SceneConfig::<f64>::default();
        let mut last = -1.0;
        for side in 1..=16usize {
            let g = scene(&SceneConfig { atoms: side * side, ..base.clone() }, 0);
            let r = rayleigh_distance(&g);
            assert!(r >= last);
            last = r;
        }
        let r_small = rayleigh_distance(&scene(&SceneConfig { atom_spacing: 0.02, ..base.clone() }, 0));
        let r_big = rayleigh_distance(&scene(&SceneConfig { atom_spacing: 0.04, ..base.clone() }, 0));
        assert!(r_small < r_big);
        // fixed aperture, longer wavelength -> shorter Rayleigh distance
        let r_long = rayleigh_distance(&scene(&SceneConfig { wavelength: 0.06, ..base.clone() }, 0));
        assert!(r_long < rayleigh_distance(&scene(&base, 0)));
    }

    #[test]
    fn users_are_in_near_field() {
        let g = scene(&SceneConfig::default().with_users(4), 5);
        let ray = rayleigh_distance(&g);
        for u in &g.users {
            for a in g.layers.last().unwrap() {
                assert!(link_distance(u, a) < ray);
            }
        }
    }

    #[test]
    fn distances_and_angles() {
        let o = Point3::new(0.0, 0.0, 0.0);
        let y = Vector3::new(0.0, 1.0, 0.0);
        assert_eq!(link_distance(&o, &Point3::new(0.0, 1.0, 0.0)), 1.0);
        assert_eq!(link_angle(&o, &Point3::new(0.0, 1.0, 0.0), &y).unwrap(), 0.0);
        let a = link_angle(&o, &Point3::new(1.0, 0.0, 0.0), &y).unwrap();
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(link_distance(&o, &Point3::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(link_angle(&o, &o, &y), Err(Error::CoincidentPoints("link_angle")));
    }

    #[test]
    fn f32_scene_builds() {
        let g = build_scene(
            &SceneConfig::<f32>::default(),
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        assert!((rayleigh_distance(&g) - 23.52).abs() < 1e-3);
    }
}
