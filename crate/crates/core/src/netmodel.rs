//! Network geometry, large-scale fading and small-scale channel generation.
//!
//! APs sit on a square grid centred in a square area; users are dropped
//! uniformly over the same area (no wrap-around, so users near the border see
//! fewer close APs). Large-scale fading follows a log-distance model with
//! shadowing that is correlated across users for a given AP and independent
//! across APs. Small-scale fading is correlated Rayleigh with the Gaussian
//! local scattering model for a half-wavelength uniform linear array whose
//! orientation is shared by all APs.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};

/// Diagonal loading added to the shadowing covariance before Cholesky.
pub const SHADOW_JITTER: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_users: usize,
    /// Side of the square area in meters. Defaults to the AP grid extent.
    pub area_side: Option<f64>,
    pub ap_grid_spacing: f64,
    /// Columns of the AP grid. Unset means a square grid.
    pub ap_grid_columns: Option<usize>,
    pub ap_height_delta: f64,
    /// Shadowing standard deviation in dB.
    pub shadow_std: f64,
    /// Distance (m) over which the shadowing correlation halves.
    pub shadow_decorrelation: f64,
    /// Angular standard deviation of the local scattering model, degrees.
    pub asd_deg: f64,
    /// Per-AP power budget relative to unit noise, dB.
    pub rho_max_db: f64,
    pub pathloss_intercept: f64,
    pub pathloss_exponent_coeff: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_aps: 100,
            antennas_per_ap: 4,
            num_users: 20,
            area_side: None,
            ap_grid_spacing: 100.0,
            ap_grid_columns: None,
            ap_height_delta: 10.0,
            shadow_std: 4.0,
            shadow_decorrelation: 9.0,
            asd_deg: 15.0,
            rho_max_db: 94.0,
            pathloss_intercept: -30.5,
            pathloss_exponent_coeff: 36.7,
        }
    }
}

impl NetworkConfig {
    /// `(rows, columns)` of the AP grid.
    pub fn grid_dims(&self) -> Result<(usize, usize)> {
        let cols = match self.ap_grid_columns {
            Some(c) => c,
            None => {
                let side = (self.num_aps as f64).sqrt().round() as usize;
                if side * side != self.num_aps {
                    return Err(Error::Config(format!(
                        "num_aps = {} does not form a square grid",
                        self.num_aps
                    )));
                }
                side
            }
        };
        if cols == 0 || !self.num_aps.is_multiple_of(cols) {
            return Err(Error::Config(format!(
                "num_aps = {} does not fill a grid with {cols} columns",
                self.num_aps
            )));
        }
        Ok((self.num_aps / cols, cols))
    }

    /// Side of the square area: the configured one, or the longer grid extent.
    pub fn area(&self) -> f64 {
        let extent = match self.grid_dims() {
            Ok((r, c)) => r.max(c) as f64,
            Err(_) => (self.num_aps as f64).sqrt().ceil(),
        };
        self.area_side.unwrap_or(extent * self.ap_grid_spacing)
    }

    /// Linear per-AP power budget.
    pub fn rho_max(&self) -> f64 {
        10f64.powf(self.rho_max_db / 10.0)
    }

    pub fn asd_rad(&self) -> f64 {
        self.asd_deg.to_radians()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_aps == 0 || self.antennas_per_ap == 0 || self.num_users == 0 {
            return Err(Error::Config(
                "num_aps, antennas_per_ap and num_users must be at least 1".into(),
            ));
        }
        let (rows, cols) = self.grid_dims()?;
        if !(self.ap_grid_spacing > 0.0) {
            return Err(Error::Config("ap_grid_spacing must be positive".into()));
        }
        if self.area() + 1e-9 < rows.max(cols) as f64 * self.ap_grid_spacing {
            return Err(Error::Config(format!(
                "area side {} m cannot hold a {rows}x{cols} grid at {} m spacing",
                self.area(),
                self.ap_grid_spacing
            )));
        }
        let positive = [
            ("shadow_std", self.shadow_std),
            ("shadow_decorrelation", self.shadow_decorrelation),
            ("asd_deg", self.asd_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.ap_height_delta >= 0.0) {
            return Err(Error::Config("ap_height_delta must be non-negative".into()));
        }
        Ok(())
    }

    /// Pathloss in dB at 3-D distance `d`, without shadowing.
    pub fn pathloss_db(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::Domain(format!("distance must be positive, got {d}")));
        }
        Ok(self.pathloss_intercept - self.pathloss_exponent_coeff * d.log10())
    }
}

/// Pathloss in dB with the default model: `-30.5 - 36.7 log10(d / 1 m)`.
pub fn pathloss_db(d: f64) -> Result<f64> {
    NetworkConfig::default().pathloss_db(d)
}

/// RNG for one Monte Carlo trial. Each trial gets its own ChaCha stream under
/// the master seed, so trials can run in any order or in parallel.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub area_side: f64,
}

impl Geometry {
    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn horizontal_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// K x K matrix of user-to-user distances.
    pub fn user_distances(&self) -> DMatrix<f64> {
        let k = self.num_users();
        DMatrix::from_fn(k, k, |i, j| {
            Self::horizontal_distance(self.user_positions[i], self.user_positions[j])
        })
    }

    /// K x L matrix of 3-D user/AP distances including the height offset.
    pub fn ap_distances(&self, height_delta: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_users(), self.num_aps(), |k, l| {
            let h = Self::horizontal_distance(self.user_positions[k], self.ap_positions[l]);
            (h * h + height_delta * height_delta).sqrt()
        })
    }

    /// K x L matrix of azimuths from each AP towards each user.
    pub fn azimuths(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_users(), self.num_aps(), |k, l| {
            let u = self.user_positions[k];
            let a = self.ap_positions[l];
            (u[1] - a[1]).atan2(u[0] - a[0])
        })
    }
}

/// Places APs on the configured grid and drops users uniformly.
pub fn generate_geometry<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Geometry> {
    config.validate()?;
    let (rows, cols) = config.grid_dims()?;
    let area = config.area();
    let spacing = config.ap_grid_spacing;
    let offset_x = (area - cols as f64 * spacing) / 2.0;
    let offset_y = (area - rows as f64 * spacing) / 2.0;
    let mut ap_positions = Vec::with_capacity(config.num_aps);
    for row in 0..rows {
        for col in 0..cols {
            ap_positions.push([
                offset_x + (col as f64 + 0.5) * spacing,
                offset_y + (row as f64 + 0.5) * spacing,
            ]);
        }
    }
    let user_positions = (0..config.num_users)
        .map(|_| [rng.random::<f64>() * area, rng.random::<f64>() * area])
        .collect();
    Ok(Geometry {
        ap_positions,
        user_positions,
        area_side: area,
    })
}

/// Geometry for a master seed, using stream 0.
pub fn generate_geometry_seeded(config: &NetworkConfig, seed: u64) -> Result<Geometry> {
    generate_geometry(config, &mut trial_rng(seed, 0))
}

/// Covariance of the shadowing terms of all users towards one AP:
/// `std^2 * 2^(-delta / decorrelation)`, plus diagonal jitter.
pub fn shadow_covariance(geometry: &Geometry, config: &NetworkConfig) -> DMatrix<f64> {
    let var = config.shadow_std * config.shadow_std;
    let mut cov = geometry
        .user_distances()
        .map(|d| var * 2f64.powf(-d / config.shadow_decorrelation));
    for i in 0..cov.nrows() {
        cov[(i, i)] += SHADOW_JITTER;
    }
    cov
}

/// Draws the K x L shadowing matrix in dB.
pub fn sample_shadowing<R: Rng + ?Sized>(
    geometry: &Geometry,
    config: &NetworkConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let k = geometry.num_users();
    let chol = nalgebra::Cholesky::new(shadow_covariance(geometry, config))
        .ok_or(Error::ShadowCovariance)?;
    let factor = chol.l();
    let mut shadow = DMatrix::zeros(k, geometry.num_aps());
    for l in 0..geometry.num_aps() {
        let z = nalgebra::DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        shadow.set_column(l, &(&factor * z));
    }
    Ok(shadow)
}

#[derive(Clone, Debug)]
pub struct LargeScaleFading {
    /// Linear pathloss, K x L.
    pub beta: DMatrix<f64>,
    pub beta_db: DMatrix<f64>,
    /// Shadowing in dB, K x L.
    pub shadow: DMatrix<f64>,
    /// 3-D distances, K x L.
    pub distances: DMatrix<f64>,
    /// User-to-user distances, K x K.
    pub user_distances: DMatrix<f64>,
}

pub fn large_scale_fading<R: Rng + ?Sized>(
    geometry: &Geometry,
    config: &NetworkConfig,
    rng: &mut R,
) -> Result<LargeScaleFading> {
    let distances = geometry.ap_distances(config.ap_height_delta);
    let shadow = sample_shadowing(geometry, config, rng)?;
    let mut beta_db = DMatrix::zeros(distances.nrows(), distances.ncols());
    for (i, d) in distances.iter().enumerate() {
        beta_db[i] = config.pathloss_db(*d)? + shadow[i];
    }
    let beta = beta_db.map(|db| 10f64.powf(db / 10.0));
    Ok(LargeScaleFading {
        beta,
        beta_db,
        shadow,
        distances,
        user_distances: geometry.user_distances(),
    })
}

/// Gaussian local scattering correlation matrix of an N-antenna
/// half-wavelength ULA, nominal angle `theta` and angular std `asd` (radians).
pub fn spatial_correlation(beta: f64, theta: f64, asd: f64, n: usize) -> CMat {
    let mut r = CMat::zeros(n, n);
    for m in 0..n {
        for q in 0..n {
            let dist = m as f64 - q as f64;
            let phase = PI * dist * theta.sin();
            let spread = (-(asd * asd / 2.0) * (PI * dist * theta.cos()).powi(2)).exp();
            r[(m, q)] = C64::from_polar(beta * spread, phase);
        }
    }
    // The diagonal is already beta; renormalise anyway so Tr(R)/N is exact.
    let trace: f64 = (0..n).map(|i| r[(i, i)].re).sum();
    let scale = beta * n as f64 / trace;
    if scale != 1.0 {
        r *= C64::new(scale, 0.0);
    }
    r
}

/// Correlation matrices and nominal angles for every (user, AP) pair.
#[derive(Clone, Debug)]
pub struct SpatialCorrelation {
    num_aps: usize,
    pub matrices: Vec<CMat>,
    pub angles: DMatrix<f64>,
}

impl SpatialCorrelation {
    pub fn build(fading: &LargeScaleFading, geometry: &Geometry, config: &NetworkConfig) -> Self {
        let angles = geometry.azimuths();
        let (k, l) = fading.beta.shape();
        let asd = config.asd_rad();
        let mut matrices = Vec::with_capacity(k * l);
        for user in 0..k {
            for ap in 0..l {
                matrices.push(spatial_correlation(
                    fading.beta[(user, ap)],
                    angles[(user, ap)],
                    asd,
                    config.antennas_per_ap,
                ));
            }
        }
        Self {
            num_aps: l,
            matrices,
            angles,
        }
    }

    pub fn get(&self, user: usize, ap: usize) -> &CMat {
        &self.matrices[user * self.num_aps + ap]
    }
}

/// Square-root factor `F` with `F F^H = R`, from the Hermitian eigendecomposition.
/// Slightly negative eigenvalues from round-off are clipped to zero.
pub fn correlation_sqrt(r: &CMat) -> Option<CMat> {
    let eig = r.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut f = eig.eigenvectors;
    for (j, v) in eig.eigenvalues.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Some(f)
}

fn complex_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        C64::new(
            s * rng.sample::<f64, _>(StandardNormal),
            s * rng.sample::<f64, _>(StandardNormal),
        )
    })
}

/// Draws `h ~ CN(0, R)`.
pub fn sample_channel<R: Rng + ?Sized>(r: &CMat, rng: &mut R) -> Option<CVec> {
    let f = correlation_sqrt(r)?;
    Some(f * complex_gaussian(r.nrows(), rng))
}

/// All channel vectors of one coherence interval.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub num_users: usize,
    pub num_aps: usize,
    pub antennas: usize,
    pub trial: u64,
    channels: Vec<CVec>,
}

impl ChannelRealization {
    pub fn from_vectors(
        num_users: usize,
        num_aps: usize,
        antennas: usize,
        trial: u64,
        channels: Vec<CVec>,
    ) -> Result<Self> {
        if channels.len() != num_users * num_aps || channels.iter().any(|h| h.len() != antennas) {
            return Err(Error::Dimension(format!(
                "expected {num_users}x{num_aps} channels of length {antennas}"
            )));
        }
        Ok(Self {
            num_users,
            num_aps,
            antennas,
            trial,
            channels,
        })
    }

    pub fn sample<R: Rng + ?Sized>(
        correlation: &SpatialCorrelation,
        num_users: usize,
        num_aps: usize,
        trial: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut channels = Vec::with_capacity(num_users * num_aps);
        for user in 0..num_users {
            for ap in 0..num_aps {
                let h = sample_channel(correlation.get(user, ap), rng)
                    .ok_or(Error::Factorization { user, ap })?;
                channels.push(h);
            }
        }
        let antennas = channels.first().map_or(0, |h| h.len());
        Self::from_vectors(num_users, num_aps, antennas, trial, channels)
    }

    /// Channel between user `k` and AP `l`.
    pub fn h(&self, k: usize, l: usize) -> &CVec {
        &self.channels[k * self.num_aps + l]
    }
}

/// Everything drawn for one Monte Carlo trial.
#[derive(Clone, Debug)]
pub struct NetworkRealization {
    pub geometry: Geometry,
    pub fading: LargeScaleFading,
    pub correlation: SpatialCorrelation,
    pub channels: ChannelRealization,
}

impl NetworkRealization {
    /// Deterministic in `(config, master_seed, trial)`.
    pub fn generate(config: &NetworkConfig, master_seed: u64, trial: u64) -> Result<Self> {
        let mut rng = trial_rng(master_seed, trial);
        let geometry = generate_geometry(config, &mut rng)?;
        let fading = large_scale_fading(&geometry, config, &mut rng)?;
        let correlation = SpatialCorrelation::build(&fading, &geometry, config);
        let channels = ChannelRealization::sample(
            &correlation,
            config.num_users,
            config.num_aps,
            trial,
            &mut rng,
        )?;
        Ok(Self {
            geometry,
            fading,
            correlation,
            channels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> NetworkConfig {
        NetworkConfig {
            num_aps: 16,
            num_users: 6,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn pathloss_anchor_points() {
        assert!((pathloss_db(1.0).unwrap() + 30.5).abs() < 1e-12);
        assert!((pathloss_db(10.0).unwrap() + 67.2).abs() < 1e-12);
        assert!((pathloss_db(100.0).unwrap() + 103.9).abs() < 1e-12);
        assert!(pathloss_db(0.0).is_err());
        assert!(pathloss_db(-3.0).is_err());
    }

    #[test]
    fn grid_of_hundred_aps() {
        let cfg = NetworkConfig::default();
        let g = generate_geometry_seeded(&cfg, 7).unwrap();
        assert_eq!(g.num_aps(), 100);
        assert!((g.area_side - 1000.0).abs() < 1e-12);
        let xs: Vec<f64> = g.ap_positions.iter().map(|p| p[0]).collect();
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((min - 50.0).abs() < 1e-12 && (max - 950.0).abs() < 1e-12);
        for p in &g.user_positions {
            assert!(p[0] >= 0.0 && p[0] <= 1000.0 && p[1] >= 0.0 && p[1] <= 1000.0);
        }
    }

    #[test]
    fn single_ap_sits_at_center() {
        let cfg = NetworkConfig {
            num_aps: 1,
            num_users: 3,
            area_side: Some(400.0),
            ..NetworkConfig::default()
        };
        let g = generate_geometry_seeded(&cfg, 1).unwrap();
        assert_eq!(g.ap_positions, vec![[200.0, 200.0]]);
    }

    #[test]
    fn non_square_ap_count_rejected() {
        let cfg = NetworkConfig {
            num_aps: 10,
            ..NetworkConfig::default()
        };
        assert!(matches!(
            generate_geometry_seeded(&cfg, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rectangular_grid_by_columns() {
        let cfg = NetworkConfig {
            num_aps: 20,
            ap_grid_columns: Some(5),
            ..NetworkConfig::default()
        };
        assert_eq!(cfg.grid_dims().unwrap(), (4, 5));
        let g = generate_geometry_seeded(&cfg, 2).unwrap();
        assert!((g.area_side - 500.0).abs() < 1e-12);
        assert_eq!(g.ap_positions[0], [50.0, 100.0]);
        assert_eq!(g.ap_positions[19], [450.0, 400.0]);
        let bad = NetworkConfig {
            ap_grid_columns: Some(3),
            ..cfg
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn geometry_is_deterministic() {
        let cfg = small_config();
        assert_eq!(
            generate_geometry_seeded(&cfg, 42).unwrap(),
            generate_geometry_seeded(&cfg, 42).unwrap()
        );
    }

    #[test]
    fn shadow_covariance_closed_form() {
        let cfg = NetworkConfig::default();
        let g = Geometry {
            ap_positions: vec![[0.0, 0.0]],
            user_positions: vec![[0.0, 0.0], [0.0, 0.0], [9.0, 0.0]],
            area_side: 100.0,
        };
        let c = shadow_covariance(&g, &cfg);
        assert!((c[(0, 1)] - 16.0).abs() < 1e-12);
        assert!((c[(0, 2)] - 8.0).abs() < 1e-12);
        assert!((c[(0, 0)] - 16.0).abs() < 1e-9);
    }

    #[test]
    fn co_located_users_still_factorize() {
        // Identical positions make the covariance singular without jitter.
        let cfg = NetworkConfig::default();
        let g = Geometry {
            ap_positions: vec![[0.0, 0.0]],
            user_positions: vec![[5.0, 5.0]; 4],
            area_side: 100.0,
        };
        let s = sample_shadowing(&g, &cfg, &mut trial_rng(3, 0)).unwrap();
        assert_eq!(s.shape(), (4, 1));
    }

    #[test]
    fn beta_db_matches_formula_exactly() {
        let cfg = small_config();
        let real = NetworkRealization::generate(&cfg, 5, 0).unwrap();
        let f = &real.fading;
        for i in 0..f.beta.len() {
            let expect = -30.5 - 36.7 * f.distances[i].log10() + f.shadow[i];
            assert_eq!(f.beta_db[i], expect);
            assert!(f.beta[i] > 0.0);
            assert!(f.distances[i] >= 10.0);
        }
    }

    #[test]
    fn correlation_trace_and_hermitian() {
        let r = spatial_correlation(3e-9, 0.7, 15f64.to_radians(), 6);
        let trace: f64 = (0..6).map(|i| r[(i, i)].re).sum();
        assert!((trace / 6.0 - 3e-9).abs() / 3e-9 < 1e-9);
        assert!((&r - r.adjoint()).iter().all(|z| z.norm() < 1e-24));
    }

    #[test]
    fn correlation_is_psd_at_broadside() {
        let r = spatial_correlation(1.0, 0.0, 15f64.to_radians(), 4);
        let eig = r.clone().symmetric_eigen();
        let tr: f64 = (0..4).map(|i| r[(i, i)].re).sum();
        assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-9 * tr));
    }

    #[test]
    fn zero_spread_gives_rank_one() {
        let theta = 0.4;
        let r = spatial_correlation(2.0, theta, 1e-12, 4);
        let a = CVec::from_fn(4, |m, _| C64::from_polar(1.0, PI * m as f64 * theta.sin()));
        let outer = (&a * a.adjoint()) * C64::new(2.0, 0.0);
        assert!((&r - outer).iter().all(|z| z.norm() < 1e-9));
        let mut rng = trial_rng(1, 0);
        for _ in 0..20 {
            let h = sample_channel(&r, &mut rng).unwrap();
            // h must be parallel to a: |a^H h| = |a| |h|.
            let cos = a.dotc(&h).norm() / (a.norm() * h.norm());
            assert!((cos - 1.0).abs() < 1e-6, "cos = {cos}");
        }
    }

    #[test]
    fn white_channel_variance() {
        let r = CMat::identity(3, 3);
        let mut rng = trial_rng(11, 0);
        let draws = 10_000;
        let mut acc = [0.0; 3];
        for _ in 0..draws {
            let h = sample_channel(&r, &mut rng).unwrap();
            for i in 0..3 {
                acc[i] += h[i].norm_sqr();
            }
        }
        for a in acc {
            let v = a / draws as f64;
            assert!((v - 1.0).abs() < 0.05, "variance {v}");
        }
    }

    #[test]
    fn realization_is_deterministic() {
        let cfg = small_config();
        let a = NetworkRealization::generate(&cfg, 99, 4).unwrap();
        let b = NetworkRealization::generate(&cfg, 99, 4).unwrap();
        for k in 0..cfg.num_users {
            for l in 0..cfg.num_aps {
                assert_eq!(a.channels.h(k, l), b.channels.h(k, l));
            }
        }
        let c = NetworkRealization::generate(&cfg, 99, 5).unwrap();
        assert_ne!(a.channels.h(0, 0), c.channels.h(0, 0));
    }
}
