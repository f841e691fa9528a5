//! Array geometry, steering vectors, path loss and Rician channel synthesis.
//!
//! Conventions (wavelength normalized to 1, spacings in wavelengths):
//!
//! * BS and UE are ULAs along the global x axis. A ULA angle satisfies
//!   `sin(delta) = u . x_hat`, with `u` the unit direction toward the far end
//!   of the link.
//! * The RIS is a UPA in the x-z plane, boresight `-y`. Element `n`
//!   (0-based) sits in row `n / n_x` (along z) and column `n % n_x` (along x).
//!   For a direction `u` the angles are `zeta = atan2(u_z, u_x)` and
//!   `sin(gamma) = sqrt(u_x^2 + u_z^2)`, folded so that `zeta` lies in
//!   `[0, pi)`. Folding negates `gamma`, which leaves
//!   `sin(gamma) sin(zeta) = u_z` and `sin(gamma) cos(zeta) = u_x` unchanged.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, complex_gaussian_matrix, CMatrix, CVector};

/// Converts a dB ratio to linear scale. `+inf` dB maps to `+inf`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayGeometry {
    pub bs_position: Vector3<f64>,
    pub ris_position: Vector3<f64>,
    pub ue_position: Vector3<f64>,
    pub bs_spacing: f64,
    pub ue_spacing: f64,
    pub ris_spacing: f64,
    /// Elements per RIS row.
    pub ris_nx: usize,
    /// RIS rows.
    pub ris_ny: usize,
    pub bs_antennas: usize,
    pub ue_antennas: usize,
}

impl Default for ArrayGeometry {
    /// 4-antenna ULAs at half-wavelength spacing, a 5x5 RIS at quarter
    /// wavelength, BS at (0, 0, 5), RIS at (0, 100, 5), UE at (3, 100, 0).
    fn default() -> Self {
        Self {
            bs_position: Vector3::new(0.0, 0.0, 5.0),
            ris_position: Vector3::new(0.0, 100.0, 5.0),
            ue_position: Vector3::new(3.0, 100.0, 0.0),
            bs_spacing: 0.5,
            ue_spacing: 0.5,
            ris_spacing: 0.25,
            ris_nx: 5,
            ris_ny: 5,
            bs_antennas: 4,
            ue_antennas: 4,
        }
    }
}

impl ArrayGeometry {
    pub fn ris_elements(&self) -> usize {
        self.ris_nx * self.ris_ny
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("ris_nx", self.ris_nx),
            ("ris_ny", self.ris_ny),
            ("bs_antennas", self.bs_antennas),
            ("ue_antennas", self.ue_antennas),
        ];
        for (name, c) in counts {
            if c == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        let spacings = [
            ("bs_spacing", self.bs_spacing),
            ("ue_spacing", self.ue_spacing),
            ("ris_spacing", self.ris_spacing),
        ];
        for (name, s) in spacings {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {s}")));
            }
        }
        let pairs = [
            ("bs", "ris", self.bs_position, self.ris_position),
            ("ris", "ue", self.ris_position, self.ue_position),
            ("bs", "ue", self.bs_position, self.ue_position),
        ];
        for (a, b, pa, pb) in pairs {
            if (pb - pa).norm() <= 0.0 {
                return Err(Error::DegenerateGeometry(format!(
                    "{a} and {b} positions coincide"
                )));
            }
        }
        Ok(())
    }

    pub fn bs_ris_distance(&self) -> f64 {
        (self.ris_position - self.bs_position).norm()
    }

    pub fn ris_ue_distance(&self) -> f64 {
        (self.ue_position - self.ris_position).norm()
    }

    pub fn bs_ue_distance(&self) -> f64 {
        (self.ue_position - self.bs_position).norm()
    }
}

/// Large-scale statistics of one link, all on linear scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkStatistics {
    /// LoS-to-NLoS power ratio. `f64::INFINITY` means pure LoS.
    pub rician_factor: f64,
    pub path_loss_exponent: f64,
    pub reference_loss: f64,
    pub reference_distance: f64,
}

impl LinkStatistics {
    /// Builds link statistics from a Rician factor and reference loss given in dB.
    pub fn from_db(rician_factor_db: f64, path_loss_exponent: f64, reference_loss_db: f64) -> Self {
        Self {
            rician_factor: db_to_linear(rician_factor_db),
            path_loss_exponent,
            reference_loss: db_to_linear(reference_loss_db),
            reference_distance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rician_factor >= 0.0) {
            return Err(Error::invalid("rician factor must be >= 0"));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::invalid("path loss exponent must be > 0"));
        }
        if !(self.reference_loss > 0.0) {
            return Err(Error::invalid("reference loss must be > 0"));
        }
        if !(self.reference_distance > 0.0) {
            return Err(Error::invalid("reference distance must be > 0"));
        }
        Ok(())
    }
}

/// Statistics for the three links of the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSet {
    pub bs_ris: LinkStatistics,
    pub ris_ue: LinkStatistics,
    pub bs_ue: LinkStatistics,
}

impl Default for LinkSet {
    /// Rician factors 6/4/3 dB, path loss exponents 2.4/2.5/3.5, -20 dB at 1 m.
    fn default() -> Self {
        Self {
            bs_ris: LinkStatistics::from_db(6.0, 2.4, -20.0),
            ris_ue: LinkStatistics::from_db(4.0, 2.5, -20.0),
            bs_ue: LinkStatistics::from_db(3.0, 3.5, -20.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaAngles {
    pub azimuth: f64,
    pub elevation: f64,
}

/// Departure/arrival angles of the LoS paths of all three links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkAngles {
    /// BS -> RIS departure at the BS ULA.
    pub bs_ris_departure: f64,
    /// BS -> RIS arrival at the RIS UPA.
    pub bs_ris_arrival: UpaAngles,
    /// RIS -> UE departure at the RIS UPA.
    pub ris_ue_departure: UpaAngles,
    /// RIS -> UE arrival at the UE ULA.
    pub ris_ue_arrival: f64,
    /// BS -> UE departure at the BS ULA.
    pub bs_ue_departure: f64,
    /// BS -> UE arrival at the UE ULA.
    pub bs_ue_arrival: f64,
}

/// How LoS angles are obtained for each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    /// Derived once from the array positions.
    #[default]
    Geometric,
    /// Drawn uniformly from the angle domains on every trial.
    Random,
}

/// ULA response: entry `m` is `exp(j 2 pi m d sin(angle))`, `m = 0..count`.
pub fn steering_ula(angle: f64, count: usize, spacing: f64) -> Result<CVector> {
    if count == 0 {
        return Err(Error::invalid("ULA element count must be positive"));
    }
    let k = 2.0 * PI * spacing * angle.sin();
    Ok(CVector::from_fn(count, |m, _| cis(k * m as f64)))
}

/// UPA response in row-major order (row index `n / n_x`).
pub fn steering_upa(
    azimuth: f64,
    elevation: f64,
    n_x: usize,
    n_y: usize,
    spacing: f64,
) -> Result<CVector> {
    if n_x * n_y == 0 {
        return Err(Error::invalid("UPA must have at least one element"));
    }
    let k = 2.0 * PI * spacing * elevation.sin();
    let (row_w, col_w) = (azimuth.sin(), azimuth.cos());
    Ok(CVector::from_fn(n_x * n_y, |n, _| {
        let row = (n / n_x) as f64;
        let col = (n % n_x) as f64;
        cis(k * (row * row_w + col * col_w))
    }))
}

/// `beta = C0 (d / d0)^(-alpha)`.
pub fn path_loss(distance: f64, stats: &LinkStatistics) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::invalid(format!("distance must be positive, got {distance}")));
    }
    Ok(stats.reference_loss * (distance / stats.reference_distance).powf(-stats.path_loss_exponent))
}

fn unit_direction(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<Vector3<f64>> {
    let d = to - from;
    let n = d.norm();
    if !(n > 0.0) {
        return Err(Error::DegenerateGeometry("coincident link endpoints".into()));
    }
    Ok(d / n)
}

fn ula_angle(u: &Vector3<f64>) -> f64 {
    u.x.clamp(-1.0, 1.0).asin()
}

fn upa_angles(u: &Vector3<f64>) -> UpaAngles {
    let lateral = (u.x * u.x + u.z * u.z).sqrt().min(1.0);
    if lateral == 0.0 {
        return UpaAngles {
            azimuth: 0.0,
            elevation: 0.0,
        };
    }
    let mut azimuth = u.z.atan2(u.x);
    let mut elevation = lateral.asin();
    if azimuth < 0.0 {
        azimuth += PI;
        elevation = -elevation;
    } else if azimuth >= PI {
        azimuth -= PI;
        elevation = -elevation;
    }
    UpaAngles { azimuth, elevation }
}

pub fn derive_los_angles(geometry: &ArrayGeometry) -> Result<LinkAngles> {
    let (bs, ris, ue) = (
        &geometry.bs_position,
        &geometry.ris_position,
        &geometry.ue_position,
    );
    Ok(LinkAngles {
        bs_ris_departure: ula_angle(&unit_direction(bs, ris)?),
        bs_ris_arrival: upa_angles(&unit_direction(ris, bs)?),
        ris_ue_departure: upa_angles(&unit_direction(ris, ue)?),
        ris_ue_arrival: ula_angle(&unit_direction(ue, ris)?),
        bs_ue_departure: ula_angle(&unit_direction(bs, ue)?),
        bs_ue_arrival: ula_angle(&unit_direction(ue, bs)?),
    })
}

/// Draws every angle uniformly from its domain.
pub fn random_los_angles<R: Rng + ?Sized>(rng: &mut R) -> LinkAngles {
    let mut ula = || rng.random_range(-FRAC_PI_2..FRAC_PI_2);
    let (a, b, c, d) = (ula(), ula(), ula(), ula());
    let mut upa = || UpaAngles {
        azimuth: rng.random_range(0.0..PI),
        elevation: rng.random_range(-FRAC_PI_2..FRAC_PI_2),
    };
    let (e, f) = (upa(), upa());
    LinkAngles {
        bs_ris_departure: a,
        bs_ris_arrival: e,
        ris_ue_departure: f,
        ris_ue_arrival: b,
        bs_ue_departure: c,
        bs_ue_arrival: d,
    }
}

/// `sqrt(beta) (sqrt(F/(F+1)) los + sqrt(1/(F+1)) G)` with `G ~ CN(0, 1)` i.i.d.
///
/// `G` is always drawn so that the amount of randomness consumed does not
/// depend on `F`.
pub fn sample_rician<R: Rng + ?Sized>(
    los: &CMatrix,
    beta: f64,
    rician_factor: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    if !(beta >= 0.0) || !(rician_factor >= 0.0) {
        return Err(Error::invalid("path loss and Rician factor must be non-negative"));
    }
    let g = complex_gaussian_matrix(los.nrows(), los.ncols(), 1.0, rng);
    let (w_los, w_nlos) = rician_weights(rician_factor);
    let sb = beta.sqrt();
    Ok(los.zip_map(&g, |l, n| (l * w_los + n * w_nlos) * sb))
}

fn rician_weights(f: f64) -> (f64, f64) {
    if f.is_infinite() {
        (1.0, 0.0)
    } else {
        ((f / (f + 1.0)).sqrt(), (1.0 / (f + 1.0)).sqrt())
    }
}

/// One draw of all three channels plus their scaled LoS parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// BS -> RIS, `N x M_t`.
    pub h_t: CMatrix,
    /// RIS -> UE, `M_r x N`.
    pub h_r: CMatrix,
    /// BS -> UE, `M_r x M_t`.
    pub h_d: CMatrix,
    pub los_t: CMatrix,
    pub los_r: CMatrix,
    pub los_d: CMatrix,
}

impl ChannelRealization {
    pub fn ris_elements(&self) -> usize {
        self.h_t.nrows()
    }

    pub fn tx_antennas(&self) -> usize {
        self.h_t.ncols()
    }

    pub fn rx_antennas(&self) -> usize {
        self.h_r.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub geometry: ArrayGeometry,
    pub links: LinkSet,
    pub angle_mode: AngleMode,
}

impl ChannelModel {
    pub fn new(geometry: ArrayGeometry, links: LinkSet) -> Self {
        Self {
            geometry,
            links,
            angle_mode: AngleMode::Geometric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.links.bs_ris.validate()?;
        self.links.ris_ue.validate()?;
        self.links.bs_ue.validate()
    }
}

/// LoS outer products (unscaled) for the given angles.
fn los_matrices(g: &ArrayGeometry, a: &LinkAngles) -> Result<(CMatrix, CMatrix, CMatrix)> {
    let bs_to_ris = steering_ula(a.bs_ris_departure, g.bs_antennas, g.bs_spacing)?;
    let ris_from_bs = steering_upa(
        a.bs_ris_arrival.azimuth,
        a.bs_ris_arrival.elevation,
        g.ris_nx,
        g.ris_ny,
        g.ris_spacing,
    )?;
    let ris_to_ue = steering_upa(
        a.ris_ue_departure.azimuth,
        a.ris_ue_departure.elevation,
        g.ris_nx,
        g.ris_ny,
        g.ris_spacing,
    )?;
    let ue_from_ris = steering_ula(a.ris_ue_arrival, g.ue_antennas, g.ue_spacing)?;
    let bs_to_ue = steering_ula(a.bs_ue_departure, g.bs_antennas, g.bs_spacing)?;
    let ue_from_bs = steering_ula(a.bs_ue_arrival, g.ue_antennas, g.ue_spacing)?;

    Ok((
        &ris_from_bs * bs_to_ris.adjoint(),
        &ue_from_ris * ris_to_ue.adjoint(),
        &ue_from_bs * bs_to_ue.adjoint(),
    ))
}

/// Draws `H_t`, `H_r`, `H_d` (in that order) for one trial.
pub fn sample_channels<R: Rng + ?Sized>(
    model: &ChannelModel,
    rng: &mut R,
) -> Result<ChannelRealization> {
    model.validate()?;
    let g = &model.geometry;
    let angles = match model.angle_mode {
        AngleMode::Geometric => derive_los_angles(g)?,
        AngleMode::Random => random_los_angles(rng),
    };
    let (los_t, los_r, los_d) = los_matrices(g, &angles)?;

    let l = &model.links;
    let beta_t = path_loss(g.bs_ris_distance(), &l.bs_ris)?;
    let beta_r = path_loss(g.ris_ue_distance(), &l.ris_ue)?;
    let beta_d = path_loss(g.bs_ue_distance(), &l.bs_ue)?;

    let h_t = sample_rician(&los_t, beta_t, l.bs_ris.rician_factor, rng)?;
    let h_r = sample_rician(&los_r, beta_r, l.ris_ue.rician_factor, rng)?;
    let h_d = sample_rician(&los_d, beta_d, l.bs_ue.rician_factor, rng)?;

    let scale = |beta: f64, f: f64| beta.sqrt() * rician_weights(f).0;
    Ok(ChannelRealization {
        los_t: los_t * nalgebra::Complex::from(scale(beta_t, l.bs_ris.rician_factor)),
        los_r: los_r * nalgebra::Complex::from(scale(beta_r, l.ris_ue.rician_factor)),
        los_d: los_d * nalgebra::Complex::from(scale(beta_d, l.bs_ue.rician_factor)),
        h_t,
        h_r,
        h_d,
    })
}
