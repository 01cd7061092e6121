//! Near-field channel synthesis for the pinching-antenna transmitter and the
//! leaky-coax receive side.
//!
//! All deterministic geometry lives here: in-waveguide feed phases, spherical
//! free-space responses, per-element Doppler shifts, and the assembled Bob /
//! warden channels. Everything is a pure function of positions, velocities,
//! and antenna coordinates.
//!
//! Convention: "column" channel vectors carry conjugated (positive-phase)
//! entries so that received signals are written `h^H c`. The warden's
//! round-trip matrix is the rank-one composite
//! `H_w = sqrt(beta) * rho_r * h_w^H` with `rho_r` the combined echo response
//! of the leaky-coax slots.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{cis, CMat, CVec};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier- and waveguide-derived constants, all precomputed once.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalConstants {
    /// Carrier frequency f_c in Hz.
    pub carrier_freq: f64,
    /// Free-space wavelength lambda_c in meters.
    pub wavelength: f64,
    /// Effective refractive index of the transmit waveguides.
    pub guided_index: f64,
    /// Effective refractive index of the leaky coaxial cables.
    pub lcx_index: f64,
    /// Free-space wavenumber k_c = 2 pi / lambda_c.
    pub k_c: f64,
    /// In-waveguide wavenumber k_g = k_c * guided_index.
    pub k_g: f64,
    /// In-cable wavenumber for the slot combiner, k_c * lcx_index.
    pub k_g_lcx: f64,
    /// Propagation constant eta = lambda_c / (4 pi), meters.
    pub eta: f64,
    /// Duration of one coherent processing interval, seconds.
    pub cpi_duration: f64,
    /// Radar cross-section amplitude beta (enters the echo as sqrt(beta)).
    pub rcs: f64,
}

impl PhysicalConstants {
    pub fn new(
        carrier_freq: f64,
        guided_index: f64,
        lcx_index: f64,
        cpi_duration: f64,
        rcs: f64,
    ) -> Result<Self> {
        let wavelength = SPEED_OF_LIGHT / carrier_freq;
        let k_c = 2.0 * std::f64::consts::PI / wavelength;
        let c = Self {
            carrier_freq,
            wavelength,
            guided_index,
            lcx_index,
            k_c,
            k_g: k_c * guided_index,
            k_g_lcx: k_c * lcx_index,
            eta: wavelength / (4.0 * std::f64::consts::PI),
            cpi_duration,
            rcs,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.carrier_freq,
            self.wavelength,
            self.guided_index,
            self.lcx_index,
            self.k_c,
            self.k_g,
            self.k_g_lcx,
            self.eta,
            self.cpi_duration,
            self.rcs,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("physical constants must be finite and positive".into()));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        if (self.k_c - two_pi / self.wavelength).abs() > 1e-9 * self.k_c
            || (self.k_g - self.k_c * self.guided_index).abs() > 1e-9 * self.k_g
            || (self.eta - self.wavelength / (4.0 * std::f64::consts::PI)).abs() > 1e-12
        {
            return Err(Error::Config("inconsistent derived constants".into()));
        }
        Ok(())
    }

    /// Guided wavelength lambda_g = lambda_c / n_t.
    pub fn guided_wavelength(&self) -> f64 {
        self.wavelength / self.guided_index
    }
}

/// Transmit waveguide / receive cable layout plus the per-CPI pinching
/// antenna x-coordinates.
///
/// Waveguide `n` runs along the x-axis at `y = n * waveguide_spacing`,
/// `z = height`; cable `j` sits at `y = j * waveguide_spacing + lcx_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct PassGeometry {
    pub n_waveguides: usize,
    pub pas_per_waveguide: usize,
    pub n_lcx: usize,
    pub slots_per_lcx: usize,
    pub height: f64,
    pub waveguide_spacing: f64,
    pub lcx_offset: f64,
    pub waveguide_length: f64,
    /// PA x-coordinates, shape pas_per_waveguide x n_waveguides (column = waveguide).
    pub pa_x: DMatrix<f64>,
    /// Slot x-coordinates shared by every cable, strictly increasing, uniform.
    pub slot_x: Vec<f64>,
    /// Fixed spacing between adjacent PAs on the same waveguide.
    pub inter_pa_spacing: f64,
    /// Minimum allowed spacing between adjacent PAs.
    pub min_pa_spacing: f64,
}

impl PassGeometry {
    /// Builds the sub-array layout from the initial-PA coordinates: PA `m` on
    /// waveguide `n` sits at `x_init[n] + m * inter_pa_spacing`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_x_init(
        x_init: &[f64],
        pas_per_waveguide: usize,
        n_lcx: usize,
        height: f64,
        waveguide_spacing: f64,
        lcx_offset: f64,
        waveguide_length: f64,
        slot_spacing: f64,
        inter_pa_spacing: f64,
        min_pa_spacing: f64,
    ) -> Result<Self> {
        let n_waveguides = x_init.len();
        let mut pa_x = DMatrix::zeros(pas_per_waveguide, n_waveguides);
        for n in 0..n_waveguides {
            for m in 0..pas_per_waveguide {
                pa_x[(m, n)] = x_init[n] + m as f64 * inter_pa_spacing;
            }
        }
        let slots_per_lcx = (waveguide_length / slot_spacing).floor() as usize + 1;
        let slot_x: Vec<f64> = (0..slots_per_lcx).map(|i| i as f64 * slot_spacing).collect();
        let geom = Self {
            n_waveguides,
            pas_per_waveguide,
            n_lcx,
            slots_per_lcx,
            height,
            waveguide_spacing,
            lcx_offset,
            waveguide_length,
            pa_x,
            slot_x,
            inter_pa_spacing,
            min_pa_spacing,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pa_x.nrows() != self.pas_per_waveguide || self.pa_x.ncols() != self.n_waveguides {
            return Err(Error::Shape(format!(
                "pa_x: expected {}x{}, got {}x{}",
                self.pas_per_waveguide,
                self.n_waveguides,
                self.pa_x.nrows(),
                self.pa_x.ncols()
            )));
        }
        let tol = 1e-9;
        for n in 0..self.n_waveguides {
            for m in 0..self.pas_per_waveguide {
                let x = self.pa_x[(m, n)];
                if !(-tol..=self.waveguide_length + tol).contains(&x) {
                    return Err(Error::Config(format!(
                        "PA ({m},{n}) at x={x} outside [0, {}]",
                        self.waveguide_length
                    )));
                }
                if m > 0 && x - self.pa_x[(m - 1, n)] < self.min_pa_spacing - tol {
                    return Err(Error::Config(format!(
                        "PAs ({},{n}) and ({m},{n}) closer than the minimum spacing {}",
                        m - 1,
                        self.min_pa_spacing
                    )));
                }
            }
        }
        if self.slot_x.len() != self.slots_per_lcx {
            return Err(Error::Shape("slot_x length disagrees with slots_per_lcx".into()));
        }
        if self.slot_x.len() >= 2 {
            let step = self.slot_x[1] - self.slot_x[0];
            if step <= 0.0 {
                return Err(Error::Config("slot_x must be strictly increasing".into()));
            }
            for w in self.slot_x.windows(2) {
                if (w[1] - w[0] - step).abs() > tol {
                    return Err(Error::Config("slot_x spacing must be uniform".into()));
                }
            }
        }
        Ok(())
    }

    /// Upper bound of the initial-PA coordinate so the whole sub-array fits.
    pub fn action_upper_bound(&self) -> f64 {
        self.waveguide_length - (self.pas_per_waveguide - 1) as f64 * self.inter_pa_spacing
    }

    /// 3-D position of PA `m` on waveguide `n`.
    pub fn pa_position(&self, n: usize, m: usize) -> [f64; 3] {
        [self.pa_x[(m, n)], n as f64 * self.waveguide_spacing, self.height]
    }

    /// 3-D position of slot `i` on cable `j`.
    pub fn slot_position(&self, j: usize, i: usize) -> [f64; 3] {
        [
            self.slot_x[i],
            j as f64 * self.waveguide_spacing + self.lcx_offset,
            self.height,
        ]
    }

    /// PA positions flattened waveguide-major (block n holds waveguide n).
    pub fn pa_positions_flat(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.n_waveguides * self.pas_per_waveguide);
        for n in 0..self.n_waveguides {
            for m in 0..self.pas_per_waveguide {
                out.push(self.pa_position(n, m));
            }
        }
        out
    }

    /// Slot positions flattened cable-major.
    pub fn slot_positions_flat(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.n_lcx * self.slots_per_lcx);
        for j in 0..self.n_lcx {
            for i in 0..self.slots_per_lcx {
                out.push(self.slot_position(j, i));
            }
        }
        out
    }
}

/// The three channel quantities consumed by one CPI's beamforming step.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Bob's downlink channel (length N_t), received signal is `h_b^H c`.
    pub h_b: CVec,
    /// Warden downlink channel (length N_t).
    pub h_w: CVec,
    /// Round-trip echo matrix, N_r x N_t, rank one.
    pub h_w_round: CMat,
    /// Combined slot response `rho_r = V^T a_r` (length N_r).
    pub rx_response: CVec,
    /// Initial-PA coordinates this set was built from.
    pub x_init: Vec<f64>,
}

/// In-waveguide channel vector for one waveguide: entry m is
/// `(1/sqrt(M_t)) * exp(-j k_g x_m)`.
pub fn in_waveguide_vector(x_n: &[f64], consts: &PhysicalConstants) -> Result<CVec> {
    if x_n.is_empty() {
        return Err(Error::Config("in_waveguide_vector: empty coordinate vector".into()));
    }
    if x_n.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Config("in_waveguide_vector: coordinates must be finite and nonnegative".into()));
    }
    let amp = 1.0 / (x_n.len() as f64).sqrt();
    Ok(CVec::from_iterator(
        x_n.len(),
        x_n.iter().map(|&x| cis(-consts.k_g * x) * amp),
    ))
}

/// Slot combination vector `v_j`: entry i is
/// `(1/sqrt(M_r)) * exp(-j k_lcx x_i)` with the cable's own wavenumber.
pub fn lcx_combination_vector(slot_x: &[f64], consts: &PhysicalConstants) -> Result<CVec> {
    if slot_x.is_empty() {
        return Err(Error::Config("lcx_combination_vector: empty slot grid".into()));
    }
    let amp = 1.0 / (slot_x.len() as f64).sqrt();
    Ok(CVec::from_iterator(
        slot_x.len(),
        slot_x.iter().map(|&x| cis(-consts.k_g_lcx * x) * amp),
    ))
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Spherical-wave free-space channel: entry m is
/// `conj(eta * exp(-j k_c r_m) / r_m)`, i.e. modulus `eta / r_m` and
/// phase `+k_c r_m`.
pub fn free_space_vector(
    target: &[f64; 3],
    antenna_positions: &[[f64; 3]],
    consts: &PhysicalConstants,
) -> Result<CVec> {
    let mut out = CVec::zeros(antenna_positions.len());
    for (m, p) in antenna_positions.iter().enumerate() {
        let r = distance(p, target);
        if r <= 0.0 || !r.is_finite() {
            return Err(Error::Singularity(format!(
                "free_space_vector: target coincides with antenna {m}"
            )));
        }
        out[m] = cis(consts.k_c * r) * (consts.eta / r);
    }
    Ok(out)
}

/// Velocity projected onto the antenna-to-target direction.
pub fn projected_velocity(v: &[f64; 3], antenna_pos: &[f64; 3], target: &[f64; 3]) -> Result<f64> {
    let d = [
        target[0] - antenna_pos[0],
        target[1] - antenna_pos[1],
        target[2] - antenna_pos[2],
    ];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if r <= 0.0 || !r.is_finite() {
        return Err(Error::Singularity("projected_velocity: zero direction vector".into()));
    }
    Ok((v[0] * d[0] + v[1] * d[1] + v[2] * d[2]) / r)
}

/// Per-element Doppler phase vector: entry m is
/// `conj(exp(-j k_c dT v_m))` with `v_m` the projected velocity.
pub fn doppler_vector(
    v: &[f64; 3],
    target: &[f64; 3],
    antenna_positions: &[[f64; 3]],
    consts: &PhysicalConstants,
) -> Result<CVec> {
    let mut out = CVec::zeros(antenna_positions.len());
    for (m, p) in antenna_positions.iter().enumerate() {
        let vm = projected_velocity(v, p, target)?;
        out[m] = cis(consts.k_c * consts.cpi_duration * vm);
    }
    Ok(out)
}

/// Bob's assembled channel `h_b = G^H a_b`, length N_t; the received signal
/// is `h_b^H c`.
pub fn bob_channel(geom: &PassGeometry, bob: &[f64; 3], consts: &PhysicalConstants) -> Result<CVec> {
    geom.validate()?;
    let mut h = CVec::zeros(geom.n_waveguides);
    for n in 0..geom.n_waveguides {
        let xs: Vec<f64> = (0..geom.pas_per_waveguide).map(|m| geom.pa_x[(m, n)]).collect();
        let g = in_waveguide_vector(&xs, consts)?;
        let positions: Vec<[f64; 3]> =
            (0..geom.pas_per_waveguide).map(|m| geom.pa_position(n, m)).collect();
        let a = free_space_vector(bob, &positions, consts)?;
        // h[n] = g_n^H a_n
        h[n] = g.dotc(&a);
    }
    Ok(h)
}

/// Warden channels for one CPI: downlink `h_w` (Doppler-modulated), the
/// rank-one round-trip matrix `H_w`, and the slot response `rho_r`.
pub fn willie_channels(
    geom: &PassGeometry,
    willie_pos: &[f64; 3],
    willie_vel: &[f64; 3],
    consts: &PhysicalConstants,
) -> Result<(CVec, CMat, CVec)> {
    geom.validate()?;
    // Transmit side: h_w = G^H (a_t ⊙ b_t), per waveguide.
    let mut h_w = CVec::zeros(geom.n_waveguides);
    for n in 0..geom.n_waveguides {
        let xs: Vec<f64> = (0..geom.pas_per_waveguide).map(|m| geom.pa_x[(m, n)]).collect();
        let g = in_waveguide_vector(&xs, consts)?;
        let positions: Vec<[f64; 3]> =
            (0..geom.pas_per_waveguide).map(|m| geom.pa_position(n, m)).collect();
        let pos_part = free_space_vector(willie_pos, &positions, consts)?;
        let dop_part = doppler_vector(willie_vel, willie_pos, &positions, consts)?;
        let a_t = pos_part.component_mul(&dop_part);
        h_w[n] = g.dotc(&a_t);
    }

    // Receive side: rho_r[j] = v_j^T a_r_j (plain transpose, no conjugation).
    let v_comb = lcx_combination_vector(&geom.slot_x, consts)?;
    let mut rho_r = CVec::zeros(geom.n_lcx);
    for j in 0..geom.n_lcx {
        let positions: Vec<[f64; 3]> =
            (0..geom.slots_per_lcx).map(|i| geom.slot_position(j, i)).collect();
        let pos_part = free_space_vector(willie_pos, &positions, consts)?;
        let dop_part = doppler_vector(willie_vel, willie_pos, &positions, consts)?;
        let a_r = pos_part.component_mul(&dop_part);
        rho_r[j] = (0..geom.slots_per_lcx).map(|i| v_comb[i] * a_r[i]).sum();
    }

    // H_w = sqrt(beta) rho_r h_w^H, rank one by construction.
    let sqrt_beta = consts.rcs.sqrt();
    let mut h_w_round = CMat::zeros(geom.n_lcx, geom.n_waveguides);
    for j in 0..geom.n_lcx {
        for n in 0..geom.n_waveguides {
            h_w_round[(j, n)] = rho_r[j] * h_w[n].conj() * sqrt_beta;
        }
    }
    Ok((h_w, h_w_round, rho_r))
}

/// Assembles the full channel set used by one CPI's optimizer call.
pub fn channel_set(
    geom: &PassGeometry,
    bob: &[f64; 3],
    willie_pos: &[f64; 3],
    willie_vel: &[f64; 3],
    consts: &PhysicalConstants,
) -> Result<ChannelSet> {
    let h_b = bob_channel(geom, bob, consts)?;
    let (h_w, h_w_round, rx_response) = willie_channels(geom, willie_pos, willie_vel, consts)?;
    let x_init: Vec<f64> = (0..geom.n_waveguides).map(|n| geom.pa_x[(0, n)]).collect();
    Ok(ChannelSet { h_b, h_w, h_w_round, rx_response, x_init })
}

/// Conventional fixed MIMO array channels used by the perfect-CSI benchmark:
/// half-wavelength elements centered at `center`, spherical single-element
/// responses (no waveguide phase), same cable receive side as the PASS.
pub fn mimo_channel_set(
    geom: &PassGeometry,
    center: &[f64; 3],
    bob: &[f64; 3],
    willie_pos: &[f64; 3],
    willie_vel: &[f64; 3],
    consts: &PhysicalConstants,
) -> Result<ChannelSet> {
    let n_t = geom.n_waveguides;
    let half = consts.wavelength / 2.0;
    let mid = (n_t as f64 - 1.0) / 2.0;
    let elements: Vec<[f64; 3]> = (0..n_t)
        .map(|n| [center[0] + (n as f64 - mid) * half, center[1], center[2]])
        .collect();

    let h_b = free_space_vector(bob, &elements, consts)?;
    let pos_part = free_space_vector(willie_pos, &elements, consts)?;
    let dop_part = doppler_vector(willie_vel, willie_pos, &elements, consts)?;
    let h_w = pos_part.component_mul(&dop_part);

    let v_comb = lcx_combination_vector(&geom.slot_x, consts)?;
    let mut rho_r = CVec::zeros(geom.n_lcx);
    for j in 0..geom.n_lcx {
        let positions: Vec<[f64; 3]> =
            (0..geom.slots_per_lcx).map(|i| geom.slot_position(j, i)).collect();
        let pp = free_space_vector(willie_pos, &positions, consts)?;
        let dp = doppler_vector(willie_vel, willie_pos, &positions, consts)?;
        let a_r = pp.component_mul(&dp);
        rho_r[j] = (0..geom.slots_per_lcx).map(|i| v_comb[i] * a_r[i]).sum();
    }
    let sqrt_beta = consts.rcs.sqrt();
    let mut h_w_round = CMat::zeros(geom.n_lcx, n_t);
    for j in 0..geom.n_lcx {
        for n in 0..n_t {
            h_w_round[(j, n)] = rho_r[j] * h_w[n].conj() * sqrt_beta;
        }
    }
    let x_init: Vec<f64> = elements.iter().map(|p| p[0]).collect();
    Ok(ChannelSet { h_b, h_w, h_w_round, rx_response: rho_r, x_init })
}

/// Dense assembly of the block-diagonal feed matrix G applied to `c`,
/// flattened waveguide-major. Used by the observation model and its Jacobian.
pub fn feed_excitation(geom: &PassGeometry, consts: &PhysicalConstants, c: &CVec) -> Result<CVec> {
    crate::linalg::check_len("feed_excitation: c", c, geom.n_waveguides)?;
    let mt = geom.pas_per_waveguide;
    let mut u = CVec::zeros(geom.n_waveguides * mt);
    for n in 0..geom.n_waveguides {
        let xs: Vec<f64> = (0..mt).map(|m| geom.pa_x[(m, n)]).collect();
        let g = in_waveguide_vector(&xs, consts)?;
        for m in 0..mt {
            u[n * mt + m] = g[m] * c[n];
        }
    }
    Ok(u)
}

/// Stacked slot combiner (blocks of `v_j`), flattened cable-major.
pub fn combiner_flat(geom: &PassGeometry, consts: &PhysicalConstants) -> Result<CVec> {
    let v = lcx_combination_vector(&geom.slot_x, consts)?;
    let mr = geom.slots_per_lcx;
    let mut out = CVec::zeros(geom.n_lcx * mr);
    for j in 0..geom.n_lcx {
        for i in 0..mr {
            out[j * mr + i] = v[i];
        }
    }
    Ok(out)
}
