//! Extended Kalman filter tracking of the warden's 4-state mobility vector
//! `[x, y, v_x, v_y]` from complex echo observations.
//!
//! The observation is the noiseless round-trip response `H_w(xi) c` for the
//! transmitted signal `c`. The update is real-augmented: residual and
//! Jacobian are stacked as `[Re; Im]` so the state stays real, and circular
//! complex noise of power `sigma_s^2` splits as `sigma_s^2 / 2` per real
//! component.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{feed_excitation, combiner_flat, PassGeometry, PhysicalConstants};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};

/// Warden mobility state and its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    /// `[x_w, y_w, v_x, v_y]` in meters and meters per second.
    pub xi: Vector4<f64>,
    /// 4x4 symmetric PSD covariance.
    pub cov: Matrix4<f64>,
}

impl MobilityState {
    pub fn new(xi: Vector4<f64>, cov: Matrix4<f64>) -> Self {
        Self { xi, cov }
    }

    /// Exact point state (zero covariance), used for ground truth.
    pub fn exact(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { xi: Vector4::new(x, y, vx, vy), cov: Matrix4::zeros() }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.xi[0], self.xi[1], 0.0]
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.xi[2], self.xi[3], 0.0]
    }

    /// Checks symmetry (1e-10) and positive semidefiniteness (eigenvalues
    /// above -1e-10) of the covariance.
    pub fn validate(&self) -> Result<()> {
        let d = self.cov - self.cov.transpose();
        if d.iter().any(|v| v.abs() > 1e-10) {
            return Err(Error::Domain("mobility covariance not symmetric".into()));
        }
        let sym = nalgebra::SymmetricEigen::new(self.cov);
        if sym.eigenvalues.iter().any(|&l| l < -1e-10) {
            return Err(Error::Domain("mobility covariance not PSD".into()));
        }
        Ok(())
    }
}

/// Per-CPI velocity perturbation variances and the process noise matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionNoise {
    pub sigma_vx2: f64,
    pub sigma_vy2: f64,
}

impl MotionNoise {
    pub fn new(sigma_vx2: f64, sigma_vy2: f64) -> Result<Self> {
        if sigma_vx2 < 0.0 || sigma_vy2 < 0.0 {
            return Err(Error::Config("velocity variances must be nonnegative".into()));
        }
        Ok(Self { sigma_vx2, sigma_vy2 })
    }

    /// `Q = diag{0, 0, sigma_vx^2, sigma_vy^2}`.
    pub fn q_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(0.0, 0.0, self.sigma_vx2, self.sigma_vy2))
    }
}

/// One CPI's received echo vector and its per-component complex noise power.
#[derive(Debug, Clone)]
pub struct EchoObservation {
    pub y: CVec,
    pub noise_power: f64,
}

/// Constant-velocity transition matrix for one CPI.
pub fn transition_matrix(dt: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, 0.0, dt, 0.0, //
        0.0, 1.0, 0.0, dt, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Ground-truth kinematics: positions advance with the previous velocity,
/// then velocities receive independent Gaussian increments.
pub fn simulate_motion(
    state: &MobilityState,
    noise: &MotionNoise,
    dt: f64,
    rng: &mut impl Rng,
) -> MobilityState {
    let mut xi = state.xi;
    xi[0] += xi[2] * dt;
    xi[1] += xi[3] * dt;
    if noise.sigma_vx2 > 0.0 {
        xi[2] += Normal::new(0.0, noise.sigma_vx2.sqrt()).unwrap().sample(rng);
    }
    if noise.sigma_vy2 > 0.0 {
        xi[3] += Normal::new(0.0, noise.sigma_vy2.sqrt()).unwrap().sample(rng);
    }
    MobilityState { xi, cov: state.cov }
}

/// Prior prediction: `xi <- G xi`, `P <- G P G^T + Q`.
pub fn predict(state: &MobilityState, noise: &MotionNoise, dt: f64) -> MobilityState {
    let g = transition_matrix(dt);
    MobilityState { xi: g * state.xi, cov: g * state.cov * g.transpose() + noise.q_matrix() }
}

/// Flattened transmit-side response `a_t` (position and Doppler factors),
/// waveguide-major, plus cached per-element geometry terms.
struct ElementResponse {
    /// Complex response per element (conjugated convention, `(eta/r) e^{+j phi}`).
    a: Vec<C64>,
    /// Distance to the warden per element.
    r: Vec<f64>,
    /// Direction components `(target - antenna)` per element.
    d: Vec<[f64; 3]>,
}

fn element_response(
    positions: &[[f64; 3]],
    pos: &[f64; 3],
    vel: &[f64; 3],
    consts: &PhysicalConstants,
) -> Result<ElementResponse> {
    let n = positions.len();
    let mut a = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for p in positions {
        let dv = [pos[0] - p[0], pos[1] - p[1], pos[2] - p[2]];
        let rr = (dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2]).sqrt();
        if rr <= 0.0 {
            return Err(Error::Singularity("warden coincides with an antenna element".into()));
        }
        let vp = (vel[0] * dv[0] + vel[1] * dv[1] + vel[2] * dv[2]) / rr;
        let pos_factor = crate::linalg::cis(consts.k_c * rr) * (consts.eta / rr);
        let dop_factor = crate::linalg::cis(consts.k_c * consts.cpi_duration * vp);
        a.push(pos_factor * dop_factor);
        r.push(rr);
        d.push(dv);
    }
    Ok(ElementResponse { a, r, d })
}

/// Derivatives of one element response w.r.t. the four state components.
/// Returns `[d/dx, d/dy, d/dvx, d/dvy]` for element `k`.
fn element_derivatives(
    resp: &ElementResponse,
    k: usize,
    vel: &[f64; 3],
    consts: &PhysicalConstants,
) -> [C64; 4] {
    let r = resp.r[k];
    let d = resp.d[k];
    let a = resp.a[k];
    let kc = consts.k_c;
    let dt = consts.cpi_duration;
    let vd = vel[0] * d[0] + vel[1] * d[1] + vel[2] * d[2];
    let mut out = [C64::new(0.0, 0.0); 4];
    for (i, slot) in out.iter_mut().enumerate().take(2) {
        // Position derivative: pathloss, position-phase, and Doppler-phase
        // product-rule terms.
        let dr = d[i] / r;
        let dvp = (vel[i] * r * r - d[i] * vd) / (r * r * r);
        // a = (eta/r) e^{j kc (r + dT v)}:
        //   da = a * ( -dr/r + j kc (dr + dT dvp) )
        *slot = a * C64::new(-dr / r, kc * (dr + dt * dvp));
    }
    for i in 0..2 {
        // Velocity derivative touches only the Doppler phase.
        let dvp = d[i] / r;
        out[2 + i] = a * C64::new(0.0, kc * dt * dvp);
    }
    out
}

/// Noiseless expected echo `h(xi) = H_w(xi) c`.
pub fn synthesize_observation(
    state: &MobilityState,
    geom: &PassGeometry,
    consts: &PhysicalConstants,
    c: &CVec,
) -> Result<CVec> {
    let pos = state.position();
    let vel = state.velocity();
    let u = feed_excitation(geom, consts, c)?;
    let tx = element_response(&geom.pa_positions_flat(), &pos, &vel, consts)?;
    // z = a_t^H (G c)
    let z: C64 = (0..u.len()).map(|k| tx.a[k].conj() * u[k]).sum();

    let comb = combiner_flat(geom, consts)?;
    let rx = element_response(&geom.slot_positions_flat(), &pos, &vel, consts)?;
    let mr = geom.slots_per_lcx;
    let sqrt_beta = consts.rcs.sqrt();
    let mut y = CVec::zeros(geom.n_lcx);
    for j in 0..geom.n_lcx {
        let rho: C64 = (0..mr).map(|i| comb[j * mr + i] * rx.a[j * mr + i]).sum();
        y[j] = rho * z * sqrt_beta;
    }
    Ok(y)
}

/// Jacobian of the observation model w.r.t. `[x, y, v_x, v_y]`, complex
/// `N_r x 4`, assembled from the per-element product rule on both the
/// transmit and receive sides.
pub fn observation_jacobian(
    state: &MobilityState,
    geom: &PassGeometry,
    consts: &PhysicalConstants,
    c: &CVec,
) -> Result<CMat> {
    let pos = state.position();
    let vel = state.velocity();
    let u = feed_excitation(geom, consts, c)?;
    let tx = element_response(&geom.pa_positions_flat(), &pos, &vel, consts)?;
    let z: C64 = (0..u.len()).map(|k| tx.a[k].conj() * u[k]).sum();
    // dz/dtheta = sum_k conj(da_k/dtheta) u_k
    let mut dz = [C64::new(0.0, 0.0); 4];
    for k in 0..u.len() {
        let da = element_derivatives(&tx, k, &vel, consts);
        for i in 0..4 {
            dz[i] += da[i].conj() * u[k];
        }
    }

    let comb = combiner_flat(geom, consts)?;
    let rx = element_response(&geom.slot_positions_flat(), &pos, &vel, consts)?;
    let mr = geom.slots_per_lcx;
    let sqrt_beta = consts.rcs.sqrt();
    let mut jac = CMat::zeros(geom.n_lcx, 4);
    for j in 0..geom.n_lcx {
        let mut rho = C64::new(0.0, 0.0);
        let mut drho = [C64::new(0.0, 0.0); 4];
        for i in 0..mr {
            let k = j * mr + i;
            rho += comb[k] * rx.a[k];
            let da = element_derivatives(&rx, k, &vel, consts);
            for t in 0..4 {
                drho[t] += comb[k] * da[t];
            }
        }
        for t in 0..4 {
            // h_j = sqrt(beta) rho_j z
            jac[(j, t)] = (drho[t] * z + rho * dz[t]) * sqrt_beta;
        }
    }
    Ok(jac)
}

/// Real-augmented Kalman correction shared by the echo update and the
/// linear-model equivalence tests: `j_real` is `2 N_r x 4`, `residual_real`
/// is the stacked `[Re(u); Im(u)]`, and `r_diag` the per-component noise
/// variance.
pub fn real_kalman_update(
    pred: &MobilityState,
    j_real: &DMatrix<f64>,
    residual_real: &DVector<f64>,
    r_diag: f64,
) -> Result<MobilityState> {
    let rows = j_real.nrows();
    if j_real.ncols() != 4 || residual_real.len() != rows {
        return Err(Error::Shape("real_kalman_update: stacked dimensions disagree".into()));
    }
    let p = DMatrix::from_fn(4, 4, |i, j| pred.cov[(i, j)]);
    let s = j_real * &p * j_real.transpose() + DMatrix::identity(rows, rows) * r_diag;
    let chol = nalgebra::Cholesky::new(s)
        .ok_or_else(|| Error::TrackingDivergence("residual covariance not invertible".into()))?;
    // K = P J^T S^{-1}  =>  K^T = S^{-1} (J P^T) = S^{-1} (J P)
    let k_t = chol.solve(&(j_real * &p.transpose()));
    let k = k_t.transpose();
    let dx = &k * residual_real;
    let mut xi = pred.xi;
    for i in 0..4 {
        xi[i] += dx[i];
    }
    let p_post = (DMatrix::identity(4, 4) - &k * j_real) * &p;
    let mut cov = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            // Symmetrize to suppress round-off drift.
            cov[(i, j)] = 0.5 * (p_post[(i, j)] + p_post[(j, i)]);
        }
    }
    let out = MobilityState { xi, cov };
    if out.xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrackingDivergence("non-finite state after update".into()));
    }
    Ok(out)
}

/// Posterior update from one echo observation.
pub fn update(
    pred: &MobilityState,
    obs: &EchoObservation,
    geom: &PassGeometry,
    consts: &PhysicalConstants,
    c: &CVec,
) -> Result<MobilityState> {
    let expected = synthesize_observation(pred, geom, consts, c)?;
    if obs.y.len() != expected.len() {
        return Err(Error::Shape(format!(
            "update: observation length {} vs model {}",
            obs.y.len(),
            expected.len()
        )));
    }
    let jac = observation_jacobian(pred, geom, consts, c)?;
    let n_r = expected.len();
    let mut j_real = DMatrix::zeros(2 * n_r, 4);
    let mut residual = DVector::zeros(2 * n_r);
    for j in 0..n_r {
        let u = obs.y[j] - expected[j];
        residual[j] = u.re;
        residual[n_r + j] = u.im;
        for t in 0..4 {
            j_real[(j, t)] = jac[(j, t)].re;
            j_real[(n_r + j, t)] = jac[(j, t)].im;
        }
    }
    real_kalman_update(pred, &j_real, &residual, obs.noise_power / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::new(15e9, 1.4, 1.1, 1e-4, 1.0).unwrap()
    }

    fn geometry(x_init: &[f64]) -> PassGeometry {
        PassGeometry::from_x_init(x_init, 4, 3, 3.0, 5.0, 0.5, 10.0, 1.0, 0.5, 0.01).unwrap()
    }

    fn random_signal(rng: &mut impl Rng, n: usize) -> CVec {
        CVec::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn motion_zero_velocity_zero_noise_is_fixed_point() {
        let s = MobilityState::exact(1.0, 4.0, 0.0, 0.0);
        let noise = MotionNoise::new(0.0, 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let n = simulate_motion(&s, &noise, 1e-4, &mut rng);
        assert_eq!(n.xi, s.xi);
    }

    #[test]
    fn motion_linear_advance() {
        let s = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        let noise = MotionNoise::new(0.0, 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let n = simulate_motion(&s, &noise, 1e-4, &mut rng);
        assert_relative_eq!(n.xi[0], 1.0 + 2e-4, epsilon = 1e-15);
        assert_relative_eq!(n.xi[1], 4.0 + 1e-4, epsilon = 1e-15);
        assert_eq!(n.xi[2], 2.0);
        assert_eq!(n.xi[3], 1.0);
    }

    #[test]
    fn motion_noise_sample_variance() {
        let noise = MotionNoise::new(0.01, 0.02).unwrap();
        let s = MobilityState::exact(0.0, 0.0, 0.0, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 100_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let next = simulate_motion(&s, &noise, 1e-4, &mut rng);
            sx += next.xi[2] * next.xi[2];
            sy += next.xi[3] * next.xi[3];
        }
        assert_relative_eq!(sx / n as f64, 0.01, max_relative = 0.05);
        assert_relative_eq!(sy / n as f64, 0.02, max_relative = 0.05);
    }

    #[test]
    fn predict_zero_covariance_stays_zero() {
        let s = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        let noise = MotionNoise::new(0.0, 0.0).unwrap();
        let p = predict(&s, &noise, 1e-4);
        assert_eq!(p.cov, Matrix4::zeros());
        assert_relative_eq!(p.xi[0], 1.0 + 2e-4, epsilon = 1e-15);
    }

    #[test]
    fn predict_position_velocity_coupling() {
        let s = MobilityState::new(Vector4::zeros(), Matrix4::identity());
        let noise = MotionNoise::new(0.0, 0.0).unwrap();
        let p = predict(&s, &noise, 1.0);
        // G P G^T with P = I, dT = 1: positions pick up velocity variance.
        assert_relative_eq!(p.cov[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(p.cov[(0, 2)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.cov[(2, 2)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn predict_trace_nondecreasing_for_psd_q() {
        // The trace can only grow when the position-velocity coupling is
        // nonnegative, which is the regime the filter itself produces
        // (position error accumulates from velocity error). Random PSD
        // matrices are reflected into that regime.
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let mut p = a * a.transpose();
            if p[(0, 2)] + p[(1, 3)] < 0.0 {
                let s = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, -1.0, -1.0));
                p = s * p * s;
            }
            let s = MobilityState::new(Vector4::zeros(), p);
            let noise = MotionNoise::new(rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1)).unwrap();
            let pred = predict(&s, &noise, rng.gen_range(0.0..1.0));
            assert!(pred.cov.trace() >= p.trace() - 1e-12);
            // Adding PSD process noise alone never shrinks the trace,
            // independent of the coupling sign.
            let bare = predict(&s, &MotionNoise::new(0.0, 0.0).unwrap(), 0.0);
            assert!(bare.cov.trace() >= p.trace() - 1e-12);
        }
    }

    #[test]
    fn synthesize_zero_signal_gives_zero() {
        let c = consts();
        let geom = geometry(&[1.0, 3.0, 6.0]);
        let s = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        let y = synthesize_observation(&s, &geom, &c, &CVec::zeros(3)).unwrap();
        assert!(y.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn synthesize_nulled_signal_gives_zero() {
        let c = consts();
        let geom = geometry(&[1.0, 3.0, 6.0]);
        let s = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        let (h_w, _, _) =
            crate::channel::willie_channels(&geom, &s.position(), &s.velocity(), &c).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let raw = random_signal(&mut rng, 3);
        let coef = h_w.dotc(&raw) / h_w.dotc(&h_w);
        let nulled = &raw - &h_w.map(|z| z * coef);
        let y = synthesize_observation(&s, &geom, &c, &nulled).unwrap();
        let scale = raw.norm() * 1e-12;
        assert!(y.norm() <= scale);
    }

    #[test]
    fn synthesize_matches_dense_channel_product() {
        let c = consts();
        let geom = geometry(&[0.7, 2.9, 6.3]);
        let s = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let sig = random_signal(&mut rng, 3);
        let y = synthesize_observation(&s, &geom, &c, &sig).unwrap();
        let (_, h_round, _) =
            crate::channel::willie_channels(&geom, &s.position(), &s.velocity(), &c).unwrap();
        let oracle = &h_round * &sig;
        for j in 0..3 {
            assert_relative_eq!(y[j].re, oracle[j].re, max_relative = 1e-12, epsilon = 1e-24);
            assert_relative_eq!(y[j].im, oracle[j].im, max_relative = 1e-12, epsilon = 1e-24);
        }
    }

    /// Central finite differences against the analytic Jacobian, column-wise
    /// relative error with a 1e-12 floor.
    fn jacobian_fd_error(state: &MobilityState, geom: &PassGeometry, c: &PhysicalConstants, sig: &CVec) -> f64 {
        let jac = observation_jacobian(state, geom, c, sig).unwrap();
        let step = 1e-6;
        let mut worst = 0.0f64;
        for t in 0..4 {
            let mut hi = state.clone();
            let mut lo = state.clone();
            hi.xi[t] += step;
            lo.xi[t] -= step;
            let yh = synthesize_observation(&hi, geom, c, sig).unwrap();
            let yl = synthesize_observation(&lo, geom, c, sig).unwrap();
            let mut col_scale = 0.0f64;
            let mut col_err = 0.0f64;
            for j in 0..yh.len() {
                let fd = (yh[j] - yl[j]) / C64::new(2.0 * step, 0.0);
                col_scale = col_scale.max(jac[(j, t)].norm());
                col_err = col_err.max((fd - jac[(j, t)]).norm());
            }
            worst = worst.max(col_err / col_scale.max(1e-12));
        }
        worst
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let c = consts();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let x_init: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..8.5)).collect();
            let geom = geometry(&x_init);
            let s = MobilityState::exact(
                rng.gen_range(-2.0..12.0),
                rng.gen_range(-2.0..12.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let sig = random_signal(&mut rng, 3);
            worst = worst.max(jacobian_fd_error(&s, &geom, &c, &sig));
        }
        assert!(worst <= 1e-4, "worst Jacobian error {worst}");
    }

    #[test]
    fn jacobian_velocity_columns_vanish_without_doppler() {
        let c = PhysicalConstants {
            cpi_duration: 1e-30, // effectively dT -> 0
            ..consts()
        };
        let geom = geometry(&[1.0, 3.0, 6.0]);
        let s = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let sig = random_signal(&mut rng, 3);
        let jac = observation_jacobian(&s, &geom, &c, &sig).unwrap();
        let pos_scale = (0..3).map(|j| jac[(j, 0)].norm()).fold(0.0, f64::max);
        for j in 0..3 {
            assert!(jac[(j, 2)].norm() <= 1e-20 * pos_scale.max(1e-300));
            assert!(jac[(j, 3)].norm() <= 1e-20 * pos_scale.max(1e-300));
        }
    }

    #[test]
    fn jacobian_linear_in_signal() {
        let c = consts();
        let geom = geometry(&[1.0, 3.0, 6.0]);
        let s = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let sig = random_signal(&mut rng, 3);
        let gamma = C64::new(0.3, -1.7);
        let j1 = observation_jacobian(&s, &geom, &c, &sig).unwrap();
        let j2 = observation_jacobian(&s, &geom, &c, &sig.map(|z| z * gamma)).unwrap();
        for j in 0..3 {
            for t in 0..4 {
                let expect = j1[(j, t)] * gamma;
                assert_relative_eq!(j2[(j, t)].re, expect.re, max_relative = 1e-12, epsilon = 1e-24);
                assert_relative_eq!(j2[(j, t)].im, expect.im, max_relative = 1e-12, epsilon = 1e-24);
            }
        }
    }

    #[test]
    fn update_zero_residual_keeps_state_and_shrinks_cov() {
        let c = consts();
        let geom = geometry(&[1.0, 3.0, 6.0]);
        let mut pred = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        pred.cov = Matrix4::from_diagonal(&Vector4::new(1e-2, 1e-2, 1e-1, 1e-1));
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let sig = random_signal(&mut rng, 3);
        let y = synthesize_observation(&pred, &geom, &c, &sig).unwrap();
        let obs = EchoObservation { y, noise_power: 1e-12 };
        let post = update(&pred, &obs, &geom, &c, &sig).unwrap();
        for i in 0..4 {
            assert_relative_eq!(post.xi[i], pred.xi[i], epsilon = 1e-9);
        }
        assert!(post.cov.trace() <= pred.cov.trace() + 1e-12);
        post.validate().unwrap();
    }

    /// On a synthetic linear scalar observation `h(xi) = xi_0`, the
    /// real-augmented update must coincide with the textbook Kalman filter.
    #[test]
    fn linear_model_matches_textbook_kalman() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = Matrix4::from_fn(|_, _| rng.gen_range(-0.5..0.5));
            let p = a * a.transpose() + Matrix4::identity() * 0.1;
            let pred = MobilityState::new(
                Vector4::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                p,
            );
            let sigma2 = 0.02; // complex noise power; real part carries half
            let measured = pred.xi[0] + rng.gen_range(-0.3..0.3);

            // Through the real-augmented path: J = [1 0 0 0], zero imag row.
            let mut j_real = DMatrix::zeros(2, 4);
            j_real[(0, 0)] = 1.0;
            let mut residual = DVector::zeros(2);
            residual[0] = measured - pred.xi[0];
            let post = real_kalman_update(&pred, &j_real, &residual, sigma2 / 2.0).unwrap();

            // Textbook scalar Kalman with R = sigma2 / 2.
            let r = sigma2 / 2.0;
            let s = p[(0, 0)] + r;
            let k = p.column(0) / s;
            let xi_expect = pred.xi + k * (measured - pred.xi[0]);
            let p_expect = p - k * p.row(0);
            for i in 0..4 {
                assert_relative_eq!(post.xi[i], xi_expect[i], epsilon = 1e-12);
                for j in 0..4 {
                    let sym = 0.5 * (p_expect[(i, j)] + p_expect[(j, i)]);
                    assert_relative_eq!(post.cov[(i, j)], sym, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn covariance_stays_psd_across_cycles() {
        let c = consts();
        let geom = geometry(&[1.0, 3.0, 6.0]);
        let noise = MotionNoise::new(0.01, 0.02).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut truth = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        // Position perturbation must stay inside the carrier's phase
        // ambiguity basin (millimeters at 15 GHz) for a local filter.
        let mut est = MobilityState::new(
            truth.xi + Vector4::new(1e-3, -5e-4, 0.2, -0.1),
            Matrix4::from_diagonal(&Vector4::new(1e-6, 1e-6, 1e-1, 1e-1)),
        );
        let sigma_s2: f64 = 4e-17;
        for _ in 0..500 {
            truth = simulate_motion(&truth, &noise, c.cpi_duration, &mut rng);
            let prior = predict(&est, &noise, c.cpi_duration);
            let sig = random_signal(&mut rng, 3).map(|z| z * C64::new(0.1, 0.0));
            let mut y = synthesize_observation(&truth, &geom, &c, &sig).unwrap();
            for j in 0..y.len() {
                let n = Normal::new(0.0, (sigma_s2 / 2.0).sqrt()).unwrap();
                y[j] += C64::new(n.sample(&mut rng), n.sample(&mut rng));
            }
            est = update(&prior, &EchoObservation { y, noise_power: sigma_s2 }, &geom, &c, &sig).unwrap();
            est.validate().unwrap();
        }
        // Tracker should have remained locked on.
        let dx = est.xi[0] - truth.xi[0];
        let dy = est.xi[1] - truth.xi[1];
        assert!(dx * dx + dy * dy < 1e-2, "position error too large");
    }

    #[test]
    fn noiseless_exact_init_stays_locked() {
        let c = consts();
        let geom = geometry(&[1.0, 3.0, 6.0]);
        let noise = MotionNoise::new(0.0, 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let mut truth = MobilityState::exact(1.0, 4.0, 2.0, 1.0);
        let mut est = MobilityState::new(
            truth.xi,
            Matrix4::from_diagonal(&Vector4::new(1e-2, 1e-2, 1e-1, 1e-1)),
        );
        for _ in 0..100 {
            truth = simulate_motion(&truth, &noise, c.cpi_duration, &mut rng);
            let prior = predict(&est, &noise, c.cpi_duration);
            let sig = random_signal(&mut rng, 3).map(|z| z * C64::new(0.02, 0.0));
            let y = synthesize_observation(&truth, &geom, &c, &sig).unwrap();
            est = update(&prior, &EchoObservation { y, noise_power: 1e-20 }, &geom, &c, &sig).unwrap();
        }
        let dx = est.xi[0] - truth.xi[0];
        let dy = est.xi[1] - truth.xi[1];
        assert!((dx * dx + dy * dy).sqrt() < 1e-6, "drifted {dx},{dy}");
    }
}
