//! Per-CPI beamforming and artificial-noise design.
//!
//! The beamformer projects Bob's channel onto the orthogonal complement of
//! the warden's channel (exact nulling, hence zero KL divergence at the
//! design channel). The AN direction maximizes a generalized Rayleigh
//! quotient over the positive subspace of its denominator matrix; its power
//! is pinned by the sensing constraint held at the boundary, and the
//! remaining budget goes to the beamformer.

use nalgebra::DVector;

use crate::channel::ChannelSet;
use crate::covertness;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, CMat, CVec, C64};

/// Relative eigenvalue cutoff separating the analytic rank of the
/// denominator matrix from floating-point noise. The two analytic
/// eigenvalues of `B` sit up to nine decades apart (the sensing threshold
/// times Bob's channel gain versus the noise-scaled echo term), while
/// eigensolver noise stays near `eps * lambda_max`, so the cutoff must sit
/// between 1e-13 and 1e-15; truncating the echo direction collapses the AN
/// design onto Bob's channel.
const EIGEN_TOL: f64 = 1e-14;

/// One CPI's transmit design and its audit quantities.
#[derive(Debug, Clone)]
pub struct BeamSolution {
    /// Information beamformer, `||w||^2 = p_beam`.
    pub w: CVec,
    /// Artificial-noise vector, `||q||^2 = p_an`.
    pub q: CVec,
    /// Power allocated to the AN, watts.
    pub p_an: f64,
    /// Power allocated to the beamformer, watts.
    pub p_beam: f64,
    /// Covert rate at Bob, bits/s/Hz.
    pub rate: f64,
    /// Achieved echo power `p_an * g(q_dir)`, watts.
    pub sensing_power: f64,
    /// KL divergence audited against the design-time warden channel, nats.
    pub kl_audit: f64,
    /// Whether the sensing constraint fit inside the power budget. When it
    /// did not, the whole budget is assigned to the AN and the rate is zero.
    pub feasible: bool,
    /// Achieved Rayleigh quotient value.
    pub quotient: f64,
    /// Quotient scaled by `c(X) = |h_b^H w_unit|^2` (the problem objective).
    pub scaled_objective: f64,
}

/// Generalized Rayleigh quotient data for the AN subproblem.
#[derive(Debug, Clone)]
pub struct RayleighProblem {
    /// Numerator matrix `A = P_max H_w^H H_w - Gamma_sen I`, Hermitian.
    pub a: CMat,
    /// Denominator matrix `B = Gamma_sen h_b h_b^H + sigma_b^2 H_w^H H_w`, PSD.
    pub b: CMat,
    /// `c(X) = |h_b^H w_unit|^2`.
    pub c_scalar: f64,
    /// Orthonormal basis of the positive subspace of `B`.
    pub u_plus: CMat,
    /// Retained (positive) eigenvalues of `B`, descending.
    pub lambda_plus: DVector<f64>,
}

/// Optimal-direction AN solution before power feasibility is decided.
#[derive(Debug, Clone)]
pub struct AnSolution {
    /// Unit-norm AN direction.
    pub q_dir: CVec,
    /// Power required to hold the sensing constraint at its boundary.
    pub p_an: f64,
    /// Echo gain `g(q_dir) = q^H H_w^H H_w q` for the unit direction.
    pub echo_gain: f64,
    /// Achieved quotient value (largest eigenvalue of the whitened matrix).
    pub quotient: f64,
    /// `c(X)` times the quotient.
    pub scaled_objective: f64,
}

/// Null-space beamformer: scaled projection of Bob's channel onto the
/// orthogonal complement of the warden's channel.
pub fn optimal_beamformer(h_b: &CVec, h_w: &CVec, p_beam: f64) -> Result<CVec> {
    if h_b.len() != h_w.len() {
        return Err(Error::Shape(format!(
            "optimal_beamformer: channel lengths {} vs {}",
            h_b.len(),
            h_w.len()
        )));
    }
    if p_beam < 0.0 {
        return Err(Error::Domain("optimal_beamformer: negative power".into()));
    }
    let hw_norm2 = h_w.norm_squared();
    if hw_norm2 <= 0.0 {
        return Err(Error::DegenerateChannel);
    }
    let coef = h_w.dotc(h_b) / C64::new(hw_norm2, 0.0);
    let projected = h_b - h_w.map(|z| z * coef);
    let norm = projected.norm();
    if norm <= 1e-12 * h_b.norm() {
        return Err(Error::DegenerateChannel);
    }
    Ok(projected.map(|z| z * C64::new(p_beam.sqrt() / norm, 0.0)))
}

/// Assembles the Rayleigh quotient matrices and the positive subspace of
/// the denominator.
pub fn build_rayleigh(
    h_b: &CVec,
    h_w_round: &CMat,
    p_max: f64,
    gamma_sen: f64,
    noise_b: f64,
    w_unit: &CVec,
) -> Result<RayleighProblem> {
    let n_t = h_b.len();
    crate::linalg::check_len("build_rayleigh: w_unit", w_unit, n_t)?;
    if h_w_round.ncols() != n_t {
        return Err(Error::Shape(format!(
            "build_rayleigh: H_w has {} columns, expected {n_t}",
            h_w_round.ncols()
        )));
    }
    let hh = h_w_round.adjoint() * h_w_round;
    let mut a = hh.clone() * C64::new(p_max, 0.0);
    for i in 0..n_t {
        a[(i, i)] -= C64::new(gamma_sen, 0.0);
    }
    let b = crate::linalg::outer(h_b, h_b) * C64::new(gamma_sen, 0.0) + hh * C64::new(noise_b, 0.0);
    let c_scalar = h_b.dotc(w_unit).norm_sqr();
    let (u_plus, lambda_plus) = positive_subspace(&b)?;
    Ok(RayleighProblem { a, b, c_scalar, u_plus, lambda_plus })
}

/// Extracts the eigenpairs of a Hermitian PSD matrix above the relative
/// tolerance; errors when none survive.
pub fn positive_subspace(b: &CMat) -> Result<(CMat, DVector<f64>)> {
    let (values, vectors) = hermitian_eigen(b)?;
    let lambda_max = values[0];
    if lambda_max <= 0.0 {
        return Err(Error::EmptySubspace);
    }
    let kept: Vec<usize> = (0..values.len()).filter(|&i| values[i] > EIGEN_TOL * lambda_max).collect();
    if kept.is_empty() {
        return Err(Error::EmptySubspace);
    }
    let mut u = CMat::zeros(b.nrows(), kept.len());
    let mut l = DVector::zeros(kept.len());
    for (k, &i) in kept.iter().enumerate() {
        u.set_column(k, &vectors.column(i));
        l[k] = values[i];
    }
    Ok((u, l))
}

/// Optimal AN direction via the whitened principal eigenvector, without the
/// power-budget feasibility decision.
fn an_direction(problem: &RayleighProblem, p_max: f64, gamma_sen: f64) -> Result<AnSolution> {
    let k = problem.lambda_plus.len();
    // C = L^{-1/2} U^H A U L^{-1/2}
    let mut ul = problem.u_plus.clone();
    for j in 0..k {
        let s = problem.lambda_plus[j].sqrt();
        for i in 0..ul.nrows() {
            ul[(i, j)] /= C64::new(s, 0.0);
        }
    }
    let c_mat = ul.adjoint() * &problem.a * &ul;
    let (c_values, c_vectors) = hermitian_eigen(&c_mat)?;
    let quotient = c_values[0];
    let q_prime = c_vectors.column(0).into_owned();
    let q_raw = &ul * q_prime;
    let norm = q_raw.norm();
    if norm <= 0.0 {
        return Err(Error::EmptySubspace);
    }
    let q_dir = q_raw.map(|z| z / C64::new(norm, 0.0));

    // g(q_dir) = q^H H^H H q recovered from A = P_max H^H H - Gamma I.
    let aq = &problem.a * &q_dir;
    let quad_a = q_dir.dotc(&aq).re;
    let g = (quad_a + gamma_sen) / p_max;
    if g <= f64::EPSILON * gamma_sen.max(1.0) / p_max {
        return Err(Error::SensingInfeasible { required_w: f64::INFINITY, budget_w: p_max });
    }
    let p_an = gamma_sen / g;
    Ok(AnSolution {
        q_dir,
        p_an,
        echo_gain: g,
        quotient,
        scaled_objective: problem.c_scalar * quotient,
    })
}

/// Optimal AN direction and boundary power; errors when the sensing
/// constraint cannot be met inside the budget.
pub fn optimal_an(problem: &RayleighProblem, p_max: f64, gamma_sen: f64) -> Result<AnSolution> {
    let sol = an_direction(problem, p_max, gamma_sen)?;
    if sol.p_an > p_max {
        return Err(Error::SensingInfeasible { required_w: sol.p_an, budget_w: p_max });
    }
    Ok(sol)
}

/// Covert rate at Bob: `log2(1 + |h_b^H w|^2 / (|h_b^H q|^2 + sigma_b^2))`.
pub fn covert_rate(h_b: &CVec, w: &CVec, q: &CVec, noise_b: f64) -> f64 {
    let signal = h_b.dotc(w).norm_sqr();
    let interference = h_b.dotc(q).norm_sqr();
    (1.0 + signal / (interference + noise_b)).log2()
}

fn assemble(
    channels: &ChannelSet,
    w: CVec,
    q: CVec,
    p_an: f64,
    p_beam: f64,
    sensing_power: f64,
    feasible: bool,
    quotient: f64,
    scaled_objective: f64,
    noise_b: f64,
    noise_w: f64,
) -> Result<BeamSolution> {
    let rate = if feasible { covert_rate(&channels.h_b, &w, &q, noise_b) } else { 0.0 };
    let kl_audit = covertness::audit(&channels.h_w, &w, &q, noise_w)?.kl;
    Ok(BeamSolution {
        w,
        q,
        p_an,
        p_beam,
        rate,
        sensing_power,
        kl_audit,
        feasible,
        quotient,
        scaled_objective,
    })
}

/// Full per-CPI design; errors on a sensing-infeasible CPI.
pub fn solve_cpi(
    channels: &ChannelSet,
    p_max: f64,
    gamma_sen: f64,
    noise_b: f64,
    noise_w: f64,
) -> Result<BeamSolution> {
    let w_unit = optimal_beamformer(&channels.h_b, &channels.h_w, 1.0)?;
    let problem = build_rayleigh(&channels.h_b, &channels.h_w_round, p_max, gamma_sen, noise_b, &w_unit)?;
    let an = optimal_an(&problem, p_max, gamma_sen)?;
    let p_beam = p_max - an.p_an;
    let w = w_unit.map(|z| z * C64::new(p_beam.sqrt(), 0.0));
    let q = an.q_dir.map(|z| z * C64::new(an.p_an.sqrt(), 0.0));
    assemble(
        channels,
        w,
        q,
        an.p_an,
        p_beam,
        an.p_an * an.echo_gain,
        true,
        an.quotient,
        an.scaled_objective,
        noise_b,
        noise_w,
    )
}

/// Like [`solve_cpi`] but a sensing-infeasible CPI is reported as a flagged
/// zero-rate solution instead of an error: the entire budget drives the AN
/// along the strongest-echo direction so the tracker still receives a
/// best-effort echo.
pub fn solve_cpi_flagged(
    channels: &ChannelSet,
    p_max: f64,
    gamma_sen: f64,
    noise_b: f64,
    noise_w: f64,
) -> Result<BeamSolution> {
    let w_unit = optimal_beamformer(&channels.h_b, &channels.h_w, 1.0)?;
    let problem = build_rayleigh(&channels.h_b, &channels.h_w_round, p_max, gamma_sen, noise_b, &w_unit)?;
    match an_direction(&problem, p_max, gamma_sen) {
        Ok(an) if an.p_an <= p_max => {
            let p_beam = p_max - an.p_an;
            let w = w_unit.map(|z| z * C64::new(p_beam.sqrt(), 0.0));
            let q = an.q_dir.map(|z| z * C64::new(an.p_an.sqrt(), 0.0));
            assemble(
                channels,
                w,
                q,
                an.p_an,
                p_beam,
                an.p_an * an.echo_gain,
                true,
                an.quotient,
                an.scaled_objective,
                noise_b,
                noise_w,
            )
        }
        Ok(_) | Err(Error::SensingInfeasible { .. }) => {
            // Best-effort probing: all power along the principal eigenvector
            // of H_w^H H_w (maximum echo gain).
            let hh = channels.h_w_round.adjoint() * &channels.h_w_round;
            let (vals, vecs) = hermitian_eigen(&hh)?;
            let q_dir = vecs.column(0).into_owned();
            let quotient = rayleigh_quotient(&problem, &q_dir);
            let q = q_dir.map(|z| z * C64::new(p_max.sqrt(), 0.0));
            assemble(
                channels,
                CVec::zeros(channels.h_b.len()),
                q,
                p_max,
                0.0,
                p_max * vals[0],
                false,
                quotient,
                problem.c_scalar * quotient,
                noise_b,
                noise_w,
            )
        }
        Err(e) => Err(e),
    }
}

/// Raw generalized Rayleigh quotient `(q^H A q) / (q^H B q)`; infinite when
/// the denominator vanishes.
pub fn rayleigh_quotient(problem: &RayleighProblem, q: &CVec) -> f64 {
    let num = q.dotc(&(&problem.a * q)).re;
    let den = q.dotc(&(&problem.b * q)).re;
    if den <= 0.0 {
        f64::NEG_INFINITY
    } else {
        num / den
    }
}
