//! Benchmark placement policies sharing the per-CPI solver: exhaustive 1-D
//! position search, greedy placement at Bob's x-coordinate, and a fixed
//! half-wavelength MIMO array fed with the ground-truth trajectory.

use crate::channel::{channel_set, mimo_channel_set, ChannelSet};
use crate::config::Scenario;
use crate::error::Result;
use crate::optimizer::{solve_cpi_flagged, BeamSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BaselineKind {
    OneDSearch,
    Greedy,
    MimoPerfectCsi,
}

/// Coupling of the per-waveguide scans in [`one_d_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Scan each waveguide independently, holding the others at the
    /// previous CPI's optimum (linear cost).
    #[default]
    Independent,
    /// Full Cartesian product over all waveguides (toy sizes only).
    Cartesian,
}

/// Search grid: eleven points at `L_max / 10` steps, clamped into the
/// feasible initial-PA interval, deduplicated.
pub fn search_grid(waveguide_length: f64, action_bound: f64) -> Vec<f64> {
    let step = waveguide_length / 10.0;
    let mut grid: Vec<f64> = (0..=10).map(|i| (i as f64 * step).min(action_bound)).collect();
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    grid
}

/// Exhaustive 1-D search over initial-PA positions using the estimated
/// warden state; returns the best evaluated placement and its solution.
/// Ties break toward the smallest coordinate.
pub fn one_d_search(
    scn: &Scenario,
    est_pos: &[f64; 3],
    est_vel: &[f64; 3],
    prev_x_init: &[f64],
    mode: SearchMode,
) -> Result<(Vec<f64>, BeamSolution)> {
    let grid = search_grid(scn.config.waveguide_length_m, scn.action_bound());
    let bob = scn.config.bob_position_m;
    let evaluate = |x_init: &[f64]| -> Result<BeamSolution> {
        let geom = scn.geometry(x_init)?;
        let channels = channel_set(&geom, &bob, est_pos, est_vel, &scn.consts)?;
        solve_cpi_flagged(&channels, scn.p_max_w, scn.gamma_sen_w, scn.noise_b_w, scn.noise_w_w)
    };

    let mut best_x = prev_x_init.to_vec();
    let mut best: Option<BeamSolution> = None;
    let mut consider = |x: &[f64], sol: BeamSolution, best_x: &mut Vec<f64>, best: &mut Option<BeamSolution>| {
        let better = match best {
            None => true,
            Some(b) => sol.rate > b.rate,
        };
        if better {
            *best_x = x.to_vec();
            *best = Some(sol);
        }
    };

    match mode {
        SearchMode::Independent => {
            for n in 0..scn.config.n_waveguides {
                for &x in &grid {
                    let mut candidate = prev_x_init.to_vec();
                    candidate[n] = x;
                    let sol = evaluate(&candidate)?;
                    consider(&candidate, sol, &mut best_x, &mut best);
                }
            }
        }
        SearchMode::Cartesian => {
            let n_t = scn.config.n_waveguides;
            let total = grid.len().pow(n_t as u32);
            for flat in 0..total {
                // Lexicographic order, last waveguide fastest, so ties
                // resolve toward the smallest coordinates.
                let mut rem = flat;
                let mut candidate = vec![0.0; n_t];
                for n in (0..n_t).rev() {
                    candidate[n] = grid[rem % grid.len()];
                    rem /= grid.len();
                }
                let sol = evaluate(&candidate)?;
                consider(&candidate, sol, &mut best_x, &mut best);
            }
        }
    }
    Ok((best_x, best.expect("grid nonempty")))
}

/// Greedy placement: every waveguide's first PA at Bob's x-coordinate
/// (clamped into the feasible interval), remaining PAs packed at
/// half-wavelength spacing, raised to the minimum spacing when that is
/// larger.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPlacement {
    pub x_init: Vec<f64>,
    pub spacing: f64,
    /// True when the half-wavelength packing had to be widened to the
    /// minimum PA spacing.
    pub spacing_clamped: bool,
}

pub fn greedy_placement(scn: &Scenario) -> GreedyPlacement {
    let half_wavelength = scn.consts.wavelength / 2.0;
    let spacing = half_wavelength.max(scn.config.min_pa_spacing_m);
    let x = scn.config.bob_position_m[0].clamp(0.0, scn.action_bound());
    GreedyPlacement {
        x_init: vec![x; scn.config.n_waveguides],
        spacing,
        spacing_clamped: spacing > half_wavelength,
    }
}

/// Per-CPI greedy solution using the estimated warden state.
pub fn greedy_solve(
    scn: &Scenario,
    est_pos: &[f64; 3],
    est_vel: &[f64; 3],
) -> Result<(GreedyPlacement, ChannelSet, BeamSolution)> {
    let placement = greedy_placement(scn);
    let geom = scn.geometry_with_spacing(&placement.x_init, placement.spacing)?;
    let channels = channel_set(&geom, &scn.config.bob_position_m, est_pos, est_vel, &scn.consts)?;
    let sol = solve_cpi_flagged(&channels, scn.p_max_w, scn.gamma_sen_w, scn.noise_b_w, scn.noise_w_w)?;
    Ok((placement, channels, sol))
}

/// Fixed half-wavelength MIMO benchmark with perfect (ground-truth) CSI.
/// Elements are centered over the feed line at the array height; the cable
/// receive side is unchanged.
pub fn mimo_baseline(
    scn: &Scenario,
    true_pos: &[f64; 3],
    true_vel: &[f64; 3],
) -> Result<(ChannelSet, BeamSolution)> {
    let geom = scn.geometry(&vec![0.0; scn.config.n_waveguides])?;
    let center = [0.0, 0.0, scn.config.height_m];
    let channels = mimo_channel_set(
        &geom,
        &center,
        &scn.config.bob_position_m,
        true_pos,
        true_vel,
        &scn.consts,
    )?;
    let sol = solve_cpi_flagged(&channels, scn.p_max_w, scn.gamma_sen_w, scn.noise_b_w, scn.noise_w_w)?;
    Ok((channels, sol))
}
