//! Runtime invariant battery behind the `validate` CLI subcommand: quick
//! spot checks of the channel identities, beamformer contracts, tracker
//! consistency, learner gradients, and run determinism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::channel::{channel_set, in_waveguide_vector};
use crate::config::Scenario;
use crate::ekf;
use crate::error::Result;
use crate::harness::{run_episode, Method};
use crate::linalg::{rank_one_defect, CVec, C64};
use crate::optimizer;
use crate::sac;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, detail }
}

/// Runs the full battery; every entry should pass on a healthy build.
pub fn run_suite(scn: &Scenario) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(scn.config.seed ^ 0xda7a);

    // Feed vectors are unit norm with unit-modulus entries.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let xs: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..scn.config.waveguide_length_m)).collect();
            let mut sorted = xs.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let g = in_waveguide_vector(&sorted, &scn.consts)?;
            worst = worst.max((g.norm() - 1.0).abs());
        }
        out.push(check(
            "in-waveguide vectors unit norm",
            worst <= 1e-12,
            format!("worst deviation {worst:.2e}"),
        ));
    }

    // Round-trip matrix is numerically rank one.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..25 {
            let x: Vec<f64> = (0..scn.config.n_waveguides)
                .map(|_| rng.gen_range(0.0..scn.action_bound()))
                .collect();
            let geom = scn.geometry(&x)?;
            let pos = [rng.gen_range(-2.0..12.0), rng.gen_range(-2.0..12.0), 0.0];
            let vel = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 0.0];
            let (_, h_round, _) = crate::channel::willie_channels(&geom, &pos, &vel, &scn.consts)?;
            worst = worst.max(rank_one_defect(&h_round));
        }
        out.push(check(
            "round-trip matrix rank one",
            worst <= 1e-10,
            format!("worst sigma2/sigma1 {worst:.2e}"),
        ));
    }

    // Per-CPI solver contracts on the default scenario.
    {
        let x0 = vec![1.0; scn.config.n_waveguides];
        let geom = scn.geometry(&x0)?;
        let ch = channel_set(
            &geom,
            &scn.config.bob_position_m,
            &scn.config.willie_init_position_m,
            &[
                scn.config.willie_init_velocity_mps[0],
                scn.config.willie_init_velocity_mps[1],
                0.0,
            ],
            &scn.consts,
        )?;
        let sol = optimizer::solve_cpi_flagged(&ch, scn.p_max_w, scn.gamma_sen_w, scn.noise_b_w, scn.noise_w_w)?;
        let leak = ch.h_w.dotc(&sol.w).norm_sqr();
        let budget = (sol.w.norm_squared() + sol.q.norm_squared() - scn.p_max_w).abs() / scn.p_max_w;
        let nulling_ok = leak <= 1e-18 * scn.p_max_w * ch.h_w.norm_squared();
        out.push(check(
            "beamformer nulls the warden channel",
            nulling_ok,
            format!("|h_w^H w|^2 = {leak:.2e}"),
        ));
        out.push(check(
            "power budget exact",
            budget <= 1e-9,
            format!("relative budget error {budget:.2e}"),
        ));
        out.push(check(
            "KL audit at design channel",
            sol.kl_audit <= 1e-12,
            format!("kl = {:.2e}", sol.kl_audit),
        ));
        if sol.feasible {
            let tight = (sol.sensing_power - scn.gamma_sen_w).abs() / scn.gamma_sen_w;
            out.push(check(
                "sensing constraint tight",
                tight <= 1e-6,
                format!("relative slack {tight:.2e}"),
            ));
        } else {
            out.push(check(
                "sensing constraint tight",
                false,
                "default placement infeasible; raise the power budget or lower gamma_sen".into(),
            ));
        }

        // Eigen solution beats random sampling.
        let w_unit = optimizer::optimal_beamformer(&ch.h_b, &ch.h_w, 1.0)?;
        let prob = optimizer::build_rayleigh(
            &ch.h_b,
            &ch.h_w_round,
            scn.p_max_w,
            scn.gamma_sen_w,
            scn.noise_b_w,
            &w_unit,
        )?;
        let an = optimizer::optimal_an(&prob, scn.p_max_w, scn.gamma_sen_w)?;
        let mut best = f64::NEG_INFINITY;
        for _ in 0..20_000 {
            let q = CVec::from_fn(scn.config.n_waveguides, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
            .normalize();
            best = best.max(optimizer::rayleigh_quotient(&prob, &q));
        }
        out.push(check(
            "AN eigen solution beats random search",
            an.quotient >= best - 1e-6 * best.abs().max(1.0),
            format!("eigen {:.6e} vs sampled {best:.6e}", an.quotient),
        ));
    }

    // Jacobian against finite differences on a handful of states.
    {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let x: Vec<f64> = (0..scn.config.n_waveguides)
                .map(|_| rng.gen_range(0.0..scn.action_bound()))
                .collect();
            let geom = scn.geometry(&x)?;
            let state = ekf::MobilityState::exact(
                rng.gen_range(-2.0..12.0),
                rng.gen_range(-2.0..12.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let c = CVec::from_fn(scn.config.n_waveguides, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let jac = ekf::observation_jacobian(&state, &geom, &scn.consts, &c)?;
            for t in 0..4 {
                let mut hi = state.clone();
                let mut lo = state.clone();
                hi.xi[t] += 1e-6;
                lo.xi[t] -= 1e-6;
                let yh = ekf::synthesize_observation(&hi, &geom, &scn.consts, &c)?;
                let yl = ekf::synthesize_observation(&lo, &geom, &scn.consts, &c)?;
                let mut scale: f64 = 0.0;
                let mut err: f64 = 0.0;
                for j in 0..yh.len() {
                    let fd = (yh[j] - yl[j]) / C64::new(2e-6, 0.0);
                    scale = scale.max(jac[(j, t)].norm());
                    err = err.max((fd - jac[(j, t)]).norm());
                }
                worst = worst.max(err / scale.max(1e-12));
            }
        }
        out.push(check(
            "observation Jacobian vs finite differences",
            worst <= 1e-4,
            format!("worst column error {worst:.2e}"),
        ));
    }

    // Learner gradient battery.
    {
        for c in sac::gradient_suite(scn.config.seed ^ 0x6ead)? {
            out.push(check(
                &format!("sac gradients: {}", c.name),
                c.passed(),
                format!("worst {:.2e} (tolerance {:.0e})", c.worst_rel_err, c.tolerance),
            ));
        }
    }

    // Determinism of a short episode.
    {
        let mut config = scn.config.clone();
        config.n_cpis = 20;
        config.monte_carlo_runs = 1;
        let small = Scenario::resolve(config)?;
        let a = run_episode(&small, Method::Sac, 0)?;
        let b = run_episode(&small, Method::Sac, 0)?;
        let same = crate::export::trace_to_csv(&a) == crate::export::trace_to_csv(&b);
        out.push(check("deterministic episode replay", same, "byte-compared CSV traces".into()));
    }

    Ok(out)
}
