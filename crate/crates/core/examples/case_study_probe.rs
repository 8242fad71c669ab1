//! Full case-study probe at acceptance scale.

use fresyn_core::evaluation::*;
use fresyn_core::frf::*;
use fresyn_core::lti::*;
use fresyn_core::structure::*;
use fresyn_core::synthesis::*;
use std::time::Instant;

fn main() {
    let t_all = Instant::now();
    let sys = build_power_grid(&PowerGridParams::default()).unwrap();
    let gplant = assemble_networked(&sys).unwrap();
    let npts: usize = std::env::var("NPTS").ok().and_then(|s| s.parse().ok()).unwrap_or(150);
    let max_iter: usize = std::env::var("MAXIT").ok().and_then(|s| s.parse().ok()).unwrap_or(15);
    let grid = make_log_grid(1e-2, std::f64::consts::PI / 0.02, npts, 0.02).unwrap();

    // data path: impulse experiments -> estimated G22
    let t0 = Instant::now();
    let batch = simulate_impulse_experiments(&gplant, 4000).unwrap();
    let g22_est = estimate_frf(&batch, &grid).unwrap();
    let truth = GeneralizedPlantFrf::sample_model(&gplant, &grid).unwrap();
    let mut err: f64 = 0.0;
    for k in 0..grid.len() {
        let d = g22_est.at(k) - truth.g22().at(k);
        err = err.max(d.iter().map(|x| x.norm()).fold(0.0, f64::max));
    }
    println!("FRF estimation: max entrywise err {err:.3e} ({:?})", t0.elapsed());
    let plant = assemble_generalized_plant(g22_est, PerformanceBlocks::FromModel(&gplant), &grid).unwrap();

    let report = check_assumptions(&plant, 1e-6, 1e6);
    println!("A1 ok {} A2 ok {} (min sv ratio {:.3e}, max entry {:.3e})", report.rank_ok(), report.bound_ok(), report.min_sigma_ratio, report.max_entry);

    let target = chain_pattern(5, 1);
    let mut oracle_pat = chain_pattern(5, 0);
    for i in 2..5 {
        oracle_pat.set(i, 0, EntryKind::Free);
    }
    let cfg = SynthesisConfig {
        max_iter,
        ..SynthesisConfig::new(StabilityCheck::Model(gplant.clone()))
    };

    let t0 = Instant::now();
    let oracle = synthesize_oracle(&plant, &oracle_pat, &target, NormObjective::Hinf, 2, 0.0, None, &cfg).unwrap();
    println!("oracle: gamma {:.4} iters {:?}", oracle.achieved_gamma, t0.elapsed());

    let param = build_factor_parameterization(&target, 2, 0.0, 0.02).unwrap();
    let mut reports = Vec::new();
    for (name, obj) in [
        ("K2", Objective::H2),
        ("Kinf", Objective::Hinf),
        ("KSR", Objective::SpatialRegret(oracle.clone())),
    ] {
        let t0 = Instant::now();
        match iterate_synthesis(&plant, &param, &param.zero_controller_theta(), &obj, &cfg) {
            Ok(r) => {
                println!(
                    "{name}: {} iters, gamma {:?} -> {:.6} ({:?}) monotone {}",
                    r.iterations.len(),
                    r.iterations.first().map(|x| x.gamma),
                    r.final_gamma().unwrap(),
                    t0.elapsed(),
                    r.gamma_nonincreasing(1e-6),
                );
                reports.push((name, r));
            }
            Err(e) => println!("{name} FAILED after {:?}: {e}", t0.elapsed()),
        }
    }

    // evaluation
    let that = &oracle.t_hat;
    let mut traces = Vec::new();
    for (name, r) in &reports {
        let factors = r.final_factors();
        let ks = factors.controller_samples(plant.grid()).unwrap();
        let t = closed_loop_frf(&plant, &ks).unwrap();
        let reg = spatial_regret_value(&t, that).unwrap();
        let k_ss = realize_controller(&factors).unwrap();
        let spec = DisturbanceSpec {
            channel: 0,
            tones: vec![(8.0, 1.0, 0.0), (38.0, 1.0, 0.0)],
            horizon: 4000,
            ts: 0.02,
        };
        let energy = time_domain_experiment(&gplant, &k_ss, &spec).unwrap();
        println!(
            "{name}: hinf^2 {:.3} h2^2 {:.4} regret {:.4} steady |z|^2 {:.6e} l2 {:.6e}",
            hinf_norm(&t).powi(2),
            h2_norm_squared(&t),
            reg.regret,
            energy.steady_mean,
            energy.post_transient_l2
        );
        traces.push((*name, t, energy));
    }
    // oracle row
    {
        let k_ss = realize_controller(&oracle.factors).unwrap();
        let spec = DisturbanceSpec { channel: 0, tones: vec![(8.0, 1.0, 0.0), (38.0, 1.0, 0.0)], horizon: 4000, ts: 0.02 };
        let energy = time_domain_experiment(&gplant, &k_ss, &spec).unwrap();
        println!(
            "oracle: hinf^2 {:.3} steady |z|^2 {:.6e} l2 {:.6e}",
            hinf_norm(that).powi(2),
            energy.steady_mean,
            energy.post_transient_l2
        );
    }
    if traces.len() == 3 {
        let l2 = |i: usize| traces[i].2.post_transient_l2;
        println!("SR reduction vs K2:   {:.2}%", 100.0 * (1.0 - l2(2) / l2(0)));
        println!("SR reduction vs Kinf: {:.2}%", 100.0 * (1.0 - l2(2) / l2(1)));
        // column-1 sweep peak comparison in [3, 12] rad/s
        let sw_k2 = column_energy_sweep(&traces[0].1, 0).unwrap();
        let sw_sr = column_energy_sweep(&traces[2].1, 0).unwrap();
        let mut peak = (0usize, 0.0f64);
        for (k, &w) in grid.omegas().iter().enumerate() {
            if (3.0..=12.0).contains(&w) && sw_k2[k] > peak.1 {
                peak = (k, sw_k2[k]);
            }
        }
        println!(
            "col-1 sweep at H2 peak w={:.3}: K2 {:.4e} SR {:.4e} (SR below: {})",
            grid.omegas()[peak.0],
            peak.1,
            sw_sr[peak.0],
            sw_sr[peak.0] < peak.1
        );
    }
    println!("TOTAL {:?}", t_all.elapsed());
}
