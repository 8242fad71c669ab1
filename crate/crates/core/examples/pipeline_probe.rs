//! Scratch probe for the synthesis pipeline at reduced scale.

use fresyn_core::evaluation::*;
use fresyn_core::frf::*;
use fresyn_core::hermitian::CMat;
use fresyn_core::lti::*;
use fresyn_core::structure::*;
use fresyn_core::synthesis::*;
use num_complex::Complex64;
use std::time::Instant;

fn desk_plant(n: usize) -> GeneralizedPlantFrf {
    let grid = make_log_grid(0.1, 10.0, n, 0.1).unwrap();
    let blk = |v: f64| FrfBlock::new(vec![CMat::from_element(1, 1, Complex64::new(v, 0.0)); n]).unwrap();
    GeneralizedPlantFrf::new(grid, blk(1.0), blk(1.0), blk(1.0), blk(0.0)).unwrap()
}

fn main() {
    // ---- desk Hinf ----
    let plant = desk_plant(60);
    let mut pat = SparsityPattern::zeros(1, 1);
    pat.set(0, 0, EntryKind::Free);
    let param = build_factor_parameterization(&pat, 2, 0.0, 0.1).unwrap();
    let cfg = SynthesisConfig {
        max_iter: 10,
        ..SynthesisConfig::new(StabilityCheck::Winding)
    };
    let t0 = Instant::now();
    let report = iterate_synthesis(
        &plant,
        &param,
        &param.zero_controller_theta(),
        &Objective::Hinf,
        &cfg,
    )
    .unwrap();
    println!(
        "desk hinf: gammas {:?} in {:?}",
        report.iterations.iter().map(|r| r.gamma).collect::<Vec<_>>(),
        t0.elapsed()
    );

    // ---- 5-bus ----
    let sys = build_power_grid(&PowerGridParams::default()).unwrap();
    let gplant = assemble_networked(&sys).unwrap();
    let npts: usize = std::env::var("NPTS").ok().and_then(|s| s.parse().ok()).unwrap_or(60);
    let grid = make_log_grid(1e-2, std::f64::consts::PI / 0.02, npts, 0.02).unwrap();
    let plant5 = GeneralizedPlantFrf::sample_model(&gplant, &grid).unwrap();
    let target = chain_pattern(5, 1);
    let mut oracle_pat = chain_pattern(5, 0);
    for i in 2..5 {
        oracle_pat.set(i, 0, EntryKind::Free);
    }
    let cfg5 = SynthesisConfig {
        max_iter: 8,
        ..SynthesisConfig::new(StabilityCheck::Model(gplant.clone()))
    };
    let t0 = Instant::now();
    let oracle = synthesize_oracle(
        &plant5,
        &oracle_pat,
        &target,
        NormObjective::Hinf,
        2,
        0.0,
        None,
        &cfg5,
    );
    match &oracle {
        Ok(o) => println!("oracle ok: gamma {} in {:?}", o.achieved_gamma, t0.elapsed()),
        Err(e) => println!("oracle ERROR after {:?}: {e}", t0.elapsed()),
    }
    let Ok(oracle) = oracle else { return };

    let param5 = build_factor_parameterization(&target, 2, 0.0, 0.02).unwrap();
    let t0 = Instant::now();
    match iterate_synthesis(
        &plant5,
        &param5,
        &param5.zero_controller_theta(),
        &Objective::SpatialRegret(oracle.clone()),
        &cfg5,
    ) {
        Ok(r) => {
            println!(
                "SR ok in {:?}: gammas {:?}",
                t0.elapsed(),
                r.iterations.iter().map(|x| x.gamma).collect::<Vec<_>>()
            );
            println!(
                "   rhos {:?}",
                r.iterations.iter().map(|x| x.spectral_radius).collect::<Vec<_>>()
            );
            let factors = r.final_factors();
            let ks = factors.controller_samples(plant5.grid()).unwrap();
            let t = closed_loop_frf(&plant5, &ks).unwrap();
            let reg = spatial_regret_value(&t, &oracle.t_hat).unwrap();
            println!("   regret {} at w = {}", reg.regret, reg.argmax_omega);
        }
        Err(e) => println!("SR ERROR after {:?}: {e}", t0.elapsed()),
    }

    // H2 baseline
    let t0 = Instant::now();
    match iterate_synthesis(
        &plant5,
        &param5,
        &param5.zero_controller_theta(),
        &Objective::H2,
        &cfg5,
    ) {
        Ok(r) => println!(
            "H2 ok in {:?}: gammas {:?}",
            t0.elapsed(),
            r.iterations.iter().map(|x| x.gamma).collect::<Vec<_>>()
        ),
        Err(e) => println!("H2 ERROR after {:?}: {e}", t0.elapsed()),
    }
}
