use fresyn_core::frf::*;
use fresyn_core::lti::*;
use fresyn_core::structure::*;
use fresyn_core::synthesis::*;

fn main() {
    let sys = build_power_grid(&PowerGridParams::default()).unwrap();
    let gplant = assemble_networked(&sys).unwrap();
    let grid = make_log_grid(1e-2, std::f64::consts::PI / 0.02, 150, 0.02).unwrap();
    let plant5 = GeneralizedPlantFrf::sample_model(&gplant, &grid).unwrap();
    let target = chain_pattern(5, 1);
    let param = build_factor_parameterization(&target, 2, 0.0, 0.02).unwrap();
    let cfg5 = SynthesisConfig { max_iter: 2, ..SynthesisConfig::new(StabilityCheck::Model(gplant.clone())) };
    let r = iterate_synthesis(&plant5, &param, &param.zero_controller_theta(), &Objective::H2, &cfg5);
    match r {
        Ok(rep) => println!("OK {:?}", rep.iterations.iter().map(|x| x.gamma).collect::<Vec<_>>()),
        Err(e) => println!("ERR {e}"),
    }
}
