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
    let mut oracle_pat = chain_pattern(5, 0);
    for i in 2..5 {
        oracle_pat.set(i, 0, EntryKind::Free);
    }
    let cfg5 = SynthesisConfig { max_iter: 3, ..SynthesisConfig::new(StabilityCheck::Model(gplant.clone())) };
    let r = synthesize_oracle(&plant5, &oracle_pat, &target, NormObjective::Hinf, 2, 0.0, None, &cfg5);
    println!("{:?}", r.map(|o| o.achieved_gamma).map_err(|e| e.to_string()));
}
