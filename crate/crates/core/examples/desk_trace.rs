use fresyn_core::frf::*;
use fresyn_core::hermitian::CMat;
use fresyn_core::structure::*;
use fresyn_core::synthesis::*;
use num_complex::Complex64;

fn main() {
    let n = 60;
    let grid = make_log_grid(0.1, 10.0, n, 0.1).unwrap();
    let blk = |v: f64| FrfBlock::new(vec![CMat::from_element(1, 1, Complex64::new(v, 0.0)); n]).unwrap();
    let plant = GeneralizedPlantFrf::new(grid, blk(1.0), blk(1.0), blk(1.0), blk(0.0)).unwrap();
    let mut pat = SparsityPattern::zeros(1, 1);
    pat.set(0, 0, EntryKind::Free);
    let param = build_factor_parameterization(&pat, 2, 0.0, 0.1).unwrap();
    let cfg = SynthesisConfig { max_iter: 3, ..SynthesisConfig::new(StabilityCheck::Winding) };
    let report = iterate_synthesis(&plant, &param, &param.zero_controller_theta(), &Objective::Hinf, &cfg).unwrap();
    for (i, r) in report.iterations.iter().enumerate() {
        eprintln!("== iter {i}: gamma {} newton {} gap_bound {:.2e}", r.gamma, r.newton_steps, r.gap_bound);
    }
    eprintln!("theta: {:?}", report.theta.as_slice());
}
