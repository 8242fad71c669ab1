use fresyn_core::frf::*;
use fresyn_core::lti::*;
use fresyn_core::sdp::*;
use fresyn_core::structure::*;
use fresyn_core::synthesis::*;

fn main() {
    let sys = build_power_grid(&PowerGridParams::default()).unwrap();
    let gplant = assemble_networked(&sys).unwrap();
    let grid = make_log_grid(1e-2, std::f64::consts::PI / 0.02, 12, 0.02).unwrap();
    let plant = GeneralizedPlantFrf::sample_model(&gplant, &grid).unwrap();
    let target = chain_pattern(5, 1);
    let param = build_factor_parameterization(&target, 2, 0.0, 0.02).unwrap();
    let realized = realize_factors(&param, &grid);
    let theta0 = param.zero_controller_theta();
    let maps = build_phi_maps(&plant, &realized, &theta0).unwrap();
    let problem = build_norm_lmi(&plant, &maps, &realized, NormObjective::H2);

    // path A: as-is (locals eliminated per block)
    let cfg = SolverConfig::default();
    let out = solve_sdp(&problem, &cfg, None);
    match &out {
        Ok(o) => println!("A eliminated: status {:?} gamma {:.8} newton {}", o.status, o.gamma, o.newton_steps),
        Err(e) => println!("A ERR {e}"),
    }

    // path B: flatten locals into shared variables
    let nth = problem.n_shared;
    let nloc: usize = problem.blocks.iter().map(|b| b.local_terms.len()).sum();
    let mut blocks = Vec::new();
    let mut obj_shared = problem.objective_shared.clone();
    obj_shared.resize(nth + nloc, 0.0);
    let mut off = nth;
    for (k, b) in problem.blocks.iter().enumerate() {
        let mut shared: Vec<(usize, SymMat)> = b
            .shared_terms
            .iter()
            .map(|(v, m)| (*v, SymMat::from_rmat(&fresyn_core::hermitian::hermitian_embed(m))))
            .collect();
        for (j, m) in b.local_terms.iter().enumerate() {
            shared.push((off + j, SymMat::from_rmat(&fresyn_core::hermitian::hermitian_embed(m))));
            obj_shared[off + j] = problem.objective_local[k][j];
        }
        blocks.push(NumericBlock {
            dim: 2 * b.constant.dim(),
            constant: SymMat::from_rmat(&fresyn_core::hermitian::hermitian_embed(&b.constant)),
            shared,
            local: vec![],
        });
        off += b.local_terms.len();
    }
    let numeric = NumericSdp { n_shared: nth + nloc, obj_shared, obj_local: vec![vec![]; blocks.len()], blocks };
    let sol = solve(&numeric, &cfg, None).unwrap();
    println!("B flattened: status {:?} obj {:.8} newton {}", sol.status, sol.objective, sol.newton_steps);
}
