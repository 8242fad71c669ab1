use fresyn_core::sdp::*;
fn sym(d: usize, vals: &[f64]) -> SymMat { SymMat { dim: d, data: vals.to_vec() } }
fn main() {
    let c0 = [1.0, 0.3, 0.3, 2.0];
    let e11 = sym(2, &[1.0, 0.0, 0.0, 0.0]);
    let e22 = sym(2, &[0.0, 0.0, 0.0, 1.0]);
    let e12 = sym(2, &[0.0, 1.0, 1.0, 0.0]);
    let sdp = NumericSdp {
        n_shared: 0,
        obj_shared: vec![],
        obj_local: vec![vec![1.0, 1.0, 0.0]],
        blocks: vec![NumericBlock {
            dim: 2,
            constant: sym(2, &[-c0[0], -c0[1], -c0[2], -c0[3]]),
            shared: vec![],
            local: vec![e11, e22, e12],
        }],
    };
    let sol = solve(&sdp, &SolverConfig::default(), None).unwrap();
    println!("status {:?} obj {} locals {:?}", sol.status, sol.objective, sol.local);
}
