fn main() {
    use fresyn_core::sdp::*;
    let sdp = NumericSdp {
        n_shared: 1,
        obj_shared: vec![1.0],
        obj_local: vec![vec![]],
        blocks: vec![NumericBlock {
            dim: 1,
            constant: SymMat { dim: 1, data: vec![0.0] },
            shared: vec![(0, SymMat::identity(1))],
            local: vec![],
        }],
    };
    let sol = solve(&sdp, &SolverConfig::default(), None).unwrap();
    println!("status {:?} gamma {} newton {} gap {}", sol.status, sol.shared[0], sol.newton_steps, sol.gap_bound);
}
