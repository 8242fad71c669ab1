//! Log-barrier interior-point solver for block-diagonal semidefinite
//! programs.
//!
//! Problem form: minimize a linear objective over variables split into
//! *shared* variables (entering every block) and per-block *local* variables,
//! subject to one affine real-symmetric PSD constraint per block:
//!
//! ```text
//! minimize   c_s' x  +  sum_k c_k' v_k
//! subject to M_k(x, v_k) = C_k + sum_i x_i A_{k,i} + sum_j v_{k,j} L_{k,j}  >= 0
//! ```
//!
//! The Newton system is solved by eliminating each block's local variables
//! (the Hessian couples locals only within their block), leaving a dense
//! system in the shared variables. A Phase-I pass (minimizing a uniform
//! diagonal shift) produces strictly feasible starts and infeasibility
//! certificates when no start is supplied.

use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("initial point is not strictly feasible (block {0})")]
    InfeasibleStart(usize),
    #[error("problem is structurally empty")]
    Empty,
    #[error("inconsistent problem data: {0}")]
    BadProblem(String),
}

/// Dense real symmetric matrix, row-major storage.
#[derive(Debug, Clone)]
pub struct SymMat {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_rmat(m: &crate::hermitian::RMat) -> Self {
        let dim = m.nrows();
        assert_eq!(dim, m.ncols());
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = m[(i, j)];
            }
        }
        Self { dim, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

/// One PSD block.
#[derive(Debug, Clone)]
pub struct NumericBlock {
    pub dim: usize,
    pub constant: SymMat,
    /// Coefficients of shared variables: `(shared index, matrix)`.
    pub shared: Vec<(usize, SymMat)>,
    /// Coefficients of this block's local variables.
    pub local: Vec<SymMat>,
}

/// Block-diagonal SDP in shared/local form.
#[derive(Debug, Clone)]
pub struct NumericSdp {
    pub n_shared: usize,
    pub obj_shared: Vec<f64>,
    /// Per-block local objective coefficients (lengths match `blocks[k].local`).
    pub obj_local: Vec<Vec<f64>>,
    pub blocks: Vec<NumericBlock>,
}

impl NumericSdp {
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.blocks.is_empty() {
            return Err(SdpError::Empty);
        }
        if self.obj_shared.len() != self.n_shared {
            return Err(SdpError::BadProblem("obj_shared length".into()));
        }
        if self.obj_local.len() != self.blocks.len() {
            return Err(SdpError::BadProblem("obj_local length".into()));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.constant.dim != b.dim {
                return Err(SdpError::BadProblem(format!("block {k} constant dim")));
            }
            if self.obj_local[k].len() != b.local.len() {
                return Err(SdpError::BadProblem(format!("block {k} local objective length")));
            }
            for (vi, m) in &b.shared {
                if *vi >= self.n_shared || m.dim != b.dim {
                    return Err(SdpError::BadProblem(format!("block {k} shared coefficient")));
                }
            }
            for m in &b.local {
                if m.dim != b.dim {
                    return Err(SdpError::BadProblem(format!("block {k} local coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Total barrier parameter: the sum of block dimensions.
    pub fn barrier_degree(&self) -> f64 {
        self.blocks.iter().map(|b| b.dim as f64).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Absolute duality-gap target.
    pub gap_abs: f64,
    /// Relative duality-gap target (scaled by the objective magnitude).
    pub gap_rel: f64,
    /// Barrier parameter growth per stage.
    pub mu: f64,
    /// Newton-step budget across all stages.
    pub max_newton_total: usize,
    pub max_newton_per_stage: usize,
    /// Newton decrement threshold declaring a stage centered.
    pub center_tol: f64,
    /// Relative ridge added to the Newton system.
    pub ridge: f64,
    /// How far inside the cone Phase I must get before switching.
    pub phase1_margin: f64,
    /// Optional estimate of the initial objective gap (tightens t0).
    pub initial_gap_hint: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gap_abs: 1e-7,
            gap_rel: 1e-6,
            mu: 20.0,
            max_newton_total: 4000,
            max_newton_per_stage: 80,
            center_tol: 0.05,
            ridge: 1e-11,
            phase1_margin: 1e-8,
            initial_gap_hint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub shared: Vec<f64>,
    pub local: Vec<Vec<f64>>,
    pub objective: f64,
    /// Upper bound on the objective suboptimality at return.
    pub gap_bound: f64,
    pub newton_steps: usize,
    /// Diagnostic message for non-optimal statuses.
    pub message: String,
}

/// Strictly feasible initial point.
#[derive(Debug, Clone)]
pub struct InitialPoint {
    pub shared: Vec<f64>,
    pub local: Vec<Vec<f64>>,
}

const UNBOUNDED_OBJECTIVE: f64 = -1e13;

// ---- dense kernels ------------------------------------------------------

/// In-place lower Cholesky; returns false when the matrix is not PD.
fn chol_in_place(d: usize, a: &mut [f64]) -> bool {
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if !(s > 0.0) || !s.is_finite() {
            return false;
        }
        let ljj = s.sqrt();
        a[j * d + j] = ljj;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / ljj;
        }
    }
    true
}

fn chol_log_det(d: usize, l: &[f64]) -> f64 {
    (0..d).map(|i| l[i * d + i].ln()).sum::<f64>() * 2.0
}

/// `B <- L^{-1} B` for row-major `B` with `cols` columns.
fn forward_solve(d: usize, l: &[f64], b: &mut [f64], cols: usize) {
    for r in 0..d {
        let (head, tail) = b.split_at_mut(r * cols);
        let row = &mut tail[..cols];
        for k in 0..r {
            let lrk = l[r * d + k];
            if lrk != 0.0 {
                let bk = &head[k * cols..k * cols + cols];
                for (rv, &bv) in row.iter_mut().zip(bk) {
                    *rv -= lrk * bv;
                }
            }
        }
        let inv = 1.0 / l[r * d + r];
        for rv in row.iter_mut() {
            *rv *= inv;
        }
    }
}

fn transpose_square(d: usize, a: &mut [f64]) {
    for i in 0..d {
        for j in (i + 1)..d {
            a.swap(i * d + j, j * d + i);
        }
    }
}

/// Solves the SPD system `A x = b` with Jacobi equilibration and a dense
/// Cholesky; returns false when the (ridged) system is still not PD.
///
/// Equilibration keeps the factorization accurate when variable scales span
/// many orders of magnitude (the Newton system mixes gain-like and
/// bound-like variables).
fn solve_spd(n: usize, a: &mut [f64], b: &mut [f64]) -> bool {
    let a0 = a.to_vec();
    let b0 = b.to_vec();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = a[i * n + i];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] *= scale[i] * scale[j];
        }
        b[i] *= scale[i];
    }
    if !chol_in_place(n, a) {
        return false;
    }
    // forward then backward substitution on the single RHS
    for r in 0..n {
        let mut v = b[r];
        for k in 0..r {
            v -= a[r * n + k] * b[k];
        }
        b[r] = v / a[r * n + r];
    }
    for r in (0..n).rev() {
        let mut v = b[r];
        for k in r + 1..n {
            v -= a[k * n + r] * b[k];
        }
        b[r] = v / a[r * n + r];
    }
    for r in 0..n {
        b[r] *= scale[r];
    }
    // one round of iterative refinement against the unscaled system
    let mut resid = vec![0.0; n];
    for i in 0..n {
        let mut acc = b0[i];
        for j in 0..n {
            acc -= a0[i * n + j] * b[j];
        }
        resid[i] = acc * scale[i];
    }
    for r in 0..n {
        let mut v = resid[r];
        for k in 0..r {
            v -= a[r * n + k] * resid[k];
        }
        resid[r] = v / a[r * n + r];
    }
    for r in (0..n).rev() {
        let mut v = resid[r];
        for k in r + 1..n {
            v -= a[k * n + r] * resid[k];
        }
        resid[r] = v / a[r * n + r];
    }
    for r in 0..n {
        b[r] += resid[r] * scale[r];
    }
    true
}

// ---- per-block state ----------------------------------------------------

struct BlockWork {
    /// Assembled matrix / Cholesky factor.
    m: Vec<f64>,
    /// Conjugated coefficient slabs, shared vars then locals.
    slabs: Vec<f64>,
}

fn assemble_block(block: &NumericBlock, shared: &[f64], local: &[f64], out: &mut [f64]) {
    out.copy_from_slice(&block.constant.data);
    for (vi, a) in &block.shared {
        let x = shared[*vi];
        if x != 0.0 {
            for (o, &av) in out.iter_mut().zip(&a.data) {
                *o += x * av;
            }
        }
    }
    for (j, a) in block.local.iter().enumerate() {
        let v = local[j];
        if v != 0.0 {
            for (o, &av) in out.iter_mut().zip(&a.data) {
                *o += v * av;
            }
        }
    }
}

/// Barrier value of one block (`-log det M`); `None` when not PD.
fn block_barrier(block: &NumericBlock, shared: &[f64], local: &[f64], work: &mut Vec<f64>) -> Option<f64> {
    let d = block.dim;
    work.resize(d * d, 0.0);
    assemble_block(block, shared, local, work);
    if chol_in_place(d, work) {
        Some(-chol_log_det(d, work))
    } else {
        None
    }
}

/// Output of the per-block Newton assembly with locals eliminated.
struct BlockNewton {
    /// Contribution to the shared Schur complement (dense n_s x n_s).
    schur: Vec<f64>,
    /// Contribution to the shared residual.
    resid: Vec<f64>,
    /// Barrier gradient w.r.t. locals plus objective term.
    g_local: Vec<f64>,
    /// Cholesky factor of the local Hessian.
    hll: Vec<f64>,
    /// `Hll^{-1} Hls` (n_loc x n_s), for back-substitution.
    w: Vec<f64>,
    ok: bool,
}

fn block_newton(
    block: &NumericBlock,
    obj_local: &[f64],
    shared: &[f64],
    local: &[f64],
    t: f64,
    ridge: f64,
    n_shared: usize,
    work: &mut BlockWork,
) -> BlockNewton {
    let d = block.dim;
    let n_loc = block.local.len();
    let n_act = block.shared.len() + n_loc;
    work.m.resize(d * d, 0.0);
    work.slabs.resize(n_act * d * d, 0.0);

    let fail = || BlockNewton {
        schur: Vec::new(),
        resid: Vec::new(),
        g_local: Vec::new(),
        hll: Vec::new(),
        w: Vec::new(),
        ok: false,
    };

    assemble_block(block, shared, local, &mut work.m);
    if !chol_in_place(d, &mut work.m) {
        return fail();
    }
    let l = &work.m;

    // slab_i = L^{-1} A_i L^{-T}
    for (i, a) in block
        .shared
        .iter()
        .map(|(_, a)| a)
        .chain(block.local.iter())
        .enumerate()
    {
        let slab = &mut work.slabs[i * d * d..(i + 1) * d * d];
        slab.copy_from_slice(&a.data);
        forward_solve(d, l, slab, d);
        transpose_square(d, slab);
        forward_solve(d, l, slab, d);
    }

    let slab = |i: usize| &work.slabs[i * d * d..(i + 1) * d * d];
    let trace = |s: &[f64]| (0..d).map(|i| s[i * d + i]).sum::<f64>();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let ns = block.shared.len();
    // dense Hessian over active variables (shared-active then locals)
    let mut h = vec![0.0; n_act * n_act];
    let mut g = vec![0.0; n_act];
    for i in 0..n_act {
        g[i] = -trace(slab(i));
        for j in i..n_act {
            let v = dot(slab(i), slab(j));
            h[i * n_act + j] = v;
            h[j * n_act + i] = v;
        }
    }
    for (j, c) in obj_local.iter().enumerate() {
        g[ns + j] += t * c;
    }

    // scatter shared-active rows into full shared dimension
    let mut schur = vec![0.0; n_shared * n_shared];
    let mut resid = vec![0.0; n_shared];
    for (ia, (vi, _)) in block.shared.iter().enumerate() {
        resid[*vi] += g[ia];
        for (ja, (vj, _)) in block.shared.iter().enumerate() {
            schur[*vi * n_shared + *vj] += h[ia * n_act + ja];
        }
    }

    if n_loc == 0 {
        return BlockNewton {
            schur,
            resid,
            g_local: Vec::new(),
            hll: Vec::new(),
            w: Vec::new(),
            ok: true,
        };
    }

    // eliminate locals: S -= Hsl Hll^{-1} Hls, r -= Hsl Hll^{-1} gl
    let mut hll = vec![0.0; n_loc * n_loc];
    for i in 0..n_loc {
        for j in 0..n_loc {
            hll[i * n_loc + j] = h[(ns + i) * n_act + (ns + j)];
        }
        let scale = hll[i * n_loc + i].abs().max(1.0);
        hll[i * n_loc + i] += ridge * scale;
    }
    if !chol_in_place(n_loc, &mut hll) {
        return fail();
    }
    // W = Hll^{-1} Hls, where Hls is n_loc x n_s (dense over active shared,
    // scattered to full shared width)
    let mut w = vec![0.0; n_loc * n_shared];
    for i in 0..n_loc {
        for (ja, (vj, _)) in block.shared.iter().enumerate() {
            w[i * n_shared + *vj] = h[(ns + i) * n_act + ja];
        }
    }
    // forward/backward solve with hll on each column set: do it row-wise via
    // two triangular solves on the n_loc x n_shared matrix
    forward_solve(n_loc, &hll, &mut w, n_shared);
    // backward: solve L^T W' = W
    for r in (0..n_loc).rev() {
        for c in 0..n_shared {
            let mut v = w[r * n_shared + c];
            for k in r + 1..n_loc {
                v -= hll[k * n_loc + r] * w[k * n_shared + c];
            }
            w[r * n_shared + c] = v / hll[r * n_loc + r];
        }
    }
    let g_local: Vec<f64> = (0..n_loc).map(|i| g[ns + i]).collect();
    // S -= Hls^T W  (using the original Hls recovered from h via scatter)
    for i in 0..n_loc {
        for (ja, (vj, _)) in block.shared.iter().enumerate() {
            let hls = h[(ns + i) * n_act + ja];
            if hls != 0.0 {
                for c in 0..n_shared {
                    schur[*vj * n_shared + c] -= hls * w[i * n_shared + c];
                }
            }
        }
        // r -= Hsl Hll^{-1} gl: accumulate via W^T g_local below
    }
    for i in 0..n_loc {
        let gi = g_local[i];
        if gi != 0.0 {
            for c in 0..n_shared {
                resid[c] -= w[i * n_shared + c] * gi;
            }
        }
    }

    BlockNewton { schur, resid, g_local, hll, w, ok: true }
}

// ---- the solver ---------------------------------------------------------

struct State {
    shared: Vec<f64>,
    local: Vec<Vec<f64>>,
}

fn objective(sdp: &NumericSdp, st: &State) -> f64 {
    let mut v = st
        .shared
        .iter()
        .zip(&sdp.obj_shared)
        .map(|(x, c)| x * c)
        .sum::<f64>();
    for (loc, c) in st.local.iter().zip(&sdp.obj_local) {
        v += loc.iter().zip(c).map(|(x, cc)| x * cc).sum::<f64>();
    }
    v
}

fn barrier_total(sdp: &NumericSdp, st: &State) -> Option<f64> {
    let mut acc = 0.0;
    let mut work = Vec::new();
    for (k, b) in sdp.blocks.iter().enumerate() {
        acc += block_barrier(b, &st.shared, &st.local[k], &mut work)?;
    }
    Some(acc)
}

fn all_feasible(sdp: &NumericSdp, st: &State) -> bool {
    barrier_total(sdp, st).is_some()
}

/// One centering pass at fixed `t`; returns the Newton steps spent and the
/// final Newton decrement, or `None` on a numerical dead end.
struct NewtonStep {
    dx: Vec<f64>,
    dlocal: Vec<Vec<f64>>,
    lambda2: f64,
}

/// Forms and solves the (locally eliminated) Newton system at the current
/// point.
fn newton_step(sdp: &NumericSdp, st: &State, t: f64, cfg: &SolverConfig) -> Option<NewtonStep> {
    let n_s = sdp.n_shared;
    #[cfg(feature = "parallel")]
    let results: Vec<BlockNewton> = sdp
        .blocks
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let mut work = BlockWork { m: Vec::new(), slabs: Vec::new() };
            block_newton(b, &sdp.obj_local[k], &st.shared, &st.local[k], t, cfg.ridge, n_s, &mut work)
        })
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<BlockNewton> = {
        let mut work = BlockWork { m: Vec::new(), slabs: Vec::new() };
        sdp.blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                block_newton(b, &sdp.obj_local[k], &st.shared, &st.local[k], t, cfg.ridge, n_s, &mut work)
            })
            .collect()
    };
    if results.iter().any(|r| !r.ok) {
        return None;
    }

    let mut schur = vec![0.0; n_s * n_s];
    let mut resid: Vec<f64> = sdp.obj_shared.iter().map(|c| t * c).collect();
    for r in &results {
        for (s, v) in schur.iter_mut().zip(&r.schur) {
            *s += v;
        }
        for (s, v) in resid.iter_mut().zip(&r.resid) {
            *s += v;
        }
    }
    let scale = (0..n_s)
        .map(|i| schur[i * n_s + i].abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    for i in 0..n_s {
        schur[i * n_s + i] += cfg.ridge * scale;
    }
    let g_shared = resid.clone();
    let mut dx = resid;
    for v in dx.iter_mut() {
        *v = -*v;
    }
    if n_s > 0 && !solve_spd(n_s, &mut schur, &mut dx) {
        return None;
    }
    // local directions and Newton decrement
    let mut lambda2 = -g_shared.iter().zip(&dx).map(|(g, d)| g * d).sum::<f64>();
    let mut dlocal: Vec<Vec<f64>> = Vec::with_capacity(results.len());
    for r in &results {
        let n_loc = r.g_local.len();
        if n_loc == 0 {
            dlocal.push(Vec::new());
            continue;
        }
        // dl = -Hll^{-1} gl - W dx
        let mut dl = r.g_local.clone();
        // solve Hll z = gl
        forward_solve(n_loc, &r.hll, &mut dl, 1);
        for rr in (0..n_loc).rev() {
            let mut v = dl[rr];
            for k in rr + 1..n_loc {
                v -= r.hll[k * n_loc + rr] * dl[k];
            }
            dl[rr] = v / r.hll[rr * n_loc + rr];
        }
        for v in dl.iter_mut() {
            *v = -*v;
        }
        for i in 0..n_loc {
            let mut acc = 0.0;
            for c in 0..n_s {
                acc += r.w[i * n_s + c] * dx[c];
            }
            dl[i] -= acc;
        }
        lambda2 -= r.g_local.iter().zip(&dl).map(|(g, d)| g * d).sum::<f64>();
        dlocal.push(dl);
    }
    if !lambda2.is_finite() {
        return None;
    }
    Some(NewtonStep { dx, dlocal, lambda2 })
}

fn center(
    sdp: &NumericSdp,
    st: &mut State,
    t: f64,
    cfg: &SolverConfig,
    center_tol: f64,
) -> Option<(usize, f64)> {
    let mut steps = 0usize;
    let mut last_lambda2 = f64::INFINITY;
    let mut stalled = 0usize;
    for _ in 0..cfg.max_newton_per_stage {
        let NewtonStep { dx, dlocal, lambda2 } = newton_step(sdp, st, t, cfg)?;
        if lambda2 <= center_tol {
            return Some((steps, lambda2));
        }
        // with an enormous decrement, check for a cone-respecting descent
        // ray; riding it either drives the objective past the unboundedness
        // threshold or (in phase I) reaches the early-exit depth quickly
        if lambda2 > 1e9 && is_recession_direction(sdp, &dx, &dlocal) {
            let mut rate = dx.iter().zip(&sdp.obj_shared).map(|(d, c)| d * c).sum::<f64>();
            for (dl, c) in dlocal.iter().zip(&sdp.obj_local) {
                rate += dl.iter().zip(c).map(|(d, cc)| d * cc).sum::<f64>();
            }
            let obj_now = objective(sdp, st);
            let mut alpha_big = (10.0 * (1.0 + obj_now.abs()) / rate.abs()).min(1e12);
            for _ in 0..40 {
                let trial = State {
                    shared: st.shared.iter().zip(&dx).map(|(x, d)| x + alpha_big * d).collect(),
                    local: st
                        .local
                        .iter()
                        .zip(&dlocal)
                        .map(|(l, d)| l.iter().zip(d).map(|(x, dd)| x + alpha_big * dd).collect())
                        .collect(),
                };
                if all_feasible(sdp, &trial) {
                    *st = trial;
                    break;
                }
                alpha_big *= 0.5;
            }
            steps += 1;
            if objective(sdp, st) < UNBOUNDED_OBJECTIVE {
                return Some((steps, 0.0));
            }
            continue;
        }

        // Armijo backtracking, maintaining strict feasibility; outside the
        // quadratic-convergence region start from the damped step
        // 1/(1 + lambda), which guarantees progress for self-concordant
        // barriers and avoids full-step oscillation across flat faces
        let phi0 = t * objective(sdp, st) + barrier_total(sdp, st)?;
        let slope = -lambda2;
        let lambda = lambda2.max(0.0).sqrt();
        let mut alpha = if lambda > 0.25 { 1.0 / (1.0 + lambda) } else { 1.0 };
        let mut accepted = false;
        let mut phi_new = phi0;
        for _ in 0..60 {
            let trial = State {
                shared: st
                    .shared
                    .iter()
                    .zip(&dx)
                    .map(|(x, d)| x + alpha * d)
                    .collect(),
                local: st
                    .local
                    .iter()
                    .zip(&dlocal)
                    .map(|(l, d)| l.iter().zip(d).map(|(x, dd)| x + alpha * dd).collect())
                    .collect(),
            };
            if let Some(bar) = barrier_total(sdp, &trial) {
                let phi = t * objective(sdp, &trial) + bar;
                if phi <= phi0 + 0.01 * alpha * slope {
                    *st = trial;
                    accepted = true;
                    phi_new = phi;
                    break;
                }
            }
            alpha *= 0.5;
        }
        // deep inside the t ladder the computed decrement floors at the
        // round-off level of the Newton system; when the merit function has
        // gone f64-stationary the iterate is as centered as the arithmetic
        // allows
        if accepted {
            if (phi0 - phi_new).abs() <= 1e-8 * (1.0 + phi0.abs()) {
                stalled += 1;
                if stalled >= 3 {
                    return Some((steps + 1, 0.0));
                }
            } else {
                stalled = 0;
            }
        }
        if std::env::var("FRESYN_SDP_TRACE2").is_ok() {
            eprintln!("    nt step {steps}: lam2={lambda2:.3e} alpha={alpha:.3e} obj={:.6e}", objective(sdp, st));
        }
        if !accepted {
            // no descent representable in f64: numerically stationary
            return Some((steps, 0.0));
        }
        steps += 1;
        last_lambda2 = lambda2;
        if objective(sdp, st) < UNBOUNDED_OBJECTIVE {
            return Some((steps, 0.0));
        }
    }
    Some((steps, last_lambda2))
}

fn run_barrier(
    sdp: &NumericSdp,
    st: &mut State,
    cfg: &SolverConfig,
    // optional early exit: phase-I switches out as soon as the shift is
    // comfortably negative
    early_exit: Option<&dyn Fn(&State) -> bool>,
) -> (SolveStatus, f64, usize) {
    let nu = sdp.barrier_degree();
    let obj0 = objective(sdp, st).abs();
    let gap0 = cfg
        .initial_gap_hint
        .unwrap_or_else(|| obj0.max(1.0));
    let mut t = (nu / gap0.max(1e-12)).max(1.0);
    let mut newton_total = 0usize;
    loop {
        match center(sdp, st, t, cfg, cfg.center_tol) {
            Some((steps, _)) => newton_total += steps,
            None => return (SolveStatus::NumericalFailure, nu / t, newton_total),
        }
        if let Some(cb) = early_exit {
            if cb(st) {
                return (SolveStatus::Optimal, nu / t, newton_total);
            }
        }
        if objective(sdp, st) < UNBOUNDED_OBJECTIVE {
            return (SolveStatus::Unbounded, nu / t, newton_total);
        }
        // decide on the now-centered objective value
        let gap = nu / t;
        let target = cfg.gap_abs.max(cfg.gap_rel * objective(sdp, st).abs());
        if std::env::var("FRESYN_SDP_TRACE").is_ok() {
            eprintln!(
                "stage t={t:.3e} gap={gap:.3e} target={target:.3e} obj={:.6e} newton={newton_total}",
                objective(sdp, st)
            );
        }
        if gap <= target {
            // polish the centering so the gap certificate holds: a Newton
            // decrement below one certifies a gap within (1 + lambda/sqrt(nu))
            // of nu/t
            let lambda2 = match center(sdp, st, t, cfg, 1e-8) {
                Some((steps, l2)) => {
                    newton_total += steps;
                    l2
                }
                None => return (SolveStatus::NumericalFailure, gap, newton_total),
            };
            if objective(sdp, st) < UNBOUNDED_OBJECTIVE {
                return (SolveStatus::Unbounded, nu / t, newton_total);
            }
            if lambda2 <= 0.8 {
                return (SolveStatus::Optimal, 1.2 * gap, newton_total);
            }
            return (SolveStatus::NumericalFailure, gap, newton_total);
        }
        if newton_total >= cfg.max_newton_total {
            return (SolveStatus::NumericalFailure, nu / t, newton_total);
        }
        // never push t far beyond what the target needs; deep stages only
        // erode conditioning
        t = (t * cfg.mu).min(1.02 * nu / target);
    }
}

/// Whether `(dx, dlocal)` is a descent recession direction: objective
/// strictly decreasing and every block's coefficient combination PSD.
fn is_recession_direction(sdp: &NumericSdp, dx: &[f64], dlocal: &[Vec<f64>]) -> bool {
    let norm = dx
        .iter()
        .chain(dlocal.iter().flatten())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    if !(norm > 0.0) || !norm.is_finite() {
        return false;
    }
    let mut obj_rate = dx
        .iter()
        .zip(&sdp.obj_shared)
        .map(|(d, c)| d * c)
        .sum::<f64>();
    for (dl, c) in dlocal.iter().zip(&sdp.obj_local) {
        obj_rate += dl.iter().zip(c).map(|(d, cc)| d * cc).sum::<f64>();
    }
    obj_rate /= norm;
    if obj_rate >= -1e-10 {
        return false;
    }
    for (k, b) in sdp.blocks.iter().enumerate() {
        let mut m = vec![0.0; b.dim * b.dim];
        let mut scale = 0.0f64;
        for (vi, a) in &b.shared {
            let x = dx[*vi] / norm;
            if x != 0.0 {
                for (o, &av) in m.iter_mut().zip(&a.data) {
                    *o += x * av;
                }
            }
        }
        if let Some(dl) = dlocal.get(k) {
            for (j, a) in b.local.iter().enumerate() {
                let v = dl.get(j).copied().unwrap_or(0.0) / norm;
                if v != 0.0 {
                    for (o, &av) in m.iter_mut().zip(&a.data) {
                        *o += v * av;
                    }
                }
            }
        }
        for &v in &m {
            scale = scale.max(v.abs());
        }
        let rm = crate::hermitian::RMat::from_row_slice(b.dim, b.dim, &m);
        let eigs = crate::hermitian::real_symmetric_eigenvalues(&rm);
        if let Some(&min) = eigs.first() {
            if min < -1e-9 * scale.max(1e-12) {
                return false;
            }
        }
    }
    true
}

/// Minimum eigenvalue over all assembled blocks at a point (diagnostic).
pub fn min_block_eigenvalue(sdp: &NumericSdp, shared: &[f64], local: &[Vec<f64>]) -> f64 {
    let mut min = f64::INFINITY;
    for (k, b) in sdp.blocks.iter().enumerate() {
        let mut m = vec![0.0; b.dim * b.dim];
        assemble_block(b, shared, &local[k], &mut m);
        let rm = crate::hermitian::RMat::from_row_slice(b.dim, b.dim, &m);
        let eigs = crate::hermitian::real_symmetric_eigenvalues(&rm);
        if let Some(e) = eigs.first() {
            min = min.min(*e);
        }
    }
    min
}

fn phase_one(sdp: &NumericSdp, cfg: &SolverConfig) -> Result<State, (SolveStatus, String)> {
    // extended problem: extra shared variable s with identity coefficient in
    // every block; minimize s
    let n_s = sdp.n_shared + 1;
    // box constraints |x| <= R keep directions that no original block curves
    // (flat under the barrier) from drifting to infinity while the shift is
    // minimized; local variables get their boxes as extra diagonal slots of
    // their own block
    const PHASE1_BOX: f64 = 1e8;
    let mut blocks = Vec::with_capacity(sdp.blocks.len());
    for b in &sdp.blocks {
        let n_loc = b.local.len();
        let dim_ext = b.dim + 2 * n_loc;
        let embed = |m: &SymMat, extra: &[(usize, f64)]| {
            let mut out = SymMat::zeros(dim_ext);
            for i in 0..m.dim {
                for j in 0..m.dim {
                    out.data[i * dim_ext + j] = m.data[i * m.dim + j];
                }
            }
            for &(slot, v) in extra {
                out.data[slot * dim_ext + slot] = v;
            }
            out
        };
        let mut constant = embed(&b.constant, &[]);
        for j in 0..2 * n_loc {
            constant.data[(b.dim + j) * dim_ext + (b.dim + j)] = PHASE1_BOX;
        }
        let mut shared: Vec<(usize, SymMat)> =
            b.shared.iter().map(|(v, m)| (*v, embed(m, &[]))).collect();
        shared.push((sdp.n_shared, embed(&SymMat::identity(b.dim), &[])));
        let local: Vec<SymMat> = b
            .local
            .iter()
            .enumerate()
            .map(|(j, m)| embed(m, &[(b.dim + 2 * j, -1.0), (b.dim + 2 * j + 1, 1.0)]))
            .collect();
        blocks.push(NumericBlock { dim: dim_ext, constant, shared, local });
    }
    let mut obj_local: Vec<Vec<f64>> = sdp.blocks.iter().map(|b| vec![0.0; b.local.len()]).collect();
    for vi in 0..sdp.n_shared {
        for sign in [1.0, -1.0] {
            blocks.push(NumericBlock {
                dim: 1,
                constant: SymMat { dim: 1, data: vec![PHASE1_BOX] },
                shared: vec![(vi, SymMat { dim: 1, data: vec![sign] })],
                local: vec![],
            });
            obj_local.push(vec![]);
        }
    }
    let mut obj_shared = vec![0.0; n_s];
    obj_shared[sdp.n_shared] = 1.0;
    let ext = NumericSdp {
        n_shared: n_s,
        obj_shared,
        obj_local,
        blocks,
    };
    // starting shift: one above the worst block deficiency at the origin
    let zeros_local: Vec<Vec<f64>> = sdp.blocks.iter().map(|b| vec![0.0; b.local.len()]).collect();
    let zero_shared = vec![0.0; sdp.n_shared];
    let min_eig = min_block_eigenvalue(sdp, &zero_shared, &zeros_local);
    let s0 = (-min_eig).max(0.0) + 1.0;
    let mut shared0 = vec![0.0; n_s];
    shared0[sdp.n_shared] = s0;
    let mut ext_local = zeros_local;
    ext_local.extend(std::iter::repeat_with(Vec::new).take(2 * sdp.n_shared));
    let mut st = State { shared: shared0, local: ext_local };
    if !all_feasible(&ext, &st) {
        return Err((SolveStatus::NumericalFailure, "phase-I start infeasible".into()));
    }
    let margin = cfg.phase1_margin;
    // leave phase I only once the point sits comfortably inside the cone,
    // so the main barrier does not start hugging the boundary
    let exit_depth = (0.05 * (1.0 + s0)).max(margin * 1e3);
    let exit = move |s: &State| s.shared[s.shared.len() - 1] < -exit_depth;
    let p1_cfg = SolverConfig {
        gap_abs: (cfg.phase1_margin * 0.1).min(1e-9),
        gap_rel: 0.0,
        initial_gap_hint: Some(s0 + 1.0),
        ..cfg.clone()
    };
    let (status, _gap, _n) = run_barrier(&ext, &mut st, &p1_cfg, Some(&exit));
    let s_final = st.shared[sdp.n_shared];
    if s_final < -margin && matches!(status, SolveStatus::Optimal | SolveStatus::Unbounded) {
        st.shared.truncate(sdp.n_shared);
        st.local.truncate(sdp.blocks.len());
        return Ok(State { shared: st.shared, local: st.local });
    }
    match status {
        SolveStatus::Optimal => Err((
            SolveStatus::Infeasible,
            format!("phase-I optimum {s_final:.3e} not strictly negative"),
        )),
        other => Err((other, format!("phase-I ended with status {other:?}"))),
    }
}

/// Solves the SDP. When `init` is given it must be strictly feasible;
/// otherwise a Phase-I pass finds a start or certifies infeasibility.
pub fn solve(sdp: &NumericSdp, cfg: &SolverConfig, init: Option<InitialPoint>) -> Result<Solution, SdpError> {
    sdp.validate()?;
    let mut st = match init {
        Some(p) => {
            let st = State { shared: p.shared, local: p.local };
            if st.shared.len() != sdp.n_shared || st.local.len() != sdp.blocks.len() {
                return Err(SdpError::BadProblem("initial point dimensions".into()));
            }
            if !all_feasible(sdp, &st) {
                let bad = sdp
                    .blocks
                    .iter()
                    .enumerate()
                    .position(|(k, b)| {
                        let mut w = Vec::new();
                        block_barrier(b, &st.shared, &st.local[k], &mut w).is_none()
                    })
                    .unwrap_or(0);
                return Err(SdpError::InfeasibleStart(bad));
            }
            st
        }
        None => match phase_one(sdp, cfg) {
            Ok(st) => st,
            Err((status, message)) => {
                return Ok(Solution {
                    status,
                    shared: vec![0.0; sdp.n_shared],
                    local: sdp.blocks.iter().map(|b| vec![0.0; b.local.len()]).collect(),
                    objective: f64::NAN,
                    gap_bound: f64::INFINITY,
                    newton_steps: 0,
                    message,
                })
            }
        },
    };
    let (status, gap_bound, newton_steps) = run_barrier(sdp, &mut st, cfg, None);
    Ok(Solution {
        status,
        objective: objective(sdp, &st),
        shared: st.shared,
        local: st.local,
        gap_bound,
        newton_steps,
        message: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(d: usize, vals: &[f64]) -> SymMat {
        SymMat { dim: d, data: vals.to_vec() }
    }

    #[test]
    fn min_gamma_two_by_two() {
        // min g s.t. [[g, 1], [1, g]] >= 0  ->  g* = 1
        let sdp = NumericSdp {
            n_shared: 1,
            obj_shared: vec![1.0],
            obj_local: vec![vec![]],
            blocks: vec![NumericBlock {
                dim: 2,
                constant: sym(2, &[0.0, 1.0, 1.0, 0.0]),
                shared: vec![(0, SymMat::identity(2))],
                local: vec![],
            }],
        };
        let sol = solve(&sdp, &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.shared[0] - 1.0).abs() < 1e-5, "gamma = {}", sol.shared[0]);
    }

    #[test]
    fn min_gamma_nonnegative() {
        let sdp = NumericSdp {
            n_shared: 1,
            obj_shared: vec![1.0],
            obj_local: vec![vec![]],
            blocks: vec![NumericBlock {
                dim: 1,
                constant: sym(1, &[0.0]),
                shared: vec![(0, SymMat::identity(1))],
                local: vec![],
            }],
        };
        let sol = solve(&sdp, &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.shared[0].abs() < 1e-5, "gamma = {}", sol.shared[0]);
    }

    #[test]
    fn detects_infeasible_pair() {
        // gamma >= 0 and gamma <= -1
        let sdp = NumericSdp {
            n_shared: 1,
            obj_shared: vec![1.0],
            obj_local: vec![vec![], vec![]],
            blocks: vec![
                NumericBlock {
                    dim: 1,
                    constant: sym(1, &[0.0]),
                    shared: vec![(0, SymMat::identity(1))],
                    local: vec![],
                },
                NumericBlock {
                    dim: 1,
                    constant: sym(1, &[-1.0]),
                    shared: vec![(0, sym(1, &[-1.0]))],
                    local: vec![],
                },
            ],
        };
        let sol = solve(&sdp, &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min gamma s.t. 5 - gamma >= 0
        let sdp = NumericSdp {
            n_shared: 1,
            obj_shared: vec![1.0],
            obj_local: vec![vec![]],
            blocks: vec![NumericBlock {
                dim: 1,
                constant: sym(1, &[5.0]),
                shared: vec![(0, sym(1, &[-1.0]))],
                local: vec![],
            }],
        };
        let sol = solve(&sdp, &SolverConfig::default(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn local_trace_minimization() {
        // min tr(G) s.t. G >= C0; optimum G = C0, tr = 3
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
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-4, "objective {}", sol.objective);
        assert!((sol.local[0][2] - 0.3).abs() < 1e-3, "off-diagonal {}", sol.local[0][2]);
    }

    #[test]
    fn warm_start_is_used() {
        let sdp = NumericSdp {
            n_shared: 1,
            obj_shared: vec![1.0],
            obj_local: vec![vec![]],
            blocks: vec![NumericBlock {
                dim: 2,
                constant: sym(2, &[0.0, 1.0, 1.0, 0.0]),
                shared: vec![(0, SymMat::identity(2))],
                local: vec![],
            }],
        };
        let init = InitialPoint { shared: vec![2.0], local: vec![vec![]] };
        let sol = solve(&sdp, &SolverConfig::default(), Some(init)).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.shared[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_infeasible_start() {
        let sdp = NumericSdp {
            n_shared: 1,
            obj_shared: vec![1.0],
            obj_local: vec![vec![]],
            blocks: vec![NumericBlock {
                dim: 1,
                constant: sym(1, &[0.0]),
                shared: vec![(0, SymMat::identity(1))],
                local: vec![],
            }],
        };
        let init = InitialPoint { shared: vec![-1.0], local: vec![vec![]] };
        assert!(matches!(
            solve(&sdp, &SolverConfig::default(), Some(init)),
            Err(SdpError::InfeasibleStart(_))
        ));
    }

    #[test]
    fn eliminated_direction_matches_flattened() {
        // random shared+local problem; the per-block elimination must give
        // the same Newton direction as the flattened dense system
        let mut seed = 12345u64;
        let mut rnd = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let d = 3usize;
        let n_sh = 2usize;
        let n_loc = 2usize;
        let rand_sym = |rnd: &mut dyn FnMut() -> f64| {
            let mut m = SymMat::zeros(d);
            for i in 0..d {
                for j in 0..=i {
                    let v = rnd();
                    m.data[i * d + j] = v;
                    m.data[j * d + i] = v;
                }
            }
            m
        };
        let mut blocks = Vec::new();
        let mut obj_local = Vec::new();
        for _ in 0..2 {
            let mut constant = SymMat::identity(d);
            for v in constant.data.iter_mut() {
                *v *= 5.0;
            }
            blocks.push(NumericBlock {
                dim: d,
                constant,
                shared: (0..n_sh).map(|v| (v, rand_sym(&mut rnd))).collect(),
                local: (0..n_loc).map(|_| rand_sym(&mut rnd)).collect(),
            });
            obj_local.push(vec![0.3, -0.2]);
        }
        let sdp = NumericSdp {
            n_shared: n_sh,
            obj_shared: vec![1.0, -0.5],
            obj_local,
            blocks: blocks.clone(),
        };
        let st = State {
            shared: vec![0.1, -0.05],
            local: vec![vec![0.02, 0.01], vec![-0.03, 0.04]],
        };
        assert!(all_feasible(&sdp, &st));
        let cfg = SolverConfig { ridge: 0.0, ..SolverConfig::default() };
        let step = newton_step(&sdp, &st, 3.0, &cfg).unwrap();

        // flatten locals into shared variables
        let mut fl_blocks = Vec::new();
        let mut obj_shared = sdp.obj_shared.clone();
        obj_shared.extend([0.3, -0.2, 0.3, -0.2]);
        for (k, b) in blocks.iter().enumerate() {
            let mut shared = b.shared.clone();
            for (j, m) in b.local.iter().enumerate() {
                shared.push((n_sh + k * n_loc + j, m.clone()));
            }
            fl_blocks.push(NumericBlock { dim: d, constant: b.constant.clone(), shared, local: vec![] });
        }
        let flat = NumericSdp {
            n_shared: n_sh + 2 * n_loc,
            obj_shared,
            obj_local: vec![vec![]; 2],
            blocks: fl_blocks,
        };
        let fst = State {
            shared: vec![0.1, -0.05, 0.02, 0.01, -0.03, 0.04],
            local: vec![vec![], vec![]],
        };
        let fstep = newton_step(&flat, &fst, 3.0, &cfg).unwrap();

        // brute-force ground truth via dense inverse
        let nv = n_sh + 2 * n_loc;
        let mut h_full = vec![0.0; nv * nv];
        let mut g_full = vec![3.0 * 1.0, 3.0 * -0.5, 0.9, -0.6, 0.9, -0.6];
        for (k, b) in flat.blocks.iter().enumerate() {
            let mut m = vec![0.0; d * d];
            assemble_block(b, &fst.shared, &fst.local[k], &mut m);
            let rm = crate::hermitian::RMat::from_row_slice(d, d, &m);
            let mi = rm.try_inverse().unwrap();
            let mats: Vec<crate::hermitian::RMat> = b
                .shared
                .iter()
                .map(|(_, a)| crate::hermitian::RMat::from_row_slice(d, d, &a.data))
                .collect();
            for (ia, (vi, _)) in b.shared.iter().enumerate() {
                let u_i = &mi * &mats[ia];
                g_full[*vi] -= u_i.trace();
                for (ja, (vj, _)) in b.shared.iter().enumerate() {
                    let u_j = &mi * &mats[ja];
                    h_full[vi * nv + vj] += (&u_i * &u_j).trace();
                }
            }
        }
        let hm = crate::hermitian::RMat::from_row_slice(nv, nv, &h_full);
        let gv = nalgebra::DVector::from_vec(g_full.clone());
        let dx_true = hm.lu().solve(&(-&gv)).unwrap();
        let lambda2_true = -gv.dot(&dx_true);
        eprintln!("lambda2: elim {} flat {} true {}", step.lambda2, fstep.lambda2, lambda2_true);
        eprintln!("dx elim  {:?} {:?}", step.dx, step.dlocal);
        eprintln!("dx flat  {:?}", fstep.dx);
        eprintln!("dx true  {:?}", dx_true.as_slice());
        assert!(
            (step.lambda2 - fstep.lambda2).abs() <= 1e-8 * (1.0 + fstep.lambda2.abs()),
            "lambda2 {} vs {}",
            step.lambda2,
            fstep.lambda2
        );
        for v in 0..n_sh {
            assert!(
                (step.dx[v] - fstep.dx[v]).abs() <= 1e-8 * (1.0 + fstep.dx[v].abs()),
                "dx[{v}] {} vs {}",
                step.dx[v],
                fstep.dx[v]
            );
        }
        for k in 0..2 {
            for j in 0..n_loc {
                let a = step.dlocal[k][j];
                let b = fstep.dx[n_sh + k * n_loc + j];
                assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "dlocal[{k}][{j}] {a} vs {b}");
            }
        }
    }

    #[test]
    fn returned_point_stays_feasible() {
        let sdp = NumericSdp {
            n_shared: 1,
            obj_shared: vec![1.0],
            obj_local: vec![vec![]],
            blocks: vec![NumericBlock {
                dim: 2,
                constant: sym(2, &[0.0, 1.0, 1.0, 0.0]),
                shared: vec![(0, SymMat::identity(2))],
                local: vec![],
            }],
        };
        let sol = solve(&sdp, &SolverConfig::default(), None).unwrap();
        let min_eig = min_block_eigenvalue(&sdp, &sol.shared, &sol.local);
        assert!(min_eig >= 0.0, "min eigenvalue {min_eig}");
    }
}
