//! Assembly of the per-frequency LMI constraints for H2 / H-infinity and
//! spatial-regret synthesis, the conic solve through the real embedding, the
//! stability-preserving outer convexification iteration, and oracle
//! synthesis over superset communication patterns.

use crate::evaluation::{closed_loop_frf, h2_norm_squared, hinf_norm, ClosedLoopFrf};
use crate::frf::GeneralizedPlantFrf;
use crate::hermitian::{
    hermitian_embed, left_inverse, CMat, HermitianMatrix, DEFAULT_RANK_TOL,
};
use crate::lti::{closed_loop_spectral_radius, realize_controller, PartitionedPlant};
use crate::sdp::{self, InitialPoint, NumericBlock, NumericSdp, SolveStatus, SolverConfig, SymMat};
use crate::structure::{
    ControllerFactors, DecisionVector, FactorParameterization, RealizedFactors, SparsityPattern,
};
use crate::textio::fmt_f64;
use num_complex::Complex64;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("grids do not match")]
    GridMismatch,
    #[error("oracle pattern is not a superset of the target at entry ({0}, {1})")]
    NotASuperset(usize, usize),
    #[error("initial controller is not certified stabilizing (spectral radius {rho})")]
    InitialControllerUnstable { rho: f64 },
    #[error("solver failed at iteration {iteration}: {message}")]
    SolverFailed { iteration: usize, message: String, report: Box<SynthesisReport> },
    #[error("stability lost at iteration {iteration} (spectral radius {rho:?})")]
    StabilityLost { iteration: usize, rho: Option<f64>, report: Box<SynthesisReport> },
    #[error("Y nearly singular at iteration {iteration}: min singular value {min_sv:.3e}")]
    YNearSingular { iteration: usize, min_sv: f64, report: Box<SynthesisReport> },
    #[error(transparent)]
    Hermitian(#[from] crate::hermitian::HermitianError),
    #[error(transparent)]
    Structure(#[from] crate::structure::StructureError),
    #[error(transparent)]
    Lti(#[from] crate::lti::LtiError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error(transparent)]
    Sdp(#[from] crate::sdp::SdpError),
}

/// Norm objective for the baseline problems and oracle synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormObjective {
    H2,
    Hinf,
}

/// Benchmark data for spatial-regret synthesis.
#[derive(Debug, Clone)]
pub struct OracleData {
    pub factors: ControllerFactors,
    pub t_hat: ClosedLoopFrf,
    pub objective_kind: NormObjective,
    /// Objective value achieved by the oracle synthesis.
    pub achieved_gamma: f64,
}

/// Synthesis objective.
#[derive(Debug, Clone)]
pub enum Objective {
    H2,
    Hinf,
    SpatialRegret(OracleData),
}

impl Objective {
    pub fn describe(&self) -> &'static str {
        match self {
            Objective::H2 => "h2",
            Objective::Hinf => "hinf",
            Objective::SpatialRegret(_) => "spatial-regret",
        }
    }
}

/// Frequency-wise factor/plant algebra around a linearization point:
/// `Phi(theta) = (Y - X G22) G12^L` (linear in `theta`),
/// `Phi_c` at the current iterate, and the projector `Psi = I - G12 G12^L`.
#[derive(Debug, Clone)]
pub struct PhiMaps {
    /// `G12^L` per frequency.
    pub g12_left: Vec<CMat>,
    /// `Psi = I - G12 G12^L` per frequency.
    pub psi: Vec<CMat>,
    /// `phi_basis[v][k]`: contribution of unit decision variable `v` at
    /// grid index `k` (so `Phi(theta) = sum_v theta_v phi_basis[v]`).
    pub phi_basis: Vec<Vec<CMat>>,
    /// `Phi_c` per frequency at the linearization point.
    pub phi_c: Vec<CMat>,
}

impl PhiMaps {
    pub fn phi_at(&self, theta: &DecisionVector, k: usize) -> CMat {
        let (r, c) = self.phi_c[k].shape();
        let mut phi = CMat::zeros(r, c);
        for (v, &tv) in theta.as_slice().iter().enumerate() {
            if tv != 0.0 {
                phi += &self.phi_basis[v][k] * Complex64::new(tv, 0.0);
            }
        }
        phi
    }
}

/// Builds the `Phi` linear maps, the linearization constants `Phi_c`, and
/// `Psi` on the plant grid. Requires `G12` full column rank on the grid.
pub fn build_phi_maps(
    plant: &GeneralizedPlantFrf,
    realized: &RealizedFactors,
    theta_c: &DecisionVector,
) -> Result<PhiMaps, SynthesisError> {
    if !realized.grid().same_as(plant.grid()) {
        return Err(SynthesisError::GridMismatch);
    }
    let n = plant.grid().len();
    let nz = plant.n_performance();
    let nth = realized.theta_len();
    let mut g12_left = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    for k in 0..n {
        let g12l = left_inverse(plant.g12().at(k), DEFAULT_RANK_TOL)?;
        psi.push(CMat::identity(nz, nz) - plant.g12().at(k) * &g12l);
        g12_left.push(g12l);
    }
    let mut phi_basis = vec![Vec::with_capacity(n); nth];
    for k in 0..n {
        let g22_g12l = plant.g22().at(k) * &g12_left[k];
        for (v, basis) in phi_basis.iter_mut().enumerate() {
            let slot = realized.var_slot(v);
            let val = realized.var_value(v, k);
            let m = realized.parameterization().n_outputs();
            let mut phi_v = CMat::zeros(m, nz);
            match slot.factor {
                crate::structure::Factor::Y => {
                    // Y contribution: val * e_r e_c^T * G12L -> row r gets val * row c of G12L
                    for col in 0..nz {
                        phi_v[(slot.row, col)] = val * g12_left[k][(slot.col, col)];
                    }
                }
                crate::structure::Factor::X => {
                    // -X G22 G12L: row r gets -val * row c of (G22 G12L)
                    for col in 0..nz {
                        phi_v[(slot.row, col)] = -val * g22_g12l[(slot.col, col)];
                    }
                }
            }
            basis.push(phi_v);
        }
    }
    let mut phi_c = Vec::with_capacity(n);
    for k in 0..n {
        let m = realized.parameterization().n_outputs();
        let mut acc = CMat::zeros(m, nz);
        for (v, &tv) in theta_c.as_slice().iter().enumerate() {
            if tv != 0.0 {
                acc += &phi_basis[v][k] * Complex64::new(tv, 0.0);
            }
        }
        phi_c.push(acc);
    }
    Ok(PhiMaps { g12_left, psi, phi_basis, phi_c })
}

/// One affine Hermitian constraint block at a grid frequency.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub omega: f64,
    pub constant: HermitianMatrix,
    /// Coefficients of shared variables (theta entries, then gamma if any).
    pub shared_terms: Vec<(usize, HermitianMatrix)>,
    /// Coefficients of this block's local Hermitian variables (H2 only).
    pub local_terms: Vec<HermitianMatrix>,
}

/// Which auxiliary bound structure the problem carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaStructure {
    /// `Gamma = gamma I` with one scalar variable.
    Scalar,
    /// Per-frequency Hermitian `Gamma` blocks (H2 trace quadrature).
    PerFrequency,
}

/// Frequency-gridded SDP with per-frequency Hermitian constraint blocks,
/// affine in `(theta, gamma, Gamma)`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub n_theta: usize,
    pub gamma_structure: GammaStructure,
    /// Shared variable count: `n_theta` (+1 for the scalar gamma).
    pub n_shared: usize,
    pub objective_shared: Vec<f64>,
    pub objective_local: Vec<Vec<f64>>,
    pub blocks: Vec<LmiBlock>,
    /// Dimension of the measurement-side identity in each block (n_w).
    pub n_w: usize,
    /// Box bound `|theta_i| <= theta_box` imposed during the solve.
    pub theta_box: f64,
    /// Shared variables held at a fixed value during the solve.
    ///
    /// The factor pair `(X, Y)` is only determined up to a per-subcontroller
    /// scale: `K = Y^{-1} X` is invariant under scaling a row of both
    /// factors. The solve therefore pins every diagonal `Y` feedthrough to
    /// one (the monic normalization); realizability requires an invertible
    /// `D_Y`, so no realizable controller is lost.
    pub pinned_shared: Vec<(usize, f64)>,
}

fn hermitian_basis(dim: usize) -> Vec<CMat> {
    let mut basis = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        let mut e = CMat::zeros(dim, dim);
        e[(i, i)] = Complex64::new(1.0, 0.0);
        basis.push(e);
    }
    for i in 0..dim {
        for j in i + 1..dim {
            let mut e = CMat::zeros(dim, dim);
            e[(i, j)] = Complex64::new(1.0, 0.0);
            e[(j, i)] = Complex64::new(1.0, 0.0);
            basis.push(e);
        }
    }
    for i in 0..dim {
        for j in i + 1..dim {
            let mut e = CMat::zeros(dim, dim);
            e[(i, j)] = Complex64::new(0.0, 1.0);
            e[(j, i)] = Complex64::new(0.0, -1.0);
            basis.push(e);
        }
    }
    basis
}

fn herm_to_params(m: &CMat) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for i in 0..d {
        v.push(m[(i, i)].re);
    }
    for i in 0..d {
        for j in i + 1..d {
            v.push(m[(i, j)].re);
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            v.push(m[(i, j)].im);
        }
    }
    v
}

fn params_to_herm(dim: usize, p: &[f64]) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    let mut idx = 0;
    for i in 0..dim {
        m[(i, i)] = Complex64::new(p[idx], 0.0);
        idx += 1;
    }
    for i in 0..dim {
        for j in i + 1..dim {
            m[(i, j)].re = p[idx];
            m[(j, i)].re = p[idx];
            idx += 1;
        }
    }
    for i in 0..dim {
        for j in i + 1..dim {
            m[(i, j)].im = p[idx];
            m[(j, i)].im = -p[idx];
            idx += 1;
        }
    }
    m
}

/// Common constraint assembly. `tt[k]` is `That* That` at grid index `k`
/// (zero matrices for the plain norm problems).
fn build_lmi_blocks(
    plant: &GeneralizedPlantFrf,
    maps: &PhiMaps,
    realized: &RealizedFactors,
    tt: &[CMat],
    gamma_structure: GammaStructure,
) -> SdpProblem {
    let n = plant.grid().len();
    let n_w = plant.n_disturbances();
    let m = plant.n_controls();
    let dim = n_w + m;
    let nth = maps.phi_basis.len();
    let gamma_basis = hermitian_basis(n_w);
    let mut blocks = Vec::with_capacity(n);
    for k in 0..n {
        let omega = plant.grid().omegas()[k];
        let psig11 = &maps.psi[k] * plant.g11().at(k);
        let q = psig11.adjoint() * &psig11;
        let phic = &maps.phi_c[k];
        let mut constant = CMat::zeros(dim, dim);
        let top = &tt[k] - &q;
        constant.view_mut((0, 0), (n_w, n_w)).copy_from(&top);
        let phic_sq = -(phic * phic.adjoint());
        constant.view_mut((n_w, n_w), (m, m)).copy_from(&phic_sq);

        let mut shared_terms = Vec::with_capacity(nth + 1);
        for v in 0..nth {
            let phi_v = &maps.phi_basis[v][k];
            // L_v = Phi_v G11 + X_v G21; X_v has a single nonzero entry
            let mut l_v = phi_v * plant.g11().at(k);
            let slot = realized.var_slot(v);
            if slot.factor == crate::structure::Factor::X {
                let val = realized.var_value(v, k);
                for col in 0..n_w {
                    l_v[(slot.row, col)] += val * plant.g21().at(k)[(slot.col, col)];
                }
            }
            let lin = phic * phi_v.adjoint() + phi_v * phic.adjoint();
            let mut a = CMat::zeros(dim, dim);
            a.view_mut((n_w, 0), (m, n_w)).copy_from(&l_v);
            let l_adj = l_v.adjoint();
            a.view_mut((0, n_w), (n_w, m)).copy_from(&l_adj);
            a.view_mut((n_w, n_w), (m, m)).copy_from(&lin);
            shared_terms.push((v, HermitianMatrix::new(a)));
        }
        let mut local_terms = Vec::new();
        match gamma_structure {
            GammaStructure::Scalar => {
                let mut e = CMat::zeros(dim, dim);
                for i in 0..n_w {
                    e[(i, i)] = Complex64::new(1.0, 0.0);
                }
                shared_terms.push((nth, HermitianMatrix::new(e)));
            }
            GammaStructure::PerFrequency => {
                for gb in &gamma_basis {
                    let mut e = CMat::zeros(dim, dim);
                    e.view_mut((0, 0), (n_w, n_w)).copy_from(gb);
                    local_terms.push(HermitianMatrix::new(e));
                }
            }
        }
        blocks.push(LmiBlock { omega, constant: HermitianMatrix::new(constant), shared_terms, local_terms });
    }

    let (n_shared, objective_shared, objective_local) = match gamma_structure {
        GammaStructure::Scalar => {
            let mut c = vec![0.0; nth + 1];
            c[nth] = 1.0;
            (nth + 1, c, vec![Vec::new(); n])
        }
        GammaStructure::PerFrequency => {
            // gamma = (Ts/pi) integral trace(Gamma); one-sided doubled
            // convention shared with the H2 evaluation quadrature
            let w = plant.grid().trapezoid_weights();
            let scale = plant.grid().ts() / std::f64::consts::PI;
            let mut obj_local = Vec::with_capacity(n);
            for wk in w {
                let mut c = vec![0.0; n_w * n_w];
                for i in 0..n_w {
                    c[i] = wk * scale;
                }
                obj_local.push(c);
            }
            (nth, vec![0.0; nth], obj_local)
        }
    };
    let pinned_shared = realized
        .parameterization()
        .entries()
        .iter()
        .filter(|s| s.factor == crate::structure::Factor::Y && s.row == s.col && s.has_d)
        .map(|s| (s.theta_offset + s.b_len, 1.0))
        .collect();
    SdpProblem {
        n_theta: nth,
        gamma_structure,
        n_shared,
        objective_shared,
        objective_local,
        blocks,
        n_w,
        theta_box: DEFAULT_THETA_BOX,
        pinned_shared,
    }
}

/// Default half-width of the decision-variable box.
///
/// Left-factorized controllers carry common-factor redundancy: many `(X, Y)`
/// pairs realize the same `K`, and the redundant directions are flat in the
/// constraint set, so the cone's analytic center would drift far along them.
/// A moderate box keeps every iterate at a numerically sane coefficient
/// scale; with the basis pole at the origin the `Y` denominators are monic
/// FIR polynomials, so representations inside the box exist for any
/// controller gain the class reaches.
pub const DEFAULT_THETA_BOX: f64 = 10.0;

/// Builds the H2 or H-infinity constraint set around the linearization in
/// `maps`: per frequency
/// `[[Gamma - (Psi G11)*(Psi G11), (Phi G11 + X G21)*], [., Phi_c Phi* + Phi Phi_c* - Phi_c Phi_c*]] >= 0`,
/// with `Gamma = gamma I` for H-infinity and per-frequency Hermitian `Gamma`
/// traced into the quadrature objective for H2.
pub fn build_norm_lmi(
    plant: &GeneralizedPlantFrf,
    maps: &PhiMaps,
    realized: &RealizedFactors,
    objective: NormObjective,
) -> SdpProblem {
    let zero_tt = vec![CMat::zeros(plant.n_disturbances(), plant.n_disturbances()); plant.grid().len()];
    let structure = match objective {
        NormObjective::Hinf => GammaStructure::Scalar,
        NormObjective::H2 => GammaStructure::PerFrequency,
    };
    build_lmi_blocks(plant, maps, realized, &zero_tt, structure)
}

/// Builds the spatial-regret constraint set: the measurement-side bound is
/// `Gamma_hat = gamma I + That* That`.
pub fn build_regret_lmi(
    plant: &GeneralizedPlantFrf,
    maps: &PhiMaps,
    realized: &RealizedFactors,
    oracle: &OracleData,
) -> Result<SdpProblem, SynthesisError> {
    if !oracle.t_hat.grid().same_as(plant.grid()) {
        return Err(SynthesisError::GridMismatch);
    }
    let tt: Vec<CMat> = oracle
        .t_hat
        .samples()
        .iter()
        .map(|t| t.adjoint() * t)
        .collect();
    Ok(build_lmi_blocks(plant, maps, realized, &tt, GammaStructure::Scalar))
}

/// Outcome of one conic solve.
#[derive(Debug, Clone)]
pub struct SdpOutcome {
    pub status: SolveStatus,
    pub theta: DecisionVector,
    /// Objective value: the scalar bound for H-infinity / regret, the trace
    /// quadrature for H2.
    pub gamma: f64,
    /// Per-frequency Hermitian bounds (H2 only).
    pub gamma_blocks: Option<Vec<HermitianMatrix>>,
    pub gap_bound: f64,
    pub newton_steps: usize,
    /// PSD defect of the returned point over all embedded blocks.
    pub psd_residual: f64,
    pub message: String,
}

/// Strictly feasible warm start for [`solve_sdp`].
#[derive(Debug, Clone)]
pub struct SdpWarmStart {
    pub shared: Vec<f64>,
    pub local: Vec<Vec<f64>>,
    /// Estimated objective gap, used to pick the initial barrier stage.
    pub gap_hint: Option<f64>,
    /// Feasibility margin added on top of the exact requirement.
    pub margin: f64,
}

/// Lowers every Hermitian block through the real embedding and solves over
/// the real PSD cone.
pub fn solve_sdp(
    problem: &SdpProblem,
    cfg: &SolverConfig,
    warm: Option<SdpWarmStart>,
) -> Result<SdpOutcome, SynthesisError> {
    // map from full shared index to reduced index (pinned vars eliminated)
    let pinned: std::collections::BTreeMap<usize, f64> =
        problem.pinned_shared.iter().copied().collect();
    let mut reduced_of = vec![usize::MAX; problem.n_shared];
    let mut full_of = Vec::with_capacity(problem.n_shared - pinned.len());
    for v in 0..problem.n_shared {
        if !pinned.contains_key(&v) {
            reduced_of[v] = full_of.len();
            full_of.push(v);
        }
    }
    let n_red = full_of.len();

    let mut blocks: Vec<NumericBlock> = problem
        .blocks
        .iter()
        .map(|b| {
            let mut constant = b.constant.matrix().clone();
            let mut shared = Vec::with_capacity(b.shared_terms.len());
            for (v, m) in &b.shared_terms {
                if let Some(value) = pinned.get(v) {
                    constant += m.matrix() * Complex64::new(*value, 0.0);
                } else {
                    shared.push((reduced_of[*v], SymMat::from_rmat(&hermitian_embed(m))));
                }
            }
            NumericBlock {
                dim: 2 * b.constant.dim(),
                constant: SymMat::from_rmat(&hermitian_embed(&HermitianMatrix::new(constant))),
                shared,
                local: b
                    .local_terms
                    .iter()
                    .map(|m| SymMat::from_rmat(&hermitian_embed(m)))
                    .collect(),
            }
        })
        .collect();
    let mut obj_local = problem.objective_local.clone();
    // widen the box if the warm start sits outside it
    let mut box_r = problem.theta_box;
    if let Some(w) = &warm {
        let max_theta = w.shared[..problem.n_theta]
            .iter()
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        box_r = box_r.max(10.0 * max_theta);
    }
    let mut boxed_vars = 0usize;
    for vi in 0..problem.n_theta {
        if pinned.contains_key(&vi) {
            continue;
        }
        boxed_vars += 1;
        for sign in [1.0, -1.0] {
            blocks.push(NumericBlock {
                dim: 1,
                constant: SymMat { dim: 1, data: vec![box_r] },
                shared: vec![(reduced_of[vi], SymMat { dim: 1, data: vec![sign] })],
                local: vec![],
            });
            obj_local.push(Vec::new());
        }
    }
    let obj_shared_red: Vec<f64> = full_of.iter().map(|&v| problem.objective_shared[v]).collect();
    let obj_offset: f64 = problem
        .pinned_shared
        .iter()
        .map(|(v, val)| problem.objective_shared[*v] * val)
        .sum();
    let numeric = NumericSdp {
        n_shared: n_red,
        obj_shared: obj_shared_red,
        obj_local,
        blocks,
    };
    let mut solver_cfg = cfg.clone();
    let init = match warm {
        Some(w) => {
            for (v, val) in &problem.pinned_shared {
                if (w.shared[*v] - val).abs() > 1e-9 {
                    return Err(SynthesisError::Structure(
                        crate::structure::StructureError::Parse(format!(
                            "warm start does not honor pinned variable {v}"
                        )),
                    ));
                }
            }
            solver_cfg.initial_gap_hint = w.gap_hint;
            let mut local = w.local;
            local.extend(std::iter::repeat_with(Vec::new).take(2 * boxed_vars));
            Some(InitialPoint {
                shared: full_of.iter().map(|&v| w.shared[v]).collect(),
                local,
            })
        }
        None => None,
    };
    let sol = sdp::solve(&numeric, &solver_cfg, init)?;
    let min_eig = sdp::min_block_eigenvalue(&numeric, &sol.shared, &sol.local);
    let mut full_shared = vec![0.0; problem.n_shared];
    for (v, val) in &problem.pinned_shared {
        full_shared[*v] = *val;
    }
    for (r, &v) in full_of.iter().enumerate() {
        full_shared[v] = sol.shared[r];
    }
    let theta = DecisionVector(full_shared[..problem.n_theta].to_vec());
    let gamma = match problem.gamma_structure {
        GammaStructure::Scalar => full_shared.get(problem.n_theta).copied().unwrap_or(f64::NAN),
        GammaStructure::PerFrequency => sol.objective + obj_offset,
    };
    let gamma_blocks = match problem.gamma_structure {
        GammaStructure::PerFrequency => Some(
            sol.local
                .iter()
                .take(problem.blocks.len())
                .map(|p| HermitianMatrix::new(params_to_herm(problem.n_w, p)))
                .collect(),
        ),
        GammaStructure::Scalar => None,
    };
    Ok(SdpOutcome {
        status: sol.status,
        theta,
        gamma,
        gamma_blocks,
        gap_bound: sol.gap_bound,
        newton_steps: sol.newton_steps,
        psd_residual: (-min_eig).max(0.0),
        message: sol.message,
    })
}

/// Builds a strictly feasible start at the linearization point: `theta_c`
/// with the bound set just above the exact Schur-complement requirement.
fn warm_start_at_linearization(
    problem: &SdpProblem,
    plant: &GeneralizedPlantFrf,
    maps: &PhiMaps,
    tt: Option<&[CMat]>,
    theta_c: &DecisionVector,
    margin_rel: f64,
) -> Option<SdpWarmStart> {
    let n = plant.grid().len();
    let n_w = plant.n_disturbances();
    let mut needed = f64::NEG_INFINITY;
    let mut block_scale = 0.0f64;
    let mut local_excess = 0.0f64;
    let mut local = Vec::with_capacity(n);
    for k in 0..n {
        let phic = &maps.phi_c[k];
        let rc = phic * phic.adjoint();
        block_scale = block_scale.max(rc.iter().fold(0.0f64, |a, v| a.max(v.norm())));
        let chol = rc.clone().cholesky()?;
        // L_c = Phi_c G11 + X_c G21
        let mut l_c = phic * plant.g11().at(k);
        // reconstruct X_c G21 from the折 problem's coefficient matrices
        // (cheaper: theta_c applied to the off-diagonal blocks)
        let mut lc_from_terms = CMat::zeros(l_c.nrows(), l_c.ncols());
        for (v, term) in &problem.blocks[k].shared_terms {
            if *v >= problem.n_theta {
                continue;
            }
            let tv = theta_c.as_slice()[*v];
            if tv == 0.0 {
                continue;
            }
            let mat = term.matrix();
            for r in 0..l_c.nrows() {
                for c in 0..n_w {
                    lc_from_terms[(r, c)] += mat[(n_w + r, c)] * tv;
                }
            }
        }
        l_c = lc_from_terms;
        let sol = chol.solve(&l_c);
        let mut sc = l_c.adjoint() * sol;
        let psig11 = &maps.psi[k] * plant.g11().at(k);
        sc += psig11.adjoint() * psig11;
        if let Some(tts) = tt {
            sc -= &tts[k];
        }
        let sc_h = HermitianMatrix::new(sc);
        match problem.gamma_structure {
            GammaStructure::Scalar => {
                needed = needed.max(crate::hermitian::max_eigenvalue(&sc_h));
                local.push(Vec::new());
            }
            GammaStructure::PerFrequency => {
                let lam = crate::hermitian::max_eigenvalue(&sc_h);
                let shift = 1e-6 + margin_rel * lam.abs().max(1e-4 * block_scale.max(1.0));
                let g = sc_h.matrix() + CMat::identity(n_w, n_w) * Complex64::new(shift, 0.0);
                // track how much the shifts cost in the trace objective
                let diag_weight: f64 = problem.objective_local[k][..n_w.min(problem.objective_local[k].len())]
                    .iter()
                    .sum();
                local_excess += shift * diag_weight;
                local.push(herm_to_params(&g));
            }
        }
    }
    let mut shared = theta_c.as_slice().to_vec();
    let margin = if problem.gamma_structure == GammaStructure::Scalar {
        // depth proportional to the block scale keeps the line search alive
        // even when the optimal bound is near zero
        let m = 1e-6 + margin_rel * needed.abs().max(1e-4 * block_scale);
        shared.push(needed + m);
        m
    } else {
        // objective cost of the feasibility shifts just added
        local_excess.max(1e-6)
    };
    Some(SdpWarmStart { shared, local, gap_hint: None, margin })
}

/// Stability certification strategy for the outer iteration.
#[derive(Debug, Clone)]
pub enum StabilityCheck {
    /// Authoritative: closed-loop spectral radius against a known model.
    Model(PartitionedPlant),
    /// Model-free: argument-principle winding of `det(Y - X G22)` along the
    /// grid, compared with the previous certified iterate.
    Winding,
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub solver: SolverConfig,
    pub stability: StabilityCheck,
    /// Post-hoc certification threshold on `sigma_min(Y)` over the grid.
    pub y_min_singular: f64,
}

impl SynthesisConfig {
    pub fn new(stability: StabilityCheck) -> Self {
        Self {
            max_iter: 30,
            rel_tol: 1e-4,
            solver: SolverConfig::default(),
            stability,
            y_min_singular: 1e-8,
        }
    }
}

/// Per-iteration record of the outer loop.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub gamma: f64,
    pub solve_time: f64,
    pub newton_steps: usize,
    pub gap_bound: f64,
    pub spectral_radius: Option<f64>,
    pub winding_delta: Option<i64>,
    pub y_min_singular: f64,
    pub psd_residual: f64,
}

/// Result of the outer convexification iteration.
#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub objective: String,
    pub iterations: Vec<IterationRecord>,
    pub theta: DecisionVector,
    pub parameterization: FactorParameterization,
    pub converged: bool,
}

impl SynthesisReport {
    pub fn final_factors(&self) -> ControllerFactors {
        ControllerFactors::new(self.parameterization.clone(), self.theta.clone())
            .expect("theta length tracked by the iteration")
    }

    pub fn final_gamma(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.gamma)
    }

    /// Whether the gamma sequence is nonincreasing within a relative slack.
    pub fn gamma_nonincreasing(&self, rel_slack: f64) -> bool {
        self.iterations.windows(2).all(|w| {
            w[1].gamma <= w[0].gamma + rel_slack * w[0].gamma.abs().max(1.0)
        })
    }

    /// CSV export `iter,gamma,solve_time,spectral_radius`.
    ///
    /// With `include_timing` false the `solve_time` column is written as 0,
    /// keeping pipeline outputs byte-identical across reruns.
    pub fn write_csv<W: Write>(&self, out: &mut W, include_timing: bool) -> std::io::Result<()> {
        writeln!(out, "iter,gamma,solve_time,spectral_radius")?;
        for (i, rec) in self.iterations.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                i,
                fmt_f64(rec.gamma),
                fmt_f64(if include_timing { rec.solve_time } else { 0.0 }),
                fmt_f64(rec.spectral_radius.unwrap_or(f64::NAN)),
            )?;
        }
        Ok(())
    }

    /// Human-readable summary.
    pub fn write_text<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "objective: {}", self.objective)?;
        writeln!(out, "iterations: {}", self.iterations.len())?;
        writeln!(out, "converged: {}", self.converged)?;
        if let Some(g) = self.final_gamma() {
            writeln!(out, "final gamma: {}", fmt_f64(g))?;
        }
        for (i, rec) in self.iterations.iter().enumerate() {
            writeln!(
                out,
                "  iter {i}: gamma {:.6e}, newton {}, gap {:.2e}, rho {}, min sv(Y) {:.2e}",
                rec.gamma,
                rec.newton_steps,
                rec.gap_bound,
                rec.spectral_radius
                    .map(|r| format!("{r:.6}"))
                    .unwrap_or_else(|| format!("winding {}", rec.winding_delta.unwrap_or(0))),
                rec.y_min_singular
            )?;
        }
        Ok(())
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn seconds_now() -> f64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[cfg(target_arch = "wasm32")]
fn seconds_now() -> f64 {
    0.0
}

/// Total unwrapped phase change of `det(Y - X G22)` along the grid.
fn winding_sum(
    plant: &GeneralizedPlantFrf,
    factors: &ControllerFactors,
) -> Result<f64, SynthesisError> {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for k in 0..plant.grid().len() {
        let (x, y) = factors.eval(plant.grid().z(k));
        let d = (y - x * plant.g22().at(k)).lu().determinant();
        let arg = d.arg();
        if let Some(p) = prev {
            let mut delta = arg - p;
            while delta > std::f64::consts::PI {
                delta -= std::f64::consts::TAU;
            }
            while delta < -std::f64::consts::PI {
                delta += std::f64::consts::TAU;
            }
            total += delta;
        }
        prev = Some(arg);
    }
    Ok(total)
}

fn certify(
    plant: &GeneralizedPlantFrf,
    stability: &StabilityCheck,
    factors: &ControllerFactors,
    reference_winding: Option<f64>,
) -> Result<(Option<f64>, Option<i64>, f64, bool), SynthesisError> {
    match stability {
        StabilityCheck::Model(model) => {
            let k_ss = realize_controller(factors)?;
            let rho = closed_loop_spectral_radius(model, &k_ss)?;
            Ok((Some(rho), None, f64::NAN, rho < 1.0))
        }
        StabilityCheck::Winding => {
            let w = winding_sum(plant, factors)?;
            let delta = reference_winding.map(|r| ((w - r) / std::f64::consts::TAU).round() as i64);
            let ok = delta.map_or(true, |d| d == 0);
            Ok((None, delta.or(Some(0)), w, ok))
        }
    }
}

/// Runs the stability-preserving convexification loop: linearize at the
/// current stabilizing iterate, solve the convex subproblem, certify the new
/// iterate, repeat until the bound settles or the iteration budget runs out.
///
/// Errors abort with the last certified-stable iterate retained inside the
/// returned error's report.
pub fn iterate_synthesis(
    plant: &GeneralizedPlantFrf,
    param: &FactorParameterization,
    theta_init: &DecisionVector,
    objective: &Objective,
    cfg: &SynthesisConfig,
) -> Result<SynthesisReport, SynthesisError> {
    let realized = crate::structure::realize_factors(param, plant.grid());
    let mut theta_c = theta_init.clone();
    param.normalize_row_scales(&mut theta_c);
    for slot in param.entries() {
        if slot.factor == crate::structure::Factor::Y && slot.has_d {
            let d = theta_c.as_slice()[slot.theta_offset + slot.b_len];
            if (d - 1.0).abs() > 1e-9 {
                return Err(SynthesisError::Structure(
                    crate::structure::StructureError::Parse(format!(
                        "initial Y feedthrough of row {} is {d:.3e}; the factor                          normalization needs an invertible D_Y",
                        slot.row
                    )),
                ));
            }
        }
    }
    let init_factors = ControllerFactors::new(param.clone(), theta_c.clone())?;
    // certify the initial controller
    let mut reference_winding = None;
    match &cfg.stability {
        StabilityCheck::Model(model) => {
            let k_ss = realize_controller(&init_factors)?;
            let rho = closed_loop_spectral_radius(model, &k_ss)?;
            if rho >= 1.0 {
                return Err(SynthesisError::InitialControllerUnstable { rho });
            }
        }
        StabilityCheck::Winding => {
            reference_winding = Some(winding_sum(plant, &init_factors)?);
        }
    }

    let tt_samples: Option<Vec<CMat>> = match objective {
        Objective::SpatialRegret(o) => {
            if !o.t_hat.grid().same_as(plant.grid()) {
                return Err(SynthesisError::GridMismatch);
            }
            Some(o.t_hat.samples().iter().map(|t| t.adjoint() * t).collect())
        }
        _ => None,
    };

    let mut report = SynthesisReport {
        objective: objective.describe().to_string(),
        iterations: Vec::new(),
        theta: theta_c.clone(),
        parameterization: param.clone(),
        converged: false,
    };
    let mut prev_gamma: Option<f64> = None;
    let mut prev_improvement: Option<f64> = None;

    for iteration in 0..cfg.max_iter {
        let maps = build_phi_maps(plant, &realized, &theta_c)?;
        let problem = match objective {
            Objective::Hinf => build_norm_lmi(plant, &maps, &realized, NormObjective::Hinf),
            Objective::H2 => build_norm_lmi(plant, &maps, &realized, NormObjective::H2),
            Objective::SpatialRegret(o) => build_regret_lmi(plant, &maps, &realized, o)?,
        };
        let mut warm = warm_start_at_linearization(
            &problem,
            plant,
            &maps,
            tt_samples.as_deref(),
            &theta_c,
            0.02,
        );
        if let Some(w) = warm.as_mut() {
            // the initial barrier stage targets the expected distance to the
            // optimum: the margin we just added plus the recent improvement
            let expected = w.margin + prev_improvement.map(|imp| imp.abs()).unwrap_or(w.margin);
            w.gap_hint = Some(expected.max(cfg.solver.gap_abs * 100.0));
        }
        let t0 = seconds_now();
        let outcome = solve_sdp(&problem, &cfg.solver, warm)?;
        let solve_time = seconds_now() - t0;
        if outcome.status != SolveStatus::Optimal {
            return Err(SynthesisError::SolverFailed {
                iteration,
                message: format!("status {:?}: {}", outcome.status, outcome.message),
                report: Box::new(report),
            });
        }
        let factors = ControllerFactors::new(param.clone(), outcome.theta.clone())?;
        let y_min = factors.min_y_singular_value(plant.grid());
        if !(y_min > cfg.y_min_singular) {
            return Err(SynthesisError::YNearSingular {
                iteration,
                min_sv: y_min,
                report: Box::new(report),
            });
        }
        let (rho, winding_delta, new_winding, stable) =
            certify(plant, &cfg.stability, &factors, reference_winding)?;
        if !stable {
            return Err(SynthesisError::StabilityLost {
                iteration,
                rho,
                report: Box::new(report),
            });
        }
        if matches!(cfg.stability, StabilityCheck::Winding) {
            reference_winding = Some(new_winding);
        }
        report.iterations.push(IterationRecord {
            gamma: outcome.gamma,
            solve_time,
            newton_steps: outcome.newton_steps,
            gap_bound: outcome.gap_bound,
            spectral_radius: rho,
            winding_delta,
            y_min_singular: y_min,
            psd_residual: outcome.psd_residual,
        });
        // normalize the factor scale before the next linearization; the
        // controller (and its certified stability) is unchanged
        let mut next_theta = outcome.theta;
        param.normalize_row_scales(&mut next_theta);
        report.theta = next_theta.clone();
        theta_c = next_theta;
        if let Some(pg) = prev_gamma {
            prev_improvement = Some(pg - outcome.gamma);
            if (pg - outcome.gamma).abs() <= cfg.rel_tol * outcome.gamma.abs().max(1.0) {
                report.converged = true;
                break;
            }
        }
        prev_gamma = Some(outcome.gamma);
    }
    Ok(report)
}

/// Synthesizes the benchmark controller over a superset pattern by norm
/// minimization, then samples its closed loop for regret synthesis.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_oracle(
    plant: &GeneralizedPlantFrf,
    superset_pattern: &SparsityPattern,
    target_pattern: &SparsityPattern,
    objective: NormObjective,
    order: usize,
    basis_pole: f64,
    theta_init: Option<DecisionVector>,
    cfg: &SynthesisConfig,
) -> Result<OracleData, SynthesisError> {
    if let Err(err) = superset_pattern.is_superset_of(target_pattern) {
        return Err(match err {
            crate::structure::StructureError::NotASuperset(i, j) => SynthesisError::NotASuperset(i, j),
            other => SynthesisError::Structure(other),
        });
    }
    let param = crate::structure::build_factor_parameterization(
        superset_pattern,
        order,
        basis_pole,
        plant.grid().ts(),
    )?;
    let init = theta_init.unwrap_or_else(|| param.zero_controller_theta());
    let obj = match objective {
        NormObjective::H2 => Objective::H2,
        NormObjective::Hinf => Objective::Hinf,
    };
    let report = iterate_synthesis(plant, &param, &init, &obj, cfg)?;
    let factors = report.final_factors();
    let samples = factors.controller_samples(plant.grid())?;
    let t_hat = closed_loop_frf(plant, &samples)?;
    let achieved_gamma = report.final_gamma().unwrap_or(f64::NAN);
    Ok(OracleData { factors, t_hat, objective_kind: objective, achieved_gamma })
}

/// Evaluated norm of an oracle's closed loop, matching its objective kind.
pub fn oracle_norm_value(oracle: &OracleData) -> f64 {
    match oracle.objective_kind {
        NormObjective::Hinf => hinf_norm(&oracle.t_hat).powi(2),
        NormObjective::H2 => h2_norm_squared(&oracle.t_hat),
    }
}
