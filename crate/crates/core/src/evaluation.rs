//! Closed-loop FRF computation (direct LFT and factorized form),
//! frequency-domain norms, the spatial-regret sweep, per-frequency gains,
//! and time-domain disturbance experiments.

use crate::frf::{FrequencyGrid, GeneralizedPlantFrf};
use crate::hermitian::{
    extreme_singular_values, left_inverse, max_singular_value, right_inverse, CMat,
    HermitianMatrix, DEFAULT_RANK_TOL,
};
use crate::lti::{closed_loop_system, simulate, PartitionedPlant, StateSpaceModel};
use crate::structure::ControllerFactors;
use crate::textio::fmt_f64;
use nalgebra::DVector;

use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("I - G22 K is singular at omega = {0} (condition {1:.3e})")]
    SingularReturnDifference(f64, f64),
    #[error("Y is singular at omega = {0}")]
    SingularY(f64),
    #[error("frequency grids do not match")]
    GridMismatch,
    #[error("omega = {0} is not on the grid")]
    FrequencyNotOnGrid(f64),
    #[error("channel {0} out of range")]
    BadChannel(usize),
    #[error("closed loop is unstable: spectral radius {0}")]
    UnstableClosedLoop(f64),
    #[error("horizon {horizon} too short: need at least {needed} samples for the transient cut plus averaging window")]
    InsufficientHorizon { horizon: usize, needed: usize },
    #[error(transparent)]
    Hermitian(#[from] crate::hermitian::HermitianError),
    #[error(transparent)]
    Lti(#[from] crate::lti::LtiError),
    #[error(transparent)]
    Structure(#[from] crate::structure::StructureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Closed-loop transfer samples `T_zw` on a grid.
#[derive(Debug, Clone)]
pub struct ClosedLoopFrf {
    grid: FrequencyGrid,
    samples: Vec<CMat>,
}

impl ClosedLoopFrf {
    pub fn new(grid: FrequencyGrid, samples: Vec<CMat>) -> Result<Self, EvalError> {
        if samples.len() != grid.len() {
            return Err(EvalError::GridMismatch);
        }
        Ok(Self { grid, samples })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[CMat] {
        &self.samples
    }

    pub fn at(&self, k: usize) -> &CMat {
        &self.samples[k]
    }

    fn grid_index(&self, omega: f64) -> Result<usize, EvalError> {
        self.grid
            .omegas()
            .iter()
            .position(|&w| (w - omega).abs() <= 1e-12 * w.abs().max(1.0))
            .ok_or(EvalError::FrequencyNotOnGrid(omega))
    }
}

/// Direct lower fractional transformation
/// `T_zw = G11 + G12 K (I - G22 K)^{-1} G21` per frequency.
pub fn closed_loop_frf(
    plant: &GeneralizedPlantFrf,
    k_samples: &[CMat],
) -> Result<ClosedLoopFrf, EvalError> {
    if k_samples.len() != plant.grid().len() {
        return Err(EvalError::GridMismatch);
    }
    let p = plant.n_measurements();
    let mut out = Vec::with_capacity(k_samples.len());
    for (k, kk) in k_samples.iter().enumerate() {
        let omega = plant.grid().omegas()[k];
        let ret = CMat::identity(p, p) - plant.g22().at(k) * kk;
        let (smin, smax) = extreme_singular_values(&ret)?;
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond >= 1e10 {
            return Err(EvalError::SingularReturnDifference(omega, cond));
        }
        let sol = ret
            .lu()
            .solve(plant.g21().at(k))
            .ok_or(EvalError::SingularReturnDifference(omega, cond))?;
        out.push(plant.g11().at(k) + plant.g12().at(k) * kk * sol);
    }
    ClosedLoopFrf::new(plant.grid().clone(), out)
}

/// Closed loop through the factorized form
/// `T_zw = Phi^R (Phi G11 + X G21) + Psi G11` with
/// `Phi = (Y - X G22) G12^L` and `Psi = I - G12 G12^L`.
pub fn closed_loop_via_factors(
    plant: &GeneralizedPlantFrf,
    factors: &ControllerFactors,
) -> Result<ClosedLoopFrf, EvalError> {
    let nz = plant.n_performance();
    let mut out = Vec::with_capacity(plant.grid().len());
    for k in 0..plant.grid().len() {
        let omega = plant.grid().omegas()[k];
        let (x, y) = factors.eval(plant.grid().z(k));
        if let Ok((smin, smax)) = extreme_singular_values(&y) {
            if smin <= 1e-12 * smax.max(1.0) {
                return Err(EvalError::SingularY(omega));
            }
        }
        let g12l = left_inverse(plant.g12().at(k), DEFAULT_RANK_TOL)?;
        let phi = (&y - &x * plant.g22().at(k)) * &g12l;
        let phi_r = right_inverse(&phi, DEFAULT_RANK_TOL)?;
        let psi = CMat::identity(nz, nz) - plant.g12().at(k) * &g12l;
        let t = &phi_r * (&phi * plant.g11().at(k) + &x * plant.g21().at(k)) + &psi * plant.g11().at(k);
        out.push(t);
    }
    ClosedLoopFrf::new(plant.grid().clone(), out)
}

/// Grid H-infinity norm: `max_k sigma_max(T(e^{jw_k}))`.
///
/// A grid maximum is a lower bound of the true norm; refining the grid never
/// decreases it.
pub fn hinf_norm(t: &ClosedLoopFrf) -> f64 {
    t.samples.iter().map(max_singular_value).fold(0.0, f64::max)
}

/// Squared H2 norm by trapezoid quadrature with the one-sided integral
/// doubled, so it matches the two-sided impulse-response energy
/// `sum_k ||h_k||_F^2`: `h2^2 = (Ts/pi) * integral of trace(T* T)`.
pub fn h2_norm_squared(t: &ClosedLoopFrf) -> f64 {
    let weights = t.grid.trapezoid_weights();
    let ts = t.grid.ts();
    let mut acc = 0.0;
    for (s, w) in t.samples.iter().zip(weights) {
        let tr: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        acc += w * tr;
    }
    acc * ts / std::f64::consts::PI
}

pub fn h2_norm(t: &ClosedLoopFrf) -> f64 {
    h2_norm_squared(t).sqrt()
}

/// Regret tolerance below which the benchmark is still declared well-posed.
pub const WELL_POSED_TOL: f64 = 1e-6;

/// Per-frequency spectral sweep of `Lambda = T*T - That*That` and its grid
/// supremum.
#[derive(Debug, Clone)]
pub struct RegretReport {
    /// `lambda_max(Lambda(e^{jw}))` per grid point.
    pub sweep: Vec<f64>,
    pub argmax_index: usize,
    pub argmax_omega: f64,
    /// Grid supremum of the sweep.
    pub regret: f64,
    /// Whether `regret >= -WELL_POSED_TOL`.
    pub well_posed: bool,
}

/// Spatial regret of `T` against the oracle loop `T_hat`.
pub fn spatial_regret_value(
    t: &ClosedLoopFrf,
    t_hat: &ClosedLoopFrf,
) -> Result<RegretReport, EvalError> {
    if !t.grid.same_as(&t_hat.grid) || t.samples[0].shape() != t_hat.samples[0].shape() {
        return Err(EvalError::GridMismatch);
    }
    let mut sweep = Vec::with_capacity(t.samples.len());
    for (a, b) in t.samples.iter().zip(&t_hat.samples) {
        let lambda = HermitianMatrix::new(a.adjoint() * a - b.adjoint() * b);
        sweep.push(crate::hermitian::max_eigenvalue(&lambda));
    }
    let (argmax_index, regret) = sweep
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .map(|(i, v)| (i, *v))
        .expect("non-empty grid");
    Ok(RegretReport {
        argmax_omega: t.grid.omegas()[argmax_index],
        sweep,
        argmax_index,
        regret,
        well_posed: regret >= -WELL_POSED_TOL,
    })
}

/// Worst-case squared gain at a grid frequency: `sigma_max(T(e^{jw}))^2`,
/// the induced Euclidean gain over multi-sinusoidal disturbances at `omega`.
pub fn worst_case_frequency_gain(t: &ClosedLoopFrf, omega: f64) -> Result<f64, EvalError> {
    let k = t.grid_index(omega)?;
    Ok(max_singular_value(&t.samples[k]).powi(2))
}

/// Squared Euclidean norm of one disturbance column at a grid frequency.
///
/// Relates to the time-averaged steady-state energy under a unit cosine on
/// that channel as `2 <||z||^2>` at interior frequencies (`<||z||^2>` at
/// 0 and Nyquist).
pub fn column_energy_gain(t: &ClosedLoopFrf, col: usize, omega: f64) -> Result<f64, EvalError> {
    if col >= t.samples[0].ncols() {
        return Err(EvalError::BadChannel(col));
    }
    let k = t.grid_index(omega)?;
    Ok(t.samples[k].column(col).iter().map(|v| v.norm_sqr()).sum())
}

/// Full column sweep over the grid (one value per frequency).
pub fn column_energy_sweep(t: &ClosedLoopFrf, col: usize) -> Result<Vec<f64>, EvalError> {
    if col >= t.samples[0].ncols() {
        return Err(EvalError::BadChannel(col));
    }
    Ok(t
        .samples
        .iter()
        .map(|s| s.column(col).iter().map(|v| v.norm_sqr()).sum())
        .collect())
}

/// Worst-case gain sweep over the grid.
pub fn worst_case_sweep(t: &ClosedLoopFrf) -> Vec<f64> {
    t.samples
        .iter()
        .map(|s| max_singular_value(s).powi(2))
        .collect()
}

/// Multi-sine disturbance on one channel.
#[derive(Debug, Clone)]
pub struct DisturbanceSpec {
    pub channel: usize,
    /// `(omega rad/s, amplitude, phase)` per tone.
    pub tones: Vec<(f64, f64, f64)>,
    pub horizon: usize,
    pub ts: f64,
}

impl DisturbanceSpec {
    pub fn signal(&self, t: usize) -> f64 {
        let time = t as f64 * self.ts;
        self.tones
            .iter()
            .map(|&(w, a, ph)| a * (w * time + ph).cos())
            .sum()
    }
}

/// Number of transient fundamental periods discarded before averaging.
pub const TRANSIENT_PERIODS: usize = 10;
/// Minimum number of fundamental periods required in the averaging window.
pub const MIN_AVERAGING_PERIODS: usize = 40;

/// Per-step regulated-output energy and steady-state statistics.
#[derive(Debug, Clone)]
pub struct EnergyTrace {
    /// `||z_t||^2` per step.
    pub z_norm_sq: Vec<f64>,
    /// First sample of the steady-state window.
    pub transient_cut: usize,
    /// Time-averaged energy over the steady-state window.
    pub steady_mean: f64,
    /// `||z||_2` over the steady-state window.
    pub post_transient_l2: f64,
}

impl EnergyTrace {
    /// CSV export `t,z_norm_sq`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<(), EvalError> {
        writeln!(out, "t,z_norm_sq")?;
        for (t, v) in self.z_norm_sq.iter().enumerate() {
            writeln!(out, "{},{}", t, fmt_f64(*v))?;
        }
        Ok(())
    }
}

/// Percent reduction of steady-state `||z||_2` of `candidate` relative to
/// `baseline`: `100 (1 - ||z||_cand / ||z||_base)`.
pub fn percent_reduction(candidate: &EnergyTrace, baseline: &EnergyTrace) -> f64 {
    100.0 * (1.0 - candidate.post_transient_l2 / baseline.post_transient_l2)
}

/// Simulates the closed loop under the disturbance and returns the energy
/// trace with the first [`TRANSIENT_PERIODS`] fundamental periods discarded.
pub fn time_domain_experiment(
    plant: &PartitionedPlant,
    controller: &StateSpaceModel,
    spec: &DisturbanceSpec,
) -> Result<EnergyTrace, EvalError> {
    if spec.channel >= plant.n_disturbances() {
        return Err(EvalError::BadChannel(spec.channel));
    }
    let nyquist = std::f64::consts::PI / spec.ts;
    if spec.tones.iter().any(|&(w, _, _)| w >= nyquist) {
        return Err(EvalError::FrequencyNotOnGrid(nyquist));
    }
    let cl = closed_loop_system(plant, controller)?;
    let rho = cl.spectral_radius()?;
    if rho >= 1.0 {
        return Err(EvalError::UnstableClosedLoop(rho));
    }
    let w_min = spec
        .tones
        .iter()
        .map(|&(w, _, _)| w)
        .fold(f64::INFINITY, f64::min);
    let period = if w_min.is_finite() {
        (std::f64::consts::TAU / (w_min * spec.ts)).ceil() as usize
    } else {
        1
    };
    let cut = TRANSIENT_PERIODS * period;
    let needed = cut + MIN_AVERAGING_PERIODS * period;
    if spec.horizon < needed && !spec.tones.is_empty() {
        return Err(EvalError::InsufficientHorizon { horizon: spec.horizon, needed });
    }
    // closed-loop model maps w -> z directly
    let cl_plant = PartitionedPlant::new(cl, plant.n_disturbances(), plant.n_performance())?;
    let w_seq: Vec<DVector<f64>> = (0..spec.horizon)
        .map(|t| {
            let mut w = DVector::zeros(plant.n_disturbances());
            w[spec.channel] = spec.signal(t);
            w
        })
        .collect();
    let u_seq = vec![DVector::zeros(0); spec.horizon];
    let x0 = DVector::zeros(cl_plant.model().n_states());
    let trace = simulate(&cl_plant, &u_seq, &w_seq, &x0, spec.horizon)?;
    let z_norm_sq: Vec<f64> = trace.z.iter().map(|z| z.norm_squared()).collect();
    let steady = &z_norm_sq[cut.min(z_norm_sq.len())..];
    let steady_mean = if steady.is_empty() {
        0.0
    } else {
        steady.iter().sum::<f64>() / steady.len() as f64
    };
    let post_transient_l2 = steady.iter().sum::<f64>().sqrt();
    Ok(EnergyTrace { z_norm_sq, transient_cut: cut, steady_mean, post_transient_l2 })
}

/// Writes a sweep as CSV `omega,value`.
pub fn write_sweep_csv<W: Write>(
    out: &mut W,
    grid: &FrequencyGrid,
    values: &[f64],
) -> Result<(), EvalError> {
    writeln!(out, "omega,value")?;
    for (w, v) in grid.omegas().iter().zip(values) {
        writeln!(out, "{},{}", fmt_f64(*w), fmt_f64(*v))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use super::*;
    use crate::frf::{make_log_grid, FrfBlock};
    use crate::hermitian::RMat;
    use crate::lti::{frequency_response, PartitionedPlant, StateSpaceModel};

    fn const_plant(g11: f64, g12: f64, g21: f64, g22: f64, n: usize) -> GeneralizedPlantFrf {
        let grid = make_log_grid(0.1, 10.0, n, 0.1).unwrap();
        let blk = |v: f64| {
            FrfBlock::new(vec![CMat::from_element(1, 1, Complex64::new(v, 0.0)); n]).unwrap()
        };
        GeneralizedPlantFrf::new(grid, blk(g11), blk(g12), blk(g21), blk(g22)).unwrap()
    }

    #[test]
    fn lft_zero_controller_returns_g11() {
        let plant = const_plant(3.0, 1.0, 1.0, 0.5, 5);
        let k = vec![CMat::zeros(1, 1); 5];
        let t = closed_loop_frf(&plant, &k).unwrap();
        for s in t.samples() {
            assert!((s[(0, 0)] - Complex64::new(3.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn lft_scalar_desk_value() {
        // G11 = G12 = G21 = 1, G22 = 0, K = k  ->  T = 1 + k
        let plant = const_plant(1.0, 1.0, 1.0, 0.0, 4);
        let k = vec![CMat::from_element(1, 1, Complex64::new(-0.25, 0.0)); 4];
        let t = closed_loop_frf(&plant, &k).unwrap();
        for s in t.samples() {
            assert!((s[(0, 0)] - Complex64::new(0.75, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn lft_singular_return_difference() {
        let plant = const_plant(1.0, 1.0, 1.0, 1.0, 3);
        let k = vec![CMat::from_element(1, 1, Complex64::new(1.0, 0.0)); 3];
        assert!(matches!(
            closed_loop_frf(&plant, &k),
            Err(EvalError::SingularReturnDifference(..))
        ));
    }

    #[test]
    fn hinf_identity_is_one() {
        let grid = make_log_grid(0.1, 10.0, 8, 0.1).unwrap();
        let t = ClosedLoopFrf::new(grid, vec![CMat::identity(2, 2); 8]).unwrap();
        assert!((hinf_norm(&t) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn analytic_norms_first_order() {
        // T(z) = 1/(z - 0.5): Hinf = 2 (peak at omega -> 0), H2^2 = 4/3
        let ts = 1.0;
        let model = StateSpaceModel::new(
            RMat::from_element(1, 1, 0.5),
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::zeros(1, 1),
            ts,
        )
        .unwrap();
        let grid = make_log_grid(1e-4, std::f64::consts::PI / ts, 600, ts).unwrap();
        let frf = frequency_response(&model, &grid).unwrap();
        let t = ClosedLoopFrf::new(grid, frf.samples().to_vec()).unwrap();
        assert!((hinf_norm(&t) - 2.0).abs() < 1e-3, "hinf = {}", hinf_norm(&t));
        let h2sq = h2_norm_squared(&t);
        assert!((h2sq - 4.0 / 3.0).abs() < 0.01 * 4.0 / 3.0, "h2^2 = {h2sq}");
    }

    #[test]
    fn regret_zero_against_self() {
        let grid = make_log_grid(0.1, 10.0, 6, 0.1).unwrap();
        let samples: Vec<CMat> = (0..6)
            .map(|k| CMat::from_element(2, 2, Complex64::new(0.5 + k as f64, -0.2)))
            .collect();
        let t = ClosedLoopFrf::new(grid.clone(), samples.clone()).unwrap();
        let t2 = ClosedLoopFrf::new(grid, samples).unwrap();
        let r = spatial_regret_value(&t, &t2).unwrap();
        assert_eq!(r.regret, 0.0);
        assert!(r.sweep.iter().all(|&v| v == 0.0));
        assert!(r.well_posed);
    }

    #[test]
    fn regret_scalar_constants() {
        // T = 2, That = 1 -> regret = 4 - 1 = 3
        let grid = make_log_grid(0.1, 10.0, 3, 0.1).unwrap();
        let t = ClosedLoopFrf::new(grid.clone(), vec![CMat::from_element(1, 1, Complex64::new(2.0, 0.0)); 3]).unwrap();
        let th = ClosedLoopFrf::new(grid, vec![CMat::from_element(1, 1, Complex64::new(1.0, 0.0)); 3]).unwrap();
        let r = spatial_regret_value(&t, &th).unwrap();
        assert!((r.regret - 3.0).abs() < 1e-12);
    }

    #[test]
    fn regret_matches_eigensolver_oracle() {
        let grid = make_log_grid(0.1, 10.0, 5, 0.1).unwrap();
        let mk = |seed: u64| {
            let samples: Vec<CMat> = (0..5)
                .map(|k| {
                    CMat::from_fn(2, 2, |i, j| {
                        let v = ((seed + k as u64 * 7 + i as u64 * 3 + j as u64) % 11) as f64 * 0.17 - 0.5;
                        Complex64::new(v, v * 0.3)
                    })
                })
                .collect();
            samples
        };
        let t = ClosedLoopFrf::new(grid.clone(), mk(1)).unwrap();
        let th = ClosedLoopFrf::new(grid, mk(5)).unwrap();
        let r = spatial_regret_value(&t, &th).unwrap();
        for k in 0..5 {
            let lam = HermitianMatrix::new(t.at(k).adjoint() * t.at(k) - th.at(k).adjoint() * th.at(k));
            let expect = crate::hermitian::max_eigenvalue(&lam);
            assert!((r.sweep[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn worst_case_and_column_gains() {
        let grid = make_log_grid(0.1, 10.0, 3, 0.1).unwrap();
        let mut s = CMat::zeros(2, 2);
        s[(0, 0)] = Complex64::new(1.0, 0.0);
        s[(1, 1)] = Complex64::new(3.0, 0.0);
        let t = ClosedLoopFrf::new(grid.clone(), vec![s; 3]).unwrap();
        let w0 = grid.omegas()[1];
        assert!((worst_case_frequency_gain(&t, w0).unwrap() - 9.0).abs() < 1e-12);
        assert!((column_energy_gain(&t, 0, w0).unwrap() - 1.0).abs() < 1e-12);
        assert!((column_energy_gain(&t, 1, w0).unwrap() - 9.0).abs() < 1e-12);
        assert!(matches!(
            column_energy_gain(&t, 5, w0),
            Err(EvalError::BadChannel(5))
        ));
        assert!(matches!(
            worst_case_frequency_gain(&t, 123.456),
            Err(EvalError::FrequencyNotOnGrid(_))
        ));
    }

    fn scalar_loop_plant(ts: f64) -> PartitionedPlant {
        // x+ = 0.5 x + w, z = x, y = x (scalar w, z, y; u unused but present)
        let model = StateSpaceModel::new(
            RMat::from_element(1, 1, 0.5),
            RMat::from_row_slice(1, 2, &[1.0, 1.0]),
            RMat::from_column_slice(2, 1, &[1.0, 1.0]),
            RMat::zeros(2, 2),
            ts,
        )
        .unwrap();
        PartitionedPlant::new(model, 1, 1).unwrap()
    }

    #[test]
    fn zero_disturbance_zero_energy() {
        let ts = 0.1;
        let plant = scalar_loop_plant(ts);
        let k0 = StateSpaceModel::new(RMat::zeros(0, 0), RMat::zeros(0, 1), RMat::zeros(1, 0), RMat::zeros(1, 1), ts).unwrap();
        let spec = DisturbanceSpec { channel: 0, tones: vec![], horizon: 200, ts };
        let tr = time_domain_experiment(&plant, &k0, &spec).unwrap();
        assert!(tr.z_norm_sq.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sine_steady_energy_matches_gain() {
        // steady-state <z^2> = |T(e^{jw0})|^2 / 2 for unit cosine
        let ts = 0.1;
        let plant = scalar_loop_plant(ts);
        let k0 = StateSpaceModel::new(RMat::zeros(0, 0), RMat::zeros(0, 1), RMat::zeros(1, 0), RMat::zeros(1, 1), ts).unwrap();
        let w0 = 1.3;
        let period = (std::f64::consts::TAU / (w0 * ts)).ceil() as usize;
        let horizon = period * 60;
        let spec = DisturbanceSpec { channel: 0, tones: vec![(w0, 1.0, 0.0)], horizon, ts };
        let tr = time_domain_experiment(&plant, &k0, &spec).unwrap();
        let z = Complex64::from_polar(1.0, w0 * ts);
        let gain = (z - Complex64::new(0.5, 0.0)).finv().norm();
        let expect = gain * gain / 2.0;
        assert!(
            (tr.steady_mean - expect).abs() <= 0.01 * expect,
            "steady {} vs {}",
            tr.steady_mean,
            expect
        );
    }

    #[test]
    fn unstable_loop_rejected() {
        let ts = 0.1;
        let model = StateSpaceModel::new(
            RMat::from_element(1, 1, 1.2),
            RMat::from_row_slice(1, 2, &[1.0, 0.0]),
            RMat::from_column_slice(2, 1, &[1.0, 1.0]),
            RMat::zeros(2, 2),
            ts,
        )
        .unwrap();
        let plant = PartitionedPlant::new(model, 1, 1).unwrap();
        let k0 = StateSpaceModel::new(RMat::zeros(0, 0), RMat::zeros(0, 1), RMat::zeros(1, 0), RMat::zeros(1, 1), ts).unwrap();
        let spec = DisturbanceSpec { channel: 0, tones: vec![(1.0, 1.0, 0.0)], horizon: 10_000, ts };
        assert!(matches!(
            time_domain_experiment(&plant, &k0, &spec),
            Err(EvalError::UnstableClosedLoop(_))
        ));
    }
}
