//! Frequency grids, FRF estimation from experiment records, and
//! generalized-plant assembly with rank/boundedness diagnostics.

use crate::hermitian::{extreme_singular_values, CMat, RMat};
use crate::lti::{simulate, PartitionedPlant};
use crate::textio::fmt_f64;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrfError {
    #[error("bad frequency range: need 0 < w_min < w_max <= pi/Ts, got [{w_min}, {w_max}] with Ts = {ts}")]
    BadRange { w_min: f64, w_max: f64, ts: f64 },
    #[error("input spectrum singular at omega = {omega}: condition number {cond:.3e}")]
    SingularInputSpectrum { omega: f64, cond: f64 },
    #[error("frequency grids do not match")]
    GridMismatch,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("experiment batch is empty")]
    EmptyBatch,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lti(#[from] crate::lti::LtiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Log,
    Linear,
    Custom,
}

/// Ordered set of angular frequencies strictly inside `[0, pi/Ts)`.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    ts: f64,
    omegas: Vec<f64>,
    spacing: Spacing,
}

impl FrequencyGrid {
    pub fn from_omegas(omegas: Vec<f64>, ts: f64, spacing: Spacing) -> Result<Self, FrfError> {
        let nyquist = std::f64::consts::PI / ts;
        if ts <= 0.0 || omegas.is_empty() {
            return Err(FrfError::BadRange { w_min: 0.0, w_max: 0.0, ts });
        }
        for w in omegas.windows(2) {
            if w[1] <= w[0] {
                return Err(FrfError::BadRange { w_min: w[1], w_max: w[0], ts });
            }
        }
        let last = *omegas.last().unwrap();
        if omegas[0] < 0.0 || last >= nyquist {
            return Err(FrfError::BadRange { w_min: omegas[0], w_max: last, ts });
        }
        Ok(Self { ts, omegas, spacing })
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Unit-circle evaluation point `e^{j omega Ts}` for grid index `k`.
    pub fn z(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.omegas[k] * self.ts)
    }

    pub fn same_as(&self, other: &FrequencyGrid) -> bool {
        self.ts == other.ts && self.omegas == other.omegas
    }

    /// Trapezoid quadrature weights over the grid (plain, unscaled).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.omegas.len();
        if n == 1 {
            return vec![1.0];
        }
        let mut w = vec![0.0; n];
        w[0] = (self.omegas[1] - self.omegas[0]) / 2.0;
        w[n - 1] = (self.omegas[n - 1] - self.omegas[n - 2]) / 2.0;
        for k in 1..n - 1 {
            w[k] = (self.omegas[k + 1] - self.omegas[k - 1]) / 2.0;
        }
        w
    }
}

/// `n` logarithmically spaced frequencies in `[w_min, w_max]`.
///
/// When `w_max` equals the Nyquist rate `pi/Ts`, the top point is clamped to
/// `(1 - 1e-9) * pi/Ts` so the grid stays inside `[0, pi/Ts)`.
pub fn make_log_grid(w_min: f64, w_max: f64, n: usize, ts: f64) -> Result<FrequencyGrid, FrfError> {
    let nyquist = std::f64::consts::PI / ts;
    if !(w_min > 0.0 && w_min < w_max && w_max <= nyquist) || n == 0 || ts <= 0.0 {
        return Err(FrfError::BadRange { w_min, w_max, ts });
    }
    let top = if w_max == nyquist { (1.0 - 1e-9) * nyquist } else { w_max };
    let omegas = if n == 1 {
        vec![w_min]
    } else {
        let ratio = top / w_min;
        (0..n)
            .map(|i| w_min * ratio.powf(i as f64 / (n - 1) as f64))
            .collect()
    };
    FrequencyGrid::from_omegas(omegas, ts, Spacing::Log)
}

/// One complex matrix sample per grid frequency.
#[derive(Debug, Clone)]
pub struct FrfBlock {
    rows: usize,
    cols: usize,
    samples: Vec<CMat>,
}

impl FrfBlock {
    pub fn new(samples: Vec<CMat>) -> Result<Self, FrfError> {
        let first = samples.first().ok_or(FrfError::EmptyBatch)?;
        let (rows, cols) = first.shape();
        for s in &samples {
            if s.shape() != (rows, cols) {
                return Err(FrfError::DimensionMismatch(
                    "inconsistent FRF sample shapes".into(),
                ));
            }
            if s.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(FrfError::DimensionMismatch("non-finite FRF sample".into()));
            }
        }
        Ok(Self { rows, cols, samples })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn at(&self, k: usize) -> &CMat {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[CMat] {
        &self.samples
    }
}

/// Time-domain experiment records: `U_k` is `m x m`, `Y_k` is `p x m`, one
/// column per experiment.
#[derive(Debug, Clone)]
pub struct ExperimentBatch {
    u: Vec<RMat>,
    y: Vec<RMat>,
}

impl ExperimentBatch {
    pub fn new(u: Vec<RMat>, y: Vec<RMat>) -> Result<Self, FrfError> {
        if u.is_empty() || u.len() != y.len() {
            return Err(FrfError::EmptyBatch);
        }
        let m = u[0].ncols();
        let p = y[0].nrows();
        for (uk, yk) in u.iter().zip(&y) {
            if uk.nrows() != m || uk.ncols() != m || yk.ncols() != m || yk.nrows() != p {
                return Err(FrfError::DimensionMismatch(
                    "inconsistent experiment record shapes".into(),
                ));
            }
        }
        Ok(Self { u, y })
    }

    pub fn n_samples(&self) -> usize {
        self.u.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.u[0].ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.y[0].nrows()
    }

    pub fn u(&self) -> &[RMat] {
        &self.u
    }

    pub fn y(&self) -> &[RMat] {
        &self.y
    }
}

/// Simulates one impulse experiment per input channel (`U_k = I delta_k`),
/// recording `ns` samples of the measured output with zero disturbance.
pub fn simulate_impulse_experiments(
    plant: &PartitionedPlant,
    ns: usize,
) -> Result<ExperimentBatch, FrfError> {
    let m = plant.n_controls();
    let p = plant.n_measurements();
    let mut u = vec![RMat::zeros(m, m); ns];
    let mut y = vec![RMat::zeros(p, m); ns];
    u[0] = RMat::identity(m, m);
    for e in 0..m {
        let mut ue = vec![DVector::zeros(m); ns];
        ue[0][e] = 1.0;
        let w = vec![DVector::zeros(plant.n_disturbances()); ns];
        let x0 = DVector::zeros(plant.model().n_states());
        let trace = simulate(plant, &ue, &w, &x0, ns)?;
        for k in 0..ns {
            for i in 0..p {
                y[k][(i, e)] = trace.y[k][i];
            }
        }
    }
    ExperimentBatch::new(u, y)
}

/// Simulates one random-phase multisine experiment per input channel.
///
/// Tones are log-spaced over `[w_lo, 0.8 * pi/Ts]`; phases come from a
/// seeded ChaCha stream so reruns are bit-identical.
pub fn simulate_multisine_experiments(
    plant: &PartitionedPlant,
    ns: usize,
    n_tones: usize,
    w_lo: f64,
    seed: u64,
) -> Result<ExperimentBatch, FrfError> {
    let ts = plant.model().ts();
    let m = plant.n_controls();
    let p = plant.n_measurements();
    let nyq = std::f64::consts::PI / ts;
    let tones: Vec<f64> = (0..n_tones)
        .map(|i| w_lo * (0.8 * nyq / w_lo).powf(i as f64 / (n_tones.max(2) - 1) as f64))
        .collect();
    let amp = 1.0 / (n_tones as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = vec![RMat::zeros(m, m); ns];
    let mut y = vec![RMat::zeros(p, m); ns];
    for e in 0..m {
        let phases: Vec<f64> = (0..n_tones)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let mut ue = vec![DVector::zeros(m); ns];
        for (k, uk) in ue.iter_mut().enumerate() {
            let t = k as f64 * ts;
            uk[e] = tones
                .iter()
                .zip(&phases)
                .map(|(w, ph)| amp * (w * t + ph).cos())
                .sum();
        }
        let w = vec![DVector::zeros(plant.n_disturbances()); ns];
        let x0 = DVector::zeros(plant.model().n_states());
        let trace = simulate(plant, &ue, &w, &x0, ns)?;
        for k in 0..ns {
            u[k][(e, e)] = ue[k][e];
            for i in 0..p {
                y[k][(i, e)] = trace.y[k][i];
            }
        }
    }
    ExperimentBatch::new(u, y)
}

/// Estimates the plant FRF from experiment records by the ratio of truncated
/// discrete-time Fourier sums:
/// `G(e^{jw}) = [sum_k Y_k e^{-jwTs k}] [sum_k U_k e^{-jwTs k}]^{-1}`.
pub fn estimate_frf(batch: &ExperimentBatch, grid: &FrequencyGrid) -> Result<FrfBlock, FrfError> {
    let m = batch.n_inputs();
    let p = batch.n_outputs();
    let ts = grid.ts();
    let mut samples = Vec::with_capacity(grid.len());
    for &omega in grid.omegas() {
        let mut du = CMat::zeros(m, m);
        let mut dy = CMat::zeros(p, m);
        // Horner-style accumulation of sum_k M_k e^{-j w Ts k}
        let step = Complex64::from_polar(1.0, -omega * ts);
        let mut phase = Complex64::new(1.0, 0.0);
        for k in 0..batch.n_samples() {
            let uk = &batch.u()[k];
            let yk = &batch.y()[k];
            for j in 0..m {
                for i in 0..m {
                    du[(i, j)] += phase * uk[(i, j)];
                }
                for i in 0..p {
                    dy[(i, j)] += phase * yk[(i, j)];
                }
            }
            phase *= step;
        }
        let (smin, smax) = extreme_singular_values(&du).map_err(|_| {
            FrfError::SingularInputSpectrum { omega, cond: f64::INFINITY }
        })?;
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond >= 1e10 {
            return Err(FrfError::SingularInputSpectrum { omega, cond });
        }
        let du_lu = du.lu();
        let g = du_lu
            .solve(&dy.transpose())
            .ok_or(FrfError::SingularInputSpectrum { omega, cond })?
            .transpose();
        samples.push(g);
    }
    FrfBlock::new(samples)
}

/// Four-block generalized-plant FRF on a common grid.
#[derive(Debug, Clone)]
pub struct GeneralizedPlantFrf {
    grid: FrequencyGrid,
    g11: FrfBlock,
    g12: FrfBlock,
    g21: FrfBlock,
    g22: FrfBlock,
}

/// Source of the performance blocks `G11, G12, G21` when assembling a plant
/// around an estimated `G22`.
pub enum PerformanceBlocks<'a> {
    Frf { g11: FrfBlock, g12: FrfBlock, g21: FrfBlock },
    FromModel(&'a PartitionedPlant),
}

impl GeneralizedPlantFrf {
    pub fn new(
        grid: FrequencyGrid,
        g11: FrfBlock,
        g12: FrfBlock,
        g21: FrfBlock,
        g22: FrfBlock,
    ) -> Result<Self, FrfError> {
        for b in [&g11, &g12, &g21, &g22] {
            if b.len() != grid.len() {
                return Err(FrfError::GridMismatch);
            }
        }
        // 2x2 block partition compatibility
        if g11.rows() != g12.rows()
            || g21.rows() != g22.rows()
            || g11.cols() != g21.cols()
            || g12.cols() != g22.cols()
        {
            return Err(FrfError::DimensionMismatch(format!(
                "block partition: G11 {}x{}, G12 {}x{}, G21 {}x{}, G22 {}x{}",
                g11.rows(),
                g11.cols(),
                g12.rows(),
                g12.cols(),
                g21.rows(),
                g21.cols(),
                g22.rows(),
                g22.cols()
            )));
        }
        Ok(Self { grid, g11, g12, g21, g22 })
    }

    /// Samples all four blocks of a partitioned state-space model.
    pub fn sample_model(plant: &PartitionedPlant, grid: &FrequencyGrid) -> Result<Self, FrfError> {
        let full = crate::lti::frequency_response(plant.model(), grid)?;
        let (nz, nw) = (plant.n_performance(), plant.n_disturbances());
        let (p, m) = (plant.n_measurements(), plant.n_controls());
        let mut g11 = Vec::with_capacity(grid.len());
        let mut g12 = Vec::with_capacity(grid.len());
        let mut g21 = Vec::with_capacity(grid.len());
        let mut g22 = Vec::with_capacity(grid.len());
        for s in full.samples() {
            g11.push(s.view((0, 0), (nz, nw)).into_owned());
            g12.push(s.view((0, nw), (nz, m)).into_owned());
            g21.push(s.view((nz, 0), (p, nw)).into_owned());
            g22.push(s.view((nz, nw), (p, m)).into_owned());
        }
        Self::new(
            grid.clone(),
            FrfBlock::new(g11)?,
            FrfBlock::new(g12)?,
            FrfBlock::new(g21)?,
            FrfBlock::new(g22)?,
        )
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn g11(&self) -> &FrfBlock {
        &self.g11
    }

    pub fn g12(&self) -> &FrfBlock {
        &self.g12
    }

    pub fn g21(&self) -> &FrfBlock {
        &self.g21
    }

    pub fn g22(&self) -> &FrfBlock {
        &self.g22
    }

    pub fn n_performance(&self) -> usize {
        self.g11.rows()
    }

    pub fn n_disturbances(&self) -> usize {
        self.g11.cols()
    }

    pub fn n_measurements(&self) -> usize {
        self.g21.rows()
    }

    pub fn n_controls(&self) -> usize {
        self.g12.cols()
    }
}

/// Packages an estimated `G22` with user-specified performance blocks.
///
/// In the case-study pipeline `G11, G12, G21` come from the design model
/// while `G22` comes from data.
pub fn assemble_generalized_plant(
    g22: FrfBlock,
    perf: PerformanceBlocks<'_>,
    grid: &FrequencyGrid,
) -> Result<GeneralizedPlantFrf, FrfError> {
    match perf {
        PerformanceBlocks::Frf { g11, g12, g21 } => {
            GeneralizedPlantFrf::new(grid.clone(), g11, g12, g21, g22)
        }
        PerformanceBlocks::FromModel(plant) => {
            let sampled = GeneralizedPlantFrf::sample_model(plant, grid)?;
            GeneralizedPlantFrf::new(
                grid.clone(),
                sampled.g11,
                sampled.g12,
                sampled.g21,
                g22,
            )
        }
    }
}

/// Per-frequency evidence for the full-column-rank and boundedness checks.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub rank_tol: f64,
    pub bound: f64,
    /// `(index, omega, sigma_min, sigma_max)` where G12 fails the rank check.
    pub rank_violations: Vec<(usize, f64, f64, f64)>,
    /// `(index, omega, max_entry)` where the plant magnitude exceeds `bound`.
    pub bound_violations: Vec<(usize, f64, f64)>,
    pub min_sigma_ratio: f64,
    pub max_entry: f64,
}

impl AssumptionReport {
    pub fn rank_ok(&self) -> bool {
        self.rank_violations.is_empty()
    }

    pub fn bound_ok(&self) -> bool {
        self.bound_violations.is_empty()
    }

    pub fn all_ok(&self) -> bool {
        self.rank_ok() && self.bound_ok()
    }
}

/// Checks that `G12` has full column rank and the plant stays bounded on the
/// grid, returning per-frequency evidence rather than an error.
pub fn check_assumptions(
    plant: &GeneralizedPlantFrf,
    rank_tol: f64,
    bound: f64,
) -> AssumptionReport {
    let mut report = AssumptionReport {
        rank_tol,
        bound,
        rank_violations: Vec::new(),
        bound_violations: Vec::new(),
        min_sigma_ratio: f64::INFINITY,
        max_entry: 0.0,
    };
    for (k, &omega) in plant.grid().omegas().iter().enumerate() {
        let g12 = plant.g12().at(k);
        if let Ok((smin, smax)) = extreme_singular_values(g12) {
            let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
            report.min_sigma_ratio = report.min_sigma_ratio.min(ratio);
            if g12.nrows() < g12.ncols() || smin <= rank_tol * smax {
                report.rank_violations.push((k, omega, smin, smax));
            }
        } else {
            report.rank_violations.push((k, omega, 0.0, 0.0));
        }
        let mut max_abs = 0.0f64;
        for b in [plant.g11(), plant.g12(), plant.g21(), plant.g22()] {
            for x in b.at(k).iter() {
                max_abs = max_abs.max(x.norm());
            }
        }
        report.max_entry = report.max_entry.max(max_abs);
        if max_abs >= bound {
            report.bound_violations.push((k, omega, max_abs));
        }
    }
    report
}

/// Writes FRF blocks as CSV rows `omega,block,row,col,re,im`.
pub fn write_frf_csv<W: Write>(
    out: &mut W,
    grid: &FrequencyGrid,
    blocks: &[(&str, &FrfBlock)],
) -> Result<(), FrfError> {
    writeln!(out, "omega,block,row,col,re,im")?;
    for (k, &omega) in grid.omegas().iter().enumerate() {
        for (name, block) in blocks {
            let s = block.at(k);
            for i in 0..s.nrows() {
                for j in 0..s.ncols() {
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        fmt_f64(omega),
                        name,
                        i,
                        j,
                        fmt_f64(s[(i, j)].re),
                        fmt_f64(s[(i, j)].im)
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// Reads one named block back from `omega,block,row,col,re,im` CSV.
pub fn read_frf_csv<R: BufRead>(
    input: R,
    block_name: &str,
    ts: f64,
) -> Result<(FrequencyGrid, FrfBlock), FrfError> {
    let mut rows: Vec<(f64, usize, usize, Complex64)> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(FrfError::Parse(format!("line {}: expected 6 fields", lineno + 1)));
        }
        if fields[1] != block_name {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| FrfError::Parse(format!("line {}: {e}", lineno + 1)))
        };
        let omega = parse(fields[0])?;
        let i: usize = fields[2]
            .parse()
            .map_err(|e| FrfError::Parse(format!("line {}: {e}", lineno + 1)))?;
        let j: usize = fields[3]
            .parse()
            .map_err(|e| FrfError::Parse(format!("line {}: {e}", lineno + 1)))?;
        rows.push((omega, i, j, Complex64::new(parse(fields[4])?, parse(fields[5])?)));
    }
    if rows.is_empty() {
        return Err(FrfError::Parse(format!("no rows for block {block_name}")));
    }
    let mut omegas: Vec<f64> = Vec::new();
    for r in &rows {
        if omegas.last() != Some(&r.0) {
            omegas.push(r.0);
        }
    }
    let nrows = rows.iter().map(|r| r.1).max().unwrap() + 1;
    let ncols = rows.iter().map(|r| r.2).max().unwrap() + 1;
    let mut samples = vec![CMat::zeros(nrows, ncols); omegas.len()];
    let mut idx = 0usize;
    for r in &rows {
        while omegas[idx] != r.0 {
            idx += 1;
        }
        samples[idx][(r.1, r.2)] = r.3;
    }
    let grid = FrequencyGrid::from_omegas(omegas, ts, Spacing::Custom)?;
    let block = FrfBlock::new(samples)?;
    if block.len() != grid.len() {
        return Err(FrfError::GridMismatch);
    }
    Ok((grid, block))
}

/// Writes one experiment as CSV rows `k,experiment,channel,u,y`.
///
/// `channel` enumerates `max(m, p)` lanes; missing input or output channels
/// are written as zero.
pub fn write_experiment_csv<W: Write>(
    out: &mut W,
    batch: &ExperimentBatch,
    experiment: usize,
) -> Result<(), FrfError> {
    let m = batch.n_inputs();
    let p = batch.n_outputs();
    writeln!(out, "k,experiment,channel,u,y")?;
    for k in 0..batch.n_samples() {
        for c in 0..m.max(p) {
            let u = if c < m { batch.u()[k][(c, experiment)] } else { 0.0 };
            let y = if c < p { batch.y()[k][(c, experiment)] } else { 0.0 };
            writeln!(out, "{},{},{},{},{}", k, experiment, c, fmt_f64(u), fmt_f64(y))?;
        }
    }
    Ok(())
}

/// Reads experiment CSV files (one per experiment) back into a batch.
pub fn read_experiment_batch<R: BufRead>(
    readers: Vec<R>,
    m: usize,
    p: usize,
) -> Result<ExperimentBatch, FrfError> {
    let n_exp = readers.len();
    if n_exp != m {
        return Err(FrfError::DimensionMismatch(format!(
            "expected {m} experiment files, got {n_exp}"
        )));
    }
    let mut u: Vec<RMat> = Vec::new();
    let mut y: Vec<RMat> = Vec::new();
    for reader in readers {
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(FrfError::Parse(format!("line {}: expected 5 fields", lineno + 1)));
            }
            let k: usize = fields[0]
                .parse()
                .map_err(|e| FrfError::Parse(format!("{e}")))?;
            let e: usize = fields[1]
                .parse()
                .map_err(|e| FrfError::Parse(format!("{e}")))?;
            let c: usize = fields[2]
                .parse()
                .map_err(|e| FrfError::Parse(format!("{e}")))?;
            let uv: f64 = fields[3]
                .parse()
                .map_err(|e| FrfError::Parse(format!("{e}")))?;
            let yv: f64 = fields[4]
                .parse()
                .map_err(|e| FrfError::Parse(format!("{e}")))?;
            while u.len() <= k {
                u.push(RMat::zeros(m, m));
                y.push(RMat::zeros(p, m));
            }
            if c < m {
                u[k][(c, e)] = uv;
            }
            if c < p {
                y[k][(c, e)] = yv;
            }
        }
    }
    ExperimentBatch::new(u, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{frequency_response, StateSpaceModel};

    #[test]
    fn log_grid_three_decades() {
        let g = make_log_grid(1.0, 100.0, 3, 0.02).unwrap();
        let o = g.omegas();
        assert!((o[0] - 1.0).abs() < 1e-12);
        assert!((o[1] - 10.0).abs() < 1e-12);
        assert!((o[2] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn log_grid_paper_scale_clamps_nyquist() {
        let ts = 0.02;
        let nyq = std::f64::consts::PI / ts;
        let g = make_log_grid(1e-2, nyq, 600, ts).unwrap();
        assert_eq!(g.len(), 600);
        assert!(*g.omegas().last().unwrap() < nyq);
        assert!(*g.omegas().last().unwrap() > nyq * (1.0 - 1e-6));
    }

    #[test]
    fn log_grid_degenerate_single_point() {
        let g = make_log_grid(2.0, 5.0, 1, 0.1).unwrap();
        assert_eq!(g.omegas(), &[2.0]);
    }

    #[test]
    fn log_grid_rejects_bad_range() {
        assert!(matches!(
            make_log_grid(5.0, 2.0, 10, 0.1),
            Err(FrfError::BadRange { .. })
        ));
        assert!(matches!(
            make_log_grid(0.0, 2.0, 10, 0.1),
            Err(FrfError::BadRange { .. })
        ));
        assert!(matches!(
            make_log_grid(1.0, 1e9, 10, 0.1),
            Err(FrfError::BadRange { .. })
        ));
    }

    fn impulse_batch_from_outputs(y_of_k: impl Fn(usize) -> f64, ns: usize) -> ExperimentBatch {
        // scalar plant, single impulse experiment
        let mut u = vec![RMat::zeros(1, 1); ns];
        u[0][(0, 0)] = 1.0;
        let y = (0..ns).map(|k| RMat::from_element(1, 1, y_of_k(k))).collect();
        ExperimentBatch::new(u, y).unwrap()
    }

    #[test]
    fn estimate_identity_plant() {
        let ns = 16;
        let batch = impulse_batch_from_outputs(|k| if k == 0 { 1.0 } else { 0.0 }, ns);
        let grid = make_log_grid(0.1, 10.0, 7, 0.1).unwrap();
        let est = estimate_frf(&batch, &grid).unwrap();
        for s in est.samples() {
            assert!((s[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn estimate_unit_delay() {
        let ns = 16;
        let ts = 0.1;
        let batch = impulse_batch_from_outputs(|k| if k == 1 { 1.0 } else { 0.0 }, ns);
        let grid = make_log_grid(0.1, 10.0, 7, ts).unwrap();
        let est = estimate_frf(&batch, &grid).unwrap();
        for (k, s) in est.samples().iter().enumerate() {
            let expected = Complex64::from_polar(1.0, -grid.omegas()[k] * ts);
            assert!((s[(0, 0)] - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn estimate_scalar_iir_converges() {
        // y_{t+1} = 0.5 y_t + u_t  <=>  1/(z - 0.5)
        let ns = 2000;
        let ts = 0.1;
        let batch = impulse_batch_from_outputs(|k| if k == 0 { 0.0 } else { 0.5f64.powi(k as i32 - 1) }, ns);
        let grid = make_log_grid(0.1, 0.99 * std::f64::consts::PI / ts, 40, ts).unwrap();
        let est = estimate_frf(&batch, &grid).unwrap();
        let model = StateSpaceModel::new(
            RMat::from_element(1, 1, 0.5),
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::zeros(1, 1),
            ts,
        )
        .unwrap();
        let truth = frequency_response(&model, &grid).unwrap();
        let mut max_err = 0.0f64;
        for (e, t) in est.samples().iter().zip(truth.samples()) {
            max_err = max_err.max((e[(0, 0)] - t[(0, 0)]).norm());
        }
        assert!(max_err <= 1e-6, "max err {max_err}");
    }

    #[test]
    fn estimate_rejects_singular_input() {
        let ns = 8;
        let u = vec![RMat::zeros(2, 2); ns]; // all-zero inputs
        let y = vec![RMat::zeros(2, 2); ns];
        let batch = ExperimentBatch::new(u, y).unwrap();
        let grid = make_log_grid(0.1, 1.0, 3, 0.1).unwrap();
        assert!(matches!(
            estimate_frf(&batch, &grid),
            Err(FrfError::SingularInputSpectrum { .. })
        ));
    }

    #[test]
    fn assumptions_flag_zero_column() {
        let grid = make_log_grid(0.1, 1.0, 4, 0.1).unwrap();
        let n = grid.len();
        let ones = FrfBlock::new(vec![CMat::from_element(1, 1, Complex64::new(1.0, 0.0)); n]).unwrap();
        let zero_col = FrfBlock::new(vec![CMat::zeros(1, 1); n]).unwrap();
        let plant = GeneralizedPlantFrf::new(grid, ones.clone(), zero_col, ones.clone(), ones).unwrap();
        let report = check_assumptions(&plant, 1e-6, 1e6);
        assert!(!report.rank_ok());
        assert_eq!(report.rank_violations.len(), n);
        assert!(report.bound_ok());
    }

    #[test]
    fn assumptions_flag_near_pole_magnitude() {
        // 1/(z - e^{j w0}) explodes near w0; with the pole on the grid, the
        // sampled magnitude exceeds any moderate bound.
        let ts = 0.1;
        let grid = make_log_grid(0.5, 20.0, 30, ts).unwrap();
        // unit-circle pole a hair off a grid point: finite but astronomically
        // large samples, well past the default boundedness threshold
        let w0 = grid.omegas()[10] * (1.0 + 1e-9);
        let pole = Complex64::from_polar(1.0, w0 * ts);
        let samples: Vec<CMat> = grid
            .omegas()
            .iter()
            .map(|&w| {
                let z = Complex64::from_polar(1.0, w * ts);
                CMat::from_element(1, 1, (z - pole).finv())
            })
            .collect();
        let g = FrfBlock::new(samples).unwrap();
        let ones = FrfBlock::new(vec![CMat::from_element(1, 1, Complex64::new(1.0, 0.0)); grid.len()]).unwrap();
        let plant = GeneralizedPlantFrf::new(grid, g, ones.clone(), ones.clone(), ones).unwrap();
        let report = check_assumptions(&plant, 1e-6, 1e6);
        assert!(!report.bound_ok());
    }

    #[test]
    fn assumptions_monotone_in_tolerances() {
        let ts = 0.05;
        let grid = make_log_grid(0.1, 10.0, 12, ts).unwrap();
        let n = grid.len();
        let mk = |scale: f64| {
            FrfBlock::new(
                (0..n)
                    .map(|k| CMat::from_element(1, 1, Complex64::new(scale / (1.0 + k as f64), 0.02)))
                    .collect(),
            )
            .unwrap()
        };
        let plant = GeneralizedPlantFrf::new(grid, mk(1.0), mk(0.3), mk(2.0), mk(0.7)).unwrap();
        let strict = check_assumptions(&plant, 1e-2, 1.5);
        let loose = check_assumptions(&plant, 1e-8, 1e3);
        assert!(loose.rank_violations.len() <= strict.rank_violations.len());
        assert!(loose.bound_violations.len() <= strict.bound_violations.len());
    }

    #[test]
    fn grid_mismatch_detected() {
        let g1 = make_log_grid(0.1, 1.0, 4, 0.1).unwrap();
        let ones = |n: usize| FrfBlock::new(vec![CMat::identity(1, 1); n]).unwrap();
        let err = GeneralizedPlantFrf::new(g1, ones(4), ones(4), ones(4), ones(5));
        assert!(matches!(err, Err(FrfError::GridMismatch)));
    }

    #[test]
    fn frf_csv_roundtrip() {
        let grid = make_log_grid(0.1, 5.0, 6, 0.1).unwrap();
        let block = FrfBlock::new(
            (0..6)
                .map(|k| {
                    CMat::from_fn(2, 3, |i, j| Complex64::new(k as f64 + i as f64 * 0.1, j as f64 * -0.3))
                })
                .collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_frf_csv(&mut buf, &grid, &[("G22", &block)]).unwrap();
        let (grid2, block2) = read_frf_csv(std::io::BufReader::new(&buf[..]), "G22", 0.1).unwrap();
        assert!(grid.same_as(&grid2));
        for (a, b) in block.samples().iter().zip(block2.samples()) {
            assert_eq!(a, b);
        }
    }
}
