//! Discrete-time state-space models, networked assembly, simulation, exact
//! frequency response, the swing-dynamics power-grid builder, and closed-loop
//! stability checks against a known model.

use crate::frf::{FrequencyGrid, FrfBlock};
use crate::hermitian::RMat;
use crate::structure::ControllerFactors;
use crate::textio::{fmt_f64, parse_floats};
use nalgebra::DVector;
use num_complex::Complex64;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dimension mismatch in block ({0}, {1})")]
    BlockDimensionMismatch(usize, usize),
    #[error("block ({0}, {1}) is not on an edge of the interaction graph")]
    NotANeighbor(usize, usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("e^(j omega Ts) is an eigenvalue of A at omega = {0}")]
    PoleOnGrid(f64),
    #[error("ill-posed interconnection: I - D22*DK is singular")]
    IllPosedInterconnection,
    #[error("controller factor D_Y is singular")]
    SingularDy,
    #[error("eigenvalue computation failed to converge")]
    EigenFailure,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Discrete-time state-space model `x+ = Ax + Bu, y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: RMat,
    b: RMat,
    c: RMat,
    d: RMat,
    ts: f64,
}

impl StateSpaceModel {
    pub fn new(a: RMat, b: RMat, c: RMat, d: RMat, ts: f64) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::DimensionMismatch("A must be square".into()));
        }
        if b.nrows() != n {
            return Err(LtiError::DimensionMismatch("B rows must match A".into()));
        }
        if c.ncols() != n {
            return Err(LtiError::DimensionMismatch("C cols must match A".into()));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::DimensionMismatch("D must be outputs x inputs".into()));
        }
        if ts <= 0.0 {
            return Err(LtiError::InvalidParams("Ts must be positive".into()));
        }
        for m in [&a, &b, &c, &d] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(LtiError::InvalidParams("non-finite entry".into()));
            }
        }
        Ok(Self { a, b, c, d, ts })
    }

    pub fn a(&self) -> &RMat {
        &self.a
    }
    pub fn b(&self) -> &RMat {
        &self.b
    }
    pub fn c(&self) -> &RMat {
        &self.c
    }
    pub fn d(&self) -> &RMat {
        &self.d
    }
    pub fn ts(&self) -> f64 {
        self.ts
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Spectral radius of `A`.
    pub fn spectral_radius(&self) -> Result<f64, LtiError> {
        spectral_radius(&self.a)
    }
}

pub(crate) fn spectral_radius(a: &RMat) -> Result<f64, LtiError> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let eigs = ac.eigenvalues().ok_or(LtiError::EigenFailure)?;
    Ok(eigs.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// State-space model with the generalized-plant partition: inputs ordered
/// `[w; u]`, outputs ordered `[z; y]`.
#[derive(Debug, Clone)]
pub struct PartitionedPlant {
    model: StateSpaceModel,
    n_w: usize,
    n_z: usize,
}

impl PartitionedPlant {
    pub fn new(model: StateSpaceModel, n_w: usize, n_z: usize) -> Result<Self, LtiError> {
        if n_w > model.n_inputs() || n_z > model.n_outputs() {
            return Err(LtiError::DimensionMismatch(
                "partition exceeds model dimensions".into(),
            ));
        }
        Ok(Self { model, n_w, n_z })
    }

    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }
    pub fn n_disturbances(&self) -> usize {
        self.n_w
    }
    pub fn n_performance(&self) -> usize {
        self.n_z
    }
    pub fn n_controls(&self) -> usize {
        self.model.n_inputs() - self.n_w
    }
    pub fn n_measurements(&self) -> usize {
        self.model.n_outputs() - self.n_z
    }

    pub fn b1(&self) -> RMat {
        self.model.b.columns(0, self.n_w).into_owned()
    }
    pub fn b2(&self) -> RMat {
        self.model.b.columns(self.n_w, self.n_controls()).into_owned()
    }
    pub fn c1(&self) -> RMat {
        self.model.c.rows(0, self.n_z).into_owned()
    }
    pub fn c2(&self) -> RMat {
        self.model.c.rows(self.n_z, self.n_measurements()).into_owned()
    }
    pub fn d11(&self) -> RMat {
        self.model.d.view((0, 0), (self.n_z, self.n_w)).into_owned()
    }
    pub fn d12(&self) -> RMat {
        self.model
            .d
            .view((0, self.n_w), (self.n_z, self.n_controls()))
            .into_owned()
    }
    pub fn d21(&self) -> RMat {
        self.model
            .d
            .view((self.n_z, 0), (self.n_measurements(), self.n_w))
            .into_owned()
    }
    pub fn d22(&self) -> RMat {
        self.model
            .d
            .view(
                (self.n_z, self.n_w),
                (self.n_measurements(), self.n_controls()),
            )
            .into_owned()
    }
}

/// Per-node dimensions of a networked system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeDims {
    pub states: usize,
    pub controls: usize,
    pub measurements: usize,
    pub disturbances: usize,
    pub performances: usize,
}

/// Graph-structured LTI system: per-edge coupling blocks plus per-node input
/// blocks. Blocks may only be set for `j` in the neighbor set of `i`
/// (neighbors include `i` itself).
#[derive(Debug, Clone)]
pub struct NetworkedSystem {
    dims: Vec<NodeDims>,
    edges: BTreeSet<(usize, usize)>,
    ts: f64,
    a: BTreeMap<(usize, usize), RMat>,
    b1: BTreeMap<(usize, usize), RMat>,
    c1: BTreeMap<(usize, usize), RMat>,
    c2: BTreeMap<(usize, usize), RMat>,
    d11: BTreeMap<(usize, usize), RMat>,
    b2: BTreeMap<usize, RMat>,
    d12: BTreeMap<usize, RMat>,
    d21: BTreeMap<usize, RMat>,
    d22: BTreeMap<usize, RMat>,
}

impl NetworkedSystem {
    /// `edges` lists ordered pairs `(i, j)` meaning node `j` influences node
    /// `i`; self-loops are implicit.
    pub fn new(dims: Vec<NodeDims>, edges: &[(usize, usize)], ts: f64) -> Result<Self, LtiError> {
        let n = dims.len();
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(LtiError::InvalidParams(format!("edge ({i}, {j}) out of range")));
            }
            set.insert((i, j));
        }
        for i in 0..n {
            set.insert((i, i));
        }
        if ts <= 0.0 {
            return Err(LtiError::InvalidParams("Ts must be positive".into()));
        }
        Ok(Self {
            dims,
            edges: set,
            ts,
            a: BTreeMap::new(),
            b1: BTreeMap::new(),
            c1: BTreeMap::new(),
            c2: BTreeMap::new(),
            d11: BTreeMap::new(),
            b2: BTreeMap::new(),
            d12: BTreeMap::new(),
            d21: BTreeMap::new(),
            d22: BTreeMap::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[NodeDims] {
        &self.dims
    }

    fn check_edge(&self, i: usize, j: usize) -> Result<(), LtiError> {
        if self.edges.contains(&(i, j)) {
            Ok(())
        } else {
            Err(LtiError::NotANeighbor(i, j))
        }
    }

    fn check_dims(&self, i: usize, j: usize, m: &RMat, rows: usize, cols: usize) -> Result<(), LtiError> {
        if m.nrows() != rows || m.ncols() != cols {
            Err(LtiError::BlockDimensionMismatch(i, j))
        } else {
            Ok(())
        }
    }

    pub fn set_a(&mut self, i: usize, j: usize, m: RMat) -> Result<(), LtiError> {
        self.check_edge(i, j)?;
        self.check_dims(i, j, &m, self.dims[i].states, self.dims[j].states)?;
        self.a.insert((i, j), m);
        Ok(())
    }

    pub fn set_b1(&mut self, i: usize, j: usize, m: RMat) -> Result<(), LtiError> {
        self.check_edge(i, j)?;
        self.check_dims(i, j, &m, self.dims[i].states, self.dims[j].disturbances)?;
        self.b1.insert((i, j), m);
        Ok(())
    }

    pub fn set_c1(&mut self, i: usize, j: usize, m: RMat) -> Result<(), LtiError> {
        self.check_edge(i, j)?;
        self.check_dims(i, j, &m, self.dims[i].performances, self.dims[j].states)?;
        self.c1.insert((i, j), m);
        Ok(())
    }

    pub fn set_c2(&mut self, i: usize, j: usize, m: RMat) -> Result<(), LtiError> {
        self.check_edge(i, j)?;
        self.check_dims(i, j, &m, self.dims[i].measurements, self.dims[j].states)?;
        self.c2.insert((i, j), m);
        Ok(())
    }

    pub fn set_d11(&mut self, i: usize, j: usize, m: RMat) -> Result<(), LtiError> {
        self.check_edge(i, j)?;
        self.check_dims(i, j, &m, self.dims[i].performances, self.dims[j].disturbances)?;
        self.d11.insert((i, j), m);
        Ok(())
    }

    pub fn set_b2(&mut self, i: usize, m: RMat) -> Result<(), LtiError> {
        self.check_dims(i, i, &m, self.dims[i].states, self.dims[i].controls)?;
        self.b2.insert(i, m);
        Ok(())
    }

    pub fn set_d12(&mut self, i: usize, m: RMat) -> Result<(), LtiError> {
        self.check_dims(i, i, &m, self.dims[i].performances, self.dims[i].controls)?;
        self.d12.insert(i, m);
        Ok(())
    }

    pub fn set_d21(&mut self, i: usize, m: RMat) -> Result<(), LtiError> {
        self.check_dims(i, i, &m, self.dims[i].measurements, self.dims[i].disturbances)?;
        self.d21.insert(i, m);
        Ok(())
    }

    pub fn set_d22(&mut self, i: usize, m: RMat) -> Result<(), LtiError> {
        self.check_dims(i, i, &m, self.dims[i].measurements, self.dims[i].controls)?;
        self.d22.insert(i, m);
        Ok(())
    }
}

fn offsets(dims: &[NodeDims], f: impl Fn(&NodeDims) -> usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len() + 1);
    let mut acc = 0;
    for d in dims {
        out.push(acc);
        acc += f(d);
    }
    out.push(acc);
    out
}

/// Stacks the per-node blocks into the monolithic partitioned model; block
/// rows/columns follow node order.
pub fn assemble_networked(sys: &NetworkedSystem) -> Result<PartitionedPlant, LtiError> {
    let dims = &sys.dims;
    let xo = offsets(dims, |d| d.states);
    let uo = offsets(dims, |d| d.controls);
    let yo = offsets(dims, |d| d.measurements);
    let wo = offsets(dims, |d| d.disturbances);
    let zo = offsets(dims, |d| d.performances);
    let (n, m, p, nw, nz) = (
        *xo.last().unwrap(),
        *uo.last().unwrap(),
        *yo.last().unwrap(),
        *wo.last().unwrap(),
        *zo.last().unwrap(),
    );

    let mut a = RMat::zeros(n, n);
    let mut b1 = RMat::zeros(n, nw);
    let mut b2 = RMat::zeros(n, m);
    let mut c1 = RMat::zeros(nz, n);
    let mut c2 = RMat::zeros(p, n);
    let mut d11 = RMat::zeros(nz, nw);
    let mut d12 = RMat::zeros(nz, m);
    let mut d21 = RMat::zeros(p, nw);
    let mut d22 = RMat::zeros(p, m);

    let place = |dst: &mut RMat, r0: usize, c0: usize, src: &RMat| {
        dst.view_mut((r0, c0), src.shape()).copy_from(src);
    };
    for (&(i, j), blk) in &sys.a {
        place(&mut a, xo[i], xo[j], blk);
    }
    for (&(i, j), blk) in &sys.b1 {
        place(&mut b1, xo[i], wo[j], blk);
    }
    for (&(i, j), blk) in &sys.c1 {
        place(&mut c1, zo[i], xo[j], blk);
    }
    for (&(i, j), blk) in &sys.c2 {
        place(&mut c2, yo[i], xo[j], blk);
    }
    for (&(i, j), blk) in &sys.d11 {
        place(&mut d11, zo[i], wo[j], blk);
    }
    for (&i, blk) in &sys.b2 {
        place(&mut b2, xo[i], uo[i], blk);
    }
    for (&i, blk) in &sys.d12 {
        place(&mut d12, zo[i], uo[i], blk);
    }
    for (&i, blk) in &sys.d21 {
        place(&mut d21, yo[i], wo[i], blk);
    }
    for (&i, blk) in &sys.d22 {
        place(&mut d22, yo[i], uo[i], blk);
    }

    let mut b = RMat::zeros(n, nw + m);
    b.view_mut((0, 0), (n, nw)).copy_from(&b1);
    b.view_mut((0, nw), (n, m)).copy_from(&b2);
    let mut c = RMat::zeros(nz + p, n);
    c.view_mut((0, 0), (nz, n)).copy_from(&c1);
    c.view_mut((nz, 0), (p, n)).copy_from(&c2);
    let mut d = RMat::zeros(nz + p, nw + m);
    d.view_mut((0, 0), (nz, nw)).copy_from(&d11);
    d.view_mut((0, nw), (nz, m)).copy_from(&d12);
    d.view_mut((nz, 0), (p, nw)).copy_from(&d21);
    d.view_mut((nz, nw), (p, m)).copy_from(&d22);

    PartitionedPlant::new(StateSpaceModel::new(a, b, c, d, sys.ts)?, nw, nz)
}

/// Parameters of the swing-dynamics chain grid. All buses share the same
/// inertia, damping and line coupling; the boundary buses additionally
/// connect to the external grid through `boundary_coupling`, which keeps the
/// open loop strictly stable (without it the uniform phase-shift mode sits
/// exactly on the unit circle).
#[derive(Debug, Clone, Copy)]
pub struct PowerGridParams {
    pub bus_count: usize,
    pub inertia: f64,
    pub damping: f64,
    pub coupling: f64,
    pub boundary_coupling: f64,
    pub ts: f64,
}

impl Default for PowerGridParams {
    fn default() -> Self {
        Self {
            bus_count: 5,
            inertia: 2.0,
            damping: 2.0,
            coupling: 20.0,
            boundary_coupling: 20.0,
            ts: 0.02,
        }
    }
}

/// Builds the chain power grid: per bus, state `[phase; frequency]`,
/// measurement = phase + disturbance feedthrough, performance
/// `z = [phase; control]`.
///
/// `A^{[i,i]} = [[1, Ts], [-(k_i/m)Ts, 1-(d/m)Ts]]` with
/// `k_i = sum of neighbor couplings (+ boundary_coupling at the chain ends)`,
/// `A^{[i,j]} = [[0, 0], [(k_ij/m)Ts, 0]]`, `B1 = [0; 1]`, `B2 = [0; Ts/m]`,
/// `C2 = [1, 0]`, `D21 = 1`, `D11 = D22 = 0`.
pub fn build_power_grid(p: &PowerGridParams) -> Result<NetworkedSystem, LtiError> {
    if p.bus_count < 2 {
        return Err(LtiError::InvalidParams("bus_count must be at least 2".into()));
    }
    if p.inertia <= 0.0 || p.ts <= 0.0 {
        return Err(LtiError::InvalidParams("inertia and Ts must be positive".into()));
    }
    let nb = p.bus_count;
    let dims = vec![
        NodeDims {
            states: 2,
            controls: 1,
            measurements: 1,
            disturbances: 1,
            performances: 2,
        };
        nb
    ];
    let mut edges = Vec::new();
    for i in 0..nb {
        if i > 0 {
            edges.push((i, i - 1));
        }
        if i + 1 < nb {
            edges.push((i, i + 1));
        }
    }
    let mut sys = NetworkedSystem::new(dims, &edges, p.ts)?;
    let (m, d, k, ts) = (p.inertia, p.damping, p.coupling, p.ts);
    for i in 0..nb {
        let neighbors: Vec<usize> = [i.checked_sub(1), (i + 1 < nb).then_some(i + 1)]
            .into_iter()
            .flatten()
            .collect();
        let mut ki = k * neighbors.len() as f64;
        if i == 0 || i == nb - 1 {
            ki += p.boundary_coupling;
        }
        sys.set_a(
            i,
            i,
            RMat::from_row_slice(2, 2, &[1.0, ts, -(ki / m) * ts, 1.0 - (d / m) * ts]),
        )?;
        for j in neighbors {
            sys.set_a(i, j, RMat::from_row_slice(2, 2, &[0.0, 0.0, (k / m) * ts, 0.0]))?;
        }
        sys.set_b1(i, i, RMat::from_column_slice(2, 1, &[0.0, 1.0]))?;
        sys.set_b2(i, RMat::from_column_slice(2, 1, &[0.0, ts / m]))?;
        sys.set_c1(i, i, RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))?;
        sys.set_d12(i, RMat::from_column_slice(2, 1, &[0.0, 1.0]))?;
        sys.set_c2(i, i, RMat::from_row_slice(1, 2, &[1.0, 0.0]))?;
        sys.set_d21(i, RMat::from_element(1, 1, 1.0))?;
    }
    Ok(sys)
}

/// Simulation record; every row satisfies the generating model's recursion
/// exactly.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub ts: f64,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// CSV export with header `t,x...,u...,w...,y...,z...`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<(), LtiError> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.x[0].len()).map(|i| format!("x{i}")))
            .chain((1..=self.u[0].len()).map(|i| format!("u{i}")))
            .chain((1..=self.w[0].len()).map(|i| format!("w{i}")))
            .chain((1..=self.y[0].len()).map(|i| format!("y{i}")))
            .chain((1..=self.z[0].len()).map(|i| format!("z{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            for v in [&self.x[t], &self.u[t], &self.w[t], &self.y[t], &self.z[t]] {
                row.extend(v.iter().map(|x| fmt_f64(*x)));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runs `x_{t+1} = A x_t + B1 w_t + B2 u_t` with the two output equations
/// for `steps` steps starting from `x0`.
pub fn simulate(
    plant: &PartitionedPlant,
    u: &[DVector<f64>],
    w: &[DVector<f64>],
    x0: &DVector<f64>,
    steps: usize,
) -> Result<SimulationTrace, LtiError> {
    let model = plant.model();
    if u.len() < steps || w.len() < steps {
        return Err(LtiError::DimensionMismatch("input sequences shorter than horizon".into()));
    }
    if x0.len() != model.n_states() {
        return Err(LtiError::DimensionMismatch("x0 length".into()));
    }
    let (b1, b2, c1, c2) = (plant.b1(), plant.b2(), plant.c1(), plant.c2());
    let (d11, d12, d21, d22) = (plant.d11(), plant.d12(), plant.d21(), plant.d22());
    let mut x = x0.clone();
    let mut trace = SimulationTrace {
        ts: model.ts(),
        x: Vec::with_capacity(steps),
        u: Vec::with_capacity(steps),
        w: Vec::with_capacity(steps),
        y: Vec::with_capacity(steps),
        z: Vec::with_capacity(steps),
    };
    for t in 0..steps {
        if u[t].len() != plant.n_controls() || w[t].len() != plant.n_disturbances() {
            return Err(LtiError::DimensionMismatch(format!("input dims at step {t}")));
        }
        let z = &c1 * &x + &d11 * &w[t] + &d12 * &u[t];
        let y = &c2 * &x + &d21 * &w[t] + &d22 * &u[t];
        let xn = model.a() * &x + &b1 * &w[t] + &b2 * &u[t];
        trace.x.push(x.clone());
        trace.u.push(u[t].clone());
        trace.w.push(w[t].clone());
        trace.y.push(y);
        trace.z.push(z);
        x = xn;
    }
    Ok(trace)
}

/// Exact rational evaluation `C (zI - A)^{-1} B + D` at every grid point.
pub fn frequency_response(model: &StateSpaceModel, grid: &FrequencyGrid) -> Result<FrfBlock, LtiError> {
    let n = model.n_states();
    let bc = model.b.map(|x| Complex64::new(x, 0.0));
    let cc = model.c.map(|x| Complex64::new(x, 0.0));
    let dc = model.d.map(|x| Complex64::new(x, 0.0));
    let ac = model.a.map(|x| Complex64::new(x, 0.0));
    let mut samples = Vec::with_capacity(grid.len());
    for (k, &omega) in grid.omegas().iter().enumerate() {
        if n == 0 {
            samples.push(dc.clone());
            continue;
        }
        let z = grid.z(k);
        let mut zia = -ac.clone();
        for i in 0..n {
            zia[(i, i)] += z;
        }
        let lu = zia.lu();
        let umax = (0..n).map(|i| lu.u()[(i, i)].norm()).fold(0.0f64, f64::max);
        let umin = (0..n).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if !(umin > 1e-14 * umax.max(1.0)) {
            return Err(LtiError::PoleOnGrid(omega));
        }
        let v = lu.solve(&bc).ok_or(LtiError::PoleOnGrid(omega))?;
        samples.push(&cc * v + &dc);
    }
    FrfBlock::new(samples).map_err(|e| LtiError::DimensionMismatch(e.to_string()))
}

/// Closed-loop model from disturbance `w` to performance `z` under output
/// feedback `u = K y`.
pub fn closed_loop_system(
    plant: &PartitionedPlant,
    controller: &StateSpaceModel,
) -> Result<StateSpaceModel, LtiError> {
    let m = plant.n_controls();
    let p = plant.n_measurements();
    if controller.n_inputs() != p || controller.n_outputs() != m {
        return Err(LtiError::DimensionMismatch(format!(
            "controller must map {p} measurements to {m} controls, got {} -> {}",
            controller.n_inputs(),
            controller.n_outputs()
        )));
    }
    let (ak, bk, ck, dk) = (controller.a(), controller.b(), controller.c(), controller.d());
    let d22 = plant.d22();
    let delta = (RMat::identity(m, m) - dk * &d22)
        .try_inverse()
        .ok_or(LtiError::IllPosedInterconnection)?;
    let (a, b1, b2) = (plant.model().a().clone(), plant.b1(), plant.b2());
    let (c1, c2) = (plant.c1(), plant.c2());
    let (d11, d12, d21) = (plant.d11(), plant.d12(), plant.d21());
    let n = plant.model().n_states();
    let nk = controller.n_states();

    let dkc2 = dk * &c2;
    let dkd21 = dk * &d21;
    let mut acl = RMat::zeros(n + nk, n + nk);
    acl.view_mut((0, 0), (n, n)).copy_from(&(&a + &b2 * &delta * &dkc2));
    acl.view_mut((0, n), (n, nk)).copy_from(&(&b2 * &delta * ck));
    acl.view_mut((n, 0), (nk, n))
        .copy_from(&(bk * &c2 + bk * &d22 * &delta * &dkc2));
    acl.view_mut((n, n), (nk, nk))
        .copy_from(&(ak + bk * &d22 * &delta * ck));
    let mut bcl = RMat::zeros(n + nk, plant.n_disturbances());
    bcl.view_mut((0, 0), (n, plant.n_disturbances()))
        .copy_from(&(&b1 + &b2 * &delta * &dkd21));
    bcl.view_mut((n, 0), (nk, plant.n_disturbances()))
        .copy_from(&(bk * &d21 + bk * &d22 * &delta * &dkd21));
    let mut ccl = RMat::zeros(plant.n_performance(), n + nk);
    ccl.view_mut((0, 0), (plant.n_performance(), n))
        .copy_from(&(&c1 + &d12 * &delta * &dkc2));
    ccl.view_mut((0, n), (plant.n_performance(), nk))
        .copy_from(&(&d12 * &delta * ck));
    let dcl = &d11 + &d12 * &delta * &dkd21;
    StateSpaceModel::new(acl, bcl, ccl, dcl, plant.model().ts())
}

/// Spectral radius of the closed-loop `A` matrix of the standard output
/// feedback interconnection `u = K y`.
pub fn closed_loop_spectral_radius(
    plant: &PartitionedPlant,
    controller: &StateSpaceModel,
) -> Result<f64, LtiError> {
    let cl = closed_loop_system(plant, controller)?;
    spectral_radius(cl.a())
}

/// State-space realization of `K = Y^{-1} X` from controller factors.
///
/// Uses the inverse-system formula on `Y`'s realization cascaded with `X`'s;
/// the result is generally non-minimal.
pub fn realize_controller(factors: &ControllerFactors) -> Result<StateSpaceModel, LtiError> {
    let x_ss = factors.x_state_space();
    let y_ss = factors.y_state_space();
    let ts = factors.parameterization().ts();
    let dy_inv = y_ss
        .d
        .clone()
        .try_inverse()
        .ok_or(LtiError::SingularDy)?;
    // Y^{-1}: (A - B Dy^{-1} C, B Dy^{-1}, -Dy^{-1} C, Dy^{-1})
    let a_inv = &y_ss.a - &y_ss.b * &dy_inv * &y_ss.c;
    let b_inv = &y_ss.b * &dy_inv;
    let c_inv = -(&dy_inv * &y_ss.c);
    // series: v = X u, then K u = Y^{-1} v
    let nx = x_ss.a.nrows();
    let ny = a_inv.nrows();
    let mut a = RMat::zeros(nx + ny, nx + ny);
    a.view_mut((0, 0), (nx, nx)).copy_from(&x_ss.a);
    a.view_mut((nx, 0), (ny, nx)).copy_from(&(&b_inv * &x_ss.c));
    a.view_mut((nx, nx), (ny, ny)).copy_from(&a_inv);
    let mut b = RMat::zeros(nx + ny, x_ss.b.ncols());
    b.view_mut((0, 0), (nx, x_ss.b.ncols())).copy_from(&x_ss.b);
    b.view_mut((nx, 0), (ny, x_ss.b.ncols()))
        .copy_from(&(&b_inv * &x_ss.d));
    let mut c = RMat::zeros(c_inv.nrows(), nx + ny);
    c.view_mut((0, 0), (c_inv.nrows(), nx))
        .copy_from(&(&dy_inv * &x_ss.c));
    c.view_mut((0, nx), (c_inv.nrows(), ny)).copy_from(&c_inv);
    let d = &dy_inv * &x_ss.d;
    StateSpaceModel::new(a, b, c, d, ts)
}

/// Writes a state-space model in the named-matrix text format:
///
/// ```text
/// statespace v1
/// ts <Ts>
/// A <rows> <cols>
/// <row entries ...>
/// B ... C ... D ...
/// ```
pub fn write_state_space<W: Write>(out: &mut W, model: &StateSpaceModel) -> Result<(), LtiError> {
    writeln!(out, "statespace v1")?;
    writeln!(out, "ts {}", fmt_f64(model.ts()))?;
    for (name, m) in [("A", model.a()), ("B", model.b()), ("C", model.c()), ("D", model.d())] {
        writeln!(out, "{} {} {}", name, m.nrows(), m.ncols())?;
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

/// Reads a model written by [`write_state_space`].
pub fn read_state_space<R: BufRead>(input: R) -> Result<StateSpaceModel, LtiError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| LtiError::Parse("empty file".into()))??;
    if header.trim() != "statespace v1" {
        return Err(LtiError::Parse(format!("unexpected header: {header}")));
    }
    let ts_line = lines
        .next()
        .ok_or_else(|| LtiError::Parse("missing ts".into()))??;
    let ts: f64 = ts_line
        .strip_prefix("ts ")
        .ok_or_else(|| LtiError::Parse("missing ts prefix".into()))?
        .trim()
        .parse()
        .map_err(|e| LtiError::Parse(format!("ts: {e}")))?;
    let mut mats: BTreeMap<String, RMat> = BTreeMap::new();
    let mut pending: Option<(String, usize, usize, Vec<f64>)> = None;
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let starts_matrix = ["A ", "B ", "C ", "D "].iter().any(|p| t.starts_with(p));
        if starts_matrix && pending.as_ref().map_or(true, |(_, r, c, v)| v.len() == r * c) {
            if let Some((name, r, c, v)) = pending.take() {
                mats.insert(name, RMat::from_row_slice(r, c, &v));
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(LtiError::Parse(format!("bad matrix header: {t}")));
            }
            let r: usize = parts[1].parse().map_err(|e| LtiError::Parse(format!("{e}")))?;
            let c: usize = parts[2].parse().map_err(|e| LtiError::Parse(format!("{e}")))?;
            pending = Some((parts[0].to_string(), r, c, Vec::with_capacity(r * c)));
        } else if let Some((_, _, _, v)) = pending.as_mut() {
            v.extend(parse_floats(t).map_err(|e| LtiError::Parse(format!("{e}")))?);
        } else {
            return Err(LtiError::Parse(format!("unexpected line: {t}")));
        }
    }
    if let Some((name, r, c, v)) = pending.take() {
        if v.len() != r * c {
            return Err(LtiError::Parse(format!("matrix {name}: expected {} entries, got {}", r * c, v.len())));
        }
        mats.insert(name, RMat::from_row_slice(r, c, &v));
    }
    let take = |n: &str| {
        mats.get(n)
            .cloned()
            .ok_or_else(|| LtiError::Parse(format!("missing matrix {n}")))
    };
    StateSpaceModel::new(take("A")?, take("B")?, take("C")?, take("D")?, ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frf::make_log_grid;

    fn scalar_plant(a: f64, ts: f64) -> PartitionedPlant {
        // x+ = a x + u, y = x (no disturbance/performance channels)
        let model = StateSpaceModel::new(
            RMat::from_element(1, 1, a),
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::zeros(1, 1),
            ts,
        )
        .unwrap();
        PartitionedPlant::new(model, 0, 0).unwrap()
    }

    #[test]
    fn assemble_single_node_scalar() {
        let dims = vec![NodeDims {
            states: 1,
            controls: 0,
            measurements: 0,
            disturbances: 0,
            performances: 0,
        }];
        let mut sys = NetworkedSystem::new(dims, &[], 1.0).unwrap();
        sys.set_a(0, 0, RMat::from_element(1, 1, 0.7)).unwrap();
        let plant = assemble_networked(&sys).unwrap();
        assert_eq!(plant.model().n_states(), 1);
        assert_eq!(plant.model().a()[(0, 0)], 0.7);
    }

    #[test]
    fn assemble_decoupled_nodes_block_diagonal() {
        let dims = vec![
            NodeDims { states: 2, controls: 0, measurements: 0, disturbances: 0, performances: 0 };
            2
        ];
        let mut sys = NetworkedSystem::new(dims, &[], 1.0).unwrap();
        sys.set_a(0, 0, RMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        sys.set_a(1, 1, RMat::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0])).unwrap();
        let plant = assemble_networked(&sys).unwrap();
        let a = plant.model().a();
        assert_eq!(a[(0, 1)], 2.0);
        assert_eq!(a[(2, 3)], 6.0);
        assert_eq!(a.view((0, 2), (2, 2)).iter().map(|x| x.abs()).sum::<f64>(), 0.0);
        assert_eq!(a.view((2, 0), (2, 2)).iter().map(|x| x.abs()).sum::<f64>(), 0.0);
    }

    #[test]
    fn assemble_rejects_non_neighbor_block() {
        let dims = vec![
            NodeDims { states: 1, controls: 0, measurements: 0, disturbances: 0, performances: 0 };
            2
        ];
        let mut sys = NetworkedSystem::new(dims, &[], 1.0).unwrap();
        assert!(matches!(
            sys.set_a(0, 1, RMat::from_element(1, 1, 1.0)),
            Err(LtiError::NotANeighbor(0, 1))
        ));
    }

    #[test]
    fn power_grid_blocks_match_hand_values() {
        // interior bus, two neighbors: k_i = 40 -> A_ii = [[1, 0.02], [-0.4, 0.98]]
        let sys = build_power_grid(&PowerGridParams::default()).unwrap();
        let a22 = &sys.a[&(2, 2)];
        assert!((a22[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((a22[(0, 1)] - 0.02).abs() < 1e-15);
        assert!((a22[(1, 0)] + 0.4).abs() < 1e-12);
        assert!((a22[(1, 1)] - 0.98).abs() < 1e-15);
        // coupling block: (20/2)*0.02 = 0.2
        let a21 = &sys.a[&(2, 1)];
        assert!((a21[(1, 0)] - 0.2).abs() < 1e-15);
        assert_eq!(a21[(0, 0)], 0.0);
        // B2 = [0; Ts/m] = [0; 0.01]
        let b2 = &sys.b2[&2];
        assert_eq!(b2[(0, 0)], 0.0);
        assert!((b2[(1, 0)] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn power_grid_assembles_to_tridiagonal_ten_states() {
        let plant = assemble_networked(&build_power_grid(&PowerGridParams::default()).unwrap()).unwrap();
        assert_eq!(plant.model().n_states(), 10);
        assert_eq!(plant.n_disturbances(), 5);
        assert_eq!(plant.n_controls(), 5);
        assert_eq!(plant.n_performance(), 10);
        assert_eq!(plant.n_measurements(), 5);
        let a = plant.model().a();
        // block (i, j) vanishes for |i - j| > 1
        for i in 0..5 {
            for j in 0..5 {
                let blk = a.view((2 * i, 2 * j), (2, 2));
                let nrm = blk.iter().map(|x| x.abs()).sum::<f64>();
                if (i as i64 - j as i64).abs() > 1 {
                    assert_eq!(nrm, 0.0, "block ({i}, {j}) should be zero");
                } else {
                    assert!(nrm > 0.0, "block ({i}, {j}) should be populated");
                }
            }
        }
    }

    #[test]
    fn power_grid_open_loop_stable() {
        let plant = assemble_networked(&build_power_grid(&PowerGridParams::default()).unwrap()).unwrap();
        let rho = plant.model().spectral_radius().unwrap();
        assert!(rho < 1.0, "rho = {rho}");
    }

    #[test]
    fn simulate_zero_inputs_zero_trace() {
        let plant = scalar_plant(0.5, 1.0);
        let u = vec![DVector::zeros(1); 10];
        let w = vec![DVector::zeros(0); 10];
        let trace = simulate(&plant, &u, &w, &DVector::zeros(1), 10).unwrap();
        assert!(trace.x.iter().all(|x| x[0] == 0.0));
        assert!(trace.y.iter().all(|y| y[0] == 0.0));
    }

    #[test]
    fn simulate_integrator_impulse() {
        let plant = scalar_plant(1.0, 1.0);
        let mut u = vec![DVector::zeros(1); 10];
        u[0][0] = 1.0;
        let w = vec![DVector::zeros(0); 10];
        let trace = simulate(&plant, &u, &w, &DVector::zeros(1), 10).unwrap();
        assert_eq!(trace.x[0][0], 0.0);
        for t in 1..10 {
            assert_eq!(trace.x[t][0], 1.0);
        }
    }

    #[test]
    fn simulate_deterministic() {
        let plant = assemble_networked(&build_power_grid(&PowerGridParams::default()).unwrap()).unwrap();
        let mut w = vec![DVector::zeros(5); 50];
        w[0][0] = 1.0;
        let u = vec![DVector::zeros(5); 50];
        let x0 = DVector::zeros(10);
        let t1 = simulate(&plant, &u, &w, &x0, 50).unwrap();
        let t2 = simulate(&plant, &u, &w, &x0, 50).unwrap();
        for (a, b) in t1.z.iter().zip(&t2.z) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn frequency_response_static_model() {
        let model = StateSpaceModel::new(
            RMat::zeros(0, 0),
            RMat::zeros(0, 2),
            RMat::zeros(2, 0),
            RMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            0.1,
        )
        .unwrap();
        let grid = make_log_grid(0.1, 10.0, 5, 0.1).unwrap();
        let frf = frequency_response(&model, &grid).unwrap();
        for s in frf.samples() {
            assert!((s[(0, 1)] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn frequency_response_first_order_analytic() {
        // 1/(z - 0.5): value 2 at omega = 0+, -2/3 at Nyquist
        let ts = 1.0;
        let model = StateSpaceModel::new(
            RMat::from_element(1, 1, 0.5),
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::zeros(1, 1),
            ts,
        )
        .unwrap();
        let pi = std::f64::consts::PI;
        let grid =
            crate::frf::FrequencyGrid::from_omegas(vec![1e-9, pi * (1.0 - 1e-12)], ts, crate::frf::Spacing::Custom)
                .unwrap();
        let frf = frequency_response(&model, &grid).unwrap();
        assert!((frf.at(0)[(0, 0)] - Complex64::new(2.0, 0.0)).norm() < 1e-6);
        assert!((frf.at(1)[(0, 0)] - Complex64::new(-2.0 / 3.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn frequency_response_pole_on_grid_rejected() {
        // integrator has a pole at z = 1, i.e. omega = 0
        let ts = 1.0;
        let model = StateSpaceModel::new(
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::zeros(1, 1),
            ts,
        )
        .unwrap();
        let grid = crate::frf::FrequencyGrid::from_omegas(vec![1e-18], ts, crate::frf::Spacing::Custom).unwrap();
        assert!(matches!(
            frequency_response(&model, &grid),
            Err(LtiError::PoleOnGrid(_))
        ));
    }

    #[test]
    fn closed_loop_radius_zero_controller() {
        let plant = assemble_networked(&build_power_grid(&PowerGridParams::default()).unwrap()).unwrap();
        let zero_k = StateSpaceModel::new(RMat::zeros(0, 0), RMat::zeros(0, 5), RMat::zeros(5, 0), RMat::zeros(5, 5), 0.02).unwrap();
        let rho = closed_loop_spectral_radius(&plant, &zero_k).unwrap();
        let open = plant.model().spectral_radius().unwrap();
        assert!((rho - open).abs() < 1e-12);
    }

    #[test]
    fn closed_loop_radius_scalar_cancellation() {
        // x+ = 0.5 x + u, y = x, static K = -0.5 -> closed-loop A = 0
        let model = StateSpaceModel::new(
            RMat::from_element(1, 1, 0.5),
            RMat::from_element(1, 1, 1.0),
            RMat::from_element(1, 1, 1.0),
            RMat::zeros(1, 1),
            1.0,
        )
        .unwrap();
        let plant = PartitionedPlant::new(model, 0, 0).unwrap();
        let k = StateSpaceModel::new(RMat::zeros(0, 0), RMat::zeros(0, 1), RMat::zeros(1, 0), RMat::from_element(1, 1, -0.5), 1.0).unwrap();
        let rho = closed_loop_spectral_radius(&plant, &k).unwrap();
        assert!(rho < 1e-12);
    }

    #[test]
    fn state_space_text_roundtrip() {
        let model = StateSpaceModel::new(
            RMat::from_row_slice(2, 2, &[1.0, 0.02, -0.4, 0.98]),
            RMat::from_column_slice(2, 1, &[0.0, 0.01]),
            RMat::from_row_slice(1, 2, &[1.0, 0.0]),
            RMat::zeros(1, 1),
            0.02,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_state_space(&mut buf, &model).unwrap();
        let back = read_state_space(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(&back, &model);
    }
}
