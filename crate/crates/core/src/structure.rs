//! Communication sparsity patterns, the linearly parameterized factor
//! classes for left-factorized controllers `K = Y^{-1} X`, their realization
//! on frequency grids as linear maps of the decision vector, and the
//! polynomial left-factorization of a given rational controller.

use crate::frf::FrequencyGrid;
use crate::hermitian::CMat;
use crate::hermitian::RMat;
use crate::textio::fmt_f64;
use num_complex::Complex64;
use std::fmt;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("edge ({0}, {1}) out of node range")]
    BadEdge(usize, usize),
    #[error("basis pole must satisfy |pole| < 1, got {0}")]
    BadPole(f64),
    #[error("entry order must be at least 1")]
    BadOrder,
    #[error("delay {delay} exceeds entry order {order} at entry ({row}, {col})")]
    DelayExceedsOrder { row: usize, col: usize, delay: u32, order: usize },
    #[error("decision vector length {got}, parameterization expects {expected}")]
    ThetaLength { got: usize, expected: usize },
    #[error("entry ({0}, {1}) is improper: numerator degree exceeds denominator degree")]
    ImproperEntry(usize, usize),
    #[error("pattern is not a superset: entry ({0}, {1}) is more restrictive than the target")]
    NotASuperset(usize, usize),
    #[error("pattern parse error: {0}")]
    Parse(String),
}

/// Kind of a controller entry: no link, immediate link, or a link with a
/// communication delay of at least `k` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Zero,
    Free,
    Delayed(u32),
}

impl EntryKind {
    /// Permissiveness rank: `Zero < Delayed(k) < Delayed(k-1) < ... < Free`.
    fn rank(self) -> i64 {
        match self {
            EntryKind::Zero => i64::MIN,
            EntryKind::Free => i64::MAX,
            EntryKind::Delayed(k) => -(k as i64),
        }
    }

    pub fn permits(self, other: EntryKind) -> bool {
        self.rank() >= other.rank()
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryKind::Zero => write!(f, "0"),
            EntryKind::Free => write!(f, "x"),
            EntryKind::Delayed(k) => write!(f, "z^-{k}"),
        }
    }
}

impl std::str::FromStr for EntryKind {
    type Err = StructureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t {
            "0" => Ok(EntryKind::Zero),
            "x" => Ok(EntryKind::Free),
            _ => {
                let k = t
                    .strip_prefix("z^-")
                    .ok_or_else(|| StructureError::Parse(format!("unknown entry kind: {t}")))?
                    .parse::<u32>()
                    .map_err(|e| StructureError::Parse(format!("{t}: {e}")))?;
                if k == 0 {
                    return Err(StructureError::Parse("delay must be >= 1".into()));
                }
                Ok(EntryKind::Delayed(k))
            }
        }
    }
}

/// Rows index controller outputs, columns controller inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    rows: usize,
    cols: usize,
    entries: Vec<EntryKind>,
}

impl SparsityPattern {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![EntryKind::Zero; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> EntryKind {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, kind: EntryKind) {
        self.entries[i * self.cols + j] = kind;
    }

    /// Whether every entry of `self` permits at least what `target` permits.
    pub fn is_superset_of(&self, target: &SparsityPattern) -> Result<(), StructureError> {
        if self.rows != target.rows || self.cols != target.cols {
            return Err(StructureError::Parse("pattern dimensions differ".into()));
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.get(i, j).permits(target.get(i, j)) {
                    return Err(StructureError::NotASuperset(i, j));
                }
            }
        }
        Ok(())
    }

    /// Parses rows of entry tokens, e.g. `["x z^-1 0", "z^-1 x z^-1", ...]`.
    pub fn parse_rows(rows: &[String]) -> Result<Self, StructureError> {
        let r = rows.len();
        if r == 0 {
            return Err(StructureError::Parse("empty pattern".into()));
        }
        let mut entries = Vec::new();
        let mut cols = None;
        for row in rows {
            let kinds: Result<Vec<EntryKind>, _> =
                row.split_whitespace().map(|t| t.parse::<EntryKind>()).collect();
            let kinds = kinds?;
            match cols {
                None => cols = Some(kinds.len()),
                Some(c) if c != kinds.len() => {
                    return Err(StructureError::Parse("ragged pattern rows".into()))
                }
                _ => {}
            }
            entries.extend(kinds);
        }
        Ok(Self { rows: r, cols: cols.unwrap(), entries })
    }

    pub fn render_rows(&self) -> Vec<String> {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.get(i, j).to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }
}

/// Builds a pattern from a directed communication graph: the diagonal is
/// `Free`; an edge `j -> i` opens entry `(i, j)` with the given delay
/// (`Free` when the delay is zero); everything else is `Zero`.
pub fn pattern_from_graph(
    nodes: usize,
    edges: &[(usize, usize, u32)],
) -> Result<SparsityPattern, StructureError> {
    let mut p = SparsityPattern::zeros(nodes, nodes);
    for i in 0..nodes {
        p.set(i, i, EntryKind::Free);
    }
    for &(from, to, delay) in edges {
        if from >= nodes || to >= nodes {
            return Err(StructureError::BadEdge(from, to));
        }
        let kind = if delay == 0 { EntryKind::Free } else { EntryKind::Delayed(delay) };
        p.set(to, from, kind);
    }
    Ok(p)
}

/// Chain graph with bidirectional neighbor links, all with the same delay.
pub fn chain_pattern(nodes: usize, delay: u32) -> SparsityPattern {
    let mut edges = Vec::new();
    for i in 0..nodes.saturating_sub(1) {
        edges.push((i, i + 1, delay));
        edges.push((i + 1, i, delay));
    }
    pattern_from_graph(nodes, &edges).expect("chain edges are in range")
}

/// Which factor a decision-vector slot belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    X,
    Y,
}

/// One parameterized scalar entry of a factor.
#[derive(Debug, Clone)]
pub struct EntrySlot {
    pub factor: Factor,
    pub row: usize,
    pub col: usize,
    pub theta_offset: usize,
    /// Number of free numerator-basis coefficients (leading coefficients are
    /// dropped to enforce delays beyond one step).
    pub b_len: usize,
    /// Whether the entry has a free feedthrough coefficient.
    pub has_d: bool,
}

impl EntrySlot {
    pub fn width(&self) -> usize {
        self.b_len + usize::from(self.has_d)
    }
}

/// Linearly parameterized factor classes.
///
/// Every non-`Zero` pattern entry of `X`, and every diagonal entry of `Y`,
/// is a scalar transfer function with denominator `(z - pole)^order`:
/// feedthrough `d` plus numerator coefficients `b_1..b_order` over the fixed
/// stable basis `phi_s(z) = z^{order-s} / (z - pole)^order`. `Delayed(k)`
/// entries drop `d` and the leading `k - 1` numerator coefficients, which
/// enforces a relative degree of at least `k`. The decision vector collects
/// all free coefficients, `X` entries first (row-major), then the `Y`
/// diagonal; factor evaluation is linear in the decision vector, and the
/// zero controller (`X = 0`, `Y = I`) is the vector with ones in the `Y`
/// feedthrough slots.
#[derive(Debug, Clone)]
pub struct FactorParameterization {
    pattern: SparsityPattern,
    order: usize,
    pole: f64,
    ts: f64,
    entries: Vec<EntrySlot>,
    theta_len: usize,
}

/// Decision vector of free factor coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector(pub Vec<f64>);

impl DecisionVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// CSV export `index,value`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "index,value")?;
        for (i, v) in self.0.iter().enumerate() {
            writeln!(out, "{},{}", i, fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(input: R) -> Result<Self, StructureError> {
        let mut vals = Vec::new();
        for (ln, line) in input.lines().enumerate() {
            let line = line.map_err(|e| StructureError::Parse(e.to_string()))?;
            if ln == 0 || line.trim().is_empty() {
                continue;
            }
            let (idx, val) = line
                .split_once(',')
                .ok_or_else(|| StructureError::Parse(format!("line {}: missing comma", ln + 1)))?;
            let idx: usize = idx.parse().map_err(|e| StructureError::Parse(format!("{e}")))?;
            if idx != vals.len() {
                return Err(StructureError::Parse(format!("indices out of order at {idx}")));
            }
            vals.push(val.trim().parse::<f64>().map_err(|e| StructureError::Parse(format!("{e}")))?);
        }
        Ok(Self(vals))
    }
}

/// Builds the factor parameterization for a pattern with per-entry basis
/// order `order` and basis pole `pole` (`|pole| < 1`).
pub fn build_factor_parameterization(
    pattern: &SparsityPattern,
    order: usize,
    pole: f64,
    ts: f64,
) -> Result<FactorParameterization, StructureError> {
    if order == 0 {
        return Err(StructureError::BadOrder);
    }
    if !(pole.abs() < 1.0) {
        return Err(StructureError::BadPole(pole));
    }
    let mut entries = Vec::new();
    let mut off = 0usize;
    for i in 0..pattern.rows() {
        for j in 0..pattern.cols() {
            let (b_len, has_d) = match pattern.get(i, j) {
                EntryKind::Zero => continue,
                EntryKind::Free => (order, true),
                EntryKind::Delayed(k) => {
                    let k = k as usize;
                    if k > order {
                        return Err(StructureError::DelayExceedsOrder {
                            row: i,
                            col: j,
                            delay: k as u32,
                            order,
                        });
                    }
                    (order - (k - 1), false)
                }
            };
            let slot = EntrySlot { factor: Factor::X, row: i, col: j, theta_offset: off, b_len, has_d };
            off += slot.width();
            entries.push(slot);
        }
    }
    for i in 0..pattern.rows() {
        let slot = EntrySlot {
            factor: Factor::Y,
            row: i,
            col: i,
            theta_offset: off,
            b_len: order,
            has_d: true,
        };
        off += slot.width();
        entries.push(slot);
    }
    Ok(FactorParameterization {
        pattern: pattern.clone(),
        order,
        pole,
        ts,
        entries,
        theta_len: off,
    })
}

impl FactorParameterization {
    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn pole(&self) -> f64 {
        self.pole
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn entries(&self) -> &[EntrySlot] {
        &self.entries
    }

    pub fn theta_len(&self) -> usize {
        self.theta_len
    }

    pub fn n_outputs(&self) -> usize {
        self.pattern.rows()
    }

    pub fn n_inputs(&self) -> usize {
        self.pattern.cols()
    }

    /// Rescales each subcontroller row so its `Y` feedthrough equals one.
    ///
    /// `K = Y^{-1} X` is invariant under a common scale on a row of `(X, Y)`,
    /// so this changes nothing about the controller while keeping factor
    /// coefficients at a bounded scale across iterations. Rows whose
    /// feedthrough is tiny are left untouched.
    pub fn normalize_row_scales(&self, theta: &mut DecisionVector) {
        for y_slot in self.entries.iter().filter(|s| s.factor == Factor::Y) {
            if !y_slot.has_d {
                continue;
            }
            let c = theta.0[y_slot.theta_offset + y_slot.b_len];
            if c.abs() <= 1e-6 || c == 1.0 {
                continue;
            }
            for slot in self.entries.iter().filter(|s| s.row == y_slot.row) {
                for v in 0..slot.width() {
                    theta.0[slot.theta_offset + v] /= c;
                }
            }
        }
    }

    /// Decision vector of the zero controller: `X = 0`, `Y = I`.
    pub fn zero_controller_theta(&self) -> DecisionVector {
        let mut th = vec![0.0; self.theta_len];
        for slot in &self.entries {
            if slot.factor == Factor::Y && slot.has_d {
                th[slot.theta_offset + slot.b_len] = 1.0;
            }
        }
        DecisionVector(th)
    }

    /// Basis values `[phi_1(z), ..., phi_order(z)]` with
    /// `phi_s(z) = z^{order - s} / (z - pole)^order`.
    fn basis_at(&self, z: Complex64) -> Vec<Complex64> {
        let denom = (z - Complex64::new(self.pole, 0.0)).powu(self.order as u32);
        (1..=self.order)
            .map(|s| z.powu((self.order - s) as u32) / denom)
            .collect()
    }

    /// Evaluates the slot's scalar transfer at `z` for coefficient slice
    /// `coeffs` (numerator coefficients then optional feedthrough).
    fn slot_value(&self, slot: &EntrySlot, coeffs: &[f64], basis: &[Complex64]) -> Complex64 {
        let skip = self.order - slot.b_len;
        let mut v = Complex64::new(0.0, 0.0);
        for (s, &c) in coeffs[..slot.b_len].iter().enumerate() {
            v += basis[skip + s] * c;
        }
        if slot.has_d {
            v += Complex64::new(coeffs[slot.b_len], 0.0);
        }
        v
    }

    /// Evaluates `X(e^{j w Ts})` and `Y(e^{j w Ts})` for a decision vector.
    pub fn eval_factors(
        &self,
        theta: &DecisionVector,
        z: Complex64,
    ) -> Result<(CMat, CMat), StructureError> {
        if theta.len() != self.theta_len {
            return Err(StructureError::ThetaLength { got: theta.len(), expected: self.theta_len });
        }
        let basis = self.basis_at(z);
        let mut x = CMat::zeros(self.pattern.rows(), self.pattern.cols());
        let mut y = CMat::zeros(self.pattern.rows(), self.pattern.rows());
        for slot in &self.entries {
            let coeffs = &theta.as_slice()[slot.theta_offset..slot.theta_offset + slot.width()];
            let v = self.slot_value(slot, coeffs, &basis);
            match slot.factor {
                Factor::X => x[(slot.row, slot.col)] += v,
                Factor::Y => y[(slot.row, slot.col)] += v,
            }
        }
        Ok((x, y))
    }

    /// State-space matrices of a factor for a given decision vector, in
    /// per-entry observable canonical form (fixed `A`, `C`; free `B`, `D`).
    pub fn factor_state_space(&self, theta: &DecisionVector, factor: Factor) -> FactorStateSpace {
        assert_eq!(theta.len(), self.theta_len, "theta length");
        let rows = self.pattern.rows();
        let cols = match factor {
            Factor::X => self.pattern.cols(),
            Factor::Y => self.pattern.rows(),
        };
        let slots: Vec<&EntrySlot> = self.entries.iter().filter(|s| s.factor == factor).collect();
        let r = self.order;
        let n = slots.len() * r;
        let mut a = RMat::zeros(n, n);
        let mut b = RMat::zeros(n, cols);
        let mut c = RMat::zeros(rows, n);
        let mut d = RMat::zeros(rows, cols);
        // denominator (z - pole)^r = z^r + alpha_1 z^{r-1} + ... + alpha_r
        let poly = Polynomial::power_of_linear(self.pole, r);
        let alphas: Vec<f64> = (0..=r).map(|k| poly.0[r - k]).collect();
        for (si, slot) in slots.iter().enumerate() {
            let base = si * r;
            // observable canonical: A = [[-a1, 1, 0..], [-a2, 0, 1..], .., [-ar, 0..0]]
            for k in 0..r {
                a[(base + k, base)] = -alphas[k + 1];
                if k + 1 < r {
                    a[(base + k, base + k + 1)] = 1.0;
                }
            }
            let coeffs = &theta.as_slice()[slot.theta_offset..slot.theta_offset + slot.width()];
            let skip = r - slot.b_len;
            for (s, &cv) in coeffs[..slot.b_len].iter().enumerate() {
                b[(base + skip + s, slot.col)] = cv;
            }
            if slot.has_d {
                d[(slot.row, slot.col)] = coeffs[slot.b_len];
            }
            c[(slot.row, base)] = 1.0;
        }
        FactorStateSpace { a, b, c, d }
    }
}

/// Plain state-space matrices of one factor.
#[derive(Debug, Clone)]
pub struct FactorStateSpace {
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
}

/// Per-frequency linear maps `theta -> X(e^{jw})`, `theta -> Y(e^{jw})`.
///
/// `var_value(v, k)` is the factor entry contributed by unit decision
/// variable `v` at grid index `k`; evaluation at any `theta` is the linear
/// combination, exact for all `theta`.
#[derive(Debug, Clone)]
pub struct RealizedFactors {
    param: FactorParameterization,
    grid: FrequencyGrid,
    /// `values[v][k]` for decision variable `v` at grid index `k`.
    values: Vec<Vec<Complex64>>,
    /// Slot index for each decision variable.
    var_slot: Vec<usize>,
}

/// Samples the factor basis on the grid, yielding exact linear maps from the
/// decision vector to `(X, Y)` samples.
pub fn realize_factors(param: &FactorParameterization, grid: &FrequencyGrid) -> RealizedFactors {
    let nth = param.theta_len();
    let mut values = vec![Vec::with_capacity(grid.len()); nth];
    let mut var_slot = vec![0usize; nth];
    for (si, slot) in param.entries().iter().enumerate() {
        for v in 0..slot.width() {
            var_slot[slot.theta_offset + v] = si;
        }
    }
    for k in 0..grid.len() {
        let z = grid.z(k);
        let basis = param.basis_at(z);
        for slot in param.entries() {
            let skip = param.order() - slot.b_len;
            for s in 0..slot.b_len {
                values[slot.theta_offset + s].push(basis[skip + s]);
            }
            if slot.has_d {
                values[slot.theta_offset + slot.b_len].push(Complex64::new(1.0, 0.0));
            }
        }
    }
    RealizedFactors { param: param.clone(), grid: grid.clone(), values, var_slot }
}

impl RealizedFactors {
    pub fn parameterization(&self) -> &FactorParameterization {
        &self.param
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn theta_len(&self) -> usize {
        self.param.theta_len()
    }

    /// Scalar basis value of decision variable `v` at grid index `k`.
    pub fn var_value(&self, v: usize, k: usize) -> Complex64 {
        self.values[v][k]
    }

    /// Slot (factor, row, col) owning decision variable `v`.
    pub fn var_slot(&self, v: usize) -> &EntrySlot {
        &self.param.entries()[self.var_slot[v]]
    }

    /// Evaluates `(X, Y)` at grid index `k` for a decision vector.
    pub fn factors_at(&self, theta: &DecisionVector, k: usize) -> Result<(CMat, CMat), StructureError> {
        if theta.len() != self.theta_len() {
            return Err(StructureError::ThetaLength { got: theta.len(), expected: self.theta_len() });
        }
        let rows = self.param.pattern().rows();
        let cols = self.param.pattern().cols();
        let mut x = CMat::zeros(rows, cols);
        let mut y = CMat::zeros(rows, rows);
        for (v, &tv) in theta.as_slice().iter().enumerate() {
            if tv == 0.0 {
                continue;
            }
            let slot = self.var_slot(v);
            let contrib = self.values[v][k] * tv;
            match slot.factor {
                Factor::X => x[(slot.row, slot.col)] += contrib,
                Factor::Y => y[(slot.row, slot.col)] += contrib,
            }
        }
        Ok((x, y))
    }
}

/// Controller factors: a parameterization plus a concrete decision vector.
#[derive(Debug, Clone)]
pub struct ControllerFactors {
    param: FactorParameterization,
    theta: DecisionVector,
}

impl ControllerFactors {
    pub fn new(param: FactorParameterization, theta: DecisionVector) -> Result<Self, StructureError> {
        if theta.len() != param.theta_len() {
            return Err(StructureError::ThetaLength { got: theta.len(), expected: param.theta_len() });
        }
        Ok(Self { param, theta })
    }

    pub fn parameterization(&self) -> &FactorParameterization {
        &self.param
    }

    pub fn theta(&self) -> &DecisionVector {
        &self.theta
    }

    pub fn x_state_space(&self) -> FactorStateSpace {
        self.param.factor_state_space(&self.theta, Factor::X)
    }

    pub fn y_state_space(&self) -> FactorStateSpace {
        self.param.factor_state_space(&self.theta, Factor::Y)
    }

    /// `(X, Y)` at a unit-circle point.
    pub fn eval(&self, z: Complex64) -> (CMat, CMat) {
        self.param
            .eval_factors(&self.theta, z)
            .expect("theta length checked at construction")
    }

    /// Controller samples `K = Y^{-1} X` on a grid.
    pub fn controller_samples(&self, grid: &FrequencyGrid) -> Result<Vec<CMat>, StructureError> {
        let mut out = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let (x, y) = self.eval(grid.z(k));
            let ky = y
                .lu()
                .solve(&x)
                .ok_or_else(|| StructureError::Parse(format!("Y singular at grid index {k}")))?;
            out.push(ky);
        }
        Ok(out)
    }

    /// Smallest singular value of `Y` over the grid.
    pub fn min_y_singular_value(&self, grid: &FrequencyGrid) -> f64 {
        let mut min = f64::INFINITY;
        for k in 0..grid.len() {
            let (_, y) = self.eval(grid.z(k));
            if let Ok((smin, _)) = crate::hermitian::extreme_singular_values(&y) {
                min = min.min(smin);
            }
        }
        min
    }
}

/// Real polynomial, coefficients in ascending powers; zero polynomial is `[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Self(vec![c])
    }

    pub fn degree(&self) -> usize {
        let mut d = self.0.len().saturating_sub(1);
        while d > 0 && self.0[d] == 0.0 {
            d -= 1;
        }
        d
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Polynomial::constant(0.0);
        }
        let mut out = vec![0.0; self.degree() + other.degree() + 1];
        for (i, &a) in self.0.iter().enumerate().take(self.degree() + 1) {
            for (j, &b) in other.0.iter().enumerate().take(other.degree() + 1) {
                out[i + j] += a * b;
            }
        }
        Polynomial(out)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.0.iter().rev() {
            acc = acc * z + Complex64::new(c, 0.0);
        }
        acc
    }

    /// `(z - root)^n`
    pub fn power_of_linear(root: f64, n: usize) -> Polynomial {
        let mut p = Polynomial::constant(1.0);
        let lin = Polynomial(vec![-root, 1.0]);
        for _ in 0..n {
            p = p.mul(&lin);
        }
        p
    }
}

/// Scalar rational function `num/den`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFn {
    pub num: Polynomial,
    pub den: Polynomial,
}

impl RationalFn {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.num.eval(z) / self.den.eval(z)
    }

    pub fn zero() -> Self {
        Self { num: Polynomial::constant(0.0), den: Polynomial::constant(1.0) }
    }
}

/// Entry-wise rational transfer matrix.
#[derive(Debug, Clone)]
pub struct RationalMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<RationalFn>,
}

impl RationalMatrix {
    pub fn get(&self, i: usize, j: usize) -> &RationalFn {
        &self.entries[i * self.cols + j]
    }

    pub fn eval(&self, z: Complex64) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(z))
    }
}

/// Explicit rational factors `Y = y(z) I`, `X = y(z) K`.
#[derive(Debug, Clone)]
pub struct RationalFactors {
    pub y: RationalFn,
    pub x: RationalMatrix,
}

impl RationalFactors {
    /// `K = Y^{-1} X` evaluated at `z`.
    pub fn controller_at(&self, z: Complex64) -> CMat {
        let yv = self.y.eval(z);
        self.x.eval(z).map(|v| v / yv)
    }

    pub fn y_at(&self, z: Complex64) -> CMat {
        CMat::identity(self.x.rows, self.x.rows) * self.y.eval(z)
    }

    pub fn x_at(&self, z: Complex64) -> CMat {
        self.x.eval(z)
    }
}

/// Left-factorizes a proper rational controller as `K = Y^{-1} X` with
/// `Y = y(z) I`, `y = prod a_ij / (z - rho)^d`, `d = deg prod a_ij`, and
/// `X_ij = y K_ij`; both factors are stable and proper for `|rho| < 1`.
pub fn left_factorize_rational(
    k: &RationalMatrix,
    rho: f64,
) -> Result<RationalFactors, StructureError> {
    if !(rho.abs() < 1.0) {
        return Err(StructureError::BadPole(rho));
    }
    let mut denom_product = Polynomial::constant(1.0);
    for i in 0..k.rows {
        for j in 0..k.cols {
            let e = k.get(i, j);
            if e.num.degree() > e.den.degree() && !e.num.is_zero() {
                return Err(StructureError::ImproperEntry(i, j));
            }
            denom_product = denom_product.mul(&e.den);
        }
    }
    let d = denom_product.degree();
    let lambda = Polynomial::power_of_linear(rho, d);
    let y = RationalFn { num: denom_product.clone(), den: lambda.clone() };
    let mut entries = Vec::with_capacity(k.rows * k.cols);
    for i in 0..k.rows {
        for j in 0..k.cols {
            let e = k.get(i, j);
            if e.num.is_zero() {
                entries.push(RationalFn { num: Polynomial::constant(0.0), den: lambda.clone() });
                continue;
            }
            // y * K_ij = (prod a / lambda) * (b_ij / a_ij): cancel a_ij exactly
            // by multiplying b_ij with the product of the other denominators.
            let mut other = Polynomial::constant(1.0);
            for ii in 0..k.rows {
                for jj in 0..k.cols {
                    if (ii, jj) != (i, j) {
                        other = other.mul(&k.get(ii, jj).den);
                    }
                }
            }
            entries.push(RationalFn { num: e.num.mul(&other), den: lambda.clone() });
        }
    }
    Ok(RationalFactors {
        y,
        x: RationalMatrix { rows: k.rows, cols: k.cols, entries },
    })
}

/// Pattern-membership evidence for realized controller factors.
#[derive(Debug, Clone)]
pub struct PatternReport {
    /// Largest magnitude over the grid among pattern-`Zero` entries of `K`.
    pub zero_max: f64,
    /// `(row, col, max_magnitude)` for flagged `Zero` entries.
    pub zero_violations: Vec<(usize, usize, f64)>,
    /// `(row, col, feedthrough)` for `Delayed` entries with nonzero feedthrough.
    pub delay_violations: Vec<(usize, usize, f64)>,
}

impl PatternReport {
    pub fn ok(&self) -> bool {
        self.zero_violations.is_empty() && self.delay_violations.is_empty()
    }
}

/// Verifies that `K = Y^{-1} X` respects the pattern: `Zero` entries stay
/// below `tol` in magnitude on the grid and `Delayed` entries have zero
/// direct feedthrough in the realization.
pub fn verify_pattern(
    factors: &ControllerFactors,
    pattern: &SparsityPattern,
    grid: &FrequencyGrid,
    tol: f64,
) -> Result<PatternReport, StructureError> {
    let samples = factors.controller_samples(grid)?;
    let mut zero_max = 0.0f64;
    let mut zero_violations = Vec::new();
    for i in 0..pattern.rows() {
        for j in 0..pattern.cols() {
            if pattern.get(i, j) != EntryKind::Zero {
                continue;
            }
            let mag = samples.iter().map(|s| s[(i, j)].norm()).fold(0.0f64, f64::max);
            zero_max = zero_max.max(mag);
            if mag > tol {
                zero_violations.push((i, j, mag));
            }
        }
    }
    // feedthrough D_K = D_Y^{-1} D_X
    let dx = factors.x_state_space().d;
    let dy = factors.y_state_space().d;
    let dk = dy
        .try_inverse()
        .ok_or_else(|| StructureError::Parse("D_Y singular".into()))?
        * dx;
    let mut delay_violations = Vec::new();
    for i in 0..pattern.rows() {
        for j in 0..pattern.cols() {
            if let EntryKind::Delayed(_) = pattern.get(i, j) {
                if dk[(i, j)].abs() > tol {
                    delay_violations.push((i, j, dk[(i, j)]));
                }
            }
        }
    }
    Ok(PatternReport { zero_max, zero_violations, delay_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frf::make_log_grid;

    fn ts() -> f64 {
        0.02
    }

    #[test]
    fn pattern_from_chain_no_delay_matches_example() {
        let p = chain_pattern(3, 0);
        let expect = [
            [EntryKind::Free, EntryKind::Free, EntryKind::Zero],
            [EntryKind::Free, EntryKind::Free, EntryKind::Free],
            [EntryKind::Zero, EntryKind::Free, EntryKind::Free],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(p.get(i, j), expect[i][j]);
            }
        }
    }

    #[test]
    fn pattern_chain_delay_one() {
        let p = chain_pattern(5, 1);
        for i in 0..5usize {
            for j in 0..5usize {
                let expect = if i == j {
                    EntryKind::Free
                } else if i.abs_diff(j) == 1 {
                    EntryKind::Delayed(1)
                } else {
                    EntryKind::Zero
                };
                assert_eq!(p.get(i, j), expect, "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn pattern_oracle_with_bus1_links() {
        let mut edges = Vec::new();
        for i in 0..4 {
            edges.push((i, i + 1, 0));
            edges.push((i + 1, i, 0));
        }
        for i in 2..5 {
            edges.push((0, i, 0));
        }
        let p = pattern_from_graph(5, &edges).unwrap();
        assert_eq!(p.get(2, 0), EntryKind::Free);
        assert_eq!(p.get(3, 0), EntryKind::Free);
        assert_eq!(p.get(4, 0), EntryKind::Free);
        assert_eq!(p.get(0, 3), EntryKind::Zero);
        assert_eq!(p.get(1, 0), EntryKind::Free);
        assert!(p.is_superset_of(&chain_pattern(5, 1)).is_ok());
    }

    #[test]
    fn pattern_rejects_bad_edge() {
        assert!(matches!(
            pattern_from_graph(3, &[(0, 7, 0)]),
            Err(StructureError::BadEdge(0, 7))
        ));
    }

    #[test]
    fn pattern_text_roundtrip() {
        let p = chain_pattern(4, 1);
        let rows = p.render_rows();
        assert_eq!(rows[0], "x z^-1 0 0");
        let back = SparsityPattern::parse_rows(&rows).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn theta_length_scalar_free() {
        // single Free entry of order 2: X gets B:2 + D:1, Y gets B:2 + D:1
        let mut p = SparsityPattern::zeros(1, 1);
        p.set(0, 0, EntryKind::Free);
        let param = build_factor_parameterization(&p, 2, 0.6, ts()).unwrap();
        assert_eq!(param.theta_len(), 6);
    }

    #[test]
    fn theta_length_case_study_pattern() {
        // mask enumeration: X diag 5*(2+1), X off-diag delayed 8*2, Y 5*(2+1)
        let p = chain_pattern(5, 1);
        let param = build_factor_parameterization(&p, 2, 0.0, ts()).unwrap();
        assert_eq!(param.theta_len(), 15 + 16 + 15);
    }

    #[test]
    fn theta_zero_only_pattern_covers_y_only() {
        let p = SparsityPattern::zeros(2, 2);
        let param = build_factor_parameterization(&p, 2, 0.0, ts()).unwrap();
        assert_eq!(param.theta_len(), 2 * 3);
        let th = param.zero_controller_theta();
        let (x, y) = param.eval_factors(&th, Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(x.iter().map(|v| v.norm()).sum::<f64>(), 0.0);
        assert!((y - CMat::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn realize_factors_linear_and_zero() {
        let p = chain_pattern(3, 1);
        let param = build_factor_parameterization(&p, 2, 0.0, ts()).unwrap();
        let grid = make_log_grid(0.1, 100.0, 9, ts()).unwrap();
        let real = realize_factors(&param, &grid);
        let zero = DecisionVector::zeros(param.theta_len());
        let (x0, y0) = real.factors_at(&zero, 4).unwrap();
        assert_eq!(x0.iter().map(|v| v.norm()).sum::<f64>(), 0.0);
        assert_eq!(y0.iter().map(|v| v.norm()).sum::<f64>(), 0.0);

        // additivity at every frequency
        let mut t1 = DecisionVector::zeros(param.theta_len());
        let mut t2 = DecisionVector::zeros(param.theta_len());
        for i in 0..param.theta_len() {
            t1.0[i] = (i as f64 * 0.37).sin();
            t2.0[i] = (i as f64 * 0.11).cos();
        }
        let sum = DecisionVector(t1.0.iter().zip(&t2.0).map(|(a, b)| a + b).collect());
        for k in 0..grid.len() {
            let (xa, ya) = real.factors_at(&t1, k).unwrap();
            let (xb, yb) = real.factors_at(&t2, k).unwrap();
            let (xs, ys) = real.factors_at(&sum, k).unwrap();
            assert!((xs - (xa + xb)).norm() < 1e-13);
            assert!((ys - (ya + yb)).norm() < 1e-13);
        }
    }

    #[test]
    fn realize_factors_matches_fixed_basis_analytics() {
        // order-2 entry with pole 0.6, B = [1; 0], D = 0 at omega = 0:
        // phi_1(1) = 1 / (1 - 0.6)^2 = 6.25
        let mut p = SparsityPattern::zeros(1, 1);
        p.set(0, 0, EntryKind::Free);
        let param = build_factor_parameterization(&p, 2, 0.6, 1.0).unwrap();
        let mut th = DecisionVector::zeros(6);
        th.0[0] = 1.0; // first numerator coefficient of the X entry
        let (x, _) = param.eval_factors(&th, Complex64::new(1.0, 0.0)).unwrap();
        assert!((x[(0, 0)] - Complex64::new(6.25, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn realize_factors_agrees_with_state_space() {
        let p = chain_pattern(3, 1);
        let param = build_factor_parameterization(&p, 2, 0.3, ts()).unwrap();
        let mut th = DecisionVector::zeros(param.theta_len());
        for i in 0..th.len() {
            th.0[i] = ((i * 7 % 11) as f64 - 5.0) * 0.13;
        }
        let grid = make_log_grid(0.5, 120.0, 7, ts()).unwrap();
        let real = realize_factors(&param, &grid);
        let xss = param.factor_state_space(&th, Factor::X);
        let x_model = crate::lti::StateSpaceModel::new(xss.a, xss.b, xss.c, xss.d, ts()).unwrap();
        let x_frf = crate::lti::frequency_response(&x_model, &grid).unwrap();
        for k in 0..grid.len() {
            let (x, _) = real.factors_at(&th, k).unwrap();
            assert!(
                (&x - x_frf.at(k)).norm() < 1e-10,
                "mismatch at grid point {k}: {}",
                (&x - x_frf.at(k)).norm()
            );
        }
    }

    #[test]
    fn left_factorize_zero_controller() {
        let k = RationalMatrix { rows: 1, cols: 1, entries: vec![RationalFn::zero()] };
        let f = left_factorize_rational(&k, 0.0).unwrap();
        let z = Complex64::new(0.3, 0.4);
        assert_eq!(f.x.eval(z)[(0, 0)], Complex64::new(0.0, 0.0));
        assert!((f.y.eval(z) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn left_factorize_first_order() {
        // K = 1/(z - 0.5), rho = 0: y = (z - 0.5)/z, X = 1/z
        let k = RationalMatrix {
            rows: 1,
            cols: 1,
            entries: vec![RationalFn { num: Polynomial::constant(1.0), den: Polynomial(vec![-0.5, 1.0]) }],
        };
        let f = left_factorize_rational(&k, 0.0).unwrap();
        for z in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-0.7, 0.4)] {
            let y_expect = (z - 0.5) / z;
            let x_expect = 1.0 / z;
            assert!((f.y.eval(z) - y_expect).norm() < 1e-13);
            assert!((f.x.eval(z)[(0, 0)] - x_expect).norm() < 1e-13);
            let k_back = f.controller_at(z)[(0, 0)];
            assert!((k_back - 1.0 / (z - 0.5)).norm() < 1e-13);
        }
    }

    #[test]
    fn left_factorize_preserves_zeros() {
        let k = RationalMatrix {
            rows: 2,
            cols: 2,
            entries: vec![
                RationalFn { num: Polynomial::constant(1.0), den: Polynomial(vec![-0.2, 1.0]) },
                RationalFn::zero(),
                RationalFn::zero(),
                RationalFn { num: Polynomial(vec![0.5, 1.0]), den: Polynomial(vec![0.1, -0.3, 1.0]) },
            ],
        };
        let f = left_factorize_rational(&k, 0.0).unwrap();
        let z = Complex64::new(0.2, 0.9);
        assert_eq!(f.x.eval(z)[(0, 1)], Complex64::new(0.0, 0.0));
        assert_eq!(f.x.eval(z)[(1, 0)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn left_factorize_rejects_improper() {
        let k = RationalMatrix {
            rows: 1,
            cols: 1,
            entries: vec![RationalFn { num: Polynomial(vec![0.0, 0.0, 1.0]), den: Polynomial(vec![-0.5, 1.0]) }],
        };
        assert!(matches!(
            left_factorize_rational(&k, 0.0),
            Err(StructureError::ImproperEntry(0, 0))
        ));
    }

    #[test]
    fn verify_pattern_flags_perturbed_zero_entry() {
        let p = chain_pattern(3, 1);
        let param = build_factor_parameterization(&p, 1, 0.0, ts()).unwrap();
        let grid = make_log_grid(0.1, 100.0, 11, ts()).unwrap();
        let factors = ControllerFactors::new(param.clone(), param.zero_controller_theta()).unwrap();
        let report = verify_pattern(&factors, &p, &grid, 1e-12).unwrap();
        assert!(report.ok());
        assert_eq!(report.zero_max, 0.0);

        // a Free pattern used against a stricter target pattern gets flagged
        let mut free = SparsityPattern::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                free.set(i, j, EntryKind::Free);
            }
        }
        let param2 = build_factor_parameterization(&free, 1, 0.0, ts()).unwrap();
        let mut th = param2.zero_controller_theta();
        // poke feedthrough of the (0, 2) X entry, which the chain pattern forbids
        let slot = param2
            .entries()
            .iter()
            .find(|s| s.factor == Factor::X && s.row == 0 && s.col == 2)
            .unwrap();
        th.0[slot.theta_offset + slot.b_len] = 0.25;
        let factors2 = ControllerFactors::new(param2, th).unwrap();
        let report2 = verify_pattern(&factors2, &p, &grid, 1e-10).unwrap();
        assert!(!report2.ok());
        assert!(report2.zero_violations.iter().any(|&(i, j, _)| (i, j) == (0, 2)));
    }

    #[test]
    fn delayed_entries_have_zero_feedthrough() {
        let p = chain_pattern(4, 1);
        let param = build_factor_parameterization(&p, 2, 0.0, ts()).unwrap();
        let mut th = param.zero_controller_theta();
        for i in 0..th.len() {
            th.0[i] += ((i * 13 % 7) as f64) * 0.05;
        }
        let factors = ControllerFactors::new(param, th).unwrap();
        let dk = factors.y_state_space().d.try_inverse().unwrap() * factors.x_state_space().d;
        for i in 0..4 {
            for j in 0..4 {
                if let EntryKind::Delayed(_) = p.get(i, j) {
                    assert_eq!(dk[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn structure_preservation_zero_entries_exact() {
        // block-diagonal Y and masked X keep Zero entries of Y^{-1} X at exactly 0
        let p = chain_pattern(5, 1);
        let param = build_factor_parameterization(&p, 2, 0.0, ts()).unwrap();
        let mut th = param.zero_controller_theta();
        for i in 0..th.len() {
            th.0[i] += ((i * 29 % 13) as f64 - 6.0) * 0.02;
        }
        let factors = ControllerFactors::new(param, th).unwrap();
        let grid = make_log_grid(0.1, 150.0, 17, ts()).unwrap();
        let samples = factors.controller_samples(&grid).unwrap();
        for s in &samples {
            for i in 0..5 {
                for j in 0..5 {
                    if p.get(i, j) == EntryKind::Zero {
                        assert!(s[(i, j)].norm() <= 1e-12, "entry ({i}, {j}) = {}", s[(i, j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn decision_vector_csv_roundtrip() {
        let th = DecisionVector(vec![0.0, -1.5, 3.25e-7, 42.0]);
        let mut buf = Vec::new();
        th.write_csv(&mut buf).unwrap();
        let back = DecisionVector::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back, th);
    }
}
