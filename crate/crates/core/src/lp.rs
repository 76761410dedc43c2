//! Dense LP solving and the LP-based forward/backward tightening pass.
//!
//! The solver is a self-contained two-phase tableau simplex with Bland's
//! rule (no cycling) and a 1e-9 pivot tolerance. It either returns an exact
//! status or an explicit `Stalled` error — never a wrong status. An optional
//! process-boundary adapter can delegate solves to an external tool speaking
//! the same JSON format.

use crate::linalg::{dot, Matrix};
use crate::net::{ActivationKind, InputDomain, Network, Var};
use crate::pmnr::HyperPlane;
use crate::sbt::{self, BoundsState, SingleRelax};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const MAX_VARS: usize = 500;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("simplex stalled: iteration cap exceeded")]
    Stalled,
    #[error("problem too large: {0} variables (cap {MAX_VARS})")]
    TooLarge(usize),
    #[error("external solver failed: {0}")]
    External(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// General-form dense LP: optimize `objective·x` subject to row constraints
/// and per-variable bounds (`±inf` allowed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearProgram {
    pub minimize: bool,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            minimize: true,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Max violation of constraints and variable bounds at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let v = dot(&c.coeffs, x);
            match c.relation {
                Relation::Le => worst = worst.max(v - c.rhs),
                Relation::Ge => worst = worst.max(c.rhs - v),
                Relation::Eq => worst = worst.max((v - c.rhs).abs()),
            }
        }
        for ((&xi, &l), &u) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(l - xi).max(xi - u);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum LpOutcome {
    #[serde(rename = "optimal")]
    Optimal { value: f64, point: Vec<f64> },
    #[serde(rename = "infeasible")]
    Infeasible,
    #[serde(rename = "unbounded")]
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub outcome: LpOutcome,
    pub iterations: usize,
}

// ---------------------------------------------------------------------------
// Two-phase tableau simplex
// ---------------------------------------------------------------------------

/// How a standard-form variable maps back onto an original one.
#[derive(Clone, Copy)]
enum Mapback {
    /// `orig = sign·std + shift`
    Affine { orig: usize, sign: f64, shift: f64 },
    /// positive part of a free variable
    Pos(usize),
    /// negative part of a free variable
    Neg(usize),
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// reduced-cost row being optimized
    cost: Vec<f64>,
    /// secondary cost row kept consistent across pivots (phase-2 objective
    /// during phase 1)
    cost2: Vec<f64>,
    n_total: usize,
    first_artificial: usize,
    iterations: usize,
}

impl Tableau {
    fn pivot(&mut self, pr: usize, pc: usize) {
        let piv = self.rows[pr][pc];
        let inv = 1.0 / piv;
        for v in self.rows[pr].iter_mut() {
            *v *= inv;
        }
        self.rhs[pr] *= inv;
        let prow = self.rows[pr].clone();
        let prhs = self.rhs[pr];
        for i in 0..self.rows.len() {
            if i == pr {
                continue;
            }
            let f = self.rows[i][pc];
            if f != 0.0 {
                for (v, p) in self.rows[i].iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                self.rows[i][pc] = 0.0;
                self.rhs[i] -= f * prhs;
            }
        }
        for costs in [&mut self.cost, &mut self.cost2] {
            let f = costs[pc];
            if f != 0.0 {
                for (v, p) in costs.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                costs[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    /// Runs Bland-rule minimization on `self.cost`. `allow` limits the
    /// columns that may enter. Returns Ok(true) on optimal, Ok(false) on
    /// unbounded.
    fn optimize(&mut self, allow: impl Fn(usize) -> bool, cap: usize) -> Result<bool, LpError> {
        loop {
            if self.iterations > cap {
                return Err(LpError::Stalled);
            }
            let mut entering = None;
            for j in 0..self.n_total {
                if allow(j) && self.cost[j] < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(pc) = entering else { return Ok(true) };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][pc];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i] / a;
                    let better = match leaving {
                        None => true,
                        Some((bi, br)) => {
                            ratio < br - PIVOT_TOL
                                || (ratio < br + PIVOT_TOL && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((pr, _)) = leaving else { return Ok(false) };
            self.pivot(pr, pc);
        }
    }
}

/// Solves a general-form LP with the built-in dense simplex.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    if n > MAX_VARS {
        return Err(LpError::TooLarge(n));
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::Dimension(format!(
                "constraint {i} has {} coefficients, expected {n}",
                c.coeffs.len()
            )));
        }
    }
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(LpError::Dimension("bound vectors must match variable count".into()));
    }
    for (j, (&l, &u)) in lp.lower.iter().zip(&lp.upper).enumerate() {
        if l > u {
            return Err(LpError::Dimension(format!("variable {j} has lower {l} > upper {u}")));
        }
    }

    // Standard-form translation: every variable becomes nonnegative.
    let mut maps: Vec<Mapback> = Vec::new();
    let mut var_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n]; // orig -> [(std col, sign)]
    let mut shifts = vec![0.0; n];
    let mut extra_upper: Vec<(usize, f64)> = Vec::new(); // (std col, bound)
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l.is_finite() {
            let col = maps.len();
            maps.push(Mapback::Affine { orig: j, sign: 1.0, shift: l });
            var_cols[j].push((col, 1.0));
            shifts[j] = l;
            if u.is_finite() {
                extra_upper.push((col, u - l));
            }
        } else if u.is_finite() {
            let col = maps.len();
            maps.push(Mapback::Affine { orig: j, sign: -1.0, shift: u });
            var_cols[j].push((col, -1.0));
            shifts[j] = u;
        } else {
            let cp = maps.len();
            maps.push(Mapback::Pos(j));
            let cn = maps.len();
            maps.push(Mapback::Neg(j));
            var_cols[j].push((cp, 1.0));
            var_cols[j].push((cn, -1.0));
        }
    }
    let n_std = maps.len();

    // Collect rows in standard variables with rhs ≥ 0.
    struct Row {
        coeffs: Vec<f64>,
        relation: Relation,
        rhs: f64,
    }
    let mut rows: Vec<Row> = Vec::with_capacity(lp.constraints.len() + extra_upper.len());
    for c in &lp.constraints {
        let mut coeffs = vec![0.0; n_std];
        let mut rhs = c.rhs;
        for (j, &cj) in c.coeffs.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            rhs -= cj * shifts[j];
            for &(col, sign) in &var_cols[j] {
                coeffs[col] += cj * sign;
            }
        }
        rows.push(Row { coeffs, relation: c.relation, rhs });
    }
    for &(col, bound) in &extra_upper {
        let mut coeffs = vec![0.0; n_std];
        coeffs[col] = 1.0;
        rows.push(Row { coeffs, relation: Relation::Le, rhs: bound });
    }
    for row in rows.iter_mut() {
        if row.rhs < 0.0 {
            for v in row.coeffs.iter_mut() {
                *v = -*v;
            }
            row.rhs = -row.rhs;
            row.relation = match row.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    // Count slack and artificial columns.
    let mut n_slack = 0;
    let mut n_art = 0;
    for row in &rows {
        match row.relation {
            Relation::Le => n_slack += 1,
            Relation::Ge => {
                n_slack += 1;
                n_art += 1;
            }
            Relation::Eq => n_art += 1,
        }
    }
    let n_total = n_std + n_slack + n_art;
    let first_artificial = n_std + n_slack;

    let mut objective = vec![0.0; n_total];
    for (j, &cj) in lp.objective.iter().enumerate() {
        let sign = if lp.minimize { 1.0 } else { -1.0 };
        for &(col, s) in &var_cols[j] {
            objective[col] += sign * cj * s;
        }
    }

    let m = rows.len();
    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        rhs: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        cost: vec![0.0; n_total],
        cost2: objective.clone(),
        n_total,
        first_artificial,
        iterations: 0,
    };
    let mut slack_idx = 0;
    let mut art_idx = 0;
    for row in &rows {
        let mut full = vec![0.0; n_total];
        full[..n_std].copy_from_slice(&row.coeffs);
        let basic;
        match row.relation {
            Relation::Le => {
                full[n_std + slack_idx] = 1.0;
                basic = n_std + slack_idx;
                slack_idx += 1;
            }
            Relation::Ge => {
                full[n_std + slack_idx] = -1.0;
                slack_idx += 1;
                full[first_artificial + art_idx] = 1.0;
                basic = first_artificial + art_idx;
                art_idx += 1;
            }
            Relation::Eq => {
                full[first_artificial + art_idx] = 1.0;
                basic = first_artificial + art_idx;
                art_idx += 1;
            }
        }
        t.rows.push(full);
        t.rhs.push(row.rhs);
        t.basis.push(basic);
    }

    let cap = 200 * (m + n_total) + 2000;

    // Phase 1: minimize the sum of artificials. Reduced costs start as
    // -Σ(artificial rows) on non-artificial columns.
    if n_art > 0 {
        for (i, row) in t.rows.iter().enumerate() {
            if t.basis[i] >= first_artificial {
                for j in 0..n_total {
                    t.cost[j] -= row[j];
                }
            }
        }
        for j in first_artificial..n_total {
            t.cost[j] += 1.0;
        }
        // Basic columns must read zero in the cost row; artificial basics
        // already cancel (the +1 cost against the -1 from their own row).
        let optimal = t.optimize(|_| true, cap)?;
        debug_assert!(optimal, "phase 1 is bounded below by 0");
        let w: f64 = (0..m)
            .filter(|&i| t.basis[i] >= first_artificial)
            .map(|i| t.rhs[i])
            .sum();
        if w > FEAS_TOL {
            return Ok(LpSolution { outcome: LpOutcome::Infeasible, iterations: t.iterations });
        }
        // Drive remaining artificials out of the basis.
        for i in 0..m {
            if t.basis[i] >= first_artificial {
                if let Some(pc) = (0..first_artificial).find(|&j| t.rows[i][j].abs() > PIVOT_TOL) {
                    t.pivot(i, pc);
                }
                // A fully-zero row is redundant; leaving the artificial
                // basic at level zero is harmless.
            }
        }
    }

    // Phase 2 on the real objective; artificial columns may not re-enter.
    std::mem::swap(&mut t.cost, &mut t.cost2);
    let fa = t.first_artificial;
    let optimal = t.optimize(|j| j < fa, cap)?;
    if !optimal {
        return Ok(LpSolution { outcome: LpOutcome::Unbounded, iterations: t.iterations });
    }

    // Read the solution back in original variables.
    let mut std_vals = vec![0.0; n_total];
    for (i, &b) in t.basis.iter().enumerate() {
        std_vals[b] = t.rhs[i];
    }
    let mut point = shifts;
    for (col, map) in maps.iter().enumerate() {
        match *map {
            Mapback::Affine { orig, sign, .. } => point[orig] += sign * std_vals[col] - 0.0,
            Mapback::Pos(orig) => point[orig] += std_vals[col],
            Mapback::Neg(orig) => point[orig] -= std_vals[col],
        }
    }
    let value = dot(&lp.objective, &point);
    Ok(LpSolution { outcome: LpOutcome::Optimal { value, point }, iterations: t.iterations })
}

/// min/max of `c·x` over `{x : a·x + b ≤ 0}`. Errors on unbounded or
/// infeasible polyhedra.
pub fn linear_extremum_polyhedron(
    a: &Matrix,
    b: &[f64],
    c: &[f64],
    maximize: bool,
) -> Result<f64, LpError> {
    let mut lp = LinearProgram::new(c.len());
    lp.minimize = !maximize;
    lp.objective = c.to_vec();
    for (row, &bi) in a.iter_rows().zip(b) {
        lp.push(row.to_vec(), Relation::Le, -bi);
    }
    match simplex_solve(&lp)?.outcome {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Unbounded => Err(LpError::Dimension("unbounded polyhedron".into())),
        LpOutcome::Infeasible => Err(LpError::Dimension("empty polyhedron".into())),
    }
}

// ---------------------------------------------------------------------------
// Relaxed-LP encoding
// ---------------------------------------------------------------------------

/// A relaxed LP over network variables with a map from [`Var`] to column.
pub struct RelaxedLp {
    pub lp: LinearProgram,
    map: BTreeMap<Var, usize>,
}

impl RelaxedLp {
    pub fn column(&self, v: Var) -> Option<usize> {
        self.map.get(&v).copied()
    }

    /// Sets the objective to `Σ coeff·var`, minimizing or maximizing.
    pub fn set_objective(&mut self, terms: &[(Var, f64)], minimize: bool) {
        self.lp.objective.iter_mut().for_each(|c| *c = 0.0);
        self.lp.minimize = minimize;
        for &(v, c) in terms {
            let col = self.map[&v];
            self.lp.objective[col] += c;
        }
    }
}

/// Which slice of the network a relaxed LP covers.
#[derive(Debug, Clone, Copy)]
pub struct LpScope {
    pub min_layer: usize,
    pub max_layer: usize,
    pub include_input: bool,
    /// canonical output-domain row `x(L) ≥ min` (backward passes only)
    pub output_at_least: Option<f64>,
}

impl LpScope {
    pub fn full(net: &Network, output_at_least: Option<f64>) -> Self {
        LpScope { min_layer: 0, max_layer: net.depth() - 1, include_input: true, output_at_least }
    }
}

/// Options for the relaxed encoding. `activation_hull` adds the always-valid
/// linear facets of each activation (e.g. `h ≥ 0` and `h ≥ x` for ReLU) on
/// top of the single-neuron relaxation rows.
#[derive(Debug, Clone, Copy)]
pub struct EncodeOptions {
    pub activation_hull: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions { activation_hull: true }
    }
}

/// Encodes the relaxed feasible set of the network over `scope`:
/// affine equalities, relaxation rows, optional hull rows, hyper-plane rows
/// whose variables fall inside the scope, input-domain rows, bound boxes
/// from `bounds`, and the optional output-domain row.
pub fn encode_relaxed(
    net: &Network,
    bounds: &BoundsState,
    relax: &SingleRelax,
    planes: &[HyperPlane],
    din: &InputDomain,
    scope: LpScope,
    opts: EncodeOptions,
) -> RelaxedLp {
    let depth = net.depth();
    let mut map = BTreeMap::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut add_var = |v: Var, lo: f64, hi: f64, map: &mut BTreeMap<Var, usize>| {
        map.insert(v, lower.len());
        lower.push(lo);
        upper.push(hi);
    };

    if scope.include_input {
        let (ilo, ihi) = match din.box_hull() {
            Some(h) => h,
            None => (bounds.input_lower.clone(), bounds.input_upper.clone()),
        };
        for j in 0..net.input_dim() {
            add_var(Var::Input(j), ilo[j], ihi[j], &mut map);
        }
    }
    for k in scope.min_layer..=scope.max_layer {
        for j in 0..net.width(k) {
            add_var(Var::Pre(k, j), bounds.pre_lower[k][j], bounds.pre_upper[k][j], &mut map);
        }
        if k < depth - 1 {
            for j in 0..net.width(k) {
                add_var(Var::Post(k, j), bounds.post_lower[k][j], bounds.post_upper[k][j], &mut map);
            }
        }
    }

    let n = lower.len();
    let mut rlp = RelaxedLp { lp: LinearProgram::new(n), map };
    rlp.lp.lower = lower;
    rlp.lp.upper = upper;

    let col = |rlp: &RelaxedLp, v: Var| rlp.map[&v];

    // Affine equalities x(k) = W·h(k-1) + b, when both ends are in scope.
    for k in scope.min_layer..=scope.max_layer {
        let sources_ok = if k == 0 { scope.include_input } else { k - 1 >= scope.min_layer };
        if !sources_ok {
            continue;
        }
        let layer = &net.layers()[k];
        for j in 0..layer.width() {
            let mut coeffs = vec![0.0; n];
            coeffs[col(&rlp, Var::Pre(k, j))] = 1.0;
            for (i, &w) in layer.weights.row(j).iter().enumerate() {
                let src = if k == 0 { Var::Input(i) } else { Var::Post(k - 1, i) };
                coeffs[col(&rlp, src)] -= w;
            }
            rlp.lp.push(coeffs, Relation::Eq, layer.bias[j]);
        }
    }

    // Relaxation and hull rows for hidden layers in scope.
    for k in scope.min_layer..=scope.max_layer.min(depth.saturating_sub(2)) {
        let layer = &net.layers()[k];
        for j in 0..layer.width() {
            let (pc, hc) = (col(&rlp, Var::Pre(k, j)), col(&rlp, Var::Post(k, j)));
            let row = relax.row(k, j);
            let mut ge = vec![0.0; n];
            ge[hc] = 1.0;
            ge[pc] = -row.lower_slope;
            rlp.lp.push(ge, Relation::Ge, row.lower_offset);
            let mut le = vec![0.0; n];
            le[hc] = 1.0;
            le[pc] = -row.upper_slope;
            rlp.lp.push(le, Relation::Le, row.upper_offset);
            if opts.activation_hull {
                let mut facet = |slope: f64| {
                    let mut f = vec![0.0; n];
                    f[hc] = 1.0;
                    f[pc] = -slope;
                    rlp.lp.push(f, Relation::Ge, 0.0);
                };
                match layer.activation {
                    ActivationKind::Relu => {
                        facet(0.0);
                        facet(1.0);
                    }
                    ActivationKind::LeakyRelu(s) => {
                        facet(s);
                        facet(1.0);
                    }
                    ActivationKind::Abs => {
                        facet(1.0);
                        facet(-1.0);
                    }
                    ActivationKind::Identity => {
                        let mut eq = vec![0.0; n];
                        eq[hc] = 1.0;
                        eq[pc] = -1.0;
                        rlp.lp.push(eq, Relation::Eq, 0.0);
                    }
                }
            }
        }
    }

    // Hyper-plane rows fully inside the scope.
    'planes: for plane in planes {
        let mut coeffs = vec![0.0; n];
        for (&v, &c) in &plane.terms {
            match rlp.map.get(&v) {
                Some(&idx) => coeffs[idx] += c,
                None => continue 'planes,
            }
        }
        rlp.lp.push(coeffs, Relation::Le, plane.bias);
    }

    // Polyhedral input rows (boxes and balls are captured by variable bounds).
    if scope.include_input {
        if let InputDomain::Polyhedron { a, b } = din {
            for (row, &bi) in a.iter_rows().zip(b) {
                let mut coeffs = vec![0.0; n];
                for (j, &w) in row.iter().enumerate() {
                    coeffs[col(&rlp, Var::Input(j))] = w;
                }
                rlp.lp.push(coeffs, Relation::Le, -bi);
            }
        }
    }

    if let Some(min_out) = scope.output_at_least {
        if scope.max_layer == depth - 1 {
            let mut coeffs = vec![0.0; n];
            coeffs[col(&rlp, Var::Pre(depth - 1, 0))] = 1.0;
            rlp.lp.push(coeffs, Relation::Ge, min_out);
        }
    }

    rlp
}

// ---------------------------------------------------------------------------
// PostTighten: one forward + one backward sweep of per-neuron LPs
// ---------------------------------------------------------------------------

/// Tightens `bounds` by solving per-neuron min/max LPs: a forward pass where
/// each neuron's LP sees only constraints over its own and earlier layers,
/// then a backward pass restricted to later layers plus the output-domain
/// row. New bounds are intersections with the old ones; an infeasible LP
/// sets the contradiction flag. Stalled solves skip the neuron.
pub fn post_tighten(
    net: &Network,
    din: &InputDomain,
    output_at_least: Option<f64>,
    bounds: &BoundsState,
    relax: &SingleRelax,
    planes: &[HyperPlane],
) -> BoundsState {
    let depth = net.depth();
    let mut work = bounds.clone();
    if work.contradiction {
        return work;
    }
    let opts = EncodeOptions { activation_hull: true };

    let mut sweep = |work: &mut BoundsState, backward: bool| {
        let order: Vec<usize> =
            if backward { (0..depth).rev().collect() } else { (0..depth).collect() };
        for k in order {
            let scope = if backward {
                LpScope { min_layer: k, max_layer: depth - 1, include_input: false, output_at_least }
            } else {
                LpScope { min_layer: 0, max_layer: k, include_input: true, output_at_least: None }
            };
            let mut rlp = encode_relaxed(net, work, relax, planes, din, scope, opts);
            let mut targets: Vec<Var> = Vec::new();
            for j in 0..net.width(k) {
                targets.push(Var::Pre(k, j));
                if k < depth - 1 {
                    targets.push(Var::Post(k, j));
                }
            }
            for v in targets {
                for minimize in [true, false] {
                    rlp.set_objective(&[(v, 1.0)], minimize);
                    match simplex_solve(&rlp.lp) {
                        Ok(LpSolution { outcome: LpOutcome::Optimal { value, .. }, .. }) => {
                            let (layer, j, pre) = match v {
                                Var::Pre(l, j) => (l, j, true),
                                Var::Post(l, j) => (l, j, false),
                                Var::Input(_) => unreachable!(),
                            };
                            let slot = match (pre, minimize) {
                                (true, true) => &mut work.pre_lower[layer][j],
                                (true, false) => &mut work.pre_upper[layer][j],
                                (false, true) => &mut work.post_lower[layer][j],
                                (false, false) => &mut work.post_upper[layer][j],
                            };
                            if minimize {
                                *slot = slot.max(value);
                            } else {
                                *slot = slot.min(value);
                            }
                        }
                        Ok(LpSolution { outcome: LpOutcome::Infeasible, .. }) => {
                            work.contradiction = true;
                            return;
                        }
                        Ok(LpSolution { outcome: LpOutcome::Unbounded, .. }) | Err(_) => {
                            // Keep the old bound; skipping is sound.
                        }
                    }
                }
            }
        }
    };

    sweep(&mut work, false);
    if !work.contradiction {
        sweep(&mut work, true);
    }
    if !work.contradiction {
        // Interval emptiness after intersection also counts as ⊥.
        let empty = work
            .pre_lower
            .iter()
            .zip(&work.pre_upper)
            .chain(work.post_lower.iter().zip(&work.post_upper))
            .any(|(lo, hi)| lo.iter().zip(hi).any(|(a, b)| a > b + FEAS_TOL));
        work.contradiction = empty;
    }
    work
}

/// Forward/backward LP tightening without multi-neuron planes, iterated
/// under the same stop condition as the main loop (at most `max_iters`
/// sweeps, stopping early when nothing improves by more than 1e-7).
pub fn fbc_tighten(
    net: &Network,
    din: &InputDomain,
    output_at_least: Option<f64>,
    max_iters: usize,
) -> Result<BoundsState, sbt::SbtError> {
    let (mut state, relax) = sbt::deeppoly(net, din)?;
    for _ in 0..max_iters.max(1) {
        let tightened = post_tighten(net, din, output_at_least, &state, &relax, &[]);
        if tightened.contradiction {
            return Ok(tightened);
        }
        let revised = state.intersect(&tightened, 1e-7);
        if !revised {
            break;
        }
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// External solver adapter
// ---------------------------------------------------------------------------

/// LP backend selection. The external variant pipes the LP as JSON to the
/// command's stdin and expects an [`LpOutcome`] JSON object on stdout.
#[derive(Debug, Clone, Default)]
pub enum LpBackend {
    #[default]
    Internal,
    External {
        command: String,
    },
}

pub fn solve_with(backend: &LpBackend, lp: &LinearProgram) -> Result<LpSolution, LpError> {
    match backend {
        LpBackend::Internal => simplex_solve(lp),
        LpBackend::External { command } => {
            let mut parts = command.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| LpError::External("empty command".into()))?;
            let mut child = std::process::Command::new(program)
                .args(parts)
                .stdin(std::process::Stdio::piped())
                .stdout(std::process::Stdio::piped())
                .spawn()
                .map_err(|e| LpError::External(e.to_string()))?;
            child
                .stdin
                .as_mut()
                .unwrap()
                .write_all(serde_json::to_string(lp).unwrap().as_bytes())
                .map_err(|e| LpError::External(e.to_string()))?;
            let out = child
                .wait_with_output()
                .map_err(|e| LpError::External(e.to_string()))?;
            if !out.status.success() {
                return Err(LpError::External(format!("solver exited with {}", out.status)));
            }
            let outcome: LpOutcome = serde_json::from_slice(&out.stdout)
                .map_err(|e| LpError::External(e.to_string()))?;
            Ok(LpSolution { outcome, iterations: 0 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn solve(lp: &LinearProgram) -> LpOutcome {
        simplex_solve(lp).unwrap().outcome
    }

    #[test]
    fn max_single_variable() {
        let mut lp = LinearProgram::new(1);
        lp.minimize = false;
        lp.objective = vec![1.0];
        lp.push(vec![1.0], Relation::Le, 3.0);
        match solve(&lp) {
            LpOutcome::Optimal { value, point } => {
                assert!((value - 3.0).abs() < 1e-9);
                assert!((point[0] - 3.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn min_sum_with_bounds() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.lower = vec![0.0, 0.0];
        lp.upper = vec![1.0, 1.0];
        lp.push(vec![1.0, 1.0], Relation::Ge, 2.0);
        match solve(&lp) {
            LpOutcome::Optimal { value, .. } => assert!((value - 2.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.push(vec![1.0], Relation::Ge, 2.0);
        lp.push(vec![1.0], Relation::Le, 1.0);
        assert_eq!(solve(&lp), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.minimize = false;
        lp.objective = vec![1.0];
        lp.push(vec![-1.0], Relation::Le, 0.0);
        assert_eq!(solve(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x + y  s.t.  x - y = 1, x + y ≥ 3, both free.
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.push(vec![1.0, -1.0], Relation::Eq, 1.0);
        lp.push(vec![1.0, 1.0], Relation::Ge, 3.0);
        match solve(&lp) {
            LpOutcome::Optimal { value, point } => {
                assert!((value - 3.0).abs() < 1e-9);
                assert!((point[0] - 2.0).abs() < 1e-9);
                assert!((point[1] - 1.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_does_not_cycle() {
        // Classic degenerate instance; Bland's rule must terminate.
        let mut lp = LinearProgram::new(4);
        lp.minimize = false;
        lp.objective = vec![0.75, -150.0, 0.02, -6.0];
        lp.lower = vec![0.0; 4];
        lp.push(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        lp.push(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        lp.push(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        match solve(&lp) {
            LpOutcome::Optimal { value, .. } => assert!((value - 0.05).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_rhs_and_mixed_bounds() {
        // min -x + 2y  s.t.  -x - y ≤ -2,  x ∈ [-5, 5], y ∈ (-inf, 4].
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, 2.0];
        lp.lower = vec![-5.0, f64::NEG_INFINITY];
        lp.upper = vec![5.0, 4.0];
        lp.push(vec![-1.0, -1.0], Relation::Le, -2.0);
        match solve(&lp) {
            LpOutcome::Optimal { value, point } => {
                assert!(lp.violation(&point) < 1e-7);
                // x = 5 and y as small as the constraint allows: y ≥ 2 - x = -3.
                assert!((value - (-5.0 + 2.0 * -3.0)).abs() < 1e-7, "value {value}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_lps_beat_feasible_samples() {
        // The optimum must dominate every sampled feasible point, and the
        // returned point must itself be feasible.
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.gen_range(2..5);
            let mut lp = LinearProgram::new(n);
            lp.minimize = false;
            lp.objective = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            lp.lower = vec![-1.0; n];
            lp.upper = vec![1.0; n];
            for _ in 0..rng.gen_range(1..4) {
                let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                lp.push(coeffs, Relation::Le, rng.gen_range(0.2..1.5));
            }
            let LpOutcome::Optimal { value, point } = solve(&lp) else {
                panic!("box-bounded LP with slack-positive rows must be feasible")
            };
            assert!(lp.violation(&point) < 1e-7);
            for _ in 0..2000 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if lp.violation(&x) <= 0.0 {
                    assert!(dot(&lp.objective, &x) <= value + 1e-7);
                }
            }
        }
    }

    #[test]
    fn polyhedron_extremum() {
        // {x0 ≥ 2, x0 ≤ 5}: min x0 = 2.
        let a = Matrix::from_rows(&[vec![-1.0], vec![1.0]]);
        let b = vec![2.0, -5.0];
        let v = linear_extremum_polyhedron(&a, &b, &[1.0], false).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }
}
