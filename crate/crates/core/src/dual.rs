//! Dual lower bounds for linear objectives over the relaxed network
//! intersected with a constraint polyhedron, optimized by projected
//! gradient ascent.
//!
//! For the LP
//! ```text
//!   min  Σ ĉ(i)·h(i) + Σ c(i)·x(i)
//!   s.t. x ∈ Din,  x(i) = W(i)h(i-1) + b(i),
//!        Wl(i)x(i)+bl(i) ≤ h(i) ≤ Wu(i)x(i)+bu(i),
//!        Σ Ĉ(i)h(i) + Σ C(i)x(i) + d ≤ 0            (multipliers γ ≥ 0)
//! ```
//! the value `g(α, γ)` computed here is a lower bound for every γ ≥ 0 and
//! every admissible α, via the backward recursion on ν/ν̂ with the positive
//! part of ν̂ picking up the upper relaxation row and the negative part the
//! lower one. Ascent iterates are therefore all sound; the optimizer simply
//! returns the best value seen.

use crate::linalg::dot;
use crate::net::{InputDomain, Network, Var};
use crate::relax::{self, NeuronRelax};
use crate::sbt::{holder_dual, lp_norm, BoundsState};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DualError {
    #[error("gamma must be nonnegative (got {0} at row {1})")]
    NegativeGamma(f64, usize),
    #[error("gamma length {0} does not match polyhedron rows {1}")]
    GammaLen(usize, usize),
    #[error("unbounded input polyhedron")]
    Unbounded,
    #[error("{0}")]
    Lp(String),
}

/// Coefficients over all network variables, stored per layer.
/// `post[L-1]` exists for shape uniformity but must stay zero (the output
/// layer has no post-activation values).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl LayerStack {
    pub fn zeros(net: &Network) -> Self {
        LayerStack {
            input: vec![0.0; net.input_dim()],
            pre: (0..net.depth()).map(|k| vec![0.0; net.width(k)]).collect(),
            post: (0..net.depth()).map(|k| vec![0.0; net.width(k)]).collect(),
        }
    }

    pub fn add(&mut self, var: Var, coeff: f64) {
        match var {
            Var::Input(j) => self.input[j] += coeff,
            Var::Pre(k, j) => self.pre[k][j] += coeff,
            Var::Post(k, j) => {
                debug_assert!(k + 1 < self.pre.len(), "output layer has no post variables");
                self.post[k][j] += coeff;
            }
        }
    }
}

/// One row `coeffs·vars + offset ≤ 0` of the constraint polyhedron.
#[derive(Debug, Clone)]
pub struct PolyRow {
    pub coeffs: LayerStack,
    pub offset: f64,
}

/// Constraint polyhedron over `{h(i), x(i)}`; rows may be empty.
#[derive(Debug, Clone, Default)]
pub struct ConstraintPolyhedron {
    pub rows: Vec<PolyRow>,
}

impl ConstraintPolyhedron {
    pub fn empty() -> Self {
        ConstraintPolyhedron { rows: Vec::new() }
    }
}

/// Linear objective `Σ coeffs·vars` to be minimized over the relaxed set.
#[derive(Debug, Clone)]
pub struct Objective {
    pub coeffs: LayerStack,
}

impl Objective {
    pub fn from_terms(net: &Network, terms: &[(Var, f64)]) -> Self {
        let mut coeffs = LayerStack::zeros(net);
        for &(v, c) in terms {
            coeffs.add(v, c);
        }
        Objective { coeffs }
    }

    /// Objective selecting the single output coordinate.
    pub fn output(net: &Network) -> Self {
        Objective::from_terms(net, &[(Var::Pre(net.depth() - 1, 0), 1.0)])
    }
}

/// Dual variables and the back-propagated vectors of one evaluation.
#[derive(Debug, Clone)]
pub struct DualState {
    pub gamma: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    pub nu_hat: Vec<Vec<f64>>,
    pub value: f64,
}

/// One dual problem: the network with its concrete bounds, the input
/// domain, the polyhedron, the objective, and relaxation-row overrides for
/// neurons pinned to an exact segment (branch combinations).
pub struct DualInstance<'a> {
    pub net: &'a Network,
    pub din: &'a InputDomain,
    pub bounds: &'a BoundsState,
    pub poly: &'a ConstraintPolyhedron,
    pub obj: &'a Objective,
    pub frozen: BTreeMap<(usize, usize), NeuronRelax>,
}

impl<'a> DualInstance<'a> {
    pub fn new(
        net: &'a Network,
        din: &'a InputDomain,
        bounds: &'a BoundsState,
        poly: &'a ConstraintPolyhedron,
        obj: &'a Objective,
    ) -> Self {
        DualInstance { net, din, bounds, poly, obj, frozen: BTreeMap::new() }
    }

    /// Relaxation rows for the hidden layers given an α assignment.
    fn rows(&self, alpha: &[Vec<f64>]) -> Vec<Vec<NeuronRelax>> {
        let depth = self.net.depth();
        (0..depth.saturating_sub(1))
            .map(|k| {
                let layer = &self.net.layers()[k];
                (0..layer.width())
                    .map(|j| {
                        if let Some(row) = self.frozen.get(&(k, j)) {
                            return *row;
                        }
                        let (l, u) = self.bounds.pre(k, j);
                        let a = relax::clamp_alpha(layer.activation, alpha[k][j]);
                        relax::relax_neuron(layer.activation, l, u, a)
                            .expect("bounds are ordered and alpha clamped")
                    })
                    .collect()
            })
            .collect()
    }
}

/// Inner minimum of `c·x` over the input domain together with a minimizer
/// (needed for the γ gradient).
pub fn infimum_with_argmin(c: &[f64], din: &InputDomain) -> Result<(f64, Vec<f64>), DualError> {
    match din {
        InputDomain::Box { lower, upper } => {
            let x: Vec<f64> = c
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(ci, (l, u))| if *ci >= 0.0 { *l } else { *u })
                .collect();
            Ok((dot(c, &x), x))
        }
        InputDomain::LpBall { center, radius, p } => {
            let q = holder_dual(*p);
            let norm = lp_norm(c, q);
            let value = dot(c, center) - radius * norm;
            let x = if norm <= 0.0 {
                center.clone()
            } else if p.is_infinite() {
                c.iter()
                    .zip(center)
                    .map(|(ci, xc)| xc - radius * ci.signum_or_zero())
                    .collect()
            } else if *p == 1.0 {
                // All perturbation mass on the largest-magnitude coordinate.
                let k = c
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .map(|(i, _)| i)
                    .unwrap();
                let mut x = center.clone();
                x[k] -= radius * c[k].signum_or_zero();
                x
            } else {
                c.iter()
                    .zip(center)
                    .map(|(ci, xc)| {
                        xc - radius * ci.signum_or_zero() * (ci.abs() / norm).powf(q - 1.0)
                    })
                    .collect()
            };
            Ok((value, x))
        }
        InputDomain::Polyhedron { a, b } => {
            let mut lp = crate::lp::LinearProgram::new(c.len());
            lp.objective = c.to_vec();
            for (row, &bi) in a.iter_rows().zip(b) {
                lp.push(row.to_vec(), crate::lp::Relation::Le, -bi);
            }
            match crate::lp::simplex_solve(&lp).map_err(|e| DualError::Lp(e.to_string()))? {
                crate::lp::LpSolution {
                    outcome: crate::lp::LpOutcome::Optimal { value, point },
                    ..
                } => Ok((value, point)),
                crate::lp::LpSolution { outcome: crate::lp::LpOutcome::Unbounded, .. } => {
                    Err(DualError::Unbounded)
                }
                _ => Err(DualError::Lp("empty input polyhedron".into())),
            }
        }
    }
}

/// Spec-level entry: the infimum alone.
pub fn infimum_over_domain(c: &[f64], din: &InputDomain) -> Result<f64, DualError> {
    infimum_with_argmin(c, din).map(|(v, _)| v)
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

struct Evaluation {
    state: DualState,
    grad_gamma: Vec<f64>,
    grad_alpha: Vec<Vec<f64>>,
}

fn evaluate(
    inst: &DualInstance,
    gamma: &[f64],
    alpha: &[Vec<f64>],
    with_grad: bool,
) -> Result<Evaluation, DualError> {
    let net = inst.net;
    let depth = net.depth();
    if gamma.len() != inst.poly.rows.len() {
        return Err(DualError::GammaLen(gamma.len(), inst.poly.rows.len()));
    }
    for (r, &g) in gamma.iter().enumerate() {
        if g < 0.0 {
            return Err(DualError::NegativeGamma(g, r));
        }
    }
    let rows = inst.rows(alpha);
    let obj = &inst.obj.coeffs;

    let gamma_dot = |select: &dyn Fn(&PolyRow) -> &[f64], j: usize| -> f64 {
        inst.poly
            .rows
            .iter()
            .zip(gamma)
            .map(|(row, &g)| g * select(row)[j])
            .sum()
    };

    // Backward recursion for ν (per pre layer) and ν̂ (per hidden layer).
    let mut nu: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut nu_hat: Vec<Vec<f64>> = vec![Vec::new(); depth.saturating_sub(1)];
    let last = depth - 1;
    nu[last] = (0..net.width(last))
        .map(|j| -obj.pre[last][j] - gamma_dot(&|r| &r.coeffs.pre[last], j))
        .collect();
    for k in (0..last).rev() {
        let w_next = &net.layers()[k + 1].weights;
        let mut hat = w_next.t_matvec(&nu[k + 1]);
        for (j, h) in hat.iter_mut().enumerate() {
            *h -= gamma_dot(&|r| &r.coeffs.post[k], j) + obj.post[k][j];
        }
        let nu_k: Vec<f64> = hat
            .iter()
            .enumerate()
            .map(|(j, &h)| {
                let row = rows[k][j];
                let through = if h > 0.0 { h * row.upper_slope } else { h * row.lower_slope };
                through - gamma_dot(&|r| &r.coeffs.pre[k], j) - obj.pre[k][j]
            })
            .collect();
        nu_hat[k] = hat;
        nu[k] = nu_k;
    }

    // Input-facing coefficient vector and the infimum over Din.
    let mut c_in = net.layers()[0].weights.t_matvec(&nu[0]);
    for (j, c) in c_in.iter_mut().enumerate() {
        *c = obj.input[j] - *c + gamma_dot(&|r| &r.coeffs.input, j);
    }
    let (inf_val, x_star) = infimum_with_argmin(&c_in, inst.din)?;

    let mut g = inf_val;
    for k in 0..depth {
        g -= dot(&nu[k], &net.layers()[k].bias);
    }
    for k in 0..last {
        for (j, &h) in nu_hat[k].iter().enumerate() {
            let row = rows[k][j];
            if h > 0.0 {
                g -= h * row.upper_offset;
            } else {
                g -= h * row.lower_offset;
            }
        }
    }
    for (row, &gm) in inst.poly.rows.iter().zip(gamma) {
        g += gm * row.offset;
    }

    let mut grad_gamma = Vec::new();
    let mut grad_alpha = Vec::new();
    if with_grad {
        // Adjoints: nubar[k] = ∂g/∂ν(k), nuhatbar[k] = ∂g/∂ν̂(k), holding the
        // sign pattern of ν̂ and the minimizer x* fixed.
        let mut nubar: Vec<Vec<f64>> = vec![Vec::new(); depth];
        let mut nuhatbar: Vec<Vec<f64>> = vec![Vec::new(); depth.saturating_sub(1)];
        let w0 = &net.layers()[0].weights;
        nubar[0] = w0
            .matvec(&x_star)
            .iter()
            .zip(&net.layers()[0].bias)
            .map(|(wx, b)| -wx - b)
            .collect();
        for k in 0..depth {
            if k > 0 {
                let wk = &net.layers()[k].weights;
                nubar[k] = wk
                    .matvec(&nuhatbar[k - 1])
                    .iter()
                    .zip(&net.layers()[k].bias)
                    .map(|(wn, b)| wn - b)
                    .collect();
            }
            if k < last {
                nuhatbar[k] = nu_hat[k]
                    .iter()
                    .zip(&nubar[k])
                    .zip(&rows[k])
                    .map(|((&h, &nb), row)| {
                        if h > 0.0 {
                            row.upper_slope * nb - row.upper_offset
                        } else {
                            row.lower_slope * nb - row.lower_offset
                        }
                    })
                    .collect();
            }
        }
        grad_gamma = inst
            .poly
            .rows
            .iter()
            .map(|row| {
                let mut d = row.offset + dot(&row.coeffs.input, &x_star);
                for k in 0..depth {
                    d -= dot(&nubar[k], &row.coeffs.pre[k]);
                }
                for k in 0..last {
                    d -= dot(&nuhatbar[k], &row.coeffs.post[k]);
                }
                d
            })
            .collect();
        grad_alpha = (0..depth)
            .map(|k| {
                if k >= last {
                    return vec![0.0; net.width(k)];
                }
                let layer = &net.layers()[k];
                (0..layer.width())
                    .map(|j| {
                        let (l, u) = inst.bounds.pre(k, j);
                        let tunable = relax::is_unfixed(layer.activation, l, u)
                            && !inst.frozen.contains_key(&(k, j));
                        if tunable && nu_hat[k][j] < 0.0 {
                            nubar[k][j] * nu_hat[k][j]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
    }

    Ok(Evaluation {
        state: DualState {
            gamma: gamma.to_vec(),
            alpha: alpha.to_vec(),
            nu,
            nu_hat,
            value: g,
        },
        grad_gamma,
        grad_alpha,
    })
}

/// Computes `g(α, γ)` together with the ν/ν̂ vectors.
pub fn dual_value(
    inst: &DualInstance,
    gamma: &[f64],
    alpha: &[Vec<f64>],
) -> Result<DualState, DualError> {
    evaluate(inst, gamma, alpha, false).map(|e| e.state)
}

/// Projected gradient ascent configuration.
#[derive(Debug, Clone)]
pub struct PgdConfig {
    pub iters: usize,
    pub step: f64,
    pub decay: f64,
    pub optimize_alpha: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig { iters: 200, step: 0.1, decay: 0.98, optimize_alpha: true }
    }
}

/// Maximizes `g` over γ ≥ 0 (and optionally α within its admissible box)
/// by projected gradient ascent, returning the best iterate seen. Any
/// iterate is a sound lower bound, so the result is valid regardless of
/// convergence.
pub fn maximize_dual(
    inst: &DualInstance,
    cfg: &PgdConfig,
    alpha_init: &[Vec<f64>],
) -> Result<(f64, DualState), DualError> {
    let net = inst.net;
    let mut gamma = vec![0.0; inst.poly.rows.len()];
    let mut alpha: Vec<Vec<f64>> = alpha_init
        .iter()
        .enumerate()
        .map(|(k, a)| {
            a.iter()
                .map(|&v| relax::clamp_alpha(net.layers()[k].activation, v))
                .collect()
        })
        .collect();
    let mut step = cfg.step;
    let mut best: Option<DualState> = None;
    for it in 0..cfg.iters.max(1) {
        let needs_grad = it + 1 < cfg.iters.max(1);
        let eval = evaluate(inst, &gamma, &alpha, needs_grad)?;
        if best.as_ref().map_or(true, |b| eval.state.value > b.value) {
            best = Some(eval.state);
        }
        if !needs_grad {
            break;
        }
        for (g, d) in gamma.iter_mut().zip(&eval.grad_gamma) {
            *g = (*g + step * d).max(0.0);
        }
        if cfg.optimize_alpha {
            for (k, (a_layer, d_layer)) in alpha.iter_mut().zip(&eval.grad_alpha).enumerate() {
                let kind = net.layers()[k].activation;
                for (a, d) in a_layer.iter_mut().zip(d_layer) {
                    *a = relax::clamp_alpha(kind, *a + step * d);
                }
            }
        }
        step *= cfg.decay;
    }
    let best = best.unwrap();
    Ok((best.value, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::parse_network;
    use crate::sbt;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn fig1() -> Network {
        parse_network(crate::verify::fixtures::FIG1_JSON).unwrap()
    }

    fn unit_box() -> InputDomain {
        InputDomain::Box { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] }
    }

    #[test]
    fn gamma_zero_collapses_to_backsubstitution() {
        let net = fig1();
        let din = unit_box();
        let (bounds, single) = sbt::deeppoly(&net, &din).unwrap();
        let poly = ConstraintPolyhedron::empty();
        let obj = Objective::output(&net);
        let inst = DualInstance::new(&net, &din, &bounds, &poly, &obj);
        let state = dual_value(&inst, &[], &single.alpha).unwrap();
        assert!((state.value - (-0.15)).abs() < 1e-9, "got {}", state.value);
    }

    #[test]
    fn identity_network_lower_bound() {
        let net = parse_network(
            r#"{"layers": [{"weights": [[1]], "bias": [0], "activation": "identity"}]}"#,
        )
        .unwrap();
        let din = InputDomain::Box { lower: vec![-2.0], upper: vec![3.0] };
        let (bounds, single) = sbt::deeppoly(&net, &din).unwrap();
        let poly = ConstraintPolyhedron::empty();
        let obj = Objective::output(&net);
        let inst = DualInstance::new(&net, &din, &bounds, &poly, &obj);
        let state = dual_value(&inst, &[], &single.alpha).unwrap();
        assert!((state.value + 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_objective_gives_zero() {
        let net = fig1();
        let din = unit_box();
        let (bounds, single) = sbt::deeppoly(&net, &din).unwrap();
        let poly = ConstraintPolyhedron::empty();
        let obj = Objective::from_terms(&net, &[]);
        let inst = DualInstance::new(&net, &din, &bounds, &poly, &obj);
        let (t, _) = maximize_dual(&inst, &PgdConfig { iters: 5, ..Default::default() }, &single.alpha)
            .unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn negative_gamma_rejected() {
        let net = fig1();
        let din = unit_box();
        let (bounds, single) = sbt::deeppoly(&net, &din).unwrap();
        let mut poly = ConstraintPolyhedron::empty();
        poly.rows.push(PolyRow { coeffs: LayerStack::zeros(&net), offset: 0.0 });
        let obj = Objective::output(&net);
        let inst = DualInstance::new(&net, &din, &bounds, &poly, &obj);
        assert!(dual_value(&inst, &[-0.1], &single.alpha).is_err());
    }

    #[test]
    fn recursion_shapes() {
        let net = fig1();
        let din = unit_box();
        let (bounds, single) = sbt::deeppoly(&net, &din).unwrap();
        let poly = ConstraintPolyhedron::empty();
        let obj = Objective::output(&net);
        let inst = DualInstance::new(&net, &din, &bounds, &poly, &obj);
        let state = dual_value(&inst, &[], &single.alpha).unwrap();
        assert_eq!(state.nu.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 1]);
        assert_eq!(state.nu_hat.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..10 {
            let net = crate::verify::fixtures::random_net(&mut rng, 2, &[3, 3], true);
            let din = InputDomain::Box { lower: vec![-1.0; 2], upper: vec![1.0; 2] };
            let (bounds, single) = sbt::deeppoly(&net, &din).unwrap();
            let mut poly = ConstraintPolyhedron::empty();
            let mut coeffs = LayerStack::zeros(&net);
            coeffs.add(Var::Post(0, 0), rng.gen_range(-1.0..1.0));
            coeffs.add(Var::Pre(1, 0), rng.gen_range(-1.0..1.0));
            poly.rows.push(PolyRow { coeffs, offset: rng.gen_range(-1.0..1.0) });
            let obj = Objective::output(&net);
            let inst = DualInstance::new(&net, &din, &bounds, &poly, &obj);
            let gamma = vec![rng.gen_range(0.1..0.5)];
            let eval = evaluate(&inst, &gamma, &single.alpha, true).unwrap();
            let h = 1e-6;
            for r in 0..gamma.len() {
                let mut gp = gamma.clone();
                gp[r] += h;
                let mut gm = gamma.clone();
                gm[r] -= h;
                let fd = (dual_value(&inst, &gp, &single.alpha).unwrap().value
                    - dual_value(&inst, &gm, &single.alpha).unwrap().value)
                    / (2.0 * h);
                assert!(
                    (fd - eval.grad_gamma[r]).abs() < 1e-4,
                    "gamma grad {} vs fd {fd}",
                    eval.grad_gamma[r]
                );
            }
            // α gradient, checked at an interior α where the bound is smooth.
            for k in 0..net.depth() - 1 {
                for j in 0..net.width(k) {
                    let (l, u) = bounds.pre(k, j);
                    if !relax::is_unfixed(net.layers()[k].activation, l, u) {
                        continue;
                    }
                    let mut base = single.alpha.clone();
                    base[k][j] = 0.5;
                    let eval = evaluate(&inst, &gamma, &base, true).unwrap();
                    if eval.state.nu_hat[k][j].abs() < 1e-6 {
                        continue; // kink: subgradient, skip the comparison
                    }
                    let mut up = base.clone();
                    up[k][j] += h;
                    let mut dn = base.clone();
                    dn[k][j] -= h;
                    let fd = (dual_value(&inst, &gamma, &up).unwrap().value
                        - dual_value(&inst, &gamma, &dn).unwrap().value)
                        / (2.0 * h);
                    assert!(
                        (fd - eval.grad_alpha[k][j]).abs() < 1e-4,
                        "alpha grad {} vs fd {fd}",
                        eval.grad_alpha[k][j]
                    );
                }
            }
        }
    }

    #[test]
    fn infimum_examples() {
        let box2 = InputDomain::Box { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] };
        assert_eq!(infimum_over_domain(&[1.0, -1.0], &box2).unwrap(), -2.0);
        let ball = InputDomain::LpBall { center: vec![0.0, 0.0], radius: 1.0, p: 2.0 };
        assert!((infimum_over_domain(&[3.0, 4.0], &ball).unwrap() + 5.0).abs() < 1e-12);
        let poly = InputDomain::Polyhedron {
            a: crate::linalg::Matrix::from_rows(&[vec![-1.0], vec![1.0]]),
            b: vec![2.0, -10.0],
        };
        assert!((infimum_over_domain(&[1.0], &poly).unwrap() - 2.0).abs() < 1e-9);
    }
}
