//! Partial multi-neuron relaxation: neuron selection, bounding hyper-plane
//! generation over small neuron groups, and the main tightening loop.
//!
//! Each selected group of `d` unfixed neurons in one layer yields planes
//! `Σ ε_k·(h_k − s_k·x_k) ≤ bias` for every ε ∈ {-1,0,1}^d with at least two
//! non-zero entries, where `s_k` is the lower or upper relaxation slope of
//! neuron `k` (two templates). Biases come from the dual optimizer: once with
//! the group's unfixed relaxations, then once per branch combination with
//! the exact per-phase rows substituted, keeping the weakest (largest)
//! branch bias and the tighter of that against the unbranched bias. Planes
//! accumulate across loop iterations and are never retracted; each one's
//! optimization sees all previously generated planes in its polyhedron.

use crate::dual::{
    maximize_dual, ConstraintPolyhedron, DualError, DualInstance, LayerStack, Objective, PgdConfig,
    PolyRow,
};
use crate::net::{InputDomain, Network, Trace, Var};
use crate::relax::{self, Phase};
use crate::sbt::{
    self, backsubstitute, concretize, BoundDirection, BoundsState, ConcretizeOver, SbtError,
    SingleRelax, SymbolicTarget,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PmnrError {
    #[error(transparent)]
    Sbt(#[from] SbtError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error("group size must be at least 2 for epsilon enumeration, got {0}")]
    GroupTooSmall(usize),
}

/// Which relaxation slope row the plane's pre-activation terms use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Template {
    #[serde(rename = "lower")]
    Lower,
    #[serde(rename = "upper")]
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneProvenance {
    pub epsilon: Vec<i8>,
    pub template: Template,
    pub group_layer: usize,
    pub group_neurons: Vec<usize>,
}

/// One multi-neuron bound `Σ terms ≤ bias` over pre-/post-activation
/// variables.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPlane {
    pub terms: BTreeMap<Var, f64>,
    pub bias: f64,
    pub provenance: PlaneProvenance,
}

impl HyperPlane {
    /// Left-hand-side value on a concrete trace.
    pub fn lhs_on_trace(&self, trace: &Trace) -> f64 {
        self.terms.iter().map(|(&v, &c)| c * trace.value(v)).sum()
    }

    /// Violation (positive means the plane is broken) on a trace.
    pub fn violation(&self, trace: &Trace) -> f64 {
        self.lhs_on_trace(trace) - self.bias
    }

    fn same_terms(&self, other: &BTreeMap<Var, f64>) -> bool {
        self.terms.len() == other.len()
            && self
                .terms
                .iter()
                .zip(other)
                .all(|((v1, c1), (v2, c2))| v1 == v2 && (c1 - c2).abs() < 1e-12)
    }

    fn as_poly_row(&self, net: &Network) -> PolyRow {
        let mut coeffs = LayerStack::zeros(net);
        for (&v, &c) in &self.terms {
            coeffs.add(v, c);
        }
        PolyRow { coeffs, offset: -self.bias }
    }
}

/// A group of unfixed neurons from one layer, canonically ordered by index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronGroup {
    pub layer: usize,
    pub neuron_ids: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "pmnr")]
    Pmnr,
    #[serde(rename = "pmnr_all")]
    PmnrAll,
    #[serde(rename = "pmnr_random")]
    PmnrRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scorer {
    /// Concrete-bound span `u - l` (the simplified score of the worked
    /// example).
    #[serde(rename = "span")]
    Span,
    /// Per-phase back-substituted output ranges, averaged.
    #[serde(rename = "nsse")]
    Nsse,
}

#[derive(Debug, Clone)]
pub struct PmnrConfig {
    pub variant: Variant,
    pub group_size: usize,
    pub max_iters: usize,
    pub pgd: PgdConfig,
    pub seed: u64,
    pub scorer: Scorer,
}

impl Default for PmnrConfig {
    fn default() -> Self {
        PmnrConfig {
            variant: Variant::Pmnr,
            group_size: 2,
            max_iters: 10,
            pgd: PgdConfig::default(),
            seed: 0,
            scorer: Scorer::Span,
        }
    }
}

// ---------------------------------------------------------------------------
// Scores and selection
// ---------------------------------------------------------------------------

fn unfixed_neurons(net: &Network, bounds: &BoundsState) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0..net.depth() - 1 {
        let kind = net.layers()[k].activation;
        for j in 0..net.width(k) {
            let (l, u) = bounds.pre(k, j);
            if relax::is_unfixed(kind, l, u) {
                out.push((k, j));
            }
        }
    }
    out
}

/// Simplified score: the span of the neuron's concrete pre-activation
/// bounds.
pub fn span_scores(net: &Network, bounds: &BoundsState) -> BTreeMap<(usize, usize), f64> {
    unfixed_neurons(net, bounds)
        .into_iter()
        .map(|(k, j)| {
            let (l, u) = bounds.pre(k, j);
            ((k, j), u - l)
        })
        .collect()
}

/// Neuron selection scores from symbolic expressions: for every phase of an
/// unfixed neuron, the output row is back-substituted (with the neuron's
/// relaxation replaced by the phase's exact segment) down to the neuron's
/// layer and concretized over that layer's concrete bounds, restricted to
/// the phase; the score is the mean over phases of the resulting output
/// range.
pub fn nsse_scores(
    net: &Network,
    bounds: &BoundsState,
    relax: &SingleRelax,
) -> BTreeMap<(usize, usize), f64> {
    let last = net.depth() - 1;
    let mut scores = BTreeMap::new();
    for (k, j) in unfixed_neurons(net, bounds) {
        let kind = net.layers()[k].activation;
        let (l, u) = bounds.pre(k, j);
        let Ok(phases) = relax::phases(kind, l, u) else { continue };
        let mut total = 0.0;
        for phase in &phases {
            let mut modified = relax.clone();
            modified.rows[k][j] = phase.exact_relax;
            let mut lo_box = bounds.pre_lower[k].clone();
            let mut hi_box = bounds.pre_upper[k].clone();
            lo_box[j] = lo_box[j].max(phase.pre_lower);
            hi_box[j] = hi_box[j].min(phase.pre_upper);
            let value = |dir: BoundDirection| {
                let target =
                    SymbolicTarget { layer: last, coeffs: vec![1.0], offset: 0.0, direction: dir };
                let sb = backsubstitute(net, &modified, &target, Some(k));
                concretize(&sb, &ConcretizeOver::Box { lower: &lo_box, upper: &hi_box })
                    .expect("box concretization is infallible")
            };
            total += value(BoundDirection::Upper) - value(BoundDirection::Lower);
        }
        scores.insert((k, j), total / phases.len() as f64);
    }
    scores
}

/// Picks the neuron group for one iteration. `Pmnr` takes the top-`d`
/// scorers from the layer with the highest score sum; `PmnrRandom` picks a
/// uniform layer and then `d` uniform unfixed neurons from it. Returns
/// `None` when there is nothing to select (the loop then degenerates to
/// single-neuron tightening).
pub fn select_neurons(
    scores: &BTreeMap<(usize, usize), f64>,
    d: usize,
    variant: Variant,
    seed: u64,
) -> Option<NeuronGroup> {
    if scores.is_empty() {
        return None;
    }
    let mut per_layer: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (&(k, j), &s) in scores {
        per_layer.entry(k).or_default().push((j, s));
    }
    let layer = match variant {
        Variant::PmnrRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layers: Vec<usize> = per_layer.keys().copied().collect();
            let pick = *layers.choose(&mut rng).unwrap();
            let mut members: Vec<(usize, f64)> = per_layer[&pick].clone();
            members.shuffle(&mut rng);
            members.truncate(d);
            members.sort_by_key(|(j, _)| *j);
            return Some(NeuronGroup {
                layer: pick,
                neuron_ids: members.iter().map(|(j, _)| *j).collect(),
                scores: members.iter().map(|(_, s)| *s).collect(),
            });
        }
        _ => {
            // Highest score-sum layer; ties go to the lower index.
            let mut sums: Vec<(usize, f64)> = per_layer
                .iter()
                .map(|(k, v)| (*k, v.iter().map(|(_, s)| s).sum()))
                .collect();
            sums.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            sums[0].0
        }
    };
    let mut members = per_layer[&layer].clone();
    members.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    members.truncate(d);
    members.sort_by_key(|(j, _)| *j);
    Some(NeuronGroup {
        layer,
        neuron_ids: members.iter().map(|(j, _)| *j).collect(),
        scores: members.iter().map(|(_, s)| *s).collect(),
    })
}

/// Sliding windows of `d` consecutive unfixed neurons per layer
/// (consecutive in unfixed-neuron order).
pub fn pmnr_all_groups(net: &Network, bounds: &BoundsState, d: usize) -> Vec<NeuronGroup> {
    let mut per_layer: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, j) in unfixed_neurons(net, bounds) {
        per_layer.entry(k).or_default().push(j);
    }
    let mut groups = Vec::new();
    for (k, ids) in per_layer {
        if ids.len() < d {
            continue;
        }
        for w in ids.windows(d) {
            let scores = w
                .iter()
                .map(|&j| {
                    let (l, u) = bounds.pre(k, j);
                    u - l
                })
                .collect();
            groups.push(NeuronGroup { layer: k, neuron_ids: w.to_vec(), scores });
        }
    }
    groups
}

// ---------------------------------------------------------------------------
// Hyper-plane generation
// ---------------------------------------------------------------------------

/// All ε ∈ {-1, 0, 1}^d with more than one non-zero entry, in lexicographic
/// order. Their count is `3^d − 2d − 1`.
pub fn enumerate_epsilons(d: usize) -> Result<Vec<Vec<i8>>, PmnrError> {
    if d < 2 {
        return Err(PmnrError::GroupTooSmall(d));
    }
    let total = 3usize.pow(d as u32);
    let mut out = Vec::with_capacity(total - 2 * d - 1);
    for code in 0..total {
        let eps: Vec<i8> = (0..d)
            .map(|i| ((code / 3usize.pow((d - 1 - i) as u32)) % 3) as i8 - 1)
            .collect();
        if eps.iter().filter(|&&e| e != 0).count() >= 2 {
            out.push(eps);
        }
    }
    Ok(out)
}

/// Template planes for a group, with their simple-concretization fallback
/// biases. Planes whose two templates coincide (constant upper rows) are
/// deduplicated.
pub struct InitialPlane {
    pub terms: BTreeMap<Var, f64>,
    pub provenance: PlaneProvenance,
    /// Interval-arithmetic upper bound of the LHS over the current bounds.
    pub ia_upper: f64,
}

pub fn initial_planes(
    group: &NeuronGroup,
    relax: &SingleRelax,
    bounds: &BoundsState,
    epsilons: &[Vec<i8>],
) -> Vec<InitialPlane> {
    let k = group.layer;
    let mut out: Vec<InitialPlane> = Vec::new();
    for template in [Template::Lower, Template::Upper] {
        for eps in epsilons {
            let mut terms: BTreeMap<Var, f64> = BTreeMap::new();
            for (pos, &j) in group.neuron_ids.iter().enumerate() {
                let e = f64::from(eps[pos]);
                if e == 0.0 {
                    continue;
                }
                *terms.entry(Var::Post(k, j)).or_insert(0.0) += e;
                let row = relax.row(k, j);
                let slope = match template {
                    Template::Lower => row.lower_slope,
                    Template::Upper => row.upper_slope,
                };
                if slope != 0.0 {
                    *terms.entry(Var::Pre(k, j)).or_insert(0.0) += -e * slope;
                }
            }
            if out.iter().any(|p| same_term_map(&p.terms, &terms)) {
                continue;
            }
            let ia_upper = ia_extremum(&terms, bounds, true);
            out.push(InitialPlane {
                terms,
                provenance: PlaneProvenance {
                    epsilon: eps.clone(),
                    template,
                    group_layer: k,
                    group_neurons: group.neuron_ids.clone(),
                },
                ia_upper,
            });
        }
    }
    out
}

fn same_term_map(a: &BTreeMap<Var, f64>, b: &BTreeMap<Var, f64>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|((v1, c1), (v2, c2))| v1 == v2 && (c1 - c2).abs() < 1e-12)
}

/// Interval extremum of `Σ terms` over stored (unclipped) bounds.
fn ia_extremum(terms: &BTreeMap<Var, f64>, bounds: &BoundsState, maximize: bool) -> f64 {
    terms
        .iter()
        .map(|(&v, &c)| {
            let (lo, hi) = match v {
                Var::Input(j) => (bounds.input_lower[j], bounds.input_upper[j]),
                Var::Pre(k, j) => bounds.pre(k, j),
                Var::Post(k, j) => bounds.post(k, j),
            };
            if (c >= 0.0) == maximize {
                c * hi
            } else {
                c * lo
            }
        })
        .sum()
}

/// Interval lower bound of the LHS with the group members restricted to a
/// branch combination (pre intervals clipped to the phase, posts replaced
/// by the exact segment image). Used by the infeasible-branch test.
fn branch_ia_lower(
    terms: &BTreeMap<Var, f64>,
    bounds: &BoundsState,
    group: &NeuronGroup,
    combo: &[&Phase],
) -> f64 {
    terms
        .iter()
        .map(|(&v, &c)| {
            let member = |j: usize| group.neuron_ids.iter().position(|&g| g == j);
            let (lo, hi) = match v {
                Var::Input(j) => (bounds.input_lower[j], bounds.input_upper[j]),
                Var::Pre(k, j) => {
                    let (l, u) = bounds.pre(k, j);
                    match member(j).filter(|_| k == group.layer) {
                        Some(pos) => {
                            (l.max(combo[pos].pre_lower), u.min(combo[pos].pre_upper))
                        }
                        None => (l, u),
                    }
                }
                Var::Post(k, j) => match member(j).filter(|_| k == group.layer) {
                    Some(pos) => {
                        let ph = combo[pos];
                        let (l, u) = bounds.pre(k, j);
                        let (pl, pu) = (l.max(ph.pre_lower), u.min(ph.pre_upper));
                        let r = ph.exact_relax;
                        if r.lower_slope >= 0.0 {
                            (r.lower_at(pl), r.upper_at(pu))
                        } else {
                            (r.lower_at(pu), r.upper_at(pl))
                        }
                    }
                    None => bounds.post(k, j),
                },
            };
            if c >= 0.0 {
                c * lo
            } else {
                c * hi
            }
        })
        .sum()
}

/// A branch combination flagged infeasible during plane optimization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfeasibleBranch {
    pub group_layer: usize,
    pub group_neurons: Vec<usize>,
    /// One phase id per group member.
    pub phases: Vec<usize>,
}

/// Runs the plane-generation loop for one group: per template plane, one
/// unbranched dual optimization, then one per branch combination with the
/// members' relaxations replaced by their exact segments. The final bias is
/// `min(unbranched, max over branches, simple concretization)` — the
/// weakest branch keeps soundness, the other two can only tighten it.
pub fn generate_pmnr(
    net: &Network,
    din: &InputDomain,
    bounds: &BoundsState,
    relax: &SingleRelax,
    group: &NeuronGroup,
    prior: &[HyperPlane],
    cfg: &PmnrConfig,
) -> Result<(Vec<HyperPlane>, Vec<InfeasibleBranch>), PmnrError> {
    if group.neuron_ids.len() < 2 {
        return Ok((Vec::new(), Vec::new()));
    }
    let epsilons = enumerate_epsilons(group.neuron_ids.len().min(cfg.group_size))?;
    let inits = initial_planes(group, relax, bounds, &epsilons);

    let member_phases: Vec<Vec<Phase>> = group
        .neuron_ids
        .iter()
        .map(|&j| {
            let (l, u) = bounds.pre(group.layer, j);
            relax::phases(net.layers()[group.layer].activation, l, u)
                .expect("bounds are ordered")
        })
        .collect();
    let combos = cartesian(&member_phases);

    let mut planes: Vec<HyperPlane> = Vec::new();
    let mut infeasible: Vec<InfeasibleBranch> = Vec::new();
    for init in inits {
        let poly = ConstraintPolyhedron {
            rows: prior
                .iter()
                .chain(planes.iter())
                .map(|p| p.as_poly_row(net))
                .collect(),
        };
        let obj = Objective::from_terms(
            net,
            &init.terms.iter().map(|(&v, &c)| (v, -c)).collect::<Vec<_>>(),
        );
        let inst = DualInstance::new(net, din, bounds, &poly, &obj);
        let (t_optim, _) = maximize_dual(&inst, &cfg.pgd, &relax.alpha)?;

        let mut t_branches = f64::INFINITY;
        for combo in &combos {
            let mut frozen = BTreeMap::new();
            for (pos, &j) in group.neuron_ids.iter().enumerate() {
                frozen.insert((group.layer, j), combo[pos].exact_relax);
            }
            let binst = DualInstance { frozen, ..DualInstance::new(net, din, bounds, &poly, &obj) };
            let (t_b, _) = maximize_dual(&binst, &cfg.pgd, &relax.alpha)?;
            let l_ia = branch_ia_lower(&init.terms, bounds, group, combo);
            if t_b > -l_ia + 1e-6 {
                let report = InfeasibleBranch {
                    group_layer: group.layer,
                    group_neurons: group.neuron_ids.clone(),
                    phases: combo.iter().map(|p| p.id).collect(),
                };
                if !infeasible.contains(&report) {
                    infeasible.push(report);
                }
            }
            t_branches = t_branches.min(t_b);
        }
        let t_final = t_optim.max(t_branches);
        let bias = (-t_final).min(init.ia_upper);
        planes.push(HyperPlane { terms: init.terms, bias, provenance: init.provenance });
    }
    Ok((planes, infeasible))
}

fn cartesian<'a>(per_member: &'a [Vec<Phase>]) -> Vec<Vec<&'a Phase>> {
    let mut combos: Vec<Vec<&Phase>> = vec![Vec::new()];
    for phases in per_member {
        let mut next = Vec::with_capacity(combos.len() * phases.len());
        for combo in &combos {
            for ph in phases {
                let mut c = combo.clone();
                c.push(ph);
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

// ---------------------------------------------------------------------------
// α selection
// ---------------------------------------------------------------------------

/// The first three α's reuse the tightening defaults; `α_final` is refined
/// by a short gradient ascent of the certified output lower bound (any
/// admissible α stays sound, so this only affects tightness).
pub fn pick_alphas(
    net: &Network,
    din: &InputDomain,
    bounds: &BoundsState,
    relax: &SingleRelax,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>), PmnrError> {
    let alpha_initial = relax.alpha.clone();
    let alpha_select = alpha_initial.clone();
    let alpha_gener = alpha_initial.clone();
    if net.output_dim() != 1 {
        return Ok((alpha_select, alpha_gener, alpha_initial));
    }
    let poly = ConstraintPolyhedron::empty();
    let obj = Objective::output(net);
    let inst = DualInstance::new(net, din, bounds, &poly, &obj);
    let cfg = PgdConfig { iters: 20, step: 0.05, decay: 0.95, optimize_alpha: true };
    let (_, best) = maximize_dual(&inst, &cfg, &alpha_initial)?;
    Ok((alpha_select, alpha_gener, best.alpha))
}

// ---------------------------------------------------------------------------
// Main loop
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct PmnrOutcome {
    pub bounds: BoundsState,
    pub relax: SingleRelax,
    pub planes: Vec<HyperPlane>,
    pub infeasible: Vec<InfeasibleBranch>,
    pub iterations: usize,
}

/// The main loop: single-neuron tightening, α selection, neuron selection,
/// plane generation, LP post-tightening — repeated until the iteration
/// budget is spent, nothing improves by more than 1e-7, or a contradiction
/// (⊥) is derived. `output_at_least` carries the canonical output-domain
/// row into the backward tightening pass.
pub fn pmnr_loop(
    net: &Network,
    din: &InputDomain,
    output_at_least: Option<f64>,
    cfg: &PmnrConfig,
) -> Result<PmnrOutcome, PmnrError> {
    let mut carried: Option<BoundsState> = None;
    let mut planes: Vec<HyperPlane> = Vec::new();
    let mut infeasible: Vec<InfeasibleBranch> = Vec::new();
    let mut iterations = 0;
    let mut last_relax: Option<SingleRelax> = None;

    for iter in 0..cfg.max_iters.max(1) {
        iterations = iter + 1;
        let opts = sbt::SbtOptions { alphas: None, seed: carried.as_ref(), fixings: None };
        let (mut state, relax) = sbt::deeppoly_with(net, din, &opts)?;
        if state.contradiction {
            return Ok(PmnrOutcome {
                bounds: state,
                relax,
                planes,
                infeasible,
                iterations,
            });
        }
        let (_, _, alpha_final) = pick_alphas(net, din, &state, &relax)?;

        let groups: Vec<NeuronGroup> = match cfg.variant {
            Variant::PmnrAll => pmnr_all_groups(net, &state, cfg.group_size),
            Variant::Pmnr | Variant::PmnrRandom => {
                let scores = match cfg.scorer {
                    Scorer::Span => span_scores(net, &state),
                    Scorer::Nsse => nsse_scores(net, &state, &relax),
                };
                select_neurons(
                    &scores,
                    cfg.group_size,
                    cfg.variant,
                    cfg.seed.wrapping_add(iter as u64),
                )
                .into_iter()
                .collect()
            }
        };

        for group in &groups {
            let (new_planes, new_inf) =
                generate_pmnr(net, din, &state, &relax, group, &planes, cfg)?;
            for plane in new_planes {
                match planes.iter_mut().find(|p| p.same_terms(&plane.terms)) {
                    Some(existing) => existing.bias = existing.bias.min(plane.bias),
                    None => planes.push(plane),
                }
            }
            for inf in new_inf {
                if !infeasible.contains(&inf) {
                    infeasible.push(inf);
                }
            }
        }

        let relax_final = sbt::relax_from_bounds(net, &state, &alpha_final)?;
        let tightened =
            crate::lp::post_tighten(net, din, output_at_least, &state, &relax_final, &planes);
        if tightened.contradiction {
            state.contradiction = true;
            return Ok(PmnrOutcome { bounds: state, relax, planes, infeasible, iterations });
        }
        let revised = state.intersect(&tightened, 1e-7);
        carried = Some(state);
        last_relax = Some(relax);
        if !revised {
            break;
        }
    }

    Ok(PmnrOutcome {
        bounds: carried.expect("at least one iteration ran"),
        relax: last_relax.expect("at least one iteration ran"),
        planes,
        infeasible,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// planes.json
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TermJson {
    layer: usize,
    index: usize,
    kind: String,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
struct PlaneJson {
    terms: Vec<TermJson>,
    bias: f64,
    epsilon: Vec<i8>,
    template: Template,
    group_layer: usize,
    group_neurons: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PlanesFileJson {
    planes: Vec<PlaneJson>,
    infeasible_branches: Vec<InfeasibleBranch>,
}

pub fn planes_to_json(planes: &[HyperPlane], infeasible: &[InfeasibleBranch]) -> String {
    let planes = planes
        .iter()
        .map(|p| PlaneJson {
            terms: p
                .terms
                .iter()
                .map(|(&v, &c)| {
                    let (layer, index, kind) = match v {
                        Var::Input(j) => (0, j, "input"),
                        Var::Pre(k, j) => (k, j, "pre"),
                        Var::Post(k, j) => (k, j, "post"),
                    };
                    TermJson { layer, index, kind: kind.to_string(), coeff: c }
                })
                .collect(),
            bias: p.bias,
            epsilon: p.provenance.epsilon.clone(),
            template: p.provenance.template,
            group_layer: p.provenance.group_layer,
            group_neurons: p.provenance.group_neurons.clone(),
        })
        .collect();
    serde_json::to_string_pretty(&PlanesFileJson {
        planes,
        infeasible_branches: infeasible.to_vec(),
    })
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::parse_network;

    fn fig1() -> Network {
        parse_network(crate::verify::fixtures::FIG1_JSON).unwrap()
    }

    fn unit_box() -> InputDomain {
        InputDomain::Box { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] }
    }

    #[test]
    fn epsilon_counts() {
        for (d, want) in [(2usize, 4usize), (3, 20), (4, 72), (5, 232), (6, 716)] {
            let eps = enumerate_epsilons(d).unwrap();
            assert_eq!(eps.len(), want, "d={d}");
            assert_eq!(eps.len(), 3usize.pow(d as u32) - 2 * d - 1);
            let mut dedup = eps.clone();
            dedup.dedup();
            assert_eq!(dedup.len(), eps.len());
        }
        assert!(enumerate_epsilons(1).is_err());
    }

    #[test]
    fn span_scores_running_example() {
        let net = fig1();
        let (bounds, _) = sbt::deeppoly(&net, &unit_box()).unwrap();
        let scores = span_scores(&net, &bounds);
        assert_eq!(scores.len(), 4);
        assert_eq!(scores[&(0, 1)], 10.0);
        assert_eq!(scores[&(0, 2)], 2.0);
        assert_eq!(scores[&(1, 0)], 8.0);
        assert_eq!(scores[&(1, 1)], 12.0);
    }

    #[test]
    fn selection_running_example() {
        let net = fig1();
        let (bounds, _) = sbt::deeppoly(&net, &unit_box()).unwrap();
        let scores = span_scores(&net, &bounds);
        let group = select_neurons(&scores, 2, Variant::Pmnr, 0).unwrap();
        assert_eq!(group.layer, 1);
        assert_eq!(group.neuron_ids, vec![0, 1]);
    }

    #[test]
    fn selection_takes_all_when_short() {
        let mut scores = BTreeMap::new();
        scores.insert((0, 3), 1.5);
        let group = select_neurons(&scores, 2, Variant::Pmnr, 0).unwrap();
        assert_eq!(group.neuron_ids, vec![3]);
    }

    #[test]
    fn random_selection_is_reproducible() {
        let net = fig1();
        let (bounds, _) = sbt::deeppoly(&net, &unit_box()).unwrap();
        let scores = span_scores(&net, &bounds);
        let a = select_neurons(&scores, 2, Variant::PmnrRandom, 17).unwrap();
        let b = select_neurons(&scores, 2, Variant::PmnrRandom, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pmnr_all_groups_running_example() {
        let net = fig1();
        let (bounds, _) = sbt::deeppoly(&net, &unit_box()).unwrap();
        let groups = pmnr_all_groups(&net, &bounds, 2);
        assert_eq!(groups.len(), 2);
        assert_eq!((groups[0].layer, groups[0].neuron_ids.clone()), (0, vec![1, 2]));
        assert_eq!((groups[1].layer, groups[1].neuron_ids.clone()), (1, vec![0, 1]));
    }

    #[test]
    fn window_count() {
        // Widening layer 0's bounds makes all three neurons unfixed: with
        // d = 2 that is two sliding windows for the layer.
        let net = fig1();
        let (mut bounds, _) = sbt::deeppoly(&net, &unit_box()).unwrap();
        bounds.pre_lower[0] = vec![-1.0, -1.0, -1.0];
        bounds.pre_upper[0] = vec![1.0, 1.0, 1.0];
        let groups = pmnr_all_groups(&net, &bounds, 2);
        let layer0: Vec<_> = groups.iter().filter(|g| g.layer == 0).collect();
        assert_eq!(layer0.len(), 2);
        assert_eq!(layer0[0].neuron_ids, vec![0, 1]);
        assert_eq!(layer0[1].neuron_ids, vec![1, 2]);
    }

    #[test]
    fn initial_planes_running_example() {
        let net = fig1();
        let (bounds, relax) = sbt::deeppoly(&net, &unit_box()).unwrap();
        let eps = enumerate_epsilons(2).unwrap();
        // ReLU pair: lower (identity) and upper (7/8, 7/12) templates differ.
        let group = NeuronGroup { layer: 1, neuron_ids: vec![0, 1], scores: vec![8.0, 12.0] };
        let planes = initial_planes(&group, &relax, &bounds, &eps);
        assert_eq!(planes.len(), 8);
        // Abs pair: both template rows have zero slope, so they collapse.
        let group = NeuronGroup { layer: 0, neuron_ids: vec![1, 2], scores: vec![10.0, 2.0] };
        let planes = initial_planes(&group, &relax, &bounds, &eps);
        assert_eq!(planes.len(), 4);
        for p in &planes {
            assert!(p.terms.keys().all(|v| matches!(v, Var::Post(0, _))));
        }
    }

    #[test]
    fn feasibility_bias_of_first_plane() {
        // The (+1,+1) lower-template plane concretizes to 20 over the
        // worked example's bounds.
        let net = fig1();
        let (bounds, relax) = sbt::deeppoly(&net, &unit_box()).unwrap();
        let eps = enumerate_epsilons(2).unwrap();
        let group = NeuronGroup { layer: 1, neuron_ids: vec![0, 1], scores: vec![8.0, 12.0] };
        let planes = initial_planes(&group, &relax, &bounds, &eps);
        let plus_plus = planes
            .iter()
            .find(|p| p.provenance.template == Template::Lower && p.provenance.epsilon == vec![1, 1])
            .unwrap();
        assert!((plus_plus.ia_upper - 20.0).abs() < 1e-9);
    }
}
