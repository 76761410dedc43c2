//! Symbolic bound tightening via back-substitution and concretization.
//!
//! Pre-activation bounds of each layer are obtained by expressing the
//! layer's affine rows symbolically over earlier layers, substituting the
//! single-neuron relaxation rows one layer at a time (upper rows for
//! positive coefficients of an upper bound, lower rows otherwise) all the
//! way down to the input, and concretizing over the input domain.
//!
//! The stored post-activation intervals are the plain concretizations of the
//! symbolic post rows, *not* intersected with the activation's image (an
//! unfixed ReLU may therefore carry a negative stored lower bound). The
//! verifier-facing [`BoundsState::clipped_post_bounds`] applies the image
//! intersection.

use crate::linalg::dot;
use crate::net::{ActivationKind, InputDomain, NetError, Network, Trace};
use crate::relax::{self, NeuronRelax};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SbtError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Relax(#[from] relax::RelaxError),
    #[error("unbounded input polyhedron")]
    UnboundedDomain,
    #[error("{0}")]
    Lp(String),
}

/// Per-neuron concrete intervals for pre- and post-activation values.
///
/// Layer indices are 0-based into `Network::layers`; input bounds are kept
/// separately. `contradiction` marks an empty bounds state (⊥).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsState {
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub pre_lower: Vec<Vec<f64>>,
    pub pre_upper: Vec<Vec<f64>>,
    pub post_lower: Vec<Vec<f64>>,
    pub post_upper: Vec<Vec<f64>>,
    pub contradiction: bool,
}

impl BoundsState {
    pub fn pre(&self, layer: usize, j: usize) -> (f64, f64) {
        (self.pre_lower[layer][j], self.pre_upper[layer][j])
    }

    pub fn post(&self, layer: usize, j: usize) -> (f64, f64) {
        (self.post_lower[layer][j], self.post_upper[layer][j])
    }

    /// Output-layer interval (the output layer is affine, so pre = post).
    pub fn output(&self) -> (f64, f64) {
        let last = self.pre_lower.len() - 1;
        (self.pre_lower[last][0], self.pre_upper[last][0])
    }

    /// Post-activation bounds intersected with the activation's exact image
    /// of the pre-activation interval.
    pub fn clipped_post_bounds(&self, net: &Network) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut lo = self.post_lower.clone();
        let mut hi = self.post_upper.clone();
        for (k, layer) in net.layers().iter().enumerate() {
            for j in 0..layer.width() {
                let (il, iu) = layer
                    .activation
                    .interval_image(self.pre_lower[k][j], self.pre_upper[k][j]);
                lo[k][j] = lo[k][j].max(il);
                hi[k][j] = hi[k][j].min(iu);
            }
        }
        (lo, hi)
    }

    /// Intersects with `other`, returning whether any bound improved by more
    /// than `tol` (the "revision" test of the stop condition).
    pub fn intersect(&mut self, other: &BoundsState, tol: f64) -> bool {
        let mut revised = false;
        let mut merge = |mine: &mut Vec<Vec<f64>>, theirs: &Vec<Vec<f64>>, is_lower: bool| {
            for (m, t) in mine.iter_mut().zip(theirs) {
                for (a, &b) in m.iter_mut().zip(t) {
                    let better = if is_lower { b > *a + tol } else { b < *a - tol };
                    if is_lower && b > *a {
                        *a = b;
                    } else if !is_lower && b < *a {
                        *a = b;
                    }
                    revised |= better;
                }
            }
        };
        merge(&mut self.pre_lower, &other.pre_lower, true);
        merge(&mut self.post_lower, &other.post_lower, true);
        merge(&mut self.pre_upper, &other.pre_upper, false);
        merge(&mut self.post_upper, &other.post_upper, false);
        self.contradiction |= other.contradiction;
        if !self.contradiction {
            self.contradiction = self.any_empty();
        }
        revised
    }

    fn any_empty(&self) -> bool {
        let bad = |lo: &[Vec<f64>], hi: &[Vec<f64>]| {
            lo.iter()
                .zip(hi)
                .any(|(l, u)| l.iter().zip(u).any(|(a, b)| a > b))
        };
        bad(&self.pre_lower, &self.pre_upper) || bad(&self.post_lower, &self.post_upper)
    }

    /// Pointwise interval containment `self ⊆ other` on pre bounds and
    /// clipped post bounds, up to `tol`.
    pub fn is_subset_of(&self, other: &BoundsState, net: &Network, tol: f64) -> bool {
        if self.contradiction {
            return true;
        }
        let (slo, shi) = self.clipped_post_bounds(net);
        let (olo, ohi) = other.clipped_post_bounds(net);
        let pre_ok = self
            .pre_lower
            .iter()
            .zip(&other.pre_lower)
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| *x >= y - tol))
            && self
                .pre_upper
                .iter()
                .zip(&other.pre_upper)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| *x <= y + tol));
        let post_ok = slo
            .iter()
            .zip(&olo)
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| *x >= y - tol))
            && shi
                .iter()
                .zip(&ohi)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| *x <= y + tol));
        pre_ok && post_ok
    }

    /// Largest violation of the intervals by a concrete forward trace.
    pub fn trace_violation(&self, trace: &Trace) -> f64 {
        let mut worst = 0.0f64;
        for (k, xs) in trace.pre.iter().enumerate() {
            for (j, &x) in xs.iter().enumerate() {
                worst = worst.max(self.pre_lower[k][j] - x).max(x - self.pre_upper[k][j]);
            }
        }
        for (k, hs) in trace.post.iter().enumerate() {
            for (j, &h) in hs.iter().enumerate() {
                worst = worst.max(self.post_lower[k][j] - h).max(h - self.post_upper[k][j]);
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            pre: Vec<Vec<[f64; 2]>>,
            post: Vec<Vec<[f64; 2]>>,
            input: Vec<[f64; 2]>,
            contradiction: bool,
            #[serde(skip_serializing_if = "Option::is_none")]
            note: Option<&'a str>,
        }
        let pair = |lo: &[Vec<f64>], hi: &[Vec<f64>]| {
            lo.iter()
                .zip(hi)
                .map(|(l, u)| l.iter().zip(u).map(|(a, b)| [*a, *b]).collect())
                .collect()
        };
        serde_json::to_string_pretty(&Out {
            pre: pair(&self.pre_lower, &self.pre_upper),
            post: pair(&self.post_lower, &self.post_upper),
            input: self
                .input_lower
                .iter()
                .zip(&self.input_upper)
                .map(|(a, b)| [*a, *b])
                .collect(),
            contradiction: self.contradiction,
            note: None,
        })
        .unwrap()
    }
}

/// Per-layer diagonal relaxation rows plus the α vector they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleRelax {
    pub rows: Vec<Vec<NeuronRelax>>,
    pub alpha: Vec<Vec<f64>>,
}

impl SingleRelax {
    pub fn row(&self, layer: usize, j: usize) -> NeuronRelax {
        self.rows[layer][j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundDirection {
    Lower,
    Upper,
}

/// What a [`SymbolicBound`]'s coefficients range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundRef {
    Input,
    /// Pre-activation variables of the given layer.
    Pre(usize),
}

/// A linear bound `coeffs·v + offset` over a reference layer's variables,
/// sound in the stated direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicBound {
    pub reference: BoundRef,
    pub coeffs: Vec<f64>,
    pub offset: f64,
    pub direction: BoundDirection,
}

/// A row over a layer's pre-activation variables to be pushed down.
#[derive(Debug, Clone)]
pub struct SymbolicTarget {
    pub layer: usize,
    pub coeffs: Vec<f64>,
    pub offset: f64,
    pub direction: BoundDirection,
}

/// Back-substitutes `target` through affine layers and relaxation rows down
/// to `down_to` (pre-activation variables of that layer) or, with `None`,
/// all the way to the input.
pub fn backsubstitute(
    net: &Network,
    relax: &SingleRelax,
    target: &SymbolicTarget,
    down_to: Option<usize>,
) -> SymbolicBound {
    let mut coeffs = target.coeffs.clone();
    let mut offset = target.offset;
    let mut layer = target.layer;
    loop {
        if down_to == Some(layer) {
            return SymbolicBound {
                reference: BoundRef::Pre(layer),
                coeffs,
                offset,
                direction: target.direction,
            };
        }
        // x(layer) = W·h(layer-1) + b
        let l = &net.layers()[layer];
        offset += dot(&coeffs, &l.bias);
        coeffs = l.weights.t_matvec(&coeffs);
        if layer == 0 {
            return SymbolicBound {
                reference: BoundRef::Input,
                coeffs,
                offset,
                direction: target.direction,
            };
        }
        // h(layer-1) -> x(layer-1) through the relaxation rows.
        layer -= 1;
        for (c, row) in coeffs.iter_mut().zip(&relax.rows[layer]) {
            let use_upper = match target.direction {
                BoundDirection::Upper => *c >= 0.0,
                BoundDirection::Lower => *c < 0.0,
            };
            let (slope, off) = if use_upper {
                (row.upper_slope, row.upper_offset)
            } else {
                (row.lower_slope, row.lower_offset)
            };
            offset += *c * off;
            *c *= slope;
        }
    }
}

/// Where a symbolic bound gets concretized.
pub enum ConcretizeOver<'a> {
    Domain(&'a InputDomain),
    Box { lower: &'a [f64], upper: &'a [f64] },
}

/// Worst-case value of a symbolic bound over the given region: the maximum
/// for upper bounds, the minimum for lower bounds.
pub fn concretize(sb: &SymbolicBound, over: &ConcretizeOver) -> Result<f64, SbtError> {
    let maximize = sb.direction == BoundDirection::Upper;
    let extremum = match over {
        ConcretizeOver::Box { lower, upper } => linear_extremum_box(&sb.coeffs, lower, upper, maximize),
        ConcretizeOver::Domain(din) => match din {
            InputDomain::Box { lower, upper } => {
                linear_extremum_box(&sb.coeffs, lower, upper, maximize)
            }
            InputDomain::LpBall { center, radius, p } => {
                let q = holder_dual(*p);
                let norm = lp_norm(&sb.coeffs, q);
                let at_center = dot(&sb.coeffs, center);
                if maximize {
                    at_center + radius * norm
                } else {
                    at_center - radius * norm
                }
            }
            InputDomain::Polyhedron { a, b } => {
                crate::lp::linear_extremum_polyhedron(a, b, &sb.coeffs, maximize)
                    .map_err(|e| SbtError::Lp(e.to_string()))?
            }
        },
    };
    Ok(extremum + sb.offset)
}

pub(crate) fn linear_extremum_box(c: &[f64], lower: &[f64], upper: &[f64], maximize: bool) -> f64 {
    c.iter()
        .zip(lower.iter().zip(upper))
        .map(|(ci, (l, u))| {
            if (*ci >= 0.0) == maximize {
                ci * u
            } else {
                ci * l
            }
        })
        .sum()
}

pub(crate) fn holder_dual(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

pub(crate) fn lp_norm(c: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        c.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else if q == 1.0 {
        c.iter().map(|v| v.abs()).sum()
    } else {
        c.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Knobs for the tightening pass. `seed` bounds are intersected layer by
/// layer as propagation proceeds, so later layers benefit from carried
/// knowledge; `fixings` clip a neuron's pre-activation interval to one of
/// its phases (branch-and-bound case splits).
#[derive(Default)]
pub struct SbtOptions<'a> {
    pub alphas: Option<&'a [Vec<f64>]>,
    pub seed: Option<&'a BoundsState>,
    pub fixings: Option<&'a BTreeMap<(usize, usize), usize>>,
}

/// DeepPoly-style tightening with default options.
pub fn deeppoly(net: &Network, din: &InputDomain) -> Result<(BoundsState, SingleRelax), SbtError> {
    deeppoly_with(net, din, &SbtOptions::default())
}

pub fn deeppoly_with(
    net: &Network,
    din: &InputDomain,
    opts: &SbtOptions,
) -> Result<(BoundsState, SingleRelax), SbtError> {
    let (input_lower, input_upper) = input_box(net, din)?;
    let mut state = BoundsState {
        input_lower,
        input_upper,
        pre_lower: Vec::new(),
        pre_upper: Vec::new(),
        post_lower: Vec::new(),
        post_upper: Vec::new(),
        contradiction: false,
    };
    let mut single = SingleRelax { rows: Vec::new(), alpha: Vec::new() };

    for (k, layer) in net.layers().iter().enumerate() {
        let w = layer.width();
        let mut lo = vec![0.0; w];
        let mut hi = vec![0.0; w];
        for j in 0..w {
            let mut coeffs = vec![0.0; w];
            coeffs[j] = 1.0;
            for (dir, out) in [(BoundDirection::Lower, &mut lo), (BoundDirection::Upper, &mut hi)]
            {
                let target = SymbolicTarget { layer: k, coeffs: coeffs.clone(), offset: 0.0, direction: dir };
                let sb = backsubstitute(net, &single, &target, None);
                out[j] = concretize(&sb, &ConcretizeOver::Domain(din))?;
            }
        }
        if let Some(seed) = opts.seed {
            for j in 0..w {
                lo[j] = lo[j].max(seed.pre_lower[k][j]);
                hi[j] = hi[j].min(seed.pre_upper[k][j]);
            }
        }
        if let Some(fixings) = opts.fixings {
            for j in 0..w {
                match fixings.get(&(k, j)) {
                    Some(0) => hi[j] = hi[j].min(0.0),
                    Some(1) => lo[j] = lo[j].max(0.0),
                    _ => {}
                }
            }
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            state.pre_lower.push(lo);
            state.pre_upper.push(hi);
            state.contradiction = true;
            // Fill the remaining layers with trivial bounds so the shape
            // stays usable by callers that inspect partial state.
            for rest in k..net.depth() {
                let ww = net.width(rest);
                if rest > k {
                    state.pre_lower.push(vec![f64::NEG_INFINITY; ww]);
                    state.pre_upper.push(vec![f64::INFINITY; ww]);
                }
                state.post_lower.push(vec![f64::NEG_INFINITY; ww]);
                state.post_upper.push(vec![f64::INFINITY; ww]);
                single.rows.push(vec![NeuronRelax::exact(1.0, 0.0); ww]);
                single.alpha.push(vec![1.0; ww]);
            }
            return Ok((state, single));
        }

        let mut rows = Vec::with_capacity(w);
        let mut alphas = Vec::with_capacity(w);
        let mut post_lo = vec![0.0; w];
        let mut post_hi = vec![0.0; w];
        for j in 0..w {
            let alpha = match opts.alphas {
                Some(a) => relax::clamp_alpha(layer.activation, a[k][j]),
                None => relax::default_alpha(layer.activation, lo[j], hi[j]),
            };
            let row = relax::relax_neuron(layer.activation, lo[j], hi[j], alpha)?;
            post_lo[j] = if row.lower_slope >= 0.0 {
                row.lower_at(lo[j])
            } else {
                row.lower_at(hi[j])
            };
            post_hi[j] = if row.upper_slope >= 0.0 {
                row.upper_at(hi[j])
            } else {
                row.upper_at(lo[j])
            };
            rows.push(row);
            alphas.push(alpha);
        }
        if let Some(seed) = opts.seed {
            for j in 0..w {
                post_lo[j] = post_lo[j].max(seed.post_lower[k][j]);
                post_hi[j] = post_hi[j].min(seed.post_upper[k][j]);
            }
        }
        state.pre_lower.push(lo);
        state.pre_upper.push(hi);
        state.post_lower.push(post_lo);
        state.post_upper.push(post_hi);
        single.rows.push(rows);
        single.alpha.push(alphas);
    }
    Ok((state, single))
}

/// Rebuilds relaxation rows for the given bounds and α assignment (α values
/// are clamped to each kind's admissible range).
pub fn relax_from_bounds(
    net: &Network,
    bounds: &BoundsState,
    alphas: &[Vec<f64>],
) -> Result<SingleRelax, SbtError> {
    let mut rows = Vec::with_capacity(net.depth());
    let mut alpha = Vec::with_capacity(net.depth());
    for (k, layer) in net.layers().iter().enumerate() {
        let mut layer_rows = Vec::with_capacity(layer.width());
        let mut layer_alpha = Vec::with_capacity(layer.width());
        for j in 0..layer.width() {
            let (l, u) = bounds.pre(k, j);
            let a = relax::clamp_alpha(layer.activation, alphas[k][j]);
            layer_rows.push(relax::relax_neuron(layer.activation, l, u, a)?);
            layer_alpha.push(a);
        }
        rows.push(layer_rows);
        alpha.push(layer_alpha);
    }
    Ok(SingleRelax { rows, alpha })
}

/// Plain interval propagation (the loosest member of the tightening
/// hierarchy).
pub fn interval_bounds(net: &Network, din: &InputDomain) -> Result<BoundsState, SbtError> {
    let (input_lower, input_upper) = input_box(net, din)?;
    let mut state = BoundsState {
        input_lower: input_lower.clone(),
        input_upper: input_upper.clone(),
        pre_lower: Vec::new(),
        pre_upper: Vec::new(),
        post_lower: Vec::new(),
        post_upper: Vec::new(),
        contradiction: false,
    };
    let mut cur_lo = input_lower;
    let mut cur_hi = input_upper;
    for layer in net.layers() {
        let w = layer.width();
        let mut lo = vec![0.0; w];
        let mut hi = vec![0.0; w];
        for j in 0..w {
            let row = layer.weights.row(j);
            lo[j] = linear_extremum_box(row, &cur_lo, &cur_hi, false) + layer.bias[j];
            hi[j] = linear_extremum_box(row, &cur_lo, &cur_hi, true) + layer.bias[j];
        }
        let post: Vec<(f64, f64)> = lo
            .iter()
            .zip(&hi)
            .map(|(l, u)| layer.activation.interval_image(*l, *u))
            .collect();
        cur_lo = post.iter().map(|p| p.0).collect();
        cur_hi = post.iter().map(|p| p.1).collect();
        state.pre_lower.push(lo);
        state.pre_upper.push(hi);
        state.post_lower.push(cur_lo.clone());
        state.post_upper.push(cur_hi.clone());
    }
    Ok(state)
}

fn input_box(net: &Network, din: &InputDomain) -> Result<(Vec<f64>, Vec<f64>), SbtError> {
    if din.dim() != net.input_dim() {
        return Err(SbtError::Net(NetError::Dimension(format!(
            "input domain has dimension {}, network expects {}",
            din.dim(),
            net.input_dim()
        ))));
    }
    if let Some(hull) = din.box_hull() {
        return Ok(hull);
    }
    // Polyhedron: bound each coordinate by LP.
    let n = din.dim();
    let (a, b) = match din {
        InputDomain::Polyhedron { a, b } => (a, b),
        _ => unreachable!(),
    };
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for j in 0..n {
        let mut c = vec![0.0; n];
        c[j] = 1.0;
        lo[j] = crate::lp::linear_extremum_polyhedron(a, b, &c, false)
            .map_err(|e| SbtError::Lp(e.to_string()))?;
        hi[j] = crate::lp::linear_extremum_polyhedron(a, b, &c, true)
            .map_err(|e| SbtError::Lp(e.to_string()))?;
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::parse_network;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn fig1() -> Network {
        parse_network(crate::verify::fixtures::FIG1_JSON).unwrap()
    }

    fn unit_box() -> InputDomain {
        InputDomain::Box { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] }
    }

    #[test]
    fn running_example_bounds() {
        let net = fig1();
        let (state, single) = deeppoly(&net, &unit_box()).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        assert!(close(state.pre_lower[0][0], 0.0) && close(state.pre_upper[0][0], 2.0));
        assert!(close(state.pre_lower[0][1], -5.0) && close(state.pre_upper[0][1], 5.0));
        assert!(close(state.pre_lower[0][2], -1.0) && close(state.pre_upper[0][2], 1.0));
        assert!(close(state.pre_lower[1][0], -1.0) && close(state.pre_upper[1][0], 7.0));
        assert!(close(state.pre_lower[1][1], -5.0) && close(state.pre_upper[1][1], 7.0));
        assert!(close(state.pre_lower[2][0], -0.15) && close(state.pre_upper[2][0], 40.1));
        // Stored post bounds follow the unclipped concretization.
        assert!(close(state.post_lower[1][0], -1.0) && close(state.post_upper[1][0], 7.0));
        assert!(close(state.post_lower[1][1], -5.0) && close(state.post_upper[1][1], 7.0));
        // Upper relaxation slopes of the two unfixed ReLUs.
        assert_eq!(single.rows[1][0].upper_slope, 7.0 / 8.0);
        assert_eq!(single.rows[1][1].upper_slope, 7.0 / 12.0);
        // Clipped accessor restores the activation image.
        let (clo, _chi) = state.clipped_post_bounds(&net);
        assert_eq!(clo[1][0], 0.0);
        assert_eq!(clo[1][1], 0.0);
    }

    #[test]
    fn identity_single_layer() {
        let net = parse_network(
            r#"{"layers": [{"weights": [[1]], "bias": [0], "activation": "identity"}]}"#,
        )
        .unwrap();
        let din = InputDomain::Box { lower: vec![-1.0], upper: vec![1.0] };
        let (state, _) = deeppoly(&net, &din).unwrap();
        assert_eq!(state.output(), (-1.0, 1.0));
    }

    #[test]
    fn fixed_phase_bounds_bracket_forward_trace() {
        let net = fig1();
        let din = InputDomain::Box { lower: vec![0.39, -0.61], upper: vec![0.41, -0.59] };
        let (state, _) = deeppoly(&net, &din).unwrap();
        let (_, trace) = net.forward(&[0.4, -0.6]).unwrap();
        assert!(state.trace_violation(&trace) <= 1e-9);
    }

    #[test]
    fn zero_coefficient_target_is_constant() {
        let net = fig1();
        let (_, single) = deeppoly(&net, &unit_box()).unwrap();
        let target = SymbolicTarget {
            layer: 2,
            coeffs: vec![0.0],
            offset: 7.0,
            direction: BoundDirection::Upper,
        };
        let sb = backsubstitute(&net, &single, &target, None);
        assert_eq!(concretize(&sb, &ConcretizeOver::Domain(&unit_box())).unwrap(), 7.0);
    }

    #[test]
    fn output_lower_via_backsubstitution() {
        // The output row back-substituted to the input concretizes to the
        // -0.15 lower bound of the worked example.
        let net = fig1();
        let (_, single) = deeppoly(&net, &unit_box()).unwrap();
        let target = SymbolicTarget {
            layer: 2,
            coeffs: vec![1.0],
            offset: 0.0,
            direction: BoundDirection::Lower,
        };
        let sb = backsubstitute(&net, &single, &target, None);
        let lo = concretize(&sb, &ConcretizeOver::Domain(&unit_box())).unwrap();
        assert!((lo + 0.15).abs() < 1e-9);
    }

    #[test]
    fn concretize_box_examples() {
        let sb = SymbolicBound {
            reference: BoundRef::Input,
            coeffs: vec![2.0, -3.0],
            offset: 0.0,
            direction: BoundDirection::Upper,
        };
        assert_eq!(concretize(&sb, &ConcretizeOver::Domain(&unit_box())).unwrap(), 5.0);
        let sb = SymbolicBound {
            reference: BoundRef::Input,
            coeffs: vec![1.0, 1.0],
            offset: 0.0,
            direction: BoundDirection::Lower,
        };
        let ball = InputDomain::LpBall { center: vec![0.0, 0.0], radius: 0.02, p: f64::INFINITY };
        assert!((concretize(&sb, &ConcretizeOver::Domain(&ball)).unwrap() + 0.04).abs() < 1e-12);
    }

    #[test]
    fn sampling_soundness_random_nets() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let net = crate::verify::fixtures::random_net(&mut rng, 2, &[4, 3], true);
            let din = InputDomain::Box { lower: vec![-1.0; 2], upper: vec![1.0; 2] };
            let (state, _) = deeppoly(&net, &din).unwrap();
            for _ in 0..500 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (_, trace) = net.forward(&x).unwrap();
                assert!(state.trace_violation(&trace) <= 1e-7);
            }
        }
    }

    #[test]
    fn interval_contains_deeppoly() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let net = crate::verify::fixtures::random_net(&mut rng, 3, &[4, 4], true);
            let din = InputDomain::Box { lower: vec![-1.0; 3], upper: vec![1.0; 3] };
            let (dp, _) = deeppoly(&net, &din).unwrap();
            let iv = interval_bounds(&net, &din).unwrap();
            assert!(dp.is_subset_of(&iv, &net, 1e-7));
        }
    }
}
