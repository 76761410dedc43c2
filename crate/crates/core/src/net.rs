//! Network and query data model, JSON formats, and exact forward evaluation.
//!
//! Layer `i` (0-based) computes the pre-activation `x(i) = W(i)·h(i-1) + b(i)`
//! and the post-activation `h(i) = σ(i)(x(i))`, where `h(-1)` is the input.
//! The final layer is affine only (`Identity`), so the network output equals
//! its pre-activation vector.

use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

fn parse_err(path: impl Into<String>, message: impl Into<String>) -> NetError {
    NetError::Parse { path: path.into(), message: message.into() }
}

/// Supported activation functions, applied element-wise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActivationKind {
    Identity,
    Relu,
    /// Leaky ReLU with negative-side slope strictly in (0, 1).
    LeakyRelu(f64),
    Abs,
}

impl ActivationKind {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Identity => x,
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu(s) => {
                if x >= 0.0 {
                    x
                } else {
                    s * x
                }
            }
            ActivationKind::Abs => x.abs(),
        }
    }

    /// Exact interval image of `[l, u]` under the activation.
    pub fn interval_image(&self, l: f64, u: f64) -> (f64, f64) {
        match *self {
            ActivationKind::Identity => (l, u),
            ActivationKind::Relu => (l.max(0.0), u.max(0.0)),
            ActivationKind::LeakyRelu(_) => (self.apply(l), self.apply(u)),
            ActivationKind::Abs => {
                if l >= 0.0 {
                    (l, u)
                } else if u <= 0.0 {
                    (-u, -l)
                } else {
                    (0.0, (-l).max(u))
                }
            }
        }
    }

    pub fn is_piecewise_linear(&self) -> bool {
        true
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Identity => write!(f, "identity"),
            ActivationKind::Relu => write!(f, "relu"),
            ActivationKind::LeakyRelu(s) => write!(f, "leaky_relu({s})"),
            ActivationKind::Abs => write!(f, "abs"),
        }
    }
}

/// One dense layer: affine map followed by an element-wise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
}

impl Layer {
    pub fn width(&self) -> usize {
        self.bias.len()
    }
}

/// A dense feedforward network. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Validates layer shapes and the affine-output invariant.
    pub fn new(layers: Vec<Layer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(parse_err("layers", "network must have at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            let path = format!("layers[{i}]");
            if layer.weights.rows() != layer.bias.len() {
                return Err(parse_err(
                    format!("{path}.bias"),
                    format!(
                        "bias length {} does not match weight rows {}",
                        layer.bias.len(),
                        layer.weights.rows()
                    ),
                ));
            }
            if i > 0 && layer.weights.cols() != layers[i - 1].width() {
                return Err(parse_err(
                    format!("{path}.weights"),
                    format!(
                        "expected {} columns (previous layer width), got {}",
                        layers[i - 1].width(),
                        layer.weights.cols()
                    ),
                ));
            }
            if !layer.weights.is_finite() || layer.bias.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(path, "non-finite number"));
            }
            if let ActivationKind::LeakyRelu(s) = layer.activation {
                if !(s > 0.0 && s < 1.0) {
                    return Err(parse_err(
                        format!("{path}.slope"),
                        format!("leaky_relu slope must lie strictly in (0, 1), got {s}"),
                    ));
                }
            }
        }
        if layers.last().unwrap().activation != ActivationKind::Identity {
            return Err(parse_err(
                format!("layers[{}].activation", layers.len() - 1),
                "output layer must be affine (identity activation)",
            ));
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().width()
    }

    /// Width of layer `i` (0-based).
    pub fn width(&self, layer: usize) -> usize {
        self.layers[layer].width()
    }

    /// Total number of neurons across all layers (input excluded).
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Layer::width).sum()
    }

    /// Exact forward evaluation, returning the output together with the
    /// per-layer pre-/post-activation trace.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Trace), NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::Dimension(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.depth());
        let mut post = Vec::with_capacity(self.depth());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let z: Vec<f64> = layer
                .weights
                .matvec(&cur)
                .iter()
                .zip(&layer.bias)
                .map(|(wx, b)| wx + b)
                .collect();
            let h: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            cur = h.clone();
            post.push(h);
        }
        let output = pre.last().unwrap().clone();
        Ok((output, Trace { input: x.to_vec(), pre, post }))
    }

    /// Returns the network with the output layer negated (used to put
    /// `direction: "<"` queries into the canonical `> 0` form).
    pub fn with_negated_output(&self, threshold: f64, direction: Direction) -> Network {
        let mut layers = self.layers.clone();
        let last = layers.last_mut().unwrap();
        let mut rows: Vec<Vec<f64>> = last.weights.iter_rows().map(|r| r.to_vec()).collect();
        match direction {
            // N(x) > t  ⇔  N(x) - t > 0
            Direction::Greater => {
                for b in last.bias.iter_mut() {
                    *b -= threshold;
                }
            }
            // N(x) < t  ⇔  -N(x) + t > 0
            Direction::Less => {
                for row in rows.iter_mut() {
                    for w in row.iter_mut() {
                        *w = -*w;
                    }
                }
                for b in last.bias.iter_mut() {
                    *b = threshold - *b;
                }
                last.weights = Matrix::from_rows(&rows);
            }
        }
        Network { layers }
    }
}

/// Per-layer pre- and post-activation values from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl Trace {
    pub fn value(&self, v: Var) -> f64 {
        match v {
            Var::Input(j) => self.input[j],
            Var::Pre(k, j) => self.pre[k][j],
            Var::Post(k, j) => self.post[k][j],
        }
    }
}

/// Identifies one network variable: an input coordinate or a neuron's
/// pre-/post-activation value (0-based layer index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Input(usize),
    Pre(usize, usize),
    Post(usize, usize),
}

/// Input region of a verification query.
#[derive(Debug, Clone, PartialEq)]
pub enum InputDomain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `‖x - center‖_p ≤ radius` with `p ≥ 1` (`f64::INFINITY` for ℓ∞).
    LpBall { center: Vec<f64>, radius: f64, p: f64 },
    /// `A·x + b ≤ 0` row-wise.
    Polyhedron { a: Matrix, b: Vec<f64> },
}

impl InputDomain {
    pub fn dim(&self) -> usize {
        match self {
            InputDomain::Box { lower, .. } => lower.len(),
            InputDomain::LpBall { center, .. } => center.len(),
            InputDomain::Polyhedron { a, .. } => a.cols(),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        match self {
            InputDomain::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(parse_err("input", "lower and upper lengths differ"));
                }
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !l.is_finite() || !u.is_finite() {
                        return Err(parse_err(format!("input.lower[{i}]"), "non-finite number"));
                    }
                    if l > u {
                        return Err(parse_err(
                            format!("input.lower[{i}]"),
                            format!("lower {l} exceeds upper {u}"),
                        ));
                    }
                }
                Ok(())
            }
            InputDomain::LpBall { center, radius, p } => {
                if center.iter().any(|v| !v.is_finite()) {
                    return Err(parse_err("input.center", "non-finite number"));
                }
                if !(*radius > 0.0) {
                    return Err(parse_err("input.eps", "radius must be positive"));
                }
                if !(*p >= 1.0) {
                    return Err(parse_err("input.p", "p must be ≥ 1"));
                }
                Ok(())
            }
            InputDomain::Polyhedron { a, b } => {
                if a.rows() != b.len() {
                    return Err(parse_err("input.b", "offset length must match row count"));
                }
                if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
                    return Err(parse_err("input.a", "non-finite number"));
                }
                Ok(())
            }
        }
    }

    /// Smallest axis-aligned box containing the domain, when one is cheap to
    /// compute. Polyhedra are rejected (callers bound them by LP instead).
    pub fn box_hull(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            InputDomain::Box { lower, upper } => Some((lower.clone(), upper.clone())),
            InputDomain::LpBall { center, radius, .. } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            InputDomain::Polyhedron { .. } => None,
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            InputDomain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            InputDomain::LpBall { center, radius, p } => {
                let diff: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                let norm = if p.is_infinite() {
                    diff.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                } else {
                    diff.iter().map(|v| v.abs().powf(*p)).sum::<f64>().powf(1.0 / p)
                };
                norm <= radius + tol
            }
            InputDomain::Polyhedron { a, b } => a
                .matvec(x)
                .iter()
                .zip(b)
                .all(|(ax, bi)| ax + bi <= tol),
        }
    }
}

/// Which side of the threshold the query asks the output to reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = "<")]
    Less,
}

/// A verification query in canonical form: does some `x ∈ din` give
/// `net(x) > 0`? The original orientation is kept so reported output bounds
/// can be mapped back to the user's frame.
#[derive(Debug, Clone)]
pub struct Query {
    pub network: Network,
    pub input_domain: InputDomain,
    /// Threshold of the canonical form; always 0 after canonicalization.
    pub output_threshold: f64,
    pub original_direction: Direction,
    pub original_threshold: f64,
}

impl Query {
    /// Builds a canonical query from the user-facing orientation. For
    /// `direction: "<"` the network output is negated so every downstream
    /// component sees the single `∃x: N(x) > 0` form.
    pub fn new(
        network: &Network,
        input_domain: InputDomain,
        direction: Direction,
        threshold: f64,
    ) -> Result<Self, NetError> {
        input_domain.validate()?;
        if input_domain.dim() != network.input_dim() {
            return Err(NetError::Dimension(format!(
                "input domain has dimension {}, network expects {}",
                input_domain.dim(),
                network.input_dim()
            )));
        }
        if network.output_dim() != 1 {
            return Err(NetError::Dimension(format!(
                "canonical queries need a single output, network has {}",
                network.output_dim()
            )));
        }
        Ok(Query {
            network: network.with_negated_output(threshold, direction),
            input_domain,
            output_threshold: 0.0,
            original_direction: direction,
            original_threshold: threshold,
        })
    }

    /// Maps output bounds of the canonical network back to the original
    /// orientation.
    pub fn original_output_bounds(&self, lower: f64, upper: f64) -> (f64, f64) {
        match self.original_direction {
            Direction::Greater => (lower + self.original_threshold, upper + self.original_threshold),
            Direction::Less => (self.original_threshold - upper, self.original_threshold - lower),
        }
    }
}

// ---------------------------------------------------------------------------
// JSON formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    layers: Vec<LayerJson>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
}

/// Parses the network JSON schema. Weights are row-major with one row per
/// output neuron.
pub fn parse_network(text: &str) -> Result<Network, NetError> {
    let raw: NetworkJson = serde_json::from_str(text)?;
    let mut layers = Vec::with_capacity(raw.layers.len());
    for (i, lj) in raw.layers.into_iter().enumerate() {
        let path = format!("layers[{i}]");
        let activation = match lj.activation.as_str() {
            "identity" => ActivationKind::Identity,
            "relu" => ActivationKind::Relu,
            "abs" => ActivationKind::Abs,
            "leaky_relu" => {
                let slope = lj.slope.ok_or_else(|| {
                    parse_err(format!("{path}.slope"), "leaky_relu requires a slope")
                })?;
                ActivationKind::LeakyRelu(slope)
            }
            other => {
                return Err(parse_err(
                    format!("{path}.activation"),
                    format!("unsupported activation kind {other:?}"),
                ))
            }
        };
        let cols = lj.weights.first().map_or(0, Vec::len);
        if lj.weights.iter().any(|row| row.len() != cols) {
            return Err(parse_err(format!("{path}.weights"), "ragged weight rows"));
        }
        layers.push(Layer { weights: Matrix::from_rows(&lj.weights), bias: lj.bias, activation });
    }
    Network::new(layers)
}

pub fn serialize_network(net: &Network) -> String {
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            let (activation, slope) = match l.activation {
                ActivationKind::Identity => ("identity", None),
                ActivationKind::Relu => ("relu", None),
                ActivationKind::Abs => ("abs", None),
                ActivationKind::LeakyRelu(s) => ("leaky_relu", Some(s)),
            };
            LayerJson {
                weights: l.weights.iter_rows().map(<[f64]>::to_vec).collect(),
                bias: l.bias.clone(),
                activation: activation.to_string(),
                slope,
            }
        })
        .collect();
    serde_json::to_string_pretty(&NetworkJson { layers }).unwrap()
}

#[derive(Serialize, Deserialize)]
struct QueryJson {
    input: InputJson,
    output: OutputJson,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum InputJson {
    #[serde(rename = "box")]
    Box { lower: Vec<f64>, upper: Vec<f64> },
    #[serde(rename = "linf")]
    Linf { center: Vec<f64>, eps: f64 },
    #[serde(rename = "lp_ball")]
    LpBall { center: Vec<f64>, radius: f64, p: serde_json::Value },
    #[serde(rename = "polyhedron")]
    Polyhedron { a: Vec<Vec<f64>>, b: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct OutputJson {
    direction: Direction,
    threshold: f64,
}

/// Parses a query JSON against an already-parsed network. The `linf` sugar
/// expands to an ℓ∞ ball around the given center.
pub fn parse_query(text: &str, network: &Network) -> Result<Query, NetError> {
    let raw: QueryJson = serde_json::from_str(text)?;
    let domain = match raw.input {
        InputJson::Box { lower, upper } => InputDomain::Box { lower, upper },
        InputJson::Linf { center, eps } => {
            InputDomain::LpBall { center, radius: eps, p: f64::INFINITY }
        }
        InputJson::LpBall { center, radius, p } => {
            let p = match p {
                serde_json::Value::String(s) if s == "inf" => f64::INFINITY,
                serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                _ => return Err(parse_err("input.p", "expected a number or \"inf\"")),
            };
            InputDomain::LpBall { center, radius, p }
        }
        InputJson::Polyhedron { a, b } => {
            InputDomain::Polyhedron { a: Matrix::from_rows(&a), b }
        }
    };
    if !raw.output.threshold.is_finite() {
        return Err(parse_err("output.threshold", "non-finite number"));
    }
    Query::new(network, domain, raw.output.direction, raw.output.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG1_JSON: &str = r#"{
        "layers": [
            {"weights": [[1, 0], [2, -3], [0, 1]], "bias": [1, 0, 0], "activation": "abs"},
            {"weights": [[1, 1, -1], [-1, 1, -5]], "bias": [0, 2], "activation": "relu"},
            {"weights": [[-1, -3]], "bias": [26.1], "activation": "identity"}
        ]
    }"#;

    #[test]
    fn parses_running_example() {
        let net = parse_network(FIG1_JSON).unwrap();
        assert_eq!(net.depth(), 3);
        assert_eq!(net.input_dim(), 2);
        assert_eq!(
            net.layers().iter().map(Layer::width).collect::<Vec<_>>(),
            vec![3, 2, 1]
        );
        assert_eq!(net.layers()[0].bias, vec![1.0, 0.0, 0.0]);
        assert_eq!(net.layers()[1].bias, vec![0.0, 2.0]);
        assert_eq!(net.layers()[2].bias, vec![26.1]);
    }

    #[test]
    fn forward_running_example() {
        let net = parse_network(FIG1_JSON).unwrap();
        let (out, trace) = net.forward(&[0.4, -0.6]).unwrap();
        assert!((out[0] - 22.1).abs() < 1e-9);
        for (got, want) in trace.post[0].iter().zip([1.4, 2.6, 0.6]) {
            assert!((got - want).abs() < 1e-9);
        }
        for (got, want) in trace.post[1].iter().zip([3.4, 0.2]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_identity() {
        let net = Network::new(vec![Layer {
            weights: Matrix::identity(1),
            bias: vec![0.0],
            activation: ActivationKind::Identity,
        }])
        .unwrap();
        let (out, _) = net.forward(&[5.0]).unwrap();
        assert_eq!(out, vec![5.0]);
    }

    #[test]
    fn forward_inside_annotated_range() {
        let net = parse_network(FIG1_JSON).unwrap();
        let (out, _) = net.forward(&[-1.0, -1.0]).unwrap();
        assert!(out[0] >= 12.1 - 1e-9 && out[0] <= 26.1 + 1e-9);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let bad = r#"{
            "layers": [
                {"weights": [[1, 0], [0, 1]], "bias": [0, 0], "activation": "relu"},
                {"weights": [[1, 0, 0], [0, 1, 0]], "bias": [0, 0], "activation": "identity"}
            ]
        }"#;
        let err = parse_network(bad).unwrap_err();
        assert!(err.to_string().contains("layers[1].weights"), "{err}");
    }

    #[test]
    fn unknown_activation_rejected() {
        let bad = r#"{"layers": [{"weights": [[1]], "bias": [0], "activation": "max_pool"}]}"#;
        let err = parse_network(bad).unwrap_err();
        assert!(err.to_string().contains("unsupported activation"), "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        let bad = r#"{"layers": [{"weights": [[1e999]], "bias": [0], "activation": "identity"}]}"#;
        assert!(parse_network(bad).is_err());
    }

    #[test]
    fn leaky_slope_range_enforced() {
        let bad = r#"{"layers": [
            {"weights": [[1]], "bias": [0], "activation": "leaky_relu", "slope": 1.5},
            {"weights": [[1]], "bias": [0], "activation": "identity"}
        ]}"#;
        let err = parse_network(bad).unwrap_err();
        assert!(err.to_string().contains("slope"), "{err}");
    }

    #[test]
    fn round_trip() {
        let net = parse_network(FIG1_JSON).unwrap();
        let again = parse_network(&serialize_network(&net)).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn query_parses_and_canonicalizes() {
        let net = parse_network(FIG1_JSON).unwrap();
        let q = parse_query(
            r#"{"input": {"kind": "box", "lower": [-1, -1], "upper": [1, 1]},
                "output": {"direction": "<", "threshold": 0.0}}"#,
            &net,
        )
        .unwrap();
        // Canonical network is the negation: N'(0.4, -0.6) = -22.1.
        let (out, _) = q.network.forward(&[0.4, -0.6]).unwrap();
        assert!((out[0] + 22.1).abs() < 1e-9);
        let (lo, hi) = q.original_output_bounds(-26.1, -0.1);
        assert!((lo - 0.1).abs() < 1e-12 && (hi - 26.1).abs() < 1e-12);
    }

    #[test]
    fn bad_box_rejected() {
        let net = parse_network(FIG1_JSON).unwrap();
        let err = parse_query(
            r#"{"input": {"kind": "box", "lower": [1, 1], "upper": [-1, -1]},
                "output": {"direction": ">", "threshold": 0.0}}"#,
            &net,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lower"), "{err}");
    }

    #[test]
    fn linf_sugar_expands() {
        let net = parse_network(FIG1_JSON).unwrap();
        let q = parse_query(
            r#"{"input": {"kind": "linf", "center": [0, 0], "eps": 0.02},
                "output": {"direction": ">", "threshold": 0.0}}"#,
            &net,
        )
        .unwrap();
        let (lo, hi) = q.input_domain.box_hull().unwrap();
        assert_eq!(lo, vec![-0.02, -0.02]);
        assert_eq!(hi, vec![0.02, 0.02]);
    }
}
