//! Single-neuron linear relaxations and phase (branch) splits.
//!
//! For a neuron with pre-activation range `[l, u]` the relaxation is a pair
//! of lines `lower_slope·x + lower_offset ≤ σ(x) ≤ upper_slope·x +
//! upper_offset`, sound on the whole range. Unfixed neurons additionally
//! carry a tunable lower slope α; fixed neurons collapse to the exact linear
//! segment.

use crate::net::ActivationKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RelaxError {
    #[error("invalid pre-activation range: lower {0} exceeds upper {1}")]
    BadRange(f64, f64),
    #[error("alpha {alpha} outside admissible range [{min}, {max}] for {kind}")]
    BadAlpha { alpha: f64, min: f64, max: f64, kind: ActivationKind },
}

/// Linear lower/upper bounds on one activation over a pre-activation range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronRelax {
    pub lower_slope: f64,
    pub lower_offset: f64,
    pub upper_slope: f64,
    pub upper_offset: f64,
}

impl NeuronRelax {
    pub fn exact(slope: f64, offset: f64) -> Self {
        NeuronRelax { lower_slope: slope, lower_offset: offset, upper_slope: slope, upper_offset: offset }
    }

    pub fn lower_at(&self, x: f64) -> f64 {
        self.lower_slope * x + self.lower_offset
    }

    pub fn upper_at(&self, x: f64) -> f64 {
        self.upper_slope * x + self.upper_offset
    }
}

/// One linear segment of a piecewise-linear activation, with the
/// pre-activation interval it covers and the exact bounds valid inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub id: usize,
    pub pre_lower: f64,
    pub pre_upper: f64,
    pub exact_relax: NeuronRelax,
}

/// Admissible α range for a kind: ReLU `[0,1]`, Abs `[-1,1]`,
/// LeakyReLU `[slope,1]`. Identity has no meaningful α.
pub fn alpha_range(kind: ActivationKind) -> (f64, f64) {
    match kind {
        ActivationKind::Identity => (1.0, 1.0),
        ActivationKind::Relu => (0.0, 1.0),
        ActivationKind::LeakyRelu(s) => (s, 1.0),
        ActivationKind::Abs => (-1.0, 1.0),
    }
}

/// Area-minimizing default α: the steeper admissible lower line when the
/// positive side dominates (`u ≥ |l|`), the shallower one otherwise. Abs
/// defaults to the flat lower bound 0.
pub fn default_alpha(kind: ActivationKind, l: f64, u: f64) -> f64 {
    match kind {
        ActivationKind::Identity => 1.0,
        ActivationKind::Relu => {
            if u >= -l {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::LeakyRelu(s) => {
            if u >= -l {
                1.0
            } else {
                s
            }
        }
        ActivationKind::Abs => 0.0,
    }
}

pub fn clamp_alpha(kind: ActivationKind, alpha: f64) -> f64 {
    let (lo, hi) = alpha_range(kind);
    alpha.clamp(lo, hi)
}

/// True iff the neuron's linear segment is not pinned down by `[l, u]`.
/// Boundary cases (`l = 0` or `u = 0`) count as fixed.
pub fn is_unfixed(kind: ActivationKind, l: f64, u: f64) -> bool {
    match kind {
        ActivationKind::Identity => false,
        ActivationKind::Relu | ActivationKind::LeakyRelu(_) | ActivationKind::Abs => {
            l < 0.0 && u > 0.0
        }
    }
}

/// Sound linear relaxation of `kind` on `[l, u]` with lower-slope parameter
/// `alpha` (used only in the unfixed case).
pub fn relax_neuron(
    kind: ActivationKind,
    l: f64,
    u: f64,
    alpha: f64,
) -> Result<NeuronRelax, RelaxError> {
    if l > u {
        return Err(RelaxError::BadRange(l, u));
    }
    let (amin, amax) = alpha_range(kind);
    if kind != ActivationKind::Identity && !(alpha >= amin && alpha <= amax) {
        return Err(RelaxError::BadAlpha { alpha, min: amin, max: amax, kind });
    }
    Ok(match kind {
        ActivationKind::Identity => NeuronRelax::exact(1.0, 0.0),
        ActivationKind::Relu => {
            if u <= 0.0 {
                NeuronRelax::exact(0.0, 0.0)
            } else if l >= 0.0 {
                NeuronRelax::exact(1.0, 0.0)
            } else {
                // Upper chord through (l, 0) and (u, u): slope u/(u-l).
                let slope = u / (u - l);
                NeuronRelax {
                    lower_slope: alpha,
                    lower_offset: 0.0,
                    upper_slope: slope,
                    upper_offset: -slope * l,
                }
            }
        }
        ActivationKind::LeakyRelu(s) => {
            if u <= 0.0 {
                NeuronRelax::exact(s, 0.0)
            } else if l >= 0.0 {
                NeuronRelax::exact(1.0, 0.0)
            } else {
                // Chord through (l, s·l) and (u, u).
                let slope = (u - s * l) / (u - l);
                NeuronRelax {
                    lower_slope: alpha,
                    lower_offset: 0.0,
                    upper_slope: slope,
                    upper_offset: s * l - slope * l,
                }
            }
        }
        ActivationKind::Abs => {
            if u <= 0.0 {
                NeuronRelax::exact(-1.0, 0.0)
            } else if l >= 0.0 {
                NeuronRelax::exact(1.0, 0.0)
            } else {
                // Constant upper bound at the larger endpoint magnitude.
                NeuronRelax {
                    lower_slope: alpha,
                    lower_offset: 0.0,
                    upper_slope: 0.0,
                    upper_offset: (-l).max(u),
                }
            }
        }
    })
}

/// Splits `[l, u]` into the activation's linear segments. Fixed neurons
/// yield a single phase covering the whole range.
pub fn phases(kind: ActivationKind, l: f64, u: f64) -> Result<Vec<Phase>, RelaxError> {
    if l > u {
        return Err(RelaxError::BadRange(l, u));
    }
    if !is_unfixed(kind, l, u) {
        let exact = match kind {
            ActivationKind::Identity => NeuronRelax::exact(1.0, 0.0),
            ActivationKind::Relu => {
                if u <= 0.0 {
                    NeuronRelax::exact(0.0, 0.0)
                } else {
                    NeuronRelax::exact(1.0, 0.0)
                }
            }
            ActivationKind::LeakyRelu(s) => {
                if u <= 0.0 {
                    NeuronRelax::exact(s, 0.0)
                } else {
                    NeuronRelax::exact(1.0, 0.0)
                }
            }
            ActivationKind::Abs => {
                if u <= 0.0 {
                    NeuronRelax::exact(-1.0, 0.0)
                } else {
                    NeuronRelax::exact(1.0, 0.0)
                }
            }
        };
        return Ok(vec![Phase { id: 0, pre_lower: l, pre_upper: u, exact_relax: exact }]);
    }
    let negative = match kind {
        ActivationKind::Relu => NeuronRelax::exact(0.0, 0.0),
        ActivationKind::LeakyRelu(s) => NeuronRelax::exact(s, 0.0),
        ActivationKind::Abs => NeuronRelax::exact(-1.0, 0.0),
        ActivationKind::Identity => unreachable!(),
    };
    Ok(vec![
        Phase { id: 0, pre_lower: l, pre_upper: 0.0, exact_relax: negative },
        Phase { id: 1, pre_lower: 0.0, pre_upper: u, exact_relax: NeuronRelax::exact(1.0, 0.0) },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_unfixed_matches_running_example() {
        // [l, u] = [-1, 7] gives the 7/8 chord from the worked example.
        let r = relax_neuron(ActivationKind::Relu, -1.0, 7.0, 1.0).unwrap();
        assert_eq!(r.lower_slope, 1.0);
        assert_eq!(r.lower_offset, 0.0);
        assert_eq!(r.upper_slope, 7.0 / 8.0);
        assert_eq!(r.upper_offset, 7.0 / 8.0);
    }

    #[test]
    fn relu_fixed_positive() {
        let r = relax_neuron(ActivationKind::Relu, 2.0, 5.0, 0.3).unwrap();
        assert_eq!(r, NeuronRelax::exact(1.0, 0.0));
    }

    #[test]
    fn abs_unfixed_constant_upper() {
        let r = relax_neuron(ActivationKind::Abs, -5.0, 5.0, 0.0).unwrap();
        assert_eq!(r.lower_slope, 0.0);
        assert_eq!(r.upper_slope, 0.0);
        assert_eq!(r.upper_offset, 5.0);
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        assert!(relax_neuron(ActivationKind::Relu, -1.0, 1.0, 1.5).is_err());
        assert!(relax_neuron(ActivationKind::LeakyRelu(0.2), -1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn bad_range_rejected() {
        assert_eq!(
            relax_neuron(ActivationKind::Relu, 1.0, -1.0, 0.5),
            Err(RelaxError::BadRange(1.0, -1.0))
        );
    }

    #[test]
    fn unfixed_boundary_convention() {
        assert!(is_unfixed(ActivationKind::Relu, -1.0, 7.0));
        assert!(!is_unfixed(ActivationKind::Relu, 0.0, 4.0));
        assert!(is_unfixed(ActivationKind::Abs, -1.0, 1.0));
    }

    #[test]
    fn relu_phases() {
        let ph = phases(ActivationKind::Relu, -1.0, 7.0).unwrap();
        assert_eq!(ph.len(), 2);
        assert_eq!(ph[0].exact_relax, NeuronRelax::exact(0.0, 0.0));
        assert_eq!(ph[1].exact_relax, NeuronRelax::exact(1.0, 0.0));
        assert_eq!((ph[0].pre_lower, ph[0].pre_upper), (-1.0, 0.0));
        assert_eq!((ph[1].pre_lower, ph[1].pre_upper), (0.0, 7.0));
        assert_eq!(phases(ActivationKind::Relu, 1.0, 7.0).unwrap().len(), 1);
        assert_eq!(phases(ActivationKind::Abs, -5.0, 5.0).unwrap().len(), 2);
    }

    fn kinds() -> impl Strategy<Value = ActivationKind> {
        prop_oneof![
            Just(ActivationKind::Relu),
            Just(ActivationKind::Abs),
            Just(ActivationKind::LeakyRelu(0.1)),
            Just(ActivationKind::Identity),
        ]
    }

    proptest! {
        /// Sampling soundness of the relaxation over random ranges and α.
        #[test]
        fn relaxation_sound(kind in kinds(), a in -10.0f64..10.0, b in -10.0f64..10.0, t in 0.0f64..1.0) {
            let (l, u) = if a <= b { (a, b) } else { (b, a) };
            let (amin, amax) = alpha_range(kind);
            let alpha = amin + t * (amax - amin);
            let r = relax_neuron(kind, l, u, alpha).unwrap();
            for i in 0..1000 {
                let x = l + (u - l) * (i as f64) / 999.0;
                let y = kind.apply(x);
                prop_assert!(r.lower_at(x) - 1e-9 <= y, "lower violated at {x}");
                prop_assert!(y <= r.upper_at(x) + 1e-9, "upper violated at {x}");
            }
        }

        /// The unfixed ReLU upper line passes through both segment endpoints.
        #[test]
        fn relu_chord_exact(l in -10.0f64..-0.01, u in 0.01f64..10.0) {
            let r = relax_neuron(ActivationKind::Relu, l, u, 0.5).unwrap();
            prop_assert!((r.upper_at(l) - 0.0).abs() < 1e-12);
            prop_assert!((r.upper_at(u) - u).abs() < 1e-12);
        }

        /// Phases cover the range and agree with σ pointwise inside each phase.
        #[test]
        fn phases_cover_and_exact(kind in kinds(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let (l, u) = if a <= b { (a, b) } else { (b, a) };
            let ph = phases(kind, l, u).unwrap();
            prop_assert!((ph.first().unwrap().pre_lower - l).abs() < 1e-12);
            prop_assert!((ph.last().unwrap().pre_upper - u).abs() < 1e-12);
            for w in ph.windows(2) {
                prop_assert!((w[0].pre_upper - w[1].pre_lower).abs() < 1e-12);
            }
            for p in &ph {
                for i in 0..100 {
                    let x = p.pre_lower + (p.pre_upper - p.pre_lower) * (i as f64) / 99.0;
                    let y = kind.apply(x);
                    prop_assert!((p.exact_relax.lower_at(x) - y).abs() < 1e-9);
                    prop_assert!((p.exact_relax.upper_at(x) - y).abs() < 1e-9);
                }
            }
        }
    }
}
