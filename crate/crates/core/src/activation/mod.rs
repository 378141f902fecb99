//! Exact sigmoid/tanh, piecewise-linear (PWL) approximations, and bit-exact
//! fixed-point PWL evaluation.
//!
//! A [`PwlSpec`] stores only breakpoints plus per-segment slope/intercept, so
//! the approximation is evaluated as one compare-select, one multiply and one
//! add — the shape a hardware datapath wants. Three deterministic fitters are
//! provided: the canonical 3-segment tangent clamp ("hard" sigmoid/tanh),
//! uniform-breakpoint chords, and an exhaustive grid minimax search.

mod fit;
mod fixed;

pub use fit::{fit_chord, fit_hard, fit_minimax};
pub use fixed::{eval_pwl_fixed, quantize, FixedFormat, FixedValue};

use crate::error::{Error, Result};

/// Default half-range of the error-measurement grid. Both functions are
/// within 3e-7 of their asymptotes beyond |x| = 8.
pub const DEFAULT_GRID_HALF_RANGE: f64 = 8.0;
/// Default number of error-measurement grid points over [-8, 8].
pub const DEFAULT_GRID_POINTS: usize = 16_001;

/// The two activation roles of an LSTM cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    /// Logistic sigmoid, R -> (0, 1).
    Sigmoid,
    /// Hyperbolic tangent, R -> (-1, 1).
    Tanh,
}

impl ActivationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            other => Err(Error::Parse(format!("unknown activation kind `{other}`"))),
        }
    }

    /// Closure of the codomain: [0,1] for sigmoid, [-1,1] for tanh.
    pub fn codomain(self) -> (f64, f64) {
        match self {
            ActivationKind::Sigmoid => (0.0, 1.0),
            ActivationKind::Tanh => (-1.0, 1.0),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    // Sign-split keeps the exponential argument non-positive, so the
    // evaluation never overflows for |x| up to 1e3 and beyond.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Double-precision sigmoid or tanh.
pub fn eval_exact(kind: ActivationKind, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("eval_exact: non-finite input {x}")));
    }
    Ok(match kind {
        ActivationKind::Sigmoid => sigmoid(x),
        ActivationKind::Tanh => x.tanh(),
    })
}

/// Continuous piecewise-linear approximation of a sigmoid or tanh.
///
/// K segments are described by K-1 strictly increasing breakpoints and
/// per-segment `slope`/`intercept`. A point exactly on a breakpoint belongs
/// to the segment on its right.
#[derive(Clone, Debug, PartialEq)]
pub struct PwlSpec {
    kind: ActivationKind,
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
}

/// Absolute tolerance for the continuity invariant at breakpoints.
pub const CONTINUITY_TOL: f64 = 1e-12;

impl PwlSpec {
    /// Builds a spec and validates the structural invariants: K >= 2,
    /// strictly increasing breakpoints, and continuity at every breakpoint.
    pub fn new(
        kind: ActivationKind,
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
        intercepts: Vec<f64>,
    ) -> Result<Self> {
        let k = slopes.len();
        if k < 2 {
            return Err(Error::Argument(format!("PwlSpec needs >= 2 segments, got {k}")));
        }
        if intercepts.len() != k || breakpoints.len() != k - 1 {
            return Err(Error::Argument(format!(
                "PwlSpec length mismatch: {} slopes, {} intercepts, {} breakpoints",
                k,
                intercepts.len(),
                breakpoints.len()
            )));
        }
        if breakpoints
            .iter()
            .chain(slopes.iter())
            .chain(intercepts.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Argument("PwlSpec has non-finite coefficients".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(
                "PwlSpec breakpoints must be strictly increasing".into(),
            ));
        }
        for (i, &b) in breakpoints.iter().enumerate() {
            let left = slopes[i] * b + intercepts[i];
            let right = slopes[i + 1] * b + intercepts[i + 1];
            if (left - right).abs() > CONTINUITY_TOL {
                return Err(Error::Argument(format!(
                    "PwlSpec discontinuous at breakpoint {b}: {left} vs {right}"
                )));
            }
        }
        Ok(PwlSpec { kind, breakpoints, slopes, intercepts })
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    /// Number of linear segments K.
    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    /// Index of the segment containing `x` (right-segment convention: a
    /// point equal to breakpoint i belongs to segment i+1).
    #[inline]
    pub fn segment_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= x)
    }

    /// Evaluates the PWL at `x`. Assumes `x` is finite; the checked entry
    /// point is [`eval_pwl`].
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let s = self.segment_index(x);
        self.slopes[s] * x + self.intercepts[s]
    }

    /// Slope of the segment containing `x` (piecewise-constant derivative).
    #[inline]
    pub fn grad(&self, x: f64) -> f64 {
        self.slopes[self.segment_index(x)]
    }

    /// Flat text record: `kind,K,b_1..b_{K-1},m_1..m_K,c_1..c_K`.
    ///
    /// Values use shortest round-trip decimal formatting, so
    /// [`PwlSpec::from_record`] reproduces the spec bit-exactly.
    pub fn to_record(&self) -> String {
        let mut parts: Vec<String> = Vec::with_capacity(3 * self.segments());
        parts.push(self.kind.as_str().to_string());
        parts.push(self.segments().to_string());
        for v in self.breakpoints.iter().chain(&self.slopes).chain(&self.intercepts) {
            parts.push(format!("{v}"));
        }
        parts.join(",")
    }

    /// Parses the record format produced by [`PwlSpec::to_record`].
    pub fn from_record(record: &str) -> Result<Self> {
        let mut it = record.trim().split(',');
        let kind = ActivationKind::from_name(
            it.next().ok_or_else(|| Error::Parse("empty PWL record".into()))?,
        )?;
        let k: usize = it
            .next()
            .ok_or_else(|| Error::Parse("PWL record missing segment count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad segment count: {e}")))?;
        let rest: Vec<f64> = it
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("bad value `{t}`: {e}"))))
            .collect::<Result<_>>()?;
        if k < 2 || rest.len() != 3 * k - 1 {
            return Err(Error::Parse(format!(
                "PWL record for K={k} needs {} values, got {}",
                if k >= 2 { 3 * k - 1 } else { 0 },
                rest.len()
            )));
        }
        let breakpoints = rest[..k - 1].to_vec();
        let slopes = rest[k - 1..2 * k - 1].to_vec();
        let intercepts = rest[2 * k - 1..].to_vec();
        PwlSpec::new(kind, breakpoints, slopes, intercepts)
    }
}

/// Checked PWL evaluation.
pub fn eval_pwl(spec: &PwlSpec, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("eval_pwl: non-finite input {x}")));
    }
    Ok(spec.eval(x))
}

/// Checked PWL derivative (slope of the containing segment).
pub fn grad_pwl(spec: &PwlSpec, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("grad_pwl: non-finite input {x}")));
    }
    Ok(spec.grad(x))
}

/// Maximum absolute deviation from the exact function over a uniform grid
/// of `grid_points` points spanning [-grid_half_range, +grid_half_range].
pub fn max_abs_error(spec: &PwlSpec, grid_half_range: f64, grid_points: usize) -> Result<f64> {
    if grid_points < 1001 {
        return Err(Error::Argument(format!(
            "max_abs_error needs >= 1001 grid points, got {grid_points}"
        )));
    }
    if !(grid_half_range.is_finite() && grid_half_range > 0.0) {
        return Err(Error::Argument(format!("bad grid half-range {grid_half_range}")));
    }
    let n = grid_points;
    let mut worst = 0.0f64;
    for i in 0..n {
        let x = -grid_half_range + 2.0 * grid_half_range * i as f64 / (n - 1) as f64;
        let exact = match spec.kind {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
        };
        let d = (spec.eval(x) - exact).abs();
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TANH_1: f64 = 0.761_594_155_955_764_9;

    #[test]
    fn exact_symmetry_points() {
        assert_eq!(eval_exact(ActivationKind::Tanh, 0.0).unwrap(), 0.0);
        assert_eq!(eval_exact(ActivationKind::Sigmoid, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn exact_tanh_one() {
        // High-precision series value: 0.76159415595576488812...
        assert!((eval_exact(ActivationKind::Tanh, 1.0).unwrap() - TANH_1).abs() < 1e-15);
    }

    #[test]
    fn exact_overflow_safe() {
        assert_eq!(eval_exact(ActivationKind::Sigmoid, 1e3).unwrap(), 1.0);
        assert_eq!(eval_exact(ActivationKind::Sigmoid, -1e3).unwrap(), 0.0);
        assert_eq!(eval_exact(ActivationKind::Tanh, 1e3).unwrap(), 1.0);
        assert!(eval_exact(ActivationKind::Sigmoid, -745.0).unwrap() > 0.0);
    }

    #[test]
    fn exact_rejects_non_finite() {
        assert!(eval_exact(ActivationKind::Tanh, f64::NAN).is_err());
        assert!(eval_exact(ActivationKind::Sigmoid, f64::INFINITY).is_err());
    }

    #[test]
    fn eval_pwl_identity_segment_and_tails() {
        let hard = fit_hard(ActivationKind::Tanh);
        assert_eq!(eval_pwl(&hard, 0.5).unwrap(), 0.5);
        assert_eq!(eval_pwl(&hard, 0.0).unwrap(), 0.0);
        assert_eq!(eval_pwl(&hard, 2.0).unwrap(), 1.0);
        let hs = fit_hard(ActivationKind::Sigmoid);
        assert_eq!(eval_pwl(&hs, 10.0).unwrap(), 1.0);
        assert_eq!(eval_pwl(&hs, -3.0).unwrap(), 0.0);
    }

    #[test]
    fn eval_pwl_rejects_non_finite() {
        let hard = fit_hard(ActivationKind::Tanh);
        assert!(eval_pwl(&hard, f64::NAN).is_err());
        assert!(grad_pwl(&hard, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn grad_right_segment_convention() {
        let hard = fit_hard(ActivationKind::Tanh);
        assert_eq!(grad_pwl(&hard, 0.0).unwrap(), 1.0);
        assert_eq!(grad_pwl(&hard, 5.0).unwrap(), 0.0);
        // x exactly on a breakpoint takes the right segment.
        assert_eq!(grad_pwl(&hard, 1.0).unwrap(), 0.0);
        assert_eq!(grad_pwl(&hard, -1.0).unwrap(), 1.0);
    }

    #[test]
    fn chord_eval_on_interior_segment() {
        // K=5, T=2: breakpoints -2, -2/3, 2/3, 2; x=0.75 sits on the chord
        // over (2/3, 2].
        let spec = fit_chord(ActivationKind::Tanh, 5, 2.0).unwrap();
        let a: f64 = 2.0 / 3.0;
        let slope = ((2.0f64).tanh() - a.tanh()) / (2.0 - a);
        let expect = a.tanh() + slope * (0.75 - a);
        let got = eval_pwl(&spec, 0.75).unwrap();
        assert!((got - expect).abs() < 1e-12, "got {got}, expect {expect}");
        assert!((got - 0.606_610_735_018_404_5).abs() < 1e-12);
    }

    #[test]
    fn max_abs_error_hard_tanh_analytic() {
        // max |clamp(x) - tanh x| on [-8, 8] is attained at x = +-1 and
        // equals 1 - tanh(1).
        let hard = fit_hard(ActivationKind::Tanh);
        let err = max_abs_error(&hard, 8.0, 16_001).unwrap();
        assert!((err - (1.0 - TANH_1)).abs() < 1e-12, "err {err}");
        assert!((err - 0.238_405_844_044_235_15).abs() < 1e-12);
    }

    #[test]
    fn max_abs_error_zero_on_breakpoint_grid() {
        // A chord fit agrees with the exact function at every breakpoint.
        for kind in [ActivationKind::Sigmoid, ActivationKind::Tanh] {
            let spec = fit_chord(kind, 7, 3.0).unwrap();
            for &b in spec.breakpoints() {
                let exact = eval_exact(kind, b).unwrap();
                assert!((spec.eval(b) - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_abs_error_monotone_in_segments_chord() {
        let e3 = max_abs_error(&fit_chord(ActivationKind::Tanh, 3, 2.0).unwrap(), 8.0, 16_001)
            .unwrap();
        let e9 = max_abs_error(&fit_chord(ActivationKind::Tanh, 9, 2.0).unwrap(), 8.0, 16_001)
            .unwrap();
        assert!(e9 < e3, "e9 {e9} vs e3 {e3}");
    }

    #[test]
    fn max_abs_error_rejects_small_grid() {
        let hard = fit_hard(ActivationKind::Tanh);
        assert!(max_abs_error(&hard, 8.0, 1000).is_err());
    }

    #[test]
    fn record_round_trip() {
        for kind in [ActivationKind::Sigmoid, ActivationKind::Tanh] {
            for spec in [
                fit_hard(kind),
                fit_chord(kind, 5, 2.5).unwrap(),
                fit_minimax(kind, 3, 4.0, 201).unwrap(),
            ] {
                let rec = spec.to_record();
                let back = PwlSpec::from_record(&rec).unwrap();
                assert_eq!(spec, back, "record {rec}");
            }
        }
    }

    #[test]
    fn new_rejects_bad_specs() {
        // unsorted breakpoints
        assert!(PwlSpec::new(
            ActivationKind::Tanh,
            vec![1.0, -1.0],
            vec![0.0, 1.0, 0.0],
            vec![-1.0, 0.0, 1.0],
        )
        .is_err());
        // discontinuity
        assert!(PwlSpec::new(
            ActivationKind::Tanh,
            vec![-1.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![-1.0, 0.5, 1.0],
        )
        .is_err());
        // too few segments
        assert!(PwlSpec::new(ActivationKind::Tanh, vec![], vec![1.0], vec![0.0]).is_err());
    }
}
