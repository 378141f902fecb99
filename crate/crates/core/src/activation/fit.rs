//! Deterministic PWL fitters: tangent clamp, uniform chords, grid minimax.

use super::{sigmoid, ActivationKind, PwlSpec};
use crate::error::{Error, Result};

const ALLOWED_SEGMENTS: [usize; 4] = [3, 5, 7, 9];

fn check_segments(segments: usize) -> Result<()> {
    if ALLOWED_SEGMENTS.contains(&segments) {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "segment count must be one of {ALLOWED_SEGMENTS:?}, got {segments}"
        )))
    }
}

#[inline]
fn exact(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Sigmoid => sigmoid(x),
        ActivationKind::Tanh => x.tanh(),
    }
}

/// Chord construction over a given breakpoint list: interior segments
/// interpolate the exact function at consecutive breakpoints, tails are
/// constant at the outermost function values.
fn chord_spec(kind: ActivationKind, breakpoints: Vec<f64>) -> PwlSpec {
    let n = breakpoints.len();
    let mut slopes = Vec::with_capacity(n + 1);
    let mut intercepts = Vec::with_capacity(n + 1);
    slopes.push(0.0);
    intercepts.push(exact(kind, breakpoints[0]));
    for w in breakpoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (exact(kind, a), exact(kind, b));
        let slope = (fb - fa) / (b - a);
        slopes.push(slope);
        intercepts.push(fa - slope * a);
    }
    slopes.push(0.0);
    intercepts.push(exact(kind, breakpoints[n - 1]));
    PwlSpec::new(kind, breakpoints, slopes, intercepts)
        .expect("chord construction is continuous by design")
}

/// Canonical 3-segment tangent clamp: the tangent at the origin, clipped to
/// the saturation values ("hard tanh" / "hard sigmoid").
pub fn fit_hard(kind: ActivationKind) -> PwlSpec {
    match kind {
        ActivationKind::Tanh => PwlSpec::new(
            kind,
            vec![-1.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![-1.0, 0.0, 1.0],
        )
        .expect("hard tanh is a valid spec"),
        ActivationKind::Sigmoid => PwlSpec::new(
            kind,
            vec![-2.0, 2.0],
            vec![0.0, 0.25, 0.0],
            vec![0.0, 0.5, 1.0],
        )
        .expect("hard sigmoid is a valid spec"),
    }
}

/// Chord fit with `segments` - 1 breakpoints uniformly spaced over
/// [-half_range, +half_range] (the outermost breakpoints sit exactly at
/// +-half_range). The PWL equals the exact function at every breakpoint;
/// tails are constant at eval_exact(+-half_range).
pub fn fit_chord(kind: ActivationKind, segments: usize, half_range: f64) -> Result<PwlSpec> {
    check_segments(segments)?;
    if !(half_range.is_finite() && half_range > 0.0) {
        return Err(Error::Argument(format!("half_range must be > 0, got {half_range}")));
    }
    let n = segments - 1;
    let breakpoints: Vec<f64> = (0..n)
        .map(|i| -half_range + 2.0 * half_range * i as f64 / (n - 1) as f64)
        .collect();
    Ok(chord_spec(kind, breakpoints))
}

/// Exhaustive minimax over symmetric chord fits.
///
/// Candidate positive breakpoints live on the uniform grid
/// `{ j * search_half_range / grid_points : j = 1..=grid_points }`; a fit
/// places (K-1)/2 of them mirrored about zero and chords between consecutive
/// breakpoints with constant tails. The returned spec minimizes the maximum
/// absolute deviation measured on the default dense grid (16001 points over
/// [-8, 8], widened if the search range exceeds 8). Ties are broken toward
/// the smallest outermost breakpoint.
pub fn fit_minimax(
    kind: ActivationKind,
    segments: usize,
    search_half_range: f64,
    grid_points: usize,
) -> Result<PwlSpec> {
    check_segments(segments)?;
    if !(search_half_range.is_finite() && search_half_range > 0.0) {
        return Err(Error::Argument(format!(
            "search_half_range must be > 0, got {search_half_range}"
        )));
    }
    if grid_points < 101 {
        return Err(Error::Argument(format!(
            "minimax candidate grid needs >= 101 points, got {grid_points}"
        )));
    }

    let g = grid_points;
    let m = (segments - 1) / 2; // free positive breakpoints
    let cand: Vec<f64> = (1..=g)
        .map(|j| search_half_range * j as f64 / g as f64)
        .collect();

    // Dense half-grid for the objective: the x >= 0 half of the default
    // error grid. Symmetric constructions have symmetric |error|, so the
    // half-grid maximum equals the full-grid maximum.
    let domain = super::DEFAULT_GRID_HALF_RANGE.max(search_half_range);
    let half_points = (super::DEFAULT_GRID_POINTS - 1) / 2; // 8000
    let xs: Vec<f64> = (0..=half_points)
        .map(|i| domain * i as f64 / half_points as f64)
        .collect();
    let fx: Vec<f64> = xs.iter().map(|&x| exact(kind, x)).collect();

    // First dense index strictly right of each candidate.
    let first_right: Vec<usize> = cand.iter().map(|&c| xs.partition_point(|&x| x <= c)).collect();

    // Middle-segment error for lowest positive breakpoint c: chord through
    // (-c, f(-c)) and (c, f(c)), evaluated on [0, c].
    let center = match kind {
        ActivationKind::Sigmoid => 0.5,
        ActivationKind::Tanh => 0.0,
    };
    let mid_err: Vec<f64> = (0..g)
        .map(|j| {
            let c = cand[j];
            let slope = (exact(kind, c) - center) / c;
            let mut worst = 0.0f64;
            for i in 0..first_right[j] {
                let d = (center + slope * xs[i] - fx[i]).abs();
                if d > worst {
                    worst = d;
                }
            }
            worst
        })
        .collect();

    // Tail error for outermost positive breakpoint c: the function is
    // monotone, so the worst deviation from the constant tail is at the
    // grid edge.
    let f_edge = *fx.last().unwrap();
    let tail_err: Vec<f64> = cand.iter().map(|&c| f_edge - exact(kind, c)).collect();

    // Chord error between candidate pairs, needed for K >= 5.
    let pair_err: Option<Vec<f64>> = if m >= 2 {
        let mut table = vec![0.0f64; g * g];
        for j1 in 0..g {
            let (a, fa) = (cand[j1], exact(kind, cand[j1]));
            for j2 in (j1 + 1)..g {
                let (b, fb) = (cand[j2], exact(kind, cand[j2]));
                let slope = (fb - fa) / (b - a);
                let mut worst = 0.0f64;
                for i in first_right[j1]..first_right[j2] {
                    let d = (fa + slope * (xs[i] - a) - fx[i]).abs();
                    if d > worst {
                        worst = d;
                    }
                }
                table[j1 * g + j2] = worst;
            }
        }
        Some(table)
    } else {
        None
    };

    struct Best {
        err: f64,
        outer: f64,
        combo: Vec<usize>,
    }
    impl Best {
        fn consider(&mut self, err: f64, outer: f64, combo: &[usize]) {
            if err < self.err || (err == self.err && outer < self.outer) {
                self.err = err;
                self.outer = outer;
                self.combo = combo.to_vec();
            }
        }
    }
    let mut best = Best { err: f64::INFINITY, outer: f64::INFINITY, combo: Vec::new() };

    // Pruning uses strict `>` so equal-error candidates still reach the
    // tie-break on the outermost breakpoint.
    match m {
        1 => {
            for j in 0..g {
                best.consider(mid_err[j].max(tail_err[j]), cand[j], &[j]);
            }
        }
        2 => {
            let pe = pair_err.as_ref().unwrap();
            for j1 in 0..g {
                if mid_err[j1] > best.err {
                    continue;
                }
                for j2 in (j1 + 1)..g {
                    let e = mid_err[j1].max(pe[j1 * g + j2]).max(tail_err[j2]);
                    best.consider(e, cand[j2], &[j1, j2]);
                }
            }
        }
        3 => {
            let pe = pair_err.as_ref().unwrap();
            for j1 in 0..g {
                if mid_err[j1] > best.err {
                    continue;
                }
                for j2 in (j1 + 1)..g {
                    let e12 = mid_err[j1].max(pe[j1 * g + j2]);
                    if e12 > best.err {
                        continue;
                    }
                    for j3 in (j2 + 1)..g {
                        let e = e12.max(pe[j2 * g + j3]).max(tail_err[j3]);
                        best.consider(e, cand[j3], &[j1, j2, j3]);
                    }
                }
            }
        }
        4 => {
            let pe = pair_err.as_ref().unwrap();
            for j1 in 0..g {
                if mid_err[j1] > best.err {
                    continue;
                }
                for j2 in (j1 + 1)..g {
                    let e12 = mid_err[j1].max(pe[j1 * g + j2]);
                    if e12 > best.err {
                        continue;
                    }
                    for j3 in (j2 + 1)..g {
                        let e13 = e12.max(pe[j2 * g + j3]);
                        if e13 > best.err {
                            continue;
                        }
                        for j4 in (j3 + 1)..g {
                            let e = e13.max(pe[j3 * g + j4]).max(tail_err[j4]);
                            best.consider(e, cand[j4], &[j1, j2, j3, j4]);
                        }
                    }
                }
            }
        }
        _ => unreachable!("segment count validated above"),
    }

    let mut breakpoints: Vec<f64> = best.combo.iter().rev().map(|&j| -cand[j]).collect();
    breakpoints.extend(best.combo.iter().map(|&j| cand[j]));
    Ok(chord_spec(kind, breakpoints))
}
