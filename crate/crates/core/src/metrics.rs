//! Hard-decision demapping, BER, Q-factor, and published reference curves.

use crate::channel::{Constellation, Dataset};
use crate::error::{Error, Result};
use crate::hwcost::{ResourceRow, RESOURCE_TABLE};
use crate::model::{dataset_windows, equalizer_forward, ActivationSet, EqualizerParams, WindowPair,
    LOOKBACK, TARGET_LEN};
use crate::util::ordered_par_map;
use num_complex::Complex64;

/// Q-factor in dB, or a sentinel when the BER pins to an edge.
///
/// Serialized as a decimal number, `INF_Q` (no errors observed) or `ZERO_Q`
/// (BER at or beyond 0.5).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QFactor {
    Db(f64),
    Infinite,
    Zero,
}

impl QFactor {
    /// Total order embedding: Infinite above every finite value, Zero below.
    pub fn as_ord(self) -> f64 {
        match self {
            QFactor::Db(v) => v,
            QFactor::Infinite => f64::INFINITY,
            QFactor::Zero => f64::NEG_INFINITY,
        }
    }

    pub fn db(self) -> Option<f64> {
        match self {
            QFactor::Db(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_field(self) -> String {
        match self {
            QFactor::Db(v) => format!("{v}"),
            QFactor::Infinite => "INF_Q".to_string(),
            QFactor::Zero => "ZERO_Q".to_string(),
        }
    }

    pub fn from_field(s: &str) -> Result<Self> {
        match s {
            "INF_Q" => Ok(QFactor::Infinite),
            "ZERO_Q" => Ok(QFactor::Zero),
            other => other
                .parse::<f64>()
                .map(QFactor::Db)
                .map_err(|e| Error::Parse(format!("bad q_db field `{other}`: {e}"))),
        }
    }
}

/// Aggregated decision quality over a partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QResult {
    pub ber: f64,
    pub q: QFactor,
    pub n_bits: u64,
}

impl QResult {
    pub fn from_errors(bit_errors: u64, n_bits: u64) -> Result<QResult> {
        if n_bits == 0 {
            return Err(Error::Argument("QResult needs at least one bit".into()));
        }
        let ber = bit_errors as f64 / n_bits as f64;
        Ok(QResult { ber, q: q_factor_db(ber)?, n_bits })
    }

    /// One `label,segments,mode,ber,q_db,n_bits` record line.
    pub fn record(&self, label: &str, segments: u32, mode: &str) -> String {
        format!("{label},{segments},{mode},{},{},{}", self.ber, self.q.to_field(), self.n_bits)
    }
}

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6; // 2/sqrt(pi)

/// Complementary error function, double precision.
///
/// Maclaurin series below |x| = 2, Lentz-evaluated continued fraction above;
/// relative accuracy ~1e-13 over the range the Q-factor needs.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        // erf series: 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 1u32;
        loop {
            term *= -x2 / n as f64;
            let inc = term / (2 * n + 1) as f64;
            sum += inc;
            if inc.abs() < 1e-18 * sum.abs().max(1e-300) || n > 200 {
                break;
            }
            n += 1;
        }
        1.0 - FRAC_2_SQRT_PI * sum
    } else {
        // sqrt(pi) e^{x^2} erfc(x) = 1/(x+ (1/2)/(x+ 1/(x+ (3/2)/(x+ ...))))
        let tiny = 1e-300;
        let mut f = tiny;
        let mut c = f;
        let mut d = 0.0;
        let mut j = 1u32;
        loop {
            let a = if j == 1 { 1.0 } else { (j - 1) as f64 / 2.0 };
            d = x + a * d;
            if d == 0.0 {
                d = tiny;
            }
            c = x + a / c;
            if c == 0.0 {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-17 || j > 300 {
                break;
            }
            j += 1;
        }
        (-x * x).exp() / std::f64::consts::PI.sqrt() * f
    }
}

/// Inverse of [`erfc`] on (0, 2): bisection bracket, Newton polish, 1e-12
/// relative accuracy.
pub fn erfcinv(y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 2.0) {
        return Err(Error::Domain(format!("erfcinv domain is (0, 2), got {y}")));
    }
    if y == 1.0 {
        return Ok(0.0);
    }
    if y > 1.0 {
        return Ok(-erfcinv(2.0 - y)?);
    }
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if erfc(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    // Newton: d/dx erfc = -2/sqrt(pi) e^{-x^2}
    for _ in 0..4 {
        let fx = erfc(x) - y;
        let dfx = -FRAC_2_SQRT_PI * (-x * x).exp();
        let step = fx / dfx;
        let next = x - step;
        if next.is_finite() && next > 0.0 {
            x = next;
        }
        if step.abs() <= 1e-14 * x.abs().max(1e-300) {
            break;
        }
    }
    Ok(x)
}

/// Q-factor from BER: Q_dB = 20 log10(sqrt(2) * erfcinv(2 ber)).
///
/// `ber = 0` maps to the infinite-Q sentinel, `ber >= 0.5` (possible for a
/// measured rate) to the zero-information sentinel.
pub fn q_factor_db(ber: f64) -> Result<QFactor> {
    if !(0.0..=1.0).contains(&ber) {
        return Err(Error::Argument(format!("ber must be in [0, 1], got {ber}")));
    }
    if ber == 0.0 {
        return Ok(QFactor::Infinite);
    }
    if ber >= 0.5 {
        return Ok(QFactor::Zero);
    }
    let q_lin = 2.0f64.sqrt() * erfcinv(2.0 * ber)?;
    if q_lin <= 0.0 {
        return Ok(QFactor::Zero);
    }
    Ok(QFactor::Db(20.0 * q_lin.log10()))
}

/// Nearest-constellation-point decision and Gray demapping. Returns one bit
/// (0/1) per transmitted bit, I axis first, MSB first, per symbol.
pub fn hard_decision(y: &[Complex64], order: u32) -> Result<Vec<u8>> {
    let c = Constellation::new(order)?;
    let mut bits = Vec::with_capacity(y.len() * c.bits_per_symbol() as usize);
    for s in y {
        let k_i = c.nearest_axis(s.re);
        let k_q = c.nearest_axis(s.im);
        c.push_bits(k_i, k_q, &mut bits);
    }
    Ok(bits)
}

fn count_bit_errors(a: &[u8], b: &[u8]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// BER/Q over a list of windows for a given model. Windows are evaluated
/// independently; integer error counts make the reduction order-free.
pub fn q_over_windows(
    params: &EqualizerParams,
    acts: &ActivationSet,
    windows: &[WindowPair],
    order: u32,
) -> Result<QResult> {
    if windows.is_empty() {
        return Err(Error::Argument("q_over_windows: no windows".into()));
    }
    let per_window: Vec<Result<(u64, u64)>> = ordered_par_map(windows, |w| {
        let out = equalizer_forward(params, &w.input, acts)?;
        let est: Vec<Complex64> = (0..TARGET_LEN)
            .map(|t| Complex64::new(out.at2(t, 0), out.at2(t, 1)))
            .collect();
        let want: Vec<Complex64> = (0..TARGET_LEN)
            .map(|t| Complex64::new(w.target.at2(t, 0), w.target.at2(t, 1)))
            .collect();
        let got_bits = hard_decision(&est, order)?;
        let want_bits = hard_decision(&want, order)?;
        Ok((count_bit_errors(&got_bits, &want_bits), want_bits.len() as u64))
    });
    let mut errors = 0u64;
    let mut bits = 0u64;
    for r in per_window {
        let (e, b) = r?;
        errors += e;
        bits += b;
    }
    QResult::from_errors(errors, bits)
}

/// Runs the equalizer over a held-out partition and aggregates BER/Q.
pub fn evaluate(params: &EqualizerParams, acts: &ActivationSet, ds: &Dataset) -> Result<QResult> {
    let windows = dataset_windows(ds)?;
    q_over_windows(params, acts, &windows, ds.config.qam_order)
}

/// Baseline without equalization: hard decisions straight off the received
/// symbols, restricted to the same center positions a model would recover.
pub fn evaluate_raw(ds: &Dataset) -> Result<QResult> {
    let windows = dataset_windows(ds)?;
    let order = ds.config.qam_order;
    let mut errors = 0u64;
    let mut bits = 0u64;
    for w in &windows {
        let raw: Vec<Complex64> = (0..TARGET_LEN)
            .map(|t| Complex64::new(w.input.at2(LOOKBACK + t, 0), w.input.at2(LOOKBACK + t, 1)))
            .collect();
        let want: Vec<Complex64> = (0..TARGET_LEN)
            .map(|t| Complex64::new(w.target.at2(t, 0), w.target.at2(t, 1)))
            .collect();
        let got_bits = hard_decision(&raw, order)?;
        let want_bits = hard_decision(&want, order)?;
        errors += count_bit_errors(&got_bits, &want_bits);
        bits += want_bits.len() as u64;
    }
    QResult::from_errors(errors, bits)
}

/// Published reference results: the Q-factor-versus-segments curves (with
/// and without re-training), the no-approximation baseline, and the FPGA
/// resource table.
#[derive(Clone, Debug, PartialEq)]
pub struct PublishedReference {
    pub baseline_q_db: f64,
    /// (segments, Q dB) without re-training.
    pub no_retrain: [(u32, f64); 4],
    /// (segments, Q dB) with re-training.
    pub retrain: [(u32, f64); 4],
    pub resources: [ResourceRow; 5],
}

pub fn published_reference() -> PublishedReference {
    PublishedReference {
        baseline_q_db: 5.2,
        no_retrain: [(3, 0.0), (5, 3.21), (7, 4.26), (9, 4.48)],
        retrain: [(3, 5.09), (5, 5.075), (7, 5.1), (9, 5.1)],
        resources: RESOURCE_TABLE,
    }
}
