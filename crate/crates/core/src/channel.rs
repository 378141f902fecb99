//! Synthetic coherent-channel data generator: Gray-mapped QAM symbols
//! through a quadratic-phase dispersive FIR, a memoryless Kerr-like phase
//! rotation, and additive white Gaussian noise.

use crate::error::{Error, Result};
use crate::rng::Rng64;
use num_complex::Complex64;
use std::path::Path;

/// RNG substreams so symbol draws and noise never share state.
const STREAM_SYMBOLS: u64 = 1;
const STREAM_NOISE: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    /// Square QAM order; the per-axis level count must be a power of two so
    /// Gray bit mapping is defined (4, 16, 64, 256).
    pub qam_order: u32,
    pub n_symbols: usize,
    /// FIR length of the dispersion proxy; odd.
    pub dispersion_taps: usize,
    /// Quadratic-phase coefficient in radians.
    pub dispersion_strength: f64,
    /// Kerr-like rotation, radians per unit power.
    pub kerr_gamma: f64,
    /// SNR in dB against unit signal power; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            qam_order: 16,
            n_symbols: 310_000,
            dispersion_taps: 11,
            dispersion_strength: 0.8,
            kerr_gamma: 0.10,
            snr_db: 18.0,
            seed: 1,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        Constellation::new(self.qam_order)?;
        if self.dispersion_taps % 2 == 0 || self.dispersion_taps == 0 {
            return Err(Error::Argument(format!(
                "dispersion_taps must be odd and >= 1, got {}",
                self.dispersion_taps
            )));
        }
        if !self.dispersion_strength.is_finite() || !self.kerr_gamma.is_finite() {
            return Err(Error::Argument("non-finite channel parameters".into()));
        }
        // +inf is the documented no-noise sentinel; NaN and -inf are not.
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Argument(format!("bad snr_db {}", self.snr_db)));
        }
        Ok(())
    }
}

/// Aligned transmitted/received sequences plus the generating config.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub tx: Vec<Complex64>,
    pub rx: Vec<Complex64>,
    pub config: ChannelConfig,
}

impl Dataset {
    /// Index-aligned sub-range of the dataset.
    pub fn slice(&self, start: usize, len: usize) -> Result<Dataset> {
        if start + len > self.tx.len() {
            return Err(Error::Argument(format!(
                "slice {start}+{len} exceeds dataset length {}",
                self.tx.len()
            )));
        }
        let mut config = self.config;
        config.n_symbols = len;
        Ok(Dataset {
            tx: self.tx[start..start + len].to_vec(),
            rx: self.rx[start..start + len].to_vec(),
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx.is_empty()
    }
}

/// Gray-mapped square-QAM constellation scaled to unit average power.
#[derive(Clone, Debug)]
pub struct Constellation {
    order: u32,
    side: u32,
    bits_per_axis: u32,
    scale: f64,
}

impl Constellation {
    pub fn new(order: u32) -> Result<Self> {
        let side = (order as f64).sqrt().round() as u32;
        if side * side != order || order < 4 {
            return Err(Error::Argument(format!("QAM order {order} is not a perfect square >= 4")));
        }
        if !side.is_power_of_two() {
            return Err(Error::Argument(format!(
                "QAM order {order}: per-axis levels {side} must be a power of two for Gray mapping"
            )));
        }
        // Levels are +-1, +-3, ... (side-1); mean per-axis power is
        // (side^2 - 1) / 3, and both axes contribute.
        let mean_power = 2.0 * ((side * side - 1) as f64) / 3.0;
        Ok(Constellation {
            order,
            side,
            bits_per_axis: side.trailing_zeros(),
            scale: 1.0 / mean_power.sqrt(),
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        2 * self.bits_per_axis
    }

    /// Amplitude of axis position k in {0, .., side-1}.
    #[inline]
    fn level(&self, k: u32) -> f64 {
        (2.0 * k as f64 - (self.side - 1) as f64) * self.scale
    }

    /// Symbol for a pair of axis positions.
    pub fn symbol(&self, k_i: u32, k_q: u32) -> Complex64 {
        Complex64::new(self.level(k_i), self.level(k_q))
    }

    /// Gray code of an axis position.
    #[inline]
    pub fn gray(k: u32) -> u32 {
        k ^ (k >> 1)
    }

    /// Nearest axis position for a received amplitude (decision with clamp).
    #[inline]
    pub fn nearest_axis(&self, v: f64) -> u32 {
        let k = ((v / self.scale + (self.side - 1) as f64) / 2.0).round();
        k.clamp(0.0, (self.side - 1) as f64) as u32
    }

    /// Appends the Gray-coded bits of one symbol (I axis first, MSB first).
    pub fn push_bits(&self, k_i: u32, k_q: u32, bits: &mut Vec<u8>) {
        for axis in [k_i, k_q] {
            let g = Self::gray(axis);
            for b in (0..self.bits_per_axis).rev() {
                bits.push(((g >> b) & 1) as u8);
            }
        }
    }
}

/// Uniform i.i.d. Gray-mapped QAM symbols at unit average power.
pub fn gen_qam(n: usize, order: u32, seed: u64) -> Result<Vec<Complex64>> {
    let c = Constellation::new(order)?;
    let mut rng = Rng64::stream(seed, STREAM_SYMBOLS);
    let mask = (c.side - 1) as u64;
    Ok((0..n)
        .map(|_| {
            let k_i = (rng.next_u64() & mask) as u32;
            let k_q = (rng.next_u64() & mask) as u32;
            c.symbol(k_i, k_q)
        })
        .collect())
}

/// Builds the unit-energy dispersive FIR: frequency response
/// H(f) = exp(i * strength * (2 pi f)^2) sampled on `taps` DFT bins,
/// inverse-DFT'd, and rotated so the center tap carries zero delay.
pub fn dispersion_taps(taps: usize, strength: f64) -> Result<Vec<Complex64>> {
    if taps % 2 == 0 || taps == 0 {
        return Err(Error::Argument(format!("taps must be odd and >= 1, got {taps}")));
    }
    let n = taps;
    if strength == 0.0 {
        // Exact unit impulse, so a zero-strength channel is the identity
        // bit-for-bit (the DFT route would leave ~1e-16 residue on the
        // other taps).
        let mut h = vec![Complex64::new(0.0, 0.0); n];
        h[(n - 1) / 2] = Complex64::new(1.0, 0.0);
        return Ok(h);
    }
    let mut h_freq = Vec::with_capacity(n);
    for j in 0..n {
        let f = if j <= (n - 1) / 2 {
            j as f64 / n as f64
        } else {
            (j as f64 - n as f64) / n as f64
        };
        let phase = strength * (2.0 * std::f64::consts::PI * f).powi(2);
        h_freq.push(Complex64::new(phase.cos(), phase.sin()));
    }
    // Inverse DFT (direct O(n^2); n is a handful of taps).
    let mut h_time = vec![Complex64::new(0.0, 0.0); n];
    for (k, h_k) in h_time.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, hf) in h_freq.iter().enumerate() {
            let ang = 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
            acc += hf * Complex64::new(ang.cos(), ang.sin());
        }
        *h_k = acc / n as f64;
    }
    // Center the impulse: tap m corresponds to delay m - (n-1)/2.
    let c = (n - 1) / 2;
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for (m, hm) in h.iter_mut().enumerate() {
        *hm = h_time[(m + n - c) % n];
    }
    let energy: f64 = h.iter().map(|v| v.norm_sqr()).sum();
    let norm = energy.sqrt();
    for v in &mut h {
        *v /= norm;
    }
    Ok(h)
}

/// Applies the dispersion FIR with zero-padded edges; output aligns
/// index-for-index with the input.
pub fn dispersive_filter(x: &[Complex64], taps: usize, strength: f64) -> Result<Vec<Complex64>> {
    let h = dispersion_taps(taps, strength)?;
    let c = (taps - 1) as isize / 2;
    let n = x.len() as isize;
    Ok((0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, hk) in h.iter().enumerate() {
                let src = i + c - k as isize;
                if src >= 0 && src < n {
                    acc += hk * x[src as usize];
                }
            }
            acc
        })
        .collect())
}

/// Memoryless Kerr-effect proxy: y_k = x_k * exp(i * gamma * |x_k|^2).
/// Phase-only, so per-symbol modulus is preserved.
pub fn kerr_rotate(x: &[Complex64], gamma: f64) -> Vec<Complex64> {
    x.iter()
        .map(|&s| {
            let phase = gamma * s.norm_sqr();
            s * Complex64::new(phase.cos(), phase.sin())
        })
        .collect()
}

/// Adds circular complex Gaussian noise with total variance 10^(-snr/10)
/// (the signal has unit average power by construction upstream).
/// `snr_db = +inf` is the no-noise sentinel.
pub fn add_awgn(x: &[Complex64], snr_db: f64, seed: u64) -> Vec<Complex64> {
    if snr_db == f64::INFINITY {
        return x.to_vec();
    }
    let variance = 10f64.powf(-snr_db / 10.0);
    let sigma = (variance / 2.0).sqrt();
    let mut rng = Rng64::stream(seed, STREAM_NOISE);
    x.iter()
        .map(|&s| {
            let (a, b) = rng.normal_pair();
            s + Complex64::new(sigma * a, sigma * b)
        })
        .collect()
}

/// Full pipeline: rx = awgn(kerr(dispersion(tx))). Deterministic per seed.
pub fn build_dataset(config: &ChannelConfig) -> Result<Dataset> {
    config.validate()?;
    let tx = gen_qam(config.n_symbols, config.qam_order, config.seed)?;
    let dispersed = dispersive_filter(&tx, config.dispersion_taps, config.dispersion_strength)?;
    let rotated = kerr_rotate(&dispersed, config.kerr_gamma);
    let rx = add_awgn(&rotated, config.snr_db, config.seed);
    Ok(Dataset { tx, rx, config: *config })
}

fn fmt_snr(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

/// Writes the dataset as plain text: a `#`-prefixed header carrying the
/// config, then one `tx_re,tx_im,rx_re,rx_im` line per symbol.
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut out = String::new();
    let c = &ds.config;
    out.push_str(&format!("# qam_order = {}\n", c.qam_order));
    out.push_str(&format!("# n_symbols = {}\n", c.n_symbols));
    out.push_str(&format!("# dispersion_taps = {}\n", c.dispersion_taps));
    out.push_str(&format!("# dispersion_strength = {}\n", c.dispersion_strength));
    out.push_str(&format!("# kerr_gamma = {}\n", c.kerr_gamma));
    out.push_str(&format!("# snr_db = {}\n", fmt_snr(c.snr_db)));
    out.push_str(&format!("# seed = {}\n", c.seed));
    for (t, r) in ds.tx.iter().zip(&ds.rx) {
        out.push_str(&format!("{},{},{},{}\n", t.re, t.im, r.re, r.im));
    }
    std::fs::write(path, out).map_err(|e| Error::io_path(e, path))
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(e, path))?;
    let mut config = ChannelConfig::default();
    let mut tx = Vec::new();
    let mut rx = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: bad header", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| Error::Parse(format!("line {}: {e}", lineno + 1));
            match key {
                "qam_order" => config.qam_order = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "n_symbols" => config.n_symbols = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "dispersion_taps" => config.dispersion_taps = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "dispersion_strength" => config.dispersion_strength = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "kerr_gamma" => config.kerr_gamma = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "snr_db" => {
                    config.snr_db = if value == "inf" {
                        f64::INFINITY
                    } else {
                        value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                    }
                }
                "seed" => config.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                other => return Err(Error::Parse(format!("line {}: unknown header key `{other}`", lineno + 1))),
            }
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(Error::Parse(format!("line {}: want 4 columns, got {}", lineno + 1, vals.len())));
        }
        tx.push(Complex64::new(vals[0], vals[1]));
        rx.push(Complex64::new(vals[2], vals[3]));
    }
    if tx.len() != config.n_symbols {
        return Err(Error::Parse(format!(
            "dataset has {} rows but header says {}",
            tx.len(),
            config.n_symbols
        )));
    }
    Ok(Dataset { tx, rx, config })
}
