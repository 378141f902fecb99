//! The biLSTM+CNN equalizer: windowed forward pass, BPTT backward pass,
//! activation swapping, and dataset windowing.
//!
//! Architecture: a bidirectional LSTM (two scans over the window, hidden
//! states concatenated per time step) followed by a linear 1-D convolution
//! with no padding. With the standard sizes the equalizer maps 81 received
//! symbols (real, imag) to the 61 center transmitted-symbol estimates.

use crate::activation::{ActivationKind, PwlSpec};
use crate::channel::Dataset;
use crate::error::{Error, Result};
use crate::nncore::{
    conv1d_backward, conv1d_forward, glorot_uniform, load_checkpoint, lstm_cell_backward,
    lstm_cell_forward, save_checkpoint, Activation, LstmCache, LstmGrads, LstmParams, Tensor,
};
use crate::rng::Rng64;
use num_complex::Complex64;
use std::path::Path;

/// Hidden units per LSTM direction.
pub const HIDDEN_UNITS: usize = 35;
/// Input features per time step: (real, imag) of one received symbol.
pub const INPUT_FEATURES: usize = 2;
/// Convolution kernel length (no padding).
pub const KERNEL_LEN: usize = 21;
/// Convolution filters: real and imaginary outputs.
pub const FILTERS: usize = 2;
/// Symbols per input window.
pub const WINDOW_LEN: usize = 81;
/// Equalized symbols per window: WINDOW_LEN - KERNEL_LEN + 1.
pub const TARGET_LEN: usize = 61;
/// Context symbols on each side of the recovered span.
pub const LOOKBACK: usize = 10;

/// All weight tensors of the equalizer. `fwd`/`bwd` are the two LSTM scan
/// directions; `conv_w` is [filters x 2*hidden x kernel], `conv_b` [filters].
#[derive(Clone, Debug, PartialEq)]
pub struct EqualizerParams {
    pub hidden: usize,
    pub input: usize,
    pub kernel: usize,
    pub filters: usize,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub conv_w: Tensor,
    pub conv_b: Tensor,
}

impl EqualizerParams {
    pub fn zeros(hidden: usize, input: usize, kernel: usize, filters: usize) -> Self {
        EqualizerParams {
            hidden,
            input,
            kernel,
            filters,
            fwd: LstmParams::zeros(hidden, input),
            bwd: LstmParams::zeros(hidden, input),
            conv_w: Tensor::zeros(&[filters, 2 * hidden, kernel]),
            conv_b: Tensor::zeros(&[filters]),
        }
    }

    /// Seeded Glorot-uniform initialization; biases zero except the forget
    /// gate bias, set to 1.
    pub fn glorot(hidden: usize, input: usize, kernel: usize, filters: usize, seed: u64) -> Self {
        let mut rng = Rng64::stream(seed, 0x1217);
        let init_dir = |rng: &mut Rng64| {
            let w = glorot_uniform(&[4 * hidden, input], input, 4 * hidden, rng);
            let u = glorot_uniform(&[4 * hidden, hidden], hidden, 4 * hidden, rng);
            let mut b = Tensor::zeros(&[4 * hidden]);
            for j in 0..hidden {
                b.data_mut()[hidden + j] = 1.0;
            }
            LstmParams { w, u, b }
        };
        let fwd = init_dir(&mut rng);
        let bwd = init_dir(&mut rng);
        let fan_in = 2 * hidden * kernel;
        let fan_out = filters * kernel;
        let conv_w = glorot_uniform(&[filters, 2 * hidden, kernel], fan_in, fan_out, &mut rng);
        let conv_b = Tensor::zeros(&[filters]);
        EqualizerParams { hidden, input, kernel, filters, fwd, bwd, conv_w, conv_b }
    }

    /// The standard configuration: biLSTM(35) + conv(kernel 21, 2 filters).
    pub fn standard(seed: u64) -> Self {
        Self::glorot(HIDDEN_UNITS, INPUT_FEATURES, KERNEL_LEN, FILTERS, seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.fwd.validate()?;
        self.bwd.validate()?;
        if self.fwd.hidden() != self.hidden
            || self.bwd.hidden() != self.hidden
            || self.fwd.input() != self.input
            || self.bwd.input() != self.input
        {
            return Err(Error::Dimension("equalizer LSTM shapes disagree with header".into()));
        }
        if self.conv_w.shape() != [self.filters, 2 * self.hidden, self.kernel]
            || self.conv_b.shape() != [self.filters]
        {
            return Err(Error::Dimension(format!(
                "equalizer conv shapes {:?}/{:?} disagree with header",
                self.conv_w.shape(),
                self.conv_b.shape()
            )));
        }
        let finite = self.tensors().iter().all(|(_, t)| t.all_finite());
        if !finite {
            return Err(Error::Dimension("equalizer parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// Fixed-order view of all 8 parameter tensors (checkpoint order).
    pub fn tensors(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("fwd.w", &self.fwd.w),
            ("fwd.u", &self.fwd.u),
            ("fwd.b", &self.fwd.b),
            ("bwd.w", &self.bwd.w),
            ("bwd.u", &self.bwd.u),
            ("bwd.b", &self.bwd.b),
            ("conv.w", &self.conv_w),
            ("conv.b", &self.conv_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 8] {
        [
            ("fwd.w", &mut self.fwd.w),
            ("fwd.u", &mut self.fwd.u),
            ("fwd.b", &mut self.fwd.b),
            ("bwd.w", &mut self.bwd.w),
            ("bwd.u", &mut self.bwd.u),
            ("bwd.b", &mut self.bwd.b),
            ("conv.w", &mut self.conv_w),
            ("conv.b", &mut self.conv_b),
        ]
    }

    /// Accumulates `other` scaled by `s` into self (gradient reduction).
    pub fn add_scaled(&mut self, other: &EqualizerParams, s: f64) -> Result<()> {
        let mut mine = self.tensors_mut();
        let theirs = other.tensors();
        for ((_, a), (_, b)) in mine.iter_mut().zip(theirs.iter()) {
            if a.shape() != b.shape() {
                return Err(Error::Dimension("add_scaled shape mismatch".into()));
            }
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += s * y;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.all_finite())
    }
}

/// The pair of scalar activations used by the LSTM cells: `gate` plays the
/// sigmoid role (codomain within [0,1]), `state` the tanh role ([-1,1]).
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSet {
    pub gate: Activation,
    pub state: Activation,
}

impl ActivationSet {
    pub fn exact() -> Self {
        ActivationSet {
            gate: Activation::Exact(ActivationKind::Sigmoid),
            state: Activation::Exact(ActivationKind::Tanh),
        }
    }

    /// PWL mode; the specs' kinds must match their roles.
    pub fn pwl(sigmoid_spec: PwlSpec, tanh_spec: PwlSpec) -> Result<Self> {
        if sigmoid_spec.kind() != ActivationKind::Sigmoid {
            return Err(Error::Argument(format!(
                "gate spec has kind {:?}, want Sigmoid",
                sigmoid_spec.kind()
            )));
        }
        if tanh_spec.kind() != ActivationKind::Tanh {
            return Err(Error::Argument(format!(
                "state spec has kind {:?}, want Tanh",
                tanh_spec.kind()
            )));
        }
        Ok(ActivationSet {
            gate: Activation::Pwl(sigmoid_spec),
            state: Activation::Pwl(tanh_spec),
        })
    }

    pub fn is_pwl(&self) -> bool {
        self.gate.is_pwl() || self.state.is_pwl()
    }

    pub fn mode_str(&self) -> &'static str {
        if self.is_pwl() {
            "pwl"
        } else {
            "exact"
        }
    }
}

/// Replaces the exact activations with PWL approximations; parameters are
/// untouched (they live in [`EqualizerParams`]).
pub fn swap_activations(
    _acts_exact: &ActivationSet,
    sigmoid_spec: &PwlSpec,
    tanh_spec: &PwlSpec,
) -> Result<ActivationSet> {
    ActivationSet::pwl(sigmoid_spec.clone(), tanh_spec.clone())
}

/// Count of activation inputs that landed in zero-slope tail segments.
#[derive(Clone, Copy, Debug, Default)]
pub struct TailStats {
    pub in_tail: u64,
    pub total: u64,
}

impl TailStats {
    pub fn fraction(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.in_tail as f64 / self.total as f64
        }
    }

    pub fn merge(&mut self, other: TailStats) {
        self.in_tail += other.in_tail;
        self.total += other.total;
    }
}

/// Forward-pass byproducts kept for the backward pass.
pub struct ForwardCache {
    pub caches_fwd: Vec<LstmCache>,
    pub caches_bwd: Vec<LstmCache>,
    /// [T x 2H] concatenated hidden states in original time order.
    pub features: Tensor,
    pub output: Tensor,
}

fn scan_direction(
    params: &LstmParams,
    window: &Tensor,
    acts: &ActivationSet,
    reverse: bool,
) -> Result<(Vec<Vec<f64>>, Vec<LstmCache>)> {
    let t_len = window.shape()[0];
    let h = params.hidden();
    let mut hs: Vec<Vec<f64>> = vec![Vec::new(); t_len];
    let mut caches: Vec<LstmCache> = Vec::with_capacity(t_len);
    let mut h_state = vec![0.0; h];
    let mut c_state = vec![0.0; h];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..t_len).rev())
    } else {
        Box::new(0..t_len)
    };
    for t in order {
        let (h_t, c_t, cache) =
            lstm_cell_forward(window.row(t), &h_state, &c_state, params, &acts.gate, &acts.state)?;
        hs[t] = h_t.clone();
        caches.push(cache);
        h_state = h_t;
        c_state = c_t;
    }
    Ok((hs, caches))
}

/// Full forward pass retaining caches. `caches_fwd`/`caches_bwd` are in scan
/// order (bwd scan order is reversed time).
pub fn forward_cached(
    params: &EqualizerParams,
    window: &Tensor,
    acts: &ActivationSet,
) -> Result<ForwardCache> {
    params.validate()?;
    if window.rank() != 2 || window.shape()[1] != params.input {
        return Err(Error::Dimension(format!(
            "window shape {:?}, want [T, {}]",
            window.shape(),
            params.input
        )));
    }
    let t_len = window.shape()[0];
    if t_len < params.kernel {
        return Err(Error::Dimension(format!(
            "window length {t_len} shorter than kernel {}",
            params.kernel
        )));
    }
    let h = params.hidden;
    let (hs_f, caches_fwd) = scan_direction(&params.fwd, window, acts, false)?;
    let (hs_b, caches_bwd) = scan_direction(&params.bwd, window, acts, true)?;

    let mut features = Tensor::zeros(&[t_len, 2 * h]);
    for t in 0..t_len {
        let row = features.row_mut(t);
        row[..h].copy_from_slice(&hs_f[t]);
        row[h..].copy_from_slice(&hs_b[t]);
    }
    let output = conv1d_forward(&features, &params.conv_w, &params.conv_b)?;
    Ok(ForwardCache { caches_fwd, caches_bwd, features, output })
}

/// Equalizes one window: [T x 2] received (real, imag) rows in, linear
/// conv output [(T - kernel + 1) x 2] equalized (real, imag) rows out.
pub fn equalizer_forward(
    params: &EqualizerParams,
    window: &Tensor,
    acts: &ActivationSet,
) -> Result<Tensor> {
    Ok(forward_cached(params, window, acts)?.output)
}

/// Forward pass plus tail-segment statistics over every activation input
/// (4H gate/candidate pre-activations and H cell states per step).
pub fn equalizer_forward_stats(
    params: &EqualizerParams,
    window: &Tensor,
    acts: &ActivationSet,
) -> Result<(Tensor, TailStats)> {
    let cache = forward_cached(params, window, acts)?;
    let mut stats = TailStats::default();
    let h = params.hidden;
    for c in cache.caches_fwd.iter().chain(&cache.caches_bwd) {
        for j in 0..h {
            for &pre in &[c.pre[j], c.pre[h + j], c.pre[3 * h + j]] {
                stats.in_tail += acts.gate.in_tail(pre) as u64;
            }
            stats.in_tail += acts.state.in_tail(c.pre[2 * h + j]) as u64;
            stats.in_tail += acts.state.in_tail(c.c_t[j]) as u64;
            stats.total += 5;
        }
    }
    Ok((cache.output, stats))
}

/// Backpropagation through time from a cached forward pass. Returns
/// gradients in an [`EqualizerParams`]-shaped container.
pub fn backward_from_cache(
    params: &EqualizerParams,
    window: &Tensor,
    acts: &ActivationSet,
    cache: &ForwardCache,
    grad_out: &Tensor,
) -> Result<EqualizerParams> {
    let t_len = window.shape()[0];
    let h = params.hidden;
    let (d_features, d_conv_w, d_conv_b) =
        conv1d_backward(grad_out, &cache.features, &params.conv_w)?;

    let mut grads = EqualizerParams::zeros(params.hidden, params.input, params.kernel, params.filters);
    grads.conv_w = d_conv_w;
    grads.conv_b = d_conv_b;

    // Forward-direction scan order is t = 0..T, so BPTT walks t = T-1..0.
    {
        let mut g = LstmGrads::zeros(h, params.input);
        let mut dh_carry = vec![0.0; h];
        let mut dc_carry = vec![0.0; h];
        for t in (0..t_len).rev() {
            let mut dh: Vec<f64> = d_features.row(t)[..h].to_vec();
            for j in 0..h {
                dh[j] += dh_carry[j];
            }
            let (_, dh_prev, dc_prev) = lstm_cell_backward(
                &dh,
                &dc_carry,
                &cache.caches_fwd[t],
                &params.fwd,
                &acts.gate,
                &acts.state,
                &mut g,
            )?;
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }
        grads.fwd = LstmParams { w: g.w, u: g.u, b: g.b };
    }

    // Backward-direction scan order is t = T-1..0 (cache index k holds real
    // time T-1-k), so BPTT walks real time 0..T.
    {
        let mut g = LstmGrads::zeros(h, params.input);
        let mut dh_carry = vec![0.0; h];
        let mut dc_carry = vec![0.0; h];
        for t in 0..t_len {
            let mut dh: Vec<f64> = d_features.row(t)[h..].to_vec();
            for j in 0..h {
                dh[j] += dh_carry[j];
            }
            let cache_idx = t_len - 1 - t;
            let (_, dh_prev, dc_prev) = lstm_cell_backward(
                &dh,
                &dc_carry,
                &cache.caches_bwd[cache_idx],
                &params.bwd,
                &acts.gate,
                &acts.state,
                &mut g,
            )?;
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }
        grads.bwd = LstmParams { w: g.w, u: g.u, b: g.b };
    }

    Ok(grads)
}

/// Exact parameter gradients via BPTT; the forward pass is recomputed
/// internally.
pub fn equalizer_backward(
    params: &EqualizerParams,
    window: &Tensor,
    acts: &ActivationSet,
    grad_out: &Tensor,
) -> Result<EqualizerParams> {
    let cache = forward_cached(params, window, acts)?;
    if grad_out.shape() != cache.output.shape() {
        return Err(Error::Dimension(format!(
            "grad_out shape {:?}, want {:?}",
            grad_out.shape(),
            cache.output.shape()
        )));
    }
    backward_from_cache(params, window, acts, &cache, grad_out)
}

/// One (input window, target) training pair.
#[derive(Clone, Debug)]
pub struct WindowPair {
    /// [81 x 2] received (real, imag) rows.
    pub input: Tensor,
    /// [61 x 2] transmitted (real, imag) rows at the window center.
    pub target: Tensor,
}

/// Cuts aligned (received, transmitted) sequences into training pairs.
///
/// Windows advance by stride 61 so each transmitted symbol is recovered
/// exactly once; the 10-symbol lookback/lookahead context overlaps between
/// neighboring windows. A trailing remainder shorter than one stride is
/// dropped.
pub fn window_stream(rx: &[Complex64], tx: &[Complex64]) -> Result<Vec<WindowPair>> {
    if rx.len() != tx.len() {
        return Err(Error::Argument(format!(
            "window_stream: rx has {} symbols, tx has {}",
            rx.len(),
            tx.len()
        )));
    }
    if rx.len() < WINDOW_LEN {
        return Err(Error::Argument(format!(
            "window_stream needs >= {WINDOW_LEN} symbols, got {}",
            rx.len()
        )));
    }
    let mut pairs = Vec::new();
    let mut start = 0usize;
    while start + WINDOW_LEN <= rx.len() {
        let mut input = Tensor::zeros(&[WINDOW_LEN, 2]);
        for t in 0..WINDOW_LEN {
            let s = rx[start + t];
            let row = input.row_mut(t);
            row[0] = s.re;
            row[1] = s.im;
        }
        let mut target = Tensor::zeros(&[TARGET_LEN, 2]);
        for t in 0..TARGET_LEN {
            let s = tx[start + LOOKBACK + t];
            let row = target.row_mut(t);
            row[0] = s.re;
            row[1] = s.im;
        }
        pairs.push(WindowPair { input, target });
        start += TARGET_LEN;
    }
    Ok(pairs)
}

/// Windows over a dataset (inputs from rx, targets from tx).
pub fn dataset_windows(ds: &Dataset) -> Result<Vec<WindowPair>> {
    window_stream(&ds.rx, &ds.tx)
}

/// Saves parameters plus an activation-mode sidecar. Writes
/// `<stem>.ckpt` and `<stem>.meta`.
pub fn save_model(stem: &Path, params: &EqualizerParams, acts: &ActivationSet) -> Result<()> {
    params.validate()?;
    let tensors = params.tensors();
    save_checkpoint(&stem.with_extension("ckpt"), &tensors)?;
    let mut meta = String::new();
    meta.push_str(&format!("hidden = {}\n", params.hidden));
    meta.push_str(&format!("input = {}\n", params.input));
    meta.push_str(&format!("kernel = {}\n", params.kernel));
    meta.push_str(&format!("filters = {}\n", params.filters));
    meta.push_str(&format!("mode = {}\n", acts.mode_str()));
    if let (Activation::Pwl(s), Activation::Pwl(t)) = (&acts.gate, &acts.state) {
        meta.push_str(&format!("sigmoid_spec = {}\n", s.to_record()));
        meta.push_str(&format!("tanh_spec = {}\n", t.to_record()));
    }
    let path = stem.with_extension("meta");
    std::fs::write(&path, meta).map_err(|e| Error::io_path(e, &path))?;
    Ok(())
}

/// Loads a model saved by [`save_model`].
pub fn load_model(stem: &Path) -> Result<(EqualizerParams, ActivationSet)> {
    let tensors = load_checkpoint(&stem.with_extension("ckpt"))?;
    let meta_path = stem.with_extension("meta");
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io_path(e, &meta_path))?;
    let mut hidden = None;
    let mut input = None;
    let mut kernel = None;
    let mut filters = None;
    let mut mode = None;
    let mut sig_spec = None;
    let mut tanh_spec = None;
    for line in meta.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad meta line `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "hidden" => hidden = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
            "input" => input = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
            "kernel" => kernel = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
            "filters" => filters = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
            "mode" => mode = Some(value.to_string()),
            "sigmoid_spec" => sig_spec = Some(PwlSpec::from_record(value)?),
            "tanh_spec" => tanh_spec = Some(PwlSpec::from_record(value)?),
            other => return Err(Error::Parse(format!("unknown meta key `{other}`"))),
        }
    }
    let hidden = hidden.ok_or_else(|| Error::Parse("meta missing `hidden`".into()))?;
    let input = input.ok_or_else(|| Error::Parse("meta missing `input`".into()))?;
    let kernel = kernel.ok_or_else(|| Error::Parse("meta missing `kernel`".into()))?;
    let filters = filters.ok_or_else(|| Error::Parse("meta missing `filters`".into()))?;

    let mut params = EqualizerParams::zeros(hidden, input, kernel, filters);
    {
        let mut mine = params.tensors_mut();
        if tensors.len() != mine.len() {
            return Err(Error::Parse(format!(
                "checkpoint has {} tensors, want {}",
                tensors.len(),
                mine.len()
            )));
        }
        for ((name, dst), (got_name, got)) in mine.iter_mut().zip(tensors.into_iter()) {
            if *name != got_name {
                return Err(Error::Parse(format!(
                    "checkpoint tensor `{got_name}`, expected `{name}`"
                )));
            }
            if dst.shape() != got.shape() {
                return Err(Error::Dimension(format!(
                    "checkpoint tensor `{got_name}` shape {:?}, want {:?}",
                    got.shape(),
                    dst.shape()
                )));
            }
            **dst = got;
        }
    }
    params.validate()?;

    let acts = match mode.as_deref() {
        Some("exact") => ActivationSet::exact(),
        Some("pwl") => {
            let s = sig_spec.ok_or_else(|| Error::Parse("pwl meta missing sigmoid_spec".into()))?;
            let t = tanh_spec.ok_or_else(|| Error::Parse("pwl meta missing tanh_spec".into()))?;
            ActivationSet::pwl(s, t)?
        }
        other => return Err(Error::Parse(format!("bad meta mode {other:?}"))),
    };
    Ok((params, acts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{fit_chord, fit_hard};

    fn tiny_params(seed: u64) -> EqualizerParams {
        EqualizerParams::glorot(3, 2, 5, 2, seed)
    }

    fn random_window(t_len: usize, rng: &mut Rng64) -> Tensor {
        let mut w = Tensor::zeros(&[t_len, 2]);
        for v in w.data_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        w
    }

    #[test]
    fn zero_params_zero_output() {
        let params = EqualizerParams::zeros(4, 2, 5, 2);
        let mut rng = Rng64::new(0);
        let window = random_window(12, &mut rng);
        let out = equalizer_forward(&params, &window, &ActivationSet::exact()).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standard_output_length() {
        let params = EqualizerParams::standard(0);
        let mut rng = Rng64::new(1);
        let window = random_window(WINDOW_LEN, &mut rng);
        let out = equalizer_forward(&params, &window, &ActivationSet::exact()).unwrap();
        assert_eq!(out.shape(), &[TARGET_LEN, FILTERS]);
        assert_eq!(WINDOW_LEN - KERNEL_LEN + 1, TARGET_LEN);
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        // Independent reimplementation with plain nested loops, H=4, T=9.
        let (h, i_dim, klen, f) = (4usize, 2usize, 3usize, 2usize);
        let params = EqualizerParams::glorot(h, i_dim, klen, f, 0);
        let mut rng = Rng64::new(0);
        let t_len = 9;
        let window = random_window(t_len, &mut rng);
        let acts = ActivationSet::exact();
        let got = equalizer_forward(&params, &window, &acts).unwrap();

        let sig = |v: f64| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                v.exp() / (1.0 + v.exp())
            }
        };
        let cell = |p: &LstmParams, x: &[f64], hp: &[f64], cp: &[f64]| {
            let mut hn = vec![0.0; h];
            let mut cn = vec![0.0; h];
            for j in 0..h {
                let pre = |row: usize| {
                    let mut acc = p.b.data()[row];
                    for (col, xv) in x.iter().enumerate() {
                        acc += p.w.at2(row, col) * xv;
                    }
                    for (col, hv) in hp.iter().enumerate() {
                        acc += p.u.at2(row, col) * hv;
                    }
                    acc
                };
                let gi = sig(pre(j));
                let gf = sig(pre(h + j));
                let gg = pre(2 * h + j).tanh();
                let go = sig(pre(3 * h + j));
                cn[j] = gf * cp[j] + gi * gg;
                hn[j] = go * cn[j].tanh();
            }
            (hn, cn)
        };

        let mut hf = vec![vec![0.0; h]; t_len];
        let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
        for t in 0..t_len {
            let (hn, cn) = cell(&params.fwd, window.row(t), &hs, &cs);
            hf[t] = hn.clone();
            hs = hn;
            cs = cn;
        }
        let mut hb = vec![vec![0.0; h]; t_len];
        let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
        for t in (0..t_len).rev() {
            let (hn, cn) = cell(&params.bwd, window.row(t), &hs, &cs);
            hb[t] = hn.clone();
            hs = hn;
            cs = cn;
        }
        for t in 0..t_len - klen + 1 {
            for co in 0..f {
                let mut acc = params.conv_b.data()[co];
                for k in 0..klen {
                    for ci in 0..2 * h {
                        let feat = if ci < h { hf[t + k][ci] } else { hb[t + k][ci - h] };
                        acc += feat * params.conv_w.at3(co, ci, k);
                    }
                }
                assert!(
                    (got.at2(t, co) - acc).abs() < 1e-10,
                    "t={t} co={co}: {} vs {acc}",
                    got.at2(t, co)
                );
            }
        }
    }

    #[test]
    fn wrong_window_shape_rejected() {
        let params = tiny_params(0);
        let window = Tensor::zeros(&[10, 3]);
        assert!(equalizer_forward(&params, &window, &ActivationSet::exact()).is_err());
        let short = Tensor::zeros(&[3, 2]);
        assert!(equalizer_forward(&params, &short, &ActivationSet::exact()).is_err());
    }

    #[test]
    fn backward_zero_upstream_is_zero() {
        let params = tiny_params(1);
        let mut rng = Rng64::new(2);
        let window = random_window(10, &mut rng);
        let grad_out = Tensor::zeros(&[6, 2]);
        let grads =
            equalizer_backward(&params, &window, &ActivationSet::exact(), &grad_out).unwrap();
        for (_, t) in grads.tensors() {
            assert!(t.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn conv_bias_gradient_is_column_sum() {
        let params = tiny_params(3);
        let mut rng = Rng64::new(3);
        let window = random_window(10, &mut rng);
        let mut grad_out = Tensor::zeros(&[6, 2]);
        for v in grad_out.data_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        let grads =
            equalizer_backward(&params, &window, &ActivationSet::exact(), &grad_out).unwrap();
        for co in 0..2 {
            let want: f64 = (0..6).map(|t| grad_out.at2(t, co)).sum();
            assert!((grads.conv_b.data()[co] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_finite_difference_spot_check() {
        // 50 randomly chosen parameter entries, H=3, relative tol 1e-4.
        let params = tiny_params(4);
        let mut rng = Rng64::new(4);
        let window = random_window(12, &mut rng);
        let acts = ActivationSet::exact();
        let t_out = 12 - params.kernel + 1;
        let mut grad_out = Tensor::zeros(&[t_out, 2]);
        for v in grad_out.data_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        let grads = equalizer_backward(&params, &window, &acts, &grad_out).unwrap();

        let objective = |p: &EqualizerParams| -> f64 {
            let out = equalizer_forward(p, &window, &acts).unwrap();
            out.data().iter().zip(grad_out.data()).map(|(a, b)| a * b).sum()
        };

        let eps = 1e-6;
        for _ in 0..50 {
            let which = rng.below(8);
            let mut p = params.clone();
            let len = p.tensors()[which].1.len();
            let idx = rng.below(len);
            let analytic = grads.tensors()[which].1.data()[idx];
            {
                let mut ts = p.tensors_mut();
                ts[which].1.data_mut()[idx] += eps;
            }
            let up = objective(&p);
            {
                let mut ts = p.tensors_mut();
                ts[which].1.data_mut()[idx] -= 2.0 * eps;
            }
            let down = objective(&p);
            let fd = (up - down) / (2.0 * eps);
            let denom = fd.abs().max(analytic.abs()).max(1e-6);
            assert!(
                ((analytic - fd) / denom).abs() < 1e-4,
                "tensor {which} idx {idx}: {analytic} vs {fd}"
            );
        }
    }

    #[test]
    fn swap_changes_forward_output() {
        let params = tiny_params(5);
        let mut rng = Rng64::new(5);
        let window = random_window(10, &mut rng);
        let exact = ActivationSet::exact();
        let before = equalizer_forward(&params, &window, &exact).unwrap();
        let swapped = swap_activations(
            &exact,
            &fit_hard(ActivationKind::Sigmoid),
            &fit_hard(ActivationKind::Tanh),
        )
        .unwrap();
        assert!(swapped.is_pwl());
        assert!((swapped.gate.forward(0.0) - 0.5).abs() < 1e-15);
        let after = equalizer_forward(&params, &window, &swapped).unwrap();
        assert_ne!(before, after);
        // Re-wrapping with exact activations restores the original output.
        let back = equalizer_forward(&params, &window, &ActivationSet::exact()).unwrap();
        assert_eq!(before, back);
    }

    #[test]
    fn swap_rejects_kind_mismatch() {
        let exact = ActivationSet::exact();
        let sig = fit_hard(ActivationKind::Sigmoid);
        let tanh = fit_hard(ActivationKind::Tanh);
        assert!(swap_activations(&exact, &tanh, &tanh).is_err());
        assert!(swap_activations(&exact, &sig, &sig).is_err());
    }

    #[test]
    fn window_stream_counts() {
        let mk = |n: usize| -> Vec<Complex64> {
            (0..n).map(|i| Complex64::new(i as f64, -(i as f64))).collect()
        };
        assert_eq!(window_stream(&mk(81), &mk(81)).unwrap().len(), 1);
        assert_eq!(window_stream(&mk(142), &mk(142)).unwrap().len(), 2);
        assert_eq!(window_stream(&mk(141), &mk(141)).unwrap().len(), 1);
        assert!(window_stream(&mk(80), &mk(80)).is_err());
        assert!(window_stream(&mk(100), &mk(101)).is_err());
    }

    #[test]
    fn window_stream_alignment() {
        let n = 203; // 3 windows
        let tx: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let rx: Vec<Complex64> = (0..n).map(|i| Complex64::new(0.0, i as f64)).collect();
        let pairs = window_stream(&rx, &tx).unwrap();
        assert_eq!(pairs.len(), 3);
        for (w, p) in pairs.iter().enumerate() {
            let start = w * TARGET_LEN;
            assert_eq!(p.input.at2(0, 1), start as f64); // rx imag carries index
            assert_eq!(p.target.at2(0, 0), (start + LOOKBACK) as f64);
            assert_eq!(p.target.at2(TARGET_LEN - 1, 0), (start + LOOKBACK + TARGET_LEN - 1) as f64);
        }
    }

    #[test]
    fn time_reversal_consistency() {
        // A reverse scan equals a forward scan over the reversed window,
        // un-reversed.
        let params = tiny_params(6);
        let mut rng = Rng64::new(6);
        let window = random_window(14, &mut rng);
        let acts = ActivationSet::exact();
        let (hs_rev, _) = scan_direction(&params.bwd, &window, &acts, true).unwrap();
        let mut flipped = Tensor::zeros(&[14, 2]);
        for t in 0..14 {
            flipped.row_mut(t).copy_from_slice(window.row(13 - t));
        }
        let (hs_fwd, _) = scan_direction(&params.bwd, &flipped, &acts, false).unwrap();
        for t in 0..14 {
            for j in 0..hs_rev[t].len() {
                assert_eq!(hs_rev[t][j], hs_fwd[13 - t][j]);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let params = tiny_params(7);
        let mut rng = Rng64::new(7);
        let window = random_window(10, &mut rng);
        let acts = ActivationSet::exact();
        let a = equalizer_forward(&params, &window, &acts).unwrap();
        let b = equalizer_forward(&params, &window, &acts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("model");
        let params = tiny_params(8);
        let acts = ActivationSet::pwl(
            fit_chord(ActivationKind::Sigmoid, 5, 3.0).unwrap(),
            fit_chord(ActivationKind::Tanh, 5, 2.0).unwrap(),
        )
        .unwrap();
        save_model(&stem, &params, &acts).unwrap();
        let (p2, a2) = load_model(&stem).unwrap();
        assert_eq!(params, p2);
        assert_eq!(acts, a2);
    }

    #[test]
    fn tail_stats_counts_saturated_inputs() {
        let params = tiny_params(9);
        let mut rng = Rng64::new(9);
        let window = random_window(10, &mut rng);
        let exact = ActivationSet::exact();
        let (_, st) = equalizer_forward_stats(&params, &window, &exact).unwrap();
        assert_eq!(st.in_tail, 0);
        assert!(st.total > 0);
        let pwl = ActivationSet::pwl(
            fit_hard(ActivationKind::Sigmoid),
            fit_hard(ActivationKind::Tanh),
        )
        .unwrap();
        let (_, st2) = equalizer_forward_stats(&params, &window, &pwl).unwrap();
        assert_eq!(st2.total, st.total);
        assert!(st2.fraction() < 0.9);
    }
}
