//! Single LSTM cell step, forward and backward.
//!
//! Gate order inside every concatenated 4H tensor is fixed as
//! (input i, forget f, cell candidate g, output o):
//!
//! ```text
//! pre = W x_t + U h_prev + b
//! i = gate(pre[0..H])    f = gate(pre[H..2H])
//! g = state(pre[2H..3H]) o = gate(pre[3H..4H])
//! c_t = f * c_prev + i * g
//! h_t = o * state(c_t)
//! ```

use super::act::Activation;
use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};

/// Weights of one LSTM direction: `w` is 4H x I, `u` is 4H x H, `b` is 4H.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmParams {
            w: Tensor::zeros(&[4 * hidden, input]),
            u: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn input(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        let i = self.input();
        if self.w.shape() != [4 * h, i] || self.u.shape() != [4 * h, h] || self.b.shape() != [4 * h]
        {
            return Err(Error::Dimension(format!(
                "inconsistent LSTM shapes: w {:?}, u {:?}, b {:?}",
                self.w.shape(),
                self.u.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Pre-activations, 4H in gate order.
    pub pre: Vec<f64>,
    pub gate_i: Vec<f64>,
    pub gate_f: Vec<f64>,
    pub cand_g: Vec<f64>,
    pub gate_o: Vec<f64>,
    pub c_t: Vec<f64>,
    /// state activation applied to c_t
    pub act_c: Vec<f64>,
}

/// Gradient accumulator congruent to [`LstmParams`].
#[derive(Clone, Debug)]
pub struct LstmGrads {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

impl LstmGrads {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmGrads {
            w: Tensor::zeros(&[4 * hidden, input]),
            u: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }
}

/// One forward step. Returns (h_t, c_t, cache).
pub fn lstm_cell_forward(
    x_t: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmParams,
    gate_act: &Activation,
    state_act: &Activation,
) -> Result<(Vec<f64>, Vec<f64>, LstmCache)> {
    let h = params.hidden();
    let i_dim = params.input();
    if x_t.len() != i_dim || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Dimension(format!(
            "lstm_cell_forward: x {} (want {i_dim}), h_prev {} / c_prev {} (want {h})",
            x_t.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }

    let mut pre = vec![0.0; 4 * h];
    for r in 0..4 * h {
        pre[r] = dot(params.w.row(r), x_t) + dot(params.u.row(r), h_prev) + params.b.data()[r];
    }

    let mut gate_i = vec![0.0; h];
    let mut gate_f = vec![0.0; h];
    let mut cand_g = vec![0.0; h];
    let mut gate_o = vec![0.0; h];
    for j in 0..h {
        gate_i[j] = gate_act.forward(pre[j]);
        gate_f[j] = gate_act.forward(pre[h + j]);
        cand_g[j] = state_act.forward(pre[2 * h + j]);
        gate_o[j] = gate_act.forward(pre[3 * h + j]);
    }

    let mut c_t = vec![0.0; h];
    let mut act_c = vec![0.0; h];
    let mut h_t = vec![0.0; h];
    for j in 0..h {
        c_t[j] = gate_f[j] * c_prev[j] + gate_i[j] * cand_g[j];
        act_c[j] = state_act.forward(c_t[j]);
        h_t[j] = gate_o[j] * act_c[j];
    }

    let cache = LstmCache {
        x: x_t.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        pre,
        gate_i,
        gate_f,
        cand_g,
        gate_o,
        c_t: c_t.clone(),
        act_c,
    };
    Ok((h_t, c_t, cache))
}

/// Reverse-mode step. `dh_t`/`dc_t` are the upstream gradients flowing into
/// h_t and c_t; parameter gradients accumulate into `grads`; returns
/// (dx, dh_prev, dc_prev).
#[allow(clippy::too_many_arguments)]
pub fn lstm_cell_backward(
    dh_t: &[f64],
    dc_t: &[f64],
    cache: &LstmCache,
    params: &LstmParams,
    gate_act: &Activation,
    state_act: &Activation,
    grads: &mut LstmGrads,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let h = params.hidden();
    let i_dim = params.input();
    if cache.h_prev.len() != h || cache.x.len() != i_dim {
        return Err(Error::Usage(
            "lstm_cell_backward: cache does not match parameter shapes".into(),
        ));
    }
    if dh_t.len() != h || dc_t.len() != h {
        return Err(Error::Dimension(format!(
            "lstm_cell_backward: gradient lengths {}/{} (want {h})",
            dh_t.len(),
            dc_t.len()
        )));
    }

    // Through h_t = o * act_c and c_t accumulation.
    let mut dpre = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for j in 0..h {
        let d_o = dh_t[j] * cache.act_c[j];
        let dc = dc_t[j] + dh_t[j] * cache.gate_o[j] * state_act.derivative(cache.c_t[j]);
        let d_i = dc * cache.cand_g[j];
        let d_f = dc * cache.c_prev[j];
        let d_g = dc * cache.gate_i[j];
        dc_prev[j] = dc * cache.gate_f[j];
        dpre[j] = d_i * gate_act.derivative(cache.pre[j]);
        dpre[h + j] = d_f * gate_act.derivative(cache.pre[h + j]);
        dpre[2 * h + j] = d_g * state_act.derivative(cache.pre[2 * h + j]);
        dpre[3 * h + j] = d_o * gate_act.derivative(cache.pre[3 * h + j]);
    }

    let mut dx = vec![0.0; i_dim];
    let mut dh_prev = vec![0.0; h];
    for r in 0..4 * h {
        let g = dpre[r];
        if g != 0.0 {
            axpy(grads.w.row_mut(r), g, &cache.x);
            axpy(grads.u.row_mut(r), g, &cache.h_prev);
            axpy(&mut dx, g, params.w.row(r));
            axpy(&mut dh_prev, g, params.u.row(r));
        }
        grads.b.data_mut()[r] += g;
    }

    Ok((dx, dh_prev, dc_prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::rng::Rng64;

    fn exact_acts() -> (Activation, Activation) {
        (
            Activation::Exact(ActivationKind::Sigmoid),
            Activation::Exact(ActivationKind::Tanh),
        )
    }

    fn random_params(h: usize, i: usize, rng: &mut Rng64) -> LstmParams {
        let mut p = LstmParams::zeros(h, i);
        for v in p.w.data_mut() {
            *v = rng.uniform(-0.5, 0.5);
        }
        for v in p.u.data_mut() {
            *v = rng.uniform(-0.5, 0.5);
        }
        for v in p.b.data_mut() {
            *v = rng.uniform(-0.5, 0.5);
        }
        p
    }

    #[test]
    fn zero_parameters_zero_state() {
        let (gate, state) = exact_acts();
        let p = LstmParams::zeros(3, 2);
        let (h_t, c_t, _) =
            lstm_cell_forward(&[0.7, -0.3], &[0.0; 3], &[0.0; 3], &p, &gate, &state).unwrap();
        // i = f = o = 0.5, g = 0 -> c_t = 0, h_t = 0.
        assert_eq!(c_t, vec![0.0; 3]);
        assert_eq!(h_t, vec![0.0; 3]);
    }

    #[test]
    fn zero_parameters_halves_cell_state() {
        let (gate, state) = exact_acts();
        let p = LstmParams::zeros(2, 2);
        let c_prev = [0.8, -0.4];
        let (h_t, c_t, _) =
            lstm_cell_forward(&[0.0, 0.0], &[0.0, 0.0], &c_prev, &p, &gate, &state).unwrap();
        for j in 0..2 {
            assert!((c_t[j] - 0.5 * c_prev[j]).abs() < 1e-15);
            assert!((h_t[j] - 0.5 * (0.5 * c_prev[j]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_forget_gate_copies_cell_state() {
        let (gate, state) = exact_acts();
        let h = 3;
        let mut p = LstmParams::zeros(h, 2);
        for j in 0..h {
            p.b.data_mut()[j] = -20.0; // input gate off
            p.b.data_mut()[h + j] = 20.0; // forget gate on
            p.b.data_mut()[2 * h + j] = -20.0;
            p.b.data_mut()[3 * h + j] = -20.0;
        }
        let c_prev = [0.3, -0.2, 0.9];
        let (_, c_t, _) =
            lstm_cell_forward(&[0.1, 0.2], &[0.0; 3], &c_prev, &p, &gate, &state).unwrap();
        for j in 0..h {
            assert!((c_t[j] - c_prev[j]).abs() < 1e-8, "{} vs {}", c_t[j], c_prev[j]);
        }
    }

    #[test]
    fn forward_matches_scalar_reimplementation() {
        // Straight-line scalar oracle of the same equations, seed 0, H=2 I=2.
        let (gate, state) = exact_acts();
        let mut rng = Rng64::new(0);
        let h = 2;
        let p = random_params(h, 2, &mut rng);
        let x = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let h_prev = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let c_prev = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut expect_h = [0.0; 2];
        let mut expect_c = [0.0; 2];
        for j in 0..h {
            let pre = |row: usize| -> f64 {
                p.w.at2(row, 0) * x[0]
                    + p.w.at2(row, 1) * x[1]
                    + p.u.at2(row, 0) * h_prev[0]
                    + p.u.at2(row, 1) * h_prev[1]
                    + p.b.data()[row]
            };
            let gi = sig(pre(j));
            let gf = sig(pre(h + j));
            let gg = pre(2 * h + j).tanh();
            let go = sig(pre(3 * h + j));
            expect_c[j] = gf * c_prev[j] + gi * gg;
            expect_h[j] = go * expect_c[j].tanh();
        }

        let (h_t, c_t, _) =
            lstm_cell_forward(&x, &h_prev, &c_prev, &p, &gate, &state).unwrap();
        for j in 0..h {
            assert!((h_t[j] - expect_h[j]).abs() < 1e-12);
            assert!((c_t[j] - expect_c[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (gate, state) = exact_acts();
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_cell_forward(&[0.0; 3], &[0.0; 3], &[0.0; 3], &p, &gate, &state).is_err());
        assert!(lstm_cell_forward(&[0.0; 2], &[0.0; 2], &[0.0; 3], &p, &gate, &state).is_err());
    }

    /// Central finite differences on every parameter entry of a tiny cell.
    fn finite_difference_check(gate: &Activation, state: &Activation, tol: f64, shift: f64) {
        let mut rng = Rng64::new(0);
        let h = 3;
        let i = 2;
        let mut p = random_params(h, i, &mut rng);
        // Optionally shift pre-activations away from PWL breakpoints.
        for v in p.b.data_mut() {
            *v += shift;
        }
        let x: Vec<f64> = (0..i).map(|_| rng.uniform(-0.8, 0.8)).collect();
        let h_prev: Vec<f64> = (0..h).map(|_| rng.uniform(-0.8, 0.8)).collect();
        let c_prev: Vec<f64> = (0..h).map(|_| rng.uniform(-0.8, 0.8)).collect();
        // Scalar objective: weighted sum of h_t and c_t.
        let wh: Vec<f64> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let wc: Vec<f64> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let objective = |p: &LstmParams| -> f64 {
            let (h_t, c_t, _) = lstm_cell_forward(&x, &h_prev, &c_prev, p, gate, state).unwrap();
            h_t.iter().zip(&wh).map(|(a, b)| a * b).sum::<f64>()
                + c_t.iter().zip(&wc).map(|(a, b)| a * b).sum::<f64>()
        };

        let (_, _, cache) = lstm_cell_forward(&x, &h_prev, &c_prev, &p, gate, state).unwrap();
        let mut grads = LstmGrads::zeros(h, i);
        lstm_cell_backward(&wh, &wc, &cache, &p, gate, state, &mut grads).unwrap();

        let eps = 1e-6;
        let mut check = |analytic: f64, p: &mut LstmParams, which: usize, idx: usize| {
            let get = |p: &LstmParams, which: usize, idx: usize| match which {
                0 => p.w.data()[idx],
                1 => p.u.data()[idx],
                _ => p.b.data()[idx],
            };
            let set = |p: &mut LstmParams, which: usize, idx: usize, v: f64| match which {
                0 => p.w.data_mut()[idx] = v,
                1 => p.u.data_mut()[idx] = v,
                _ => p.b.data_mut()[idx] = v,
            };
            let orig = get(p, which, idx);
            set(p, which, idx, orig + eps);
            let up = objective(p);
            set(p, which, idx, orig - eps);
            let down = objective(p);
            set(p, which, idx, orig);
            let fd = (up - down) / (2.0 * eps);
            let denom = fd.abs().max(analytic.abs()).max(1e-8);
            assert!(
                ((analytic - fd) / denom).abs() < tol,
                "which={which} idx={idx}: analytic {analytic} vs fd {fd}"
            );
        };

        for idx in 0..4 * h * i {
            check(grads.w.data()[idx], &mut p, 0, idx);
        }
        for idx in 0..4 * h * h {
            check(grads.u.data()[idx], &mut p, 1, idx);
        }
        for idx in 0..4 * h {
            check(grads.b.data()[idx], &mut p, 2, idx);
        }
    }

    #[test]
    fn backward_matches_finite_differences_exact() {
        let (gate, state) = exact_acts();
        finite_difference_check(&gate, &state, 1e-5, 0.0);
    }

    #[test]
    fn backward_matches_finite_differences_pwl() {
        use crate::activation::fit_hard;
        let gate = Activation::Pwl(fit_hard(ActivationKind::Sigmoid));
        let state = Activation::Pwl(fit_hard(ActivationKind::Tanh));
        // Small bias shift keeps pre-activations comfortably away from the
        // hard-spec breakpoints for this seed.
        finite_difference_check(&gate, &state, 1e-4, 0.1);
    }

    #[test]
    fn zero_upstream_gradient_zero_outputs() {
        let (gate, state) = exact_acts();
        let mut rng = Rng64::new(1);
        let p = random_params(2, 2, &mut rng);
        let (_, _, cache) =
            lstm_cell_forward(&[0.1, 0.2], &[0.3, -0.1], &[0.2, 0.4], &p, &gate, &state).unwrap();
        let mut grads = LstmGrads::zeros(2, 2);
        let (dx, dh, dc) =
            lstm_cell_backward(&[0.0; 2], &[0.0; 2], &cache, &p, &gate, &state, &mut grads)
                .unwrap();
        assert!(dx.iter().all(|v| *v == 0.0));
        assert!(dh.iter().all(|v| *v == 0.0));
        assert!(dc.iter().all(|v| *v == 0.0));
        assert!(grads.w.data().iter().all(|v| *v == 0.0));
        assert!(grads.u.data().iter().all(|v| *v == 0.0));
        assert!(grads.b.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hidden_unit_permutation_equivariance() {
        // Swapping two hidden units consistently across all gate blocks of
        // (W, U, b), U's columns, and the incoming state permutes h_t/c_t
        // the same way: the cell depends on the tensors only through the
        // declared (i, f, g, o) block layout.
        let (gate, state) = exact_acts();
        let mut rng = Rng64::new(5);
        let h = 4;
        let p = random_params(h, 2, &mut rng);
        let x = [0.3, -0.6];
        let h_prev: Vec<f64> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let c_prev: Vec<f64> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (h_t, c_t, _) = lstm_cell_forward(&x, &h_prev, &c_prev, &p, &gate, &state).unwrap();

        let (a, b) = (1usize, 3usize);
        let perm = |j: usize| -> usize {
            if j == a {
                b
            } else if j == b {
                a
            } else {
                j
            }
        };
        let mut q = LstmParams::zeros(h, 2);
        for gate_block in 0..4 {
            for j in 0..h {
                let src = gate_block * h + perm(j);
                let dst = gate_block * h + j;
                for col in 0..2 {
                    q.w.row_mut(dst)[col] = p.w.at2(src, col);
                }
                for col in 0..h {
                    q.u.row_mut(dst)[col] = p.u.at2(src, perm(col));
                }
                q.b.data_mut()[dst] = p.b.data()[src];
            }
        }
        let hp: Vec<f64> = (0..h).map(|j| h_prev[perm(j)]).collect();
        let cp: Vec<f64> = (0..h).map(|j| c_prev[perm(j)]).collect();
        let (h2, c2, _) = lstm_cell_forward(&x, &hp, &cp, &q, &gate, &state).unwrap();
        for j in 0..h {
            assert!((h2[j] - h_t[perm(j)]).abs() < 1e-14);
            assert!((c2[j] - c_t[perm(j)]).abs() < 1e-14);
        }
    }
}
