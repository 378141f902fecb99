//! 1-D convolution (cross-correlation), valid padding, stride 1.

use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check_shapes(x: &Tensor, kernels: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize, usize, usize)> {
    if x.rank() != 2 || kernels.rank() != 3 {
        return Err(Error::Dimension(format!(
            "conv1d wants x rank 2 and kernels rank 3, got {:?} / {:?}",
            x.shape(),
            kernels.shape()
        )));
    }
    let (t, cin) = (x.shape()[0], x.shape()[1]);
    let (cout, kcin, klen) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if kcin != cin {
        return Err(Error::Dimension(format!(
            "conv1d channel mismatch: input {cin}, kernels {kcin}"
        )));
    }
    if t < klen {
        return Err(Error::Dimension(format!(
            "conv1d input length {t} shorter than kernel {klen}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::Dimension(format!(
                "conv1d bias shape {:?}, want [{cout}]",
                b.shape()
            )));
        }
    }
    Ok((t, cin, cout, klen))
}

/// out[t, co] = bias[co] + sum_{k, ci} x[t + k, ci] * kernels[co, ci, k]
pub fn conv1d_forward(x: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (t, cin, cout, klen) = check_shapes(x, kernels, Some(bias))?;
    let t_out = t - klen + 1;
    let mut out = Tensor::zeros(&[t_out, cout]);
    let xd = x.data();
    let kd = kernels.data();
    for ti in 0..t_out {
        let row = out.row_mut(ti);
        for co in 0..cout {
            let mut acc = bias.data()[co];
            let kbase = co * cin * klen;
            for k in 0..klen {
                let xbase = (ti + k) * cin;
                let mut s = 0.0;
                for ci in 0..cin {
                    s += xd[xbase + ci] * kd[kbase + ci * klen + k];
                }
                acc += s;
            }
            row[co] = acc;
        }
    }
    Ok(out)
}

/// Exact gradients of [`conv1d_forward`]: returns (grad_x, grad_kernels,
/// grad_bias).
pub fn conv1d_backward(
    grads_out: &Tensor,
    x: &Tensor,
    kernels: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t, cin, cout, klen) = check_shapes(x, kernels, None)?;
    let t_out = t - klen + 1;
    if grads_out.shape() != [t_out, cout] {
        return Err(Error::Dimension(format!(
            "conv1d_backward: grads_out {:?}, want [{t_out}, {cout}]",
            grads_out.shape()
        )));
    }
    let mut gx = Tensor::zeros(&[t, cin]);
    let mut gk = Tensor::zeros(&[cout, cin, klen]);
    let mut gb = Tensor::zeros(&[cout]);
    let xd = x.data();
    let kd = kernels.data();
    let gxd = gx.data_mut();
    {
        let gkd = gk.data_mut();
        for ti in 0..t_out {
            let grow = grads_out.row(ti);
            for co in 0..cout {
                let g = grow[co];
                if g == 0.0 {
                    continue;
                }
                gb.data_mut()[co] += g;
                let kbase = co * cin * klen;
                for k in 0..klen {
                    let xbase = (ti + k) * cin;
                    for ci in 0..cin {
                        gkd[kbase + ci * klen + k] += g * xd[xbase + ci];
                        gxd[xbase + ci] += g * kd[kbase + ci * klen + k];
                    }
                }
            }
        }
    }
    Ok((gx, gk, gb))
}
