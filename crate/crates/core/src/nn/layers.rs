//! Forward and backward kernels on flat row-major buffers.

/// Same-padded 2-D convolution of `x` (cin × t × f) into (cout × t × f).
/// `w` is (cout × cin × k × k).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward(
    x: &[f64],
    cin: usize,
    frames: usize,
    bins: usize,
    w: &[f64],
    b: &[f64],
    cout: usize,
    k: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; cout * frames * bins];
    let pad = (k / 2) as isize;
    for o in 0..cout {
        let plane = &mut out[o * frames * bins..(o + 1) * frames * bins];
        plane.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..cin {
            for kt in 0..k {
                let dt = kt as isize - pad;
                let (t_lo, t_hi) = valid_range(frames, dt);
                for kf in 0..k {
                    let df = kf as isize - pad;
                    let (f_lo, f_hi) = valid_range(bins, df);
                    let wv = w[((o * cin + i) * k + kt) * k + kf];
                    if wv == 0.0 {
                        continue;
                    }
                    for t in t_lo..t_hi {
                        let src_t = (t as isize + dt) as usize;
                        let out_row = &mut plane[t * bins + f_lo..t * bins + f_hi];
                        let src_start = (i * frames + src_t) * bins + (f_lo as isize + df) as usize;
                        let in_row = &x[src_start..src_start + (f_hi - f_lo)];
                        for (o_v, i_v) in out_row.iter_mut().zip(in_row) {
                            *o_v += wv * i_v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients, and input gradients when `dx` is given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f64],
    dout: &[f64],
    cin: usize,
    frames: usize,
    bins: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let pad = (k / 2) as isize;
    for o in 0..cout {
        let plane = &dout[o * frames * bins..(o + 1) * frames * bins];
        db[o] += plane.iter().sum::<f64>();
        for i in 0..cin {
            for kt in 0..k {
                let dt = kt as isize - pad;
                let (t_lo, t_hi) = valid_range(frames, dt);
                for kf in 0..k {
                    let df = kf as isize - pad;
                    let (f_lo, f_hi) = valid_range(bins, df);
                    let widx = ((o * cin + i) * k + kt) * k + kf;
                    let wv = w[widx];
                    let mut acc = 0.0;
                    for t in t_lo..t_hi {
                        let src_t = (t as isize + dt) as usize;
                        let g_row = &plane[t * bins + f_lo..t * bins + f_hi];
                        let src_start = (i * frames + src_t) * bins + (f_lo as isize + df) as usize;
                        let n = f_hi - f_lo;
                        let in_row = &x[src_start..src_start + n];
                        acc += g_row.iter().zip(in_row).map(|(g, v)| g * v).sum::<f64>();
                        if let Some(dx) = dx.as_deref_mut() {
                            for (d, g) in dx[src_start..src_start + n].iter_mut().zip(g_row) {
                                *d += wv * g;
                            }
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
}

/// Output positions whose input at offset `d` stays inside `0..len`.
fn valid_range(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d.max(0)).max(0) as usize;
    (lo.min(hi), hi)
}

/// Max pooling over the last axis by `factor`; trailing bins that do not
/// fill a window are dropped. Returns pooled values and argmax offsets.
pub(crate) fn pool_forward(
    y: &[f64],
    channels: usize,
    frames: usize,
    bins: usize,
    factor: usize,
) -> (Vec<f64>, Vec<u32>) {
    let out_bins = bins / factor;
    let mut out = Vec::with_capacity(channels * frames * out_bins);
    let mut arg = Vec::with_capacity(channels * frames * out_bins);
    for row in 0..channels * frames {
        let src = &y[row * bins..(row + 1) * bins];
        for j in 0..out_bins {
            let mut best = j * factor;
            for f in j * factor + 1..(j + 1) * factor {
                if src[f] > src[best] {
                    best = f;
                }
            }
            out.push(src[best]);
            arg.push((row * bins + best) as u32);
        }
    }
    (out, arg)
}

pub(crate) fn pool_backward(dout: &[f64], argmax: &[u32], input_len: usize) -> Vec<f64> {
    let mut dy = vec![0.0; input_len];
    for (g, idx) in dout.iter().zip(argmax) {
        dy[*idx as usize] += g;
    }
    dy
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cached activations of one LSTM direction over a sequence.
#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    /// activated gates i, f, g, o per step (T × 4H)
    pub gates: Vec<f64>,
    /// cell state per step (T × H)
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    /// hidden output per step (T × H)
    pub hidden: Vec<f64>,
}

/// One direction of an LSTM over `xs` (T × D). `reverse` runs from the last
/// step to the first. Weights: `w_ih` (4H × D), `w_hh` (4H × H), `b` (4H),
/// gate order i, f, g, o.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_forward(
    xs: &[f64],
    steps: usize,
    input: usize,
    hidden: usize,
    w_ih: &[f64],
    w_hh: &[f64],
    b: &[f64],
    reverse: bool,
) -> LstmTrace {
    let h4 = 4 * hidden;
    let mut trace = LstmTrace {
        gates: vec![0.0; steps * h4],
        cell: vec![0.0; steps * hidden],
        tanh_cell: vec![0.0; steps * hidden],
        hidden: vec![0.0; steps * hidden],
    };
    let zeros = vec![0.0; hidden];
    let mut z = vec![0.0; h4];
    for step in 0..steps {
        let t = if reverse { steps - 1 - step } else { step };
        let prev = if step == 0 {
            None
        } else if reverse {
            Some(t + 1)
        } else {
            Some(t - 1)
        };
        let (h_prev, c_prev) = match prev {
            Some(p) => (
                trace.hidden[p * hidden..(p + 1) * hidden].to_vec(),
                trace.cell[p * hidden..(p + 1) * hidden].to_vec(),
            ),
            None => (zeros.clone(), zeros.clone()),
        };
        let x = &xs[t * input..(t + 1) * input];
        for r in 0..h4 {
            let wi = &w_ih[r * input..(r + 1) * input];
            let wh = &w_hh[r * hidden..(r + 1) * hidden];
            z[r] = b[r]
                + wi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + wh.iter().zip(&h_prev).map(|(a, b)| a * b).sum::<f64>();
        }
        let g = &mut trace.gates[t * h4..(t + 1) * h4];
        for j in 0..hidden {
            g[j] = sigmoid(z[j]);
            g[hidden + j] = sigmoid(z[hidden + j]);
            g[2 * hidden + j] = z[2 * hidden + j].tanh();
            g[3 * hidden + j] = sigmoid(z[3 * hidden + j]);
        }
        for j in 0..hidden {
            let c = g[hidden + j] * c_prev[j] + g[j] * g[2 * hidden + j];
            let tc = c.tanh();
            trace.cell[t * hidden + j] = c;
            trace.tanh_cell[t * hidden + j] = tc;
            trace.hidden[t * hidden + j] = g[3 * hidden + j] * tc;
        }
    }
    trace
}

/// Backpropagation through time for one direction. `dh` (T × H) is the
/// gradient arriving at each step's hidden output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward(
    trace: &LstmTrace,
    xs: &[f64],
    dh: &[f64],
    steps: usize,
    input: usize,
    hidden: usize,
    w_ih: &[f64],
    w_hh: &[f64],
    reverse: bool,
    dw_ih: &mut [f64],
    dw_hh: &mut [f64],
    db: &mut [f64],
    dx: &mut [f64],
) {
    let h4 = 4 * hidden;
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut dz = vec![0.0; h4];
    let zeros = vec![0.0; hidden];
    // visit steps in reverse processing order
    for step in (0..steps).rev() {
        let t = if reverse { steps - 1 - step } else { step };
        let prev = if step == 0 {
            None
        } else if reverse {
            Some(t + 1)
        } else {
            Some(t - 1)
        };
        let (h_prev, c_prev): (&[f64], &[f64]) = match prev {
            Some(p) => (
                &trace.hidden[p * hidden..(p + 1) * hidden],
                &trace.cell[p * hidden..(p + 1) * hidden],
            ),
            None => (&zeros, &zeros),
        };
        let g = &trace.gates[t * h4..(t + 1) * h4];
        for j in 0..hidden {
            let (i_g, f_g, g_g, o_g) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
            let tc = trace.tanh_cell[t * hidden + j];
            let dh_j = dh[t * hidden + j] + dh_next[j];
            let d_o = dh_j * tc;
            let dc = dh_j * o_g * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g_g * i_g * (1.0 - i_g);
            dz[hidden + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
            dz[2 * hidden + j] = dc * i_g * (1.0 - g_g * g_g);
            dz[3 * hidden + j] = d_o * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
        }
        let x = &xs[t * input..(t + 1) * input];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let dx_t = &mut dx[t * input..(t + 1) * input];
        for r in 0..h4 {
            let d = dz[r];
            if d == 0.0 {
                continue;
            }
            db[r] += d;
            let wi = &w_ih[r * input..(r + 1) * input];
            let dwi = &mut dw_ih[r * input..(r + 1) * input];
            for ((dw, xv), (dxv, wv)) in dwi.iter_mut().zip(x).zip(dx_t.iter_mut().zip(wi)) {
                *dw += d * xv;
                *dxv += d * wv;
            }
            let wh = &w_hh[r * hidden..(r + 1) * hidden];
            let dwh = &mut dw_hh[r * hidden..(r + 1) * hidden];
            for ((dw, hv), (dhn, wv)) in dwh.iter_mut().zip(h_prev).zip(dh_next.iter_mut().zip(wh)) {
                *dw += d * hv;
                *dhn += d * wv;
            }
        }
    }
}

/// Per-frame affine map: (T × input) → (T × output), `w` is (output × input).
pub(crate) fn dense_forward(
    xs: &[f64],
    steps: usize,
    input: usize,
    output: usize,
    w: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; steps * output];
    for t in 0..steps {
        let x = &xs[t * input..(t + 1) * input];
        for o in 0..output {
            let row = &w[o * input..(o + 1) * input];
            out[t * output + o] = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    xs: &[f64],
    dout: &[f64],
    steps: usize,
    input: usize,
    output: usize,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; steps * input];
    for t in 0..steps {
        let x = &xs[t * input..(t + 1) * input];
        let dx_t = &mut dx[t * input..(t + 1) * input];
        for o in 0..output {
            let g = dout[t * output + o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let row = &w[o * input..(o + 1) * input];
            let drow = &mut dw[o * input..(o + 1) * input];
            for ((dwv, xv), (dxv, wv)) in drow.iter_mut().zip(x).zip(dx_t.iter_mut().zip(row)) {
                *dwv += g * xv;
                *dxv += g * wv;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], cin: usize, t: usize, f: usize, w: &[f64], b: &[f64], cout: usize, k: usize) -> Vec<f64> {
        let p = (k / 2) as isize;
        let mut out = vec![0.0; cout * t * f];
        for o in 0..cout {
            for tt in 0..t as isize {
                for ff in 0..f as isize {
                    let mut acc = b[o];
                    for i in 0..cin {
                        for kt in 0..k as isize {
                            for kf in 0..k as isize {
                                let (st, sf) = (tt + kt - p, ff + kf - p);
                                if st >= 0 && st < t as isize && sf >= 0 && sf < f as isize {
                                    acc += w[((o * cin + i) * k + kt as usize) * k + kf as usize]
                                        * x[(i * t + st as usize) * f + sf as usize];
                                }
                            }
                        }
                    }
                    out[(o * t + tt as usize) * f + ff as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loops() {
        let (cin, t, f, cout, k) = (3, 4, 7, 2, 3);
        let x: Vec<f64> = (0..cin * t * f).map(|i| ((i * 37) % 17) as f64 / 17.0 - 0.5).collect();
        let w: Vec<f64> = (0..cout * cin * k * k).map(|i| ((i * 11) % 13) as f64 / 13.0 - 0.4).collect();
        let b = vec![0.1, -0.2];
        let fast = conv_forward(&x, cin, t, f, &w, &b, cout, k);
        let slow = naive_conv(&x, cin, t, f, &w, &b, cout, k);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pooling_keeps_the_max_and_drops_the_tail() {
        let y = vec![1.0, 3.0, 2.0, 5.0, 4.0, 9.0, 0.0];
        let (out, arg) = pool_forward(&y, 1, 1, 7, 2);
        assert_eq!(out, vec![3.0, 5.0, 9.0]);
        assert_eq!(arg, vec![1, 3, 5]);
        let dy = pool_backward(&[1.0, 2.0, 3.0], &arg, 7);
        assert_eq!(dy, vec![0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
