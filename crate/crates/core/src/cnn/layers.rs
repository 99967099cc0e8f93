//! Dense-loop kernels for valid convolution, max pooling and fully
//! connected layers. Feature maps are square and stored channel-major:
//! `[channel][row][col]`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and its output.
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// Valid, stride-1 cross-correlation.
///
/// `weights` is `[out_c][in_c][k][k]`. Each output is accumulated over
/// `(c, ki, kj)` in that order starting from zero, then the bias is added.
/// Sparse inputs (such as rasters) are scattered pixel by pixel in row-major
/// order, which visits each output's terms in the same order and skips only
/// zero products, so both paths give identical results.
pub fn conv2d_forward(
    input: &[f64],
    in_c: usize,
    side: usize,
    weights: &[f64],
    bias: &[f64],
    out_c: usize,
    k: usize,
) -> Vec<f64> {
    let out_side = side - k + 1;
    debug_assert_eq!(input.len(), in_c * side * side);
    debug_assert_eq!(weights.len(), out_c * in_c * k * k);
    let nonzero = input.iter().filter(|&&x| x != 0.0).count();
    let mut out = vec![0.0; out_c * out_side * out_side];
    if nonzero * 2 < input.len() {
        conv_scatter(input, in_c, side, weights, out_c, k, &mut out);
    } else {
        conv_gather(input, in_c, side, weights, out_c, k, &mut out);
    }
    for f in 0..out_c {
        for o in &mut out[f * out_side * out_side..(f + 1) * out_side * out_side] {
            *o += bias[f];
        }
    }
    out
}

fn conv_gather(input: &[f64], in_c: usize, side: usize, weights: &[f64], out_c: usize, k: usize, out: &mut [f64]) {
    let out_side = side - k + 1;
    for f in 0..out_c {
        for i in 0..out_side {
            for j in 0..out_side {
                let mut s = 0.0;
                for c in 0..in_c {
                    let wbase = (f * in_c + c) * k * k;
                    let xbase = c * side * side;
                    for ki in 0..k {
                        let wrow = &weights[wbase + ki * k..wbase + ki * k + k];
                        let xrow = &input[xbase + (i + ki) * side + j..xbase + (i + ki) * side + j + k];
                        for kj in 0..k {
                            s += wrow[kj] * xrow[kj];
                        }
                    }
                }
                out[(f * out_side + i) * out_side + j] = s;
            }
        }
    }
}

fn conv_scatter(input: &[f64], in_c: usize, side: usize, weights: &[f64], out_c: usize, k: usize, out: &mut [f64]) {
    let out_side = side - k + 1;
    for c in 0..in_c {
        for a in 0..side {
            for b in 0..side {
                let x = input[(c * side + a) * side + b];
                if x == 0.0 {
                    continue;
                }
                // outputs (a - ki, b - kj) for every in-range kernel offset
                for ki in a.saturating_sub(out_side - 1)..=a.min(k - 1) {
                    let i = a - ki;
                    for kj in b.saturating_sub(out_side - 1)..=b.min(k - 1) {
                        let j = b - kj;
                        for f in 0..out_c {
                            out[(f * out_side + i) * out_side + j] += weights[((f * in_c + c) * k + ki) * k + kj] * x;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of a valid convolution given `dout` (same layout as its output).
/// Returns `(d_weights, d_bias, d_input)`; the input gradient is skipped when
/// `need_input` is false.
pub fn conv2d_backward(
    input: &[f64],
    in_c: usize,
    side: usize,
    weights: &[f64],
    out_c: usize,
    k: usize,
    dout: &[f64],
    need_input: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let out_side = side - k + 1;
    let mut dw = vec![0.0; weights.len()];
    let mut db = vec![0.0; out_c];
    let mut dx = need_input.then(|| vec![0.0; input.len()]);
    for f in 0..out_c {
        for i in 0..out_side {
            for j in 0..out_side {
                let g = dout[(f * out_side + i) * out_side + j];
                if g == 0.0 {
                    continue;
                }
                db[f] += g;
                for c in 0..in_c {
                    let wbase = (f * in_c + c) * k * k;
                    let xbase = c * side * side;
                    for ki in 0..k {
                        let xoff = xbase + (i + ki) * side + j;
                        let woff = wbase + ki * k;
                        for kj in 0..k {
                            dw[woff + kj] += g * input[xoff + kj];
                        }
                        if let Some(dx) = dx.as_mut() {
                            for kj in 0..k {
                                dx[xoff + kj] += g * weights[woff + kj];
                            }
                        }
                    }
                }
            }
        }
    }
    (dw, db, dx)
}

/// Non-overlapping `pool x pool` max pooling. Returns the pooled map and,
/// for every pooled cell, the flat index of the winning input cell (first
/// maximum in row-major window order).
pub fn maxpool_forward(input: &[f64], channels: usize, side: usize, pool: usize) -> (Vec<f64>, Vec<usize>) {
    let out_side = side / pool;
    let mut out = Vec::with_capacity(channels * out_side * out_side);
    let mut arg = Vec::with_capacity(out.capacity());
    for c in 0..channels {
        for i in 0..out_side {
            for j in 0..out_side {
                let mut best = usize::MAX;
                for di in 0..pool {
                    for dj in 0..pool {
                        let idx = (c * side + i * pool + di) * side + j * pool + dj;
                        if best == usize::MAX || input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Routes each pooled gradient to its cached argmax.
pub fn maxpool_backward(dout: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&g, &idx) in dout.iter().zip(argmax) {
        dx[idx] += g;
    }
    dx
}

/// `y = W x + b` with `W` stored `[out][in]`.
pub fn dense_forward(x: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weights[o * n_in..(o + 1) * n_in];
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        })
        .collect()
}

/// Returns `(dW, db, dx)`.
pub fn dense_backward(x: &[f64], weights: &[f64], dout: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n_in = x.len();
    let mut dw = vec![0.0; weights.len()];
    let mut dx = vec![0.0; n_in];
    for (o, &g) in dout.iter().enumerate() {
        let row = &weights[o * n_in..(o + 1) * n_in];
        let drow = &mut dw[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            drow[i] = g * x[i];
            dx[i] += g * row[i];
        }
    }
    (dw, dout.to_vec(), dx)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]`, computed through log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ones_filter_sums_patches() {
        let input: Vec<f64> = (0..36).map(|v| v as f64).collect();
        let out = conv2d_forward(&input, 1, 6, &[1.0; 25], &[0.0], 1, 5);
        assert_eq!(out.len(), 4);
        for (o, (i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            let mut s = 0.0;
            for a in 0..5 {
                for b in 0..5 {
                    s += input[(i + a) * 6 + j + b];
                }
            }
            assert_eq!(out[o], s);
        }
    }

    #[test]
    fn pool_routes_to_first_max() {
        #[rustfmt::skip]
        let m = vec![
            1.0, 3.0, 3.0, 0.0,
            2.0, 0.0, 5.0, 5.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ];
        let (out, arg) = maxpool_forward(&m, 1, 4, 2);
        assert_eq!(out, vec![3.0, 5.0, 0.0, 0.0]);
        assert_eq!(arg[0], 1);
        assert_eq!(arg[1], 6);
        let dx = maxpool_backward(&[1.0, 2.0, 3.0, 4.0], &arg, 16);
        assert_eq!(dx[1], 1.0);
        assert_eq!(dx[6], 2.0);
        assert_eq!(dx.iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn uniform_logits_cost_ln2() {
        assert!((cross_entropy(&[0.0, 0.0], 0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert!(cross_entropy(&[1000.0, -1000.0], 1).is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn softmax_normalized_and_shift_invariant(
            z in prop::collection::vec(-30.0f64..30.0, 1..10),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn pool_backward_conserves_gradient(
            vals in prop::collection::vec(-1.0f64..1.0, 2 * 36),
            g in prop::collection::vec(-1.0f64..1.0, 2 * 9),
        ) {
            let (_, arg) = maxpool_forward(&vals, 2, 6, 2);
            let dx = maxpool_backward(&g, &arg, vals.len());
            prop_assert!((dx.iter().sum::<f64>() - g.iter().sum::<f64>()).abs() < 1e-12);
            let nonzero = dx.iter().filter(|&&v| v != 0.0).count();
            prop_assert!(nonzero <= arg.len());
            for (i, &v) in dx.iter().enumerate() {
                if v != 0.0 {
                    prop_assert!(arg.contains(&i));
                }
            }
        }
    }
}
