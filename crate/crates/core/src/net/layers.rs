//! Layer primitives with hand-derived backward passes.
//!
//! All parameters live in flat `f64` slices owned by the caller; each spec
//! struct documents its layout. Backward passes take the upstream gradient
//! and return gradients for parameters and inputs, so layers compose by
//! chaining in reverse.

/// Strided 1D convolution, no padding.
///
/// Weights: `[out_channels][in_channels][kernel]` row-major.
/// Input/output signals: `[channels][length]` row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv1dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1dSpec {
    pub fn out_len(&self, in_len: usize) -> usize {
        assert!(in_len >= self.kernel, "input shorter than kernel");
        (in_len - self.kernel) / self.stride + 1
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel
    }

    pub fn bias_len(&self) -> usize {
        self.out_channels
    }

    pub fn forward(&self, w: &[f64], b: &[f64], x: &[f64], in_len: usize) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.weight_len());
        debug_assert_eq!(b.len(), self.bias_len());
        debug_assert_eq!(x.len(), self.in_channels * in_len);
        let out_len = self.out_len(in_len);
        let mut y = vec![0.0; self.out_channels * out_len];
        for o in 0..self.out_channels {
            let w_o = &w[o * self.in_channels * self.kernel..(o + 1) * self.in_channels * self.kernel];
            let y_o = &mut y[o * out_len..(o + 1) * out_len];
            for j in 0..out_len {
                let start = j * self.stride;
                let mut acc = b[o];
                for c in 0..self.in_channels {
                    let x_c = &x[c * in_len + start..c * in_len + start + self.kernel];
                    let w_oc = &w_o[c * self.kernel..(c + 1) * self.kernel];
                    for k in 0..self.kernel {
                        acc += w_oc[k] * x_c[k];
                    }
                }
                y_o[j] = acc;
            }
        }
        y
    }

    /// Returns (dw, db, dx) for upstream gradient `dy` of shape
    /// `[out_channels][out_len]`.
    pub fn backward(
        &self,
        w: &[f64],
        x: &[f64],
        in_len: usize,
        dy: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let out_len = self.out_len(in_len);
        debug_assert_eq!(dy.len(), self.out_channels * out_len);
        let mut dw = vec![0.0; self.weight_len()];
        let mut db = vec![0.0; self.bias_len()];
        let mut dx = vec![0.0; self.in_channels * in_len];
        for o in 0..self.out_channels {
            let w_o = &w[o * self.in_channels * self.kernel..(o + 1) * self.in_channels * self.kernel];
            let dw_o =
                &mut dw[o * self.in_channels * self.kernel..(o + 1) * self.in_channels * self.kernel];
            let dy_o = &dy[o * out_len..(o + 1) * out_len];
            for j in 0..out_len {
                let g = dy_o[j];
                if g == 0.0 {
                    continue;
                }
                let start = j * self.stride;
                db[o] += g;
                for c in 0..self.in_channels {
                    for k in 0..self.kernel {
                        dw_o[c * self.kernel + k] += g * x[c * in_len + start + k];
                        dx[c * in_len + start + k] += g * w_o[c * self.kernel + k];
                    }
                }
            }
        }
        (dw, db, dx)
    }
}

/// Recurrent memory cell layer over a full sequence.
///
/// Gate order in all stacked parameter blocks: input, forget, output,
/// candidate. `w` is `[4*hidden][input]`, `u` is `[4*hidden][hidden]`,
/// `b` is `[4*hidden]`. Sequences are `[time][features]` row-major. The
/// initial hidden and cell states are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmSpec {
    pub input: usize,
    pub hidden: usize,
}

/// Forward activations retained for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Post-activation gate values per step: `[time][4*hidden]` (i, f, o, g).
    gates: Vec<f64>,
    /// Cell states per step: `[time][hidden]`.
    cells: Vec<f64>,
    /// tanh of cell states per step: `[time][hidden]`.
    tanh_cells: Vec<f64>,
    /// Hidden states per step: `[time][hidden]`.
    pub hidden_seq: Vec<f64>,
    steps: usize,
}

impl LstmCache {
    pub fn final_hidden(&self, hidden: usize) -> &[f64] {
        &self.hidden_seq[(self.steps - 1) * hidden..self.steps * hidden]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmSpec {
    pub fn w_len(&self) -> usize {
        4 * self.hidden * self.input
    }

    pub fn u_len(&self) -> usize {
        4 * self.hidden * self.hidden
    }

    pub fn b_len(&self) -> usize {
        4 * self.hidden
    }

    pub fn forward(&self, w: &[f64], u: &[f64], b: &[f64], xs: &[f64], steps: usize) -> LstmCache {
        let h = self.hidden;
        let d = self.input;
        debug_assert_eq!(w.len(), self.w_len());
        debug_assert_eq!(u.len(), self.u_len());
        debug_assert_eq!(b.len(), self.b_len());
        debug_assert_eq!(xs.len(), steps * d);
        let mut cache = LstmCache {
            gates: vec![0.0; steps * 4 * h],
            cells: vec![0.0; steps * h],
            tanh_cells: vec![0.0; steps * h],
            hidden_seq: vec![0.0; steps * h],
            steps,
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut pre = vec![0.0; 4 * h];
        for t in 0..steps {
            let x_t = &xs[t * d..(t + 1) * d];
            for r in 0..4 * h {
                let mut acc = b[r];
                let w_r = &w[r * d..(r + 1) * d];
                for c in 0..d {
                    acc += w_r[c] * x_t[c];
                }
                let u_r = &u[r * h..(r + 1) * h];
                for j in 0..h {
                    acc += u_r[j] * h_prev[j];
                }
                pre[r] = acc;
            }
            let gates_t = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                gates_t[j] = sigmoid(pre[j]); // input
                gates_t[h + j] = sigmoid(pre[h + j]); // forget
                gates_t[2 * h + j] = sigmoid(pre[2 * h + j]); // output
                gates_t[3 * h + j] = pre[3 * h + j].tanh(); // candidate
            }
            for j in 0..h {
                let c_t = gates_t[h + j] * c_prev[j] + gates_t[j] * gates_t[3 * h + j];
                let tc = c_t.tanh();
                cache.cells[t * h + j] = c_t;
                cache.tanh_cells[t * h + j] = tc;
                cache.hidden_seq[t * h + j] = gates_t[2 * h + j] * tc;
            }
            h_prev.copy_from_slice(&cache.hidden_seq[t * h..(t + 1) * h]);
            c_prev.copy_from_slice(&cache.cells[t * h..(t + 1) * h]);
        }
        cache
    }

    /// Backpropagation through time.
    ///
    /// `dh_seq` holds the upstream gradient of every hidden output,
    /// `[time][hidden]` (zero where the output is unused). Returns
    /// (dw, du, db, dxs).
    pub fn backward(
        &self,
        w: &[f64],
        u: &[f64],
        xs: &[f64],
        cache: &LstmCache,
        dh_seq: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let d = self.input;
        let steps = cache.steps;
        debug_assert_eq!(dh_seq.len(), steps * h);
        let mut dw = vec![0.0; self.w_len()];
        let mut du = vec![0.0; self.u_len()];
        let mut db = vec![0.0; self.b_len()];
        let mut dxs = vec![0.0; steps * d];
        let mut dh_next = vec![0.0; h]; // gradient flowing from step t+1 into h_t
        let mut dc_next = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gates_t = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            let tanh_c = &cache.tanh_cells[t * h..(t + 1) * h];
            let c_prev = if t == 0 {
                None
            } else {
                Some(&cache.cells[(t - 1) * h..t * h])
            };
            for j in 0..h {
                let dh = dh_seq[t * h + j] + dh_next[j];
                let i_g = gates_t[j];
                let f_g = gates_t[h + j];
                let o_g = gates_t[2 * h + j];
                let g_g = gates_t[3 * h + j];
                let tc = tanh_c[j];
                let d_o = dh * tc;
                let dc = dc_next[j] + dh * o_g * (1.0 - tc * tc);
                let cp = c_prev.map_or(0.0, |c| c[j]);
                let d_i = dc * g_g;
                let d_f = dc * cp;
                let d_g = dc * i_g;
                dc_next[j] = dc * f_g;
                da[j] = d_i * i_g * (1.0 - i_g);
                da[h + j] = d_f * f_g * (1.0 - f_g);
                da[2 * h + j] = d_o * o_g * (1.0 - o_g);
                da[3 * h + j] = d_g * (1.0 - g_g * g_g);
            }
            let x_t = &xs[t * d..(t + 1) * d];
            let h_prev = if t == 0 {
                None
            } else {
                Some(&cache.hidden_seq[(t - 1) * h..t * h])
            };
            for j in 0..h {
                dh_next[j] = 0.0;
            }
            for r in 0..4 * h {
                let g = da[r];
                db[r] += g;
                if g == 0.0 {
                    continue;
                }
                let dw_r = &mut dw[r * d..(r + 1) * d];
                for c in 0..d {
                    dw_r[c] += g * x_t[c];
                    dxs[t * d + c] += g * w[r * d + c];
                }
                if let Some(hp) = h_prev {
                    let du_r = &mut du[r * h..(r + 1) * h];
                    for j in 0..h {
                        du_r[j] += g * hp[j];
                        dh_next[j] += g * u[r * h + j];
                    }
                } else {
                    // h_prev is zero at t = 0: no du contribution, and the
                    // recurrent gradient chain ends here.
                    for j in 0..h {
                        dh_next[j] += g * u[r * h + j];
                    }
                }
            }
            if t == 0 {
                // dh_next now holds the gradient w.r.t. the (zero) initial
                // state; it is discarded.
            }
        }
        (dw, du, db, dxs)
    }
}

/// Fully connected layer. Weights `[output][input]` row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseSpec {
    pub input: usize,
    pub output: usize,
}

impl DenseSpec {
    pub fn weight_len(&self) -> usize {
        self.output * self.input
    }

    pub fn bias_len(&self) -> usize {
        self.output
    }

    pub fn forward(&self, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input);
        let mut y = vec![0.0; self.output];
        for (o, y_o) in y.iter_mut().enumerate() {
            let w_o = &w[o * self.input..(o + 1) * self.input];
            let mut acc = b[o];
            for c in 0..self.input {
                acc += w_o[c] * x[c];
            }
            *y_o = acc;
        }
        y
    }

    pub fn backward(&self, w: &[f64], x: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut dw = vec![0.0; self.weight_len()];
        let mut db = vec![0.0; self.bias_len()];
        let mut dx = vec![0.0; self.input];
        for o in 0..self.output {
            let g = dy[o];
            db[o] += g;
            if g == 0.0 {
                continue;
            }
            for c in 0..self.input {
                dw[o * self.input + c] += g * x[c];
                dx[c] += g * w[o * self.input + c];
            }
        }
        (dw, db, dx)
    }
}

pub fn relu(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Gradient of relu given the pre-activation values.
pub fn relu_backward(pre: &[f64], dy: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(dy)
        .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fill(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect()
    }

    /// max relative error between analytic and central-difference gradients
    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    // Scalar test loss: L = 0.5 * sum(y^2), so dL/dy = y.

    #[test]
    fn conv_gradient_check() {
        let spec = Conv1dSpec { in_channels: 2, out_channels: 3, kernel: 3, stride: 2 };
        let in_len = 9;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let w = fill(&mut rng, spec.weight_len(), 0.7);
            let b = fill(&mut rng, spec.bias_len(), 0.3);
            let x = fill(&mut rng, spec.in_channels * in_len, 1.0);
            let y = spec.forward(&w, &b, &x, in_len);
            let (dw, db, dx) = spec.backward(&w, &x, in_len, &y);

            let eps = 1e-5;
            let loss = |w: &[f64], b: &[f64], x: &[f64]| -> f64 {
                spec.forward(w, b, x, in_len).iter().map(|v| 0.5 * v * v).sum()
            };
            let mut num_dw = vec![0.0; dw.len()];
            for i in 0..dw.len() {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += eps;
                wm[i] -= eps;
                num_dw[i] = (loss(&wp, &b, &x) - loss(&wm, &b, &x)) / (2.0 * eps);
            }
            let mut num_db = vec![0.0; db.len()];
            for i in 0..db.len() {
                let mut bp = b.clone();
                let mut bm = b.clone();
                bp[i] += eps;
                bm[i] -= eps;
                num_db[i] = (loss(&w, &bp, &x) - loss(&w, &bm, &x)) / (2.0 * eps);
            }
            let mut num_dx = vec![0.0; dx.len()];
            for i in 0..dx.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += eps;
                xm[i] -= eps;
                num_dx[i] = (loss(&w, &b, &xp) - loss(&w, &b, &xm)) / (2.0 * eps);
            }
            assert!(max_rel_err(&dw, &num_dw) < 1e-4);
            assert!(max_rel_err(&db, &num_db) < 1e-4);
            assert!(max_rel_err(&dx, &num_dx) < 1e-4);
        }
    }

    #[test]
    fn lstm_gradient_check() {
        let spec = LstmSpec { input: 3, hidden: 4 };
        let steps = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..5 {
            let w = fill(&mut rng, spec.w_len(), 0.6);
            let u = fill(&mut rng, spec.u_len(), 0.6);
            let b = fill(&mut rng, spec.b_len(), 0.2);
            let xs = fill(&mut rng, steps * spec.input, 1.0);

            // Alternate between final-state readout and full-sequence readout.
            let final_only = trial % 2 == 0;
            let loss = |w: &[f64], u: &[f64], b: &[f64], xs: &[f64]| -> f64 {
                let cache = spec.forward(w, u, b, xs, steps);
                if final_only {
                    cache.final_hidden(spec.hidden).iter().map(|v| 0.5 * v * v).sum()
                } else {
                    cache.hidden_seq.iter().map(|v| 0.5 * v * v).sum()
                }
            };

            let cache = spec.forward(&w, &u, &b, &xs, steps);
            let mut dh = vec![0.0; steps * spec.hidden];
            if final_only {
                let start = (steps - 1) * spec.hidden;
                dh[start..].copy_from_slice(cache.final_hidden(spec.hidden));
            } else {
                dh.copy_from_slice(&cache.hidden_seq);
            }
            let (dw, du, db, dxs) = spec.backward(&w, &u, &xs, &cache, &dh);

            let eps = 1e-5;
            let check = |params: &[f64],
                         analytic: &[f64],
                         apply: &dyn Fn(&[f64]) -> f64|
             -> f64 {
                let mut num = vec![0.0; params.len()];
                for i in 0..params.len() {
                    let mut pp = params.to_vec();
                    let mut pm = params.to_vec();
                    pp[i] += eps;
                    pm[i] -= eps;
                    num[i] = (apply(&pp) - apply(&pm)) / (2.0 * eps);
                }
                max_rel_err(analytic, &num)
            };
            assert!(check(&w, &dw, &|p| loss(p, &u, &b, &xs)) < 1e-4);
            assert!(check(&u, &du, &|p| loss(&w, p, &b, &xs)) < 1e-4);
            assert!(check(&b, &db, &|p| loss(&w, &u, p, &xs)) < 1e-4);
            assert!(check(&xs, &dxs, &|p| loss(&w, &u, &b, p)) < 1e-4);
        }
    }

    #[test]
    fn dense_gradient_check() {
        let spec = DenseSpec { input: 6, output: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..5 {
            let w = fill(&mut rng, spec.weight_len(), 0.8);
            let b = fill(&mut rng, spec.bias_len(), 0.3);
            let x = fill(&mut rng, spec.input, 1.0);
            let y = spec.forward(&w, &b, &x);
            let (dw, db, dx) = spec.backward(&w, &x, &y);

            let eps = 1e-5;
            let loss = |w: &[f64], b: &[f64], x: &[f64]| -> f64 {
                spec.forward(w, b, x).iter().map(|v| 0.5 * v * v).sum()
            };
            for i in 0..dw.len() {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += eps;
                wm[i] -= eps;
                let num = (loss(&wp, &b, &x) - loss(&wm, &b, &x)) / (2.0 * eps);
                assert!((dw[i] - num).abs() / dw[i].abs().max(num.abs()).max(1e-8) < 1e-4);
            }
            for i in 0..db.len() {
                let mut bp = b.clone();
                let mut bm = b.clone();
                bp[i] += eps;
                bm[i] -= eps;
                let num = (loss(&w, &bp, &x) - loss(&w, &bm, &x)) / (2.0 * eps);
                assert!((db[i] - num).abs() / db[i].abs().max(num.abs()).max(1e-8) < 1e-4);
            }
            for i in 0..dx.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += eps;
                xm[i] -= eps;
                let num = (loss(&w, &b, &xp) - loss(&w, &b, &xm)) / (2.0 * eps);
                assert!((dx[i] - num).abs() / dx[i].abs().max(num.abs()).max(1e-8) < 1e-4);
            }
        }
    }

    #[test]
    fn conv_output_length() {
        let spec = Conv1dSpec { in_channels: 3, out_channels: 16, kernel: 5, stride: 2 };
        assert_eq!(spec.out_len(300), 148);
        let spec2 = Conv1dSpec { in_channels: 16, out_channels: 32, kernel: 5, stride: 2 };
        assert_eq!(spec2.out_len(148), 72);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, -2.0, 0.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Stable under large logits.
        let p = softmax(&[1000.0, 1000.0, 1000.0]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_masks_negatives() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&[-1.0, 0.5], &[3.0, 3.0]), vec![0.0, 3.0]);
    }
}
