//! Reverse-mode autodiff tape over f64 matrices.
//!
//! Values are recorded eagerly during the forward pass; each op stores the
//! inputs it needs for its hand-derived backward rule. Sequences from a
//! whole batch are packed row-wise into single matrices so position-wise
//! ops run as large matrix products; attention works on per-sequence row
//! spans inside the packed layout.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::params::{Grads, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// A (query-rows, key-rows) span pair for one sequence in the packed batch.
pub type SpanPair = ((usize, usize), (usize, usize));

enum Slot<'m> {
    Owned(Array2<f64>),
    Param(&'m Array2<f64>),
}

impl Slot<'_> {
    fn value(&self) -> &Array2<f64> {
        match self {
            Slot::Owned(v) => v,
            Slot::Param(v) => v,
        }
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    Matmul {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    AddBias {
        x: NodeId,
        bias: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    AddPositional {
        x: NodeId,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Array2<f64>,
        rstd: Vec<f64>,
    },
    Gelu {
        x: NodeId,
    },
    Dropout {
        x: NodeId,
        mask: Array2<f64>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        pairs: Vec<SpanPair>,
        heads: usize,
        scale: f64,
        causal: bool,
        saved: Vec<Array2<f64>>,
    },
    ConcatRows {
        parts: Vec<(NodeId, usize)>,
    },
    Conv1d {
        w: NodeId,
        bias: NodeId,
        kernel: usize,
        stride: usize,
        pad: usize,
        in_rows: usize,
        x: NodeId,
        im2col: Array2<f64>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        label_smoothing: f64,
        softmax: Array2<f64>,
    },
}

pub struct Tape<'m> {
    params: &'m ParamSet,
    posenc: &'m Array2<f64>,
    slots: Vec<Slot<'m>>,
    ops: Vec<Op>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'m> Tape<'m> {
    pub fn new(params: &'m ParamSet, posenc: &'m Array2<f64>) -> Self {
        Tape {
            params,
            posenc,
            slots: Vec::new(),
            ops: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        self.slots[id.0].value()
    }

    fn push(&mut self, slot: Slot<'m>, op: Op) -> NodeId {
        let id = NodeId(self.slots.len());
        self.slots.push(slot);
        self.ops.push(op);
        id
    }

    /// Registers a parameter leaf; repeated requests for the same parameter
    /// share one node so its gradient accumulates in one place.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.index()] {
            return node;
        }
        let node = self.push(Slot::Param(self.params.get(id)), Op::Param(id));
        self.param_nodes[id.index()] = Some(node);
        node
    }

    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Slot::Owned(value), Op::Leaf)
    }

    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut out = Array2::zeros((ids.len(), t.ncols()));
        for (row, &i) in ids.iter().enumerate() {
            out.row_mut(row).assign(&t.row(i));
        }
        self.push(
            Slot::Owned(out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).dot(self.value(b));
        self.push(Slot::Owned(out), Op::Matmul { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a) + self.value(b);
        self.push(Slot::Owned(out), Op::Add { a, b })
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let b = self.value(bias).row(0).to_owned();
        let mut out = self.value(x).clone();
        for mut row in out.rows_mut() {
            row += &b;
        }
        self.push(Slot::Owned(out), Op::AddBias { x, bias })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.value(x) * c;
        self.push(Slot::Owned(out), Op::Scale { x, c })
    }

    /// Adds sinusoidal position rows; positions restart at 0 for each span.
    pub fn add_positional(&mut self, x: NodeId, spans: &[(usize, usize)]) -> NodeId {
        let mut out = self.value(x).clone();
        for &(r0, r1) in spans {
            let len = r1 - r0;
            let mut block = out.slice_mut(s![r0..r1, ..]);
            block += &self.posenc.slice(s![0..len, ..]);
        }
        self.push(Slot::Owned(out), Op::AddPositional { x })
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        const EPS: f64 = 1e-5;
        let xv = self.value(x);
        let g = self.value(gamma).row(0).to_owned();
        let b = self.value(beta).row(0).to_owned();
        let (n, d) = xv.dim();
        let mut xhat = Array2::zeros((n, d));
        let mut rstd = Vec::with_capacity(n);
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + EPS).sqrt();
            rstd.push(r);
            for j in 0..d {
                let h = (row[j] - mean) * r;
                xhat[[i, j]] = h;
                out[[i, j]] = h * g[j] + b[j];
            }
        }
        self.push(
            Slot::Owned(out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).mapv(gelu);
        self.push(Slot::Owned(out), Op::Gelu { x })
    }

    /// Inverted dropout with keep-probability 1-p; a no-op when p == 0.
    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut ChaCha20Rng) -> NodeId {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let mask = Array2::from_shape_simple_fn(self.value(x).raw_dim(), || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let out = self.value(x) * &mask;
        self.push(Slot::Owned(out), Op::Dropout { x, mask })
    }

    /// Multi-head scaled dot-product attention over packed rows. `pairs`
    /// lists (query span, key/value span) per sequence; `causal` masks
    /// future positions within each span (self-attention only).
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        pairs: &[SpanPair],
        heads: usize,
        causal: bool,
    ) -> NodeId {
        let d = self.value(q).ncols();
        debug_assert_eq!(d % heads, 0);
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let qv = self.value(q);
        let kv = self.value(k);
        let vv = self.value(v);
        let mut out = Array2::zeros(qv.raw_dim());
        let mut saved = Vec::with_capacity(pairs.len() * heads);
        for &((q0, q1), (k0, k1)) in pairs {
            for h in 0..heads {
                let c0 = h * dk;
                let c1 = c0 + dk;
                let qb = qv.slice(s![q0..q1, c0..c1]);
                let kb = kv.slice(s![k0..k1, c0..c1]);
                let vb = vv.slice(s![k0..k1, c0..c1]);
                let mut scores = qb.dot(&kb.t());
                scores *= scale;
                if causal {
                    debug_assert_eq!(q1 - q0, k1 - k0);
                    for a in 0..scores.nrows() {
                        for bcol in (a + 1)..scores.ncols() {
                            scores[[a, bcol]] = f64::NEG_INFINITY;
                        }
                    }
                }
                softmax_rows_inplace(&mut scores);
                let ctx = scores.dot(&vb);
                out.slice_mut(s![q0..q1, c0..c1]).assign(&ctx);
                saved.push(scores);
            }
        }
        self.push(
            Slot::Owned(out),
            Op::Attention {
                q,
                k,
                v,
                pairs: pairs.to_vec(),
                heads,
                scale,
                causal,
                saved,
            },
        )
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.value(parts[0]).ncols();
        let total: usize = parts.iter().map(|&p| self.value(p).nrows()).sum();
        let mut out = Array2::zeros((total, cols));
        let mut meta = Vec::with_capacity(parts.len());
        let mut r = 0;
        for &p in parts {
            let v = self.value(p);
            let n = v.nrows();
            out.slice_mut(s![r..r + n, ..]).assign(v);
            meta.push((p, n));
            r += n;
        }
        self.push(Slot::Owned(out), Op::ConcatRows { parts: meta })
    }

    /// 1-d convolution along rows: x is T x D, w is (kernel*D) x D laid out
    /// tap-major, bias 1 x D. Zero padding `pad` on both ends.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: NodeId,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let xv = self.value(x);
        let (t, d) = xv.dim();
        let out_rows = (t + 2 * pad - kernel) / stride + 1;
        let mut im2col = Array2::zeros((out_rows, kernel * d));
        for o in 0..out_rows {
            for tap in 0..kernel {
                let src = o * stride + tap;
                if src < pad || src >= t + pad {
                    continue; // zero padding
                }
                let src_row = src - pad;
                im2col
                    .slice_mut(s![o, tap * d..(tap + 1) * d])
                    .assign(&xv.row(src_row));
            }
        }
        let mut out = im2col.dot(self.value(w));
        let b = self.value(bias).row(0).to_owned();
        for mut row in out.rows_mut() {
            row += &b;
        }
        self.push(
            Slot::Owned(out),
            Op::Conv1d {
                w,
                bias,
                kernel,
                stride,
                pad,
                in_rows: t,
                x,
                im2col,
            },
        )
    }

    /// Summed token-level cross-entropy with optional label smoothing.
    /// Returns a 1 x 1 node holding the UNSCALED sum over positions; seed
    /// the backward pass with 1/N to get a mean.
    pub fn cross_entropy_sum(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        label_smoothing: f64,
    ) -> NodeId {
        let lv = self.value(logits);
        let (n, vsize) = lv.dim();
        debug_assert_eq!(n, targets.len());
        let mut softmax = Array2::zeros((n, vsize));
        let mut total = 0.0;
        for i in 0..n {
            let row = lv.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut lse = 0.0;
            for &v in row.iter() {
                lse += (v - max).exp();
            }
            let log_z = max + lse.ln();
            for j in 0..vsize {
                softmax[[i, j]] = (row[j] - log_z).exp();
            }
            let nll = log_z - row[targets[i]];
            if label_smoothing > 0.0 {
                let uniform: f64 = row.iter().map(|&v| log_z - v).sum::<f64>() / vsize as f64;
                total += (1.0 - label_smoothing) * nll + label_smoothing * uniform;
            } else {
                total += nll;
            }
        }
        let out = Array2::from_elem((1, 1), total);
        self.push(
            Slot::Owned(out),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                label_smoothing,
                softmax,
            },
        )
    }

    /// Runs reverse-mode accumulation from `loss` (a 1 x 1 node), seeding
    /// with `seed`, adding parameter gradients into `grads`.
    pub fn backward(&self, loss: NodeId, seed: f64, grads: &mut Grads) {
        let mut node_grads: Vec<Option<Array2<f64>>> = Vec::with_capacity(self.slots.len());
        node_grads.resize_with(self.slots.len(), || None);
        node_grads[loss.0] = Some(Array2::from_elem((1, 1), seed));

        for id in (0..=loss.0).rev() {
            let Some(g) = node_grads[id].take() else {
                continue;
            };
            match &self.ops[id] {
                Op::Leaf => {}
                Op::Param(pid) => {
                    *grads.get_mut(*pid) += &g;
                }
                Op::Gather { table, ids } => {
                    let dims = self.value(*table).raw_dim();
                    let dtable = slot_grad(&mut node_grads, table.0, dims);
                    for (row, &i) in ids.iter().enumerate() {
                        let mut dst = dtable.row_mut(i);
                        dst += &g.row(row);
                    }
                }
                Op::Matmul { a, b } => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    add_grad(&mut node_grads, a.0, g.dot(&bv.t()));
                    add_grad(&mut node_grads, b.0, av.t().dot(&g));
                }
                Op::Add { a, b } => {
                    add_grad(&mut node_grads, a.0, g.clone());
                    add_grad(&mut node_grads, b.0, g);
                }
                Op::AddBias { x, bias } => {
                    let db = g.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
                    add_grad(&mut node_grads, bias.0, db);
                    add_grad(&mut node_grads, x.0, g);
                }
                Op::Scale { x, c } => {
                    add_grad(&mut node_grads, x.0, &g * *c);
                }
                Op::AddPositional { x } => {
                    add_grad(&mut node_grads, x.0, g);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let (n, d) = xhat.dim();
                    let gam = self.value(*gamma).row(0).to_owned();
                    let mut dgamma = Array1::<f64>::zeros(d);
                    let mut dbeta = Array1::<f64>::zeros(d);
                    let mut dx = Array2::<f64>::zeros((n, d));
                    for i in 0..n {
                        let grow = g.row(i);
                        let hrow = xhat.row(i);
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_h = 0.0;
                        for j in 0..d {
                            dbeta[j] += grow[j];
                            dgamma[j] += grow[j] * hrow[j];
                            let dxh = grow[j] * gam[j];
                            mean_dxh += dxh;
                            mean_dxh_h += dxh * hrow[j];
                        }
                        mean_dxh /= d as f64;
                        mean_dxh_h /= d as f64;
                        for j in 0..d {
                            let dxh = grow[j] * gam[j];
                            dx[[i, j]] = rstd[i] * (dxh - mean_dxh - hrow[j] * mean_dxh_h);
                        }
                    }
                    add_grad(&mut node_grads, gamma.0, dgamma.insert_axis(ndarray::Axis(0)));
                    add_grad(&mut node_grads, beta.0, dbeta.insert_axis(ndarray::Axis(0)));
                    add_grad(&mut node_grads, x.0, dx);
                }
                Op::Gelu { x } => {
                    let xv = self.value(*x);
                    let mut dx = g;
                    dx.zip_mut_with(xv, |gv, &x| *gv *= gelu_deriv(x));
                    add_grad(&mut node_grads, x.0, dx);
                }
                Op::Dropout { x, mask } => {
                    add_grad(&mut node_grads, x.0, &g * mask);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    pairs,
                    heads,
                    scale,
                    causal: _,
                    saved,
                } => {
                    let qv = self.value(*q);
                    let kv = self.value(*k);
                    let vv = self.value(*v);
                    let d = qv.ncols();
                    let dk = d / heads;
                    let mut dq = Array2::<f64>::zeros(qv.raw_dim());
                    let mut dkm = Array2::<f64>::zeros(kv.raw_dim());
                    let mut dvm = Array2::<f64>::zeros(vv.raw_dim());
                    for (pi, &((q0, q1), (k0, k1))) in pairs.iter().enumerate() {
                        for h in 0..*heads {
                            let c0 = h * dk;
                            let c1 = c0 + dk;
                            let attn = &saved[pi * heads + h];
                            let gb = g.slice(s![q0..q1, c0..c1]);
                            let qb = qv.slice(s![q0..q1, c0..c1]);
                            let kb = kv.slice(s![k0..k1, c0..c1]);
                            let vb = vv.slice(s![k0..k1, c0..c1]);
                            let dattn = gb.dot(&vb.t());
                            {
                                let mut dvb = dvm.slice_mut(s![k0..k1, c0..c1]);
                                dvb += &attn.t().dot(&gb);
                            }
                            // Softmax rows: ds = a * (da - rowdot(da, a)).
                            let mut ds = dattn;
                            for (mut ds_row, a_row) in
                                ds.rows_mut().into_iter().zip(attn.rows())
                            {
                                let dot: f64 =
                                    ds_row.iter().zip(a_row.iter()).map(|(x, y)| x * y).sum();
                                for (dv, &av) in ds_row.iter_mut().zip(a_row.iter()) {
                                    *dv = av * (*dv - dot);
                                }
                            }
                            ds *= *scale;
                            {
                                let mut dqb = dq.slice_mut(s![q0..q1, c0..c1]);
                                dqb += &ds.dot(&kb);
                            }
                            {
                                let mut dkb = dkm.slice_mut(s![k0..k1, c0..c1]);
                                dkb += &ds.t().dot(&qb);
                            }
                        }
                    }
                    add_grad(&mut node_grads, q.0, dq);
                    add_grad(&mut node_grads, k.0, dkm);
                    add_grad(&mut node_grads, v.0, dvm);
                }
                Op::ConcatRows { parts } => {
                    let mut r = 0;
                    for &(p, n) in parts {
                        add_grad(&mut node_grads, p.0, g.slice(s![r..r + n, ..]).to_owned());
                        r += n;
                    }
                }
                Op::Conv1d {
                    w,
                    bias,
                    kernel,
                    stride,
                    pad,
                    in_rows,
                    x,
                    im2col,
                } => {
                    let d = self.value(*x).ncols();
                    let db = g.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
                    add_grad(&mut node_grads, bias.0, db);
                    add_grad(&mut node_grads, w.0, im2col.t().dot(&g));
                    let dcols = g.dot(&self.value(*w).t());
                    let mut dx = Array2::<f64>::zeros((*in_rows, d));
                    for o in 0..g.nrows() {
                        for tap in 0..*kernel {
                            let src = o * stride + tap;
                            if src < *pad || src >= in_rows + pad {
                                continue;
                            }
                            let mut dst = dx.row_mut(src - pad);
                            dst += &dcols.slice(s![o, tap * d..(tap + 1) * d]);
                        }
                    }
                    add_grad(&mut node_grads, x.0, dx);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    label_smoothing,
                    softmax,
                } => {
                    let gscalar = g[[0, 0]];
                    let (n, vsize) = softmax.dim();
                    let mut dlogits = softmax.clone();
                    let eps = *label_smoothing;
                    for i in 0..n {
                        if eps > 0.0 {
                            for j in 0..vsize {
                                dlogits[[i, j]] -= eps / vsize as f64;
                            }
                            dlogits[[i, targets[i]]] -= 1.0 - eps;
                        } else {
                            dlogits[[i, targets[i]]] -= 1.0;
                        }
                    }
                    dlogits *= gscalar;
                    add_grad(&mut node_grads, logits.0, dlogits);
                }
            }
        }
    }
}

fn add_grad(node_grads: &mut [Option<Array2<f64>>], idx: usize, contrib: Array2<f64>) {
    match &mut node_grads[idx] {
        Some(g) => *g += &contrib,
        slot @ None => *slot = Some(contrib),
    }
}

fn slot_grad(
    node_grads: &mut [Option<Array2<f64>>],
    idx: usize,
    dims: ndarray::Ix2,
) -> &mut Array2<f64> {
    if node_grads[idx].is_none() {
        node_grads[idx] = Some(Array2::zeros(dims));
    }
    node_grads[idx].as_mut().unwrap()
}

fn softmax_rows_inplace(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Smooth tanh-form GELU; the backward rule differentiates this exact form.
fn gelu(x: f64) -> f64 {
    const A: f64 = 0.7978845608028654; // sqrt(2/pi)
    const B: f64 = 0.044715;
    0.5 * x * (1.0 + (A * (x + B * x * x * x)).tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    const A: f64 = 0.7978845608028654;
    const B: f64 = 0.044715;
    let inner = A * (x + B * x * x * x);
    let t = inner.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * A * (1.0 + 3.0 * B * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    fn empty_posenc() -> Array2<f64> {
        Array2::zeros((64, 4))
    }

    /// Central finite differences on a scalar-valued tape program.
    fn fd_check<F>(params: &mut ParamSet, build: F, tol: f64)
    where
        F: Fn(&mut Tape) -> NodeId,
    {
        let posenc = empty_posenc();
        let mut grads = Grads::zeros_like(params);
        {
            let tape_params = params.clone();
            let mut tape = Tape::new(&tape_params, &posenc);
            let loss = build(&mut tape);
            tape.backward(loss, 1.0, &mut grads);
        }

        let h = 1e-6;
        for id in params.ids().collect::<Vec<_>>() {
            let dims = params.get(id).raw_dim();
            for i in 0..dims[0] {
                for j in 0..dims[1] {
                    let orig = params.get(id)[[i, j]];
                    params.get_mut(id)[[i, j]] = orig + h;
                    let plus = {
                        let mut tape = Tape::new(params, &posenc);
                        tape.value(build(&mut tape))[[0, 0]]
                    };
                    params.get_mut(id)[[i, j]] = orig - h;
                    let minus = {
                        let mut tape = Tape::new(params, &posenc);
                        tape.value(build(&mut tape))[[0, 0]]
                    };
                    params.get_mut(id)[[i, j]] = orig;
                    let fd = (plus - minus) / (2.0 * h);
                    let an = grads.get(id)[[i, j]];
                    let denom = an.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        (an - fd).abs() / denom < tol,
                        "param {id:?} [{i},{j}]: analytic {an} vs fd {fd}"
                    );
                }
            }
        }
    }

    fn rand_mat(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = derive_rng(seed, 0);
        Array2::from_shape_simple_fn((rows, cols), || crate::rng::next_normal(&mut rng) * 0.5)
    }

    #[test]
    fn matmul_bias_gelu_grads_match_fd() {
        let mut params = ParamSet::new();
        let x = params.add("x", rand_mat(3, 4, 1));
        let w = params.add("w", rand_mat(4, 2, 2));
        let b = params.add("b", rand_mat(1, 2, 3));
        fd_check(
            &mut params,
            |tape| {
                let xn = tape.param(x);
                let wn = tape.param(w);
                let bn = tape.param(b);
                let y = tape.matmul(xn, wn);
                let y = tape.add_bias(y, bn);
                let y = tape.gelu(y);
                tape.cross_entropy_sum(y, &[0, 1, 0], 0.0)
            },
            1e-5,
        );
    }

    #[test]
    fn layer_norm_grads_match_fd() {
        let mut params = ParamSet::new();
        let x = params.add("x", rand_mat(3, 5, 4));
        let g = params.add("g", rand_mat(1, 5, 5));
        let b = params.add("b", rand_mat(1, 5, 6));
        fd_check(
            &mut params,
            |tape| {
                let xn = tape.param(x);
                let gn = tape.param(g);
                let bn = tape.param(b);
                let y = tape.layer_norm(xn, gn, bn);
                tape.cross_entropy_sum(y, &[1, 4, 2], 0.0)
            },
            1e-5,
        );
    }

    #[test]
    fn attention_grads_match_fd() {
        let mut params = ParamSet::new();
        let q = params.add("q", rand_mat(5, 4, 7));
        let k = params.add("k", rand_mat(5, 4, 8));
        let v = params.add("v", rand_mat(5, 4, 9));
        // Two sequences packed: rows 0..3 and 3..5, two heads, causal.
        let pairs: Vec<SpanPair> = vec![((0, 3), (0, 3)), ((3, 5), (3, 5))];
        fd_check(
            &mut params,
            |tape| {
                let qn = tape.param(q);
                let kn = tape.param(k);
                let vn = tape.param(v);
                let y = tape.attention(qn, kn, vn, &pairs, 2, true);
                tape.cross_entropy_sum(y, &[0, 1, 2, 3, 0], 0.0)
            },
            1e-5,
        );
    }

    #[test]
    fn cross_attention_grads_match_fd() {
        let mut params = ParamSet::new();
        let q = params.add("q", rand_mat(4, 4, 10));
        let k = params.add("k", rand_mat(6, 4, 11));
        let v = params.add("v", rand_mat(6, 4, 12));
        let pairs: Vec<SpanPair> = vec![((0, 2), (0, 3)), ((2, 4), (3, 6))];
        fd_check(
            &mut params,
            |tape| {
                let qn = tape.param(q);
                let kn = tape.param(k);
                let vn = tape.param(v);
                let y = tape.attention(qn, kn, vn, &pairs, 2, false);
                tape.cross_entropy_sum(y, &[0, 3, 1, 2], 0.0)
            },
            1e-5,
        );
    }

    #[test]
    fn conv1d_grads_match_fd() {
        let mut params = ParamSet::new();
        let x = params.add("x", rand_mat(8, 3, 13));
        let w = params.add("w", rand_mat(15, 3, 14));
        let b = params.add("b", rand_mat(1, 3, 15));
        fd_check(
            &mut params,
            |tape| {
                let xn = tape.param(x);
                let wn = tape.param(w);
                let bn = tape.param(b);
                let y = tape.conv1d(xn, wn, bn, 5, 2, 2);
                tape.cross_entropy_sum(y, &[0, 1, 2, 0], 0.0)
            },
            1e-5,
        );
    }

    #[test]
    fn gather_and_label_smoothing_grads_match_fd() {
        let mut params = ParamSet::new();
        let table = params.add("table", rand_mat(6, 4, 16));
        let w = params.add("w", rand_mat(4, 6, 17));
        fd_check(
            &mut params,
            |tape| {
                let t = tape.param(table);
                let wn = tape.param(w);
                // Repeated ids make the scatter-add path matter.
                let x = tape.gather(t, &[0, 2, 2, 5]);
                let y = tape.matmul(x, wn);
                tape.cross_entropy_sum(y, &[1, 0, 3, 5], 0.1)
            },
            1e-5,
        );
    }

    #[test]
    fn uniform_logits_loss_is_ln_v() {
        let params = ParamSet::new();
        let posenc = empty_posenc();
        let mut tape = Tape::new(&params, &posenc);
        let logits = tape.constant(Array2::zeros((3, 7)));
        let loss = tape.cross_entropy_sum(logits, &[0, 3, 6], 0.0);
        let expected = 3.0 * (7f64).ln();
        assert!((tape.value(loss)[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn conv1d_output_length_halves() {
        let params = ParamSet::new();
        let posenc = empty_posenc();
        let mut tape = Tape::new(&params, &posenc);
        let x = tape.constant(rand_mat(10, 3, 20));
        let w = tape.constant(Array2::zeros((15, 3)));
        let b = tape.constant(Array2::zeros((1, 3)));
        let y = tape.conv1d(x, w, b, 5, 2, 2);
        assert_eq!(tape.value(y).nrows(), 5);
    }

    #[test]
    fn conv1d_identity_kernel_picks_even_rows() {
        let params = ParamSet::new();
        let posenc = empty_posenc();
        let mut tape = Tape::new(&params, &posenc);
        let xv = rand_mat(10, 3, 21);
        let x = tape.constant(xv.clone());
        // Center tap (tap index 2) = identity, other taps zero.
        let mut wv = Array2::zeros((15, 3));
        for c in 0..3 {
            wv[[2 * 3 + c, c]] = 1.0;
        }
        let w = tape.constant(wv);
        let b = tape.constant(Array2::zeros((1, 3)));
        let y = tape.conv1d(x, w, b, 5, 2, 2);
        for o in 0..5 {
            for c in 0..3 {
                assert!((tape.value(y)[[o, c]] - xv[[2 * o, c]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dropout_zero_probability_is_identity() {
        let params = ParamSet::new();
        let posenc = empty_posenc();
        let mut tape = Tape::new(&params, &posenc);
        let x = tape.constant(rand_mat(3, 4, 22));
        let mut rng = derive_rng(0, 0);
        let y = tape.dropout(x, 0.0, &mut rng);
        assert_eq!(x, y);
    }
}
