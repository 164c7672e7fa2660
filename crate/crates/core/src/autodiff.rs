//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! Every value on the tape is a [`Matrix`]; scalars are `1 x 1`. Operations
//! record their inputs (and whatever forward intermediates the backward needs)
//! and [`Tape::backward`] walks the tape in reverse from a scalar root.
//!
//! Leaves borrow their values, so model parameters enter a tape without being
//! copied.

use std::borrow::Cow;

use crate::tensor::{self, AttnShape, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    MulConst(Var, Matrix),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        shape: AttnShape,
        probs: Vec<Matrix>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    WeightedSum(Var, Matrix),
    ConcatCols(Vec<Var>),
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar root with respect to every tape node.
pub struct Grads {
    grads: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads[v.0].take()
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn owned(&mut self, value: Matrix, op: Op) -> Var {
        self.push(Cow::Owned(value), op)
    }

    /// A leaf that borrows its value (parameters).
    pub fn param(&mut self, value: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf)
    }

    /// A leaf that owns its value (inputs, constants).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.owned(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.data[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = tensor::matmul(self.value(a), self.value(b));
        self.owned(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = tensor::matmul_nt(self.value(a), self.value(b));
        self.owned(out, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.owned(out, Op::Add(a, b))
    }

    /// Broadcast-add a `1 x cols` row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut out = self.value(a).clone();
        tensor::add_row_assign(&mut out, self.value(row));
        self.owned(out, Op::AddRow(a, row))
    }

    pub fn add_const(&mut self, a: Var, c: &Matrix) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(c);
        self.owned(out, Op::AddConst(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_assign(s);
        self.owned(out, Op::Scale(a, s))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), c.shape());
        let data = x.data.iter().zip(&c.data).map(|(x, m)| x * m).collect();
        let out = Matrix::from_vec(x.rows, x.cols, data);
        self.owned(out, Op::MulConst(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data.iter().map(|v| v.max(0.0)).collect();
        let out = Matrix::from_vec(x.rows, x.cols, data);
        self.owned(out, Op::Relu(a))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_row(h, b)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (out, xhat, inv_std) =
            tensor::layer_norm(self.value(x), self.value(gain), self.value(bias));
        self.owned(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, shape: AttnShape) -> Var {
        let (out, probs) =
            tensor::attention(self.value(q), self.value(k), self.value(v), shape);
        self.owned(
            out,
            Op::Attention {
                q,
                k,
                v,
                shape,
                probs,
            },
        )
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols);
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.row(id));
        }
        self.owned(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            tensor::softmax_in_place(out.row_mut(r));
        }
        self.owned(out, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(&tensor::log_softmax(x.row(r)));
        }
        self.owned(out, Op::LogSoftmax(a))
    }

    /// `sum(a ∘ w)` as a `1 x 1` scalar.
    pub fn weighted_sum(&mut self, a: Var, w: Matrix) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), w.shape());
        let s = tensor::dot(&x.data, &w.data);
        self.owned(Matrix::scalar(s), Op::WeightedSum(a, w))
    }

    /// Horizontal concatenation; all parts share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let m = self.value(p);
                assert_eq!(m.rows, rows);
                out.row_mut(r)[c0..c0 + m.cols].copy_from_slice(m.row(r));
                c0 += m.cols;
            }
        }
        self.owned(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Reverse sweep from a `1 x 1` root.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward needs a scalar root"
        );
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = tensor::matmul_nt(&g, bv);
                    let mut gb = Matrix::zeros(bv.rows, bv.cols);
                    tensor::matmul_tn_acc(av, &g, &mut gb);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MatMulNt(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = tensor::matmul(&g, bv);
                    let mut gb = Matrix::zeros(bv.rows, bv.cols);
                    tensor::matmul_tn_acc(&g, av, &mut gb);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (s, v) in gr.data.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[row.0], gr);
                    accumulate(&mut grads[a.0], g);
                }
                Op::AddConst(a) => accumulate(&mut grads[a.0], g),
                Op::Scale(a, s) => {
                    let mut g = g;
                    g.scale_assign(*s);
                    accumulate(&mut grads[a.0], g);
                }
                Op::MulConst(a, c) => {
                    let mut g = g;
                    for (x, m) in g.data.iter_mut().zip(&c.data) {
                        *x *= m;
                    }
                    accumulate(&mut grads[a.0], g);
                }
                Op::Relu(a) => {
                    let mut g = g;
                    for (x, y) in g.data.iter_mut().zip(&node.value.data) {
                        if *y <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    accumulate(&mut grads[a.0], g);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain);
                    let n = g.cols as f64;
                    let mut gx = Matrix::zeros(g.rows, g.cols);
                    let mut gg = Matrix::zeros(1, g.cols);
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        let gr = g.row(r);
                        let xh = xhat.row(r);
                        // dxhat = g * gain
                        let dxh: Vec<f64> = gr.iter().zip(&gv.data).map(|(a, b)| a * b).collect();
                        let mean_dxh = dxh.iter().sum::<f64>() / n;
                        let mean_dxh_xh = tensor::dot(&dxh, xh) / n;
                        let out = gx.row_mut(r);
                        for c in 0..g.cols {
                            out[c] = inv_std[r] * (dxh[c] - mean_dxh - xh[c] * mean_dxh_xh);
                            gg.data[c] += gr[c] * xh[c];
                            gb.data[c] += gr[c];
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                    accumulate(&mut grads[gain.0], gg);
                    accumulate(&mut grads[bias.0], gb);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    shape,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qv.cols;
                    let dk = d / shape.heads;
                    let scale = 1.0 / (dk as f64).sqrt();
                    let mut gq = Matrix::zeros(qv.rows, d);
                    let mut gk = Matrix::zeros(kv.rows, d);
                    let mut gvv = Matrix::zeros(vv.rows, d);
                    for (h, p) in probs.iter().enumerate() {
                        let c0 = h * dk;
                        for i in 0..qv.rows {
                            let go = &g.row(i)[c0..c0 + dk];
                            let prow = p.row(i);
                            // dP_ij = go · v_j ; dV_j += P_ij go
                            let mut dp = vec![0.0; kv.rows];
                            for j in 0..kv.rows {
                                if prow[j] == 0.0 {
                                    continue;
                                }
                                dp[j] = tensor::dot(go, &vv.row(j)[c0..c0 + dk]);
                                let gvr = &mut gvv.data[j * d + c0..j * d + c0 + dk];
                                for (o, x) in gvr.iter_mut().zip(go) {
                                    *o += prow[j] * x;
                                }
                            }
                            let inner: f64 = dp.iter().zip(prow).map(|(a, b)| a * b).sum();
                            let qi = &qv.row(i)[c0..c0 + dk];
                            for j in 0..kv.rows {
                                if prow[j] == 0.0 {
                                    continue;
                                }
                                let ds = prow[j] * (dp[j] - inner) * scale;
                                let kj = &kv.row(j)[c0..c0 + dk];
                                let gqr = &mut gq.data[i * d + c0..i * d + c0 + dk];
                                for (o, x) in gqr.iter_mut().zip(kj) {
                                    *o += ds * x;
                                }
                                let gkr = &mut gk.data[j * d + c0..j * d + c0 + dk];
                                for (o, x) in gkr.iter_mut().zip(qi) {
                                    *o += ds * x;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads[q.0], gq);
                    accumulate(&mut grads[k.0], gk);
                    accumulate(&mut grads[v.0], gvv);
                }
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let mut gt = Matrix::zeros(t.rows, t.cols);
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, x) in gt.row_mut(id).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads[table.0], gt);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let inner = tensor::dot(g.row(r), y.row(r));
                        for ((o, gi), yi) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = yi * (gi - inner);
                        }
                    }
                    accumulate(&mut grads[a.0], gx);
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let total: f64 = g.row(r).iter().sum();
                        for ((o, gi), yi) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = gi - yi.exp() * total;
                        }
                    }
                    accumulate(&mut grads[a.0], gx);
                }
                Op::WeightedSum(a, w) => {
                    let mut gw = w.clone();
                    gw.scale_assign(g.data[0]);
                    accumulate(&mut grads[a.0], gw);
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let cols = self.value(*p).cols;
                        let mut gp = Matrix::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        c0 += cols;
                        accumulate(&mut grads[p.0], gp);
                    }
                }
            }
        }
        Grads { grads }
    }
}
