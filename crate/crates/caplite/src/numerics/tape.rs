//! Eager reverse-mode tape.
//!
//! Ops compute their value at creation time and record just enough to run the
//! chain rule backwards. Nodes only ever reference earlier nodes, so a single
//! reverse sweep in creation order is a valid topological walk.
//!
//! Parameters are leased onto the tape as leaf nodes; after `backward`, each
//! leaf's gradient is accumulated (`+=`) into the owning `Parameter.grad`.
//! Leasing the same `ParamId` twice (weight tying) accumulates both paths.

use super::tensor::{log_sum_exp, sigmoid};
use super::{softmax_rows, ParamId, ParamSet, Real, Rng, Tensor2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<T> {
    /// Constant input; no gradient flows out.
    Constant,
    /// Leased parameter; gradient is harvested into the set.
    Param(ParamId),
    Matmul(usize, usize),
    Add(usize, usize),
    /// Elementwise product.
    Mul(usize, usize),
    /// k * x + c, elementwise with scalar k and c.
    Affine {
        x: usize,
        k: T,
    },
    Sigmoid(usize),
    Tanh(usize),
    SoftmaxRows(usize),
    Transpose(usize),
    /// One row of a matrix as a 1xN vector (embedding lookup).
    RowSelect {
        x: usize,
        row: usize,
    },
    /// Horizontal concatenation of 1xN row vectors.
    ConcatCols(Vec<usize>),
    /// Scalar `logsumexp(logits) - logits[target]` for a 1xV logits row.
    CrossEntropyLogits {
        logits: usize,
        target: usize,
    },
    /// Elementwise product with a fixed mask (inverted dropout).
    MaskMul {
        x: usize,
        mask: Tensor2D<T>,
    },
}

struct Node<T> {
    value: Tensor2D<T>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2D<T> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> T {
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "scalar() on non-scalar node");
        v.get(0, 0)
    }

    fn push(&mut self, value: Tensor2D<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor2D<T>) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Lease a parameter's current value onto the tape.
    pub fn param(&mut self, set: &ParamSet<T>, id: ParamId) -> NodeId {
        self.push(set.get(id).value.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0]
            .value
            .matmul(&self.nodes[b.0].value)
            .expect("tape matmul shape mismatch");
        self.push(v, Op::Matmul(a.0, b.0))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0]
            .value
            .zip_map(&self.nodes[b.0].value, |x, y| x + y)
            .expect("tape add shape mismatch");
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0]
            .value
            .zip_map(&self.nodes[b.0].value, |x, y| x * y)
            .expect("tape mul shape mismatch");
        self.push(v, Op::Mul(a.0, b.0))
    }

    pub fn affine(&mut self, x: NodeId, k: T, c: T) -> NodeId {
        let v = self.nodes[x.0].value.map(|v| k * v + c);
        self.push(v, Op::Affine { x: x.0, k })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let neg_b = self.affine(b, -T::one(), T::zero());
        self.add(a, neg_b)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.map(sigmoid);
        self.push(v, Op::Sigmoid(x.0))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.map(|v| v.tanh());
        self.push(v, Op::Tanh(x.0))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let v = softmax_rows(&self.nodes[x.0].value);
        self.push(v, Op::SoftmaxRows(x.0))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].value.transpose();
        self.push(v, Op::Transpose(x.0))
    }

    pub fn row_select(&mut self, x: NodeId, row: usize) -> NodeId {
        let src = &self.nodes[x.0].value;
        assert!(
            row < src.rows(),
            "row_select: row {row} out of {}",
            src.rows()
        );
        let v = Tensor2D::row_vector(src.row(row).to_vec());
        self.push(v, Op::RowSelect { x: x.0, row })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let mut data = Vec::new();
        for &p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.rows(), 1, "concat_cols expects 1xN vectors");
            data.extend_from_slice(v.data());
        }
        let v = Tensor2D::row_vector(data);
        self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect()))
    }

    /// Negative log-likelihood of `target` under softmax of a 1xV logits row,
    /// computed stably as `logsumexp(logits) - logits[target]`.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, target: usize) -> NodeId {
        let l = &self.nodes[logits.0].value;
        assert_eq!(l.rows(), 1, "cross_entropy_logits expects a 1xV row");
        assert!(
            target < l.cols(),
            "target {target} out of vocab {}",
            l.cols()
        );
        let lse = log_sum_exp(l.row(0));
        let v = Tensor2D::row_vector(vec![lse - l.get(0, target)]);
        self.push(
            v,
            Op::CrossEntropyLogits {
                logits: logits.0,
                target,
            },
        )
    }

    /// Inverted dropout: entries are zeroed with probability `p`, survivors
    /// scaled by 1/(1-p). The mask is drawn from `rng` at creation time.
    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut Rng) -> NodeId {
        assert!((0.0..1.0).contains(&p), "dropout p {p} outside [0,1)");
        if p == 0.0 {
            return x;
        }
        let (r, c) = self.nodes[x.0].value.shape();
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mut mask = Tensor2D::zeros(r, c);
        for v in mask.data_mut() {
            *v = if rng.uniform() < p { T::zero() } else { keep };
        }
        let v = self.nodes[x.0]
            .value
            .zip_map(&mask, |a, m| a * m)
            .expect("dropout mask shape");
        self.push(v, Op::MaskMul { x: x.0, mask })
    }

    /// Sum a non-empty list of same-shaped nodes.
    pub fn sum_nodes(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p);
        }
        acc
    }

    /// Reverse sweep from a scalar root. Leaf gradients are accumulated into
    /// `params.grad` (`+=`); existing gradient content is kept, so batches
    /// accumulate naturally until the optimizer consumes them.
    pub fn backward(&self, root: NodeId, params: &mut ParamSet<T>) {
        assert_eq!(
            self.nodes[root.0].value.shape(),
            (1, 1),
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Tensor2D<T>>> = (0..root.0 + 1).map(|_| None).collect();
        grads[root.0] = Some(Tensor2D::filled(1, 1, T::one()));

        for i in (0..=root.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(pid) => {
                    params.get_mut(*pid).grad.add_scaled_assign(&g, T::one());
                }
                Op::Matmul(a, b) => {
                    // dA += G * B^T ; dB += A^T * G
                    let bt = self.nodes[*b].value.transpose();
                    let da = g.matmul(&bt).expect("backward matmul dA");
                    let at = self.nodes[*a].value.transpose();
                    let db = at.matmul(&g).expect("backward matmul dB");
                    accumulate(&mut grads[*a], da);
                    accumulate(&mut grads[*b], db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], g.clone());
                    accumulate(&mut grads[*b], g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(&self.nodes[*b].value, |x, y| x * y).unwrap();
                    let db = g.zip_map(&self.nodes[*a].value, |x, y| x * y).unwrap();
                    accumulate(&mut grads[*a], da);
                    accumulate(&mut grads[*b], db);
                }
                Op::Affine { x, k } => {
                    let k = *k;
                    accumulate(&mut grads[*x], g.map(|v| k * v));
                }
                Op::Sigmoid(x) => {
                    let s = &self.nodes[i].value;
                    let dx = g.zip_map(s, |gv, sv| gv * sv * (T::one() - sv)).unwrap();
                    accumulate(&mut grads[*x], dx);
                }
                Op::Tanh(x) => {
                    let t = &self.nodes[i].value;
                    let dx = g.zip_map(t, |gv, tv| gv * (T::one() - tv * tv)).unwrap();
                    accumulate(&mut grads[*x], dx);
                }
                Op::SoftmaxRows(x) => {
                    // dx_j = p_j * (g_j - sum_k g_k p_k), per row
                    let p = &self.nodes[i].value;
                    let mut dx = Tensor2D::zeros(p.rows(), p.cols());
                    for r in 0..p.rows() {
                        let dot: T = g
                            .row(r)
                            .iter()
                            .zip(p.row(r))
                            .map(|(&gv, &pv)| gv * pv)
                            .sum();
                        for c in 0..p.cols() {
                            dx.set(r, c, p.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads[*x], dx);
                }
                Op::Transpose(x) => {
                    accumulate(&mut grads[*x], g.transpose());
                }
                Op::RowSelect { x, row } => {
                    let src = &self.nodes[*x].value;
                    let mut dx = Tensor2D::zeros(src.rows(), src.cols());
                    dx.row_mut(*row).copy_from_slice(g.row(0));
                    accumulate(&mut grads[*x], dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.cols();
                        let piece = Tensor2D::row_vector(g.row(0)[offset..offset + w].to_vec());
                        accumulate(&mut grads[p], piece);
                        offset += w;
                    }
                }
                Op::CrossEntropyLogits { logits, target } => {
                    // dlogits = g * (softmax(logits) - onehot(target))
                    let gs = g.get(0, 0);
                    let p = softmax_rows(&self.nodes[*logits].value);
                    let mut dl = p.map(|v| gs * v);
                    let cur = dl.get(0, *target);
                    dl.set(0, *target, cur - gs);
                    accumulate(&mut grads[*logits], dl);
                }
                Op::MaskMul { x, mask } => {
                    let dx = g.zip_map(mask, |gv, mv| gv * mv).unwrap();
                    accumulate(&mut grads[*x], dx);
                }
            }
        }
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor2D<T>>, g: Tensor2D<T>) {
    match slot {
        Some(acc) => acc.add_scaled_assign(&g, T::one()),
        None => *slot = Some(g),
    }
}
