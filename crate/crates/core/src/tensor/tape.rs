use super::params::{Gradients, ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sum(Vec<Var>),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Hadamard(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Softmax(Var),
    Lookup(ParamId, usize),
    PickRow(Var, usize),
    CrossEntropy(Var, usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// Empty for parameter nodes, whose value lives in the store.
    value: Tensor,
}

/// Append-only computation graph over a borrowed parameter store.
///
/// Nodes are recorded in evaluation order, so inputs always precede
/// their consumers and the backward pass is a single reverse sweep.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::Param(id), Tensor::zeros(&[0]))
    }

    /// `[m, k] × [k] -> [m]` or `[m, k] × [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() == 0 || ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let (da, db) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                *o = da[i * k..(i + 1) * k]
                    .iter()
                    .zip(db)
                    .map(|(x, y)| x * y)
                    .sum();
            }
        } else {
            for i in 0..m {
                for p in 0..k {
                    let aip = da[i * k + p];
                    for j in 0..n {
                        out[i * n + j] += aip * db[p * n + j];
                    }
                }
            }
        }
        let shape = if tb.rank() == 1 { vec![m] } else { vec![m, n] };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("add", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars.first().ok_or(Error::Empty("sum of no nodes".into()))?;
        let mut acc = self.value(first).clone();
        for &v in &vars[1..] {
            let t = self.value(v);
            if t.shape() != acc.shape() {
                return Err(mismatch("sum", &acc, t));
            }
            for (a, x) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += x;
            }
        }
        Ok(self.push(Op::Sum(vars.to_vec()), acc))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|x| x * factor).collect(),
        };
        self.push(Op::Scale(a, factor), value)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| f(x)).collect(),
        };
        self.push(op, value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("hadamard", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Hadamard(a, b), value))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::Empty("concat of no nodes".into()));
        }
        let mut data = Vec::new();
        for &v in vars {
            let t = self.value(v);
            if t.rank() != 1 {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: t.shape().to_vec(),
                    right: vec![],
                });
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::vector(data);
        Ok(self.push(Op::Concat(vars.to_vec()), value))
    }

    /// Elements `start..start + len` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 || start + len > t.len() {
            return Err(Error::ShapeMismatch {
                op: "slice",
                left: t.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let value = Tensor::vector(t.data()[start..start + len].to_vec());
        Ok(self.push(Op::Slice(a, start), value))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 || t.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                left: t.shape().to_vec(),
                right: vec![],
            });
        }
        let mut data = t.data().to_vec();
        softmax_in_place(&mut data);
        Ok(self.push(Op::Softmax(a), Tensor::vector(data)))
    }

    /// Row `index` of an embedding matrix, as a vector.
    pub fn lookup(&mut self, table: ParamId, index: usize) -> Result<Var> {
        let t = self.params.get(table);
        if t.rank() != 2 || index >= t.rows() {
            return Err(Error::ShapeMismatch {
                op: "lookup",
                left: t.shape().to_vec(),
                right: vec![index],
            });
        }
        let cols = t.cols();
        let value = Tensor::vector(t.data()[index * cols..(index + 1) * cols].to_vec());
        Ok(self.push(Op::Lookup(table, index), value))
    }

    /// Row `index` of a matrix (a vector), or element `index` of a vector
    /// (a scalar).
    pub fn pick_row(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.value(a);
        let value = match t.rank() {
            1 if index < t.len() => Tensor::scalar(t.data()[index]),
            2 if index < t.rows() => {
                let c = t.cols();
                Tensor::vector(t.data()[index * c..(index + 1) * c].to_vec())
            }
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "pick_row",
                    left: t.shape().to_vec(),
                    right: vec![index],
                })
            }
        };
        Ok(self.push(Op::PickRow(a, index), value))
    }

    /// `-ln softmax(logits)[target]`, computed stably.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 1 || target >= t.len() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: t.shape().to_vec(),
                right: vec![target],
            });
        }
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + t.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let value = Tensor::scalar(lse - t.data()[target]);
        Ok(self.push(Op::CrossEntropy(logits, target), value))
    }

    /// Reverse sweep from a scalar `loss`, returning parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
            let g = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(g);
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    out.accumulate_dense(*id, self.params.get(*id).shape(), &g);
                }
                Op::Lookup(id, row) => out.accumulate_row(*id, *row, &g),
                &Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let (da, db) = (ta.data(), tb.data());
                    acc(&mut grads, a, m * k, |ga| {
                        for r in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[r * n + j] * db[p * n + j];
                                }
                                ga[r * k + p] += s;
                            }
                        }
                    });
                    acc(&mut grads, b, k * n, |gb| {
                        for r in 0..m {
                            for p in 0..k {
                                let arp = da[r * k + p];
                                for j in 0..n {
                                    gb[p * n + j] += arp * g[r * n + j];
                                }
                            }
                        }
                    });
                }
                &Op::Add(a, b) => {
                    for v in [a, b] {
                        acc(&mut grads, v, g.len(), |gv| {
                            gv.iter_mut().zip(&g).for_each(|(x, y)| *x += y)
                        });
                    }
                }
                Op::Sum(vars) => {
                    for &v in vars {
                        acc(&mut grads, v, g.len(), |gv| {
                            gv.iter_mut().zip(&g).for_each(|(x, y)| *x += y)
                        });
                    }
                }
                &Op::Scale(a, f) => acc(&mut grads, a, g.len(), |ga| {
                    ga.iter_mut().zip(&g).for_each(|(x, y)| *x += f * y)
                }),
                &Op::Tanh(a) => {
                    let y = node.value.data();
                    acc(&mut grads, a, g.len(), |ga| {
                        for j in 0..g.len() {
                            ga[j] += g[j] * (1.0 - y[j] * y[j]);
                        }
                    });
                }
                &Op::Sigmoid(a) => {
                    let y = node.value.data();
                    acc(&mut grads, a, g.len(), |ga| {
                        for j in 0..g.len() {
                            ga[j] += g[j] * y[j] * (1.0 - y[j]);
                        }
                    });
                }
                &Op::Log(a) => {
                    let x = self.value(a).data();
                    acc(&mut grads, a, g.len(), |ga| {
                        for j in 0..g.len() {
                            ga[j] += g[j] / x[j];
                        }
                    });
                }
                &Op::Hadamard(a, b) => {
                    let (xa, xb) = (self.value(a).data(), self.value(b).data());
                    acc(&mut grads, a, g.len(), |ga| {
                        for j in 0..g.len() {
                            ga[j] += g[j] * xb[j];
                        }
                    });
                    acc(&mut grads, b, g.len(), |gb| {
                        for j in 0..g.len() {
                            gb[j] += g[j] * xa[j];
                        }
                    });
                }
                Op::Concat(vars) => {
                    let mut offset = 0;
                    for &v in vars {
                        let len = self.value(v).len();
                        acc(&mut grads, v, len, |gv| {
                            gv.iter_mut()
                                .zip(&g[offset..offset + len])
                                .for_each(|(x, y)| *x += y)
                        });
                        offset += len;
                    }
                }
                &Op::Slice(a, start) => {
                    let len = self.value(a).len();
                    acc(&mut grads, a, len, |ga| {
                        ga[start..start + g.len()]
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(x, y)| *x += y)
                    });
                }
                &Op::Softmax(a) => {
                    let y = node.value.data();
                    let dot: f64 = y.iter().zip(&g).map(|(p, d)| p * d).sum();
                    acc(&mut grads, a, g.len(), |ga| {
                        for j in 0..g.len() {
                            ga[j] += y[j] * (g[j] - dot);
                        }
                    });
                }
                &Op::PickRow(a, index) => {
                    let t = self.value(a);
                    let width = g.len();
                    acc(&mut grads, a, t.len(), |ga| {
                        ga[index * width..(index + 1) * width]
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(x, y)| *x += y)
                    });
                }
                &Op::CrossEntropy(logits, target) => {
                    let mut p = self.value(logits).data().to_vec();
                    softmax_in_place(&mut p);
                    p[target] -= 1.0;
                    acc(&mut grads, logits, p.len(), |gl| {
                        gl.iter_mut().zip(&p).for_each(|(x, y)| *x += g[0] * y)
                    });
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let z = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let s = tape.softmax(z).unwrap();
        assert_eq!(tape.value(s).data(), [0.5, 0.5]);
    }

    #[test]
    fn identity_matmul_is_identity() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let i = tape.constant(Tensor::identity(3));
        let x = tape.constant(Tensor::vector(vec![1.5, -2.0, 7.0]));
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn shape_errors_name_the_operation() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2]));
        match tape.matmul(a, b) {
            Err(Error::ShapeMismatch { op, left, right }) => {
                assert_eq!(op, "matmul");
                assert_eq!(left, [2, 3]);
                assert_eq!(right, [2]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            tape.add(a, b),
            Err(Error::ShapeMismatch { op: "add", .. })
        ));
        assert!(matches!(
            tape.hadamard(a, b),
            Err(Error::ShapeMismatch { op: "hadamard", .. })
        ));
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(0.0));
        let mut tape = Tape::new(&store);
        let v = tape.param(x);
        let y = tape.tanh(v);
        assert_eq!(tape.backward(y).unwrap().get(&store, x).item(), 1.0);
    }

    #[test]
    fn square_gradient_and_unused_param() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let unused = store.add("u", Tensor::vector(vec![1.0, 2.0]));
        let mut tape = Tape::new(&store);
        let v = tape.param(x);
        let _ = tape.param(unused);
        let y = tape.hadamard(v, v).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(&store, x).item(), 6.0);
        assert_eq!(grads.get(&store, unused).data(), [0.0, 0.0]);
        assert!(!grads.touches(unused));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let v = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(v), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn fused_cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut store = ParamStore::new();
        let z = store.add("z", Tensor::vector(vec![0.3, -1.2, 2.0, 0.0]));
        let mut tape = Tape::new(&store);
        let zv = tape.param(z);
        let loss = tape.cross_entropy(zv, 2).unwrap();
        let g = tape.backward(loss).unwrap().get(&store, z);
        let mut p = store.get(z).data().to_vec();
        softmax_in_place(&mut p);
        p[2] -= 1.0;
        for (a, b) in g.data().iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Builds `loss(params)` with every primitive on the path.
    fn all_ops_loss(tape: &mut Tape<'_>, w: ParamId, e: ParamId, b: ParamId) -> Result<Var> {
        let wv = tape.param(w);
        let bv = tape.param(b);
        let x0 = tape.lookup(e, 1)?;
        let x1 = tape.lookup(e, 2)?;
        let x = tape.concat(&[x0, x1])?;
        let h = tape.matmul(wv, x)?;
        let h = tape.add(h, bv)?;
        let t = tape.tanh(h);
        let s = tape.sigmoid(h);
        let m = tape.hadamard(t, s)?;
        let first = tape.slice(m, 0, 2)?;
        let rest = tape.slice(m, 2, 2)?;
        let mixed = tape.sum(&[first, rest])?;
        let mixed = tape.scale(mixed, 1.7);
        let p = tape.softmax(mixed)?;
        let p1 = tape.pick_row(p, 1)?;
        let log_p = tape.log(p1);
        let nll = tape.scale(log_p, -1.0);
        let row = tape.pick_row(wv, 3)?;
        let row_logits = tape.slice(row, 0, 3)?;
        let ce = tape.cross_entropy(row_logits, 0)?;
        let fixed = (0..16).map(|i| (i as f64 * 0.37).cos()).collect();
        let fixed = tape.constant(Tensor::matrix(4, 4, fixed)?);
        let wm = tape.matmul(wv, fixed)?;
        let wm0 = tape.pick_row(wm, 0)?;
        let wm00 = tape.pick_row(wm0, 1)?;
        tape.sum(&[nll, ce, wm00])
    }

    #[test]
    fn every_primitive_matches_central_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rand_t = |shape: &[usize]| {
                let n = shape.iter().product();
                Tensor::new(
                    shape.to_vec(),
                    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            };
            let mut store = ParamStore::new();
            let w = store.add("w", rand_t(&[4, 4]));
            let e = store.add("e", rand_t(&[3, 2]));
            let b = store.add("b", rand_t(&[4]));

            let grads = {
                let mut tape = Tape::new(&store);
                let loss = all_ops_loss(&mut tape, w, e, b).unwrap();
                tape.backward(loss).unwrap()
            };
            let eval = |s: &ParamStore| {
                let mut tape = Tape::new(s);
                let loss = all_ops_loss(&mut tape, w, e, b).unwrap();
                tape.value(loss).item()
            };
            for id in [w, e, b] {
                let analytic = grads.get(&store, id);
                for j in 0..store.get(id).len() {
                    let h = 1e-4;
                    let mut plus = store.clone();
                    plus.get_mut(id).data_mut()[j] += h;
                    let mut minus = store.clone();
                    minus.get_mut(id).data_mut()[j] -= h;
                    let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                    let a = analytic.data()[j];
                    let err = (a - numeric).abs();
                    assert!(
                        err <= 1e-6 || err <= 1e-4 * a.abs().max(numeric.abs()),
                        "seed {seed} param {} [{j}]: analytic {a} numeric {numeric}",
                        store.name(id)
                    );
                }
            }
        }
    }
}
