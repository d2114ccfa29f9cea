use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::kernels::{self, PlaneGeom};
use crate::dsp::StftPlan;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

/// Context handed to an op's adjoint during the backward sweep.
pub struct BackwardCtx<'a, T: Scalar> {
    pub grad: &'a Tensor<T>,
    pub inputs: &'a [&'a Tensor<T>],
    pub output: &'a Tensor<T>,
    /// Which inputs need a gradient.
    pub needs: &'a [bool],
}

type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Scalar> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// A linear signal operator with an explicit adjoint, usable inside a graph.
pub trait LinearOp<T: Scalar> {
    fn name(&self) -> &'static str;
    fn apply(&self, x: &[T]) -> Vec<T>;
    fn adjoint(&self, g: &[T]) -> Vec<T>;
}

/// Tape of recorded operations. Node ids are assigned in creation order,
/// which is a topological order of the computation.
pub struct Graph<T: Scalar = f32> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
        }
    }
}

impl<T: Scalar> fmt::Debug for Graph<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph({} nodes)", self.nodes.borrow().len())
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Scalar = f32> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients of a scalar with respect to every `requires_grad` leaf.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads.get_mut(v.id).and_then(|g| g.take())
    }
}

fn unary_map<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|v| f(*v)).collect())
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_parts(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect(),
    )
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, parents: Vec<usize>, backward: Option<BackwardFn<T>>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|p| nodes[*p].requires_grad);
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            parents: if requires_grad { parents } else { Vec::new() },
            backward: if requires_grad { backward } else { None },
            requires_grad,
        });
        Var { graph: self, id }
    }

    /// Leaf node; gradients are collected for it when `requires_grad` is set.
    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var { graph: self, id }
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Reverse sweep from a one-element tensor.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::shape("backward", root.value.shape(), &[]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(root.value.shape(), T::one()));
        for i in (0..=loss.id).rev() {
            let node = &nodes[i];
            let Some(bw) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let inputs: Vec<&Tensor<T>> = node.parents.iter().map(|p| &*nodes[*p].value).collect();
            let needs: Vec<bool> = node.parents.iter().map(|p| nodes[*p].requires_grad).collect();
            let ctx = BackwardCtx {
                grad: &g,
                inputs: &inputs,
                output: &node.value,
                needs: &needs,
            };
            let parent_grads = bw(&ctx);
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[*p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[*p].value.shape());
                match &mut grads[*p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    fn same_graph(&self, other: &Var<'g, T>) {
        assert!(std::ptr::eq(self.graph, other.graph), "vars from different graphs");
    }

    fn check_same_shape(&self, other: &Var<'g, T>, op: &'static str) -> Result<(Rc<Tensor<T>>, Rc<Tensor<T>>)> {
        self.same_graph(other);
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::shape(op, a.shape(), b.shape()));
        }
        Ok((a, b))
    }

    fn unary(&self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var<'g, T> {
        let x = self.value();
        let y = unary_map(&x, f);
        self.graph.push(
            y,
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let gx = Tensor::from_parts(
                    c.grad.shape().to_vec(),
                    c.grad
                        .data()
                        .iter()
                        .zip(c.inputs[0].data().iter().zip(c.output.data()))
                        .map(|(g, (x, y))| *g * df(*x, *y))
                        .collect(),
                );
                vec![Some(gx)]
            })),
        )
    }

    pub fn add(&self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = self.check_same_shape(&other, "add")?;
        Ok(self.graph.push(
            zip_map(&a, &b, |x, y| x + y),
            vec![self.id, other.id],
            Some(Box::new(|c: &BackwardCtx<'_, T>| {
                vec![Some(c.grad.clone()), Some(c.grad.clone())]
            })),
        ))
    }

    pub fn sub(&self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = self.check_same_shape(&other, "sub")?;
        Ok(self.graph.push(
            zip_map(&a, &b, |x, y| x - y),
            vec![self.id, other.id],
            Some(Box::new(|c: &BackwardCtx<'_, T>| {
                vec![Some(c.grad.clone()), Some(unary_map(c.grad, |g| -g))]
            })),
        ))
    }

    pub fn mul(&self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = self.check_same_shape(&other, "mul")?;
        Ok(self.graph.push(
            zip_map(&a, &b, |x, y| x * y),
            vec![self.id, other.id],
            Some(Box::new(|c: &BackwardCtx<'_, T>| {
                vec![
                    c.needs[0].then(|| zip_map(c.grad, c.inputs[1], |g, y| g * y)),
                    c.needs[1].then(|| zip_map(c.grad, c.inputs[0], |g, x| g * x)),
                ]
            })),
        ))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&self, k: &Tensor<T>) -> Result<Var<'g, T>> {
        let x = self.value();
        if x.shape() != k.shape() {
            return Err(Error::shape("mul_const", x.shape(), k.shape()));
        }
        let k = Rc::new(k.clone());
        let k2 = k.clone();
        Ok(self.graph.push(
            zip_map(&x, &k, |a, b| a * b),
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                vec![Some(zip_map(c.grad, &k2, |g, b| g * b))]
            })),
        ))
    }

    pub fn scale(&self, s: T) -> Var<'g, T> {
        self.unary(|x| x * s, move |_, _| s)
    }

    pub fn add_scalar(&self, s: T) -> Var<'g, T> {
        self.unary(|x| x + s, |_, _| T::one())
    }

    pub fn neg(&self) -> Var<'g, T> {
        self.scale(-T::one())
    }

    pub fn exp(&self) -> Var<'g, T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn log(&self) -> Var<'g, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn atan(&self) -> Var<'g, T> {
        self.unary(|x| x.atan(), |x, _| T::one() / (T::one() + x * x))
    }

    pub fn sigmoid(&self) -> Var<'g, T> {
        self.unary(|x| T::one() / (T::one() + (-x).exp()), |_, y| y * (T::one() - y))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Var<'g, T> {
        self.unary(softplus, |x, _| sigmoid(x))
    }

    /// `max(0, x)`; the gradient at exactly zero is zero.
    pub fn relu(&self) -> Var<'g, T> {
        self.unary(
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: T) -> Var<'g, T> {
        self.unary(
            move |x| if x > T::zero() { x } else { x * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn abs(&self) -> Var<'g, T> {
        self.unary(|x| x.abs(), |x, _| x.signum())
    }

    pub fn square(&self) -> Var<'g, T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&self, lo: T, hi: T) -> Var<'g, T> {
        self.unary(
            move |x| x.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::one() } else { T::zero() },
        )
    }

    pub fn sum(&self) -> Var<'g, T> {
        let x = self.value();
        let total = x.data().iter().fold(T::zero(), |s, v| s + *v);
        self.graph.push(
            Tensor::scalar(total),
            vec![self.id],
            Some(Box::new(|c: &BackwardCtx<'_, T>| {
                vec![Some(Tensor::full(c.inputs[0].shape(), c.grad.item()))]
            })),
        )
    }

    pub fn mean(&self) -> Var<'g, T> {
        let n = T::of(self.value().len() as f64);
        self.sum().scale(T::one() / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g, T>> {
        let x = self.value();
        if numel(shape) != x.len() {
            return Err(Error::shape("reshape", x.shape(), shape));
        }
        Ok(self.graph.push(
            Tensor::from_parts(shape.to_vec(), x.data().to_vec()),
            vec![self.id],
            Some(Box::new(|c: &BackwardCtx<'_, T>| {
                vec![Some(Tensor::from_parts(
                    c.inputs[0].shape().to_vec(),
                    c.grad.data().to_vec(),
                ))]
            })),
        ))
    }

    /// `(m, k) x (k, n) -> (m, n)`.
    pub fn matmul(&self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&other);
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(a.data(), b.data(), m, k, n);
        Ok(self.graph.push(
            Tensor::from_parts(vec![m, n], out),
            vec![self.id, other.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let g = c.grad.data();
                let ga = c.needs[0].then(|| {
                    let bt = kernels::transpose(c.inputs[1].data(), k, n);
                    Tensor::from_parts(vec![m, k], kernels::matmul(g, &bt, m, n, k))
                });
                let gb = c.needs[1].then(|| {
                    let at = kernels::transpose(c.inputs[0].data(), m, k);
                    Tensor::from_parts(vec![k, n], kernels::matmul(&at, g, k, m, n))
                });
                vec![ga, gb]
            })),
        ))
    }

    /// Concatenation along axis 0 (the channel axis of `(C, H, W)` tensors).
    pub fn concat(parts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", &[], &[]))?;
        let graph = first.graph;
        let values: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
        let tail = values[0].shape()[1..].to_vec();
        let mut rows = 0;
        for v in &values {
            if v.shape().is_empty() || v.shape()[1..] != tail[..] {
                return Err(Error::shape("concat", values[0].shape(), v.shape()));
            }
            rows += v.shape()[0];
        }
        let mut data = Vec::with_capacity(values.iter().map(|v| v.len()).sum());
        for v in &values {
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let sizes: Vec<usize> = values.iter().map(|v| v.len()).collect();
        Ok(graph.push(
            Tensor::from_parts(shape, data),
            parts.iter().map(|p| p.id).collect(),
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let mut off = 0;
                sizes
                    .iter()
                    .enumerate()
                    .map(|(i, n)| {
                        let g = c.needs[i].then(|| {
                            Tensor::from_parts(c.inputs[i].shape().to_vec(), c.grad.data()[off..off + n].to_vec())
                        });
                        off += n;
                        g
                    })
                    .collect()
            })),
        ))
    }

    /// Rows `start..end` along axis 0.
    pub fn slice(&self, start: usize, end: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        if x.shape().is_empty() || start > end || end > x.shape()[0] {
            return Err(Error::shape("slice", x.shape(), &[start, end]));
        }
        let inner: usize = x.shape()[1..].iter().product();
        let mut shape = x.shape().to_vec();
        shape[0] = end - start;
        let data = x.data()[start * inner..end * inner].to_vec();
        Ok(self.graph.push(
            Tensor::from_parts(shape, data),
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let mut g = Tensor::zeros(c.inputs[0].shape());
                g.data_mut()[start * inner..end * inner].copy_from_slice(c.grad.data());
                vec![Some(g)]
            })),
        ))
    }

    /// Same-padded stride-1 2-D convolution of a `(C, H, W)` tensor with an
    /// `(O, C, k, k)` kernel (odd `k`) and `(O)` bias.
    pub fn conv2d(&self, weight: Var<'g, T>, bias: Var<'g, T>) -> Result<Var<'g, T>> {
        self.same_graph(&weight);
        self.same_graph(&bias);
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let (sx, sw) = (x.shape(), w.shape());
        if sx.len() != 3 || sw.len() != 4 || sw[1] != sx[0] || sw[2] != sw[3] || sw[2] % 2 == 0 {
            return Err(Error::shape("conv2d", sx, sw));
        }
        if b.shape() != [sw[0]] {
            return Err(Error::shape("conv2d bias", b.shape(), &sw[..1]));
        }
        let (c_in, c_out) = (sx[0], sw[0]);
        let geom = PlaneGeom {
            h: sx[1],
            w: sx[2],
            k: sw[2],
        };
        let out = kernels::conv2d_forward(x.data(), c_in, geom, w.data(), b.data(), c_out);
        Ok(self.graph.push(
            Tensor::from_parts(vec![c_out, geom.h, geom.w], out),
            vec![self.id, weight.id, bias.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let (gx, gw, gb) = kernels::conv2d_backward(
                    c.inputs[0].data(),
                    c_in,
                    geom,
                    c.inputs[1].data(),
                    c_out,
                    c.grad.data(),
                    c.needs[0],
                );
                vec![
                    gx.map(|d| Tensor::from_parts(c.inputs[0].shape().to_vec(), d)),
                    c.needs[1].then(|| Tensor::from_parts(c.inputs[1].shape().to_vec(), gw)),
                    c.needs[2].then(|| Tensor::from_parts(vec![c_out], gb)),
                ]
            })),
        ))
    }

    /// Keeps every second row and column of a `(C, H, W)` tensor.
    pub fn downsample2(&self) -> Result<Var<'g, T>> {
        let x = self.value();
        let s = x.shape();
        if s.len() != 3 {
            return Err(Error::shape("downsample2", s, &[0, 0, 0]));
        }
        let (ch, h, w) = (s[0], s[1], s[2]);
        let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
        let mut data = Vec::with_capacity(ch * ho * wo);
        for c in 0..ch {
            for y in 0..ho {
                for xx in 0..wo {
                    data.push(x.data()[(c * h + 2 * y) * w + 2 * xx]);
                }
            }
        }
        Ok(self.graph.push(
            Tensor::from_parts(vec![ch, ho, wo], data),
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let mut g = Tensor::zeros(&[ch, h, w]);
                let gd = c.grad.data();
                for cc in 0..ch {
                    for y in 0..ho {
                        for xx in 0..wo {
                            g.data_mut()[(cc * h + 2 * y) * w + 2 * xx] = gd[(cc * ho + y) * wo + xx];
                        }
                    }
                }
                vec![Some(g)]
            })),
        ))
    }

    /// STFT of a 1-D signal into a `(2, F, T)` tensor.
    pub fn stft(&self, plan: &Rc<StftPlan<T>>) -> Result<Var<'g, T>> {
        let x = self.value();
        if x.shape().len() != 1 {
            return Err(Error::shape("stft", x.shape(), &[0]));
        }
        let n = x.len();
        let data = plan.forward(x.data())?;
        let shape = plan.spec_shape(n).to_vec();
        let plan = plan.clone();
        Ok(self.graph.push(
            Tensor::from_parts(shape, data),
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                vec![Some(Tensor::from_parts(
                    vec![n],
                    plan.forward_adjoint(c.grad.data(), n),
                ))]
            })),
        ))
    }

    /// Inverse STFT of a `(2, F, T)` tensor into `out_len` samples.
    pub fn istft(&self, plan: &Rc<StftPlan<T>>, out_len: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let expected = plan.spec_shape(out_len);
        if x.shape() != expected {
            return Err(Error::shape("istft", x.shape(), &expected));
        }
        let data = plan.inverse(x.data(), out_len)?;
        let plan = plan.clone();
        Ok(self.graph.push(
            Tensor::from_parts(vec![out_len], data),
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let g = plan
                    .inverse_adjoint(c.grad.data(), out_len)
                    .expect("envelope validated in forward");
                vec![Some(Tensor::from_parts(c.inputs[0].shape().to_vec(), g))]
            })),
        ))
    }

    /// `sqrt(re^2 + im^2 + eps)` of a `(2, F, T)` tensor, giving `(F, T)`.
    pub fn complex_magnitude(&self, eps: T) -> Result<Var<'g, T>> {
        let x = self.value();
        let s = x.shape();
        if s.len() != 3 || s[0] != 2 {
            return Err(Error::shape("complex_magnitude", s, &[2, 0, 0]));
        }
        let plane = s[1] * s[2];
        let (re, im) = x.data().split_at(plane);
        let mag: Vec<T> = re
            .iter()
            .zip(im)
            .map(|(a, b)| (*a * *a + *b * *b + eps).sqrt())
            .collect();
        Ok(self.graph.push(
            Tensor::from_parts(vec![s[1], s[2]], mag),
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let x = c.inputs[0].data();
                let mut g = vec![T::zero(); 2 * plane];
                for i in 0..plane {
                    let s = c.grad.data()[i] / c.output.data()[i];
                    g[i] = s * x[i];
                    g[plane + i] = s * x[plane + i];
                }
                vec![Some(Tensor::from_parts(c.inputs[0].shape().to_vec(), g))]
            })),
        ))
    }

    /// Applies a linear operator to a 1-D signal.
    pub fn linear_op(&self, op: Rc<dyn LinearOp<T>>) -> Result<Var<'g, T>> {
        let x = self.value();
        if x.shape().len() != 1 {
            return Err(Error::shape(op.name(), x.shape(), &[0]));
        }
        let y = op.apply(x.data());
        if y.len() != x.len() {
            return Err(Error::Length {
                what: op.name(),
                expected: x.len(),
                actual: y.len(),
            });
        }
        Ok(self.graph.push(
            Tensor::from_parts(vec![y.len()], y),
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                vec![Some(Tensor::from_parts(
                    c.inputs[0].shape().to_vec(),
                    op.adjoint(c.grad.data()),
                ))]
            })),
        ))
    }

    /// Mean binary cross-entropy between `sigmoid(self)` and `targets`,
    /// computed stably from logits.
    pub fn bce_with_logits(&self, targets: &[T]) -> Result<Var<'g, T>> {
        let z = self.value();
        if z.len() != targets.len() {
            return Err(Error::shape("bce_with_logits", z.shape(), &[targets.len()]));
        }
        let n = T::of(targets.len() as f64);
        let total = z
            .data()
            .iter()
            .zip(targets)
            .fold(T::zero(), |s, (z, y)| s + softplus(*z) - *y * *z);
        let targets = targets.to_vec();
        Ok(self.graph.push(
            Tensor::scalar(total / n),
            vec![self.id],
            Some(Box::new(move |c: &BackwardCtx<'_, T>| {
                let g = c.grad.item() / n;
                let d = c.inputs[0]
                    .data()
                    .iter()
                    .zip(&targets)
                    .map(|(z, y)| g * (sigmoid(*z) - *y))
                    .collect();
                vec![Some(Tensor::from_parts(c.inputs[0].shape().to_vec(), d))]
            })),
        ))
    }
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub(crate) fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}
