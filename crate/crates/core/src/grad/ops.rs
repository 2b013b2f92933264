//! Differentiable operations on [`Var`].
//!
//! Shape errors in these ops are programming errors and panic, the way
//! indexing does. Matrix ops expect rank-2 values.

use std::ops::{Add, Mul, Neg, Sub};
use std::rc::Rc;

use super::tensor::dot;
use super::{Tensor, Var};

/// Floor applied before every logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

fn same_shape(op: &str, a: &Tensor, b: &Tensor) {
    assert_eq!(a.shape(), b.shape(), "{op}: shapes {:?} and {:?}", a.shape(), b.shape());
}

impl<'t> Var<'t> {
    fn unary(
        self,
        kind: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var<'t> {
        let x = self.value();
        let y = Rc::new(x.map(f));
        let y_saved = Rc::clone(&y);
        self.tape.push_op(kind, y.as_ref().clone(), &[self], move |ct| {
            let d = x.zip_map(&y_saved, &df);
            vec![ct.zip_map(&d, |c, di| c * di)]
        })
    }

    pub fn exp(self) -> Var<'t> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    /// `ln(max(x, 1e-12))`; zero derivative in the clamped region.
    pub fn log_clamped(self) -> Var<'t> {
        self.unary(
            "log",
            |x| x.max(LOG_CLAMP).ln(),
            |x, _| if x > LOG_CLAMP { 1.0 / x } else { 0.0 },
        )
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn square(self) -> Var<'t> {
        self.unary("square", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary("scale", move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary("add_scalar", move |x| x + c, |_, _| 1.0)
    }

    /// `c - x` elementwise.
    pub fn rsub_scalar(self, c: f64) -> Var<'t> {
        self.unary("rsub_scalar", move |x| c - x, |_, _| -1.0)
    }

    fn binary(
        self,
        other: Var<'t>,
        kind: &'static str,
        f: impl Fn(f64, f64) -> f64,
        grad: impl Fn(&Tensor, &Tensor, &Tensor) -> (Tensor, Tensor) + 'static,
    ) -> Var<'t> {
        let a = self.value();
        let b = other.value();
        same_shape(kind, &a, &b);
        let y = a.zip_map(&b, f);
        self.tape
            .push_op(kind, y, &[self, other], move |ct| {
                let (ga, gb) = grad(ct, &a, &b);
                vec![ga, gb]
            })
    }

    /// Elementwise product.
    pub fn mul_elem(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, "mul", |x, y| x * y, |ct, a, b| {
            (ct.zip_map(b, |c, y| c * y), ct.zip_map(a, |c, x| c * x))
        })
    }

    /// Multiplies every element by a one-element var.
    pub fn mul_scalar_var(self, s: Var<'t>) -> Var<'t> {
        let x = self.value();
        let sv = s.value();
        assert!(sv.is_scalar(), "mul_scalar_var: scalar operand has shape {:?}", sv.shape());
        let k = sv.item();
        let s_shape = sv.shape().to_vec();
        self.tape.push_op("mul_scalar_var", x.map(|v| v * k), &[self, s], move |ct| {
            let gs = dot(ct.data(), x.data());
            vec![ct.map(|c| c * k), Tensor::full(s_shape.clone(), gs)]
        })
    }

    pub fn sum(self) -> Var<'t> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.tape.push_op("sum", Tensor::scalar(x.sum()), &[self], move |ct| {
            vec![Tensor::full(shape.clone(), ct.item())]
        })
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let x = self.value();
        let old = x.shape().to_vec();
        let y = x.as_ref().clone().reshaped(shape.to_vec()).expect("reshape element count");
        self.tape.push_op("reshape", y, &[self], move |ct| {
            vec![ct.clone().reshaped(old.clone()).expect("reshape back")]
        })
    }

    /// `self (r×k) · other (k×c)`.
    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let a = self.value();
        let b = other.value();
        let y = a.matmul(&b);
        self.tape.push_op("matmul", y, &[self, other], move |ct| {
            vec![ct.matmul(&b.transpose()), a.transpose().matmul(ct)]
        })
    }

    /// `self (r×k) · other(c×k)ᵀ`.
    pub fn matmul_t(self, other: Var<'t>) -> Var<'t> {
        let a = self.value();
        let b = other.value();
        let y = a.matmul(&b.transpose());
        self.tape.push_op("matmul_t", y, &[self, other], move |ct| {
            vec![ct.matmul(&b), ct.transpose().matmul(&a)]
        })
    }

    /// Adds a length-`c` vector to every row of an `r×c` matrix.
    pub fn add_row(self, bias: Var<'t>) -> Var<'t> {
        let x = self.value();
        let b = bias.value();
        let c = x.cols();
        assert_eq!(b.numel(), c, "add_row: bias length {} vs {} columns", b.numel(), c);
        let b_shape = b.shape().to_vec();
        let mut y = x.as_ref().clone();
        for row in y.data_mut().chunks_mut(c) {
            for (v, bb) in row.iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
        self.tape.push_op("add_row", y, &[self, bias], move |ct| {
            let mut gb = vec![0.0; c];
            for row in ct.data().chunks(c) {
                for (g, v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            vec![ct.clone(), Tensor::new(b_shape.clone(), gb).expect("bias shape")]
        })
    }

    /// Row sums of an `r×c` matrix, shape `[r]`.
    pub fn sum_rows(self) -> Var<'t> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        let y = Tensor::vector(x.row_iter().map(|row| row.iter().sum()).collect());
        self.tape.push_op("sum_rows", y, &[self], move |ct| {
            let mut g = Vec::with_capacity(r * c);
            for &v in ct.data() {
                g.extend(std::iter::repeat_n(v, c));
            }
            vec![Tensor::matrix(r, c, g)]
        })
    }

    /// Column means of an `r×c` matrix, shape `[c]`.
    pub fn mean_rows(self) -> Var<'t> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        let mut m = vec![0.0; c];
        for row in x.row_iter() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let inv = 1.0 / r as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        self.tape.push_op("mean_rows", Tensor::vector(m), &[self], move |ct| {
            let row: Vec<f64> = ct.data().iter().map(|v| v * inv).collect();
            vec![Tensor::matrix(r, c, row.repeat(r))]
        })
    }

    /// Row-wise dot product of two `r×c` matrices, shape `[r]`.
    pub fn row_dot(self, other: Var<'t>) -> Var<'t> {
        let a = self.value();
        let b = other.value();
        same_shape("row_dot", &a, &b);
        let y = Tensor::vector(a.row_iter().zip(b.row_iter()).map(|(x, y)| dot(x, y)).collect());
        self.tape.push_op("row_dot", y, &[self, other], move |ct| {
            let c = a.cols();
            let mut ga = b.as_ref().clone();
            let mut gb = a.as_ref().clone();
            for (i, &g) in ct.data().iter().enumerate() {
                ga.data_mut()[i * c..(i + 1) * c].iter_mut().for_each(|v| *v *= g);
                gb.data_mut()[i * c..(i + 1) * c].iter_mut().for_each(|v| *v *= g);
            }
            vec![ga, gb]
        })
    }

    /// Divides every row by its L2 norm. Rows must be nonzero.
    pub fn l2_normalize_rows(self) -> Var<'t> {
        let x = self.value();
        let c = x.cols();
        let norms: Vec<f64> = x.row_iter().map(super::tensor::norm).collect();
        let mut y = x.as_ref().clone();
        for (row, n) in y.data_mut().chunks_mut(c).zip(&norms) {
            row.iter_mut().for_each(|v| *v /= n);
        }
        let y_saved = y.clone();
        self.tape.push_op("l2_normalize_rows", y, &[self], move |ct| {
            let mut g = ct.clone();
            for (i, n) in norms.iter().enumerate() {
                let yr = y_saved.row(i);
                let cr = ct.row(i);
                let proj = dot(yr, cr);
                for ((gv, &cv), &yv) in g.row_mut(i).iter_mut().zip(cr).zip(yr) {
                    *gv = (cv - yv * proj) / n;
                }
            }
            vec![g]
        })
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(self) -> Var<'t> {
        let y = softmax_rows(&self.value());
        let y_saved = y.clone();
        self.tape.push_op("softmax_rows", y, &[self], move |ct| {
            let mut g = ct.clone();
            for i in 0..y_saved.rows() {
                let yr = y_saved.row(i);
                let cr = ct.row(i);
                let s = dot(yr, cr);
                for ((gv, &cv), &yv) in g.row_mut(i).iter_mut().zip(cr).zip(yr) {
                    *gv = yv * (cv - s);
                }
            }
            vec![g]
        })
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(self) -> Var<'t> {
        let x = self.value();
        let p = softmax_rows(&x);
        let mut y = x.as_ref().clone();
        for i in 0..y.rows() {
            let row = y.row_mut(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.tape.push_op("log_softmax_rows", y, &[self], move |ct| {
            let mut g = ct.clone();
            for i in 0..p.rows() {
                let s: f64 = ct.row(i).iter().sum();
                for (gv, &pv) in g.row_mut(i).iter_mut().zip(p.row(i)) {
                    *gv -= pv * s;
                }
            }
            vec![g]
        })
    }

    /// Selects rows of an `r×c` matrix; repeated indices accumulate on backward.
    pub fn gather_rows(self, indices: &[usize]) -> Var<'t> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        let mut y = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            assert!(i < r, "gather_rows: row {i} out of {r}");
            y.extend_from_slice(x.row(i));
        }
        let idx = indices.to_vec();
        self.tape
            .push_op("gather_rows", Tensor::matrix(idx.len(), c, y), &[self], move |ct| {
                let mut g = Tensor::zeros(vec![r, c]);
                for (k, &i) in idx.iter().enumerate() {
                    for (gv, v) in g.row_mut(i).iter_mut().zip(ct.row(k)) {
                        *gv += v;
                    }
                }
                vec![g]
            })
    }

    /// Like [`Var::gather_rows`], with `None` producing a zero row.
    pub fn gather_rows_or_zero(self, indices: &[Option<usize>]) -> Var<'t> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        let mut y = vec![0.0; indices.len() * c];
        for (k, i) in indices.iter().enumerate() {
            if let Some(i) = *i {
                y[k * c..(k + 1) * c].copy_from_slice(x.row(i));
            }
        }
        let idx = indices.to_vec();
        self.tape.push_op(
            "gather_rows_or_zero",
            Tensor::matrix(idx.len(), c, y),
            &[self],
            move |ct| {
                let mut g = Tensor::zeros(vec![r, c]);
                for (k, i) in idx.iter().enumerate() {
                    if let Some(i) = *i {
                        for (gv, v) in g.row_mut(i).iter_mut().zip(ct.row(k)) {
                            *gv += v;
                        }
                    }
                }
                vec![g]
            },
        )
    }

    /// Picks entries `(row, col)` of a matrix into a vector.
    pub fn gather_elements(self, pairs: &[(usize, usize)]) -> Var<'t> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        let y: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| {
                assert!(i < r && j < c, "gather_elements: ({i},{j}) outside {r}x{c}");
                x.data()[i * c + j]
            })
            .collect();
        let pairs = pairs.to_vec();
        self.tape
            .push_op("gather_elements", Tensor::vector(y), &[self], move |ct| {
                let mut g = Tensor::zeros(vec![r, c]);
                for (&(i, j), v) in pairs.iter().zip(ct.data()) {
                    g.data_mut()[i * c + j] += v;
                }
                vec![g]
            })
    }

    /// Replaces the flagged rows of an `r×c` matrix by a length-`c` vector.
    pub fn replace_rows(self, mask: &[bool], fill: Var<'t>) -> Var<'t> {
        let x = self.value();
        let f = fill.value();
        let c = x.cols();
        assert_eq!(mask.len(), x.rows(), "replace_rows: mask length");
        assert_eq!(f.numel(), c, "replace_rows: fill length");
        let mut y = x.as_ref().clone();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                y.row_mut(i).copy_from_slice(f.data());
            }
        }
        let mask = mask.to_vec();
        let f_shape = f.shape().to_vec();
        self.tape.push_op("replace_rows", y, &[self, fill], move |ct| {
            let mut gx = ct.clone();
            let mut gf = vec![0.0; c];
            for (i, &m) in mask.iter().enumerate() {
                if m {
                    for (acc, v) in gf.iter_mut().zip(ct.row(i)) {
                        *acc += v;
                    }
                    gx.row_mut(i).fill(0.0);
                }
            }
            vec![gx, Tensor::new(f_shape.clone(), gf).expect("fill shape")]
        })
    }

    /// Columns `[start, start + len)` of a matrix.
    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        assert!(start + len <= c, "slice_cols: {start}+{len} > {c}");
        let mut y = Vec::with_capacity(r * len);
        for row in x.row_iter() {
            y.extend_from_slice(&row[start..start + len]);
        }
        self.tape
            .push_op("slice_cols", Tensor::matrix(r, len, y), &[self], move |ct| {
                let mut g = Tensor::zeros(vec![r, c]);
                for i in 0..r {
                    g.row_mut(i)[start..start + len].copy_from_slice(ct.row(i));
                }
                vec![g]
            })
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let tape = parts[0].tape;
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let r = values[0].rows();
        let widths: Vec<usize> = values
            .iter()
            .map(|v| {
                assert_eq!(v.rows(), r, "concat_cols: row counts differ");
                v.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut y = Vec::with_capacity(r * total);
        for i in 0..r {
            for v in &values {
                y.extend_from_slice(v.row(i));
            }
        }
        tape.push_op("concat_cols", Tensor::matrix(r, total, y), parts, move |ct| {
            let mut offset = 0;
            widths
                .iter()
                .map(|&w| {
                    let mut g = Vec::with_capacity(r * w);
                    for i in 0..r {
                        g.extend_from_slice(&ct.row(i)[offset..offset + w]);
                    }
                    offset += w;
                    Tensor::matrix(r, w, g)
                })
                .collect()
        })
    }
}

/// Plain (non-taped) row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for i in 0..y.rows() {
        softmax_in_place(y.row_mut(i));
    }
    y
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    row.iter_mut().for_each(|v| *v /= s);
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, "add", |x, y| x + y, |ct, _, _| (ct.clone(), ct.clone()))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, "sub", |x, y| x - y, |ct, _, _| (ct.clone(), ct.map(|c| -c)))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.mul_elem(rhs)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tape;

    #[test]
    fn square_chain_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = x * x;
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 6.0);
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let loss = (x.detach() * x).sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[1.0, 2.0]);
    }

    #[test]
    fn x_minus_detach_is_zero_with_unit_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.3, -1.7, 4.0]));
        let loss = (x - x.detach()).sum();
        assert_eq!(loss.item(), 0.0);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn double_detach_matches_single() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let a = x.detach();
        let b = x.detach().detach();
        assert_eq!(a.to_tensor(), b.to_tensor());
        assert!(!a.requires_grad() && !b.requires_grad());
        let g = tape.backward((a * x + b * x).sum()).unwrap();
        assert_eq!(g.get(x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let g = tape.backward(x.sum()).unwrap();
        assert_eq!(g.get(x).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn softmax_first_component_gradient_at_origin() {
        // d softmax_0 / dx at x = 0: (p0(1-p0), -p0 p1) = (0.25, -0.25)
        let tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let p = x.softmax_rows();
        let loss = p.gather_elements(&[(0, 0)]).sum();
        let g = tape.backward(loss).unwrap();
        let g = g.get(x);
        assert!((g.data()[0] - 0.25).abs() < 1e-15);
        assert!((g.data()[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn disconnected_leaf_gets_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.leaf(Tensor::vector(vec![5.0, 6.0, 7.0]));
        let g = tape.backward(x.square().sum()).unwrap();
        assert_eq!(g.get(y), Tensor::zeros(vec![3]));
        assert!(g.try_get(y).is_none());
    }

    #[test]
    fn shared_input_accumulates_contributions() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = x + x + x;
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 3.0);
    }

    #[test]
    fn log_clamped_is_finite_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 1.0]));
        let y = x.log_clamped();
        assert!((y.value().data()[0] - LOG_CLAMP.ln()).abs() < 1e-12);
        let g = tape.backward(y.sum()).unwrap();
        assert_eq!(g.get(x).data(), &[0.0, 1.0]);
    }
}
