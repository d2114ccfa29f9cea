//! Dense numeric kernels shared by the graph ops.
//!
//! Convolutions use a padded-plane layout: each `H x W` plane is copied into a
//! zero-bordered `(H + k - 1) x (W + k - 1)` buffer so every kernel tap becomes
//! a contiguous shifted slice of length `H * Wp`. Outputs are accumulated in
//! that `H x Wp` layout and the `k - 1` trailing columns of each row are dropped.

use crate::scalar::Scalar;

const LANES: usize = 16;

/// Dot product with lane-split accumulation (vectorizes, fixed summation order).
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); LANES];
    let chunks = n / LANES;
    for c in 0..chunks {
        let xa = &a[c * LANES..c * LANES + LANES];
        let xb = &b[c * LANES..c * LANES + LANES];
        for l in 0..LANES {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * LANES..n {
        tail = tail + a[i] * b[i];
    }
    acc.iter().fold(T::zero(), |s, v| s + *v) + tail
}

#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

/// Geometry of a same-padded stride-1 convolution over one plane.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PlaneGeom {
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl PlaneGeom {
    fn pad(&self) -> usize {
        self.k / 2
    }
    pub fn wp(&self) -> usize {
        self.w + self.k - 1
    }
    /// Padded buffer length, with slack so the largest shifted slice stays in bounds.
    pub fn padded_len(&self) -> usize {
        (self.h + self.k - 1) * self.wp() + self.k
    }
    /// Length of the accumulation buffer (`h` rows of `wp`).
    pub fn acc_len(&self) -> usize {
        self.h * self.wp()
    }
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Copies an `h x w` plane into the interior of a zeroed padded buffer.
    pub fn pad_into<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        let (p, wp) = (self.pad(), self.wp());
        dst.iter_mut().for_each(|v| *v = T::zero());
        for y in 0..self.h {
            let row = (y + p) * wp + p;
            dst[row..row + self.w].copy_from_slice(&src[y * self.w..(y + 1) * self.w]);
        }
    }

    /// Copies an `h x w` plane into the `h x wp` accumulation layout, zeroing the slack columns.
    pub fn to_acc<T: Scalar>(&self, src: &[T], dst: &mut [T]) {
        let wp = self.wp();
        dst.iter_mut().for_each(|v| *v = T::zero());
        for y in 0..self.h {
            dst[y * wp..y * wp + self.w].copy_from_slice(&src[y * self.w..(y + 1) * self.w]);
        }
    }

    /// Adds the valid columns of an accumulation buffer into an `h x w` plane.
    pub fn add_from_acc<T: Scalar>(&self, acc: &[T], dst: &mut [T]) {
        let wp = self.wp();
        for y in 0..self.h {
            let out = &mut dst[y * self.w..(y + 1) * self.w];
            for (o, a) in out.iter_mut().zip(&acc[y * wp..y * wp + self.w]) {
                *o = *o + *a;
            }
        }
    }
}

/// `acc[i] += sum_t ker[t] * padded[i + off(t)]` for a `k x k` kernel.
pub(crate) fn correlate_acc<T: Scalar>(g: &PlaneGeom, acc: &mut [T], padded: &[T], ker: &[T]) {
    let n = g.acc_len();
    let wp = g.wp();
    if g.k == 3 {
        let acc = &mut acc[..n];
        let s: [&[T]; 9] = std::array::from_fn(|t| {
            let off = (t / 3) * wp + t % 3;
            &padded[off..off + n]
        });
        let c: [T; 9] = std::array::from_fn(|t| ker[t]);
        for i in 0..n {
            acc[i] = acc[i]
                + c[0] * s[0][i]
                + c[1] * s[1][i]
                + c[2] * s[2][i]
                + c[3] * s[3][i]
                + c[4] * s[4][i]
                + c[5] * s[5][i]
                + c[6] * s[6][i]
                + c[7] * s[7][i]
                + c[8] * s[8][i];
        }
    } else {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let off = ky * wp + kx;
                axpy(&mut acc[..n], ker[ky * g.k + kx], &padded[off..off + n]);
            }
        }
    }
}

/// Nine (or `k * k`) tap correlations of `grad_acc` (accumulation layout,
/// zero slack) against shifted views of `padded`, added into `out`.
pub(crate) fn tap_dots<T: Scalar>(g: &PlaneGeom, grad_acc: &[T], padded: &[T], out: &mut [T]) {
    let n = g.acc_len();
    let wp = g.wp();
    if g.k == 3 {
        let ga = &grad_acc[..n];
        let s: [&[T]; 9] = std::array::from_fn(|t| {
            let off = (t / 3) * wp + t % 3;
            &padded[off..off + n]
        });
        let mut acc = [[T::zero(); LANES]; 9];
        let chunks = n / LANES;
        for c in 0..chunks {
            let base = c * LANES;
            let gv = &ga[base..base + LANES];
            for t in 0..9 {
                let sv = &s[t][base..base + LANES];
                for l in 0..LANES {
                    acc[t][l] = acc[t][l] + gv[l] * sv[l];
                }
            }
        }
        for t in 0..9 {
            let mut total = acc[t].iter().fold(T::zero(), |a, v| a + *v);
            for i in chunks * LANES..n {
                total = total + ga[i] * s[t][i];
            }
            out[t] = out[t] + total;
        }
    } else {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let off = ky * wp + kx;
                out[ky * g.k + kx] = out[ky * g.k + kx] + dot(&grad_acc[..n], &padded[off..off + n]);
            }
        }
    }
}

/// Same-padded stride-1 convolution `(C, H, W) * (O, C, k, k) + b -> (O, H, W)`.
pub(crate) fn conv2d_forward<T: Scalar>(
    x: &[T],
    c_in: usize,
    g: PlaneGeom,
    weight: &[T],
    bias: &[T],
    c_out: usize,
) -> Vec<T> {
    let plane = g.plane();
    let mut out = vec![T::zero(); c_out * plane];
    if g.k == 1 {
        for o in 0..c_out {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..c_in {
                axpy(dst, weight[o * c_in + c], &x[c * plane..(c + 1) * plane]);
            }
        }
        return out;
    }
    let kk = g.k * g.k;
    let mut padded = vec![T::zero(); c_in * g.padded_len()];
    for c in 0..c_in {
        let pl = g.padded_len();
        g.pad_into(&x[c * plane..(c + 1) * plane], &mut padded[c * pl..(c + 1) * pl]);
    }
    let mut acc = vec![T::zero(); g.acc_len()];
    for o in 0..c_out {
        acc.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..c_in {
            let pl = g.padded_len();
            let ker = &weight[(o * c_in + c) * kk..(o * c_in + c + 1) * kk];
            correlate_acc(&g, &mut acc, &padded[c * pl..(c + 1) * pl], ker);
        }
        g.add_from_acc(&acc, &mut out[o * plane..(o + 1) * plane]);
    }
    out
}

/// Gradients of [`conv2d_forward`] for input, weight and bias.
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    c_in: usize,
    g: PlaneGeom,
    weight: &[T],
    c_out: usize,
    grad_out: &[T],
    need_input: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let plane = g.plane();
    let kk = g.k * g.k;
    let mut gb = vec![T::zero(); c_out];
    for o in 0..c_out {
        gb[o] = grad_out[o * plane..(o + 1) * plane]
            .iter()
            .fold(T::zero(), |s, v| s + *v);
    }
    let mut gw = vec![T::zero(); c_out * c_in * kk];
    if g.k == 1 {
        for o in 0..c_out {
            for c in 0..c_in {
                gw[o * c_in + c] = dot(&grad_out[o * plane..(o + 1) * plane], &x[c * plane..(c + 1) * plane]);
            }
        }
        let gx = need_input.then(|| {
            let mut gx = vec![T::zero(); c_in * plane];
            for c in 0..c_in {
                let dst = &mut gx[c * plane..(c + 1) * plane];
                for o in 0..c_out {
                    axpy(dst, weight[o * c_in + c], &grad_out[o * plane..(o + 1) * plane]);
                }
            }
            gx
        });
        return (gx, gw, gb);
    }

    let pl = g.padded_len();
    let mut padded = vec![T::zero(); c_in * pl];
    for c in 0..c_in {
        g.pad_into(&x[c * plane..(c + 1) * plane], &mut padded[c * pl..(c + 1) * pl]);
    }
    let mut gacc = vec![T::zero(); g.acc_len()];
    for o in 0..c_out {
        g.to_acc(&grad_out[o * plane..(o + 1) * plane], &mut gacc);
        for c in 0..c_in {
            let idx = (o * c_in + c) * kk;
            tap_dots(&g, &gacc, &padded[c * pl..(c + 1) * pl], &mut gw[idx..idx + kk]);
        }
    }
    drop(padded);

    let gx = need_input.then(|| {
        let mut gpad = vec![T::zero(); c_out * pl];
        for o in 0..c_out {
            g.pad_into(&grad_out[o * plane..(o + 1) * plane], &mut gpad[o * pl..(o + 1) * pl]);
        }
        let mut gx = vec![T::zero(); c_in * plane];
        let mut acc = vec![T::zero(); g.acc_len()];
        let mut flipped = vec![T::zero(); kk];
        for c in 0..c_in {
            acc.iter_mut().for_each(|v| *v = T::zero());
            for o in 0..c_out {
                let ker = &weight[(o * c_in + c) * kk..(o * c_in + c + 1) * kk];
                for t in 0..kk {
                    flipped[t] = ker[kk - 1 - t];
                }
                correlate_acc(&g, &mut acc, &gpad[o * pl..(o + 1) * pl], &flipped);
            }
            g.add_from_acc(&acc, &mut gx[c * plane..(c + 1) * plane]);
        }
        gx
    });
    (gx, gw, gb)
}

/// `(m, k) x (k, n) -> (m, n)`.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av != T::zero() {
                axpy(row, av, &b[p * n..(p + 1) * n]);
            }
        }
    }
    out
}

/// `a^T` for an `(m, n)` matrix.
pub(crate) fn transpose<T: Scalar>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}
