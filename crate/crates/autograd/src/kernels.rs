//! Raw slice kernels behind the tensor ops. Nothing here knows about the graph.

use crate::conv::{Conv2dSpec, PaddingMode};

/// `c = a · b + beta · c` for row-major `a: m×k`, `b: k×n`, with optional
/// transposition of either operand (the stored layout is then `k×m` / `n×k`).
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the asserted buffer extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Source index along one axis for every (kernel tap, output position) pair.
fn tap_table(len: usize, out_len: usize, k: usize, spec: &Conv2dSpec) -> Vec<Option<usize>> {
    let mut table = Vec::with_capacity(k * out_len);
    for tap in 0..k {
        for o in 0..out_len {
            let i = (o * spec.stride + tap) as isize - spec.padding as isize;
            let src = match spec.mode {
                PaddingMode::Circular => Some(i.rem_euclid(len as isize) as usize),
                PaddingMode::Zero => (i >= 0 && (i as usize) < len).then_some(i as usize),
            };
            table.push(src);
        }
    }
    table
}

pub(crate) struct ConvGeometry {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub ho: usize,
    pub wo: usize,
    rows: Vec<Option<usize>>,
    cols: Vec<Option<usize>>,
    identity: bool,
}

impl ConvGeometry {
    pub fn new(cin: usize, h: usize, w: usize, k: usize, ho: usize, wo: usize, spec: &Conv2dSpec) -> Self {
        let identity = k == 1 && spec.stride == 1 && spec.padding == 0;
        Self {
            cin,
            h,
            w,
            k,
            ho,
            wo,
            rows: tap_table(h, ho, k, spec),
            cols: tap_table(w, wo, k, spec),
            identity,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn col_len(&self) -> usize {
        self.col_rows() * self.ho * self.wo
    }

    /// 1×1, stride 1, unpadded: the input plane already is the column matrix.
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let (h, w, k, ho, wo) = (self.h, self.w, self.k, self.ho, self.wo);
        let plane = ho * wo;
        for ci in 0..self.cin {
            let src = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    let cols = &self.cols[kx * wo..(kx + 1) * wo];
                    for oy in 0..ho {
                        let out = &mut dst[oy * wo..(oy + 1) * wo];
                        match self.rows[ky * ho + oy] {
                            Some(iy) => {
                                let line = &src[iy * w..(iy + 1) * w];
                                for (o, c) in out.iter_mut().zip(cols) {
                                    *o = c.map_or(0.0, |ix| line[ix]);
                                }
                            }
                            None => out.fill(0.0),
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add of a column matrix back onto an input plane (adjoint of `im2col`).
    pub fn col2im(&self, col: &[f64], x: &mut [f64]) {
        let (h, w, k, ho, wo) = (self.h, self.w, self.k, self.ho, self.wo);
        let plane = ho * wo;
        for ci in 0..self.cin {
            let dst = &mut x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &col[row * plane..(row + 1) * plane];
                    let cols = &self.cols[kx * wo..(kx + 1) * wo];
                    for oy in 0..ho {
                        if let Some(iy) = self.rows[ky * ho + oy] {
                            let line = &mut dst[iy * w..(iy + 1) * w];
                            for (v, c) in src[oy * wo..(oy + 1) * wo].iter().zip(cols) {
                                if let Some(ix) = c {
                                    line[*ix] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Central difference along an axis with circular wrap. `outer` blocks of
/// `len` entries spaced `inner` apart.
pub(crate) fn central_diff(x: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for o in 0..outer {
        let base = o * len * inner;
        for i in 0..len {
            let next = (i + 1) % len;
            let prev = (i + len - 1) % len;
            for j in 0..inner {
                y[base + i * inner + j] = 0.5 * (x[base + next * inner + j] - x[base + prev * inner + j]);
            }
        }
    }
    y
}

pub(crate) fn avg_pool2(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut y[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                let a = src[2 * i * w + 2 * j] + src[2 * i * w + 2 * j + 1];
                let b = src[(2 * i + 1) * w + 2 * j] + src[(2 * i + 1) * w + 2 * j + 1];
                dst[i * ow + j] = 0.25 * (a + b);
            }
        }
    }
    y
}

/// Adjoint of `avg_pool2`: spreads each coarse value over its 2×2 block, scaled by 1/4.
pub(crate) fn avg_pool2_adjoint(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut y = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut y[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                dst[i * ow + j] = 0.25 * src[(i / 2) * w + j / 2];
            }
        }
    }
    y
}

/// Bilinear ×2 upsampling along one axis, half-pixel aligned, circular.
fn upsample_axis(x: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len() * 2];
    for o in 0..outer {
        let src = &x[o * len * inner..(o + 1) * len * inner];
        let dst = &mut y[o * 2 * len * inner..(o + 1) * 2 * len * inner];
        for m in 0..len {
            let prev = (m + len - 1) % len;
            let next = (m + 1) % len;
            for j in 0..inner {
                let c = src[m * inner + j];
                dst[2 * m * inner + j] = 0.75 * c + 0.25 * src[prev * inner + j];
                dst[(2 * m + 1) * inner + j] = 0.75 * c + 0.25 * src[next * inner + j];
            }
        }
    }
    y
}

fn upsample_axis_adjoint(u: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    // `len` is the coarse length; `u` holds 2·len entries per block.
    let mut v = vec![0.0; u.len() / 2];
    for o in 0..outer {
        let src = &u[o * 2 * len * inner..(o + 1) * 2 * len * inner];
        let dst = &mut v[o * len * inner..(o + 1) * len * inner];
        for m in 0..len {
            let prev = (m + len - 1) % len;
            let next = (m + 1) % len;
            for j in 0..inner {
                dst[m * inner + j] = 0.75 * (src[2 * m * inner + j] + src[(2 * m + 1) * inner + j])
                    + 0.25 * src[2 * next * inner + j]
                    + 0.25 * src[(2 * prev + 1) * inner + j];
            }
        }
    }
    v
}

pub(crate) fn upsample2(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let along_w = upsample_axis(x, planes * h, w, 1);
    upsample_axis(&along_w, planes, h, 2 * w)
}

pub(crate) fn upsample2_adjoint(u: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    // (h, w) are the coarse extents.
    let along_h = upsample_axis_adjoint(u, planes, h, 2 * w);
    upsample_axis_adjoint(&along_h, planes * h, w, 1)
}
