//! Layout helpers for convolution via im2col.

use ndarray::{Array2, Array4, ArrayView2, ArrayView4};

use crate::Scalar;

/// Output side length of a convolution.
pub fn conv_out(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

/// Unfold `x` (N, C, H, W) into columns of shape (C*k*k, N*Ho*Wo).
pub fn im2col<T: Scalar>(x: ArrayView4<T>, k: usize, stride: usize, pad: usize) -> Array2<T> {
    let (n, c, h, w) = x.dim();
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let plane = ho * wo;
    let width = n * plane;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut cols = Array2::<T>::zeros((c * k * k, width));
    let cs = cols.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cs[row * width..(row + 1) * width];
                for ni in 0..n {
                    let src = &xs[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    let out = &mut dst[ni * plane..(ni + 1) * plane];
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                out[oy * wo + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back into an (N, C, H, W) tensor.
pub fn col2im<T: Scalar>(
    cols: ArrayView2<T>,
    shape: (usize, usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
) -> Array4<T> {
    let (n, c, h, w) = shape;
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let plane = ho * wo;
    let width = n * plane;
    debug_assert_eq!(cols.dim(), (c * k * k, width));
    let cols = cols.as_standard_layout();
    let cs = cols.as_slice().expect("standard layout");
    let mut x = Array4::<T>::zeros(shape);
    let xs = x.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cs[row * width..(row + 1) * width];
                for ni in 0..n {
                    let dst = &mut xs[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    let col = &src[ni * plane..(ni + 1) * plane];
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[iy as usize * w + ix as usize] += col[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// (N, C, H, W) -> (C, N*H*W).
pub fn to_channel_major<T: Scalar>(x: ArrayView4<T>) -> Array2<T> {
    let (n, c, h, w) = x.dim();
    let plane = h * w;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut out = Array2::<T>::zeros((c, n * plane));
    let os = out.as_slice_mut().expect("fresh array");
    for ni in 0..n {
        for ci in 0..c {
            let src = &xs[(ni * c + ci) * plane..(ni * c + ci + 1) * plane];
            os[ci * n * plane + ni * plane..ci * n * plane + (ni + 1) * plane].copy_from_slice(src);
        }
    }
    out
}

/// (C, N*H*W) -> (N, C, H, W).
pub fn from_channel_major<T: Scalar>(m: ArrayView2<T>, n: usize, h: usize, w: usize) -> Array4<T> {
    let c = m.nrows();
    let plane = h * w;
    let m = m.as_standard_layout();
    let ms = m.as_slice().expect("standard layout");
    let mut out = Array4::<T>::zeros((n, c, h, w));
    let os = out.as_slice_mut().expect("fresh array");
    for ni in 0..n {
        for ci in 0..c {
            os[(ni * c + ci) * plane..(ni * c + ci + 1) * plane]
                .copy_from_slice(&ms[ci * n * plane + ni * plane..ci * n * plane + (ni + 1) * plane]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let shape = (2, 3, 6, 5);
        let x = Array::from_shape_fn(shape, |(a, b, c, d)| ((a * 7 + b * 5 + c * 3 + d) % 11) as f64 - 5.0);
        for &(k, s, p) in &[(3, 1, 1), (4, 2, 1), (2, 2, 0)] {
            let cols = im2col(x.view(), k, s, p);
            let y = Array::from_shape_fn(cols.dim(), |(i, j)| ((i * 13 + j * 3) % 7) as f64 - 3.0);
            let lhs: f64 = (&cols * &y).sum();
            let back = col2im(y.view(), shape, k, s, p);
            let rhs: f64 = (&x * &back).sum();
            assert!((lhs - rhs).abs() < 1e-9, "k={k} s={s} p={p}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn channel_major_round_trip() {
        let x = Array::from_shape_fn((3, 4, 2, 2), |(a, b, c, d)| (a * 100 + b * 10 + c * 2 + d) as f32);
        let m = to_channel_major(x.view());
        assert_eq!(m[[1, 4]], x[[1, 1, 0, 0]]);
        assert_eq!(from_channel_major(m.view(), 3, 2, 2), x);
    }

    #[test]
    fn output_sizes() {
        assert_eq!(conv_out(16, 4, 2, 1), 8);
        assert_eq!(conv_out(8, 4, 2, 1), 4);
        assert_eq!(conv_out(4, 3, 1, 1), 4);
    }
}
