//! Plain slice kernels shared by the forward and backward rules.

/// `out += a · b` with `a: m×n`, `b: n×p`.
pub fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    for i in 0..m {
        let out_row = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[k * p..(k + 1) * p];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// `out += a · bᵀ` with `a: m×n`, `b: p×n`.
pub fn matmul_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for j in 0..p {
            let b_row = &b[j * n..(j + 1) * n];
            out[i * p + j] += dot(a_row, b_row);
        }
    }
}

/// `out += aᵀ · b` with `a: m×n`, `b: m×p`, `out: n×p`.
pub fn matmul_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    for i in 0..m {
        let b_row = &b[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let out_row = &mut out[k * p..(k + 1) * p];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Geometry of a 2-D convolution over one `[C, H, W]` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_height() * self.out_width()
    }
}

/// Output positions `lo..hi` along one axis whose tap `k` lands inside
/// an input of length `len`.
fn valid_outputs(k: usize, len: usize, out_len: usize, g: &ConvGeometry) -> (usize, usize) {
    let lo = g.pad.saturating_sub(k).div_ceil(g.stride);
    let hi = if len + g.pad > k {
        (len + g.pad - k).div_ceil(g.stride).min(out_len)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Unfolds one image into `[C·K·K, Ho·Wo]` patches; padding reads as zero.
pub fn im2col(image: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let (oh, ow) = (g.out_height(), g.out_width());
    let ncols = oh * ow;
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                let (lo, hi) = valid_outputs(kx, g.width, ow, g);
                for oy in 0..oh {
                    let out = &mut dst[oy * ow..(oy + 1) * ow];
                    let y = (oy * g.stride + ky) as isize - g.pad as isize;
                    if y < 0 || y as usize >= g.height || lo >= hi {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &image[(c * g.height + y as usize) * g.width..][..g.width];
                    out[..lo].fill(0.0);
                    out[hi..].fill(0.0);
                    for (ox, o) in out[lo..hi].iter_mut().enumerate() {
                        *o = src[(ox + lo) * g.stride + kx - g.pad];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
pub fn col2im_acc(cols: &[f64], g: &ConvGeometry, image: &mut [f64]) {
    let (oh, ow) = (g.out_height(), g.out_width());
    let ncols = oh * ow;
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..oh {
                    let y = (oy * g.stride + ky) as isize - g.pad as isize;
                    if y < 0 || y as usize >= g.height {
                        continue;
                    }
                    for ox in 0..ow {
                        let x = (ox * g.stride + kx) as isize - g.pad as isize;
                        if x < 0 || x as usize >= g.width {
                            continue;
                        }
                        image[(c * g.height + y as usize) * g.width + x as usize] +=
                            src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_products_agree_with_plain() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut ab = [0.0; 4];
        matmul_acc(&a, &b, &mut ab, 2, 3, 2);
        assert_eq!(ab, [58.0, 64.0, 139.0, 154.0]);

        // bᵀ as a 2x3 row-major matrix
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut abt = [0.0; 4];
        matmul_nt_acc(&a, &bt, &mut abt, 2, 3, 2);
        assert_eq!(abt, ab);

        // aᵀ stored 3x2, so (aᵀ)ᵀ·b == a·b
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut atb = [0.0; 4];
        matmul_tn_acc(&at, &b, &mut atb, 3, 2, 2);
        assert_eq!(atb, ab);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry {
            channels: 2,
            height: 5,
            width: 4,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let image: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let probe: Vec<f64> = (0..g.col_rows() * g.col_cols())
            .map(|i| (i as f64 * 0.11).cos())
            .collect();
        let mut cols = vec![0.0; probe.len()];
        im2col(&image, &g, &mut cols);
        let mut back = vec![0.0; image.len()];
        col2im_acc(&probe, &g, &mut back);
        // <im2col(x), y> == <x, col2im(y)>
        let lhs = dot(&cols, &probe);
        let rhs = dot(&image, &back);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
