//! Orthonormal DCT-II basis matrices.

use std::f64::consts::PI;

/// `n x n` orthonormal DCT-II matrix, row `k` holding basis function `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBasis {
    n: usize,
    rows: Vec<f64>,
}

impl DctBasis {
    pub fn new(n: usize) -> Self {
        assert!(n > 0);
        let mut rows = vec![0.0; n * n];
        let scale0 = (1.0 / n as f64).sqrt();
        let scale = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let c = if k == 0 { scale0 } else { scale };
            for i in 0..n {
                rows[k * n + i] =
                    c * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        Self { n, rows }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.rows[k * self.n + i]
    }

    /// Forward transform of the leading `keep_r x keep_c` block of a 2-D
    /// signal `x` (`rows.n x cols.n`, row-major).
    pub fn forward_block(
        rows: &DctBasis,
        cols: &DctBasis,
        x: &[f64],
        keep_r: usize,
        keep_c: usize,
    ) -> Vec<f64> {
        let (h, w) = (rows.n, cols.n);
        debug_assert_eq!(x.len(), h * w);
        // tmp = D_r[:keep_r, :] * x      (keep_r x w)
        let mut tmp = vec![0.0; keep_r * w];
        for k in 0..keep_r {
            let out = &mut tmp[k * w..(k + 1) * w];
            for i in 0..h {
                let c = rows.at(k, i);
                let src = &x[i * w..(i + 1) * w];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += c * s;
                }
            }
        }
        // out = tmp * D_c[:keep_c, :]^T  (keep_r x keep_c)
        let mut out = vec![0.0; keep_r * keep_c];
        for k in 0..keep_r {
            let row = &tmp[k * w..(k + 1) * w];
            for l in 0..keep_c {
                let basis = &cols.rows[l * w..(l + 1) * w];
                out[k * keep_c + l] = row.iter().zip(basis).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Inverse transform of a `keep_r x keep_c` coefficient block, zero
    /// elsewhere, back to a full `rows.n x cols.n` signal.
    pub fn inverse_block(
        rows: &DctBasis,
        cols: &DctBasis,
        coeffs: &[f64],
        keep_r: usize,
        keep_c: usize,
    ) -> Vec<f64> {
        let (h, w) = (rows.n, cols.n);
        debug_assert_eq!(coeffs.len(), keep_r * keep_c);
        // tmp = C * D_c[:keep_c, :]      (keep_r x w)
        let mut tmp = vec![0.0; keep_r * w];
        for k in 0..keep_r {
            let out = &mut tmp[k * w..(k + 1) * w];
            for l in 0..keep_c {
                let c = coeffs[k * keep_c + l];
                if c == 0.0 {
                    continue;
                }
                let basis = &cols.rows[l * w..(l + 1) * w];
                for (o, b) in out.iter_mut().zip(basis) {
                    *o += c * b;
                }
            }
        }
        // x = D_r[:keep_r, :]^T * tmp    (h x w)
        let mut x = vec![0.0; h * w];
        for i in 0..h {
            let out = &mut x[i * w..(i + 1) * w];
            for k in 0..keep_r {
                let c = rows.at(k, i);
                let src = &tmp[k * w..(k + 1) * w];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += c * s;
                }
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        for n in [1, 2, 5, 8, 16] {
            let d = DctBasis::new(n);
            for a in 0..n {
                for b in 0..n {
                    let ip: f64 = (0..n).map(|i| d.at(a, i) * d.at(b, i)).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_block_round_trip() {
        let (r, c) = (DctBasis::new(4), DctBasis::new(6));
        let x: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let coeffs = DctBasis::forward_block(&r, &c, &x, 4, 6);
        let back = DctBasis::inverse_block(&r, &c, &coeffs, 4, 6);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
