//! Small dense helpers on row-major square matrices stored in slices.

/// In-place lower Cholesky factorization of a row-major p×p SPD matrix.
/// The strict upper triangle is zeroed. Returns false if a pivot is not
/// strictly positive.
pub fn cholesky_in_place(a: &mut [f64], p: usize) -> bool {
    for j in 0..p {
        let mut diag = a[j * p + j];
        for k in 0..j {
            diag -= a[j * p + k] * a[j * p + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * p + j] = ljj;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / ljj;
        }
        for k in (j + 1)..p {
            a[j * p + k] = 0.0;
        }
    }
    true
}

/// log det of an SPD matrix via Cholesky; `None` when not positive definite.
pub fn log_det_spd(a: &[f64], p: usize, scratch: &mut Vec<f64>) -> Option<f64> {
    scratch.clear();
    scratch.extend_from_slice(a);
    if !cholesky_in_place(scratch, p) {
        return None;
    }
    Some(2.0 * (0..p).map(|i| scratch[i * p + i].ln()).sum::<f64>())
}

/// Solves L y = b in place for lower-triangular row-major L.
#[inline]
pub fn forward_solve(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let row = &l[i * p..i * p + i];
        let mut s = b[i];
        for (k, lik) in row.iter().enumerate() {
            s -= lik * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

/// Σ a_i b_i over four interleaved partial sums, so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Σ w_i (a_i − ma)(b_i − mb), laid out like `dot`.
#[inline]
pub fn centered_cross(w: &[f64], a: &[f64], ma: f64, b: &[f64], mb: f64) -> f64 {
    let n = w.len().min(a.len()).min(b.len());
    let (w, a, b) = (&w[..n], &a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (cw, ca, cb) = (w.chunks_exact(4), a.chunks_exact(4), b.chunks_exact(4));
    let (rw, ra, rb) = (cw.remainder(), ca.remainder(), cb.remainder());
    for ((z, x), y) in cw.zip(ca).zip(cb) {
        for l in 0..4 {
            acc[l] += z[l] * (x[l] - ma) * (y[l] - mb);
        }
    }
    let tail: f64 = rw.iter().zip(ra).zip(rb).map(|((z, x), y)| z * (x - ma) * (y - mb)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Σ a_i, laid out like `dot`.
#[inline]
pub fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let ra = ca.remainder();
    for x in ca {
        for l in 0..4 {
            acc[l] += x[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + ra.iter().sum::<f64>()
}

/// Transposes a row-major `rows`×`cols` buffer.
pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for (i, row) in a.chunks_exact(cols).enumerate().take(rows) {
        for (j, v) in row.iter().enumerate() {
            out[j * rows + i] = *v;
        }
    }
    out
}

/// Squared ratio of smallest to largest Cholesky diagonal entry: a cheap
/// reciprocal-condition estimate.
pub fn chol_rcond(l: &[f64], p: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..p {
        let v = l[i * p + i].abs();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == 0.0 {
        0.0
    } else {
        (lo / hi).powi(2)
    }
}

/// Inverts an SPD matrix given its lower Cholesky factor.
pub fn spd_inverse_from_chol(l: &[f64], p: usize) -> Vec<f64> {
    let mut inv = vec![0.0; p * p];
    let mut col = vec![0.0; p];
    for j in 0..p {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        forward_solve(l, p, &mut col);
        // back substitution with L^T
        for i in (0..p).rev() {
            let mut s = col[i];
            for k in (i + 1)..p {
                s -= l[k * p + i] * col[k];
            }
            col[i] = s / l[i * p + i];
        }
        for i in 0..p {
            inv[i * p + j] = col[i];
        }
    }
    inv
}
