//! Small dense-vector helpers and a cyclic Jacobi eigensolver.
//!
//! Parameter dimensions are small (tens at most), so plain slices are used
//! throughout instead of a matrix library.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `out += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v *= alpha;
    }
}

/// Rescales `x` in place so that its norm is at most `radius`.
pub fn clip_norm(x: &mut [f64], radius: f64) {
    let n = norm(x);
    if n > radius {
        scale(radius / n, x);
    }
}

/// Eigenvalues of a symmetric `d x d` matrix stored row-major, by cyclic
/// Jacobi rotations. Sweeps stop once the off-diagonal Frobenius mass falls
/// below `tol` (relative to the matrix norm) or after a fixed sweep budget.
/// Returned in ascending order.
pub fn symmetric_eigenvalues(matrix: &[f64], d: usize, tol: f64) -> Vec<f64> {
    assert_eq!(matrix.len(), d * d, "matrix must be d x d");
    let mut a = matrix.to_vec();
    let total: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = tol * total.max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|p| (0..d).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * d + q] * a[p * d + q])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eig: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}
