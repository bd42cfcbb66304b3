//! Eigenvalues of small dense symmetric matrices.

use crate::model::SquareMatrix;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix in ascending order.
///
/// Sizes up to 2 use the closed form; larger matrices use cyclic Jacobi
/// rotations, which converge quadratically for the sizes met here.
/// Only the upper triangle is read.
pub fn symmetric_eigenvalues(a: &SquareMatrix) -> Vec<f64> {
    let n = a.size();
    let mut out = match n {
        0 => Vec::new(),
        1 => vec![a.get(0, 0)],
        2 => {
            let (p, q, r) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
            let mid = 0.5 * (p + r);
            let rad = (0.5 * (p - r)).hypot(q);
            vec![mid - rad, mid + rad]
        }
        _ => jacobi(a),
    };
    out.sort_by(f64::total_cmp);
    out
}

pub fn min_eigenvalue(a: &SquareMatrix) -> f64 {
    symmetric_eigenvalues(a).first().copied().unwrap_or(0.0)
}

fn jacobi(a: &SquareMatrix) -> Vec<f64> {
    let n = a.size();
    let mut m: Vec<f64> = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            m[i * n + j] = a.get(i, j);
            m[j * n + i] = a.get(i, j);
        }
    }
    let scale = m
        .iter()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_two_by_two() {
        let g = SquareMatrix::from_rows(vec![vec![3.6, 2.6], vec![2.6, 0.2]]).unwrap();
        let ev = symmetric_eigenvalues(&g);
        assert!((ev[0] - (1.9 - 9.65f64.sqrt())).abs() < 1e-14);
        assert!((ev[1] - (1.9 + 9.65f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // Periodic second-difference matrix of size 5: eigenvalues 2 - 2cos(2 pi k / 5).
        let n = 5;
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            2.0
                        } else if (i + 1) % n == j || (j + 1) % n == i {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let a = SquareMatrix::from_rows(rows).unwrap();
        let mut expected: Vec<f64> = (0..n)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in symmetric_eigenvalues(&a).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }
}
