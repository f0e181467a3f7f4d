// Small dense weighted least squares by Householder QR.
//
// Columns are scaled to unit norm before factorization so the condition
// estimate reflects collinearity rather than units.

/// Fits with a larger 1-norm condition estimate of the equilibrated R factor
/// are rejected as rank deficient.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone)]
pub(crate) struct LstsqSolution {
    pub coef: Vec<f64>,
    pub condition: f64,
    /// (XᵀWX)⁻¹ in the original column scaling.
    pub inv_normal: Vec<Vec<f64>>,
}

/// Minimizes Σ wᵢ (yᵢ − Σⱼ X[j][i] βⱼ)². `columns[j][i]` is row i of
/// design column j. Returns the condition estimate as the error when the
/// design is numerically rank deficient.
pub(crate) fn weighted_lstsq(
    columns: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
) -> Result<LstsqSolution, f64> {
    let p = columns.len();
    let m = y.len();
    debug_assert!(columns.iter().all(|c| c.len() == m) && w.len() == m);

    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut a: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| c.iter().zip(&sw).map(|(x, s)| x * s).collect())
        .collect();
    let mut b: Vec<f64> = y.iter().zip(&sw).map(|(v, s)| v * s).collect();

    let mut scale = vec![0.0; p];
    for (j, col) in a.iter_mut().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(f64::INFINITY);
        }
        col.iter_mut().for_each(|v| *v /= norm);
        scale[j] = norm;
    }

    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k) {
            reflect(&v, vnorm2, &mut col[k..]);
        }
        reflect(&v, vnorm2, &mut b[k..]);
    }

    // r[i][j] = R_ij for i <= j
    let r: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i <= j { a[j][i] } else { 0.0 }).collect())
        .collect();
    if (0..p).any(|i| r[i][i] == 0.0) {
        return Err(f64::INFINITY);
    }
    let r_inv = upper_inverse(&r);
    let condition = one_norm(&r) * one_norm(&r_inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(condition);
    }

    let mut z = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r[i][j] * z[j]).sum();
        z[i] = (b[i] - s) / r[i][i];
    }
    let coef = z.iter().zip(&scale).map(|(z, s)| z / s).collect();

    let mut inv_normal = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            let s: f64 = (0..p).map(|k| r_inv[i][k] * r_inv[j][k]).sum();
            inv_normal[i][j] = s / (scale[i] * scale[j]);
        }
    }
    Ok(LstsqSolution {
        coef,
        condition,
        inv_normal,
    })
}

fn reflect(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    x.iter_mut().zip(v).for_each(|(xi, vi)| *xi -= f * vi);
}

fn upper_inverse(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = r.len();
    let mut inv = vec![vec![0.0; p]; p];
    for j in 0..p {
        inv[j][j] = 1.0 / r[j][j];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r[i][k] * inv[k][j]).sum();
            inv[i][j] = -s / r[i][i];
        }
    }
    inv
}

fn one_norm(m: &[Vec<f64>]) -> f64 {
    let p = m.len();
    (0..p)
        .map(|j| (0..p).map(|i| m[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let cols = vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]];
        let sol = weighted_lstsq(&cols, &[2.0, 5.0, 8.0], &[1.0; 3]).unwrap();
        assert!((sol.coef[0] - 2.0).abs() < 1e-12);
        assert!((sol.coef[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_rejected() {
        let cols = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]];
        assert!(weighted_lstsq(&cols, &[1.0, 2.0, 3.0], &[1.0; 3]).is_err());
        let zero = vec![vec![1.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(
            weighted_lstsq(&zero, &[1.0, 1.0], &[1.0; 2]).unwrap_err(),
            f64::INFINITY
        );
    }

    #[test]
    fn weights_match_row_duplication() {
        // Weight 2 on a row equals listing that row twice.
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.1, 0.9, 2.2, 2.8];
        let weighted =
            weighted_lstsq(&[vec![1.0; 4], x.to_vec()], &y, &[1.0, 2.0, 1.0, 1.0]).unwrap();
        let dup = weighted_lstsq(
            &[vec![1.0; 5], vec![0.0, 1.0, 1.0, 2.0, 3.0]],
            &[0.1, 0.9, 0.9, 2.2, 2.8],
            &[1.0; 5],
        )
        .unwrap();
        for (a, b) in weighted.coef.iter().zip(&dup.coef) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_normal_matrix() {
        let cols = vec![vec![1.0, 1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0, 3.0]];
        let sol = weighted_lstsq(&cols, &[0.0, 1.0, 2.0, 3.0], &[1.0; 4]).unwrap();
        // XᵀX = [[4, 6], [6, 14]], inverse = [[14, -6], [-6, 4]] / 20
        let expect = [[0.7, -0.3], [-0.3, 0.2]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((sol.inv_normal[i][j] - expect[i][j]).abs() < 1e-12);
            }
        }
    }
}
