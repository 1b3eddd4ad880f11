//! Dense least squares through Householder QR.

/// Columns whose pivot fell below the rank tolerance.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RankDeficient {
    pub dependent: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LstsqSolution {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
}

/// Relative rank tolerance, scaled by the largest column norm of the
/// column-equilibrated matrix.
pub(crate) const RANK_RTOL: f64 = 1e-10;

fn norm(x: &[f64]) -> f64 {
    // scaled to avoid overflow on columns like ṗ³
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// Minimizes `‖y − A c‖₂` for `A` given as columns. Columns are scaled to unit
/// norm first, which leaves the solution unchanged; library columns such as
/// ṗ³ and v differ by many orders of magnitude. Unpivoted Householder QR then
/// reports a column as dependent on the columns before it when its diagonal
/// entry of R falls below `RANK_RTOL` (the largest scaled column norm is 1).
pub(crate) fn lstsq(columns: &[&[f64]], y: &[f64]) -> Result<LstsqSolution, RankDeficient> {
    let k = columns.len();
    let m = y.len();
    if k == 0 {
        return Ok(LstsqSolution {
            coefficients: vec![],
            residual_norm: norm(y),
        });
    }
    if m < k {
        return Err(RankDeficient {
            dependent: (m..k).collect(),
        });
    }
    let norms: Vec<f64> = columns.iter().map(|c| norm(c)).collect();
    let zero: Vec<usize> = (0..k).filter(|&j| norms[j] == 0.0).collect();
    if !zero.is_empty() {
        return Err(RankDeficient { dependent: zero });
    }
    let tol = RANK_RTOL;
    let mut a: Vec<Vec<f64>> = columns
        .iter()
        .zip(&norms)
        .map(|(c, n)| c.iter().map(|x| x / n).collect())
        .collect();
    let mut qty = y.to_vec();
    let mut diag = vec![0.0; k];
    let mut dependent = Vec::new();

    for j in 0..k {
        let alpha = norm(&a[j][j..]);
        if alpha <= tol {
            dependent.push(j);
            continue;
        }
        let alpha = if a[j][j] > 0.0 { -alpha } else { alpha };
        // v = x − alpha e₁, stored in place of column j
        a[j][j] -= alpha;
        let vnorm2: f64 = a[j][j..].iter().map(|v| v * v).sum();
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let (head, tail) = a.split_at_mut(j + 1);
        let v = &head[j][j..];
        for col in tail.iter_mut() {
            let s = 2.0 * v.iter().zip(&col[j..]).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
            col[j..].iter_mut().zip(v).for_each(|(c, vi)| *c -= s * vi);
        }
        let s = 2.0 * v.iter().zip(&qty[j..]).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
        qty[j..].iter_mut().zip(v).for_each(|(c, vi)| *c -= s * vi);
    }
    if !dependent.is_empty() {
        return Err(RankDeficient { dependent });
    }

    // back substitution on R c = Qᵀ y
    let mut c = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = qty[i];
        for j in i + 1..k {
            s -= a[j][i] * c[j];
        }
        c[i] = s / diag[i];
    }
    c.iter_mut().zip(&norms).for_each(|(ci, n)| *ci /= n);
    let residual: Vec<f64> = (0..m)
        .map(|i| y[i] - columns.iter().zip(&c).map(|(col, cj)| col[i] * cj).sum::<f64>())
        .collect();
    Ok(LstsqSolution {
        residual_norm: norm(&residual),
        coefficients: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Normal-equation oracle for small well-conditioned problems.
    fn normal_equations(cols: &[&[f64]], y: &[f64]) -> Vec<f64> {
        let k = cols.len();
        let mut g = vec![vec![0.0; k + 1]; k];
        for i in 0..k {
            for j in 0..k {
                g[i][j] = cols[i].iter().zip(cols[j]).map(|(a, b)| a * b).sum();
            }
            g[i][k] = cols[i].iter().zip(y).map(|(a, b)| a * b).sum();
        }
        // Gauss-Jordan with partial pivoting
        for c in 0..k {
            let piv = (c..k).max_by(|&a, &b| g[a][c].abs().total_cmp(&g[b][c].abs())).unwrap();
            g.swap(c, piv);
            let pivot = g[c].clone();
            for (r, row) in g.iter_mut().enumerate() {
                if r != c {
                    let f = row[c] / pivot[c];
                    for (x, p) in row.iter_mut().zip(&pivot).skip(c) {
                        *x -= f * p;
                    }
                }
            }
        }
        (0..k).map(|i| g[i][k] / g[i][i]).collect()
    }

    #[test]
    fn identity_system() {
        let e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let cols: Vec<&[f64]> = e.iter().map(|c| c.as_slice()).collect();
        let sol = lstsq(&cols, &[3.0, -1.5, 2.0]).unwrap();
        for (a, b) in sol.coefficients.iter().zip([3.0, -1.5, 2.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(sol.residual_norm < 1e-14);
    }

    #[test]
    fn line_fit_matches_oracle() {
        let c0 = [1.0, 1.0, 1.0];
        let c1 = [0.0, 1.0, 2.0];
        let y = [1.0, 2.0, 3.0];
        let sol = lstsq(&[&c0, &c1], &y).unwrap();
        let oracle = normal_equations(&[&c0, &c1], &y);
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-14);
        assert!((sol.coefficients[1] - 1.0).abs() < 1e-14);
        for (a, b) in sol.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(sol.residual_norm < 1e-14);
    }

    #[test]
    fn overdetermined_matches_oracle() {
        let c0: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
        let c1: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).cos()).collect();
        let c2: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let y: Vec<f64> = (0..20).map(|i| ((i * i) as f64 * 0.01).sin()).collect();
        let cols = [c0.as_slice(), c1.as_slice(), c2.as_slice()];
        let sol = lstsq(&cols, &y).unwrap();
        let oracle = normal_equations(&cols, &y);
        for (a, b) in sol.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn orthogonal_target() {
        let c0 = [1.0, 0.0, 0.0, 0.0];
        let c1 = [0.0, 1.0, 0.0, 0.0];
        let y = [0.0, 0.0, 3.0, 4.0];
        let sol = lstsq(&[&c0, &c1], &y).unwrap();
        assert_eq!(sol.coefficients, vec![0.0, 0.0]);
        assert!((sol.residual_norm - 5.0).abs() < 1e-14);
    }

    #[test]
    fn dependent_columns_reported() {
        let c0 = [1.0, 2.0, 3.0, 4.0];
        let c1 = [2.0, 4.0, 6.0, 8.0];
        let c2 = [1.0, 0.0, 1.0, 0.0];
        let err = lstsq(&[&c0, &c2, &c1], &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert_eq!(err.dependent, vec![2]);
        let zero = [0.0; 4];
        let err = lstsq(&[&zero, &c0], &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert_eq!(err.dependent, vec![0]);
        let err = lstsq(&[&c0[..1], &c1[..1]], &[1.0]).unwrap_err();
        assert_eq!(err.dependent, vec![1]);
    }

    #[test]
    fn wildly_scaled_columns_stay_independent() {
        // norms 1e12 apart, like ṗ³ next to v
        let big: Vec<f64> = (0..30).map(|i| 1e12 * (i as f64 * 0.4).sin()).collect();
        let small: Vec<f64> = (0..30).map(|i| (i as f64 * 0.9).cos()).collect();
        let y: Vec<f64> = big.iter().zip(&small).map(|(b, s)| 2e-12 * b + 3.0 * s).collect();
        let sol = lstsq(&[&big, &small], &y).unwrap();
        assert!((sol.coefficients[0] / 2e-12 - 1.0).abs() < 1e-12);
        assert!((sol.coefficients[1] / 3.0 - 1.0).abs() < 1e-12);
    }
}
