//! 3x3 dense helpers for the quadrature-variance linear model.

pub(crate) type Mat3 = [[f64; 3]; 3];

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when the system is numerically singular.
pub(crate) fn solve3(a: &Mat3, b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut r = *b;
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    Some(x)
}

pub(crate) fn inverse3(a: &Mat3) -> Option<Mat3> {
    let mut inv = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let col = solve3(a, &e)?;
        for i in 0..3 {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}
