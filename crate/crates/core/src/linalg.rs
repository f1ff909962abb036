use nalgebra::DMatrix;

/// `(P + Pᵀ) / 2`.
pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = avg;
            p[(j, i)] = avg;
        }
    }
}

pub(crate) fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && m.row_iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, v)| i == j || *v == 0.0))
}
