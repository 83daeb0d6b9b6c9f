use super::config::score_scale;
use super::{dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::patterns::AttendSet;

/// Max-subtracted softmax. Always stable, independent of [`super::NumericMode`].
pub fn softmax_row(row: &[f64]) -> Result<Vec<f64>> {
    if row.is_empty() {
        return Err(Error::invalid("softmax of an empty row"));
    }
    if row.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("softmax input must be finite"));
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub(crate) fn check_qkv(q: &DenseMatrix, k: &DenseMatrix, v: &DenseMatrix) -> Result<()> {
    if !q.same_shape(k) || !q.same_shape(v) {
        return Err(Error::DimensionMismatch(format!(
            "Q {}x{}, K {}x{}, V {}x{}",
            q.rows(),
            q.cols(),
            k.rows(),
            k.cols(),
            v.rows(),
            v.cols()
        )));
    }
    if q.rows() == 0 || q.cols() == 0 {
        return Err(Error::invalid("empty Q/K/V"));
    }
    Ok(())
}

/// Unfused reference: materialise `S = Q K^T s`, `S' = softmax(S)` row-wise,
/// then `Z = S' V`.
pub fn dense_attention(q: &DenseMatrix, k: &DenseMatrix, v: &DenseMatrix, scale_scores: bool) -> Result<DenseMatrix> {
    check_qkv(q, k, v)?;
    let (n, h) = (q.rows(), q.cols());
    let scale = score_scale(h, scale_scores);

    let mut s = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let qi = q.row(i);
        for (j, out) in s.row_mut(i).iter_mut().enumerate() {
            *out = dot(qi, k.row(j)) * scale;
        }
    }

    let mut s_prime = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let probs = softmax_row(s.row(i))?;
        s_prime.row_mut(i).copy_from_slice(&probs);
    }

    let mut z = DenseMatrix::zeros(n, h);
    for i in 0..n {
        let zi = z.row_mut(i);
        for j in 0..n {
            let p = s_prime.get(i, j);
            for (acc, vj) in zi.iter_mut().zip(v.row(j)) {
                *acc += p * vj;
            }
        }
    }
    Ok(z)
}

/// Dense attention restricted row-by-row to `sets[i]`: softmax only over the
/// attended columns, every other column contributes nothing.
pub fn masked_dense_attention(
    q: &DenseMatrix,
    k: &DenseMatrix,
    v: &DenseMatrix,
    sets: &[AttendSet],
    scale_scores: bool,
) -> Result<DenseMatrix> {
    check_qkv(q, k, v)?;
    let (n, h) = (q.rows(), q.cols());
    if sets.len() != n {
        return Err(Error::DimensionMismatch(format!("{} attend sets for {n} rows", sets.len())));
    }
    let scale = score_scale(h, scale_scores);
    let mut z = DenseMatrix::zeros(n, h);
    for (i, set) in sets.iter().enumerate() {
        if set.row != i {
            return Err(Error::invalid(format!("attend set {i} is labelled row {}", set.row)));
        }
        if set.is_empty() {
            return Err(Error::invalid(format!("row {i} has an empty attend set")));
        }
        if let Some(&j) = set.cols.iter().find(|&&j| j >= n) {
            return Err(Error::invalid(format!("row {i} attends column {j} >= {n}")));
        }
        let scores: Vec<f64> = set.cols.iter().map(|&j| dot(q.row(i), k.row(j)) * scale).collect();
        let probs = softmax_row(&scores)?;
        let zi = z.row_mut(i);
        for (&j, p) in set.cols.iter().zip(probs) {
            for (acc, vj) in zi.iter_mut().zip(v.row(j)) {
                *acc += p * vj;
            }
        }
    }
    Ok(z)
}
