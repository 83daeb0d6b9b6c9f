use num_traits::Float;

use super::config::score_scale;
use super::NumericMode;
use crate::error::{Error, Result};

/// Result of the fused row kernel.
///
/// The softmax denominator is `row_sum * exp(max_score)`. In
/// [`NumericMode::Raw`] `max_score` is `0` so `row_sum` is literally
/// `sum_l exp(S_il)`; in [`NumericMode::Stabilized`] `max_score` is the row
/// maximum and `row_sum` is relative to it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRow {
    pub z: Vec<f64>,
    pub row_sum: f64,
    pub max_score: f64,
}

/// One query row against a set of `(K_j, V_j)` pairs, numerator accumulated
/// per pair and divided by the row sum once after the sweep.
pub fn fused_row_attention(
    q: &[f64],
    k_rows: &[&[f64]],
    v_rows: &[&[f64]],
    mode: NumericMode,
    scale_scores: bool,
) -> Result<FusedRow> {
    if k_rows.len() != v_rows.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} K rows vs {} V rows",
            k_rows.len(),
            v_rows.len()
        )));
    }
    if k_rows.is_empty() {
        return Err(Error::invalid("fused row needs at least one (K, V) pair"));
    }
    let h = q.len();
    if k_rows.iter().chain(v_rows).any(|r| r.len() != h) {
        return Err(Error::DimensionMismatch(format!("K/V rows must have length {h}")));
    }
    let scale = score_scale(h, scale_scores);
    let pairs = k_rows.iter().copied().zip(v_rows.iter().copied());
    let (z, row_sum, max_score) = fused_row_kernel::<f64, _>(q, pairs, mode, scale)?;
    Ok(FusedRow { z, row_sum, max_score })
}

/// Generic kernel body shared by the streaming dataflow. Inputs are read as
/// `f64` and converted element-wise to `T` before any arithmetic.
pub fn fused_row_kernel<'a, T, I>(q: &[f64], pairs: I, mode: NumericMode, scale: f64) -> Result<(Vec<f64>, f64, f64)>
where
    T: Float,
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let cast = |x: f64| T::from(x).unwrap_or_else(T::nan);
    let q_t: Vec<T> = q.iter().map(|&x| cast(x)).collect();
    let scale_t = cast(scale);
    let mut acc = vec![T::zero(); q.len()];
    let mut row_sum = T::zero();
    let mut running_max = T::neg_infinity();
    let mut count = 0usize;

    for (k, v) in pairs {
        count += 1;
        let s = q_t
            .iter()
            .zip(k)
            .fold(T::zero(), |a, (&qd, &kd)| a + qd * cast(kd))
            * scale_t;
        if !s.is_finite() {
            return Err(overflow(mode, "score is not finite"));
        }
        let p = match mode {
            NumericMode::Raw => s.exp(),
            NumericMode::Stabilized => {
                if s > running_max {
                    let c = (running_max - s).exp();
                    row_sum = row_sum * c;
                    acc.iter_mut().for_each(|a| *a = *a * c);
                    running_max = s;
                }
                (s - running_max).exp()
            }
        };
        row_sum = row_sum + p;
        for (a, &vd) in acc.iter_mut().zip(v) {
            *a = *a + p * cast(vd);
        }
    }

    if count == 0 {
        return Err(Error::invalid("fused row needs at least one (K, V) pair"));
    }
    if !(row_sum.is_finite() && row_sum > T::zero()) {
        return Err(overflow(mode, "row sum of exponentials is zero or not finite"));
    }
    let z: Vec<f64> = acc
        .iter()
        .map(|&a| (a / row_sum).to_f64().unwrap_or(f64::NAN))
        .collect();
    if z.iter().any(|x| !x.is_finite()) {
        return Err(overflow(mode, "normalised output is not finite"));
    }
    let max_score = match mode {
        NumericMode::Raw => 0.0,
        NumericMode::Stabilized => running_max.to_f64().unwrap_or(f64::NAN),
    };
    Ok((z, row_sum.to_f64().unwrap_or(f64::NAN), max_score))
}

fn overflow(mode: NumericMode, detail: &str) -> Error {
    Error::NumericOverflow {
        mode: mode.name(),
        row: None,
        detail: detail.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{masked_dense_attention, DenseMatrix};
    use crate::patterns::AttendSet;
    use crate::rng::uniform_matrix;

    const MODES: [NumericMode; 2] = [NumericMode::Raw, NumericMode::Stabilized];

    #[test]
    fn single_pair() {
        let q = [0.5, -1.0, 0.25];
        let k = [1.0, 0.5, 2.0];
        let v = [3.0, -4.0, 0.125];
        let s: f64 = 0.5 - 0.5 + 0.5;
        let raw = fused_row_attention(&q, &[&k], &[&v], NumericMode::Raw, false).unwrap();
        assert_eq!(raw.z, v.to_vec());
        assert!((raw.row_sum - s.exp()).abs() < 1e-15);
        let stable = fused_row_attention(&q, &[&k], &[&v], NumericMode::Stabilized, false).unwrap();
        assert_eq!(stable.z, v.to_vec());
        assert!((stable.row_sum * stable.max_score.exp() - s.exp()).abs() < 1e-15);
    }

    #[test]
    fn duplicate_pairs_collapse() {
        let q = [0.3, 0.7];
        let k = [-0.2, 0.9];
        let v = [1.5, -2.5];
        for mode in MODES {
            let r = fused_row_attention(&q, &[&k, &k], &[&v, &v], mode, true).unwrap();
            for (a, b) in r.z.iter().zip(v) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_masked_dense() {
        let q = uniform_matrix(1, 4, 3, 1, 1.0);
        let k = uniform_matrix(5, 4, 3, 2, 1.0);
        let v = uniform_matrix(5, 4, 3, 3, 1.0);
        // Oracle: masked dense with query row broadcast over 5 rows, row 0 attends all.
        let q5 = DenseMatrix::from_rows(&vec![q.row(0).to_vec(); 5]).unwrap();
        let sets: Vec<_> = (0..5).map(|i| AttendSet::window_only(i, (0..5).collect())).collect();
        let expect = masked_dense_attention(&q5, &k, &v, &sets, false).unwrap();
        let ks: Vec<&[f64]> = k.iter_rows().collect();
        let vs: Vec<&[f64]> = v.iter_rows().collect();
        for mode in MODES {
            let r = fused_row_attention(q.row(0), &ks, &vs, mode, false).unwrap();
            for (a, b) in r.z.iter().zip(expect.row(0)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn raw_overflow_is_reported() {
        let q = [30.0; 4];
        let k = [30.0; 4];
        let v = [1.0; 4];
        let err = fused_row_attention(&q, &[&k], &[&v], NumericMode::Raw, false).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { mode: "Raw", .. }));
        let ok = fused_row_attention(&q, &[&k], &[&v], NumericMode::Stabilized, false).unwrap();
        assert_eq!(ok.z, v.to_vec());
    }

    #[test]
    fn rejects_bad_shapes() {
        let q = [1.0, 2.0];
        assert!(fused_row_attention(&q, &[], &[], NumericMode::Stabilized, false).is_err());
        assert!(fused_row_attention(&q, &[&[1.0]], &[&[1.0, 2.0]], NumericMode::Stabilized, false).is_err());
        assert!(fused_row_attention(&q, &[&[1.0, 2.0]], &[], NumericMode::Stabilized, false).is_err());
    }

    #[test]
    fn single_precision_kernel_is_close() {
        let k = uniform_matrix(16, 8, 5, 2, 1.0);
        let v = uniform_matrix(16, 8, 5, 3, 1.0);
        let q = uniform_matrix(1, 8, 5, 1, 1.0);
        let pairs = || k.iter_rows().zip(v.iter_rows());
        let (z64, _, _) = fused_row_kernel::<f64, _>(q.row(0), pairs(), NumericMode::Stabilized, 1.0).unwrap();
        let (z32, _, _) = fused_row_kernel::<f32, _>(q.row(0), pairs(), NumericMode::Stabilized, 1.0).unwrap();
        for (a, b) in z32.iter().zip(&z64) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
