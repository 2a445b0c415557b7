//! Order statistics for the report summaries.

/// Quantile of sorted data by linear interpolation between order statistics
/// (`x[k] + (h - k)(x[k+1] - x[k])` with `h = (m - 1) p`), the common
/// "type 7" definition.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty set");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let k = h.floor() as usize;
    if k + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[k] + (h - k as f64) * (sorted[k + 1] - sorted[k])
}

/// `(q1, median, q3)` of a nonempty set.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (
        quantile_sorted(&v, 0.25),
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.75),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_and_even_medians() {
        assert_eq!(quartiles(&[3.0, 1.0, 2.0]).1, 2.0);
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0]).1, 2.5);
    }

    #[test]
    fn interpolated_quartiles() {
        let (q1, _, q3) = quartiles(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((q1, q3), (1.75, 3.25));
        assert_eq!(quartiles(&[7.0; 5]), (7.0, 7.0, 7.0));
        assert_eq!(quartiles(&[5.0]), (5.0, 5.0, 5.0));
    }
}
