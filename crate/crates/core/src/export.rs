//! Text formatting shared by every CSV writer.

/// Nine significant digits in scientific notation. Negative zero prints as zero.
pub fn sig9(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.8e}")
}

/// Writes a header and rows of equal length as CSV text.
pub fn columns_csv(header: &[&str], columns: &[&[f64]]) -> String {
    assert_eq!(header.len(), columns.len());
    let rows = columns.first().map_or(0, |c| c.len());
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..rows {
        for (k, col) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&sig9(col[r]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig9(-0.0), "0.00000000e0");
        assert_eq!(sig9(-4.5081234567e-3), "-4.50812346e-3");
        assert_eq!(sig9(123456789.0), "1.23456789e8");
    }

    #[test]
    fn csv_shape() {
        let csv = columns_csv(&["a", "b"], &[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("a,b\n1.00000000e0,3.00000000e0\n"));
    }
}
