//! Numeric formatting for machine-readable output.

/// Rounds to 10 significant decimal digits.
pub fn sig10(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.9e}").parse().unwrap_or(x)
}

/// Shortest decimal text of [`sig10`]`(x)`.
pub fn fmt_num(x: f64) -> String {
    let r = sig10(x);
    if r == 0.0 {
        // no "-0"
        return "0".to_string();
    }
    r.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_num(-2.0 / 3.0), "-0.6666666667");
        assert_eq!(fmt_num(123456789012.0), "123456789000");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(sig10(1.23456789012e-7), 1.234567890e-7);
    }
}
