//! Small integer helpers shared by the analyses.
//!
//! All phase arithmetic is signed; periods are strictly positive. The modulo
//! used for phase wrapping is Euclidean, i.e. the result is always in
//! `[0, m)` regardless of the sign of the operand.

/// Ceiling division for signed operands with a strictly positive divisor.
pub fn ceil_div(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    let q = a.div_euclid(b);
    if a.rem_euclid(b) != 0 {
        q + 1
    } else {
        q
    }
}

/// Euclidean modulo: result in `[0, m)` with `a ≡ result (mod m)`.
pub fn emod(a: i64, m: u64) -> u64 {
    debug_assert!(m > 0);
    a.rem_euclid(m as i64) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_div_signs() {
        assert_eq!(ceil_div(7, 2), 4);
        assert_eq!(ceil_div(6, 2), 3);
        assert_eq!(ceil_div(0, 5), 0);
        assert_eq!(ceil_div(-1, 5), 0);
        assert_eq!(ceil_div(-5, 5), -1);
        assert_eq!(ceil_div(-6, 5), -1);
        assert_eq!(ceil_div(1, 5), 1);
    }

    #[test]
    fn emod_wraps_negative_operands() {
        // (0 - 20) mod 50 = 30
        assert_eq!(emod(-20, 50), 30);
        assert_eq!(emod(20, 50), 20);
        assert_eq!(emod(-50, 50), 0);
        assert_eq!(emod(50, 50), 0);
        assert_eq!(emod(-35, 100), 65);
    }
}
