/// `ceil(fraction * n)`, at least 1, forgiving float noise in the product
/// (0.1 * 30 must give 3, not 4).
pub(crate) fn ceil_count(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    ((exact - 1e-9).ceil().max(1.0) as usize).min(n.max(1))
}

#[cfg(test)]
mod tests {
    use super::ceil_count;

    #[test]
    fn ceiling_rule() {
        assert_eq!(ceil_count(0.25, 101), 26);
        assert_eq!(ceil_count(0.25, 4), 1);
        assert_eq!(ceil_count(0.1, 30), 3);
        assert_eq!(ceil_count(0.05, 3), 1);
        assert_eq!(ceil_count(0.5, 7), 4);
        assert_eq!(ceil_count(1.0, 9), 9);
    }
}
