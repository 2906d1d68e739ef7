use std::fmt::Write as _;

use super::CsrMatrix;

/// MatrixMarket coordinate/real/general text, one-based indices.
pub fn write_matrix_market(a: &CsrMatrix) -> String {
    let mut s = String::with_capacity(32 * a.nnz() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for i in 0..a.nrows() {
        for (j, v) in a.row(i) {
            let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::assemble;

    #[test]
    fn header_and_entries() {
        let a = assemble(2, 3, [(0, 0, 1.5), (1, 2, -2.0)]).unwrap();
        let text = write_matrix_market(&a);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "%%MatrixMarket matrix coordinate real general");
        assert_eq!(lines[1], "2 3 2");
        assert_eq!(lines[2], "1 1 1.5e0");
        assert_eq!(lines[3], "2 3 -2e0");
    }
}
