//! CSV helpers shared by the producing modules.

use std::io::{self, Write};

/// Seventeen significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_row(out: &mut impl Write, cells: &[f64]) -> io::Result<()> {
    let line: Vec<String> = cells.iter().map(|v| fmt_f64(*v)).collect();
    writeln!(out, "{}", line.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        let mut buf = Vec::new();
        write_row(&mut buf, &[0.5, -1.0]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "5.0000000000000000e-1,-1.0000000000000000e0\n"
        );
    }
}
