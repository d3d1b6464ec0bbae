//! CSV writers for trajectories, kernels and scan results.
//!
//! Numbers are written with 17 significant digits so that fixtures compare
//! byte for byte; missing values become empty cells.

use std::io::{self, Write};

pub const DOUBLE_WELL_HEADER: &str = "l,Lambda_over_Lambda0,rho_bar,inv_v_hat,alpha,eps_C,two_level_ratio";
pub const COSINE_HEADER: &str = "l,tau,eps1,eps2,eps3,max_abs_eps,phase_flag";
pub const KERNEL_HEADER: &str = "p,K_finite,K_continuum,rel_dev";
pub const PHASE_DIAGRAM_HEADER: &str = "alpha,critical_ej_over_ec,bracket_lo,bracket_hi,status";
pub const EXPONENT_HEADER: &str = "gamma,chi,log_abs_dgamma,log_chi";

/// Formats one cell; `None` and non-finite values give an empty string.
pub fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.16e}"),
        _ => String::new(),
    }
}

pub fn write_row<W: Write>(w: &mut W, row: &[Option<f64>]) -> io::Result<()> {
    let line: Vec<String> = row.iter().map(|&v| cell(v)).collect();
    writeln!(w, "{}", line.join(","))
}

/// Writes `header` followed by numeric rows.
pub fn write_table<W: Write>(w: &mut W, header: &str, rows: &[Vec<Option<f64>>]) -> io::Result<()> {
    writeln!(w, "{header}")?;
    rows.iter().try_for_each(|r| write_row(w, r))
}

/// Rows whose last column is free text, such as a status.
pub fn write_table_with_status<W: Write>(w: &mut W, header: &str, rows: &[(Vec<Option<f64>>, String)]) -> io::Result<()> {
    writeln!(w, "{header}")?;
    for (nums, status) in rows {
        let mut line: Vec<String> = nums.iter().map(|&v| cell(v)).collect();
        line.push(status.replace([',', '\n'], ";"));
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_keep_full_precision() {
        let s = cell(Some(0.1));
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(cell(None), "");
        assert_eq!(cell(Some(f64::NAN)), "");
    }

    #[test]
    fn table_layout() {
        let mut buf = Vec::new();
        write_table(&mut buf, "a,b", &[vec![Some(1.0), None]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1.0000000000000000e0,\n");
    }

    #[test]
    fn status_column_is_sanitized() {
        let mut buf = Vec::new();
        write_table_with_status(&mut buf, "x,status", &[(vec![Some(2.0)], "bad, really".into())]).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("2.0000000000000000e0,bad; really\n"));
    }
}
