//! Run artifacts: convergence CSV, nodal field dump and JSON summary.

use std::io::{self, Write};

use serde::Serialize;

use multibec::operators::{col, Discretization, Frame};
use multibec::optim::{ConvergenceReport, IterationRecord, Termination};

/// `printf("%.16e")`: sixteen fractional digits and a signed exponent of at
/// least two digits.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let s = format!("{x:.16e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn csv_header(p: usize) -> String {
    let mut h = String::from("iter,energy,residual");
    for j in 1..=p {
        h.push_str(&format!(",lambda_{j}"));
    }
    h.push_str(",inner_matvecs,wall_ms");
    h
}

pub fn csv_row(r: &IterationRecord) -> String {
    let mut row = format!("{},{},{}", r.iter, sci(r.energy), sci(r.residual));
    for s in &r.sigma {
        row.push(',');
        row.push_str(&sci(*s));
    }
    row.push_str(&format!(",{},{}", r.inner_matvecs, sci(r.wall_ms)));
    row
}

pub fn write_csv<W: Write>(mut w: W, p: usize, records: &[IterationRecord]) -> io::Result<()> {
    writeln!(w, "{}", csv_header(p))?;
    for r in records {
        writeln!(w, "{}", csv_row(r))?;
    }
    Ok(())
}

/// One line per mesh node: coordinates, then the component values.
/// Eliminated Dirichlet nodes are written as zeros.
pub fn write_field<W: Write>(mut w: W, disc: &Discretization, phi: &Frame) -> io::Result<()> {
    let space = disc.space();
    let (d, p) = (space.dim(), phi.ncols());
    writeln!(
        w,
        "# dim={d} p={p} n={} h={}",
        space.n_nodes(),
        sci(space.h())
    )?;
    let full: Vec<Vec<f64>> = (0..p).map(|j| space.extend(col(phi, j))).collect();
    for i in 0..space.n_nodes() {
        let x = space.node_coords(i);
        let mut line: Vec<String> = x[..d].iter().map(|c| sci(*c)).collect();
        line.extend(full.iter().map(|c| sci(c[i])));
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: String,
    pub method: String,
    pub alternating: bool,
    pub dim: usize,
    pub n: usize,
    pub p: usize,
    pub h: f64,
    pub init_steps: usize,
    pub init_residual: f64,
    pub termination: Termination,
    pub converged: bool,
    pub iterations: usize,
    pub energy: f64,
    pub residual: f64,
    pub lambda: Vec<f64>,
    pub average_matvecs: f64,
    pub total_matvecs: usize,
    pub cpu_seconds: f64,
}

impl Summary {
    pub fn new(
        config: &str,
        disc: &Discretization,
        init: (usize, f64),
        report: &ConvergenceReport,
        seconds: f64,
    ) -> Self {
        let last = report.records.last();
        Self {
            config: config.to_string(),
            method: report.method.to_string(),
            alternating: report.alternating,
            dim: disc.space().dim(),
            n: disc.n(),
            p: disc.p(),
            h: disc.space().h(),
            init_steps: init.0,
            init_residual: init.1,
            termination: report.termination.clone(),
            converged: report.termination.converged(),
            iterations: report.iterations,
            energy: report.energy(),
            residual: report.residual(),
            lambda: last.map(|r| r.sigma.clone()).unwrap_or_default(),
            average_matvecs: report.average_matvecs(),
            total_matvecs: report.total_matvecs(),
            cpu_seconds: seconds,
        }
    }
}

/// Fixed-width table in the layout of the method comparisons.
pub fn comparison_table(rows: &[Summary]) -> String {
    let mut out = format!(
        "{:<22} {:>8} {:>10} {:>10} {:>20} {:>10}  {}\n",
        "method", "outer", "matvecs", "cpu [s]", "energy", "residual", "status"
    );
    for r in rows {
        let name = if r.alternating {
            format!("alternating {}", r.method)
        } else {
            r.method.clone()
        };
        let status = if r.converged {
            "converged".to_string()
        } else {
            format!("{:?}", r.termination)
        };
        out.push_str(&format!(
            "{:<22} {:>8} {:>10.1} {:>10.2} {:>20.12} {:>10.2e}  {}\n",
            name, r.iterations, r.average_matvecs, r.cpu_seconds, r.energy, r.residual, status
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_style_exponent() {
        assert_eq!(sci(1.0), "1.0000000000000000e+00");
        assert_eq!(sci(-0.25), "-2.5000000000000000e-01");
        assert_eq!(sci(1e-300), "1.0000000000000000e-300");
        assert_eq!(sci(1.5e120), "1.5000000000000001e+120");
        assert_eq!(sci(0.0), "0.0000000000000000e+00");
    }

    proptest::proptest! {
        #[test]
        fn formatting_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = sci(x);
            proptest::prop_assert_eq!(s.parse::<f64>().unwrap(), x);
            let exp = s.split_once('e').unwrap().1;
            proptest::prop_assert!(exp.len() >= 3);
        }
    }

    #[test]
    fn header_lists_every_component() {
        assert_eq!(
            csv_header(2),
            "iter,energy,residual,lambda_1,lambda_2,inner_matvecs,wall_ms"
        );
    }
}
