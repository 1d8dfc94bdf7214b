//! CSV dumps of integrated trajectories.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hamiltonian_flow::{symbol_p, Trajectory};
use crate::sds_metric::SdsParams;

/// Writes `t, r, xi, omega_1.., eta_1.., p_value`, one row per sample, with
/// 17 significant digits and LF line endings.
pub fn write_trajectory_csv<W: Write>(params: &SdsParams, traj: &Trajectory, out: &mut W) -> Result<()> {
    let first = traj.samples.first().ok_or_else(|| Error::Input("trajectory has no samples".into()))?;
    let d = first.point.omega.len();
    let mut header = vec!["t".to_string(), "r".into(), "xi".into()];
    header.extend((1..=d).map(|i| format!("omega_{i}")));
    header.extend((1..=d).map(|i| format!("eta_{i}")));
    header.push("p_value".into());
    writeln!(out, "{}", header.join(","))?;
    let mut row = String::new();
    for s in &traj.samples {
        row.clear();
        let x = &s.point;
        let p = symbol_p(params, x)?;
        let values = [s.t, x.r, x.xi]
            .into_iter()
            .chain(x.omega.iter().copied())
            .chain(x.eta.iter().copied())
            .chain(std::iter::once(p));
        for (i, v) in values.enumerate() {
            if i > 0 {
                row.push(',');
            }
            row.push_str(&format!("{v:.16e}"));
        }
        row.push('\n');
        out.write_all(row.as_bytes())?;
    }
    Ok(())
}

pub fn dump_trajectory_csv(params: &SdsParams, traj: &Trajectory, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_trajectory_csv(params, traj, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian_flow::{default_trapped_point, integrate, IntegrateOptions};

    #[test]
    fn header_and_rows() {
        let p = SdsParams::with_reduced_lambda(4, 1.0, 0.01).unwrap();
        let x = default_trapped_point(&p, 1.0).unwrap();
        let traj = integrate(&p, &x, IntegrateOptions { t_final: 0.01, dt: 1e-3, variational: false }).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&p, &traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,r,xi,omega_1,omega_2,omega_3,eta_1,eta_2,eta_3,p_value");
        assert_eq!(lines.len(), 12);
        assert!(!text.contains('\r'));
        let cells: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cells.len(), 10);
        assert_eq!(cells[1], "3.0000000000000000e0");
    }

    #[test]
    fn empty_trajectory_rejected() {
        let p = SdsParams::with_reduced_lambda(4, 1.0, 0.01).unwrap();
        let traj = Trajectory { samples: vec![], p_drift: 0.0, eta_drift: 0.0, exit: None, variational: None };
        assert!(write_trajectory_csv(&p, &traj, &mut Vec::new()).is_err());
    }
}
