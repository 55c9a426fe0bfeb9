//! Trajectory CSV export.
//!
//! Columns, in order: `t`, `loss`, `sv1..sv{r_star+1}`, then for every
//! `s = 1..=r_star` the block `sigma_min_V{s}, orth_norm_{s}, align_{s},
//! rel_err_{s}, dist_Z{s}`. Singular values beyond the factor width are
//! written as 0; diagnostics that were not recorded are empty cells. Floats
//! use the shortest round-trip scientific form, so output is byte-stable.

use super::Trajectory;
use crate::error::Result;
use std::io::Write;

pub fn csv_header(r_star: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "loss".to_string()];
    cols.extend((1..=r_star + 1).map(|i| format!("sv{i}")));
    for s in 1..=r_star {
        cols.push(format!("sigma_min_V{s}"));
        cols.push(format!("orth_norm_{s}"));
        cols.push(format!("align_{s}"));
        cols.push(format!("rel_err_{s}"));
        cols.push(format!("dist_Z{s}"));
    }
    cols
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let r_star = traj.r_star;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(r_star))?;
    for rec in &traj.steps {
        let mut row = vec![rec.t.to_string(), num(rec.loss)];
        for i in 0..=r_star {
            row.push(num(rec.sing_vals.get(i).copied().unwrap_or(0.0)));
        }
        for s in 1..=r_star {
            match rec.ranks.iter().find(|d| d.s == s) {
                Some(d) => {
                    row.push(num(d.sigma_min_vs));
                    row.push(num(d.orth_norm));
                    row.push(num(d.align));
                    row.push(num(d.rel_err));
                    row.push(d.dist_to_zs.map(num).unwrap_or_default());
                }
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
