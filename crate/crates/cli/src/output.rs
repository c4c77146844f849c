//! File formats: branch tables, solution snapshots, bifurcation tables,
//! oracle reports and the SVG diagram.
//!
//! Floats are written with `{:.17e}` so every value round-trips exactly.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use onsager_core::continuation::AsymptoticPrediction;
use onsager_core::{Branch, OracleReport, SolutionSet};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const BRANCH_COLUMNS: [&str; 6] = ["branch_id", "mode", "lambda", "t", "min_eig", "stable"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

/// One row of a branch file.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow {
    pub branch_id: usize,
    pub mode: usize,
    pub lambda: f64,
    pub t: f64,
    pub min_eig: f64,
    pub stable: bool,
    pub coeffs: Vec<f64>,
}

impl BranchRow {
    pub fn rows_of(branch: &Branch) -> impl Iterator<Item = BranchRow> + '_ {
        branch.points.iter().map(move |p| BranchRow {
            branch_id: branch.id,
            mode: branch.mode.index(),
            lambda: p.lambda,
            t: p.t,
            min_eig: p.min_eig,
            stable: p.stable,
            coeffs: p.field.coeffs().to_vec(),
        })
    }
}

pub fn branch_header(modes: usize) -> Vec<String> {
    BRANCH_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((1..=modes).map(|m| format!("v_{m}")))
        .collect()
}

pub fn write_branch_rows<W: Write>(w: W, modes: usize, rows: &[BranchRow]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(branch_header(modes))?;
    for r in rows {
        if r.coeffs.len() != modes {
            return Err(CliError::Io(format!(
                "branch {} has {} coefficients, header declares {modes}",
                r.branch_id,
                r.coeffs.len()
            )));
        }
        let mut rec = vec![
            r.branch_id.to_string(),
            r.mode.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.t),
            fmt_f64(r.min_eig),
            r.stable.to_string(),
        ];
        rec.extend(r.coeffs.iter().map(|&c| fmt_f64(c)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_branches<W: Write>(w: W, modes: usize, branches: &[Branch]) -> Result<(), CliError> {
    let rows: Vec<BranchRow> = branches.iter().flat_map(BranchRow::rows_of).collect();
    write_branch_rows(w, modes, &rows)
}

/// Reads a branch file back; returns the mode count and the rows.
pub fn read_branches<R: Read>(r: R) -> Result<(usize, Vec<BranchRow>), CliError> {
    let bad = |msg: String| CliError::Io(format!("malformed branch file: {msg}"));
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < BRANCH_COLUMNS.len() || header.iter().zip(BRANCH_COLUMNS).any(|(a, b)| a != b) {
        return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let modes = header.len() - BRANCH_COLUMNS.len();
    for (i, name) in header.iter().skip(BRANCH_COLUMNS.len()).enumerate() {
        if name != format!("v_{}", i + 1) {
            return Err(bad(format!("unexpected column `{name}`")));
        }
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: column {}: {e}", line + 1, &header[i])))
        };
        let int = |i: usize| -> Result<usize, CliError> {
            rec[i]
                .parse::<usize>()
                .map_err(|e| bad(format!("row {}: column {}: {e}", line + 1, &header[i])))
        };
        rows.push(BranchRow {
            branch_id: int(0)?,
            mode: int(1)?,
            lambda: num(2)?,
            t: num(3)?,
            min_eig: num(4)?,
            stable: rec[5]
                .parse::<bool>()
                .map_err(|e| bad(format!("row {}: column stable: {e}", line + 1)))?,
            coeffs: (BRANCH_COLUMNS.len()..header.len()).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok((modes, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub coeffs: Vec<f64>,
    pub residual_norm: f64,
    pub hits: usize,
    pub first_start: usize,
    pub min_eig: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub lambda: f64,
    pub modes: usize,
    pub grid: usize,
    pub seed: u64,
    pub starts: usize,
    pub converged_starts: usize,
    pub max_residual: f64,
    pub cluster_radius: f64,
    #[serde(default)]
    pub clusters: Vec<ClusterRecord>,
}

impl SolutionFile {
    /// `stability` holds `(min_eig, stable)` per cluster.
    pub fn new(set: &SolutionSet, modes: usize, grid: usize, seed: u64, stability: &[(f64, bool)]) -> Self {
        Self {
            lambda: set.lambda,
            modes,
            grid,
            seed,
            starts: set.starts.len(),
            converged_starts: set.starts.len() - set.non_converged(),
            max_residual: set.max_residual(),
            cluster_radius: set.cluster_radius,
            clusters: set
                .clusters
                .iter()
                .zip(stability)
                .map(|(c, &(min_eig, stable))| ClusterRecord {
                    coeffs: c.solution.coeffs().to_vec(),
                    residual_norm: c.residual_h1,
                    hits: c.hits,
                    first_start: c.first_start,
                    min_eig,
                    stable,
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("solution file serializes")
    }
}

pub fn write_bifurcations<W: Write>(w: W, rows: &[AsymptoticPrediction]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mode", "lambda", "gamma", "criticality", "mu_coefficient"])?;
    for p in rows {
        out.write_record([
            p.mode.to_string(),
            fmt_f64(p.lambda_m),
            fmt_f64(p.gamma),
            p.criticality.to_string(),
            p.mu_coefficient.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyFile<'a> {
    seed: u64,
    pass: bool,
    oracle: &'a [OracleReport],
}

pub fn verify_toml(seed: u64, reports: &[OracleReport]) -> String {
    toml::to_string(&VerifyFile {
        seed,
        pass: reports.iter().all(|r| r.pass),
        oracle: reports,
    })
    .expect("verify report serializes")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub branch_id: usize,
    pub mode: usize,
    pub lambda: f64,
    pub t: f64,
    pub free_energy: f64,
    pub trivial_free_energy: f64,
    pub el_residual: f64,
}

pub fn write_energy<W: Write>(w: W, rows: &[EnergyRow]) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "branch_id",
        "mode",
        "lambda",
        "t",
        "free_energy",
        "trivial_free_energy",
        "el_residual",
    ])?;
    for r in rows {
        out.write_record([
            r.branch_id.to_string(),
            r.mode.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.t),
            fmt_f64(r.free_energy),
            fmt_f64(r.trivial_free_energy),
            fmt_f64(r.el_residual),
        ])?;
    }
    out.flush()?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#222222", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Renders `t` against `λ`; stable runs are solid, unstable runs dashed.
pub fn diagram_svg(rows: &[BranchRow]) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 50.0);
    let lmax = rows.iter().map(|r| r.lambda).fold(0.0f64, f64::max).max(1.0);
    let tmax = rows.iter().map(|r| r.t.abs()).fold(0.0f64, f64::max).max(1e-3) * 1.05;
    let x = |l: f64| left + (w - left - right) * l / lmax;
    let y = |t: f64| top + (h - top - bottom) * (1.0 - (t + tmax) / (2.0 * tmax));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/><line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/></g>"#,
        left,
        h - bottom,
        w - right,
        h - bottom,
        left,
        top,
        left,
        h - bottom
    );
    for i in 0..=5 {
        let l = lmax * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{:.3}</text>"#,
            x(l),
            h - bottom + 18.0,
            l
        );
        let t = -tmax + 2.0 * tmax * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            y(t) + 4.0,
            t
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">λ</text>"#,
        left + (w - left - right) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.3}" text-anchor="middle" transform="rotate(-90 16 {:.3})">t</text>"#,
        top + (h - top - bottom) / 2.0,
        top + (h - top - bottom) / 2.0
    );

    let mut start = 0;
    while start < rows.len() {
        let id = rows[start].branch_id;
        let end = rows[start..].iter().position(|r| r.branch_id != id).map_or(rows.len(), |k| start + k);
        let branch = &rows[start..end];
        let colour = PALETTE[branch[0].mode % PALETTE.len()];
        let mut i = 0;
        while i < branch.len() {
            let stable = branch[i].stable;
            let mut j = i;
            while j + 1 < branch.len() && branch[j + 1].stable == stable {
                j += 1;
            }
            // Share the boundary point so runs join up.
            let last = (j + 1).min(branch.len() - 1);
            let pts: Vec<String> = branch[i..=last]
                .iter()
                .map(|r| format!("{:.3},{:.3}", x(r.lambda), y(r.t)))
                .collect();
            let dash = if stable { "" } else { r#" stroke-dasharray="6 4""# };
            if pts.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
                    pts.join(" ")
                );
            }
            i = j + 1;
        }
        start = end;
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, lambda: f64, t: f64, stable: bool) -> BranchRow {
        BranchRow {
            branch_id: id,
            mode: 1,
            lambda,
            t,
            min_eig: if stable { 0.5 } else { -0.5 },
            stable,
            coeffs: vec![t, 0.1 * t, 1.0 / 3.0],
        }
    }

    #[test]
    fn empty_branch_set_is_header_only() {
        let mut buf = Vec::new();
        write_branches(&mut buf, 3, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "branch_id,mode,lambda,t,min_eig,stable,v_1,v_2,v_3\n"
        );
    }

    #[test]
    fn branch_rows_round_trip_exactly() {
        let rows = vec![row(1, 4.71238898038469, 0.02, true), row(1, 4.8, -1e-300, false)];
        let mut buf = Vec::new();
        write_branch_rows(&mut buf, 3, &rows).unwrap();
        let (modes, back) = read_branches(buf.as_slice()).unwrap();
        assert_eq!(modes, 3);
        assert_eq!(back, rows);
    }

    #[test]
    fn mismatched_width_rejected() {
        let rows = vec![row(1, 1.0, 0.0, true)];
        assert!(write_branch_rows(Vec::new(), 2, &rows).is_err());
        let text = "branch_id,mode,lambda,t,min_eig,stable,v_2\n";
        assert!(read_branches(text.as_bytes()).is_err());
        let text = "branch_id,mode,lambda,t,stable\n";
        assert!(read_branches(text.as_bytes()).is_err());
    }

    #[test]
    fn floats_keep_full_precision() {
        let x = std::f64::consts::PI / 7.0;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn svg_styles_by_stability() {
        let rows = vec![
            row(0, 0.0, 0.0, true),
            row(0, 1.0, 0.0, true),
            row(0, 2.0, 0.0, false),
            row(0, 3.0, 0.0, false),
            row(1, 2.0, 0.1, true),
            row(1, 3.0, 0.2, true),
        ];
        let svg = diagram_svg(&rows);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert_eq!(svg, diagram_svg(&rows));
    }
}
