//! Output formats of the command-line driver.

use std::io::Write;

use serde::{Deserialize, Serialize};
use surface_stokes::study::{StudyConfig, StudyOutcome};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SURFACE_STOKES_THREADS";

/// One row of the study CSV. Rates are empty on the first row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub level: usize,
    pub h: f64,
    pub dof_v: usize,
    pub dof_p: usize,
    pub e_energy: f64,
    pub e_l2_vel: f64,
    pub e_l2_pres: f64,
    pub rate_energy: Option<f64>,
    pub rate_l2_vel: Option<f64>,
    pub rate_l2_pres: Option<f64>,
    pub seconds: f64,
}

pub fn study_rows(outcome: &StudyOutcome) -> Vec<StudyRow> {
    outcome
        .reports
        .iter()
        .zip(&outcome.eoc.rows)
        .map(|(r, e)| StudyRow {
            level: r.level,
            h: r.h,
            dof_v: r.dof_v,
            dof_p: r.dof_p,
            e_energy: r.e_energy,
            e_l2_vel: r.e_l2_vel,
            e_l2_pres: r.e_l2_pres,
            rate_energy: e.rate_energy,
            rate_l2_vel: e.rate_l2_vel,
            rate_l2_pres: e.rate_l2_pres,
            seconds: r.seconds,
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[StudyRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "level",
            "h",
            "dof_v",
            "dof_p",
            "e_energy",
            "e_l2_vel",
            "e_l2_pres",
            "rate_energy",
            "rate_l2_vel",
            "rate_l2_pres",
            "seconds",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyConfigJson {
    pub surface: String,
    pub levels: String,
    pub fh_mode: surface_stokes::manufactured::FhMode,
    pub quadrature_degree: usize,
    pub solver: surface_stokes::solver::SolverMethod,
    pub tol: f64,
}

impl From<&StudyConfig> for StudyConfigJson {
    fn from(c: &StudyConfig) -> Self {
        Self {
            surface: c.surface.to_string(),
            levels: c.levels.to_string(),
            fh_mode: c.fh_mode,
            quadrature_degree: c.quadrature_degree,
            solver: c.solver.method,
            tol: c.solver.tol,
        }
    }
}

/// JSON mirror of the CSV plus configuration and solver status.
#[derive(Debug, Clone, Serialize)]
pub struct StudyJson {
    pub config: StudyConfigJson,
    pub rows: Vec<StudyRow>,
    pub converged: bool,
    pub max_residual: f64,
    pub failures: Vec<surface_stokes::study::LevelFailure>,
}

pub fn study_json(config: &StudyConfig, outcome: &StudyOutcome) -> StudyJson {
    StudyJson {
        config: config.into(),
        rows: study_rows(outcome),
        converged: outcome.converged(),
        max_residual: outcome.max_residual,
        failures: outcome.failures.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use surface_stokes::analysis::{EocTable, ErrorReport};

    fn outcome() -> StudyOutcome {
        let r = |level, e: f64| ErrorReport {
            level,
            h: 0.5f64.powi(level as i32),
            dof_v: 10,
            dof_p: 5,
            e_energy: e,
            e_h1_vel: e,
            e_l2_vel: e * e,
            e_l2_pres: e,
            seconds: 0.25,
        };
        let reports = vec![r(2, 0.4), r(3, 0.2)];
        StudyOutcome {
            eoc: EocTable::from_reports(&reports),
            reports,
            failures: vec![],
            max_residual: 0.0,
        }
    }

    #[test]
    fn csv_header_and_empty_rates() {
        let mut buf = Vec::new();
        write_csv(&study_rows(&outcome()), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "level,h,dof_v,dof_p,e_energy,e_l2_vel,e_l2_pres,rate_energy,rate_l2_vel,rate_l2_pres,seconds"
        );
        assert_eq!(lines[1], "2,0.25,10,5,0.4,0.16000000000000003,0.4,,,,0.25");
        assert!(lines[2].starts_with("3,0.125,10,5,0.2,"));
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn empty_table_still_has_header() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("level,h,"));
    }
}
