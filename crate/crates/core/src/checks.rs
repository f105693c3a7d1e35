//! Invariant suites with machine-readable pass/fail verdicts.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    deformation_transfer_ratio, eoc, field_errors, inf_sup, interpolate, lifted_face_area,
    max_normal_component, max_normal_jump, measure_defect, subdivided_face_area, transfer_defect,
    DiscreteFields,
};
use crate::assembly::{assemble, AssemblyOptions, ZeroLoad};
use crate::dofmap::DofMap;
use crate::geometry::{LevelSetSurface, SurfaceKind};
use crate::manufactured::ExactSolution;
use crate::mesh::SurfaceMesh;
use crate::quadrature::QuadratureRule;
use crate::sparse::norm_inf;
use crate::study::{LevelRange, StudyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Geometry,
    Conformity,
    Interpolant,
    Infsup,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "geometry" => Ok(Self::Geometry),
            "conformity" => Ok(Self::Conformity),
            "interpolant" => Ok(Self::Interpolant),
            "infsup" => Ok(Self::Infsup),
            "all" => Ok(Self::All),
            _ => Err(format!("unknown suite '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub suite: String,
    pub name: String,
    pub level: Option<usize>,
    pub value: f64,
    /// Human-readable acceptance condition.
    pub condition: String,
    pub passed: bool,
}

fn verdict(
    suite: &str,
    name: &str,
    level: Option<usize>,
    value: f64,
    condition: String,
    passed: bool,
) -> Verdict {
    Verdict {
        suite: suite.into(),
        name: name.into(),
        level,
        value,
        condition,
        passed,
    }
}

/// True when no entry exceeds twice its predecessor.
pub fn bounded_growth(values: &[f64], factor: f64) -> bool {
    values.windows(2).all(|w| w[1] <= factor * w[0]) && values.iter().all(|v| v.is_finite())
}

/// Largest discrepancy between the Newton closest-point kernel and the
/// closed-form sphere geometry at `n` random points in the tube.
pub fn sphere_closed_form_error(radius: f64, n: usize, seed: u64) -> Result<f64, StudyError> {
    let s = LevelSetSurface::sphere(radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max = 0.0f64;
    let delta = s.tube_halfwidth();
    for _ in 0..n {
        let dir = loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                break v.normalize();
            }
        };
        let r = radius + rng.random_range(-delta..delta);
        let x = dir * r;
        let spd = s.closest_point(&x)?;
        let nu = x / r;
        let pi = Matrix3::identity() - nu * nu.transpose();
        let h = pi / r;
        let err = (spd.p - radius * nu)
            .norm()
            .max((spd.d - (r - radius)).abs())
            .max((spd.nu - nu).norm())
            .max((spd.h - h).norm())
            .max((spd.pi - pi).norm());
        max = max.max(err);
    }
    Ok(max)
}

pub fn geometry_suite(
    surface: &LevelSetSurface,
    levels: LevelRange,
) -> Result<Vec<Verdict>, StudyError> {
    const S: &str = "geometry";
    let mut out = Vec::new();
    if surface.kind() == SurfaceKind::Sphere {
        let r = surface.semi_axes()[0];
        let e = sphere_closed_form_error(r, 1000, 1)?;
        out.push(verdict(
            S,
            "sphere_closed_form",
            None,
            e,
            "<= 1e-10".into(),
            e <= 1e-10,
        ));
    }
    let exact = ExactSolution::new(surface.clone());
    let rule = QuadratureRule::new(6).expect("degree 6 rule");
    let mut mesh = SurfaceMesh::generate(surface, levels.first)?;
    let (mut defects, mut mus, mut defs) = (Vec::new(), Vec::new(), Vec::new());
    for level in levels.iter() {
        if level > mesh.level {
            mesh = mesh.refine()?;
        }
        let dm = DofMap::build(&mesh)?;
        let d = transfer_defect(&mesh, &dm, &exact)?;
        let m = measure_defect(&mesh, &rule)?;
        out.push(verdict(
            S,
            "transfer_defect_over_h2",
            Some(level),
            d,
            "finite".into(),
            d.is_finite(),
        ));
        out.push(verdict(
            S,
            "measure_defect_over_h2",
            Some(level),
            m,
            "finite".into(),
            m.is_finite(),
        ));
        defects.push(d);
        mus.push(m);
        if level <= 4 {
            let r = deformation_transfer_ratio(&mesh, &dm, 17)?;
            out.push(verdict(
                S,
                "deformation_transfer_ratio",
                Some(level),
                r,
                "finite".into(),
                r.is_finite(),
            ));
            defs.push(r);
        }
    }
    let growth = |v: &[f64]| v.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    out.push(verdict(
        S,
        "transfer_defect_growth",
        None,
        growth(&defects),
        "<= 2 per level".into(),
        bounded_growth(&defects, 2.0),
    ));
    out.push(verdict(
        S,
        "measure_defect_growth",
        None,
        growth(&mus),
        "<= 2 per level".into(),
        bounded_growth(&mus, 2.0),
    ));
    if !defs.is_empty() {
        out.push(verdict(
            S,
            "deformation_transfer_growth",
            None,
            growth(&defs),
            "<= 2 per level".into(),
            bounded_growth(&defs, 2.0),
        ));
    }
    let area = face_area_agreement(&mesh, 50, 3)?;
    out.push(verdict(
        S,
        "lifted_area_relative_error",
        Some(mesh.level),
        area,
        "<= 1e-8".into(),
        area <= 1e-8,
    ));
    Ok(out)
}

/// Largest relative difference between `∫_K μ_h` and the area of `p(K)` over
/// `n` sampled faces.
pub fn face_area_agreement(mesh: &SurfaceMesh, n: usize, seed: u64) -> Result<f64, StudyError> {
    let rule = QuadratureRule::new(6).expect("degree 6 rule");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max = 0.0f64;
    for _ in 0..n {
        let k = rng.random_range(0..mesh.n_faces());
        let quad = lifted_face_area(mesh, k, &rule)?;
        let fine = subdivided_face_area(mesh, k, 32)?;
        max = max.max((quad - fine).abs() / fine);
    }
    Ok(max)
}

/// Normal jumps of random discrete fields and tangentiality of the basis.
pub fn conformity_suite(
    surface: &LevelSetSurface,
    level: usize,
) -> Result<Vec<Verdict>, StudyError> {
    const S: &str = "conformity";
    let mesh = SurfaceMesh::generate(surface, level)?;
    let dm = DofMap::build(&mesh)?;
    let rule = QuadratureRule::new(6).expect("degree 6 rule");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_jump, mut worst_normal) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let v: Vec<f64> = (0..dm.index.n_velocity())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let jump = max_normal_jump(&mesh, &dm, &v)? / norm_inf(&v);
        worst_jump = worst_jump.max(jump);
        worst_normal = worst_normal.max(max_normal_component(&mesh, &dm, &v, &rule));
    }
    let mut out = vec![
        verdict(
            S,
            "max_normal_jump_relative",
            Some(level),
            worst_jump,
            "<= 1e-12".into(),
            worst_jump <= 1e-12,
        ),
        verdict(
            S,
            "max_normal_component_relative",
            Some(level),
            worst_normal,
            "<= 1e-12".into(),
            worst_normal <= 1e-12,
        ),
    ];
    let system = assemble(&mesh, &dm, &ZeroLoad, &AssemblyOptions::default())?;
    let ones = vec![1.0; system.n_pressure()];
    let v: Vec<f64> = (0..dm.index.n_velocity())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let total_div =
        crate::sparse::dot(&ones, &system.b.mul_vec(&v)).abs() / crate::sparse::norm(&v);
    out.push(verdict(
        S,
        "global_divergence_relative",
        Some(level),
        total_div,
        "<= 1e-10".into(),
        total_div <= 1e-10,
    ));
    Ok(out)
}

/// Interpolation errors of the exact velocity and their rates.
pub fn interpolant_suite(
    surface: &LevelSetSurface,
    levels: LevelRange,
) -> Result<Vec<Verdict>, StudyError> {
    const S: &str = "interpolant";
    let exact = ExactSolution::new(surface.clone());
    let mut mesh = SurfaceMesh::generate(surface, levels.first)?;
    let mut out = Vec::new();
    let (mut l2, mut h1) = (Vec::new(), Vec::new());
    for level in levels.iter() {
        if level > mesh.level {
            mesh = mesh.refine()?;
        }
        let dm = DofMap::build(&mesh)?;
        let v = interpolate(&mesh, &dm, &exact)?;
        let e = field_errors(
            &mesh,
            &dm,
            &DiscreteFields {
                velocity: &v,
                pressure: None,
            },
            &exact,
            6,
        )?;
        let jump = max_normal_jump(&mesh, &dm, &v)? / norm_inf(&v);
        out.push(verdict(
            S,
            "l2_error",
            Some(level),
            e.l2_vel,
            "finite".into(),
            e.l2_vel.is_finite(),
        ));
        out.push(verdict(
            S,
            "h1_error",
            Some(level),
            e.h1_vel,
            "finite".into(),
            e.h1_vel.is_finite(),
        ));
        out.push(verdict(
            S,
            "normal_jump_relative",
            Some(level),
            jump,
            "<= 1e-12".into(),
            jump <= 1e-12,
        ));
        l2.push(e.l2_vel);
        h1.push(e.h1_vel);
    }
    if l2.len() >= 2 {
        let n = l2.len();
        let r2 = eoc(l2[n - 2], l2[n - 1]).unwrap_or(f64::NAN);
        let r1 = eoc(h1[n - 2], h1[n - 1]).unwrap_or(f64::NAN);
        out.push(verdict(
            S,
            "l2_eoc_finest",
            None,
            r2,
            "in [1.8, 2.2]".into(),
            (1.8..=2.2).contains(&r2),
        ));
        out.push(verdict(
            S,
            "h1_eoc_finest",
            None,
            r1,
            "in [0.85, 1.2]".into(),
            (0.85..=1.2).contains(&r1),
        ));
    }
    Ok(out)
}

/// Discrete inf-sup constants per level.
pub fn infsup_suite(
    surface: &LevelSetSurface,
    levels: LevelRange,
) -> Result<Vec<Verdict>, StudyError> {
    const S: &str = "infsup";
    let mut mesh = SurfaceMesh::generate(surface, levels.first)?;
    let mut out = Vec::new();
    let mut betas = Vec::new();
    for level in levels.iter() {
        if level > mesh.level {
            mesh = mesh.refine()?;
        }
        let dm = DofMap::build(&mesh)?;
        let system = assemble(&mesh, &dm, &ZeroLoad, &AssemblyOptions::default())?;
        let is = inf_sup(&mesh, &system)?;
        out.push(verdict(
            S,
            "beta",
            Some(level),
            is.beta,
            "> 0".into(),
            is.beta > 0.0,
        ));
        betas.push(is.beta);
    }
    for w in betas.windows(2) {
        let variation = (w[1] - w[0]).abs() / w[0];
        out.push(verdict(
            S,
            "beta_variation",
            None,
            variation,
            "< 0.25".into(),
            variation < 0.25,
        ));
    }
    Ok(out)
}

pub fn run_suite(
    suite: Suite,
    surface: &LevelSetSurface,
    level: usize,
    levels: Option<LevelRange>,
) -> Result<Vec<Verdict>, StudyError> {
    let range = |first: usize, last: usize| levels.unwrap_or(LevelRange { first, last });
    Ok(match suite {
        Suite::Geometry => geometry_suite(surface, range(2, 5))?,
        Suite::Conformity => conformity_suite(surface, level)?,
        Suite::Interpolant => interpolant_suite(surface, range(2, 5))?,
        Suite::Infsup => infsup_suite(surface, range(1, 3))?,
        Suite::All => {
            let mut v = geometry_suite(surface, range(2, 5))?;
            v.extend(conformity_suite(surface, level)?);
            v.extend(interpolant_suite(surface, range(2, 5))?);
            v.extend(infsup_suite(
                surface,
                levels.unwrap_or(LevelRange { first: 1, last: 3 }),
            )?);
            v
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_rule() {
        assert!(bounded_growth(&[1.0, 1.9, 3.0], 2.0));
        assert!(!bounded_growth(&[1.0, 2.1], 2.0));
        assert!(!bounded_growth(&[1.0, f64::NAN], 2.0));
    }

    #[test]
    fn sphere_kernel_matches_closed_form() {
        assert!(sphere_closed_form_error(1.0, 200, 4).unwrap() <= 1e-10);
        assert!(sphere_closed_form_error(2.5, 200, 5).unwrap() <= 1e-10);
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("infsup".parse::<Suite>().unwrap(), Suite::Infsup);
        assert!("nope".parse::<Suite>().is_err());
    }
}
