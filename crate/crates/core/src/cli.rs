//! Experiment driver shared by the `platemg` binary and embedding code.

use crate::certify::{check_commute_curl, check_commute_divdiv_poly_suite, check_exactness};
use crate::error::{Error, Result};
use crate::mesh::{initial_mesh, refine_uniform, Domain, Triangulation};
use crate::multigrid::{build_hierarchy_from, MgOptions};
use crate::pipeline::{convergence_table, manufactured_square_case, solve_table};
use std::io::Write;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Iteration-count table, one row per level: `level,size,iters_11,iters_22`.
    Solve,
    /// Exact-sequence and commutativity certification of every level.
    Certify,
    /// Manufactured-solution errors: `level,h,stress_l2_err,defl_h1_err,order`.
    Convergence,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solve" => Ok(Mode::Solve),
            "certify" => Ok(Mode::Certify),
            "convergence" => Ok(Mode::Convergence),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// Resolved experiment configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub domain: Domain,
    pub levels: usize,
    /// Poisson ratio; `None` selects the domain default (0.3 square, 0 L-shape).
    pub nu: Option<f64>,
    pub m1: usize,
    pub m2: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub out: Option<PathBuf>,
    pub mode: Mode,
    /// Optional coarse-mesh file for the square pipeline.
    pub mesh: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Square,
            levels: 6,
            nu: None,
            m1: 1,
            m2: 1,
            tol: 1e-8,
            max_iter: 200,
            out: None,
            mode: Mode::Solve,
            mesh: None,
        }
    }
}

impl RunConfig {
    pub fn resolved_nu(&self) -> f64 {
        self.nu.unwrap_or(match self.domain {
            Domain::Square => 0.3,
            Domain::LShape => 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::Config("--levels must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("--tol must be positive".into()));
        }
        if self.m1 + self.m2 < 1 {
            return Err(Error::Config("--m1 + --m2 must be at least 1".into()));
        }
        if self.mesh.is_some() && self.domain != Domain::Square {
            return Err(Error::Config(
                "--mesh is only supported with --domain square".into(),
            ));
        }
        if self.mode == Mode::Convergence && self.domain != Domain::Square {
            return Err(Error::Config(
                "--mode convergence needs the manufactured square case".into(),
            ));
        }
        Ok(())
    }
}

fn coarse_mesh(config: &RunConfig) -> Result<Triangulation> {
    match &config.mesh {
        Some(path) => Triangulation::from_text(&std::fs::read_to_string(path)?),
        None => Ok(initial_mesh(config.domain)),
    }
}

fn output(config: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &config.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    })
}

/// Runs one experiment; errors carry the exit-code classification.
pub fn run(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let mut out = output(config)?;
    match config.mode {
        Mode::Solve => run_solve(config, &mut out),
        Mode::Certify => run_certify(config, &mut out),
        Mode::Convergence => run_convergence(config, &mut out),
    }
}

fn run_solve(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let nu = config.resolved_nu();
    let hier = build_hierarchy_from(coarse_mesh(config)?, config.levels, nu, config.m1, config.m2)?;
    let first = if config.levels >= 3 { 3 } else { 1 };
    let case = manufactured_square_case(nu);
    let rows = match config.domain {
        Domain::Square => solve_table(
            &hier,
            |x, y| case.f(x, y),
            first,
            config.tol,
            config.max_iter,
        )?,
        Domain::LShape => solve_table(&hier, |_, _| 1.0, first, config.tol, config.max_iter)?,
    };
    writeln!(out, "level,size,iters_11,iters_22")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.level, row.size, row.iters_11, row.iters_22
        )?;
    }
    Ok(())
}

fn run_certify(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut tri = coarse_mesh(config)?;
    let mut failures = Vec::new();
    for k in 1..=config.levels {
        if k > 1 {
            tri = refine_uniform(&tri).0;
        }
        let report = check_exactness(&tri)?;
        let curl_dev = check_commute_curl(&tri, 3)?;
        let divdiv_dev = check_commute_divdiv_poly_suite(&tri)?;
        let ok = report.all_hold() && curl_dev <= 1e-12 && divdiv_dev <= 1e-12;
        writeln!(
            out,
            "level {k}: exact_sequence={} complex_residual={:.3e} kernel_residual={:.3e} \
             commute_curl={:.3e} commute_divdiv={:.3e} rank_method={:?} status={}",
            report.all_hold(),
            report.complex_residual,
            report.kernel_residual,
            curl_dev,
            divdiv_dev,
            report.method,
            if ok { "ok" } else { "FAILED" }
        )?;
        if !ok {
            failures.push(k);
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::CertificationFailed(format!(
            "levels {failures:?} failed certification"
        )))
    }
}

fn run_convergence(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let nu = config.resolved_nu();
    let hier = build_hierarchy_from(coarse_mesh(config)?, config.levels, nu, config.m1, config.m2)?;
    let case = manufactured_square_case(nu);
    let rows = convergence_table(
        &hier,
        &case,
        &MgOptions {
            m1: config.m1,
            m2: config.m2,
            tol: config.tol,
            max_iter: config.max_iter,
        },
    )?;
    writeln!(out, "level,h,stress_l2_err,defl_h1_err,order")?;
    for row in rows {
        let order = row
            .order
            .map(|o| format!("{o:.4}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{:.8e},{:.8e},{:.8e},{}",
            row.level, row.h, row.stress_l2_err, row.defl_h1_err, order
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = RunConfig {
            levels: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.levels = 2;
        assert!(c.validate().is_ok());
        c.m1 = 0;
        c.m2 = 0;
        assert!(c.validate().is_err());
        c.m2 = 1;
        c.domain = Domain::LShape;
        c.mode = Mode::Convergence;
        assert!(c.validate().is_err());
        c.mode = Mode::Solve;
        c.mesh = Some("mesh.txt".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_poisson_ratio_tracks_domain() {
        let mut c = RunConfig::default();
        assert_eq!(c.resolved_nu(), 0.3);
        c.domain = Domain::LShape;
        assert_eq!(c.resolved_nu(), 0.0);
        c.nu = Some(0.2);
        assert_eq!(c.resolved_nu(), 0.2);
    }

    #[test]
    fn solve_mode_emits_expected_rows() {
        let config = RunConfig {
            levels: 2,
            ..RunConfig::default()
        };
        let mut buf = Vec::new();
        run_solve(&config, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "level,size,iters_11,iters_22");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,81,"));
        assert!(lines[2].starts_with("2,289,"));

        // Byte-stable across runs.
        let mut buf2 = Vec::new();
        run_solve(&config, &mut buf2).unwrap();
        assert_eq!(text.as_bytes(), buf2.as_slice());
    }

    #[test]
    fn certify_mode_small_levels() {
        let config = RunConfig {
            levels: 2,
            mode: Mode::Certify,
            ..RunConfig::default()
        };
        let mut buf = Vec::new();
        run_certify(&config, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().all(|l| l.ends_with("status=ok")));
    }
}
