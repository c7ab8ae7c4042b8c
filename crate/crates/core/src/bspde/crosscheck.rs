//! PDE solution against the Feynman-Kac Monte Carlo value at probe points.

use serde::Serialize;

use super::{solve_pde_variable_coeff, BSPDEData, SolveOptions, Source, Terminal};
use crate::error::{Error, Result};
use crate::grid::spectral_interpolate;
use crate::levy::sde::FeynmanKac;
use crate::levy::{feynman_kac_estimate, RngStream};

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub t: f64,
    pub x: f64,
    pub pde: f64,
    pub mc: f64,
    pub stderr: f64,
    /// `|u_h - u_{h/2}|` with space and time steps halved together.
    pub grid_bound: f64,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheckReport {
    pub probes: Vec<ProbeResult>,
    pub paths: usize,
    pub sde_steps: usize,
}

impl CrossCheckReport {
    pub fn passed(&self) -> bool {
        self.probes.iter().all(|p| p.passed)
    }
}

/// `|MC - PDE| <= 3 (stderr + grid bound)` at each probe `(t, x)`; `t`
/// must be a node of the PDE time grid. The PDE value is the refined one.
pub fn fbsde_crosscheck(
    data: &BSPDEData,
    probes: &[(f64, f64)],
    opts: &SolveOptions,
    paths: usize,
    sde_steps: usize,
    stream: RngStream,
) -> Result<CrossCheckReport> {
    let g = match &data.g {
        Terminal::Field(g) => g.clone(),
        Terminal::Random(_) => return Err(Error::UnsupportedSpec("cross-check needs a deterministic terminal field".into())),
    };
    let f = match &data.f {
        Source::Field(f) => f.clone(),
        Source::Random(_) => return Err(Error::UnsupportedSpec("cross-check needs a deterministic source field".into())),
    };
    if opts.times(data.horizon).iter().any(|&t| (data.sigma)(t) != 0.0) {
        return Err(Error::UnsupportedSpec("cross-check is implemented for sigma = 0".into()));
    }
    let coarse = solve_pde_variable_coeff(data, opts)?;
    let mut fine_data = data.clone();
    fine_data.grid = data.grid.refined(2)?;
    let fine_opts = SolveOptions {
        steps: 2 * opts.steps,
        ..opts.clone()
    };
    let fine = solve_pde_variable_coeff(&fine_data, &fine_opts)?;

    let fk = FeynmanKac {
        alpha: data.alpha,
        t_end: data.horizon,
        b: data.b.clone(),
        a: data.a.field(),
        c: data.c.clone(),
        f,
        g: g.clone(),
        steps: sde_steps,
    };
    let mut out = Vec::with_capacity(probes.len());
    for (k, &(t, x)) in probes.iter().enumerate() {
        let i = coarse.time_index(t)?;
        let u_c = spectral_interpolate(&coarse.u[0][i], x);
        let u_f = spectral_interpolate(&fine.u[0][2 * i], x);
        let grid_bound = (u_f - u_c).abs();
        let est = if t == data.horizon {
            crate::levy::Estimate {
                mean: g(x),
                stderr: 0.0,
                n: paths,
            }
        } else {
            feynman_kac_estimate(&fk, x, t, paths, stream.child(k as u64))?
        };
        let error = (est.mean - u_f).abs();
        let tolerance = 3.0 * (est.stderr + grid_bound);
        out.push(ProbeResult {
            t,
            x,
            pde: u_f,
            mc: est.mean,
            stderr: est.stderr,
            grid_bound,
            error,
            tolerance,
            passed: error <= tolerance,
        });
    }
    Ok(CrossCheckReport {
        probes: out,
        paths,
        sde_steps,
    })
}
