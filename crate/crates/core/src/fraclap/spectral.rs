use super::{FracOrder, FractionalLaplacian};
use crate::error::Result;
use crate::grid::{apply_real_multiplier, GridFunction};

/// Fourier multiplier `|ξ|^α`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpectralLaplacian;

impl FractionalLaplacian for SpectralLaplacian {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn apply(&self, f: &GridFunction, alpha: f64) -> Result<GridFunction> {
        let alpha = FracOrder::new(alpha)?.value();
        let mult: Vec<f64> = f.grid.xis().iter().map(|xi| xi.abs().powf(alpha)).collect();
        Ok(GridFunction {
            grid: f.grid,
            values: apply_real_multiplier(&f.values, &mult),
        })
    }
}
