//! Synthetic rows from a fitted model.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::{DataTable, RankFrame};
use crate::linalg::Matrix;
use crate::model::{ancestral_sample, DdeParams};
use crate::mstep::FitResult;
use crate::par;
use crate::rng::fork_key;
use crate::sim::synth::{LatentCdf, REFERENCE_ROWS};

/// Draws `m` rows from `params` and maps each latent coordinate back to the
/// observed scale with the empirical quantile function of `frame`.
///
/// `F_{Z_j}` is the empirical CDF of a [`REFERENCE_ROWS`]-row sample.
pub fn sample_from_params<R: Rng + ?Sized>(
    params: &DdeParams,
    frame: &RankFrame,
    m: usize,
    rng: &mut R,
) -> Result<DataTable> {
    if params.observed() != frame.j() {
        return Err(Error::Shape(format!("model has {} observed columns, data has {}", params.observed(), frame.j())));
    }
    let draws = ancestral_sample(params, m, rng)?;
    let cdf = LatentCdf::empirical(params, REFERENCE_ROWS, fork_key(rng))?;
    let columns: Vec<Result<Vec<f64>>> = par::map_indexed(frame.j(), |j| {
        (0..m).map(|i| frame.empirical_quantile(j, cdf.cdf(j, draws.z.row(i)[j]))).collect()
    });
    let mut values = Matrix::zeros(m, frame.j());
    for (j, col) in columns.into_iter().enumerate() {
        values.set_col(j, &col?);
    }
    DataTable::new(frame.table().names().to_vec(), values)
}

/// [`sample_from_params`] with the parameters of a fit.
pub fn sample_from_fit<R: Rng + ?Sized>(
    fit: &FitResult,
    frame: &RankFrame,
    m: usize,
    rng: &mut R,
) -> Result<DataTable> {
    sample_from_params(&fit.params, frame, m, rng)
}
