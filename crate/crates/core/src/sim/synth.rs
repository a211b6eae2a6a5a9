//! Simulation designs and synthetic data generation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::DataTable;
use crate::linalg::Matrix;
use crate::model::{
    ancestral_sample, canonicalize_exact, first_layer_distribution, DdeDims, DdeParams, LatentState, WeightMatrix,
};
use crate::par;
use crate::rng::{fork_key, substream};
use crate::sim::margins::{marginal_transform, MarginType};
use crate::special::normal_cdf;

/// Zero-inflation mass of the zero-inflated Poisson columns.
pub const DEFAULT_PI0: f64 = 0.3;

/// Rates are drawn uniformly from `1..=MAX_RATE`.
pub const MAX_RATE: u32 = 10;

/// Largest first-layer width whose mixture CDF is evaluated exactly.
pub const EXACT_CDF_MAX_WIDTH: usize = 12;

/// Rows in the reference sample behind an empirical latent CDF.
pub const REFERENCE_ROWS: usize = 100_000;

const TAG_REFERENCE: u64 = 0x5245_4600_0000_0001;

/// Built-in block-sparse designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `J = 30`, `K = (4, 2)`.
    Desk,
    PaperJ50,
    PaperJ100,
    PaperJ150,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Desk, Preset::PaperJ50, Preset::PaperJ100, Preset::PaperJ150];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::PaperJ50 => "paper-J50",
            Preset::PaperJ100 => "paper-J100",
            Preset::PaperJ150 => "paper-J150",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            Error::Invalid(format!("unknown preset {name:?}; valid presets: {}", names.join(", ")))
        })
    }

    /// `(J, K1, K2)`.
    pub fn shape(self) -> (usize, usize, usize) {
        match self {
            Preset::Desk => (30, 4, 2),
            Preset::PaperJ50 => (50, 10, 3),
            Preset::PaperJ100 => (100, 10, 3),
            Preset::PaperJ150 => (150, 10, 3),
        }
    }

    /// Canonicalized true parameters of the design.
    pub fn params(self) -> Result<DdeParams> {
        let (j, k1, k2) = self.shape();
        block_params(j, k1, k2)
    }
}

fn block_of(index: usize, count: usize, blocks: usize) -> usize {
    index * blocks / count
}

/// Two-layer block design: observed column `j` loads on one first-layer unit
/// with magnitude 2 and a sign alternating between blocks; each first-layer
/// unit has one parent with coefficient 3 and intercept -1.5. Top-layer
/// probabilities are 0.5. The result is canonicalized exactly.
pub fn block_params(j_dim: usize, k1: usize, k2: usize) -> Result<DdeParams> {
    if k1 == 0 || k2 == 0 || k1 > j_dim || k2 > k1 {
        return Err(Error::Invalid(format!("block design needs J >= K1 >= K2 >= 1, got ({j_dim}, {k1}, {k2})")));
    }
    let dims = DdeDims::new(j_dim, vec![k1, k2])?;
    let mut b1 = WeightMatrix::zeros(j_dim, k1);
    for j in 0..j_dim {
        let b = block_of(j, j_dim, k1);
        let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
        b1.set_coef(j, b, 2.0 * sign);
    }
    let mut b2 = WeightMatrix::zeros(k1, k2);
    for k in 0..k1 {
        b2.row_mut(k)[0] = -1.5;
        b2.set_coef(k, block_of(k, k1, k2), 3.0);
    }
    let params = DdeParams::new(dims, vec![b1, b2], vec![1.0; j_dim], vec![0.5; k2])?;
    canonicalize_exact(&params)
}

/// Everything needed to regenerate a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub params: DdeParams,
    pub margins: Vec<MarginType>,
    pub rates: Vec<u32>,
    pub pi0: f64,
    pub n: usize,
}

impl SyntheticSpec {
    /// Cyclic margin plan with rates drawn from `rng`.
    pub fn new<R: Rng + ?Sized>(params: DdeParams, n: usize, rng: &mut R) -> Result<Self> {
        let j_dim = params.observed();
        let margins = (0..j_dim).map(MarginType::cyclic).collect();
        let rates = (0..j_dim).map(|_| rng.random_range(1..=MAX_RATE)).collect();
        let spec = Self { params, margins, rates, pi0: DEFAULT_PI0, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_preset<R: Rng + ?Sized>(preset: Preset, n: usize, rng: &mut R) -> Result<Self> {
        Self::new(preset.params()?, n, rng)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let j_dim = self.params.observed();
        if self.margins.len() != j_dim || self.rates.len() != j_dim {
            return Err(Error::Shape(format!(
                "{} margins and {} rates for {j_dim} columns",
                self.margins.len(),
                self.rates.len()
            )));
        }
        if let Some(j) = self.rates.iter().position(|r| !(1..=MAX_RATE).contains(r)) {
            return Err(Error::Domain(format!("rate {} of column {} outside 1..={MAX_RATE}", self.rates[j], j + 1)));
        }
        if !(0.0..1.0).contains(&self.pi0) {
            return Err(Error::Domain(format!("pi0 = {} outside [0, 1)", self.pi0)));
        }
        if self.n < 2 {
            return Err(Error::Invalid("a synthetic dataset needs at least two rows".into()));
        }
        Ok(())
    }
}

/// Marginal CDFs of the latent Gaussian coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentCdf {
    /// Per column, the distinct component means with their weights.
    Mixture { components: Vec<Vec<(f64, f64)>>, sd: Vec<f64> },
    /// Per column, a sorted reference sample.
    Empirical { sorted: Vec<Vec<f64>> },
}

impl LatentCdf {
    /// Exact mixture CDFs when the first layer has at most
    /// [`EXACT_CDF_MAX_WIDTH`] units, otherwise the empirical CDF of a
    /// [`REFERENCE_ROWS`]-row sample drawn from `seed`.
    pub fn for_params(params: &DdeParams, seed: u64) -> Result<Self> {
        if params.dims.width(0) <= EXACT_CDF_MAX_WIDTH {
            Self::mixture(params)
        } else {
            Self::empirical(params, REFERENCE_ROWS, seed)
        }
    }

    pub fn mixture(params: &DdeParams) -> Result<Self> {
        let dist = first_layer_distribution(params)?;
        let components = par::map_indexed(params.observed(), |j| {
            let mut merged: BTreeMap<u64, f64> = BTreeMap::new();
            for (config, w) in &dist {
                *merged.entry(params.mean(j, config).to_bits()).or_default() += w;
            }
            merged.into_iter().map(|(m, w)| (f64::from_bits(m), w)).collect()
        });
        let sd = params.gamma.iter().map(|g| libm::sqrt(*g)).collect();
        Ok(LatentCdf::Mixture { components, sd })
    }

    pub fn empirical(params: &DdeParams, rows: usize, seed: u64) -> Result<Self> {
        let mut rng = substream(seed, TAG_REFERENCE, 0);
        let reference = ancestral_sample(params, rows, &mut rng)?;
        let sorted = par::map_indexed(params.observed(), |j| {
            let mut col = reference.z.col(j);
            col.sort_by(f64::total_cmp);
            col
        });
        Ok(LatentCdf::Empirical { sorted })
    }

    /// `P(Z_j <= z)`.
    pub fn cdf(&self, j: usize, z: f64) -> f64 {
        match self {
            LatentCdf::Mixture { components, sd } => {
                let p: f64 = components[j].iter().map(|&(m, w)| w * normal_cdf((z - m) / sd[j])).sum();
                p.clamp(0.0, 1.0)
            }
            LatentCdf::Empirical { sorted } => {
                let s = &sorted[j];
                s.partition_point(|&v| v <= z) as f64 / s.len() as f64
            }
        }
    }
}

/// Samples `(A, Z)` from the true model, maps `Z` through its marginal CDFs
/// and the count margins. Returns the table and the latent draw.
pub fn generate_synthetic_dataset<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<(DataTable, LatentState)> {
    spec.validate()?;
    let latent = ancestral_sample(&spec.params, spec.n, rng)?;
    let cdf = LatentCdf::for_params(&spec.params, fork_key(rng))?;
    let j_dim = spec.params.observed();
    let columns: Vec<Result<Vec<f64>>> = par::map_indexed(j_dim, |j| {
        (0..spec.n)
            .map(|i| {
                let q = cdf.cdf(j, latent.z.row(i)[j]);
                marginal_transform(q, spec.margins[j], spec.rates[j] as f64, spec.pi0).map(|x| x as f64)
            })
            .collect()
    });
    let mut values = Matrix::zeros(spec.n, j_dim);
    for (j, col) in columns.into_iter().enumerate() {
        values.set_col(j, &col?);
    }
    Ok((DataTable::unnamed(values)?, latent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn desk_preset_shape() {
        let p = Preset::Desk.params().unwrap();
        assert_eq!(p.dims.widths(), &[4, 2]);
        assert_eq!(p.observed(), 30);
        let nonzero = (0..30).filter(|&j| (0..4).any(|k| p.weights[0].coef(j, k) != 0.0)).count();
        assert_eq!(nonzero, 30);
        assert!(Preset::from_name("paper-J75").unwrap_err().to_string().contains("paper-J100"));
    }

    #[test]
    fn mixture_and_empirical_cdfs_agree() {
        let p = Preset::Desk.params().unwrap();
        let exact = LatentCdf::mixture(&p).unwrap();
        let emp = LatentCdf::empirical(&p, 50_000, 3).unwrap();
        for j in [0, 9, 29] {
            for z in [-1.5, -0.2, 0.0, 0.7, 2.0] {
                assert!((exact.cdf(j, z) - emp.cdf(j, z)).abs() < 0.01);
            }
        }
    }

    #[test]
    fn rates_in_range_and_reproducible() {
        let spec = SyntheticSpec::from_preset(Preset::Desk, 50, &mut substream(1, 2, 3)).unwrap();
        assert!(spec.rates.iter().all(|r| (1..=10).contains(r)));
        let (a, _) = generate_synthetic_dataset(&spec, &mut substream(4, 5, 6)).unwrap();
        let (b, _) = generate_synthetic_dataset(&spec, &mut substream(4, 5, 6)).unwrap();
        assert_eq!(a, b);
        assert!(a.values().as_slice().iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
    }
}
