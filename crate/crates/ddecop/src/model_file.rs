//! JSON persistence of model parameters and simulation designs.

use anyhow::{bail, Context, Result};
use ddecop_core::sim::{MarginType, SyntheticSpec};
use ddecop_core::{DdeDims, DdeParams, Matrix, WeightMatrix};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsFile {
    pub observed: usize,
    pub widths: Vec<usize>,
}

/// Free-form provenance stored beside the parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Meta {
    pub seed: u64,
    /// Whether every `Z_j` has been normalized to mean 0 and variance 1.
    pub canonical: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_widths: Option<Vec<usize>>,
}

/// On-disk model: `B[l]` is a list of rows, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    pub dims: DimsFile,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
    pub gamma: Vec<f64>,
    pub pi: Vec<f64>,
    pub meta: Meta,
}

impl ModelFile {
    pub fn from_params(params: &DdeParams, meta: Meta) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            dims: DimsFile { observed: params.observed(), widths: params.dims.widths().to_vec() },
            b: params.weights.iter().map(|w| w.matrix().row_iter().map(<[f64]>::to_vec).collect()).collect(),
            gamma: params.gamma.clone(),
            pi: params.pi.clone(),
            meta,
        }
    }

    pub fn to_params(&self) -> Result<DdeParams> {
        if self.schema != SCHEMA_VERSION {
            bail!("field `schema`: unsupported version {}, expected {SCHEMA_VERSION}", self.schema);
        }
        let dims = DdeDims::new(self.dims.observed, self.dims.widths.clone()).context("field `dims`")?;
        let weights = self
            .b
            .iter()
            .enumerate()
            .map(|(l, rows)| {
                let m = Matrix::from_rows(rows).with_context(|| format!("field `B[{l}]`"))?;
                WeightMatrix::new(m).with_context(|| format!("field `B[{l}]`"))
            })
            .collect::<Result<Vec<_>>>()?;
        DdeParams::new(dims, weights, self.gamma.clone(), self.pi.clone()).context("fields `B`, `gamma`, `pi`")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("invalid model file")
    }
}

/// On-disk simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub schema: u32,
    pub n: usize,
    pub pi0: f64,
    pub margins: Vec<String>,
    pub rates: Vec<u32>,
    pub model: ModelFile,
}

impl SpecFile {
    pub fn from_spec(spec: &SyntheticSpec, meta: Meta) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            n: spec.n,
            pi0: spec.pi0,
            margins: spec.margins.iter().map(|m| m.name().to_string()).collect(),
            rates: spec.rates.clone(),
            model: ModelFile::from_params(&spec.params, meta),
        }
    }

    pub fn to_spec(&self) -> Result<SyntheticSpec> {
        if self.schema != SCHEMA_VERSION {
            bail!("field `schema`: unsupported version {}, expected {SCHEMA_VERSION}", self.schema);
        }
        let margins = self
            .margins
            .iter()
            .map(|m| MarginType::from_name(m))
            .collect::<Result<Vec<_>, _>>()
            .context("field `margins`")?;
        let spec = SyntheticSpec {
            params: self.model.to_params().context("field `model`")?,
            margins,
            rates: self.rates.clone(),
            pi0: self.pi0,
            n: self.n,
        };
        spec.validate().context("invalid simulation design")?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("invalid simulation design file")
    }
}
