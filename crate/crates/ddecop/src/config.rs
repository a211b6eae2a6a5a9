//! Flat TOML run configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ddecop_core::{FitConfig, Variant};
use serde::Deserialize;

use crate::io::{require_file, CsvFormat};

/// Every key is optional; names follow the library's field names.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub max_iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub tau0: Option<f64>,
    pub tau_increment: Option<f64>,
    pub xi: Option<f64>,
    pub window: Option<usize>,
    pub tol: Option<f64>,
    pub monte_carlo_count: Option<usize>,
    pub solver_tol: Option<f64>,
    pub variant: Option<String>,
    pub depth: Option<usize>,
    pub max_widths: Option<Vec<usize>>,
    pub lambda1: Option<Vec<f64>>,
    /// Simulation: preset name.
    pub preset: Option<String>,
    /// Simulation: rows to generate.
    pub n: Option<usize>,
    pub pi0: Option<f64>,
    /// Sampling: synthetic rows to draw.
    pub m: Option<usize>,
    /// Evaluation: cross-validation folds for pMSE.
    pub folds: Option<usize>,
    pub delimiter: Option<String>,
    pub has_header: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        require_file(path)?;
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    /// Fit settings: defaults overridden by the file, then by `variant`.
    pub fn fit_config(&self, seed: u64, variant: Option<Variant>) -> Result<FitConfig> {
        let d = FitConfig::default();
        let variant = match (variant, &self.variant) {
            (Some(v), _) => v,
            (None, Some(name)) => parse_variant(name)?,
            (None, None) => d.variant,
        };
        let cfg = FitConfig {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            tau0: self.tau0.unwrap_or(d.tau0),
            tau_increment: self.tau_increment.unwrap_or(d.tau_increment),
            xi: self.xi.or(d.xi),
            window: self.window.unwrap_or(d.window),
            tol: self.tol.unwrap_or(d.tol),
            monte_carlo_count: self.monte_carlo_count.unwrap_or(d.monte_carlo_count),
            solver_tol: self.solver_tol.unwrap_or(d.solver_tol),
            seed,
            variant,
            depth: self.depth.unwrap_or(d.depth),
            max_widths: self.max_widths.clone().or(d.max_widths),
            lambda1: self.lambda1.clone().or(d.lambda1),
        };
        cfg.validate().context("invalid fit configuration")?;
        Ok(cfg)
    }

    pub fn csv_format(&self) -> Result<CsvFormat> {
        let mut f = CsvFormat::default();
        if let Some(d) = &self.delimiter {
            f.delimiter = parse_delimiter(d)?;
        }
        if let Some(h) = self.has_header {
            f.has_header = h;
        }
        Ok(f)
    }
}

pub const VARIANT_NAMES: [&str; 2] = ["csp-meanfield", "csp-exactgibbs"];

pub fn parse_variant(name: &str) -> Result<Variant> {
    match name {
        "csp-meanfield" => Ok(Variant::MeanField),
        "csp-exactgibbs" => Ok(Variant::ExactGibbs),
        other => bail!("unknown variant {other:?}; valid variants: {}", VARIANT_NAMES.join(", ")),
    }
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::MeanField => VARIANT_NAMES[0],
        Variant::ExactGibbs => VARIANT_NAMES[1],
    }
}

/// A single ASCII character, or `tab`.
pub fn parse_delimiter(s: &str) -> Result<u8> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        s if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        other => bail!("delimiter must be a single ASCII character or `tab`, got {other:?}"),
    }
}
