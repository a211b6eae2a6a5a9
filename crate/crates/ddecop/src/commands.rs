//! The four subcommands as library functions.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ddecop_core::model::{ancestral_sample, canonicalize};
use ddecop_core::rng::substream;
use ddecop_core::sim::{self, BaggedTrees, EvalReport, Preset, SyntheticSpec};
use ddecop_core::{fit, DdeParams, FitResult, RankFrame, Variant};

use crate::config::{variant_name, RunConfig};
use crate::io::{load_table, require_file, table_to_csv, write_atomic, CsvFormat};
use crate::model_file::{Meta, ModelFile, SpecFile};

/// Rows of the latent sample used to canonicalize a fitted model.
pub const CANONICAL_SAMPLE_ROWS: usize = 100_000;

pub const DEFAULT_SIM_ROWS: usize = 1000;

/// Header of the parameter-recovery report.
pub const REPORT_HEADER: &str = "layer,graph_recovery,mse,estimated_width,true_width,padded,permutation,complemented";

const TAG_CANON: u64 = 0x4341_4E4F_4E00_0001;
const TAG_SIM: u64 = 0x5349_4D00_0000_0001;
const TAG_SAMPLE: u64 = 0x5341_4D50_0000_0001;
const TAG_PMSE: u64 = 0x504D_5345_0000_0003;

/// Options shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub config: Option<PathBuf>,
}

impl Common {
    fn prepare(&self) -> Result<RunConfig> {
        let cfg = RunConfig::load(self.config.as_deref())?;
        fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("cannot create output directory {}", self.output_dir.display()))?;
        Ok(cfg)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

fn csv_format(cfg: &RunConfig, delimiter: Option<u8>, no_header: bool) -> Result<CsvFormat> {
    let mut f = cfg.csv_format()?;
    if let Some(d) = delimiter {
        f.delimiter = d;
    }
    if no_header {
        f.has_header = false;
    }
    Ok(f)
}

fn read_model(path: &Path) -> Result<DdeParams> {
    require_file(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ModelFile::from_json(&text).and_then(|m| m.to_params()).with_context(|| format!("{}", path.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub common: Common,
    pub input: PathBuf,
    pub variant: Option<Variant>,
    pub delimiter: Option<u8>,
    pub no_header: bool,
}

/// Fits a model to a table and writes `model.json`, `trace.csv` and
/// `report.txt`.
pub fn cmd_fit(opts: &FitOptions) -> Result<()> {
    require_file(&opts.input)?;
    let cfg = opts.common.prepare()?;
    let table = load_table(&opts.input, csv_format(&cfg, opts.delimiter, opts.no_header)?)?;
    let frame = RankFrame::new(table);
    let fit_cfg = cfg.fit_config(opts.common.seed, opts.variant)?;
    log::info!("fitting {} x {} table", frame.n(), frame.j());
    let result = fit(&frame, &fit_cfg, None).context("fit failed")?;
    let sample =
        ancestral_sample(&result.params, CANONICAL_SAMPLE_ROWS, &mut substream(opts.common.seed, TAG_CANON, 0))?;
    let params = canonicalize(&result.params, &sample).context("canonicalization failed")?;
    let meta = Meta {
        seed: opts.common.seed,
        canonical: true,
        variant: Some(variant_name(fit_cfg.variant).to_string()),
        iterations: Some(result.iterations_run),
        converged: Some(result.converged),
        effective_widths: Some(result.effective_widths.clone()),
    };
    let model = ModelFile::from_params(&params, meta).to_json();
    let trace = trace_csv(&result);
    let report = fit_report(&opts.input, &frame, &fit_cfg.variant, &result, &params);
    write_atomic(&opts.common.out("model.json"), model.as_bytes())?;
    write_atomic(&opts.common.out("trace.csv"), trace.as_bytes())?;
    write_atomic(&opts.common.out("report.txt"), report.as_bytes())?;
    Ok(())
}

fn trace_csv(result: &FitResult) -> String {
    let depth = result.params.depth();
    let mut out = String::from("iteration,tau,gaussian_loglik");
    for l in 1..=depth {
        write!(out, ",rel_change_{l}").unwrap();
    }
    for l in 1..=depth {
        write!(out, ",width_{l}").unwrap();
    }
    out.push('\n');
    for row in &result.trace {
        write!(out, "{},{},{}", row.iteration, row.tau, row.gaussian_loglik).unwrap();
        for r in &row.rel_change {
            write!(out, ",{r}").unwrap();
        }
        for w in &row.widths {
            write!(out, ",{w}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn join<T: std::fmt::Display>(items: &[T], sep: &str) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

fn fit_report(input: &Path, frame: &RankFrame, variant: &Variant, result: &FitResult, canonical: &DdeParams) -> String {
    let mut s = String::new();
    let name = input.file_name().map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned());
    writeln!(s, "input: {name} ({} rows, {} columns)", frame.n(), frame.j()).unwrap();
    writeln!(s, "variant: {}", variant_name(*variant)).unwrap();
    writeln!(
        s,
        "iterations: {} ({})",
        result.iterations_run,
        if result.converged { "converged" } else { "iteration limit reached" }
    )
    .unwrap();
    writeln!(s, "candidate widths: {}", join(canonical.dims.widths(), ", ")).unwrap();
    writeln!(s, "effective widths: {}", join(&result.effective_widths, ", ")).unwrap();
    if result.capped {
        writeln!(s, "warning: some logistic coefficients reached the magnitude cap").unwrap();
    }
    let mut g = canonical.gamma.clone();
    g.sort_by(f64::total_cmp);
    writeln!(s, "gamma (canonical): min {:.4}, median {:.4}, max {:.4}", g[0], g[g.len() / 2], g[g.len() - 1]).unwrap();
    let pi: Vec<String> = canonical.pi.iter().map(|p| format!("{p:.4}")).collect();
    writeln!(s, "top-layer pi: {}", pi.join(", ")).unwrap();
    for (l, w) in canonical.weights.iter().enumerate() {
        let nonzero = (0..w.rows())
            .flat_map(|r| (0..w.latent()).map(move |k| (r, k)))
            .filter(|&(r, k)| w.coef(r, k) != 0.0)
            .count();
        writeln!(s, "B{}: {} x {}, {nonzero} nonzero coefficients", l + 1, w.rows(), w.latent() + 1).unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub common: Common,
    pub preset: Option<String>,
    /// A design written by an earlier run.
    pub spec: Option<PathBuf>,
    pub n: Option<usize>,
}

/// Generates a dataset and writes `data.csv`, `truth.json` and `spec.json`.
pub fn cmd_simulate(opts: &SimulateOptions) -> Result<()> {
    if let Some(p) = &opts.spec {
        require_file(p)?;
    }
    let cfg = opts.common.prepare()?;
    let seed = opts.common.seed;
    let mut spec = match (&opts.spec, opts.preset.as_ref().or(cfg.preset.as_ref())) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            SpecFile::from_json(&text).and_then(|f| f.to_spec()).with_context(|| format!("{}", path.display()))?
        }
        (None, Some(name)) => {
            let preset = Preset::from_name(name)?;
            let n = opts.n.or(cfg.n).unwrap_or(DEFAULT_SIM_ROWS);
            SyntheticSpec::from_preset(preset, n, &mut substream(seed, TAG_SIM, 0))?
        }
        (None, None) => {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            bail!("simulate needs --preset or --spec; valid presets: {}", names.join(", "));
        }
    };
    if let Some(n) = opts.n.or(cfg.n) {
        spec.n = n;
    }
    if let Some(pi0) = cfg.pi0 {
        spec.pi0 = pi0;
    }
    spec.validate()?;
    let (table, _) = sim::generate_synthetic_dataset(&spec, &mut substream(seed, TAG_SIM, 1))?;
    let meta = Meta { seed, canonical: true, ..Meta::default() };
    let truth = ModelFile::from_params(&spec.params, meta.clone()).to_json();
    let spec_json = SpecFile::from_spec(&spec, meta).to_json();
    write_atomic(&opts.common.out("data.csv"), table_to_csv(&table).as_bytes())?;
    write_atomic(&opts.common.out("truth.json"), truth.as_bytes())?;
    write_atomic(&opts.common.out("spec.json"), spec_json.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    pub common: Common,
    pub model: PathBuf,
    pub input: PathBuf,
    pub m: Option<usize>,
    pub delimiter: Option<u8>,
    pub no_header: bool,
}

/// Draws synthetic rows from a fitted model into `synthetic.csv`.
pub fn cmd_sample(opts: &SampleOptions) -> Result<()> {
    require_file(&opts.model)?;
    require_file(&opts.input)?;
    let cfg = opts.common.prepare()?;
    let params = read_model(&opts.model)?;
    let table = load_table(&opts.input, csv_format(&cfg, opts.delimiter, opts.no_header)?)?;
    let frame = RankFrame::new(table);
    let m = opts.m.or(cfg.m).unwrap_or(frame.n());
    let synthetic = sim::sample_from_params(&params, &frame, m, &mut substream(opts.common.seed, TAG_SAMPLE, 0))?;
    write_atomic(&opts.common.out("synthetic.csv"), table_to_csv(&synthetic).as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOptions {
    pub common: Common,
    pub truth: Option<PathBuf>,
    pub estimate: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub synthetic: Option<PathBuf>,
    pub folds: Option<usize>,
    pub delimiter: Option<u8>,
    pub no_header: bool,
}

/// Parameter recovery (`report.csv`, `report.txt`) from a truth and an
/// estimate, or pMSE (`pmse.csv`) from a real and a synthetic table.
pub fn cmd_evaluate(opts: &EvaluateOptions) -> Result<()> {
    for p in [&opts.truth, &opts.estimate, &opts.input, &opts.synthetic].into_iter().flatten() {
        require_file(p)?;
    }
    let cfg = opts.common.prepare()?;
    match (&opts.truth, &opts.estimate, &opts.input, &opts.synthetic) {
        (Some(t), Some(e), None, None) => {
            let truth = read_model(t)?;
            let estimate = read_model(e)?;
            let report = sim::evaluate(&truth, &estimate)?;
            write_atomic(&opts.common.out("report.csv"), report_csv(&report, &truth).as_bytes())?;
            write_atomic(&opts.common.out("report.txt"), report_text(&report, &truth).as_bytes())?;
        }
        (None, None, Some(real), Some(synth)) => {
            let format = csv_format(&cfg, opts.delimiter, opts.no_header)?;
            let real = load_table(real, format)?;
            let synth = load_table(synth, format)?;
            let folds = opts.folds.or(cfg.folds).unwrap_or(sim::pmse::DEFAULT_FOLDS);
            let value = sim::pmse_with(
                &real,
                &synth,
                folds,
                &BaggedTrees::default(),
                &mut substream(opts.common.seed, TAG_PMSE, 0),
            )?;
            write_atomic(&opts.common.out("pmse.csv"), format!("folds,pmse\n{folds},{value}\n").as_bytes())?;
        }
        _ => bail!("evaluate needs either --truth and --estimate, or --input and --synthetic"),
    }
    Ok(())
}

pub fn report_csv(report: &EvalReport, truth: &DdeParams) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for l in 0..report.recovery.len() {
        let perm: Vec<String> = report.permutations[l].iter().map(|k| (k + 1).to_string()).collect();
        let flips: Vec<&str> = report.flips[l].iter().map(|&f| if f { "1" } else { "0" }).collect();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            l + 1,
            report.recovery[l],
            report.mse[l],
            report.widths[l],
            truth.dims.width(l),
            report.padded[l],
            perm.join(" "),
            flips.join(" ")
        )
        .unwrap();
    }
    s
}

fn report_text(report: &EvalReport, truth: &DdeParams) -> String {
    let mut s = String::new();
    for l in 0..report.recovery.len() {
        writeln!(
            s,
            "layer {}: graph recovery {:.4}, MSE {:.6}, width {} (true {}){}",
            l + 1,
            report.recovery[l],
            report.mse[l],
            report.widths[l],
            truth.dims.width(l),
            if report.padded[l] { ", zero-padded for alignment" } else { "" }
        )
        .unwrap();
    }
    s
}
