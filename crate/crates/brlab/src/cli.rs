//! Command line: configuration, subcommand dispatch and artifact export.
//!
//! Parameters come from an optional flat `key=value` file (`--config`) and
//! from `--kebab-case` flags with the same names; flags override the file.
//! Every output embeds the fully resolved configuration.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use brlab_core::decomp::{ab_coefficients, lambda_partition, Piece, Variant};
use brlab_core::specfun::{bessel_j, ComplexOrder};
use brlab_core::sphere::{cap_grid, select_subsets, CapGrid};
use brlab_core::C64;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::engine::{
    bochner_riesz_apply, bochner_riesz_kernel_apply, i_alpha_apply, kernel_grid, materialize_kernels, FieldMeta,
    MultiplierField, RadialTable, SpatialKernel,
};
use crate::error::{config, LabError, LabResult};
use crate::grid::GridSpec;
use crate::harness;
use crate::io::{self, FieldLayout};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "BRLAB_THREADS";

/// Exit code of a successful run.
pub const EXIT_SUCCESS: i32 = 0;
/// Exit code of a run whose acceptance check failed.
pub const EXIT_FAILED_CHECK: i32 = 1;
/// Exit code of a usage, configuration or runtime error.
pub const EXIT_USAGE: i32 = 2;

macro_rules! flag_set {
    ($($field:ident => $key:literal : $help:literal,)*) => {
        /// Parameter flags shared by every subcommand.
        #[derive(Args, Clone, Debug, Default)]
        pub struct Flags {
            $(
                #[doc = $help]
                #[arg(long = $key, value_name = "VALUE")]
                pub $field: Option<String>,
            )*
        }

        impl Flags {
            fn given(&self) -> BTreeMap<String, String> {
                let mut out = BTreeMap::new();
                $(if let Some(v) = &self.$field {
                    out.insert($key.to_string(), v.clone());
                })*
                out
            }
        }

        /// Every configuration key.
        pub const KEYS: &[&str] = &[$($key),*];
    };
}

flag_set! {
    n => "n": "Dimension n",
    j => "j": "Scale index j",
    j_range => "j-range": "Inclusive range of j, `a..b`",
    t_range => "t-range": "Inclusive range of T, `a..b`",
    j_max => "j-max": "Last octave applied by i-alpha",
    sigma => "sigma": "Spacing exponent σ",
    c => "c": "Separation constant c",
    alpha_re => "alpha-re": "Re α",
    alpha_im => "alpha-im": "Im α",
    beta_re => "beta-re": "Re β",
    beta_im => "beta-im": "Im β",
    z_re => "z-re": "Re z (analytic family)",
    z_im => "z-im": "Im z (analytic family)",
    delta => "delta": "Bochner–Riesz exponent δ",
    order_re => "order-re": "Re ν of a Bessel order",
    order_im => "order-im": "Im ν of a Bessel order",
    rho => "rho": "Comma-separated arguments ρ",
    variant => "variant": "Multiplier variant: standard, sharp, flat, analytic",
    m => "m": "Cell index m, or `low` for the low piece",
    ell => "ell": "Subset index ℓ (1-based)",
    side => "side": "Grid points per axis",
    extent => "extent": "Grid half-extent X",
    operator => "operator": "Operator of `apply`: bochner-riesz, i-alpha",
    route => "route": "Route of bochner-riesz: multiplier, kernel",
    experiment => "experiment": "Experiment of `verify`",
    samples => "samples": "Sample count",
    seed => "seed": "Random seed",
    eps_hat => "eps-hat": "Exponent loss ε̂ of the tail-decay series",
    width => "width": "Octaves per tail sum",
    r_max => "r-max": "Truncation radius R of the cone integral",
    points => "points": "Grid points per axis of the nonvanishing scan",
    inputs => "inputs": "Comma-separated report files for `report`",
    format => "format": "Output format: json, csv, bin",
    out => "out": "Output path",
}

/// Subcommands.
#[derive(Subcommand, Clone, Debug)]
pub enum Command {
    /// Evaluate J_ν(ρ) at a list of arguments.
    Bessel(Flags),
    /// Sample a multiplier piece (radial samples, or a grid field with `--format bin`).
    Multiplier(Flags),
    /// Build a cap grid, or its separated subsets when `--c` is given.
    Caps(Flags),
    /// Materialize the kernels P, U, V of one cell.
    Kernel(Flags),
    /// Apply S^δ or I^α to the unit Gaussian.
    Apply(Flags),
    /// Run a verification experiment; exit 1 if it fails.
    Verify(Flags),
    /// Summarize report files; exit 1 if any failed.
    Report(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bessel(_) => "bessel",
            Command::Multiplier(_) => "multiplier",
            Command::Caps(_) => "caps",
            Command::Kernel(_) => "kernel",
            Command::Apply(_) => "apply",
            Command::Verify(_) => "verify",
            Command::Report(_) => "report",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Bessel(f)
            | Command::Multiplier(f)
            | Command::Caps(f)
            | Command::Kernel(f)
            | Command::Apply(f)
            | Command::Verify(f)
            | Command::Report(f) => f,
        }
    }
}

/// Command-line arguments.
#[derive(Parser, Clone, Debug)]
#[command(name = "brlab", version, about = "Bochner–Riesz summability experiments")]
pub struct Cli {
    /// Flat key=value configuration file; flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (falls back to BRLAB_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Subcommand.
    #[command(subcommand)]
    pub command: Command,
}

/// A subcommand with its merged parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    /// Subcommand name.
    pub command: String,
    /// Merged parameters, file entries overridden by flags.
    pub values: BTreeMap<String, String>,
    /// Thread cap, if any.
    pub threads: Option<usize>,
}

/// Parses a flat `key=value` file; blank lines and `#` comments are skipped.
///
/// # Errors
///
/// [`LabError::Config`] for malformed lines or unknown keys.
pub fn parse_config_text(text: &str) -> LabResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config(format!("line {}: requires key=value, got `{line}`", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(config(format!("line {}: unknown key `{key}`", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Merges the config file (if any) with the flags of `cli`.
    ///
    /// # Errors
    ///
    /// I/O and parse errors of the config file.
    pub fn from_cli(cli: &Cli) -> LabResult<Self> {
        let mut values = match &cli.config {
            Some(path) => parse_config_text(&std::fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        values.extend(cli.command.flags().given());
        Ok(Self {
            command: cli.command.name().into(),
            values,
            threads: cli.threads,
        })
    }
}

/// Failure of a run: a usage problem or an error during execution.
#[derive(Debug)]
enum RunError {
    Missing(String),
    Lab(LabError),
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        RunError::Lab(e)
    }
}

impl From<brlab_core::Error> for RunError {
    fn from(e: brlab_core::Error) -> Self {
        RunError::Lab(e.into())
    }
}

type RunResult<T> = Result<T, RunError>;

/// Typed access to the configuration that records every resolved value.
struct Params<'a> {
    cfg: &'a RunConfig,
    resolved: BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self {
            cfg,
            resolved: BTreeMap::new(),
        }
    }

    fn raw(&mut self, key: &str, default: Option<&str>) -> RunResult<String> {
        let value = match (self.cfg.values.get(key), default) {
            (Some(v), _) => v.clone(),
            (None, Some(d)) => d.to_string(),
            (None, None) => return Err(RunError::Missing(key.into())),
        };
        self.resolved.insert(key.into(), value.clone());
        Ok(value)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: Option<&str>) -> RunResult<T> {
        let raw = self.raw(key, default)?;
        raw.parse()
            .map_err(|_| RunError::Lab(config(format!("invalid value for {key}: `{raw}`"))))
    }

    fn f64(&mut self, key: &str, default: Option<&str>) -> RunResult<f64> {
        self.parse(key, default)
    }

    fn usize(&mut self, key: &str, default: Option<&str>) -> RunResult<usize> {
        self.parse(key, default)
    }

    fn u32(&mut self, key: &str, default: Option<&str>) -> RunResult<u32> {
        self.parse(key, default)
    }

    fn u64(&mut self, key: &str, default: Option<&str>) -> RunResult<u64> {
        self.parse(key, default)
    }

    fn complex(&mut self, prefix: &str, re: Option<&str>, im: &str) -> RunResult<C64> {
        Ok(C64::new(
            self.f64(&format!("{prefix}-re"), re)?,
            self.f64(&format!("{prefix}-im"), Some(im))?,
        ))
    }

    fn range(&mut self, key: &str, default: &str) -> RunResult<Vec<u32>> {
        let raw = self.raw(key, Some(default))?;
        let bad = || {
            RunError::Lab(config(format!(
                "invalid value for {key}: `{raw}`, requires `a..b` with a ≤ b"
            )))
        };
        let (a, b) = raw.split_once("..").ok_or_else(bad)?;
        let (a, b): (u32, u32) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a > b {
            return Err(bad());
        }
        Ok((a..=b).collect())
    }

    fn list(&mut self, key: &str, default: Option<&str>) -> RunResult<Vec<f64>> {
        let raw = self.raw(key, default)?;
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| RunError::Lab(config(format!("invalid value for {key}: `{raw}`"))))
            })
            .collect()
    }

    fn format(&mut self, allowed: &[&str], default: &str) -> RunResult<String> {
        let f = self.raw("format", Some(default))?;
        if !allowed.contains(&f.as_str()) {
            return Err(RunError::Lab(config(format!(
                "requires format ∈ {{{}}} for {}, got `{f}`",
                allowed.join(", "),
                self.cfg.command
            ))));
        }
        Ok(f)
    }

    fn out(&mut self) -> RunResult<PathBuf> {
        Ok(PathBuf::from(self.raw("out", None)?))
    }

    fn variant(&mut self, n: usize) -> RunResult<Variant> {
        let name = self.raw("variant", None)?;
        let variant = match name.as_str() {
            "standard" => Variant::Standard {
                alpha: self.complex("alpha", Some("0.8"), "0")?,
            },
            "sharp" => Variant::Sharp {
                alpha: self.complex("alpha", Some("0.8"), "0")?,
                beta: self.complex("beta", Some("0.4875"), "0")?,
            },
            "flat" => Variant::Flat {
                alpha: self.complex("alpha", Some("0.8"), "0")?,
                beta: self.complex("beta", Some("0.25"), "0")?,
            },
            "analytic" => {
                let alpha = self.complex("alpha", Some("0.8"), "0")?;
                let z = self.complex("z", Some("0.5"), "0")?;
                Variant::Analytic {
                    alpha,
                    z,
                    ab: ab_coefficients(alpha.re, n)?,
                }
            }
            other => {
                return Err(RunError::Lab(config(format!(
                    "requires variant ∈ {{standard, sharp, flat, analytic}}, got `{other}`"
                ))))
            }
        };
        variant.validate(n)?;
        Ok(variant)
    }

    fn resolved_config(&self) -> BTreeMap<String, String> {
        let mut out = self.resolved.clone();
        out.insert("command".into(), self.cfg.command.clone());
        out
    }
}

/// Envelope of every JSON output.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a BTreeMap<String, String>,
    result: &'a T,
}

fn write_json_result<T: Serialize>(path: &Path, cfg: &BTreeMap<String, String>, value: &T) -> LabResult<()> {
    io::write_json(
        path,
        &Envelope {
            config: cfg,
            result: value,
        },
    )
}

fn config_comment(cfg: &BTreeMap<String, String>) -> String {
    cfg.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn write_csv_result(
    path: &Path,
    cfg: &BTreeMap<String, String>,
    header: &[&str],
    rows: &[Vec<String>],
) -> LabResult<()> {
    let body = io::csv_string(header, rows)?;
    io::write_atomic(path, format!("{}{body}", config_comment(cfg)).as_bytes())
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => n.as_f64().map(io::format_f64),
        Value::Bool(b) => Some(b.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

/// Collects every array of objects in `value` as rows tagged by path.
fn collect_tables(value: &Value, path: &str, out: &mut Vec<(String, BTreeMap<String, String>)>) {
    match value {
        Value::Array(items) if items.iter().all(Value::is_object) && !items.is_empty() => {
            for item in items {
                let mut row = BTreeMap::new();
                if let Value::Object(map) = item {
                    for (k, v) in map {
                        if let Some(s) = scalar_text(v) {
                            row.insert(k.clone(), s);
                        } else if let Value::Array(a) = v {
                            for (i, x) in a.iter().enumerate() {
                                if let Some(s) = scalar_text(x) {
                                    row.insert(format!("{k}[{i}]"), s);
                                }
                            }
                        }
                    }
                }
                out.push((path.to_string(), row));
            }
        }
        Value::Object(map) => {
            for (k, v) in map {
                let p = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                collect_tables(v, &p, out);
            }
        }
        _ => {}
    }
}

fn report_rows(value: &Value) -> (Vec<String>, Vec<Vec<String>>) {
    let mut tables = Vec::new();
    collect_tables(value, "", &mut tables);
    let mut keys: Vec<String> = tables.iter().flat_map(|(_, r)| r.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    let mut header = vec!["table".to_string()];
    header.extend(keys.iter().cloned());
    let rows = tables
        .into_iter()
        .map(|(t, r)| {
            let mut row = vec![t];
            row.extend(keys.iter().map(|k| r.get(k).cloned().unwrap_or_default()));
            row
        })
        .collect();
    (header, rows)
}

/// Writes a report as JSON or as CSV with one row per table entry.
fn write_report<T: Serialize>(path: &Path, format: &str, cfg: &BTreeMap<String, String>, report: &T) -> LabResult<()> {
    if format == "csv" {
        let value = serde_json::to_value(report)?;
        let (header, rows) = report_rows(&value);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv_result(path, cfg, &header, &rows)
    } else {
        write_json_result(path, cfg, report)
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_bessel(p: &mut Params) -> RunResult<bool> {
    let order = ComplexOrder::new(p.f64("order-re", None)?, p.f64("order-im", Some("0"))?)?;
    let rhos = p.list("rho", None)?;
    let format = p.format(&["json", "csv"], "json")?;
    let out = p.out()?;
    #[derive(Serialize)]
    struct Row {
        rho: f64,
        re: f64,
        im: f64,
    }
    let rows = rhos
        .iter()
        .map(|&rho| {
            bessel_j(order, rho).map(|v| Row {
                rho,
                re: v.re,
                im: v.im,
            })
        })
        .collect::<brlab_core::Result<Vec<_>>>()?;
    let cfg = p.resolved_config();
    if format == "csv" {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![io::format_f64(r.rho), io::format_f64(r.re), io::format_f64(r.im)])
            .collect();
        write_csv_result(&out, &cfg, &["rho", "re", "im"], &body)?;
    } else {
        write_json_result(&out, &cfg, &rows)?;
    }
    Ok(true)
}

fn grid_from(p: &mut Params, n: usize, side: &str, extent: &str) -> RunResult<GridSpec> {
    let side = p.usize("side", Some(side))?;
    let extent = p.f64("extent", Some(extent))?;
    Ok(GridSpec::new(n, side, extent)?)
}

fn cmd_multiplier(p: &mut Params) -> RunResult<bool> {
    let n = p.usize("n", Some("2"))?;
    let variant = p.variant(n)?;
    let m_raw = p.raw("m", Some("1"))?;
    let j = if m_raw == "low" { 0 } else { p.u32("j", None)? };
    let sigma = p.f64("sigma", Some("0.1"))?;
    let format = p.format(&["json", "csv", "bin"], "json")?;
    let scale = if m_raw == "low" {
        None
    } else {
        Some(lambda_partition(j, sigma)?)
    };
    let piece = match (&scale, m_raw.as_str()) {
        (None, _) => Piece::Low,
        (Some(s), raw) => {
            let m: usize = raw
                .parse()
                .map_err(|_| RunError::Lab(config(format!("invalid value for m: `{raw}`"))))?;
            s.cell(m)?;
            Piece::Cell(s, m)
        }
    };
    let spec = if format == "bin" {
        Some(grid_from(p, n, "256", "21.333333333333332")?)
    } else {
        None
    };
    let samples = if format == "bin" {
        0
    } else {
        p.usize("samples", Some("1025"))?
    };
    let out = p.out()?;
    let cfg = p.resolved_config();
    let m_index = match piece {
        Piece::Cell(_, m) => Some(m),
        _ => None,
    };
    let mut meta = FieldMeta::for_variant(&variant, scale.as_ref().map(|s| s.j), m_index, None);
    meta.params.insert("sigma".into(), sigma);
    let table = RadialTable::for_piece(&variant, n, piece)?;
    match spec {
        Some(spec) => {
            let field = MultiplierField::from_radial(spec, meta, &table)?;
            io::write_field(&out, &spec, &field.values, &field.meta, FieldLayout::FrequencyFftOrder)?;
            write_json_result(&with_suffix(&out, ".config.json"), &cfg, &field.meta)?;
        }
        None => {
            let rows: Vec<[f64; 3]> = (0..samples)
                .map(|i| {
                    let rho = 3.0 * i as f64 / (samples.max(2) - 1) as f64;
                    let v = table.eval(rho) * brlab_core::kernels::cutoff_phi_hat(rho);
                    [rho, v.re, v.im]
                })
                .collect();
            if format == "csv" {
                let body: Vec<Vec<String>> = rows
                    .iter()
                    .map(|r| r.iter().map(|x| io::format_f64(*x)).collect())
                    .collect();
                write_csv_result(&out, &cfg, &["rho", "re", "im"], &body)?;
            } else {
                #[derive(Serialize)]
                struct Radial<'a> {
                    meta: &'a FieldMeta,
                    samples: &'a [[f64; 3]],
                }
                write_json_result(
                    &out,
                    &cfg,
                    &Radial {
                        meta: &meta,
                        samples: &rows,
                    },
                )?;
            }
        }
    }
    Ok(true)
}

fn cmd_caps(p: &mut Params) -> RunResult<bool> {
    let n = p.usize("n", None)?;
    let j = p.u32("j", None)?;
    let c = if p.cfg.values.contains_key("c") {
        Some(p.f64("c", None)?)
    } else {
        None
    };
    let sigma = if c.is_some() {
        Some(p.f64("sigma", Some("0.1"))?)
    } else {
        None
    };
    p.format(&["json"], "json")?;
    let out = p.out()?;
    let grid = cap_grid(j, n)?;
    let cfg = p.resolved_config();
    match (c, sigma) {
        (Some(c), Some(sigma)) => write_json_result(&out, &cfg, &select_subsets(&grid, sigma, c)?)?,
        _ => write_json_result(&out, &cfg, &grid)?,
    }
    Ok(true)
}

/// Reads a `CapGrid` written by `caps` (the `result` of its envelope).
///
/// # Errors
///
/// I/O and parse errors.
pub fn read_cap_grid(path: &Path) -> LabResult<CapGrid> {
    let v: Value = io::read_json(path)?;
    let mut grid: CapGrid = serde_json::from_value(v.get("result").cloned().unwrap_or(Value::Null))?;
    grid.build_index();
    Ok(grid)
}

fn cmd_kernel(p: &mut Params) -> RunResult<bool> {
    let n = p.usize("n", Some("2"))?;
    let variant = p.variant(n)?;
    let j = p.u32("j", None)?;
    let m = p.usize("m", Some("1"))?;
    let ell = p.usize("ell", Some("1"))?;
    let sigma = p.f64("sigma", Some("0.1"))?;
    let c = p.f64("c", Some("8"))?;
    let format = p.format(&["json", "csv", "bin"], "json")?;
    let out = p.out()?;
    let scale = lambda_partition(j, sigma)?;
    scale.cell(m)?;
    let default = kernel_grid(&scale, m, n)?;
    let spec = grid_from(p, n, &default.side.to_string(), &format!("{:?}", default.extent))?;
    let grid = cap_grid(j, n)?;
    let family = select_subsets(&grid, sigma, c)?;
    let cfg = p.resolved_config();
    let triple = materialize_kernels(&variant, &scale, m, &family, ell, spec)?;
    #[derive(Serialize)]
    struct KernelSummary<'a> {
        role: &'a str,
        meta: &'a FieldMeta,
        l1: f64,
        sup: f64,
        imaginary_ratio: f64,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        grid: GridSpec,
        caps: &'a [usize],
        split_residual: f64,
        kernels: Vec<KernelSummary<'a>>,
    }
    let kernels: [(&str, &SpatialKernel); 3] = [("P", &triple.p), ("U", &triple.u), ("V", &triple.v)];
    let summary = Summary {
        grid: spec,
        caps: &triple.caps,
        split_residual: triple.split_residual,
        kernels: kernels
            .iter()
            .map(|(role, k)| KernelSummary {
                role,
                meta: &k.meta,
                l1: k.l1,
                sup: k.sup,
                imaginary_ratio: k.imaginary_ratio(),
            })
            .collect(),
    };
    write_json_result(&out, &cfg, &summary)?;
    for (role, k) in kernels {
        match format.as_str() {
            "bin" => io::write_field(
                &with_suffix(&out, &format!(".{role}.bin")),
                &spec,
                &k.field.values,
                &k.meta,
                FieldLayout::SpatialRowMajor,
            )?,
            "csv" => {
                let body = io::radial_profile_csv(&k.field)?;
                io::write_atomic(
                    &with_suffix(&out, &format!(".{role}.csv")),
                    format!("{}{body}", config_comment(&cfg)).as_bytes(),
                )?;
            }
            _ => {}
        }
    }
    Ok(true)
}

fn cmd_apply(p: &mut Params) -> RunResult<bool> {
    let n = p.usize("n", Some("2"))?;
    let operator = p.raw("operator", None)?;
    let spec = grid_from(p, n, "256", "16")?;
    let format = p.format(&["json", "bin"], "json")?;
    #[derive(Serialize)]
    struct Applied {
        operator: String,
        grid: GridSpec,
        l2: f64,
        sup: f64,
        tail: Option<crate::engine::TailEstimate>,
    }
    let f = harness::unit_gaussian(spec);
    let (output, tail, meta) = match operator.as_str() {
        "bochner-riesz" => {
            let delta = p.f64("delta", None)?;
            let route = p.raw("route", Some("multiplier"))?;
            let d = C64::new(delta, 0.0);
            let g = match route.as_str() {
                "multiplier" => bochner_riesz_apply(d, &f)?,
                "kernel" => bochner_riesz_kernel_apply(d, &f)?,
                other => {
                    return Err(RunError::Lab(config(format!(
                        "requires route ∈ {{multiplier, kernel}}, got `{other}`"
                    ))))
                }
            };
            let mut meta = FieldMeta {
                variant: format!("bochner-riesz:{route}"),
                ..FieldMeta::default()
            };
            meta.params.insert("delta".into(), delta);
            (g, None, meta)
        }
        "i-alpha" => {
            let alpha = p.complex("alpha", Some("0.8"), "0")?;
            let j_max = p.u32("j-max", Some("2"))?;
            let r = i_alpha_apply(alpha, &f, j_max)?;
            let mut meta = FieldMeta::for_variant(&Variant::Standard { alpha }, None, None, None);
            meta.variant = "i-alpha".into();
            meta.params.insert("j_max".into(), j_max as f64);
            (r.output, Some(r.tail), meta)
        }
        other => {
            return Err(RunError::Lab(config(format!(
                "requires operator ∈ {{bochner-riesz, i-alpha}}, got `{other}`"
            ))))
        }
    };
    let out = p.out()?;
    let cfg = p.resolved_config();
    let summary = Applied {
        operator,
        grid: spec,
        l2: output.l2_norm(),
        sup: output.sup_norm(),
        tail,
    };
    if format == "bin" {
        io::write_field(&out, &spec, &output.values, &meta, FieldLayout::SpatialRowMajor)?;
        write_json_result(&with_suffix(&out, ".config.json"), &cfg, &summary)?;
    } else {
        write_json_result(&out, &cfg, &summary)?;
    }
    Ok(true)
}

fn sharp_params(p: &mut Params) -> RunResult<(C64, C64)> {
    Ok((
        p.complex("alpha", Some("0.8"), "0")?,
        p.complex("beta", Some("0.4875"), "0")?,
    ))
}

fn cmd_verify(p: &mut Params) -> RunResult<bool> {
    let experiment = p.raw("experiment", None)?;
    let format = p.format(&["json", "csv"], "json")?;
    let out = p.out()?;
    macro_rules! emit {
        ($report:expr) => {{
            let report = $report;
            let cfg = p.resolved_config();
            write_report(&out, &format, &cfg, &report)?;
            report.pass
        }};
    }
    let pass = match experiment.as_str() {
        "key-observation" => {
            let deltas = p.list("delta", Some("0.1,0.3,0.49"))?;
            let xis = p.list("rho", Some("0,0.3,0.7,0.99"))?;
            emit!(harness::key_observation_experiment(&deltas, &xis)?)
        }
        "m-plus" => emit!(harness::m_plus_experiment(&harness::default_m_plus_probes())?),
        "lambda-consistency" => {
            let alpha = p.complex("alpha", Some("0.7"), "0")?;
            let r_max = p.f64("r-max", Some("16384"))?;
            emit!(harness::lambda_consistency_experiment(
                alpha,
                &harness::default_lambda_probes(),
                r_max
            )?)
        }
        "partition" => {
            let js = p.range("j-range", "2..10")?;
            let n = p.usize("n", Some("2"))?;
            let samples = p.usize("samples", Some("1000"))?;
            let seed = p.u64("seed", Some("1"))?;
            emit!(harness::partition_experiment(&js, &[n], samples, seed)?)
        }
        "geometry" => {
            let j = p.u32("j", Some("8"))?;
            let n = p.usize("n", Some("2"))?;
            let sigma = p.f64("sigma", Some("0.1"))?;
            let c = p.f64("c", Some("8"))?;
            let samples = p.usize("samples", Some("10000"))?;
            let seed = p.u64("seed", Some("1"))?;
            emit!(harness::geometry_experiment(12, 8, j, n, sigma, c, samples, seed)?)
        }
        "nonvanishing" => {
            let points = p.usize("points", Some("50"))?;
            emit!(harness::nonvanishing_experiment(points))
        }
        "recurrence" => {
            let samples = p.usize("samples", Some("1000"))?;
            let seed = p.u64("seed", Some("1"))?;
            emit!(harness::recurrence_experiment(samples, seed)?)
        }
        "lemma-one" => {
            let (alpha, beta) = sharp_params(p)?;
            let js = p.range("j-range", "4..11")?;
            let sigma = p.f64("sigma", Some("0.1"))?;
            let n = p.usize("n", Some("2"))?;
            Variant::Sharp { alpha, beta }.validate(n)?;
            emit!(harness::lemma_one_experiment(alpha, beta, &js, sigma, n)?)
        }
        "prop-one" | "prop-two" => {
            let two = experiment == "prop-two";
            let alpha = p.complex("alpha", Some("0.8"), "0")?;
            let beta = p.complex("beta", Some(if two { "0.25" } else { "0.4875" }), "0")?;
            let js = p.range("j-range", "4..8")?;
            let sigma = p.f64("sigma", Some("0.1"))?;
            let c = p.f64("c", Some("8"))?;
            let n = p.usize("n", Some("2"))?;
            let m = p.usize("m", Some("1"))?;
            let ell = p.usize("ell", Some("1"))?;
            let variant = if two {
                Variant::Flat { alpha, beta }
            } else {
                Variant::Sharp { alpha, beta }
            };
            variant.validate(n)?;
            let cells = harness::kernel_sweep_at(&variant, &js, sigma, c, n, m, ell)?;
            if two {
                emit!(harness::prop_two_from_cells(&variant, cells, sigma, c, n)?)
            } else {
                emit!(harness::prop_one_from_cells(&variant, cells, sigma, c, n)?)
            }
        }
        "split" => {
            let alpha = p.complex("alpha", Some("0.8"), "0")?;
            let js = p.range("j-range", "4..8")?;
            let sigma = p.f64("sigma", Some("0.1"))?;
            let c = p.f64("c", Some("8"))?;
            let n = p.usize("n", Some("2"))?;
            let m = p.usize("m", Some("1"))?;
            let ell = p.usize("ell", Some("1"))?;
            let variants = [
                Variant::Standard { alpha },
                Variant::Sharp {
                    alpha,
                    beta: C64::new(0.4875, 0.0),
                },
                Variant::Flat {
                    alpha,
                    beta: C64::new(0.25, 0.0),
                },
            ];
            for v in &variants {
                v.validate(n)?;
            }
            let sweeps = variants
                .iter()
                .map(|v| harness::kernel_sweep_at(v, &js, sigma, c, n, m, ell))
                .collect::<LabResult<Vec<_>>>()?;
            let pairs: Vec<(&Variant, &[harness::KernelCellSummary])> =
                variants.iter().zip(&sweeps).map(|(v, s)| (v, s.as_slice())).collect();
            emit!(harness::split_report(&pairs))
        }
        "tail-decay" => {
            let (alpha, beta) = sharp_params(p)?;
            let ts = p.range("t-range", "2..8")?;
            let width = p.u32("width", Some("1"))?;
            let samples = p.usize("samples", Some("256"))?;
            let eps = p.f64("eps-hat", Some("0.05"))?;
            let n = p.usize("n", Some("2"))?;
            Variant::Sharp { alpha, beta }.validate(n)?;
            emit!(harness::tail_decay_experiment(
                alpha, beta, &ts, width, samples, eps, n
            )?)
        }
        "cross-validation" => {
            let deltas = p.list("delta", Some("0.5,1"))?;
            let n = p.usize("n", Some("2"))?;
            let side = p.usize("side", Some("256"))?;
            let extent = p.f64("extent", Some("32"))?;
            emit!(harness::cross_validation_experiment(&deltas, n, side, extent)?)
        }
        other => {
            return Err(RunError::Lab(config(format!(
                "requires experiment ∈ {{{}}}, got `{other}`",
                EXPERIMENTS.join(", ")
            ))))
        }
    };
    Ok(pass)
}

/// Experiments accepted by `verify --experiment`.
pub const EXPERIMENTS: &[&str] = &[
    "key-observation",
    "m-plus",
    "lambda-consistency",
    "partition",
    "geometry",
    "nonvanishing",
    "recurrence",
    "lemma-one",
    "prop-one",
    "prop-two",
    "split",
    "tail-decay",
    "cross-validation",
];

fn cmd_report(p: &mut Params) -> RunResult<bool> {
    let inputs = p.raw("inputs", None)?;
    let format = p.format(&["json", "csv"], "json")?;
    let out = p.out()?;
    #[derive(Serialize)]
    struct Row {
        file: String,
        experiment: String,
        pass: bool,
    }
    let mut rows = Vec::new();
    for file in inputs.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v: Value = io::read_json(Path::new(file))?;
        let experiment = v
            .pointer("/config/experiment")
            .and_then(Value::as_str)
            .unwrap_or("unknown")
            .to_string();
        let pass = v.pointer("/result/pass").and_then(Value::as_bool).ok_or_else(|| {
            RunError::Lab(config(format!(
                "requires a verify report with result.pass, got `{file}`"
            )))
        })?;
        rows.push(Row {
            file: file.to_string(),
            experiment,
            pass,
        });
    }
    let all = rows.iter().all(|r| r.pass);
    let cfg = p.resolved_config();
    if format == "csv" {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.file.clone(), r.experiment.clone(), r.pass.to_string()])
            .collect();
        write_csv_result(&out, &cfg, &["file", "experiment", "pass"], &body)?;
    } else {
        #[derive(Serialize)]
        struct Summary<'a> {
            reports: &'a [Row],
            pass: bool,
        }
        write_json_result(
            &out,
            &cfg,
            &Summary {
                reports: &rows,
                pass: all,
            },
        )?;
    }
    Ok(all)
}

fn usage_for(command: &str) -> String {
    let mut cmd = Cli::command();
    match cmd.find_subcommand_mut(command) {
        Some(sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn dispatch(cfg: &RunConfig) -> i32 {
    let mut p = Params::new(cfg);
    let result = match cfg.command.as_str() {
        "bessel" => cmd_bessel(&mut p),
        "multiplier" => cmd_multiplier(&mut p),
        "caps" => cmd_caps(&mut p),
        "kernel" => cmd_kernel(&mut p),
        "apply" => cmd_apply(&mut p),
        "verify" => cmd_verify(&mut p),
        "report" => cmd_report(&mut p),
        other => Err(RunError::Lab(config(format!("unknown command `{other}`")))),
    };
    match result {
        Ok(true) => EXIT_SUCCESS,
        Ok(false) => EXIT_FAILED_CHECK,
        Err(RunError::Missing(key)) => {
            eprintln!("error: missing required flag --{key}\n\n{}", usage_for(&cfg.command));
            EXIT_USAGE
        }
        Err(RunError::Lab(e)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Thread cap from the configuration or `BRLAB_THREADS`.
fn thread_cap(cfg: &RunConfig) -> Result<Option<usize>, String> {
    if let Some(t) = cfg.threads {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("invalid value for {THREADS_ENV}: `{v}`")),
        Err(_) => Ok(None),
    }
}

/// Runs a resolved configuration and returns the exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    let threads = match thread_cap(cfg) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(cfg)),
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        None => dispatch(cfg),
    }
}

/// Parses command-line arguments and runs them.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match RunConfig::from_cli(&cli) {
        Ok(cfg) => run(&cfg),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        main_with_args(std::iter::once("brlab").chain(args.iter().copied()))
    }

    #[test]
    fn config_file_parsing() {
        let m = parse_config_text("# comment\nsigma = 0.2\nalpha_re=0.7\n\n").unwrap();
        assert_eq!(m["sigma"], "0.2");
        assert_eq!(m["alpha-re"], "0.7");
        assert!(parse_config_text("bogus=1").is_err());
        assert!(parse_config_text("sigma").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.cfg");
        std::fs::write(&cfg_path, "delta=0.1\nexperiment=key-observation\n").unwrap();
        let out = dir.path().join("r.json");
        let cli = Cli::try_parse_from([
            "brlab",
            "--config",
            cfg_path.to_str().unwrap(),
            "verify",
            "--delta",
            "0.3",
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
        let cfg = RunConfig::from_cli(&cli).unwrap();
        assert_eq!(cfg.values["delta"], "0.3");
        assert_eq!(cfg.values["experiment"], "key-observation");
        assert_eq!(run(&cfg), EXIT_SUCCESS);
        let v: Value = io::read_json(&out).unwrap();
        assert_eq!(v.pointer("/config/delta").unwrap(), "0.3");
    }

    #[test]
    fn missing_flag_is_usage_error() {
        assert_eq!(run_args(&["caps", "--n", "2"]), EXIT_USAGE);
        assert_eq!(run_args(&["frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn range_violation_names_constraint() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("k.json");
        let cli = Cli::try_parse_from([
            "brlab",
            "multiplier",
            "--variant",
            "standard",
            "--alpha-re",
            "0.3",
            "--j",
            "4",
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
        let cfg = RunConfig::from_cli(&cli).unwrap();
        assert_eq!(run(&cfg), EXIT_USAGE);
        let err = Params::new(&cfg).variant(2).unwrap_err();
        match err {
            RunError::Lab(e) => assert!(e.to_string().contains("requires 1/2 < Re α < 1"), "{e}"),
            RunError::Missing(k) => panic!("missing {k}"),
        }
    }

    #[test]
    fn caps_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("g.json");
        assert_eq!(
            run_args(&["caps", "--n", "2", "--j", "6", "--out", out.to_str().unwrap()]),
            EXIT_SUCCESS
        );
        let back = read_cap_grid(&out).unwrap();
        let fresh = cap_grid(6, 2).unwrap();
        assert_eq!(back.centers, fresh.centers);
        let xi = [0.6, 0.8];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        back.partition_of_unity_into(&xi, &mut a).unwrap();
        fresh.partition_of_unity_into(&xi, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn key_observation_verify_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.json");
        let mut outputs = Vec::new();
        for threads in ["1", "1"] {
            let code = run_args(&[
                "--threads",
                threads,
                "verify",
                "--experiment",
                "key-observation",
                "--delta",
                "0.3",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, EXIT_SUCCESS);
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
    }

    #[test]
    fn csv_reports_embed_config() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("n.csv");
        let code = run_args(&[
            "verify",
            "--experiment",
            "nonvanishing",
            "--points",
            "5",
            "--format",
            "csv",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_SUCCESS);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("# command=verify\n"), "{text}");
    }
}
