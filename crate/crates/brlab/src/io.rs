//! Output formats: atomic writes, fixed-precision JSON, binary fields with
//! JSON sidecars, and CSV tables.

use std::io::Write;
use std::path::{Path, PathBuf};

use brlab_core::C64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::engine::FieldMeta;
use crate::error::{config, LabResult};
use crate::grid::{GridSpec, SampledFunction};

/// Formats a float with 17 significant digits, `NaN`/`inf` spelled out.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Pretty JSON formatter printing every float with 17 significant digits.
struct FixedFormatter {
    inner: PrettyFormatter<'static>,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
            self.inner.$name(writer $(, $arg)*)
        })*
    };
}

impl Formatter for FixedFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// Serializes `value` as pretty JSON with fixed float formatting; non-finite
/// floats become `null`.
///
/// # Errors
///
/// Serialization failures.
pub fn to_json(value: &impl Serialize) -> LabResult<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        FixedFormatter {
            inner: PrettyFormatter::new(),
        },
    );
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename.
///
/// # Errors
///
/// I/O failures.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> LabResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes `value` as JSON to `path` atomically.
///
/// # Errors
///
/// Serialization and I/O failures.
pub fn write_json(path: &Path, value: &impl Serialize) -> LabResult<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

/// Reads JSON from `path`.
///
/// # Errors
///
/// I/O and parse failures.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> LabResult<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Layout of a binary field file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldLayout {
    /// Frequency samples in FFT order.
    FrequencyFftOrder,
    /// Spatial samples, row-major from `−X`.
    SpatialRowMajor,
}

/// JSON sidecar of a binary field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    /// Dimension.
    pub n: usize,
    /// Points per axis.
    pub side: usize,
    /// Half-extent `X`.
    pub extent: f64,
    /// Variant tag.
    pub variant: String,
    /// Scalar parameters.
    pub params: std::collections::BTreeMap<String, f64>,
    /// Sample layout.
    pub layout: FieldLayout,
    /// Value encoding.
    pub encoding: String,
}

const ENCODING: &str = "f64-le (re, im) pairs";

/// Path of the sidecar belonging to a binary file: `<path>.json`.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    let mut s = bin.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes complex samples as little-endian `(re, im)` pairs with a sidecar.
///
/// # Errors
///
/// I/O failures, and a config error if the sample count does not match.
pub fn write_field(
    bin: &Path,
    spec: &GridSpec,
    values: &[C64],
    meta: &FieldMeta,
    layout: FieldLayout,
) -> LabResult<()> {
    if values.len() != spec.len() {
        return Err(config("requires one sample per grid point"));
    }
    let mut bytes = Vec::with_capacity(16 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    write_atomic(bin, &bytes)?;
    let sidecar = FieldSidecar {
        n: spec.n,
        side: spec.side,
        extent: spec.extent,
        variant: meta.variant.clone(),
        params: meta.params.clone(),
        layout,
        encoding: ENCODING.into(),
    };
    write_json(&sidecar_path(bin), &sidecar)
}

/// Reads a field written by [`write_field`].
///
/// # Errors
///
/// I/O and parse failures; config errors for inconsistent sizes.
pub fn read_field(bin: &Path) -> LabResult<(GridSpec, Vec<C64>, FieldMeta, FieldLayout)> {
    let sidecar: FieldSidecar = read_json(&sidecar_path(bin))?;
    let spec = GridSpec::new(sidecar.n, sidecar.side, sidecar.extent)?;
    let bytes = std::fs::read(bin)?;
    if bytes.len() != 16 * spec.len() {
        return Err(config(format!(
            "requires {} bytes for the grid, found {}",
            16 * spec.len(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect();
    let meta = FieldMeta {
        variant: sidecar.variant,
        params: sidecar.params,
    };
    Ok((spec, values, meta, sidecar.layout))
}

/// Renders rows as CSV with a header.
///
/// # Errors
///
/// CSV failures.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> LabResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

/// Radial profile `(radius, max |value|)` in bins of width `h` around the
/// origin, skipping empty bins.
pub fn radial_profile(field: &SampledFunction) -> Vec<(f64, f64)> {
    let spec = field.spec;
    let h = spec.spacing();
    let bins = (spec.extent * (spec.n as f64).sqrt() / h).ceil() as usize + 1;
    let mut best = vec![f64::NAN; bins];
    let mut x = [0.0; 3];
    for (idx, v) in field.values.iter().enumerate() {
        spec.point(idx, &mut x);
        let r = crate::engine::norm(&x[..spec.n]);
        let b = (r / h).round() as usize;
        let a = v.norm();
        if best[b].is_nan() || a > best[b] {
            best[b] = a;
        }
    }
    best.iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .map(|(b, &v)| (b as f64 * h, v))
        .collect()
}

/// CSV of [`radial_profile`].
///
/// # Errors
///
/// CSV failures.
pub fn radial_profile_csv(field: &SampledFunction) -> LabResult<String> {
    let rows: Vec<Vec<String>> = radial_profile(field)
        .into_iter()
        .map(|(r, v)| vec![format_f64(r), format_f64(v)])
        .collect();
    csv_string(&["radius", "abs_value"], &rows)
}
