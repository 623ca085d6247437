//! Content-addressed effective-tensor cache.
//!
//! One plain-text file per entry. Each matrix block starts with a header line
//! `name rows cols K dt_kernel` followed by whitespace-separated values at 17
//! significant digits, which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cell_problems::{EffectiveTensors, KernelTable, TensorMeta};
use crate::geometry::CellSpec;

/// Bumped whenever the payload layout or the tensor computation changes;
/// entries written under another version are ignored.
pub const CACHE_VERSION: u32 = 1;

/// Environment variable overriding the default cache directory.
pub const CACHE_ENV: &str = "BIDOMAIN_HOMOG_CACHE";

const MAGIC: &str = "bidomain-homog tensors";

/// Everything the tensors depend on.
#[derive(Debug, Clone, Serialize)]
pub struct CacheKey {
    pub version: u32,
    pub cell: CellSpec,
    /// Row-major `dim x dim` entries per unit-cell grid cell.
    pub sigma_int: Vec<Vec<f64>>,
    pub sigma_out: Vec<Vec<f64>>,
    pub sigma_dis: Vec<Vec<f64>>,
    pub alpha: f64,
    pub beta: f64,
    pub dt_kernel: f64,
    pub kernel_steps: usize,
    pub with_kernel: bool,
    pub tol: f64,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("key serializes");
        crate::hex(&Sha256::digest(canonical.as_bytes()))
    }
}

fn num(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} {} {} 0 0", m.nrows(), m.ncols());
    let mut line = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !line.is_empty() {
                line.push(' ');
            }
            num(&mut line, m[(i, j)]);
        }
    }
    out.push_str(&line);
    out.push('\n');
}

/// Serialize tensors under `key`.
pub fn encode(key: &str, t: &EffectiveTensors) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} v{CACHE_VERSION}");
    let _ = writeln!(out, "key {key}");
    let _ = writeln!(out, "dim {}", t.dim);
    let m = &t.meta;
    let _ = writeln!(out, "geometry_hash {}", m.geometry_hash);
    let _ = writeln!(out, "coefficient_hash {}", m.coefficient_hash);
    let mut line = String::from("meta");
    for x in [m.vol_out, m.vol_int, m.interface_area, m.dt_kernel, m.tail_bound, m.dual_gap] {
        line.push(' ');
        num(&mut line, x);
    }
    let _ = writeln!(out, "{line} {}", m.k);
    write_matrix(&mut out, "a1", &t.a1);
    write_matrix(&mut out, "a2", &t.a2);
    write_matrix(&mut out, "a2_b", &t.a2_b);
    write_matrix(&mut out, "a2_d", &t.a2_d);
    match &t.kernel {
        Some(k) => {
            let _ = write!(out, "kernel {} {} {} ", t.dim, t.dim, k.values.len() - 1);
            num(&mut out, k.dt);
            out.push('\n');
            for b in &k.values {
                let mut line = String::new();
                for i in 0..t.dim {
                    for j in 0..t.dim {
                        if !line.is_empty() {
                            line.push(' ');
                        }
                        num(&mut line, b[(i, j)]);
                    }
                }
                let _ = writeln!(out, "{line}");
            }
        }
        None => out.push_str("kernel none\n"),
    }
    match &t.f_cellflux {
        Some(f) => {
            let _ = write!(out, "cellflux {} 3 {} ", f.len(), f.len() - 1);
            num(&mut out, m.dt_kernel);
            out.push('\n');
            for g in f {
                let mut line = String::new();
                for (i, x) in g.iter().enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    num(&mut line, *x);
                }
                let _ = writeln!(out, "{line}");
            }
        }
        None => out.push_str("cellflux none\n"),
    }
    out.push_str("end\n");
    out
}

/// Why a payload could not be used.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodeError {
    /// Written by another cache version.
    Stale(String),
    Corrupt(String),
}

struct Lines<'a> {
    it: std::str::Lines<'a>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, DecodeError> {
        self.line += 1;
        self.it
            .next()
            .ok_or_else(|| DecodeError::Corrupt(format!("unexpected end of file at line {}", self.line)))
    }

    fn field(&mut self, name: &str) -> Result<Vec<&'a str>, DecodeError> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(name) {
            return Err(self.err(&format!("expected `{name}`")));
        }
        Ok(parts.collect())
    }

    fn err(&self, msg: &str) -> DecodeError {
        DecodeError::Corrupt(format!("line {}: {msg}", self.line))
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>, DecodeError> {
        let l = self.next()?;
        let v: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse).collect();
        match v {
            Ok(v) if v.len() == count => Ok(v),
            _ => Err(self.err(&format!("expected {count} numbers"))),
        }
    }
}

fn parse<T: std::str::FromStr>(lines: &Lines, s: Option<&&str>) -> Result<T, DecodeError> {
    s.and_then(|s| s.parse().ok()).ok_or_else(|| lines.err("malformed header"))
}

fn read_matrix(l: &mut Lines, name: &str, dim: usize) -> Result<DMatrix<f64>, DecodeError> {
    let h = l.field(name)?;
    let (r, c): (usize, usize) = (parse(l, h.first())?, parse(l, h.get(1))?);
    if r != dim || c != dim {
        return Err(l.err("matrix shape does not match dim"));
    }
    let v = l.floats(r * c)?;
    Ok(DMatrix::from_row_slice(r, c, &v))
}

/// Parse a payload, returning its key and tensors.
pub fn decode(src: &str) -> Result<(String, EffectiveTensors), DecodeError> {
    let mut l = Lines { it: src.lines(), line: 0 };
    let head = l.next()?;
    let Some(ver) = head.strip_prefix(MAGIC).map(str::trim) else {
        return Err(l.err("not a tensor file"));
    };
    if ver != format!("v{CACHE_VERSION}") {
        return Err(DecodeError::Stale(ver.to_string()));
    }
    let key = l.field("key")?.first().map(|s| s.to_string()).ok_or_else(|| l.err("missing key"))?;
    let h = l.field("dim")?;
    let dim: usize = parse(&l, h.first())?;
    if !(2..=3).contains(&dim) {
        return Err(l.err("dim must be 2 or 3"));
    }
    let geometry_hash = l.field("geometry_hash")?.first().map(|s| s.to_string()).unwrap_or_default();
    let coefficient_hash = l.field("coefficient_hash")?.first().map(|s| s.to_string()).unwrap_or_default();
    let meta = l.field("meta")?;
    if meta.len() != 7 {
        return Err(l.err("meta needs 7 entries"));
    }
    let mf: Vec<f64> = (0..6).map(|i| parse(&l, meta.get(i))).collect::<Result<_, _>>()?;
    let k: usize = parse(&l, meta.get(6))?;
    let a1 = read_matrix(&mut l, "a1", dim)?;
    let a2 = read_matrix(&mut l, "a2", dim)?;
    let a2_b = read_matrix(&mut l, "a2_b", dim)?;
    let a2_d = read_matrix(&mut l, "a2_d", dim)?;
    let h = l.field("kernel")?;
    let kernel = if h.first() == Some(&"none") {
        None
    } else {
        let steps: usize = parse(&l, h.get(2))?;
        let dt: f64 = parse(&l, h.get(3))?;
        let values = (0..=steps)
            .map(|_| l.floats(dim * dim).map(|v| DMatrix::from_row_slice(dim, dim, &v)))
            .collect::<Result<_, _>>()?;
        Some(KernelTable { dt, values })
    };
    let h = l.field("cellflux")?;
    let f_cellflux = if h.first() == Some(&"none") {
        None
    } else {
        let rows: usize = parse(&l, h.first())?;
        let v = (0..rows)
            .map(|_| l.floats(3).map(|v| [v[0], v[1], v[2]]))
            .collect::<Result<_, _>>()?;
        Some(v)
    };
    if l.next()? != "end" {
        return Err(l.err("missing end marker"));
    }
    Ok((
        key,
        EffectiveTensors {
            dim,
            a1,
            a2,
            a2_b,
            a2_d,
            kernel,
            f_cellflux,
            meta: TensorMeta {
                geometry_hash,
                coefficient_hash,
                vol_out: mf[0],
                vol_int: mf[1],
                interface_area: mf[2],
                dt_kernel: mf[3],
                k,
                tail_bound: mf[4],
                dual_gap: mf[5],
            },
        },
    ))
}

static TMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}-{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("entry"),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Result of a cache lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
    /// An entry existed but could not be used.
    Replaced,
}

#[derive(Debug, Clone)]
pub struct TensorCache {
    dir: PathBuf,
}

impl TensorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `explicit`, else `$BIDOMAIN_HOMOG_CACHE`, else `.bidomain-cache`.
    pub fn resolve(explicit: Option<&Path>) -> Self {
        match explicit {
            Some(p) => Self::new(p),
            None => Self::new(std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| ".bidomain-cache".into())),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    /// Return the cached entry for `key`, or compute, store and return it.
    pub fn get_or_compute<E: From<std::io::Error>>(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<EffectiveTensors, E>,
    ) -> Result<(EffectiveTensors, Lookup), E> {
        let path = self.path_for(key);
        let mut status = Lookup::Miss;
        if let Ok(src) = fs::read_to_string(&path) {
            match decode(&src) {
                Ok((k, t)) if k == key => {
                    info!("cache hit: {}", path.display());
                    return Ok((t, Lookup::Hit));
                }
                Ok(_) => {
                    warn!("cache entry {} carries another key; recomputing", path.display());
                    status = Lookup::Replaced;
                }
                Err(DecodeError::Stale(v)) => {
                    info!("ignoring stale cache entry {} ({v})", path.display());
                    status = Lookup::Replaced;
                }
                Err(DecodeError::Corrupt(msg)) => {
                    warn!("corrupted cache entry {} ({msg}); recomputing", path.display());
                    status = Lookup::Replaced;
                }
            }
        } else {
            info!("cache miss: {}", path.display());
        }
        let t = compute()?;
        write_atomic(&path, encode(key, &t).as_bytes())?;
        Ok((t, status))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(kernel: bool) -> EffectiveTensors {
        let m = |s: f64| DMatrix::from_row_slice(2, 2, &[s, 0.1 / 3.0, 0.1 / 3.0, s * 7.0]);
        EffectiveTensors {
            dim: 2,
            a1: m(1.0 / 3.0),
            a2: m(2.0f64.sqrt()),
            a2_b: m(std::f64::consts::PI),
            a2_d: m(0.0),
            kernel: kernel.then(|| KernelTable {
                dt: 0.1,
                values: vec![m(1e-300), m(-2.5e-17)],
            }),
            f_cellflux: kernel.then(|| vec![[1.0 / 7.0, 0.0, 0.0], [0.0, -3.0, 0.0]]),
            meta: TensorMeta {
                geometry_hash: "g".into(),
                coefficient_hash: "c".into(),
                vol_out: 0.75,
                vol_int: 0.25,
                interface_area: 2.0,
                dt_kernel: if kernel { 0.1 } else { 0.0 },
                k: if kernel { 1 } else { 0 },
                tail_bound: 1.0 / 9.0,
                dual_gap: 1e-15,
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for kernel in [false, true] {
            let t = sample(kernel);
            let (key, back) = decode(&encode("abc", &t)).unwrap();
            assert_eq!(key, "abc");
            assert_eq!(back, t);
        }
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let s = encode("abc", &sample(true));
        let cut = &s[..s.len() / 2];
        assert!(matches!(decode(cut), Err(DecodeError::Corrupt(_))));
    }

    #[test]
    fn other_version_is_stale() {
        let s = encode("abc", &sample(false)).replacen(&format!("v{CACHE_VERSION}"), "v0", 1);
        assert!(matches!(decode(&s), Err(DecodeError::Stale(_))));
    }

    #[test]
    fn hit_after_miss_and_recovery_from_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TensorCache::new(dir.path());
        let calls = std::cell::Cell::new(0);
        let compute = || -> Result<EffectiveTensors, std::io::Error> {
            calls.set(calls.get() + 1);
            Ok(sample(true))
        };
        assert_eq!(cache.get_or_compute("k1", compute).unwrap().1, Lookup::Miss);
        assert_eq!(cache.get_or_compute("k1", compute).unwrap().1, Lookup::Hit);
        assert_eq!(calls.get(), 1);
        fs::write(cache.path_for("k1"), "garbage").unwrap();
        let (t, s) = cache.get_or_compute("k1", compute).unwrap();
        assert_eq!(s, Lookup::Replaced);
        assert_eq!(t, sample(true));
        assert_eq!(cache.get_or_compute("k1", compute).unwrap().1, Lookup::Hit);
        assert_eq!(calls.get(), 2);
    }
}
