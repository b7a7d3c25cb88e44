use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::{reference_solve, ReferenceConfig, ReferenceSolution, TimeGrid};
use crate::error::Result;
use crate::fields::FieldModel;
use crate::geom3::Vec3;

/// Environment variable naming the on-disk cache directory.
pub const CACHE_DIR_ENV: &str = "BORIS_CACHE_DIR";

type Slot = Arc<Mutex<Option<Arc<ReferenceSolution>>>>;

/// Memoizes reference solutions in memory and, optionally, as JSON files.
///
/// Models are identified by name and `ε`, so only preset-built models should
/// share a cache.
#[derive(Debug, Default)]
pub struct ReferenceCache {
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<String, Slot>>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn cache_key(model: &FieldModel, x0: Vec3, v0: Vec3, grid: &TimeGrid, cfg: &ReferenceConfig) -> String {
    let bits = |v: f64| format!("{:016x}", v.to_bits());
    let vec = |v: Vec3| v.to_array().map(bits).join(",");
    format!(
        "{}|eps={}|dt={}|n={}|tol={}|frac={}|{}|x0={}|v0={}",
        model.name(),
        bits(model.epsilon()),
        bits(grid.spacing),
        grid.intervals,
        bits(cfg.ref_tol),
        bits(cfg.substep_fraction),
        cfg.scheme,
        vec(x0),
        vec(v0),
    )
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CacheFile {
    key: String,
    solution: ReferenceSolution,
}

impl ReferenceCache {
    /// In-memory cache only.
    pub fn new() -> Self {
        Self::default()
    }

    /// Cache that also persists to `dir`.
    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        ReferenceCache {
            dir: Some(dir.into()),
            slots: Mutex::default(),
        }
    }

    /// Uses `BORIS_CACHE_DIR` when it is set and non-empty.
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::with_dir(d),
            _ => Self::new(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn file_for(&self, key: &str, model: &FieldModel) -> Option<PathBuf> {
        let stem: String = model
            .name()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        self.dir
            .as_ref()
            .map(|d| d.join(format!("ref-{stem}-{:016x}.json", fnv1a(key.as_bytes()))))
    }

    fn load(path: &Path, key: &str) -> Option<ReferenceSolution> {
        let text = fs::read_to_string(path).ok()?;
        let file: CacheFile = serde_json::from_str(&text).ok()?;
        (file.key == key).then_some(file.solution)
    }

    fn store(path: &Path, key: &str, solution: &ReferenceSolution) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = CacheFile {
            key: key.to_string(),
            solution: solution.clone(),
        };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(&file)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Returns the cached solution or computes and stores it.
    ///
    /// Concurrent requests for the same key wait for a single computation.
    pub fn get_or_solve(
        &self,
        model: &FieldModel,
        x0: Vec3,
        v0: Vec3,
        grid: &TimeGrid,
        cfg: &ReferenceConfig,
    ) -> Result<Arc<ReferenceSolution>> {
        let key = cache_key(model, x0, v0, grid, cfg);
        let slot = {
            let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
            slots.entry(key.clone()).or_default().clone()
        };
        let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(sol) = guard.as_ref() {
            return Ok(sol.clone());
        }
        let path = self.file_for(&key, model);
        if let Some(sol) = path.as_deref().and_then(|p| Self::load(p, &key)) {
            let sol = Arc::new(sol);
            *guard = Some(sol.clone());
            return Ok(sol);
        }
        let sol = Arc::new(reference_solve(model, x0, v0, grid, cfg)?);
        if let Some(p) = path {
            Self::store(&p, &key, &sol)?;
        }
        *guard = Some(sol.clone());
        Ok(sol)
    }

    /// Number of solutions held in memory.
    pub fn len(&self) -> usize {
        let slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        slots
            .values()
            .filter(|s| s.lock().map(|g| g.is_some()).unwrap_or(false))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
