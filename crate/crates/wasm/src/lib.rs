//! Browser bindings for a few self-contained pieces of scenemux.
//!
//! Each export has a plain Rust counterpart that returns `Result<_, String>`
//! so it can be tested natively; the exported wrappers only convert errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use scenemux::kmeans::kmeans;
use scenemux::runtime::ModelCache;
use scenemux::sampling::well_sampled_threshold;

#[derive(Debug, Serialize, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CacheFrame {
    pub top: usize,
    pub served: usize,
    pub miss: bool,
    pub evicted: Option<usize>,
    pub resident: Vec<usize>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CacheRun {
    pub frames: Vec<CacheFrame>,
    pub misses: usize,
    pub miss_rate: f64,
}

pub fn threshold(gamma_size: usize, theta: f64) -> Result<f64, String> {
    well_sampled_threshold(gamma_size, theta).map_err(|e| e.to_string())
}

pub fn cluster(flat: &[f64], dim: usize, k: usize, seed: u64) -> Result<Clustering, String> {
    if dim == 0 || !flat.len().is_multiple_of(dim) {
        return Err(format!(
            "{} values do not split into points of dimension {dim}",
            flat.len()
        ));
    }
    let points: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
    let r = kmeans(&points, k, seed, 100, 1e-9).map_err(|e| e.to_string())?;
    Ok(Clustering {
        iterations: r.history.len(),
        assignments: r.assignments,
        centroids: r.centroids,
        inertia: r.inertia,
    })
}

/// Parse one ranking per non-empty line, models separated by commas or
/// whitespace, best first.
pub fn parse_rankings(text: &str) -> Result<Vec<Vec<usize>>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| format!("line {}: bad model id {t:?}", n + 1))
                })
                .collect()
        })
        .collect()
}

pub fn simulate(capacity: usize, rankings: &[Vec<usize>]) -> Result<CacheRun, String> {
    let mut cache = ModelCache::new(capacity).map_err(|e| e.to_string())?;
    let mut frames = Vec::with_capacity(rankings.len());
    for ranking in rankings {
        let out = cache.request(ranking).map_err(|e| e.to_string())?;
        let mut resident: Vec<usize> = cache.slots().iter().map(|s| s.model).collect();
        resident.sort_unstable();
        frames.push(CacheFrame {
            top: ranking[0],
            served: out.served,
            miss: out.miss,
            evicted: out.evicted,
            resident,
        });
    }
    let misses = frames.iter().filter(|f| f.miss).count();
    let miss_rate = if frames.is_empty() {
        0.0
    } else {
        misses as f64 / frames.len() as f64
    };
    Ok(CacheRun {
        frames,
        misses,
        miss_rate,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

/// Draws after which a training set of `gamma_size` samples counts as covered.
#[wasm_bindgen(js_name = wellSampledThreshold)]
pub fn well_sampled_threshold_js(gamma_size: usize, theta: f64) -> Result<f64, JsError> {
    threshold(gamma_size, theta).map_err(|e| JsError::new(&e))
}

/// Cluster `flat` (row-major, `dim` values per point) into `k` groups.
/// Returns the clustering as JSON.
#[wasm_bindgen(js_name = kmeansCluster)]
pub fn kmeans_js(flat: &[f64], dim: usize, k: usize, seed: u64) -> Result<String, JsError> {
    to_json(&cluster(flat, dim, k, seed).map_err(|e| JsError::new(&e))?)
}

/// Replay a ranking trace through an LFU cache of `capacity` slots.
/// Returns the per-frame outcomes as JSON.
#[wasm_bindgen(js_name = simulateCache)]
pub fn simulate_js(capacity: usize, rankings: &str) -> Result<String, JsError> {
    let rankings = parse_rankings(rankings).map_err(|e| JsError::new(&e))?;
    to_json(&simulate(capacity, &rankings).map_err(|e| JsError::new(&e))?)
}
