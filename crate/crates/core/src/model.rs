//! Domain types for the storage cluster, workload, placement and access
//! probabilities, plus feasibility validation and projection.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Absolute tolerance on access-row sums. Accumulated float error over up to
/// 1e4 terms stays well below this.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Shifted-exponential service parameters of one storage node: rate `alpha`
/// (1/s) and deterministic shift `beta` (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ServerParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Config(format!("server alpha must be > 0, got {alpha}")));
        }
        if !(beta >= 0.0) {
            return Err(Error::Config(format!("server beta must be >= 0, got {beta}")));
        }
        Ok(ServerParams { alpha, beta })
    }

    /// Mean service time of one chunk, beta + 1/alpha.
    pub fn mean_chunk_time(&self) -> f64 {
        self.beta + 1.0 / self.alpha
    }
}

/// One video in the catalog: `segments` pieces of equal play length, each
/// erasure-coded into `coded_chunks` chunks of which any `data_chunks`
/// reconstruct it.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFile {
    pub id: usize,
    /// Number of segments L_i.
    pub segments: u32,
    /// k_i: chunks needed per segment.
    pub data_chunks: u32,
    /// n_i: coded chunks stored per segment.
    pub coded_chunks: u32,
    /// Poisson request rate (1/s). Zero is allowed (e.g. fully cached files).
    pub arrival_rate: f64,
    /// Optional per-server cached prefix length (segments already present at
    /// the edge for that server's chunk). Missing entries mean 0.
    pub cached_prefix: BTreeMap<usize, u32>,
}

impl VideoFile {
    pub fn new(id: usize, segments: u32, data_chunks: u32, coded_chunks: u32, arrival_rate: f64) -> Self {
        VideoFile {
            id,
            segments,
            data_chunks,
            coded_chunks,
            arrival_rate,
            cached_prefix: BTreeMap::new(),
        }
    }

    pub fn cached_prefix_at(&self, server: usize) -> u32 {
        self.cached_prefix.get(&server).copied().unwrap_or(0)
    }
}

/// Full system description: cluster, catalog and scenario scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub servers: Vec<ServerParams>,
    pub files: Vec<VideoFile>,
    /// Segment play duration tau (s).
    pub segment_duration: f64,
    /// Startup (buffering) delay d_s (s).
    pub startup_delay: f64,
    /// Tail threshold x (s) for the stall tail probability.
    pub tail_threshold: f64,
    /// Tradeoff weight theta in [0,1]: 1 = mean-stall only, 0 = tail only.
    pub tradeoff: f64,
    /// Parallel streams per server y (logical queues to the edge router).
    pub streams_per_server: u32,
}

impl SystemConfig {
    pub fn num_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn num_files(&self) -> usize {
        self.files.len()
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.files.iter().map(|f| f.arrival_rate).sum()
    }

    /// Checks the scalar and per-file invariants that do not involve a
    /// placement or access matrix.
    pub fn validate(&self) -> Result<()> {
        if self.servers.is_empty() {
            return Err(Error::Config("at least one server required".into()));
        }
        if !(self.segment_duration > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.segment_duration)));
        }
        if !(self.startup_delay >= 0.0) {
            return Err(Error::Config(format!("ds must be >= 0, got {}", self.startup_delay)));
        }
        if !(self.tail_threshold >= 0.0) {
            return Err(Error::Config(format!("x must be >= 0, got {}", self.tail_threshold)));
        }
        if !(0.0..=1.0).contains(&self.tradeoff) {
            return Err(Error::Config(format!("theta must be in [0,1], got {}", self.tradeoff)));
        }
        if self.streams_per_server < 1 {
            return Err(Error::Config("streams per server must be >= 1".into()));
        }
        let m = self.num_servers() as u32;
        for (i, s) in self.servers.iter().enumerate() {
            if !(s.alpha > 0.0) || !(s.beta >= 0.0) {
                return Err(Error::Config(format!(
                    "server {i}: alpha = {} beta = {} invalid",
                    s.alpha, s.beta
                )));
            }
        }
        for f in &self.files {
            if f.segments < 1 {
                return Err(Error::Config(format!("file {}: segments must be >= 1", f.id)));
            }
            if f.data_chunks < 1 || f.data_chunks > f.coded_chunks || f.coded_chunks > m {
                return Err(Error::Config(format!(
                    "file {}: need 1 <= k <= n <= m, got k = {} n = {} m = {m}",
                    f.id, f.data_chunks, f.coded_chunks
                )));
            }
            if !(f.arrival_rate >= 0.0) {
                return Err(Error::Config(format!("file {}: lambda must be >= 0", f.id)));
            }
            for (&j, &prefix) in &f.cached_prefix {
                if j >= self.servers.len() {
                    return Err(Error::Config(format!(
                        "file {}: cached prefix names unknown server {j}",
                        f.id
                    )));
                }
                if prefix > f.segments {
                    return Err(Error::Config(format!(
                        "file {}: cached prefix {prefix} exceeds segment count {}",
                        f.id, f.segments
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-file set of storage nodes holding its coded chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    /// `sets[i]` is the sorted list of server indices storing file i.
    pub sets: Vec<Vec<usize>>,
}

impl Placement {
    pub fn new(mut sets: Vec<Vec<usize>>) -> Self {
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        Placement { sets }
    }

    pub fn contains(&self, file: usize, server: usize) -> bool {
        self.sets[file].binary_search(&server).is_ok()
    }
}

/// Per-file per-server scheduling probabilities pi[i][j].
#[derive(Debug, Clone, PartialEq)]
pub struct AccessMatrix {
    pub pi: Vec<Vec<f64>>,
}

impl AccessMatrix {
    pub fn zeros(files: usize, servers: usize) -> Self {
        AccessMatrix {
            pi: vec![vec![0.0; servers]; files],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.pi[i]
    }

    pub fn num_files(&self) -> usize {
        self.pi.len()
    }

    pub fn num_servers(&self) -> usize {
        self.pi.first().map_or(0, |r| r.len())
    }
}

/// Per-file bound parameters: t_mean drives the mean-stall bound, t_tail the
/// tail bound.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxVars {
    pub t_mean: Vec<f64>,
    pub t_tail: Vec<f64>,
}

impl AuxVars {
    pub fn uniform(files: usize, t: f64) -> Self {
        AuxVars {
            t_mean: vec![t; files],
            t_tail: vec![t; files],
        }
    }
}

/// One feasibility violation found by [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { file: usize, got: f64, want: f64 },
    EntryRange { file: usize, server: usize, value: f64 },
    SupportOutsidePlacement { file: usize, server: usize },
    PlacementSize { file: usize, got: usize, want: usize },
    PlacementIndex { file: usize, server: usize },
    Shape { detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { file, got, want } => {
                write!(f, "file {file}: row sum {got} != k = {want}")
            }
            Violation::EntryRange { file, server, value } => {
                write!(f, "file {file} server {server}: probability {value} outside [0,1]")
            }
            Violation::SupportOutsidePlacement { file, server } => {
                write!(f, "file {file} server {server}: support outside placement")
            }
            Violation::PlacementSize { file, got, want } => {
                write!(f, "file {file}: placement size {got} != n = {want}")
            }
            Violation::PlacementIndex { file, server } => {
                write!(f, "file {file}: placement names unknown server {server}")
            }
            Violation::Shape { detail } => write!(f, "shape mismatch: {detail}"),
        }
    }
}

/// Diagnostic check of every placement/access invariant. Returns an empty
/// list iff all hold (row sums within [`ROW_SUM_TOL`]).
pub fn validate_config(cfg: &SystemConfig, placement: &Placement, pi: &AccessMatrix) -> Vec<Violation> {
    let mut out = Vec::new();
    let r = cfg.num_files();
    let m = cfg.num_servers();
    if placement.sets.len() != r || pi.pi.len() != r {
        out.push(Violation::Shape {
            detail: format!(
                "{} files, placement has {}, access has {} rows",
                r,
                placement.sets.len(),
                pi.pi.len()
            ),
        });
        return out;
    }
    for (i, file) in cfg.files.iter().enumerate() {
        let set = &placement.sets[i];
        if set.len() != file.coded_chunks as usize {
            out.push(Violation::PlacementSize {
                file: i,
                got: set.len(),
                want: file.coded_chunks as usize,
            });
        }
        for &j in set {
            if j >= m {
                out.push(Violation::PlacementIndex { file: i, server: j });
            }
        }
        let row = &pi.pi[i];
        if row.len() != m {
            out.push(Violation::Shape {
                detail: format!("file {i}: access row length {} != m = {m}", row.len()),
            });
            continue;
        }
        let mut sum = 0.0;
        for (j, &p) in row.iter().enumerate() {
            sum += p;
            if !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(&p) {
                out.push(Violation::EntryRange { file: i, server: j, value: p });
            }
            if p > ROW_SUM_TOL && !placement.contains(i, j) {
                out.push(Violation::SupportOutsidePlacement { file: i, server: j });
            }
        }
        let want = file.data_chunks as f64;
        if (sum - want).abs() > ROW_SUM_TOL {
            out.push(Violation::RowSum { file: i, got: sum, want });
        }
    }
    out
}

/// Aggregate request rate at each server under the given access matrix.
pub fn lambda_agg(cfg: &SystemConfig, pi: &AccessMatrix) -> Vec<f64> {
    let m = cfg.num_servers();
    let mut agg = vec![0.0; m];
    for (file, row) in cfg.files.iter().zip(&pi.pi) {
        for (slot, p) in agg.iter_mut().zip(row) {
            *slot += file.arrival_rate * p;
        }
    }
    agg
}

/// Per-server utilization rho_j = sum_i pi_ij lambda_i L_i (beta_j + 1/alpha_j).
/// Values >= 1 mean the queue is unstable.
pub fn utilization(cfg: &SystemConfig, pi: &AccessMatrix) -> Vec<f64> {
    let mut rho = vec![0.0; cfg.num_servers()];
    for (file, row) in cfg.files.iter().zip(&pi.pi) {
        let load = file.arrival_rate * file.segments as f64;
        for (j, (slot, p)) in rho.iter_mut().zip(row).enumerate() {
            *slot += p * load * cfg.servers[j].mean_chunk_time();
        }
    }
    rho
}

/// Servers whose utilization is at or above 1.
pub fn unstable_servers(rho: &[f64]) -> Vec<usize> {
    rho.iter()
        .enumerate()
        .filter(|(_, &r)| r >= 1.0)
        .map(|(j, _)| j)
        .collect()
}

/// Euclidean projection of each row onto the feasible access polytope
/// {0 <= pi <= 1, sum_j pi_ij = k_i, support within the placement}.
pub fn project_access(pi_raw: &[Vec<f64>], placement: &Placement, ks: &[u32]) -> Result<AccessMatrix> {
    let r = pi_raw.len();
    assert_eq!(placement.sets.len(), r, "placement/access row mismatch");
    assert_eq!(ks.len(), r, "k/access row mismatch");
    let m = pi_raw.first().map_or(0, |row| row.len());
    let mut out = AccessMatrix::zeros(r, m);
    for i in 0..r {
        let support = &placement.sets[i];
        let k = ks[i] as f64;
        if (ks[i] as usize) > support.len() {
            return Err(Error::InfeasibleProjection {
                file: i,
                k,
                cap: support.len(),
            });
        }
        let vals: Vec<f64> = support.iter().map(|&j| pi_raw[i][j]).collect();
        let projected = project_capped_simplex(&vals, k);
        for (&j, v) in support.iter().zip(projected) {
            out.pi[i][j] = v;
        }
    }
    Ok(out)
}

/// Projection of `y` onto {0 <= x <= 1, sum x = k} by waterfilling on the
/// dual variable with bisection, then an exact correction over the free set.
/// Requires k <= len(y).
pub fn project_capped_simplex(y: &[f64], k: f64) -> Vec<f64> {
    let n = y.len();
    debug_assert!(k <= n as f64 + ROW_SUM_TOL);
    // Fast path: already feasible, return untouched (projection idempotence).
    let sum: f64 = y.iter().sum();
    if (sum - k).abs() <= 1e-12 && y.iter().all(|&v| (0.0..=1.0).contains(&v)) {
        return y.to_vec();
    }
    let lo0 = y.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0;
    let hi0 = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mass = |mu: f64| -> f64 { y.iter().map(|&v| (v - mu).clamp(0.0, 1.0)).sum() };
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mass(mid) >= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut x: Vec<f64> = y.iter().map(|&v| (v - mu).clamp(0.0, 1.0)).collect();
    // Distribute the residual over strictly interior coordinates so the sum
    // is exact rather than bisection-accurate.
    let free: Vec<usize> = (0..n).filter(|&j| x[j] > 0.0 && x[j] < 1.0).collect();
    if !free.is_empty() {
        let resid = k - x.iter().sum::<f64>();
        let bump = resid / free.len() as f64;
        for j in free {
            x[j] = (x[j] + bump).clamp(0.0, 1.0);
        }
    }
    x
}
