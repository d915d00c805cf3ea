//! Exact evaluation of the chunk/file/download moment generating functions,
//! the two stall-duration bounds, the weighted objective, the feasible domain
//! of the bound parameters, and the caching / parallel-stream transforms.

use crate::error::{Error, Result};
use crate::model::{AccessMatrix, AuxVars, Placement, ServerParams, SystemConfig};

/// Below this distance from 1, the geometric closed form of the per-file sum
/// degenerates and term-by-term summation is used instead.
pub const GEOMETRIC_DEGENERACY: f64 = 1e-12;

/// Evaluation mode for [`h_ij`]: the closed geometric form or the defining
/// term-by-term sum (the oracle).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HMode {
    Closed,
    Direct,
}

/// Which feasibility constraint pins the upper end of the t-domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingConstraint {
    /// t < alpha_j (chunk MGF pole).
    ChunkPole { server: usize },
    /// alpha_j (e^{(beta_j - tau) t} - 1) + t < 0 (shifted chunk MGF below 1).
    SegmentContraction { server: usize },
    /// sum_f pi_fj lambda_f M_j(t)^{L_f} < Lambda_j + t (download MGF exists).
    LoadExistence { server: usize },
}

/// Chunk MGF alpha/(alpha - t) e^{beta t}, defined for t < alpha.
pub fn chunk_mgf(sp: &ServerParams, t: f64) -> Result<f64> {
    if t >= sp.alpha {
        return Err(Error::MgfPole { t, alpha: sp.alpha });
    }
    Ok(sp.alpha / (sp.alpha - t) * (sp.beta * t).exp())
}

fn ln_chunk_mgf(sp: &ServerParams, t: f64) -> f64 {
    sp.alpha.ln() - (sp.alpha - t).ln() + sp.beta * t
}

/// Shifted chunk MGF M(t) e^{-t tau} together with the algebraic contraction
/// check used by the feasibility constraints.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedMgf {
    pub value: f64,
    /// alpha (e^{(beta - tau) t} - 1) + t; negative iff the shifted MGF is
    /// below 1 (for t < alpha).
    pub contraction: f64,
}

impl ShiftedMgf {
    pub fn is_contracting(&self) -> bool {
        self.contraction < 0.0
    }
}

pub fn shifted_chunk_mgf(sp: &ServerParams, t: f64, tau: f64) -> Result<ShiftedMgf> {
    let value = chunk_mgf(sp, t)? * (-t * tau).exp();
    let contraction = sp.alpha * (((sp.beta - tau) * t).exp() - 1.0) + t;
    Ok(ShiftedMgf { value, contraction })
}

/// Per-(file, server) caching transform: effective chunk counts
/// L_i - L_{j,i} plus arrival rates zeroed for fully cached files.
#[derive(Debug, Clone)]
pub struct CachingTransform {
    pub cfg: SystemConfig,
    /// `effective_segments[i][j]` chunks of file i must be fetched from
    /// server j when accessed there.
    pub effective_segments: Vec<Vec<u32>>,
}

/// Builds the caching view of a configuration. A file cached in full on
/// every server stops arriving (rate set to zero); partially cached files
/// fetch only the uncached suffix.
pub fn apply_caching(cfg: &SystemConfig) -> Result<CachingTransform> {
    cfg.validate()?;
    let m = cfg.num_servers();
    let mut out = cfg.clone();
    let mut seg = Vec::with_capacity(cfg.num_files());
    for (i, f) in cfg.files.iter().enumerate() {
        let row: Vec<u32> = (0..m).map(|j| f.segments - f.cached_prefix_at(j)).collect();
        if row.iter().all(|&s| s == 0) {
            out.files[i].arrival_rate = 0.0;
        }
        seg.push(row);
    }
    Ok(CachingTransform {
        cfg: out,
        effective_segments: seg,
    })
}

/// Expands each server into y logical streams, scaling the service rate down
/// and the shift up by y, and spreading access probabilities uniformly over
/// the streams. y = 1 returns untouched clones.
pub fn apply_parallel_streams(cfg: &SystemConfig, pi: &AccessMatrix) -> (SystemConfig, AccessMatrix) {
    let y = cfg.streams_per_server;
    if y <= 1 {
        return (cfg.clone(), pi.clone());
    }
    let yf = y as f64;
    let m = cfg.num_servers();
    let mut out = cfg.clone();
    out.streams_per_server = 1;
    out.servers = cfg
        .servers
        .iter()
        .flat_map(|s| {
            std::iter::repeat(ServerParams {
                alpha: s.alpha / yf,
                beta: s.beta * yf,
            })
            .take(y as usize)
        })
        .collect();
    for f in &mut out.files {
        f.coded_chunks = (f.coded_chunks * y).min(out.servers.len() as u32);
        let expanded: std::collections::BTreeMap<usize, u32> = f
            .cached_prefix
            .iter()
            .flat_map(|(&j, &l)| (0..y as usize).map(move |v| (j * y as usize + v, l)))
            .collect();
        f.cached_prefix = expanded;
    }
    let mut pi_out = AccessMatrix::zeros(cfg.num_files(), m * y as usize);
    for (i, row) in pi.pi.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            for v in 0..y as usize {
                pi_out.pi[i][j * y as usize + v] = p / yf;
            }
        }
    }
    (out, pi_out)
}

/// Server-level MGF quantities at a given t, shared by every bound formula.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Curves {
    pub ln_m: f64,
    /// M(t) e^{-t tau}
    pub mt: f64,
    /// file-service MGF B_j(t); 1 when the server is idle
    pub b: f64,
    /// t - Lambda_j (B_j(t) - 1)
    pub den: f64,
    /// waiting + service normalizer (1 - rho) t B / den
    pub pk: f64,
    /// d/dt ln M
    pub dln_m: f64,
    /// sum_f w_f L_f M^{L_f} (derivative helper; 0 for idle servers)
    pub a1: f64,
}

/// Internal evaluation state over the effective system: parallel streams
/// expanded, caching applied, per-server aggregates precomputed.
pub(crate) struct Evaluator {
    pub cfg: SystemConfig,
    pub pi: AccessMatrix,
    pub seg: Vec<Vec<u32>>,
    /// Per-file startup delay including the cached-prefix credit
    /// (minimum prefix over the accessed servers).
    pub startup: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    pub physical_servers: usize,
    pub streams: u32,
}

impl Evaluator {
    pub fn new(cfg: &SystemConfig, pi: &AccessMatrix) -> Result<Self> {
        let physical_servers = cfg.num_servers();
        let streams = cfg.streams_per_server;
        let (expanded_cfg, expanded_pi) = apply_parallel_streams(cfg, pi);
        let caching = apply_caching(&expanded_cfg)?;
        let cfg = caching.cfg;
        let seg = caching.effective_segments;
        if expanded_pi.num_files() != cfg.num_files()
            || expanded_pi.num_servers() != cfg.num_servers()
        {
            return Err(Error::Config(format!(
                "access matrix is {}x{}, system is {}x{}",
                expanded_pi.num_files(),
                expanded_pi.num_servers(),
                cfg.num_files(),
                cfg.num_servers()
            )));
        }
        let mut startup = Vec::with_capacity(cfg.num_files());
        for (i, f) in cfg.files.iter().enumerate() {
            let credit = expanded_pi.pi[i]
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(j, _)| f.cached_prefix_at(j))
                .min()
                .unwrap_or(0);
            startup.push(cfg.startup_delay + cfg.segment_duration * credit as f64);
        }
        let lambda = crate::model::lambda_agg(&cfg, &expanded_pi);
        let mut rho = vec![0.0; cfg.num_servers()];
        for (i, f) in cfg.files.iter().enumerate() {
            for j in 0..cfg.num_servers() {
                rho[j] += expanded_pi.pi[i][j]
                    * f.arrival_rate
                    * seg[i][j] as f64
                    * cfg.servers[j].mean_chunk_time();
            }
        }
        Ok(Evaluator {
            cfg,
            pi: expanded_pi,
            seg,
            startup,
            lambda,
            rho,
            physical_servers,
            streams,
        })
    }

    pub fn num_files(&self) -> usize {
        self.cfg.num_files()
    }

    pub fn num_servers(&self) -> usize {
        self.cfg.num_servers()
    }

    pub(crate) fn curves(&self, j: usize, t: f64) -> Result<Curves> {
        let sp = self.cfg.servers[j];
        if !(t > 0.0) {
            return Err(Error::Config(format!("t must be > 0, got {t}")));
        }
        if t >= sp.alpha {
            return Err(Error::MgfPole { t, alpha: sp.alpha });
        }
        let rho = self.rho[j];
        if rho >= 1.0 {
            return Err(Error::Unstable { server: j, rho });
        }
        let ln_m = ln_chunk_mgf(&sp, t);
        let mt = ln_m.exp() * (-t * self.cfg.segment_duration).exp();
        let dln_m = sp.beta + 1.0 / (sp.alpha - t);
        let lam = self.lambda[j];
        let (b, a1) = if lam > 0.0 {
            let mut b = 0.0;
            let mut a1 = 0.0;
            for (i, f) in self.cfg.files.iter().enumerate() {
                let w = self.pi.pi[i][j] * f.arrival_rate;
                if w <= 0.0 {
                    continue;
                }
                let l = self.seg[i][j] as f64;
                let pw = (l * ln_m).exp();
                b += w * pw;
                a1 += w * l * pw;
            }
            (b / lam, a1 / lam)
        } else {
            (1.0, 0.0)
        };
        let den = t - lam * (b - 1.0);
        if !(den > 0.0) {
            return Err(Error::MgfExistence {
                server: j,
                constraint: "load-existence",
                value: lam * (b - 1.0) - t,
                t,
            });
        }
        let pk = (1.0 - rho) * t * b / den;
        Ok(Curves {
            ln_m,
            mt,
            b,
            den,
            pk,
            dln_m,
            a1,
        })
    }

    /// Validates the full set of per-server domain constraints for t, then
    /// hands back the curves of each server.
    fn curves_all(&self, t: f64) -> Result<Vec<Curves>> {
        (0..self.num_servers()).map(|j| self.curves(j, t)).collect()
    }

    pub(crate) fn h_from_curves(&self, i: usize, j: usize, t: f64, c: &Curves, mode: HMode) -> f64 {
        let l = self.seg[i][j];
        if l == 0 {
            return 0.0;
        }
        let front = c.pk * (-t * (self.startup[i] - self.cfg.segment_duration)).exp();
        match mode {
            HMode::Closed if (1.0 - c.mt).abs() >= GEOMETRIC_DEGENERACY => {
                front * c.mt * (1.0 - c.mt.powi(l as i32)) / (1.0 - c.mt)
            }
            _ => {
                // term-by-term over chunk indices
                let mut acc = 0.0;
                let mut mt_pow = 1.0;
                for _ in 0..l {
                    mt_pow *= c.mt;
                    acc += mt_pow;
                }
                front * acc
            }
        }
    }

    pub fn h(&self, i: usize, j: usize, t: f64, mode: HMode) -> Result<f64> {
        let c = self.curves(j, t)?;
        Ok(self.h_from_curves(i, j, t, &c, mode))
    }

    /// Geometric factor of the per-file sum (reported alongside the bounds).
    pub fn q(&self, i: usize, j: usize, t: f64) -> Result<f64> {
        let c = self.curves(j, t)?;
        let l = self.seg[i][j];
        if l == 0 {
            return Ok(0.0);
        }
        if (1.0 - c.mt).abs() >= GEOMETRIC_DEGENERACY {
            Ok(c.mt * (1.0 - c.mt.powi(l as i32)) / (1.0 - c.mt))
        } else {
            let mut acc = 0.0;
            let mut mt_pow = 1.0;
            for _ in 0..l {
                mt_pow *= c.mt;
                acc += mt_pow;
            }
            Ok(acc)
        }
    }

    /// log-argument of the mean bound: sum_j pi_ij (1 + H_ij).
    fn bound_sum(&self, i: usize, t: f64) -> Result<f64> {
        let curves = self.curves_all(t)?;
        let mut g = 0.0;
        for (j, &p) in self.pi.pi[i].iter().enumerate() {
            if p > 0.0 {
                g += p * (1.0 + self.h_from_curves(i, j, t, &curves[j], HMode::Closed));
            }
        }
        Ok(g)
    }

    pub fn mean_bound(&self, i: usize, t: f64) -> Result<f64> {
        Ok(self.bound_sum(i, t)?.ln() / t)
    }

    pub fn tail_bound(&self, i: usize, t: f64, x: f64) -> Result<f64> {
        Ok((-t * x).exp() * self.bound_sum(i, t)?)
    }

    /// Weighted objective: sum_i (lambda_i / total) [theta mean_i + (1-theta) tail_i].
    pub fn objective(&self, aux: &AuxVars) -> Result<f64> {
        let total = self.cfg.total_arrival_rate();
        if total <= 0.0 {
            return Ok(0.0);
        }
        let theta = self.cfg.tradeoff;
        let x = self.cfg.tail_threshold;
        let mut obj = 0.0;
        for (i, f) in self.cfg.files.iter().enumerate() {
            if f.arrival_rate <= 0.0 {
                continue;
            }
            let w = f.arrival_rate / total;
            if theta > 0.0 {
                obj += w * theta * self.mean_bound(i, aux.t_mean[i])?;
            }
            if theta < 1.0 {
                obj += w * (1.0 - theta) * self.tail_bound(i, aux.t_tail[i], x)?;
            }
        }
        Ok(obj)
    }

    fn constraint_margins(&self, t: f64) -> Vec<(BindingConstraint, f64)> {
        let tau = self.cfg.segment_duration;
        let mut out = Vec::with_capacity(3 * self.num_servers());
        for (j, sp) in self.cfg.servers.iter().enumerate() {
            out.push((BindingConstraint::ChunkPole { server: j }, t - sp.alpha));
            let contraction = sp.alpha * (((sp.beta - tau) * t).exp() - 1.0) + t;
            out.push((BindingConstraint::SegmentContraction { server: j }, contraction));
            if t < sp.alpha {
                // log-space load constraint: lse_f [ln(pi lambda) + L ln M] < ln(Lambda + t)
                let ln_m = ln_chunk_mgf(sp, t);
                let mut terms = Vec::new();
                for (i, f) in self.cfg.files.iter().enumerate() {
                    let w = self.pi.pi[i][j] * f.arrival_rate;
                    if w > 0.0 {
                        terms.push(w.ln() + self.seg[i][j] as f64 * ln_m);
                    }
                }
                let lhs = log_sum_exp(&terms);
                let margin = lhs - (self.lambda[j] + t).ln();
                out.push((BindingConstraint::LoadExistence { server: j }, margin));
            } else {
                out.push((BindingConstraint::LoadExistence { server: j }, f64::INFINITY));
            }
        }
        out
    }

    fn t_feasible(&self, t: f64) -> bool {
        self.constraint_margins(t).iter().all(|(_, v)| *v < 0.0)
    }

    /// Supremum of the t > 0 jointly satisfying the pole, contraction and
    /// load-existence constraints on every server, by bisection. The feasible
    /// set is an interval (0, t_max) since each constraint is convex in t
    /// with value <= 0 at t = 0.
    pub fn t_domain_max(&self) -> Result<(f64, BindingConstraint)> {
        if let Some(j) = self.rho.iter().position(|&r| r >= 1.0) {
            return Err(Error::Unstable { server: j, rho: self.rho[j] });
        }
        let alpha_min = self
            .cfg
            .servers
            .iter()
            .map(|s| s.alpha)
            .fold(f64::INFINITY, f64::min);
        let mut lo = 1e-12;
        let mut hi = alpha_min - 1e-9;
        if !self.t_feasible(lo) {
            let worst = self
                .constraint_margins(lo)
                .into_iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let server = match worst.0 {
                BindingConstraint::ChunkPole { server }
                | BindingConstraint::SegmentContraction { server }
                | BindingConstraint::LoadExistence { server } => server,
            };
            return Err(Error::EmptyTDomain { server });
        }
        if self.t_feasible(hi) {
            let j = self
                .cfg
                .servers
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.alpha.total_cmp(&b.1.alpha))
                .map(|(j, _)| j)
                .unwrap();
            return Ok((hi, BindingConstraint::ChunkPole { server: j }));
        }
        for _ in 0..200 {
            if hi - lo <= 1e-10 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.t_feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let binding = self
            .constraint_margins(hi)
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
            .unwrap();
        Ok((lo, binding))
    }

    /// d ln(pk) / d pi_fj at fixed t; 0 for idle columns (flat extension).
    fn dln_pk_access(&self, f: usize, j: usize, c: &Curves) -> f64 {
        let lam = self.lambda[j];
        if lam <= 0.0 {
            return 0.0;
        }
        let fl = &self.cfg.files[f];
        let rate = fl.arrival_rate;
        if rate <= 0.0 {
            return 0.0;
        }
        let seg = self.seg[f][j] as f64;
        let sp = self.cfg.servers[j];
        let d_rho = rate * seg * sp.mean_chunk_time();
        let d_a = rate * (seg * c.ln_m).exp();
        let a = lam * c.b;
        -d_rho / (1.0 - self.rho[j]) + d_a / a - rate / lam - (rate - d_a) / c.den
    }

    /// Objective gradient with respect to the physical access matrix.
    pub fn grad_access(&self, aux: &AuxVars) -> Result<Vec<Vec<f64>>> {
        let total = self.cfg.total_arrival_rate();
        let r = self.num_files();
        let m_eff = self.num_servers();
        let mut grad = vec![vec![0.0; m_eff]; r];
        if total > 0.0 {
            let theta = self.cfg.tradeoff;
            let x = self.cfg.tail_threshold;
            for i in 0..r {
                let w = self.cfg.files[i].arrival_rate / total;
                if w <= 0.0 {
                    continue;
                }
                if theta > 0.0 {
                    let t = aux.t_mean[i];
                    let curves = self.curves_all(t)?;
                    let hs: Vec<f64> = (0..m_eff)
                        .map(|j| self.h_from_curves(i, j, t, &curves[j], HMode::Closed))
                        .collect();
                    let g: f64 = self
                        .pi
                        .pi[i]
                        .iter()
                        .zip(&hs)
                        .map(|(&p, &h)| p * (1.0 + h))
                        .sum();
                    let scale = w * theta / (t * g);
                    for j in 0..m_eff {
                        grad[i][j] += scale * (1.0 + hs[j]);
                        let coef = scale * self.pi.pi[i][j] * hs[j];
                        if coef != 0.0 {
                            for f in 0..r {
                                grad[f][j] += coef * self.dln_pk_access(f, j, &curves[j]);
                            }
                        }
                    }
                }
                if theta < 1.0 {
                    let t = aux.t_tail[i];
                    let curves = self.curves_all(t)?;
                    let hs: Vec<f64> = (0..m_eff)
                        .map(|j| self.h_from_curves(i, j, t, &curves[j], HMode::Closed))
                        .collect();
                    let scale = w * (1.0 - theta) * (-t * x).exp();
                    for j in 0..m_eff {
                        grad[i][j] += scale * (1.0 + hs[j]);
                        let coef = scale * self.pi.pi[i][j] * hs[j];
                        if coef != 0.0 {
                            for f in 0..r {
                                grad[f][j] += coef * self.dln_pk_access(f, j, &curves[j]);
                            }
                        }
                    }
                }
            }
        }
        if self.streams > 1 {
            // fold stream gradients back onto physical servers
            let y = self.streams as usize;
            let m_phys = self.physical_servers;
            let mut folded = vec![vec![0.0; m_phys]; r];
            for i in 0..r {
                for j in 0..m_phys {
                    folded[i][j] = (0..y).map(|v| grad[i][j * y + v]).sum::<f64>() / y as f64;
                }
            }
            return Ok(folded);
        }
        Ok(grad)
    }

    /// dH/dt for one (i, j) pair at t, matching the evaluation mode used for
    /// the value itself.
    fn dh_dt(&self, i: usize, j: usize, t: f64, c: &Curves) -> f64 {
        let l = self.seg[i][j];
        if l == 0 {
            return 0.0;
        }
        let d = self.startup[i];
        let tau = self.cfg.segment_duration;
        let lam = self.lambda[j];
        let db_over_b = c.dln_m * c.a1 / c.b;
        let dden = 1.0 - lam * c.dln_m * c.a1;
        let dln_pk = 1.0 / t + db_over_b - dden / c.den;
        if (1.0 - c.mt).abs() >= GEOMETRIC_DEGENERACY {
            let s = c.dln_m - tau;
            let mt_l = c.mt.powi(l as i32);
            let dln_k = -(d - tau)
                + s * (1.0 + c.mt / (1.0 - c.mt) - l as f64 * mt_l / (1.0 - mt_l));
            let h = self.h_from_curves(i, j, t, c, HMode::Closed);
            h * (dln_pk + dln_k)
        } else {
            let front = c.pk * (-t * (d - tau)).exp();
            let mut acc = 0.0;
            let mut mt_pow = 1.0;
            for ell in 1..=l {
                mt_pow *= c.mt;
                let dln_term = -(d + (ell as f64 - 1.0) * tau) + dln_pk + ell as f64 * c.dln_m;
                acc += mt_pow * dln_term;
            }
            front * acc
        }
    }

    /// Objective gradient with respect to the bound parameters, laid out as
    /// [t_mean_0 .. t_mean_{r-1}, t_tail_0 .. t_tail_{r-1}].
    pub fn grad_aux(&self, aux: &AuxVars) -> Result<Vec<f64>> {
        let r = self.num_files();
        let mut grad = vec![0.0; 2 * r];
        let total = self.cfg.total_arrival_rate();
        if total <= 0.0 {
            return Ok(grad);
        }
        let theta = self.cfg.tradeoff;
        let x = self.cfg.tail_threshold;
        for i in 0..r {
            let w = self.cfg.files[i].arrival_rate / total;
            if w <= 0.0 {
                continue;
            }
            if theta > 0.0 {
                let t = aux.t_mean[i];
                let curves = self.curves_all(t)?;
                let mut g = 0.0;
                let mut dg = 0.0;
                for (j, &p) in self.pi.pi[i].iter().enumerate() {
                    if p > 0.0 {
                        g += p * (1.0 + self.h_from_curves(i, j, t, &curves[j], HMode::Closed));
                        dg += p * self.dh_dt(i, j, t, &curves[j]);
                    }
                }
                grad[i] = w * theta * (-g.ln() / (t * t) + dg / (t * g));
            }
            if theta < 1.0 {
                let t = aux.t_tail[i];
                let curves = self.curves_all(t)?;
                let mut s = 0.0;
                let mut ds = 0.0;
                for (j, &p) in self.pi.pi[i].iter().enumerate() {
                    if p > 0.0 {
                        s += p * (1.0 + self.h_from_curves(i, j, t, &curves[j], HMode::Closed));
                        ds += p * self.dh_dt(i, j, t, &curves[j]);
                    }
                }
                grad[r + i] = w * (1.0 - theta) * (-t * x).exp() * (ds - x * s);
            }
        }
        Ok(grad)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    if terms.is_empty() {
        return f64::NEG_INFINITY;
    }
    let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return peak;
    }
    peak + terms.iter().map(|&v| (v - peak).exp()).sum::<f64>().ln()
}

/// File-service MGF B_j(t) of server j: the arrival-weighted mixture of the
/// per-file chunk-sum MGFs. The service LST is the same function at t = -s.
pub fn file_service_mgf(cfg: &SystemConfig, pi: &AccessMatrix, j: usize, t: f64) -> Result<f64> {
    let eval = Evaluator::new(cfg, pi)?;
    if eval.lambda[j] <= 0.0 {
        return Err(Error::IdleServer { server: j });
    }
    let sp = eval.cfg.servers[j];
    if t >= sp.alpha {
        return Err(Error::MgfPole { t, alpha: sp.alpha });
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let ln_m = ln_chunk_mgf(&sp, t);
    let mut b = 0.0;
    for (i, f) in eval.cfg.files.iter().enumerate() {
        let w = eval.pi.pi[i][j] * f.arrival_rate;
        if w > 0.0 {
            b += w * (eval.seg[i][j] as f64 * ln_m).exp();
        }
    }
    Ok(b / eval.lambda[j])
}

/// MGF of the download time of chunk `ell` of file i from server j:
/// waiting time (Pollaczek-Khinchine) times `ell` chunk services.
pub fn download_mgf(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    i: usize,
    j: usize,
    ell: u32,
    t: f64,
) -> Result<f64> {
    let eval = Evaluator::new(cfg, pi)?;
    let _ = i; // chunk index range is the caller's choice; i kept for symmetry
    let c = eval.curves(j, t)?;
    Ok(c.pk * (ell as f64 * c.ln_m).exp())
}

/// Discounted per-file sum H_ij = sum_{ell=1}^{L} e^{-t (d + (ell-1) tau)}
/// Z_ij^{(ell)}(t), in closed geometric form or as the defining sum.
pub fn h_ij(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    i: usize,
    j: usize,
    t: f64,
    mode: HMode,
) -> Result<f64> {
    Evaluator::new(cfg, pi)?.h(i, j, t, mode)
}

/// Upper bound on the mean stall duration of file i at bound parameter t.
pub fn mean_stall_bound(cfg: &SystemConfig, pi: &AccessMatrix, i: usize, t: f64) -> Result<f64> {
    Evaluator::new(cfg, pi)?.mean_bound(i, t)
}

/// Upper bound on P(stall of file i >= x) at bound parameter t.
pub fn tail_bound(cfg: &SystemConfig, pi: &AccessMatrix, i: usize, t: f64, x: f64) -> Result<f64> {
    Evaluator::new(cfg, pi)?.tail_bound(i, t, x)
}

/// Arrival-weighted tradeoff objective over all files.
pub fn weighted_objective(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    placement: &Placement,
    aux: &AuxVars,
) -> Result<f64> {
    let violations = crate::model::validate_config(cfg, placement, pi);
    if let Some(v) = violations.first() {
        return Err(Error::Config(v.to_string()));
    }
    Evaluator::new(cfg, pi)?.objective(aux)
}

/// Largest feasible bound parameter and the constraint binding there. The
/// domain is shared by all files; the file argument is kept for interface
/// symmetry with the per-file bounds.
pub fn t_domain_max(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    _i: usize,
) -> Result<(f64, BindingConstraint)> {
    Evaluator::new(cfg, pi)?.t_domain_max()
}

/// Per-file bound rows of a [`BoundReport`].
#[derive(Debug, Clone)]
pub struct FileBounds {
    pub file: usize,
    pub mean_bound: f64,
    pub tail_bound: f64,
    pub t_mean: f64,
    pub t_tail: f64,
}

/// Analytical bound report: per-file bounds, per-server load, the weighted
/// objective, and the intermediate per-(file, server) factors.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub per_file: Vec<FileBounds>,
    /// (Lambda_j, rho_j) per effective server.
    pub per_server: Vec<(f64, f64)>,
    pub objective: f64,
    pub h_mean: Vec<Vec<f64>>,
    pub h_tail: Vec<Vec<f64>>,
    pub q_mean: Vec<Vec<f64>>,
    pub q_tail: Vec<Vec<f64>>,
}

impl BoundReport {
    /// CSV with one row per file and one row per server. Tail bounds are
    /// written raw; values above 1 are meaningful (the bound is an envelope)
    /// and must only be clamped for display.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kind,index,mean_stall_bound,tail_probability_bound,t_mean,t_tail,lambda,rho\n",
        );
        for row in &self.per_file {
            out.push_str(&format!(
                "file,{},{},{},{},{},,\n",
                row.file, row.mean_bound, row.tail_bound, row.t_mean, row.t_tail
            ));
        }
        for (j, (lambda, rho)) in self.per_server.iter().enumerate() {
            out.push_str(&format!("server,{j},,,,,{lambda},{rho}\n"));
        }
        out.push_str(&format!("objective,,{},,,,,\n", self.objective));
        out
    }
}

pub fn bound_report(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    aux: &AuxVars,
) -> Result<BoundReport> {
    let eval = Evaluator::new(cfg, pi)?;
    let r = eval.num_files();
    let m = eval.num_servers();
    let x = eval.cfg.tail_threshold;
    let mut per_file = Vec::with_capacity(r);
    let mut h_mean = vec![vec![0.0; m]; r];
    let mut h_tail = vec![vec![0.0; m]; r];
    let mut q_mean = vec![vec![0.0; m]; r];
    let mut q_tail = vec![vec![0.0; m]; r];
    for i in 0..r {
        let tm = aux.t_mean[i];
        let tt = aux.t_tail[i];
        per_file.push(FileBounds {
            file: i,
            mean_bound: eval.mean_bound(i, tm)?,
            tail_bound: eval.tail_bound(i, tt, x)?,
            t_mean: tm,
            t_tail: tt,
        });
        for j in 0..m {
            h_mean[i][j] = eval.h(i, j, tm, HMode::Closed)?;
            h_tail[i][j] = eval.h(i, j, tt, HMode::Closed)?;
            q_mean[i][j] = eval.q(i, j, tm)?;
            q_tail[i][j] = eval.q(i, j, tt)?;
        }
    }
    let objective = eval.objective(aux)?;
    let per_server = eval
        .lambda
        .iter()
        .zip(&eval.rho)
        .map(|(&l, &r)| (l, r))
        .collect();
    Ok(BoundReport {
        per_file,
        per_server,
        objective,
        h_mean,
        h_tail,
        q_mean,
        q_tail,
    })
}
