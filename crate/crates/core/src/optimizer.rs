//! Alternating minimization of the weighted stall objective over access
//! probabilities, bound parameters and content placement.
//!
//! Each sub-problem is solved with an inner-convex-approximation scheme: the
//! objective is replaced by a proximal first-order surrogate at the current
//! iterate, the surrogate is minimized over the (convex) constraint set, and
//! the iterate moves a diminishing step toward that minimizer. Steps are
//! accepted only when they keep the iterate feasible and do not increase the
//! true objective, so every trace is monotone.

use ordered_float::OrderedFloat;
use pathfinding::prelude::{kuhn_munkres, Matrix};

use crate::analysis::Evaluator;
use crate::error::{Error, Result};
use crate::model::{
    project_access, validate_config, AccessMatrix, AuxVars, Placement, SystemConfig,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Solver knobs. The paper-level scheme fixes none of these; the defaults
/// give stable descent at desk scale.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Proximal weight of the access surrogate.
    pub tau_access: f64,
    /// Proximal weight of the aux surrogate.
    pub tau_aux: f64,
    /// First step size; step nu uses gamma0 / (1 + nu)^gamma_decay.
    pub gamma0: f64,
    pub gamma_decay: f64,
    /// Relative objective tolerance for outer convergence.
    pub eps: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Steepness of the binary-pushing penalty in the placement relaxation.
    pub sigmoid_steepness: f64,
    /// Weight of that penalty; derived from the initial objective when None.
    pub binary_penalty: Option<f64>,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tau_access: 1e-3,
            tau_aux: 1e-3,
            gamma0: 1.0,
            gamma_decay: 0.6,
            eps: 1e-6,
            max_outer: 1000,
            max_inner: 30,
            sigmoid_steepness: 50.0,
            binary_penalty: None,
            seed: 0,
        }
    }
}

impl SolverSettings {
    fn gamma(&self, nu: usize) -> f64 {
        self.gamma0 / (1.0 + nu as f64).powf(self.gamma_decay)
    }
}

/// Which sub-problem produced a trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Init,
    Access,
    Aux,
    Placement,
}

impl Stage {
    pub fn tag(&self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::Access => "access",
            Stage::Aux => "aux",
            Stage::Placement => "placement",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub outer: usize,
    pub stage: Stage,
    pub objective: f64,
    pub inner_iters: usize,
    /// Worst access-row feasibility residual at the recorded iterate.
    pub residual: f64,
}

/// Objective trajectory of a solve.
#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
}

impl SolveTrace {
    pub fn last_objective(&self) -> Option<f64> {
        self.entries.last().map(|e| e.objective)
    }

    /// True when the objective never rises by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective + slack)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,stage,objective,inner_iters,residual\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.outer,
                e.stage.tag(),
                e.objective,
                e.inner_iters,
                e.residual
            ));
        }
        out
    }
}

/// Final point of an alternating solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub pi: AccessMatrix,
    pub placement: Placement,
    pub aux: AuxVars,
    pub objective: f64,
    pub converged: bool,
}

/// Feasible starting point: seeded uniform random placement, equal access
/// projected to feasibility, small bound parameters pulled into the domain.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub placement: Placement,
    pub pi: AccessMatrix,
    pub aux: AuxVars,
}

/// Stage toggles for restricted optimizations (used by the baselines).
#[derive(Debug, Clone, Copy)]
pub struct StageMask {
    pub access: bool,
    pub aux: bool,
    pub placement: bool,
}

impl StageMask {
    pub fn all() -> Self {
        StageMask {
            access: true,
            aux: true,
            placement: true,
        }
    }
}

/// Gradient selector for [`objective_gradient`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientTarget {
    Access,
    Aux,
}

#[derive(Debug, Clone)]
pub enum Gradient {
    /// d objective / d pi[i][j].
    Access(Vec<Vec<f64>>),
    /// d objective / d t, laid out [t_mean.., t_tail..].
    Aux(Vec<f64>),
}

/// Analytic gradient of the weighted objective at a strictly feasible point.
pub fn objective_gradient(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    placement: &Placement,
    aux: &AuxVars,
    wrt: GradientTarget,
) -> Result<Gradient> {
    if let Some(v) = validate_config(cfg, placement, pi).first() {
        return Err(Error::Config(v.to_string()));
    }
    let eval = Evaluator::new(cfg, pi)?;
    match wrt {
        GradientTarget::Access => Ok(Gradient::Access(eval.grad_access(aux)?)),
        GradientTarget::Aux => Ok(Gradient::Aux(eval.grad_aux(aux)?)),
    }
}

fn row_residual(cfg: &SystemConfig, pi: &AccessMatrix) -> f64 {
    cfg.files
        .iter()
        .zip(&pi.pi)
        .map(|(f, row)| (row.iter().sum::<f64>() - f.data_chunks as f64).abs())
        .fold(0.0, f64::max)
}

fn objective_at(cfg: &SystemConfig, pi: &AccessMatrix, aux: &AuxVars) -> Result<f64> {
    Evaluator::new(cfg, pi)?.objective(aux)
}

/// Linear-in-access constraint data at fixed bound parameters: coefficients
/// of the download-MGF existence margin t - sum_f c_f pi_fj > 0 for every
/// (server, t) pair, and of the utilization margin 1 - rho_j > 0.
struct AccessConstraints {
    /// Distinct bound-parameter values in use.
    ts: Vec<f64>,
    /// existence[ti][j][f]: coefficient of pi_fj in the existence margin.
    existence: Vec<Vec<Vec<f64>>>,
    /// rho[j][f]: coefficient of pi_fj in the utilization.
    rho: Vec<Vec<f64>>,
}

impl AccessConstraints {
    fn build(cfg: &SystemConfig, probe: &AccessMatrix, aux: &AuxVars) -> Result<Self> {
        let eval = Evaluator::new(cfg, probe)?;
        let y = cfg.streams_per_server as usize;
        let m = cfg.num_servers();
        let r = cfg.num_files();
        let theta = cfg.tradeoff;
        let mut ts: Vec<f64> = Vec::new();
        for i in 0..r {
            if theta > 0.0 {
                ts.push(aux.t_mean[i]);
            }
            if theta < 1.0 {
                ts.push(aux.t_tail[i]);
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| a.to_bits() == b.to_bits());

        let mut existence = Vec::with_capacity(ts.len());
        for &t in &ts {
            let mut per_server = Vec::with_capacity(m);
            for j in 0..m {
                // all streams of a server are identical; use the first
                let je = j * y;
                let sp = eval.cfg.servers[je];
                if t >= sp.alpha {
                    return Err(Error::MgfPole { t, alpha: sp.alpha });
                }
                let ln_m = sp.alpha.ln() - (sp.alpha - t).ln() + sp.beta * t;
                let mut coef = vec![0.0; r];
                for (f, file) in eval.cfg.files.iter().enumerate() {
                    let seg = eval.seg[f][je] as f64;
                    coef[f] = file.arrival_rate * ((seg * ln_m).exp() - 1.0) / y as f64;
                }
                per_server.push(coef);
            }
            existence.push(per_server);
        }
        let mut rho = Vec::with_capacity(m);
        for j in 0..m {
            let je = j * y;
            let c = eval.cfg.servers[je].mean_chunk_time() / y as f64;
            let mut coef = vec![0.0; r];
            for (f, file) in eval.cfg.files.iter().enumerate() {
                coef[f] = file.arrival_rate * eval.seg[f][je] as f64 * c;
            }
            rho.push(coef);
        }
        Ok(AccessConstraints { ts, existence, rho })
    }

    /// Log-barrier value; infinite outside the strictly feasible region.
    fn barrier(&self, pi: &[Vec<f64>], mu: f64) -> f64 {
        let m = self.rho.len();
        let mut total = 0.0;
        for j in 0..m {
            for (ti, &t) in self.ts.iter().enumerate() {
                let mut margin = t;
                for (f, row) in pi.iter().enumerate() {
                    margin -= self.existence[ti][j][f] * row[j];
                }
                if margin <= 0.0 {
                    return f64::INFINITY;
                }
                total -= mu * margin.ln();
            }
            let mut slack = 1.0;
            for (f, row) in pi.iter().enumerate() {
                slack -= self.rho[j][f] * row[j];
            }
            if slack <= 0.0 {
                return f64::INFINITY;
            }
            total -= mu * slack.ln();
        }
        total
    }

    fn barrier_grad(&self, pi: &[Vec<f64>], mu: f64, out: &mut [Vec<f64>]) {
        let m = self.rho.len();
        for j in 0..m {
            for (ti, &t) in self.ts.iter().enumerate() {
                let mut margin = t;
                for (f, row) in pi.iter().enumerate() {
                    margin -= self.existence[ti][j][f] * row[j];
                }
                if margin > 0.0 {
                    let w = mu / margin;
                    for (f, g) in out.iter_mut().enumerate() {
                        g[j] += w * self.existence[ti][j][f];
                    }
                }
            }
            let mut slack = 1.0;
            for (f, row) in pi.iter().enumerate() {
                slack -= self.rho[j][f] * row[j];
            }
            if slack > 0.0 {
                let w = mu / slack;
                for (f, g) in out.iter_mut().enumerate() {
                    g[j] += w * self.rho[j][f];
                }
            }
        }
    }

    fn feasible(&self, pi: &[Vec<f64>]) -> bool {
        self.barrier(pi, 1.0).is_finite()
    }
}

fn mat_sub(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        .collect()
}

fn mat_dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>())
        .sum()
}

fn mat_norm2(a: &[Vec<f64>]) -> f64 {
    mat_dot(a, a)
}

fn mat_inf(a: &[Vec<f64>]) -> f64 {
    a.iter()
        .flat_map(|r| r.iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
}

/// One full access sub-solve (proximal surrogates + projected gradient inner
/// loop + feasibility-preserving diminishing steps). Appends a single trace
/// entry tagged with `outer`.
fn access_step(
    cfg: &SystemConfig,
    placement: &Placement,
    aux: &AuxVars,
    pi0: &AccessMatrix,
    settings: &SolverSettings,
    trace: &mut SolveTrace,
    outer: usize,
) -> Result<(AccessMatrix, f64, bool)> {
    let ks: Vec<u32> = cfg.files.iter().map(|f| f.data_chunks).collect();
    let mut pi = pi0.clone();
    let mut obj = objective_at(cfg, &pi, aux)?;
    let constraints = AccessConstraints::build(cfg, &pi, aux)?;
    let mu = 1e-9 * obj.abs().max(1.0);
    let mut inner_used = 0;
    let mut converged = false;

    for nu in 0..settings.max_inner {
        inner_used = nu + 1;
        let grad = Evaluator::new(cfg, &pi)?.grad_access(aux)?;

        // surrogate: <g, x - pi> + tau/2 ||x - pi||^2 + barrier, minimized by
        // projected gradient descent over the per-row capped simplices
        let mut x = pi.pi.clone();
        let mut step = 1.0 / (settings.tau_access + 1.0);
        let phi = |x: &[Vec<f64>]| -> f64 {
            let d = mat_sub(x, &pi.pi);
            mat_dot(&grad, &d) + 0.5 * settings.tau_access * mat_norm2(&d) + constraints.barrier(x, mu)
        };
        let mut phi_x = phi(&x);
        for _ in 0..40 {
            let mut g = vec![vec![0.0; pi.num_servers()]; pi.num_files()];
            for (f, row) in g.iter_mut().enumerate() {
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = grad[f][j] + settings.tau_access * (x[f][j] - pi.pi[f][j]);
                }
            }
            constraints.barrier_grad(&x, mu, &mut g);
            let mut accepted = false;
            for _ in 0..30 {
                let trial_raw: Vec<Vec<f64>> = x
                    .iter()
                    .zip(&g)
                    .map(|(rx, rg)| rx.iter().zip(rg).map(|(v, gv)| v - step * gv).collect())
                    .collect();
                let trial = project_access(&trial_raw, placement, &ks)?;
                let phi_trial = phi(&trial.pi);
                if phi_trial < phi_x {
                    x = trial.pi;
                    phi_x = phi_trial;
                    step *= 1.3;
                    accepted = true;
                    break;
                }
                step *= 0.4;
            }
            if !accepted {
                break;
            }
        }
        // surrogate minimizer must not be worse than the current point
        let d = mat_sub(&x, &pi.pi);
        let surrogate = mat_dot(&grad, &d) + 0.5 * settings.tau_access * mat_norm2(&d);
        let pihat = if surrogate > 0.0 { pi.pi.clone() } else { x };

        let mut gamma = settings.gamma(nu);
        let mut moved = false;
        while gamma > 1e-10 {
            let cand: Vec<Vec<f64>> = pi
                .pi
                .iter()
                .zip(&pihat)
                .map(|(rp, rh)| {
                    rp.iter()
                        .zip(rh)
                        .map(|(p, h)| p + gamma * (h - p))
                        .collect()
                })
                .collect();
            if constraints.feasible(&cand) {
                let cand_pi = AccessMatrix { pi: cand };
                if let Ok(cand_obj) = objective_at(cfg, &cand_pi, aux) {
                    if cand_obj <= obj + 1e-12 {
                        let dsz = mat_inf(&mat_sub(&cand_pi.pi, &pi.pi));
                        let gain = obj - cand_obj;
                        pi = cand_pi;
                        obj = cand_obj;
                        moved = true;
                        if dsz < 1e-10 || gain < settings.eps * obj.abs().max(1.0) {
                            converged = true;
                        }
                        break;
                    }
                }
            }
            gamma *= 0.5;
        }
        if !moved || converged {
            converged = converged || !moved;
            break;
        }
    }
    trace.entries.push(TraceEntry {
        outer,
        stage: Stage::Access,
        objective: obj,
        inner_iters: inner_used,
        residual: row_residual(cfg, &pi),
    });
    Ok((pi, obj, converged))
}

/// Golden-section minimization over (lo, hi); infeasible evaluations count
/// as +inf. Returns the best abscissa found.
fn golden_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..120 {
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid) <= fc.min(fd) {
        mid
    } else if fc <= fd {
        c
    } else {
        d
    }
}

/// Aux sub-solve: the objective is separable per file, so each bound
/// parameter is minimized on its own 1-D feasible interval; the proximal
/// step-and-accept wrapper keeps the trace monotone.
fn aux_step(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    t0: &AuxVars,
    settings: &SolverSettings,
    trace: &mut SolveTrace,
    outer: usize,
) -> Result<(AuxVars, f64, bool)> {
    let eval = Evaluator::new(cfg, pi)?;
    let (t_max, _) = eval.t_domain_max()?;
    let r = cfg.num_files();
    let theta = cfg.tradeoff;
    let x = cfg.tail_threshold;
    let mut aux = t0.clone();
    // components the objective actually uses must start feasible; the unused
    // side (at the theta extremes) is only clamped into the domain
    let ceiling = t_max * (1.0 - 1e-9);
    for i in 0..r {
        for (t, active) in [
            (&mut aux.t_mean[i], theta > 0.0),
            (&mut aux.t_tail[i], theta < 1.0),
        ] {
            if active && !(*t > 0.0 && *t < t_max) {
                return Err(Error::InfeasibleT {
                    file: i,
                    t: *t,
                    t_max,
                });
            }
            *t = t.clamp(f64::MIN_POSITIVE, ceiling);
        }
    }
    let mut obj = eval.objective(&aux)?;
    let lo = (1e-9f64).min(t_max * 1e-6).max(1e-300);
    let hi = t_max * (1.0 - 1e-9);
    let mut inner_used = 0;
    let mut converged = false;

    for nu in 0..settings.max_inner {
        inner_used = nu + 1;
        let mut target = aux.clone();
        for i in 0..r {
            if cfg.files[i].arrival_rate <= 0.0 {
                continue;
            }
            if theta > 0.0 {
                target.t_mean[i] = golden_min(lo, hi, |t| {
                    eval.mean_bound(i, t).unwrap_or(f64::INFINITY)
                });
            }
            if theta < 1.0 {
                target.t_tail[i] = golden_min(lo, hi, |t| {
                    eval.tail_bound(i, t, x).unwrap_or(f64::INFINITY)
                });
            }
        }
        let mut gamma = settings.gamma(nu);
        let mut moved = false;
        while gamma > 1e-10 {
            let mut cand = aux.clone();
            for i in 0..r {
                cand.t_mean[i] += gamma * (target.t_mean[i] - aux.t_mean[i]);
                cand.t_tail[i] += gamma * (target.t_tail[i] - aux.t_tail[i]);
            }
            if let Ok(cand_obj) = eval.objective(&cand) {
                if cand_obj <= obj + 1e-12 {
                    let gain = obj - cand_obj;
                    aux = cand;
                    obj = cand_obj;
                    moved = true;
                    if gain < settings.eps * obj.abs().max(1.0) {
                        converged = true;
                    }
                    break;
                }
            }
            gamma *= 0.5;
        }
        if !moved || converged {
            converged = converged || !moved;
            break;
        }
    }
    trace.entries.push(TraceEntry {
        outer,
        stage: Stage::Aux,
        objective: obj,
        inner_iters: inner_used,
        residual: row_residual(cfg, pi),
    });
    Ok((aux, obj, converged))
}

/// Least-squares projection onto the doubly stochastic polytope by Dykstra
/// alternation between the affine row/column-sum set and the nonnegative
/// orthant.
fn project_birkhoff(y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = y.len();
    let affine = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let rowdef: Vec<f64> = x.iter().map(|r| 1.0 - r.iter().sum::<f64>()).collect();
        let coldef: Vec<f64> = (0..n)
            .map(|j| 1.0 - x.iter().map(|r| r[j]).sum::<f64>())
            .collect();
        let s: f64 = rowdef.iter().sum();
        let u: Vec<f64> = rowdef.iter().map(|&v| (v - s / (2.0 * n as f64)) / n as f64).collect();
        let v: Vec<f64> = coldef.iter().map(|&w| (w - s / (2.0 * n as f64)) / n as f64).collect();
        (0..n)
            .map(|i| (0..n).map(|j| x[i][j] + u[i] + v[j]).collect())
            .collect()
    };
    let mut x: Vec<Vec<f64>> = y.to_vec();
    let mut p = vec![vec![0.0; n]; n];
    let mut q = vec![vec![0.0; n]; n];
    for _ in 0..300 {
        let mut z = x.clone();
        for i in 0..n {
            for j in 0..n {
                z[i][j] += p[i][j];
            }
        }
        let ya = affine(&z);
        for i in 0..n {
            for j in 0..n {
                p[i][j] = z[i][j] - ya[i][j];
            }
        }
        let mut w = ya.clone();
        for i in 0..n {
            for j in 0..n {
                w[i][j] += q[i][j];
            }
        }
        let xb: Vec<Vec<f64>> = w.iter().map(|r| r.iter().map(|&v| v.max(0.0)).collect()).collect();
        let mut delta = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                q[i][j] = w[i][j] - xb[i][j];
                delta = delta.max((xb[i][j] - x[i][j]).abs());
            }
        }
        x = xb;
        if delta < 1e-12 {
            break;
        }
    }
    x
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Binary-pushing penalty: ~1 for fractional entries, ~1/2 at 0 and 1.
fn binary_penalty(z: f64, steep: f64) -> f64 {
    sigmoid(-steep * (z - 1.0)) - sigmoid(-steep * z)
}

fn binary_penalty_grad(z: f64, steep: f64) -> f64 {
    let a = sigmoid(-steep * (z - 1.0));
    let b = sigmoid(-steep * z);
    -steep * a * (1.0 - a) + steep * b * (1.0 - b)
}

/// Applies a server-role permutation to one file: new access row, new
/// placement set. `perm[j]` is the old column whose value moves to column j.
fn permute_file(
    pi: &AccessMatrix,
    placement: &Placement,
    i: usize,
    perm: &[usize],
) -> (AccessMatrix, Placement) {
    let mut new_pi = pi.clone();
    for (j, &u) in perm.iter().enumerate() {
        new_pi.pi[i][j] = pi.pi[i][u];
    }
    let mut new_sets = placement.sets.clone();
    let old_set = &placement.sets[i];
    let mut set: Vec<usize> = perm
        .iter()
        .enumerate()
        .filter(|(_, &u)| old_set.binary_search(&u).is_ok())
        .map(|(j, _)| j)
        .collect();
    set.sort_unstable();
    new_sets[i] = set;
    (new_pi, Placement { sets: new_sets })
}

/// Visits every permutation of `perm[k..]` in lexicographic-recursive order.
fn permutations(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for idx in k..perm.len() {
        perm.swap(k, idx);
        permutations(perm, k + 1, visit);
        perm.swap(k, idx);
    }
}

/// Placement sub-solve: per file, relax the server-role permutation to a
/// doubly stochastic matrix, descend on the penalized surrogate, round with a
/// maximum-weight assignment, polish with pairwise swaps, and accept only
/// improving permutations.
fn placement_step(
    cfg: &SystemConfig,
    pi0: &AccessMatrix,
    aux: &AuxVars,
    placement0: &Placement,
    settings: &SolverSettings,
    trace: &mut SolveTrace,
    outer: usize,
) -> Result<(Placement, AccessMatrix, f64, bool)> {
    let m = cfg.num_servers();
    let r = cfg.num_files();
    let mut pi = pi0.clone();
    let mut placement = placement0.clone();
    let mut obj = objective_at(cfg, &pi, aux)?;
    let penalty_weight = settings
        .binary_penalty
        .unwrap_or_else(|| 10.0 * obj.abs().max(1.0));
    let steep = settings.sigmoid_steepness;
    let polish = m <= 16 && r <= 200;
    let mut inner_used = 0;
    let mut improved_any = false;

    for i in 0..r {
        if cfg.files[i].arrival_rate <= 0.0 {
            continue;
        }
        // identity start
        let mut x: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..m).map(|u| if u == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let base_row: Vec<f64> = pi.pi[i].clone();
        let relaxed_obj = |x: &[Vec<f64>]| -> f64 {
            let mut cand = pi.clone();
            for j in 0..m {
                cand.pi[i][j] = (0..m).map(|u| x[j][u] * base_row[u]).sum();
            }
            let value = objective_at(cfg, &cand, aux).unwrap_or(f64::INFINITY);
            let pen: f64 = x
                .iter()
                .flat_map(|row| row.iter().map(|&z| binary_penalty(z, steep)))
                .sum();
            value + penalty_weight * pen
        };
        let mut phi = relaxed_obj(&x);
        let relax_iters = settings.max_inner.min(15);
        for nu in 0..relax_iters {
            inner_used += 1;
            // gradient of the relaxed objective at x
            let mut cand = pi.clone();
            for j in 0..m {
                cand.pi[i][j] = (0..m).map(|u| x[j][u] * base_row[u]).sum();
            }
            let grad_pi = match Evaluator::new(cfg, &cand).and_then(|e| e.grad_access(aux)) {
                Ok(g) => g,
                Err(_) => break,
            };
            let mut g = vec![vec![0.0; m]; m];
            for j in 0..m {
                for u in 0..m {
                    g[j][u] = grad_pi[i][j] * base_row[u]
                        + penalty_weight * binary_penalty_grad(x[j][u], steep);
                }
            }
            // proximal surrogate minimizer over the Birkhoff polytope
            let target: Vec<Vec<f64>> = {
                let shifted: Vec<Vec<f64>> = x
                    .iter()
                    .zip(&g)
                    .map(|(rx, rg)| {
                        rx.iter()
                            .zip(rg)
                            .map(|(v, gv)| v - gv / settings.tau_access.max(1e-6))
                            .collect()
                    })
                    .collect();
                project_birkhoff(&shifted)
            };
            let mut gamma = settings.gamma(nu);
            let mut moved = false;
            while gamma > 1e-8 {
                let trial: Vec<Vec<f64>> = x
                    .iter()
                    .zip(&target)
                    .map(|(rx, rt)| {
                        rx.iter()
                            .zip(rt)
                            .map(|(v, tv)| v + gamma * (tv - v))
                            .collect()
                    })
                    .collect();
                let phi_trial = relaxed_obj(&trial);
                if phi_trial < phi - 1e-14 {
                    x = trial;
                    phi = phi_trial;
                    moved = true;
                    break;
                }
                gamma *= 0.5;
            }
            if !moved {
                break;
            }
        }
        // round the relaxed solution to a permutation (max total weight)
        let weights = Matrix::from_rows(
            x.iter()
                .map(|row| row.iter().map(|&v| OrderedFloat(v)).collect::<Vec<_>>()),
        )
        .expect("square weight matrix");
        let (_, assignment) = kuhn_munkres(&weights);
        let mut perm: Vec<usize> = assignment;

        if m <= 5 {
            // tiny role space: enumerate all m! permutations outright
            let mut best = {
                let (cur_pi, _) = permute_file(&pi, &placement, i, &perm);
                objective_at(cfg, &cur_pi, aux).unwrap_or(f64::INFINITY)
            };
            let mut scratch: Vec<usize> = (0..m).collect();
            let mut best_perm = perm.clone();
            permutations(&mut scratch, 0, &mut |p| {
                let (cand_pi, _) = permute_file(&pi, &placement, i, p);
                if let Ok(v) = objective_at(cfg, &cand_pi, aux) {
                    if v < best - 1e-14 {
                        best = v;
                        best_perm = p.to_vec();
                    }
                }
            });
            perm = best_perm;
        } else if polish {
            // pairwise-swap polish on the true objective
            loop {
                let (cur_pi, _) = permute_file(&pi, &placement, i, &perm);
                let cur = objective_at(cfg, &cur_pi, aux).unwrap_or(f64::INFINITY);
                let mut best = cur;
                let mut best_swap = None;
                for a in 0..m {
                    for b in (a + 1)..m {
                        perm.swap(a, b);
                        let (swapped_pi, _) = permute_file(&pi, &placement, i, &perm);
                        let v = objective_at(cfg, &swapped_pi, aux).unwrap_or(f64::INFINITY);
                        perm.swap(a, b);
                        if v < best - 1e-14 {
                            best = v;
                            best_swap = Some((a, b));
                        }
                    }
                }
                match best_swap {
                    Some((a, b)) => perm.swap(a, b),
                    None => break,
                }
            }
        }

        let (cand_pi, cand_placement) = permute_file(&pi, &placement, i, &perm);
        if let Ok(cand_obj) = objective_at(cfg, &cand_pi, aux) {
            if cand_obj < obj - 1e-14 {
                pi = cand_pi;
                placement = cand_placement;
                obj = cand_obj;
                improved_any = true;
            }
        }
        // otherwise the identity permutation (current placement) stands
    }

    // Single-file moves can stall at a coordinate-wise fixed point; on tiny
    // instances a joint sweep over file pairs is affordable and escapes it.
    if !improved_any && m <= 4 && r <= 12 {
        'pairs: for i1 in 0..r {
            for i2 in (i1 + 1)..r {
                let mut best = (obj, None);
                let mut outer_perm: Vec<usize> = (0..m).collect();
                permutations(&mut outer_perm, 0, &mut |p1| {
                    let (pi1, pl1) = permute_file(&pi, &placement, i1, p1);
                    let mut inner_perm: Vec<usize> = (0..m).collect();
                    let p1v = p1.to_vec();
                    permutations(&mut inner_perm, 0, &mut |p2| {
                        let (pi2, _) = permute_file(&pi1, &pl1, i2, p2);
                        if let Ok(v) = objective_at(cfg, &pi2, aux) {
                            if v < best.0 - 1e-14 {
                                best = (v, Some((p1v.clone(), p2.to_vec())));
                            }
                        }
                    });
                });
                if let (new_obj, Some((p1, p2))) = best {
                    let (pi1, pl1) = permute_file(&pi, &placement, i1, &p1);
                    let (pi2, pl2) = permute_file(&pi1, &pl1, i2, &p2);
                    pi = pi2;
                    placement = pl2;
                    obj = new_obj;
                    improved_any = true;
                    break 'pairs;
                }
            }
        }
    }

    trace.entries.push(TraceEntry {
        outer,
        stage: Stage::Placement,
        objective: obj,
        inner_iters: inner_used,
        residual: row_residual(cfg, &pi),
    });
    Ok((placement, pi, obj, !improved_any))
}

/// Pulls every bound parameter into the open feasible interval of the given
/// policy. Useful when reusing parameters across policies whose domains
/// differ (e.g. warm starts).
pub fn clamp_aux(cfg: &SystemConfig, pi: &AccessMatrix, aux: &AuxVars) -> Result<AuxVars> {
    let eval = Evaluator::new(cfg, pi)?;
    let (t_max, _) = eval.t_domain_max()?;
    let ceiling = t_max * (1.0 - 1e-9);
    let mut out = aux.clone();
    for t in out.t_mean.iter_mut().chain(out.t_tail.iter_mut()) {
        *t = t.clamp(f64::MIN_POSITIVE, ceiling);
    }
    Ok(out)
}

/// Tightest per-file bound parameters for a fixed policy: each t_mean
/// minimizes that file's mean bound and each t_tail its tail bound,
/// independently of the tradeoff weight. Used for reporting; the weighted
/// objective keeps its own jointly optimized parameters.
pub fn tightest_aux(cfg: &SystemConfig, pi: &AccessMatrix) -> Result<AuxVars> {
    let eval = Evaluator::new(cfg, pi)?;
    let (t_max, _) = eval.t_domain_max()?;
    let lo = (1e-9f64).min(t_max * 1e-6).max(1e-300);
    let hi = t_max * (1.0 - 1e-9);
    let x = cfg.tail_threshold;
    let r = cfg.num_files();
    let mut aux = AuxVars::uniform(r, 0.5 * (lo + hi));
    for i in 0..r {
        aux.t_mean[i] = golden_min(lo, hi, |t| eval.mean_bound(i, t).unwrap_or(f64::INFINITY));
        aux.t_tail[i] = golden_min(lo, hi, |t| {
            eval.tail_bound(i, t, x).unwrap_or(f64::INFINITY)
        });
    }
    Ok(aux)
}

/// Access optimization at fixed placement and bound parameters.
pub fn optimize_access(
    cfg: &SystemConfig,
    placement: &Placement,
    aux: &AuxVars,
    pi0: &AccessMatrix,
    settings: &SolverSettings,
) -> Result<(AccessMatrix, SolveTrace)> {
    if let Some(v) = validate_config(cfg, placement, pi0).first() {
        return Err(Error::Config(v.to_string()));
    }
    let mut trace = SolveTrace::default();
    let (pi, _, converged) = access_step(cfg, placement, aux, pi0, settings, &mut trace, 0)?;
    trace.converged = converged;
    Ok((pi, trace))
}

/// Bound-parameter optimization at fixed placement and access.
pub fn optimize_aux(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    t0: &AuxVars,
    settings: &SolverSettings,
) -> Result<(AuxVars, SolveTrace)> {
    let mut trace = SolveTrace::default();
    let (aux, _, converged) = aux_step(cfg, pi, t0, settings, &mut trace, 0)?;
    trace.converged = converged;
    Ok((aux, trace))
}

/// Placement optimization at fixed access values and bound parameters; the
/// access rows are permuted along with the placement.
pub fn optimize_placement(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    aux: &AuxVars,
    placement0: &Placement,
    settings: &SolverSettings,
) -> Result<(Placement, AccessMatrix, SolveTrace)> {
    if let Some(v) = validate_config(cfg, placement0, pi).first() {
        return Err(Error::Config(v.to_string()));
    }
    let mut trace = SolveTrace::default();
    let (placement, pi, _, _) = placement_step(cfg, pi, aux, placement0, settings, &mut trace, 0)?;
    trace.converged = true;
    Ok((placement, pi, trace))
}

/// Feasible starting point: seeded uniform random placement, equal access
/// k/n projected to feasibility, bound parameters 0.01 pulled inside the
/// feasible interval.
pub fn feasible_init(cfg: &SystemConfig, seed: u64) -> Result<Initialization> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = cfg.num_servers();
    let mut sets = Vec::with_capacity(cfg.num_files());
    for f in &cfg.files {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut rng);
        idx.truncate(f.coded_chunks as usize);
        idx.sort_unstable();
        sets.push(idx);
    }
    let placement = Placement::new(sets);
    let raw: Vec<Vec<f64>> = cfg
        .files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let share = f.data_chunks as f64 / f.coded_chunks as f64;
            (0..m)
                .map(|j| if placement.contains(i, j) { share } else { 0.0 })
                .collect()
        })
        .collect();
    let ks: Vec<u32> = cfg.files.iter().map(|f| f.data_chunks).collect();
    let pi = project_access(&raw, &placement, &ks)?;

    let eval = Evaluator::new(cfg, &pi)?;
    if let Some(j) = eval.rho.iter().position(|&v| v >= 1.0) {
        return Err(Error::InfeasibleInit {
            server: j,
            detail: format!("utilization {} >= 1 at equal access", eval.rho[j]),
        });
    }
    let (t_max, _) = eval.t_domain_max()?;
    let t0 = (0.01f64).min(0.5 * t_max);
    Ok(Initialization {
        placement,
        pi,
        aux: AuxVars::uniform(cfg.num_files(), t0),
    })
}

/// Alternating loop over the enabled sub-problems until the objective
/// improvement falls below the relative tolerance.
pub fn alternate_stages(
    cfg: &SystemConfig,
    init: &Initialization,
    settings: &SolverSettings,
    stages: StageMask,
) -> Result<(Solution, SolveTrace)> {
    if let Some(v) = validate_config(cfg, &init.placement, &init.pi).first() {
        return Err(Error::Config(v.to_string()));
    }
    let mut pi = init.pi.clone();
    let mut placement = init.placement.clone();
    let mut aux = init.aux.clone();
    let mut trace = SolveTrace::default();
    let mut obj = objective_at(cfg, &pi, &aux)?;
    trace.entries.push(TraceEntry {
        outer: 0,
        stage: Stage::Init,
        objective: obj,
        inner_iters: 0,
        residual: row_residual(cfg, &pi),
    });
    let mut converged = false;
    for outer in 1..=settings.max_outer {
        let before = obj;
        if stages.access {
            let (new_pi, new_obj, _) =
                access_step(cfg, &placement, &aux, &pi, settings, &mut trace, outer)?;
            pi = new_pi;
            obj = new_obj;
        }
        if stages.aux {
            let (new_aux, new_obj, _) = aux_step(cfg, &pi, &aux, settings, &mut trace, outer)?;
            aux = new_aux;
            obj = new_obj;
        }
        if stages.placement {
            let (new_placement, new_pi, new_obj, _) =
                placement_step(cfg, &pi, &aux, &placement, settings, &mut trace, outer)?;
            placement = new_placement;
            pi = new_pi;
            obj = new_obj;
        }
        if before - obj < settings.eps * obj.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    trace.converged = converged;
    Ok((
        Solution {
            pi,
            placement,
            aux,
            objective: obj,
            converged,
        },
        trace,
    ))
}

/// Full alternating optimization over access, bound parameters and placement.
pub fn alternate(
    cfg: &SystemConfig,
    init: &Initialization,
    settings: &SolverSettings,
) -> Result<(Solution, SolveTrace)> {
    alternate_stages(cfg, init, settings, StageMask::all())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ServerParams, VideoFile};

    fn sym_config() -> SystemConfig {
        SystemConfig {
            servers: vec![
                ServerParams::new(20.0, 0.01).unwrap(),
                ServerParams::new(20.0, 0.01).unwrap(),
            ],
            files: vec![VideoFile::new(0, 5, 1, 2, 0.8)],
            segment_duration: 4.0,
            startup_delay: 5.0,
            tail_threshold: 5.0,
            tradeoff: 0.5,
            streams_per_server: 1,
        }
    }

    fn loaded_config() -> SystemConfig {
        SystemConfig {
            servers: vec![
                ServerParams::new(22.0, 0.01).unwrap(),
                ServerParams::new(12.0, 0.01).unwrap(),
                ServerParams::new(18.0, 0.02).unwrap(),
                ServerParams::new(9.0, 0.01).unwrap(),
            ],
            files: vec![
                VideoFile::new(0, 8, 2, 3, 0.6),
                VideoFile::new(1, 4, 2, 3, 0.5),
                VideoFile::new(2, 6, 2, 3, 0.3),
            ],
            segment_duration: 4.0,
            startup_delay: 8.0,
            tail_threshold: 5.0,
            tradeoff: 0.5,
            streams_per_server: 1,
        }
    }

    fn central_diff_access(
        cfg: &SystemConfig,
        pi: &AccessMatrix,
        aux: &AuxVars,
        f: usize,
        j: usize,
        h: f64,
    ) -> f64 {
        let mut up = pi.clone();
        up.pi[f][j] += h;
        let mut down = pi.clone();
        down.pi[f][j] -= h;
        let a = objective_at(cfg, &up, aux).unwrap();
        let b = objective_at(cfg, &down, aux).unwrap();
        (a - b) / (2.0 * h)
    }

    #[test]
    fn gradient_symmetry_on_identical_servers() {
        let cfg = sym_config();
        let pi = AccessMatrix {
            pi: vec![vec![0.5, 0.5]],
        };
        let placement = Placement::new(vec![vec![0, 1]]);
        let aux = AuxVars::uniform(1, 0.05);
        let g = objective_gradient(&cfg, &pi, &placement, &aux, GradientTarget::Access).unwrap();
        let Gradient::Access(g) = g else { panic!() };
        assert!(
            (g[0][0] - g[0][1]).abs() < 1e-10,
            "symmetric point must have symmetric gradient: {g:?}"
        );
    }

    #[test]
    fn access_gradient_matches_central_differences() {
        let cfg = loaded_config();
        let init = feasible_init(&cfg, 12).unwrap();
        let aux = AuxVars::uniform(3, 0.03);
        let Gradient::Access(g) =
            objective_gradient(&cfg, &init.pi, &init.placement, &aux, GradientTarget::Access)
                .unwrap()
        else {
            panic!()
        };
        let h = 1e-6;
        for f in 0..3 {
            for j in 0..4 {
                // perturbing zero entries would leave the feasible polytope
                if init.pi.pi[f][j] < 2.0 * h {
                    continue;
                }
                let fd = central_diff_access(&cfg, &init.pi, &aux, f, j, h);
                let scale = fd.abs().max(g[f][j].abs()).max(1e-8);
                assert!(
                    (g[f][j] - fd).abs() / scale < 1e-4,
                    "({f},{j}): analytic {} vs fd {fd}",
                    g[f][j]
                );
            }
        }
    }

    #[test]
    fn aux_gradient_matches_central_differences_and_theta_structure() {
        let cfg = loaded_config();
        let init = feasible_init(&cfg, 4).unwrap();
        let aux = AuxVars::uniform(3, 0.04);
        let Gradient::Aux(g) =
            objective_gradient(&cfg, &init.pi, &init.placement, &aux, GradientTarget::Aux).unwrap()
        else {
            panic!()
        };
        let h = 1e-7;
        for i in 0..3 {
            for (slot, is_mean) in [(i, true), (3 + i, false)] {
                let mut up = aux.clone();
                let mut down = aux.clone();
                if is_mean {
                    up.t_mean[i] += h;
                    down.t_mean[i] -= h;
                } else {
                    up.t_tail[i] += h;
                    down.t_tail[i] -= h;
                }
                let a = objective_at(&cfg, &init.pi, &up).unwrap();
                let b = objective_at(&cfg, &init.pi, &down).unwrap();
                let fd = (a - b) / (2.0 * h);
                let scale = fd.abs().max(g[slot].abs()).max(1e-8);
                assert!(
                    (g[slot] - fd).abs() / scale < 1e-4,
                    "slot {slot}: analytic {} vs fd {fd}",
                    g[slot]
                );
            }
        }

        // pure mean objective has exactly zero tail components
        let mut mean_only = cfg.clone();
        mean_only.tradeoff = 1.0;
        let Gradient::Aux(g1) = objective_gradient(
            &mean_only,
            &init.pi,
            &init.placement,
            &aux,
            GradientTarget::Aux,
        )
        .unwrap() else {
            panic!()
        };
        assert!(g1[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_two_server_argmin_is_half_half() {
        let cfg = sym_config();
        let placement = Placement::new(vec![vec![0, 1]]);
        let pi0 = AccessMatrix {
            pi: vec![vec![0.9, 0.1]],
        };
        let aux = AuxVars::uniform(1, 0.05);
        let mut settings = SolverSettings::default();
        settings.max_inner = 400;
        settings.eps = 1e-12;
        let (pi, trace) = optimize_access(&cfg, &placement, &aux, &pi0, &settings).unwrap();
        assert!(trace.is_monotone(1e-8));
        assert!(
            (pi.pi[0][0] - 0.5).abs() < 1e-3,
            "expected balanced access, got {:?}",
            pi.pi[0]
        );
    }

    #[test]
    fn stationary_point_stays_fixed() {
        let cfg = sym_config();
        let placement = Placement::new(vec![vec![0, 1]]);
        let pi0 = AccessMatrix {
            pi: vec![vec![0.5, 0.5]],
        };
        let aux = AuxVars::uniform(1, 0.05);
        let (pi, _) = optimize_access(&cfg, &placement, &aux, &pi0, &SolverSettings::default()).unwrap();
        assert!((pi.pi[0][0] - 0.5).abs() < 1e-9);
        assert!((pi.pi[0][1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn aux_solver_matches_independent_golden_section() {
        let cfg = loaded_config();
        let init = feasible_init(&cfg, 7).unwrap();
        let settings = SolverSettings::default();
        let (aux, trace) = optimize_aux(&cfg, &init.pi, &init.aux, &settings).unwrap();
        assert!(trace.is_monotone(1e-8));

        // oracle: independent per-file golden-section on each 1-D slice
        let eval = Evaluator::new(&cfg, &init.pi).unwrap();
        let (t_max, _) = eval.t_domain_max().unwrap();
        let mut oracle = aux.clone();
        for i in 0..3 {
            oracle.t_mean[i] = golden_min(1e-9, t_max * (1.0 - 1e-9), |t| {
                eval.mean_bound(i, t).unwrap_or(f64::INFINITY)
            });
            oracle.t_tail[i] = golden_min(1e-9, t_max * (1.0 - 1e-9), |t| {
                eval.tail_bound(i, t, cfg.tail_threshold).unwrap_or(f64::INFINITY)
            });
        }
        let got = eval.objective(&aux).unwrap();
        let want = eval.objective(&oracle).unwrap();
        assert!(
            (got - want).abs() <= 1e-6 * want.abs().max(1.0),
            "joint {got} vs separable oracle {want}"
        );
    }

    #[test]
    fn aux_rejects_out_of_domain_start() {
        let cfg = loaded_config();
        let init = feasible_init(&cfg, 8).unwrap();
        let bad = AuxVars::uniform(3, 1e6);
        let err = optimize_aux(&cfg, &init.pi, &bad, &SolverSettings::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleT { .. }));
    }

    #[test]
    fn aux_start_near_zero_improves() {
        let cfg = loaded_config();
        let init = feasible_init(&cfg, 9).unwrap();
        let t0 = AuxVars::uniform(3, 1e-7);
        let before = objective_at(&cfg, &init.pi, &t0).unwrap();
        let (aux, _) = optimize_aux(&cfg, &init.pi, &t0, &SolverSettings::default()).unwrap();
        let after = objective_at(&cfg, &init.pi, &aux).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn birkhoff_projection_is_doubly_stochastic() {
        let y = vec![
            vec![1.3, -0.2, 0.1],
            vec![0.0, 0.9, 0.4],
            vec![0.2, 0.1, 0.8],
        ];
        let x = project_birkhoff(&y);
        for row in &x {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= -1e-12));
        }
        for j in 0..3 {
            let s: f64 = x.iter().map(|r| r[j]).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    /// Exhaustive permutation search over one file's server roles.
    fn brute_force_best_single(
        cfg: &SystemConfig,
        pi: &AccessMatrix,
        placement: &Placement,
        aux: &AuxVars,
        i: usize,
    ) -> f64 {
        let m = cfg.num_servers();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut best = f64::INFINITY;
        permutations(&mut perm, 0, &mut |p| {
            let (cand_pi, _) = permute_file(pi, placement, i, p);
            if let Ok(v) = objective_at(cfg, &cand_pi, aux) {
                if v < best {
                    best = v;
                }
            }
        });
        best
    }

    #[test]
    fn placement_identity_for_identical_servers() {
        let cfg = SystemConfig {
            servers: vec![ServerParams::new(15.0, 0.01).unwrap(); 3],
            files: vec![VideoFile::new(0, 5, 2, 3, 0.8)],
            segment_duration: 4.0,
            startup_delay: 5.0,
            tail_threshold: 5.0,
            tradeoff: 0.5,
            streams_per_server: 1,
        };
        let placement = Placement::new(vec![vec![0, 1, 2]]);
        let pi = AccessMatrix {
            pi: vec![vec![0.9, 0.6, 0.5]],
        };
        let aux = AuxVars::uniform(1, 0.05);
        let before = objective_at(&cfg, &pi, &aux).unwrap();
        let (p2, pi2, trace) =
            optimize_placement(&cfg, &pi, &aux, &placement, &SolverSettings::default()).unwrap();
        let after = objective_at(&cfg, &pi2, &aux).unwrap();
        // relabeling identical servers cannot improve anything
        assert!((before - after).abs() < 1e-9);
        assert_eq!(p2.sets, placement.sets);
        assert!(trace.is_monotone(1e-8));
    }

    #[test]
    fn placement_separates_hot_files_onto_fast_servers() {
        // two hot files, two fast servers, both files start hot on server 0
        let cfg = SystemConfig {
            servers: vec![
                ServerParams::new(25.0, 0.01).unwrap(),
                ServerParams::new(25.0, 0.01).unwrap(),
                ServerParams::new(8.0, 0.01).unwrap(),
                ServerParams::new(8.0, 0.01).unwrap(),
            ],
            files: vec![
                VideoFile::new(0, 6, 1, 2, 1.2),
                VideoFile::new(1, 6, 1, 2, 1.2),
            ],
            segment_duration: 4.0,
            startup_delay: 4.0,
            tail_threshold: 5.0,
            tradeoff: 0.5,
            streams_per_server: 1,
        };
        let placement = Placement::new(vec![vec![0, 2], vec![0, 3]]);
        let pi = AccessMatrix {
            pi: vec![vec![0.9, 0.0, 0.1, 0.0], vec![0.9, 0.0, 0.0, 0.1]],
        };
        let aux = AuxVars::uniform(2, 0.02);
        let before = objective_at(&cfg, &pi, &aux).unwrap();
        let (p2, pi2, _) =
            optimize_placement(&cfg, &pi, &aux, &placement, &SolverSettings::default()).unwrap();
        let after = objective_at(&cfg, &pi2, &aux).unwrap();
        assert!(after < before, "placement should improve: {before} -> {after}");
        // the two hot masses must now sit on different fast servers
        let hot0 = (0..4).max_by(|&a, &b| pi2.pi[0][a].total_cmp(&pi2.pi[0][b])).unwrap();
        let hot1 = (0..4).max_by(|&a, &b| pi2.pi[1][a].total_cmp(&pi2.pi[1][b])).unwrap();
        assert_ne!(hot0, hot1);
        assert!(hot0 < 2 && hot1 < 2, "hot masses on fast servers: {hot0} {hot1}");
        let _ = p2;
    }

    #[test]
    fn placement_matches_exhaustive_search_small() {
        let cfg = SystemConfig {
            servers: vec![
                ServerParams::new(24.0, 0.01).unwrap(),
                ServerParams::new(10.0, 0.02).unwrap(),
                ServerParams::new(16.0, 0.01).unwrap(),
                ServerParams::new(8.0, 0.03).unwrap(),
            ],
            files: vec![
                VideoFile::new(0, 7, 2, 3, 0.55),
                VideoFile::new(1, 3, 2, 3, 0.5),
                VideoFile::new(2, 5, 2, 3, 0.35),
            ],
            segment_duration: 4.0,
            startup_delay: 6.0,
            tail_threshold: 5.0,
            tradeoff: 0.5,
            streams_per_server: 1,
        };
        let init = feasible_init(&cfg, 12).unwrap();
        let aux = AuxVars::uniform(3, 0.03);
        let settings = SolverSettings::default();
        // alternate placement passes to a fixed point, as the solver does
        let mut pi = init.pi.clone();
        let mut placement = init.placement.clone();
        for _ in 0..6 {
            let (p2, pi2, _) = optimize_placement(&cfg, &pi, &aux, &placement, &settings).unwrap();
            let same = pi2.pi == pi.pi;
            placement = p2;
            pi = pi2;
            if same {
                break;
            }
        }
        let got = objective_at(&cfg, &pi, &aux).unwrap();

        // joint brute force over all (4!)^3 permutation triples
        let m = cfg.num_servers();
        let mut best = f64::INFINITY;
        let mut p0: Vec<usize> = (0..m).collect();
        permutations(&mut p0, 0, &mut |perm0| {
            let (pi0m, pl0) = permute_file(&init.pi, &init.placement, 0, perm0);
            let mut p1: Vec<usize> = (0..m).collect();
            permutations(&mut p1, 0, &mut |perm1| {
                let (pi1m, pl1) = permute_file(&pi0m, &pl0, 1, perm1);
                let mut p2v: Vec<usize> = (0..m).collect();
                permutations(&mut p2v, 0, &mut |perm2| {
                    let (pi2m, _) = permute_file(&pi1m, &pl1, 2, perm2);
                    if let Ok(v) = objective_at(&cfg, &pi2m, &aux) {
                        if v < best {
                            best = v;
                        }
                    }
                });
            });
        });
        assert!(
            got <= best + 1e-6 * best.abs().max(1.0),
            "coordinate solver {got} vs brute force {best}"
        );
        // single-file oracle agreement as well
        let single = brute_force_best_single(&cfg, &init.pi, &init.placement, &aux, 0);
        assert!(single >= best - 1e-12);
    }

    #[test]
    fn alternate_trace_is_monotone_and_feasible() {
        let cfg = loaded_config();
        let init = feasible_init(&cfg, 5).unwrap();
        let mut settings = SolverSettings::default();
        settings.max_outer = 40;
        let (sol, trace) = alternate(&cfg, &init, &settings).unwrap();
        assert!(trace.is_monotone(1e-8), "objective rose along the trace");
        assert!(validate_config(&cfg, &sol.placement, &sol.pi).is_empty());
        assert!(sol.objective <= trace.entries[0].objective + 1e-12);
        // every recorded iterate stayed feasible on row sums
        assert!(trace.entries.iter().all(|e| e.residual < 1e-8));
    }

    #[test]
    fn alternate_huge_eps_returns_after_one_round() {
        let cfg = loaded_config();
        let init = feasible_init(&cfg, 6).unwrap();
        let mut settings = SolverSettings::default();
        settings.eps = 1e9;
        let (sol, trace) = alternate(&cfg, &init, &settings).unwrap();
        assert!(sol.converged);
        let outers: Vec<usize> = trace.entries.iter().map(|e| e.outer).collect();
        assert!(outers.iter().all(|&o| o <= 1));
        assert!(validate_config(&cfg, &sol.placement, &sol.pi).is_empty());
    }

    #[test]
    fn infeasible_initialization_names_the_server() {
        let mut cfg = loaded_config();
        for f in &mut cfg.files {
            f.arrival_rate = 50.0;
        }
        let err = feasible_init(&cfg, 0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleInit { .. }));
    }
}
