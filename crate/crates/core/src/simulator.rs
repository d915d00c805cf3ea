//! Discrete-event ground truth: Poisson request arrivals, probabilistic
//! server-set scheduling, FIFO per-server chunk service, and the exact
//! playback recursion that yields per-request stall durations.
//!
//! Each server queue is advanced with a Lindley-style recursion (requests
//! enqueue all their chunks atomically, so a running busy-until time per
//! queue is sufficient); no event heap is needed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::apply_caching;
use crate::error::{Error, Result};
use crate::model::{utilization, AccessMatrix, Placement, SystemConfig, ROW_SUM_TOL};

/// Simulation length: a fixed number of requests or of simulated seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Requests(u64),
    Seconds(f64),
}

/// Knobs of one simulation run.
#[derive(Debug, Clone)]
pub struct SimSettings {
    pub horizon: Horizon,
    /// Fraction of the horizon discarded before collecting statistics.
    pub warmup: f64,
    pub replications: u32,
    pub seed: u64,
    /// Thresholds at which the empirical stall tail is estimated; when empty
    /// the config's own threshold is used.
    pub tail_points: Vec<f64>,
    /// Keep every post-warmup (file, arrival, stall) sample in the report.
    pub record_samples: bool,
    /// Record download times of chunk `.2` of file `.0` at server `.1`.
    pub record_downloads: Option<(usize, usize, u32)>,
}

impl SimSettings {
    /// Defaults: 1e4 requests per file class, 20% warmup, one replication.
    pub fn for_config(cfg: &SystemConfig, seed: u64) -> Self {
        SimSettings {
            horizon: Horizon::Requests(10_000 * cfg.num_files().max(1) as u64),
            warmup: 0.2,
            replications: 1,
            seed,
            tail_points: Vec::new(),
            record_samples: false,
            record_downloads: None,
        }
    }

    pub fn requests(n: u64, seed: u64) -> Self {
        SimSettings {
            horizon: Horizon::Requests(n),
            warmup: 0.2,
            replications: 1,
            seed,
            tail_points: Vec::new(),
            record_samples: false,
            record_downloads: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup) {
            return Err(Error::Config(format!("warmup fraction {} not in [0,1)", self.warmup)));
        }
        if self.replications < 1 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        Ok(())
    }
}

/// Empirical tail estimate at one threshold.
#[derive(Debug, Clone, Copy)]
pub struct TailEstimate {
    pub x: f64,
    pub probability: f64,
    pub stderr: f64,
}

/// Post-warmup stall statistics of one file.
#[derive(Debug, Clone)]
pub struct FileMetrics {
    pub file: usize,
    pub samples: u64,
    pub mean_stall: f64,
    pub mean_stall_se: f64,
    pub tails: Vec<TailEstimate>,
}

/// One recorded request.
#[derive(Debug, Clone, Copy)]
pub struct StallSample {
    pub file: usize,
    pub arrival: f64,
    pub stall: f64,
}

/// Aggregated simulation output.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub per_file: Vec<FileMetrics>,
    /// Empirical busy fraction per physical server (mean over replications).
    pub rho_hat: Vec<f64>,
    pub rho_hat_se: Vec<f64>,
    /// Jobs dispatched to each physical server.
    pub jobs: Vec<u64>,
    /// Set when the analytical utilization predicts an unstable server.
    pub unstable: bool,
    pub samples: Option<Vec<StallSample>>,
    pub download_samples: Vec<f64>,
}

impl SimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,index,x,value,stderr\n");
        for f in &self.per_file {
            out.push_str(&format!(
                "mean,{},,{},{}\n",
                f.file, f.mean_stall, f.mean_stall_se
            ));
            for t in &f.tails {
                out.push_str(&format!("tail,{},{},{},{}\n", f.file, t.x, t.probability, t.stderr));
            }
        }
        for (j, (rho, se)) in self.rho_hat.iter().zip(&self.rho_hat_se).enumerate() {
            out.push_str(&format!("rho,{j},,{rho},{se}\n"));
        }
        out
    }
}

/// Draws a set of exactly `k` servers whose inclusion probabilities match the
/// access row, by systematic sampling over a randomized server order.
pub fn sample_server_set(pi_row: &[f64], k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let total: f64 = pi_row.iter().sum();
    if (total - k as f64).abs() > 1e-6 {
        return Err(Error::InfeasibleRow {
            file: usize::MAX,
            detail: format!("row sums to {total}, expected {k}"),
        });
    }
    for (j, &p) in pi_row.iter().enumerate() {
        if !(-ROW_SUM_TOL..=1.0 + 1e-6).contains(&p) {
            return Err(Error::InfeasibleRow {
                file: usize::MAX,
                detail: format!("entry {p} at server {j} outside [0,1]"),
            });
        }
    }
    let mut order: Vec<usize> = (0..pi_row.len()).filter(|&j| pi_row[j] > 0.0).collect();
    order.shuffle(rng);
    let scale = k as f64 / total;
    let offset: f64 = rng.gen();
    let mut picked = Vec::with_capacity(k);
    let mut cum = 0.0;
    let mut next = 0usize; // grid points are offset + next, next = 0..k
    for &j in &order {
        cum += pi_row[j] * scale;
        if next < k && (offset + next as f64) < cum {
            picked.push(j);
            next += 1;
            // an interval of length <= 1 holds at most one grid point; skip
            // any float-edge duplicate rather than double-pick
            while next < k && (offset + next as f64) < cum {
                next += 1;
            }
        }
    }
    // float shortfall at the very end of the walk: complete deterministically
    if picked.len() < k {
        let mut rest: Vec<usize> = order.iter().cloned().filter(|j| !picked.contains(j)).collect();
        rest.sort_by(|&a, &b| pi_row[b].total_cmp(&pi_row[a]).then(a.cmp(&b)));
        picked.extend(rest.into_iter().take(k - picked.len()));
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Sample mean, stall-tail frequencies and batch-means standard errors.
#[derive(Debug, Clone)]
pub struct MetricEstimate {
    pub mean: f64,
    pub mean_se: f64,
    pub tails: Vec<TailEstimate>,
}

/// Batch-means estimates over post-warmup samples; uses 10 batches once
/// enough samples exist, never fewer than 2.
pub fn estimate_metrics(samples: &[f64], xs: &[f64]) -> Result<MetricEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { need: 2, have: n });
    }
    let batches = if n >= 20 { 10 } else { (n / 2).max(2) };
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mean_se = batch_se(samples, batches, |s| {
        s.iter().sum::<f64>() / s.len() as f64
    });
    let tails = xs
        .iter()
        .map(|&x| {
            let p = samples.iter().filter(|&&v| v >= x).count() as f64 / n as f64;
            let se = batch_se(samples, batches, |s| {
                s.iter().filter(|&&v| v >= x).count() as f64 / s.len() as f64
            });
            TailEstimate {
                x,
                probability: p,
                stderr: se,
            }
        })
        .collect();
    Ok(MetricEstimate {
        mean,
        mean_se,
        tails,
    })
}

fn batch_se(samples: &[f64], batches: usize, stat: impl Fn(&[f64]) -> f64) -> f64 {
    let n = samples.len();
    let base = n / batches;
    let extra = n % batches;
    let mut means = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let len = base + usize::from(b < extra);
        means.push(stat(&samples[start..start + len]));
        start += len;
    }
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}

struct ReplicationOutput {
    stalls: Vec<Vec<f64>>,
    samples: Vec<StallSample>,
    rho_hat: Vec<f64>,
    jobs: Vec<u64>,
    downloads: Vec<f64>,
}

/// Runs the simulator: per-request stalls via the exact playback recursion,
/// warmup-discarded statistics, empirical server utilization. Deterministic
/// for a given seed. Supports cached prefixes (only the uncached suffix is
/// fetched, the cached head plays from the edge) and parallel streams
/// (y queues per server, the stream chosen uniformly).
pub fn run_simulation(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    placement: &Placement,
    settings: &SimSettings,
) -> Result<SimReport> {
    settings.validate()?;
    let violations = crate::model::validate_config(cfg, placement, pi);
    if let Some(v) = violations.first() {
        return Err(Error::Config(v.to_string()));
    }
    let caching = apply_caching(cfg)?;
    let sim_cfg = &caching.cfg;
    let unstable = !crate::model::unstable_servers(&utilization(sim_cfg, pi)).is_empty();

    let reps: Vec<ReplicationOutput> = (0..settings.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = settings
                .seed
                .wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            run_replication(sim_cfg, pi, settings, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let r = cfg.num_files();
    let m = cfg.num_servers();
    let xs: Vec<f64> = if settings.tail_points.is_empty() {
        vec![cfg.tail_threshold]
    } else {
        settings.tail_points.clone()
    };

    let mut per_file = Vec::with_capacity(r);
    for i in 0..r {
        let pooled: Vec<f64> = reps.iter().flat_map(|rp| rp.stalls[i].iter().cloned()).collect();
        if pooled.len() < 2 {
            per_file.push(FileMetrics {
                file: i,
                samples: pooled.len() as u64,
                mean_stall: f64::NAN,
                mean_stall_se: f64::NAN,
                tails: xs
                    .iter()
                    .map(|&x| TailEstimate {
                        x,
                        probability: f64::NAN,
                        stderr: f64::NAN,
                    })
                    .collect(),
            });
            continue;
        }
        let est = estimate_metrics(&pooled, &xs)?;
        per_file.push(FileMetrics {
            file: i,
            samples: pooled.len() as u64,
            mean_stall: est.mean,
            mean_stall_se: est.mean_se,
            tails: est.tails,
        });
    }

    let nrep = reps.len() as f64;
    let mut rho_hat = vec![0.0; m];
    let mut rho_hat_se = vec![0.0; m];
    for j in 0..m {
        let vals: Vec<f64> = reps.iter().map(|rp| rp.rho_hat[j]).collect();
        let mean = vals.iter().sum::<f64>() / nrep;
        rho_hat[j] = mean;
        if vals.len() > 1 {
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nrep - 1.0);
            rho_hat_se[j] = (var / nrep).sqrt();
        }
    }
    let mut jobs = vec![0u64; m];
    for rp in &reps {
        for j in 0..m {
            jobs[j] += rp.jobs[j];
        }
    }
    let samples = settings.record_samples.then(|| {
        let mut all: Vec<StallSample> = reps.iter().flat_map(|rp| rp.samples.iter().cloned()).collect();
        all.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.file.cmp(&b.file)));
        all
    });
    let download_samples = reps.iter().flat_map(|rp| rp.downloads.iter().cloned()).collect();

    Ok(SimReport {
        per_file,
        rho_hat,
        rho_hat_se,
        jobs,
        unstable,
        samples,
        download_samples,
    })
}

fn run_replication(
    cfg: &SystemConfig,
    pi: &AccessMatrix,
    settings: &SimSettings,
    seed: u64,
) -> Result<ReplicationOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = cfg.num_files();
    let m = cfg.num_servers();
    let y = cfg.streams_per_server as usize;
    let tau = cfg.segment_duration;
    let ds = cfg.startup_delay;

    let active: Vec<usize> = (0..r).filter(|&i| cfg.files[i].arrival_rate > 0.0).collect();
    let total_rate: f64 = active.iter().map(|&i| cfg.files[i].arrival_rate).sum();
    let mut cum_rate = Vec::with_capacity(active.len());
    let mut acc = 0.0;
    for &i in &active {
        acc += cfg.files[i].arrival_rate;
        cum_rate.push(acc);
    }

    let mut stalls: Vec<Vec<f64>> = vec![Vec::new(); r];
    let mut samples = Vec::new();
    let mut downloads = Vec::new();
    let mut jobs = vec![0u64; m];
    let mut busy_until = vec![0.0f64; m * y];
    let mut busy_time = vec![0.0f64; m * y];

    if active.is_empty() || total_rate <= 0.0 {
        return Ok(ReplicationOutput {
            stalls,
            samples,
            rho_hat: vec![0.0; m],
            jobs,
            downloads,
        });
    }

    let (total_requests, time_limit) = match settings.horizon {
        Horizon::Requests(n) => (n, f64::INFINITY),
        Horizon::Seconds(s) => (u64::MAX, s),
    };
    let warmup_requests = match settings.horizon {
        Horizon::Requests(n) => (settings.warmup * n as f64) as u64,
        Horizon::Seconds(_) => 0,
    };
    // busy-time clipping boundary; for request horizons it becomes concrete
    // when the first post-warmup request arrives
    let mut warmup_clock = match settings.horizon {
        Horizon::Requests(_) => f64::INFINITY,
        Horizon::Seconds(s) => settings.warmup * s,
    };

    let mut now = 0.0f64;
    let mut count = 0u64;
    let mut seg_done: Vec<f64> = Vec::new();
    while count < total_requests {
        now += -(1.0 - rng.gen::<f64>()).ln() / total_rate;
        if now > time_limit {
            break;
        }
        if matches!(settings.horizon, Horizon::Requests(_))
            && count == warmup_requests
            && warmup_clock.is_infinite()
        {
            warmup_clock = now;
        }
        let collecting = match settings.horizon {
            Horizon::Requests(_) => count >= warmup_requests,
            Horizon::Seconds(_) => now >= warmup_clock,
        };
        let pick: f64 = rng.gen::<f64>() * total_rate;
        let idx = cum_rate.partition_point(|&c| c <= pick).min(active.len() - 1);
        let i = active[idx];
        let file = &cfg.files[i];
        let l = file.segments as usize;
        let k = file.data_chunks as usize;

        let chosen = sample_server_set(pi.row(i), k, &mut rng).map_err(|e| match e {
            Error::InfeasibleRow { detail, .. } => Error::InfeasibleRow { file: i, detail },
            other => other,
        })?;

        seg_done.clear();
        seg_done.resize(l + 1, 0.0);
        for &j in &chosen {
            let prefix = file.cached_prefix_at(j) as usize;
            let nseg = l - prefix;
            jobs[j] += 1;
            if nseg == 0 {
                continue;
            }
            let stream = if y > 1 { rng.gen_range(0..y) } else { 0 };
            let q = j * y + stream;
            let sp = &cfg.servers[j];
            let (alpha, beta) = (sp.alpha / y as f64, sp.beta * y as f64);
            let start = busy_until[q].max(now);
            let wait = start - now;
            let mut cum_service = 0.0;
            for v in 1..=nseg {
                let prev = cum_service;
                cum_service += beta - (1.0 - rng.gen::<f64>()).ln() / alpha;
                debug_assert!(cum_service > prev);
                let d_rel = wait + cum_service;
                let seg = prefix + v;
                if seg_done[seg] < d_rel {
                    seg_done[seg] = d_rel;
                }
                if let Some((fi, fj, fell)) = settings.record_downloads {
                    if collecting && fi == i && fj == j && fell as usize == v {
                        downloads.push(d_rel);
                    }
                }
            }
            busy_until[q] = start + cum_service;
            // busy time clipped to the post-warmup window
            let clip_from = start.max(warmup_clock);
            if start + cum_service > clip_from {
                busy_time[q] += start + cum_service - clip_from;
            }
        }

        // exact playback recursion
        let mut play = ds.max(seg_done[1]);
        debug_assert!(play >= ds);
        for seg in 2..=l {
            let prev = play;
            play = (play + tau).max(seg_done[seg]);
            debug_assert!(play >= prev + tau);
        }
        let stall = play - ds - (l as f64 - 1.0) * tau;
        debug_assert!(stall >= -1e-9, "stall must be nonnegative, got {stall}");
        let stall = stall.max(0.0);

        if collecting {
            stalls[i].push(stall);
            if settings.record_samples {
                samples.push(StallSample {
                    file: i,
                    arrival: now,
                    stall,
                });
            }
        }
        count += 1;
    }

    let window = (now - warmup_clock).max(f64::MIN_POSITIVE);
    let mut rho_hat = vec![0.0; m];
    for j in 0..m {
        let busy: f64 = (0..y).map(|v| busy_time[j * y + v]).sum();
        rho_hat[j] = (busy / (window * y as f64)).clamp(0.0, 1.0);
    }
    Ok(ReplicationOutput {
        stalls,
        samples,
        rho_hat,
        jobs,
        downloads,
    })
}
