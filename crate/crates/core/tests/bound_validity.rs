//! Cross-module checks: the analytical transforms and bounds against the
//! discrete-event simulator.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use stallbound::analysis::{bound_report, download_mgf, file_service_mgf};
use stallbound::model::{
    utilization, AccessMatrix, Placement, ServerParams, SystemConfig, VideoFile,
};
use stallbound::optimizer::tightest_aux;
use stallbound::simulator::{run_simulation, SimSettings};

fn moderate_pair() -> (SystemConfig, AccessMatrix, Placement) {
    let cfg = SystemConfig {
        servers: vec![
            ServerParams::new(18.0, 0.01).unwrap(),
            ServerParams::new(23.0, 0.01).unwrap(),
        ],
        files: vec![
            VideoFile::new(0, 4, 1, 2, 1.0),
            VideoFile::new(1, 2, 1, 2, 0.8),
        ],
        segment_duration: 4.0,
        startup_delay: 2.0,
        tail_threshold: 1.0,
        tradeoff: 0.5,
        streams_per_server: 1,
    };
    let pi = AccessMatrix {
        pi: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    };
    let placement = Placement::new(vec![vec![0, 1]; 2]);
    (cfg, pi, placement)
}

/// The download-time transform factors as (waiting part) x B x M^ell; the
/// waiting part must match the simulated per-chunk download times, and the
/// full transform must dominate them (it carries an extra service factor).
#[test]
fn download_transform_consistent_with_simulated_downloads() {
    let (cfg, pi, placement) = moderate_pair();
    let rho = utilization(&cfg, &pi);
    assert!(rho.iter().all(|&r| r > 0.2 && r < 0.8), "rho = {rho:?}");

    let ell = 2u32;
    let mut settings = SimSettings::requests(400_000, 31);
    settings.record_downloads = Some((0, 0, ell));
    let report = run_simulation(&cfg, &pi, &placement, &settings).unwrap();
    let samples = &report.download_samples;
    assert!(samples.len() > 20_000, "only {} samples", samples.len());

    // moderate t keeps e^{tD} square-integrable for a meaningful 3-sigma band
    let t = 0.9;
    let n = samples.len() as f64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for &d in samples {
        let v = (t * d).exp();
        sum += v;
        sumsq += v * v;
    }
    let mc = sum / n;
    let sd = ((sumsq / n - mc * mc).max(0.0) / n).sqrt();

    let z = download_mgf(&cfg, &pi, 0, 0, ell, t).unwrap();
    let b = file_service_mgf(&cfg, &pi, 0, t).unwrap();
    let waiting_form = z / b; // (1 - rho) t / den  *  M^ell
    assert!(
        (waiting_form - mc).abs() <= 3.0 * sd,
        "waiting-time form {waiting_form} vs simulated {mc} +- {sd}"
    );
    // the published transform embeds one extra file service, so it must sit
    // above the simulated chunk-download transform
    assert!(z >= mc - 3.0 * sd, "z = {z} below simulation {mc}");
}

fn desk_instance(seed: u64) -> (SystemConfig, AccessMatrix, Placement) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 4;
    let servers: Vec<ServerParams> = (0..m)
        .map(|_| {
            ServerParams::new(rng.gen_range(9.0..27.0), rng.gen_range(0.005..0.03)).unwrap()
        })
        .collect();
    let r = 10;
    let files: Vec<VideoFile> = (0..r)
        .map(|i| VideoFile::new(i, rng.gen_range(2..=10), 2, 3, rng.gen_range(0.2..1.0)))
        .collect();
    let mut cfg = SystemConfig {
        servers,
        files,
        segment_duration: 4.0,
        startup_delay: 4.0,
        tail_threshold: 5.0,
        tradeoff: 0.5,
        streams_per_server: 1,
    };
    let init = stallbound::optimizer::feasible_init(&cfg, seed).unwrap();
    // scale arrivals so the hottest server sits near 0.65 utilization
    let peak = utilization(&cfg, &init.pi)
        .into_iter()
        .fold(0.0f64, f64::max);
    let scale = 0.65 / peak;
    for f in &mut cfg.files {
        f.arrival_rate *= scale;
    }
    (cfg, init.pi, init.placement)
}

#[test]
fn bounds_dominate_simulation_on_a_desk_instance() {
    let (cfg, pi, placement) = desk_instance(44);
    let aux = tightest_aux(&cfg, &pi).unwrap();
    let report = bound_report(&cfg, &pi, &aux).unwrap();

    let mut settings = SimSettings::requests(25_000, 45);
    settings.tail_points = vec![1.0, 5.0, 10.0];
    let sim = run_simulation(&cfg, &pi, &placement, &settings).unwrap();
    assert!(!sim.unstable);
    for (row, stats) in report.per_file.iter().zip(&sim.per_file) {
        if stats.samples < 2 {
            continue;
        }
        assert!(
            stats.mean_stall <= row.mean_bound + 2.0 * stats.mean_stall_se,
            "file {}: mean {} +- {} vs bound {}",
            row.file,
            stats.mean_stall,
            stats.mean_stall_se,
            row.mean_bound
        );
        for tail in &stats.tails {
            let bound = stallbound::analysis::tail_bound(&cfg, &pi, row.file, aux.t_tail[row.file], tail.x)
                .unwrap();
            assert!(
                tail.probability <= bound + 2.0 * tail.stderr,
                "file {} x {}: tail {} +- {} vs bound {bound}",
                row.file,
                tail.x,
                tail.probability,
                tail.stderr
            );
        }
    }
}

/// Caching and stream transforms must mean the same thing to the analysis
/// and to the simulator: the bound still dominates the simulated system.
#[test]
fn bounds_hold_with_cached_prefixes_and_streams() {
    let (mut cfg, pi, placement) = desk_instance(77);
    // cache a prefix of two files on every server, plus a full cache
    for j in 0..cfg.num_servers() {
        let half = cfg.files[0].segments / 2;
        cfg.files[0].cached_prefix.insert(j, half);
        cfg.files[1].cached_prefix.insert(j, cfg.files[1].segments);
    }
    cfg.streams_per_server = 2;
    let aux = tightest_aux(&cfg, &pi).unwrap();
    let report = bound_report(&cfg, &pi, &aux).unwrap();
    let mut settings = SimSettings::requests(25_000, 78);
    settings.tail_points = vec![1.0, 5.0];
    let sim = run_simulation(&cfg, &pi, &placement, &settings).unwrap();
    // the fully cached file no longer arrives at all
    assert_eq!(sim.per_file[1].samples, 0);
    for (row, stats) in report.per_file.iter().zip(&sim.per_file) {
        if stats.samples < 2 {
            continue;
        }
        assert!(
            stats.mean_stall <= row.mean_bound + 2.0 * stats.mean_stall_se,
            "file {}: mean {} vs bound {}",
            row.file,
            stats.mean_stall,
            row.mean_bound
        );
    }
}
