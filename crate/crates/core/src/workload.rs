//! Catalog and scenario generation, including the measured reference cluster
//! parameters used throughout the numerical experiments.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};

use crate::error::{Error, Result};
use crate::model::{ServerParams, VideoFile};

/// Law of video sizes, in seconds of play time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeLaw {
    Fixed { seconds: f64 },
    Pareto { shape: f64, scale: f64 },
}

/// Arrival-rate assignment: files with index below `upto` (and above the
/// previous rule's bound) get `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRule {
    pub upto: usize,
    pub rate: f64,
}

/// Catalog description: file count, size law, piecewise rate rule, erasure
/// code and segment duration.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogSpec {
    pub files: usize,
    pub size_law: SizeLaw,
    pub rates: Vec<RateRule>,
    /// (n, k) erasure code applied to every file.
    pub code: (u32, u32),
    pub segment_duration: f64,
}

impl CatalogSpec {
    /// Half the catalog at 0.002/s, the rest at 0.003/s.
    pub fn split_rates(files: usize) -> Vec<RateRule> {
        vec![
            RateRule {
                upto: files / 2,
                rate: 0.002,
            },
            RateRule {
                upto: files,
                rate: 0.003,
            },
        ]
    }

    fn validate(&self) -> Result<()> {
        if let SizeLaw::Pareto { shape, scale } = self.size_law {
            if !(shape > 1.0) {
                return Err(Error::Config(format!(
                    "Pareto shape must be > 1 for a finite mean, got {shape}"
                )));
            }
            if !(scale > 0.0) {
                return Err(Error::Config(format!("Pareto scale must be > 0, got {scale}")));
            }
        }
        if let SizeLaw::Fixed { seconds } = self.size_law {
            if !(seconds > 0.0) {
                return Err(Error::Config(format!("fixed size must be > 0, got {seconds}")));
            }
        }
        if !(self.segment_duration > 0.0) {
            return Err(Error::Config("segment duration must be > 0".into()));
        }
        let (n, k) = self.code;
        if k < 1 || k > n {
            return Err(Error::Config(format!("invalid code (n, k) = ({n}, {k})")));
        }
        Ok(())
    }

    fn rate_for(&self, index: usize) -> f64 {
        for rule in &self.rates {
            if index < rule.upto {
                return rule.rate;
            }
        }
        self.rates.last().map_or(0.0, |r| r.rate)
    }
}

/// Draws a catalog: sizes i.i.d. from the law, rounded up to whole segments,
/// rates by the piecewise rule. Pure function of (spec, seed).
pub fn generate_catalog(spec: &CatalogSpec, seed: u64) -> Result<Vec<VideoFile>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k) = spec.code;
    let mut files = Vec::with_capacity(spec.files);
    for i in 0..spec.files {
        let seconds = match spec.size_law {
            SizeLaw::Fixed { seconds } => seconds,
            SizeLaw::Pareto { shape, scale } => {
                Pareto::new(scale, shape).expect("validated").sample(&mut rng)
            }
        };
        let segments = (seconds / spec.segment_duration).ceil().max(1.0) as u32;
        files.push(VideoFile::new(i, segments, k, n, spec.rate_for(i)));
    }
    Ok(files)
}

/// The twelve measured storage nodes used as the default cluster: shift
/// 10 ms everywhere, heterogeneous service rates.
pub fn default_servers() -> Vec<ServerParams> {
    const ALPHAS: [f64; 12] = [
        18.2298, 24.0552, 11.8750, 17.0526, 26.1912, 23.9059, 27.006, 21.3812, 9.9106, 24.9589,
        26.5288, 21.8067,
    ];
    ALPHAS
        .iter()
        .map(|&alpha| ServerParams { alpha, beta: 0.01 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_sizes_round_to_whole_segments() {
        let spec = CatalogSpec {
            files: 8,
            size_law: SizeLaw::Fixed { seconds: 600.0 },
            rates: CatalogSpec::split_rates(8),
            code: (10, 4),
            segment_duration: 4.0,
        };
        let files = generate_catalog(&spec, 0).unwrap();
        assert!(files.iter().all(|f| f.segments == 150));
        assert!(files[..4].iter().all(|f| f.arrival_rate == 0.002));
        assert!(files[4..].iter().all(|f| f.arrival_rate == 0.003));
    }

    #[test]
    fn pareto_sizes_respect_support_floor() {
        let spec = CatalogSpec {
            files: 2_000,
            size_law: SizeLaw::Pareto {
                shape: 2.0,
                scale: 300.0,
            },
            rates: CatalogSpec::split_rates(2_000),
            code: (3, 2),
            segment_duration: 4.0,
        };
        let files = generate_catalog(&spec, 1).unwrap();
        // scale 300 s at 4 s segments means at least 75 segments always
        assert!(files.iter().all(|f| f.segments >= 75));
    }

    #[test]
    fn pareto_sample_mean_matches_formula() {
        let spec = CatalogSpec {
            files: 100_000,
            size_law: SizeLaw::Pareto {
                shape: 2.0,
                scale: 300.0,
            },
            rates: vec![RateRule { upto: usize::MAX, rate: 0.002 }],
            code: (3, 2),
            segment_duration: 4.0,
        };
        let files = generate_catalog(&spec, 2).unwrap();
        // segment counts overestimate size by at most one segment; compare
        // against the size mean shape*scale/(shape-1) = 600 s
        let mean_seconds: f64 = files
            .iter()
            .map(|f| f.segments as f64 * spec.segment_duration)
            .sum::<f64>()
            / files.len() as f64;
        // Pareto(2, .) has infinite variance; allow a wide but telling band
        assert!(
            (mean_seconds - 600.0).abs() < 40.0,
            "sample mean {mean_seconds}"
        );
    }

    #[test]
    fn catalog_is_deterministic_per_seed() {
        let spec = CatalogSpec {
            files: 64,
            size_law: SizeLaw::Pareto {
                shape: 2.0,
                scale: 300.0,
            },
            rates: CatalogSpec::split_rates(64),
            code: (4, 2),
            segment_duration: 4.0,
        };
        assert_eq!(
            generate_catalog(&spec, 9).unwrap(),
            generate_catalog(&spec, 9).unwrap()
        );
        assert_ne!(
            generate_catalog(&spec, 9).unwrap(),
            generate_catalog(&spec, 10).unwrap()
        );
    }

    #[test]
    fn invalid_laws_are_rejected() {
        let mut spec = CatalogSpec {
            files: 4,
            size_law: SizeLaw::Pareto {
                shape: 1.0,
                scale: 300.0,
            },
            rates: vec![],
            code: (3, 2),
            segment_duration: 4.0,
        };
        assert!(generate_catalog(&spec, 0).is_err());
        spec.size_law = SizeLaw::Fixed { seconds: 600.0 };
        spec.code = (2, 3);
        assert!(generate_catalog(&spec, 0).is_err());
    }

    #[test]
    fn reference_cluster_values() {
        let servers = default_servers();
        assert_eq!(servers.len(), 12);
        assert_eq!(servers[2].alpha, 11.8750);
        assert_eq!(servers[8].alpha, 9.9106);
        let slowest = servers
            .iter()
            .map(|s| s.alpha)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(slowest, 9.9106);
        assert!(servers.iter().all(|s| s.beta == 0.01));
    }
}
