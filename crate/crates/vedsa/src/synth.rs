//! Synthetic cascade generation with known ground-truth hazards, via
//! thinning of an inhomogeneous Poisson process with intensity A*h(t).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{make_labeled, Cascade, LabeledCascade, ViralityConfig};
use crate::error::{Result, VedsaError};
use crate::survdist::{cumulative_hazard, hazard, DistParams};

const RESAMPLE_CAP: usize = 50;

/// Per-class generation recipe: event intensity is `amplitude * h(t)` with
/// the class's ground-truth distribution parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassSpec {
    pub params: DistParams,
    pub amplitude: f64,
    pub count: usize,
}

/// Full synthetic dataset recipe. `zeta2` doubles as both thresholds so the
/// synthetic corpus has no intermediate band.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SynthSpec {
    pub viral: ClassSpec,
    pub nonviral: ClassSpec,
    pub horizon_hours: f64,
    pub zeta2: u64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for c in [&self.viral, &self.nonviral] {
            c.params.validate()?;
            if c.amplitude < 0.0 || !c.amplitude.is_finite() {
                return Err(VedsaError::Config("amplitude must be nonnegative".into()));
            }
        }
        if self.horizon_hours <= 0.0 {
            return Err(VedsaError::Config("horizon must be positive".into()));
        }
        if self.zeta2 == 0 {
            return Err(VedsaError::Config("zeta2 must be >= 1".into()));
        }
        let ev = expected_events(&self.viral, self.horizon_hours);
        let en = expected_events(&self.nonviral, self.horizon_hours);
        if !(ev > self.zeta2 as f64 && (self.zeta2 as f64) > en) {
            return Err(VedsaError::Config(format!(
                "class regimes must straddle zeta2: E[n_viral]={ev:.1}, zeta2={}, E[n_nonviral]={en:.1}",
                self.zeta2
            )));
        }
        Ok(())
    }

    pub fn virality_config(&self, max_len: usize) -> ViralityConfig {
        ViralityConfig { zeta1: self.zeta2, zeta2: self.zeta2, max_len }
    }
}

/// Expected event count of a class: 1 source event plus A * Lambda(horizon).
pub fn expected_events(class: &ClassSpec, horizon: f64) -> f64 {
    1.0 + class.amplitude * cumulative_hazard(&class.params, horizon)
}

/// Upper bound of the intensity over (0, horizon]. The Weibull kappa < 1
/// hazard is unbounded at the origin and cannot be dominated by a constant
/// rate.
fn dominating_rate(class: &ClassSpec, horizon: f64) -> Result<f64> {
    let h_max = match class.params {
        DistParams::Exponential { lambda } => lambda,
        DistParams::Rayleigh { alpha } => alpha * horizon,
        DistParams::Weibull { kappa, .. } if kappa >= 1.0 => hazard(&class.params, horizon),
        DistParams::Weibull { .. } => {
            return Err(VedsaError::Config(
                "thinning cannot dominate a Weibull kappa < 1 intensity (unbounded at t=0)".into(),
            ))
        }
    };
    let rate = class.amplitude * h_max;
    if !rate.is_finite() {
        return Err(VedsaError::Config("dominating rate overflows".into()));
    }
    Ok(rate)
}

/// Draws one cascade by thinning a homogeneous Poisson process at the
/// dominating rate. The source event at t=0 is always included.
pub fn gen_cascade(
    spec: &SynthSpec,
    class: &ClassSpec,
    id: impl Into<String>,
    rng: &mut impl Rng,
) -> Result<Cascade> {
    let rate = dominating_rate(class, spec.horizon_hours)?;
    let mut events = vec![0.0];
    if rate > 0.0 {
        let mut t = 0.0;
        loop {
            t += -(1.0 - rng.gen::<f64>()).ln() / rate;
            if t >= spec.horizon_hours {
                break;
            }
            let intensity = class.amplitude * hazard(&class.params, t);
            if rng.gen::<f64>() * rate < intensity {
                events.push(t);
            }
        }
    }
    Cascade::from_raw(id, events)
}

/// One generated cascade with its intended class and ground-truth params.
#[derive(Debug, Clone)]
pub struct SynthCascade {
    pub cascade: Cascade,
    pub labeled: LabeledCascade,
    pub true_params: DistParams,
}

/// Generates the full two-class corpus, labeled with the spec's zeta2.
/// Cascades whose realized label disagrees with the intended class are
/// resampled up to a retry cap.
pub fn gen_dataset(spec: &SynthSpec, bin_length: f64, num_bins: usize) -> Result<Vec<SynthCascade>> {
    spec.validate()?;
    let cfg = spec.virality_config(num_bins);
    let mut out = Vec::with_capacity(spec.viral.count + spec.nonviral.count);
    for (class, want_label, tag) in
        [(&spec.viral, 1u8, "viral"), (&spec.nonviral, 0u8, "nonviral")]
    {
        for i in 0..class.count {
            // per-cascade derived seed keeps generation order-independent
            let base = spec.seed ^ (want_label as u64).wrapping_mul(0x9e3779b97f4a7c15);
            let mut rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(i as u64));
            let mut found = None;
            for _ in 0..RESAMPLE_CAP {
                let c = gen_cascade(spec, class, format!("{tag}-{i}"), &mut rng)?;
                if let Some(labeled) = make_labeled(&c, &cfg, bin_length, num_bins)? {
                    if labeled.label == want_label {
                        found = Some(SynthCascade {
                            cascade: c,
                            labeled,
                            true_params: class.params,
                        });
                        break;
                    }
                }
            }
            out.push(found.ok_or_else(|| {
                VedsaError::Domain(format!(
                    "class overlap: could not draw a {tag} cascade within {RESAMPLE_CAP} tries"
                ))
            })?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_spec() -> SynthSpec {
        SynthSpec {
            viral: ClassSpec {
                params: DistParams::Exponential { lambda: 0.1 },
                amplitude: 120.0,
                count: 50,
            },
            nonviral: ClassSpec {
                params: DistParams::Exponential { lambda: 0.1 },
                amplitude: 8.0,
                count: 50,
            },
            horizon_hours: 24.0,
            zeta2: 100,
            seed: 11,
        }
    }

    #[test]
    fn zero_intensity_gives_source_only() {
        let mut spec = exp_spec();
        spec.nonviral.amplitude = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = gen_cascade(&spec, &spec.nonviral, "c", &mut rng).unwrap();
        assert_eq!(c.events, vec![0.0]);
    }

    #[test]
    fn same_seed_same_cascade() {
        let spec = exp_spec();
        let a = gen_cascade(&spec, &spec.viral, "c", &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = gen_cascade(&spec, &spec.viral, "c", &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_mean_matches_closed_form() {
        // E[n] = 1 + A * Lambda(24) = 1 + 50 * 0.1 * 24 = 121
        let spec = SynthSpec {
            viral: ClassSpec {
                params: DistParams::Exponential { lambda: 0.1 },
                amplitude: 50.0,
                count: 1,
            },
            nonviral: ClassSpec {
                params: DistParams::Exponential { lambda: 0.1 },
                amplitude: 1.0,
                count: 1,
            },
            horizon_hours: 24.0,
            zeta2: 60,
            seed: 0,
        };
        let runs = 1000;
        let mut total = 0.0;
        let mut sq = 0.0;
        for s in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = gen_cascade(&spec, &spec.viral, "c", &mut rng).unwrap().n() as f64;
            total += n;
            sq += n * n;
        }
        let mean = total / runs as f64;
        let var = sq / runs as f64 - mean * mean;
        let se = (var / runs as f64).sqrt();
        let expected = 121.0;
        assert!((mean - expected).abs() < 3.0 * se, "mean={mean} se={se}");
    }

    #[test]
    fn thinning_cumulative_count_matches_integrated_intensity() {
        // At checkpoints t, E[count up to t] = A * Lambda(t) + 1.
        let params = DistParams::Rayleigh { alpha: 0.02 };
        let spec = SynthSpec {
            viral: ClassSpec { params, amplitude: 20.0, count: 1 },
            nonviral: ClassSpec { params, amplitude: 0.5, count: 1 },
            horizon_hours: 24.0,
            zeta2: 30,
            seed: 0,
        };
        let runs = 1000;
        for frac in [0.25, 0.5, 1.0] {
            let t = spec.horizon_hours * frac;
            let mut total = 0.0;
            let mut sq = 0.0;
            for s in 0..runs {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
                let c = gen_cascade(&spec, &spec.viral, "c", &mut rng).unwrap();
                let n = c.events.iter().filter(|&&e| e < t).count() as f64;
                total += n;
                sq += n * n;
            }
            let mean = total / runs as f64;
            let var = sq / runs as f64 - mean * mean;
            let se = (var / runs as f64).sqrt();
            let expected = 1.0 + spec.viral.amplitude * cumulative_hazard(&params, t);
            assert!((mean - expected).abs() < 3.0 * se, "t={t} mean={mean} expected={expected}");
        }
    }

    #[test]
    fn dataset_counts_and_labels() {
        let spec = exp_spec();
        let data = gen_dataset(&spec, 1.0, 24).unwrap();
        assert_eq!(data.len(), 100);
        assert_eq!(data.iter().filter(|d| d.labeled.label == 1).count(), 50);
        // class means ordered
        let mean = |label: u8| {
            let v: Vec<f64> = data
                .iter()
                .filter(|d| d.labeled.label == label)
                .map(|d| d.cascade.n() as f64)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(1) > mean(0));
    }

    #[test]
    fn two_seeds_differ_but_agree_in_distribution() {
        let mut a = exp_spec();
        let mut b = exp_spec();
        a.seed = 1;
        b.seed = 2;
        let da = gen_dataset(&a, 1.0, 24).unwrap();
        let db = gen_dataset(&b, 1.0, 24).unwrap();
        assert_ne!(da[0].cascade.events, db[0].cascade.events);
        let mean = |d: &[SynthCascade]| {
            d.iter().map(|s| s.cascade.n() as f64).sum::<f64>() / d.len() as f64
        };
        let (ma, mb) = (mean(&da), mean(&db));
        assert!((ma - mb).abs() / ma < 0.25, "ma={ma} mb={mb}");
    }

    #[test]
    fn rejects_undominated_weibull() {
        let mut spec = exp_spec();
        spec.viral.params = DistParams::Weibull { kappa: 0.5, lambda: 1.0 };
        spec.viral.amplitude = 200.0;
        assert!(gen_cascade(
            &spec,
            &spec.viral,
            "c",
            &mut ChaCha8Rng::seed_from_u64(0)
        )
        .is_err());
    }

    #[test]
    fn rejects_overlapping_class_regimes() {
        let mut spec = exp_spec();
        spec.zeta2 = 1_000_000;
        assert!(spec.validate().is_err());
    }
}
