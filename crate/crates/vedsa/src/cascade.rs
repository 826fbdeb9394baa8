//! Cascade domain types: binning, censoring, and virality labeling.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VedsaError};

/// One information cascade: the time-ordered sharing events for a single
/// piece of information. Times are in hours, origin-shifted so the source
/// event sits at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub id: String,
    /// Nondecreasing event times in hours; `events[0] == 0`.
    pub events: Vec<f64>,
}

impl Cascade {
    /// Builds a cascade from raw (possibly unsorted, un-shifted) event times.
    pub fn from_raw(id: impl Into<String>, mut times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(VedsaError::Domain("cascade must have at least one event".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(VedsaError::Domain("non-finite event time".into()));
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let origin = times[0];
        for t in &mut times {
            *t -= origin;
        }
        Ok(Cascade { id: id.into(), events: times })
    }

    /// Total event count over the full observed life of the cascade.
    pub fn n(&self) -> usize {
        self.events.len()
    }

    /// Right-censors the cascade at `tau` hours: keeps events strictly
    /// before `tau`. The source event at 0 always survives (tau > 0).
    pub fn censor(&self, tau: f64) -> Cascade {
        let cut = self.events.partition_point(|&t| t < tau);
        Cascade { id: self.id.clone(), events: self.events[..cut.max(1)].to_vec() }
    }
}

/// Per-bin event counts of a cascade over a fixed observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCascade {
    /// Count of events falling in bin j, i.e. in [j*bin_length, (j+1)*bin_length).
    pub counts: Vec<u64>,
    /// Hours per bin.
    pub bin_length: f64,
}

impl BinnedCascade {
    pub fn observed_bins(&self) -> usize {
        self.counts.len()
    }
}

/// Thresholds splitting cascades into non-viral (n <= zeta1), viral
/// (n >= zeta2), and the excluded intermediate band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViralityConfig {
    pub zeta1: u64,
    pub zeta2: u64,
    /// Maximum cascade length in bins, used for padding/truncation.
    pub max_len: usize,
}

impl ViralityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.zeta1 == 0 || self.zeta1 > self.zeta2 {
            return Err(VedsaError::Config(format!(
                "need 0 < zeta1 <= zeta2, got zeta1={} zeta2={}",
                self.zeta1, self.zeta2
            )));
        }
        if self.max_len == 0 {
            return Err(VedsaError::Config("max_len must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Virality {
    NonViral,
    Viral,
    /// zeta1 < n < zeta2; excluded from training and evaluation.
    Intermediate,
}

/// A binned cascade with its virality label and per-bin viral-state
/// indicator sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCascade {
    pub id: String,
    pub binned: BinnedCascade,
    /// 1 = viral.
    pub label: u8,
    /// sigma[j] == 1 iff the cascade is in the viral state by bin j.
    pub sigma: Vec<u8>,
    /// First bin at which cumulative events reach zeta2; None for non-viral.
    pub viral_time: Option<usize>,
}

/// Counts events into half-open bins [j*L, (j+1)*L) covering [0, span).
pub fn bin_cascade(c: &Cascade, bin_length: f64, span: f64) -> Result<BinnedCascade> {
    if bin_length <= 0.0 {
        return Err(VedsaError::Config("bin_length must be positive".into()));
    }
    if span <= 0.0 {
        return Err(VedsaError::Config("span must be positive".into()));
    }
    let num_bins = (span / bin_length).round() as usize;
    if num_bins == 0 || (num_bins as f64 * bin_length - span).abs() > 1e-9 * span.max(1.0) {
        return Err(VedsaError::Config(format!(
            "span {span} is not a positive multiple of bin_length {bin_length}"
        )));
    }
    let mut counts = vec![0u64; num_bins];
    for &t in &c.events {
        if t < 0.0 || t >= span {
            continue;
        }
        let j = ((t / bin_length) as usize).min(num_bins - 1);
        // Guard against float edge where t/bin_length rounds up to a bin boundary.
        let j = if t < j as f64 * bin_length { j - 1 } else { j };
        counts[j] += 1;
    }
    Ok(BinnedCascade { counts, bin_length })
}

/// Labels a cascade by its full-life event count against the thresholds.
pub fn label_cascade(c: &Cascade, cfg: &ViralityConfig) -> Virality {
    let n = c.n() as u64;
    if n <= cfg.zeta1 {
        Virality::NonViral
    } else if n >= cfg.zeta2 {
        Virality::Viral
    } else {
        Virality::Intermediate
    }
}

/// Computes the per-bin viral-state indicator over `num_bins` bins.
///
/// The viral time is the first bin at which the cumulative event count
/// reaches zeta2; sigma is 0 before it and 1 from it onward. Non-viral
/// cascades get all-zero sigma.
pub fn viral_state_sequence(
    c: &Cascade,
    cfg: &ViralityConfig,
    bin_length: f64,
    num_bins: usize,
) -> Result<(Vec<u8>, Option<usize>)> {
    match label_cascade(c, cfg) {
        Virality::Intermediate => {
            return Err(VedsaError::Domain(format!(
                "cascade {} is intermediate; exclude before computing sigma",
                c.id
            )))
        }
        Virality::NonViral => return Ok((vec![0u8; num_bins], None)),
        Virality::Viral => {}
    }
    let span = num_bins as f64 * bin_length;
    let binned = bin_cascade(c, bin_length, span)?;
    let mut cum = 0u64;
    let mut viral_time = None;
    for (j, &b) in binned.counts.iter().enumerate() {
        cum += b;
        if cum >= cfg.zeta2 {
            viral_time = Some(j);
            break;
        }
    }
    let mut sigma = vec![0u8; num_bins];
    if let Some(tv) = viral_time {
        for s in sigma.iter_mut().skip(tv) {
            *s = 1;
        }
    }
    Ok((sigma, viral_time))
}

/// Bins, labels, and computes sigma for one cascade over `num_bins` bins.
/// Returns None for intermediate cascades.
pub fn make_labeled(
    c: &Cascade,
    cfg: &ViralityConfig,
    bin_length: f64,
    num_bins: usize,
) -> Result<Option<LabeledCascade>> {
    let label = match label_cascade(c, cfg) {
        Virality::Intermediate => return Ok(None),
        Virality::Viral => 1u8,
        Virality::NonViral => 0u8,
    };
    let span = num_bins as f64 * bin_length;
    let binned = bin_cascade(c, bin_length, span)?;
    let (sigma, viral_time) = viral_state_sequence(c, cfg, bin_length, num_bins)?;
    Ok(Some(LabeledCascade { id: c.id.clone(), binned, label, sigma, viral_time }))
}
