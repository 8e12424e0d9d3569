//! Visit-frequency matrices and the statistics derived from them.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::floorplan::{ComplexityReport, DomainId, FloorPlan};

/// How a trial contributes to a cell's count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrequencyMode {
    /// 1 if the trial visited the cell at least once.
    #[default]
    Visited,
    /// Number of samples (seconds) spent on the cell.
    Occupancy,
}

/// Per-cell visitation frequencies over an ensemble; sums to 1 whenever
/// anything was visited.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrix {
    pub width: usize,
    pub height: usize,
    pub f: Vec<f64>,
    pub n_trials: usize,
}

impl FrequencyMatrix {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.f[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.f.iter().cloned().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.f.iter().sum()
    }

    /// One row per line, comma separated, shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.f.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// 8-bit grey levels: white for 0, black for the maximum frequency.
    pub fn to_gray(&self) -> image::GrayImage {
        let max = self.max();
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.at(x as usize, y as usize);
            let level = if max > 0.0 { (255.0 * v / max).round() as u8 } else { 0 };
            image::Luma([255 - level])
        })
    }
}

/// Frequency of visits per cell with per-trial binary visitation: a cell
/// scores 1 for each trial that visited it, and scores are normalized by
/// the total over all cells.
pub fn visit_frequency(trajectories: &[Trajectory], plan: &FloorPlan) -> Result<FrequencyMatrix> {
    frequency_matrix(trajectories, plan, FrequencyMode::Visited)
}

pub fn frequency_matrix(
    trajectories: &[Trajectory],
    plan: &FloorPlan,
    mode: FrequencyMode,
) -> Result<FrequencyMatrix> {
    if trajectories.is_empty() {
        return Err(Error::Argument("no trajectories to analyze".into()));
    }
    let mut counts = vec![0u64; plan.len()];
    let mut seen = vec![u32::MAX; plan.len()];
    for (t, traj) in trajectories.iter().enumerate() {
        traj.check_on(plan)
            .map_err(|e| Error::Argument(format!("trajectory {t}: {e}")))?;
        for s in &traj.samples {
            let i = plan.index(s.pos);
            match mode {
                FrequencyMode::Occupancy => counts[i] += 1,
                FrequencyMode::Visited => {
                    if seen[i] != t as u32 {
                        seen[i] = t as u32;
                        counts[i] += 1;
                    }
                }
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let f = counts
        .iter()
        .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
        .collect();
    Ok(FrequencyMatrix {
        width: plan.width(),
        height: plan.height(),
        f,
        n_trials: trajectories.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainFrequencies {
    pub f: BTreeMap<DomainId, f64>,
}

impl DomainFrequencies {
    pub fn get(&self, d: DomainId) -> f64 {
        self.f.get(&d).copied().unwrap_or(0.0)
    }
}

/// Sums cell frequencies over each domain of the plan.
pub fn domain_frequencies(fm: &FrequencyMatrix, plan: &FloorPlan) -> DomainFrequencies {
    let mut f: BTreeMap<DomainId, f64> = plan.domains().into_iter().map(|d| (d, 0.0)).collect();
    for (i, label) in plan.domain_labels().iter().enumerate() {
        if let Some(d) = label {
            *f.entry(*d).or_insert(0.0) += fm.f[i];
        }
    }
    DomainFrequencies { f }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMap {
    pub theta: f64,
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

impl ThresholdMap {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Black for cells above threshold, white elsewhere.
    pub fn to_gray(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let on = self.mask[y as usize * self.width + x as usize];
            image::Luma([if on { 0 } else { 255 }])
        })
    }
}

/// The panel thresholds used for frequency cut-off maps.
pub const STANDARD_THETAS: [f64; 4] = [0.0, 0.05, 0.10, 0.15];

pub fn threshold_map(fm: &FrequencyMatrix, theta: f64) -> Result<ThresholdMap> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Argument(format!("threshold {theta} is outside [0, 1]")));
    }
    Ok(ThresholdMap {
        theta,
        width: fm.width,
        height: fm.height,
        mask: fm.f.iter().map(|&v| v > 0.0 && v > theta).collect(),
    })
}

/// Default tie tolerance: half of two-decimal reporting precision.
pub const DEFAULT_TIE_EPSILON: f64 = 0.005;

// absorbs binary rounding of decimal inputs such as 0.15 - 0.14
const TIE_SLACK: f64 = 1e-9;

/// Orders domains by decreasing value and groups near-ties.
///
/// Groups are built from the smallest value upward: a group is anchored at
/// its smallest member and absorbs every following value within
/// `tie_epsilon` of that anchor. Groups are returned largest first, members
/// by decreasing value (ties by id).
pub fn hierarchy(values: &BTreeMap<DomainId, f64>, tie_epsilon: f64) -> Vec<Vec<DomainId>> {
    let mut ascending: Vec<(DomainId, f64)> = values.iter().map(|(&d, &v)| (d, v)).collect();
    ascending.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
    let mut groups: Vec<Vec<(DomainId, f64)>> = Vec::new();
    for (d, v) in ascending {
        match groups.last_mut() {
            Some(g) if v - g[0].1 <= tie_epsilon + TIE_SLACK => g.push((d, v)),
            _ => groups.push(vec![(d, v)]),
        }
    }
    groups
        .into_iter()
        .rev()
        .map(|g| g.into_iter().rev().map(|(d, _)| d).collect())
        .collect()
}

/// Renders a hierarchy as `[F] > [E] > [B, D]`.
pub fn format_hierarchy(groups: &[Vec<DomainId>]) -> String {
    groups
        .iter()
        .map(|g| {
            let names: Vec<String> = g.iter().map(|d| d.to_string()).collect();
            format!("[{}]", names.join(", "))
        })
        .collect::<Vec<_>>()
        .join(" > ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Cluster {
    LowFreqModerateComplexity,
    ModerateFreqLowComplexity,
    HighFreqHighComplexity,
}

impl Cluster {
    /// (frequency level, complexity level) of the cluster's prototype.
    fn prototype(self) -> (i32, i32) {
        match self {
            Cluster::LowFreqModerateComplexity => (0, 1),
            Cluster::ModerateFreqLowComplexity => (1, 0),
            Cluster::HighFreqHighComplexity => (2, 2),
        }
    }
}

/// Level boundaries: below `low` is level 0, below `high` level 1, else 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCuts {
    pub freq: (f64, f64),
    pub complexity: (f64, f64),
}

impl Default for ClusterCuts {
    fn default() -> Self {
        ClusterCuts {
            freq: (0.12, 0.20),
            complexity: (0.12, 0.20),
        }
    }
}

fn level(v: f64, (low, high): (f64, f64)) -> i32 {
    if v < low {
        0
    } else if v < high {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub assignment: BTreeMap<DomainId, Cluster>,
}

/// Assigns each domain to the cluster whose (frequency, complexity) level
/// prototype is nearest in L1 distance; ties go to the earlier cluster.
pub fn clusters(
    df: &DomainFrequencies,
    cr: &ComplexityReport,
    cuts: &ClusterCuts,
) -> Result<ClusterReport> {
    let domains: Vec<&DomainId> = df.f.keys().collect();
    if domains != cr.c.keys().collect::<Vec<_>>() {
        return Err(Error::Argument(
            "frequency and complexity cover different domains".into(),
        ));
    }
    let all = [
        Cluster::LowFreqModerateComplexity,
        Cluster::ModerateFreqLowComplexity,
        Cluster::HighFreqHighComplexity,
    ];
    let assignment = df
        .f
        .iter()
        .map(|(&d, &f)| {
            let at = (level(f, cuts.freq), level(cr.c[&d], cuts.complexity));
            let best = all
                .iter()
                .min_by_key(|c| {
                    let p = c.prototype();
                    (p.0 - at.0).abs() + (p.1 - at.1).abs()
                })
                .copied()
                .unwrap();
            (d, best)
        })
        .collect();
    Ok(ClusterReport { assignment })
}
