//! Metric artifacts shared by `simulate` and `analyze`, and the digest
//! manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use leechsim::imaging::encode_gray_png;
use leechsim::metrics::{
    clusters, domain_frequencies, format_hierarchy, hierarchy, threshold_map, visit_frequency,
    ClusterCuts, DEFAULT_TIE_EPSILON, STANDARD_THETAS,
};
use leechsim::{DomainId, FloorPlan, Trajectory};
use sha2::{Digest, Sha256};

/// Tie tolerance used for the complexity hierarchy in reports.
pub const COMPLEXITY_TIE_EPSILON: f64 = 0.01;

pub const DIGEST_FILE: &str = "digests.txt";

/// Collects files written under one output directory.
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir> {
        fs::create_dir_all(root).with_context(|| format!("{}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("{}", path.display()))?;
        self.written.push(PathBuf::from(rel));
        Ok(())
    }

    /// Writes `digests.txt`: one `<16 hex digits>  <path>` line per
    /// artifact, sorted by path.
    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        self.written.sort();
        let mut text = String::new();
        for rel in &self.written {
            let bytes = fs::read(self.root.join(rel))?;
            let _ = writeln!(text, "{:016x}  {}", digest64(&bytes), rel.display());
        }
        self.write(DIGEST_FILE, text.as_bytes())?;
        Ok(self.written)
    }
}

/// First 64 bits of the SHA-256 of `bytes`.
pub fn digest64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_be_bytes(d[..8].try_into().expect("eight bytes"))
}

/// Frequency matrix, domain frequencies, threshold maps and the summary
/// report of an ensemble.
pub fn write_metrics(out: &mut OutDir, trajectories: &[Trajectory], plan: &FloorPlan) -> Result<()> {
    let fm = visit_frequency(trajectories, plan)?;
    out.write("frequency.csv", fm.to_csv().as_bytes())?;
    out.write("frequency.png", &encode_gray_png(&fm.to_gray())?)?;

    let df = domain_frequencies(&fm, plan);
    let mut json = serde_json::to_string_pretty(&df.f)?;
    json.push('\n');
    out.write("domain_frequencies.json", json.as_bytes())?;

    for theta in STANDARD_THETAS {
        let map = threshold_map(&fm, theta)?;
        out.write(&format!("threshold_{theta:.2}.png"), &encode_gray_png(&map.to_gray())?)?;
    }

    let mut r = String::new();
    let _ = writeln!(r, "trials: {}", trajectories.len());
    let escaped = trajectories
        .iter()
        .filter(|t| matches!(t.outcome, leechsim::TrialOutcome::Escaped { .. }))
        .count();
    let _ = writeln!(r, "escaped: {escaped}");
    let _ = writeln!(r, "\n[domain frequencies]");
    for (d, v) in &df.f {
        let _ = writeln!(r, "f({d}) = {v:.4}");
    }
    let _ = writeln!(r, "\n[frequency hierarchy] tie_epsilon={DEFAULT_TIE_EPSILON}");
    let _ = writeln!(r, "{}", format_hierarchy(&hierarchy(&df.f, DEFAULT_TIE_EPSILON)));
    if df.get(DomainId::E) > 0.0 {
        let _ = writeln!(r, "f(F)/f(E) = {:.3}", df.get(DomainId::F) / df.get(DomainId::E));
    }
    match plan.complexity() {
        Ok(cr) => {
            let _ = writeln!(r, "\n[complexity] corners={}", cr.total_corners);
            for (d, v) in &cr.c {
                let _ = writeln!(r, "c({d}) = {v:.4} ({} corners)", cr.corners_per_domain[d]);
            }
            let _ = writeln!(r, "\n[complexity hierarchy] tie_epsilon={COMPLEXITY_TIE_EPSILON}");
            let _ = writeln!(r, "{}", format_hierarchy(&hierarchy(&cr.c, COMPLEXITY_TIE_EPSILON)));
            let report = clusters(&df, &cr, &ClusterCuts::default())?;
            let _ = writeln!(r, "\n[clusters]");
            for (d, c) in &report.assignment {
                let _ = writeln!(r, "{d}: {c:?}");
            }
        }
        Err(e) => {
            let _ = writeln!(r, "\n[complexity]\nunavailable: {e}");
        }
    }
    out.write("report.txt", r.as_bytes())?;
    Ok(())
}
