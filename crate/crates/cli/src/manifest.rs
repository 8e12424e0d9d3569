//! Run manifests: the resolved inputs of a `simulate` run.
//!
//! Values come from command-line flags, then from an optional `key=value`
//! config file, then from built-in defaults. Relative paths in a config
//! file are taken relative to the file's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use leechsim::floorplan::{ece_plan, ECE_START};
use leechsim::{BehaviorParams, FloorPlan, Pos};

pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_SEED: u64 = 1;

const KEYS: [&str; 9] = [
    "plan",
    "params",
    "start",
    "trials",
    "seed",
    "out",
    "max_steps",
    "thermal_source",
    "taxis_beta",
];

/// Inclusive rectangle of heat-source cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceRect {
    pub min: Pos,
    pub max: Pos,
}

impl SourceRect {
    pub fn cells(&self) -> Vec<Pos> {
        (self.min.y..=self.max.y)
            .flat_map(|y| (self.min.x..=self.max.x).map(move |x| Pos::new(x, y)))
            .collect()
    }
}

impl std::fmt::Display for SourceRect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.min.x, self.min.y, self.max.x, self.max.y)
    }
}

/// Settings as given on the command line or in a config file; `None`
/// means "not given here".
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub plan: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub start: Option<Pos>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_steps: Option<u32>,
    pub thermal_source: Option<SourceRect>,
    pub taxis_beta: Option<f64>,
}

impl Settings {
    /// Reads a `key=value` config file. Blank lines and `#` comments are
    /// ignored; unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut s = Settings::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{}:{}", path.display(), i + 1);
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("{}: expected key=value", at()))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.insert(k.to_string(), i).is_some() {
                bail!("{}: duplicate key {k:?}", at());
            }
            let rel = |v: &str| base.join(v);
            match k {
                "plan" => s.plan = Some(rel(v)),
                "params" => s.params = Some(rel(v)),
                "out" => s.out = Some(rel(v)),
                "start" => s.start = Some(parse_pos(v).with_context(at)?),
                "trials" => s.trials = Some(v.parse().with_context(|| format!("{}: trials", at()))?),
                "seed" => s.seed = Some(v.parse().with_context(|| format!("{}: seed", at()))?),
                "max_steps" => {
                    s.max_steps = Some(v.parse().with_context(|| format!("{}: max_steps", at()))?)
                }
                "thermal_source" => s.thermal_source = Some(parse_rect(v).with_context(at)?),
                "taxis_beta" => {
                    s.taxis_beta = Some(v.parse().with_context(|| format!("{}: taxis_beta", at()))?)
                }
                _ => bail!("{}: unknown key {k:?} (known: {})", at(), KEYS.join(", ")),
            }
        }
        Ok(s)
    }

    /// Fills every unset value from `fallback`.
    pub fn or(self, fallback: Settings) -> Settings {
        Settings {
            plan: self.plan.or(fallback.plan),
            params: self.params.or(fallback.params),
            start: self.start.or(fallback.start),
            trials: self.trials.or(fallback.trials),
            seed: self.seed.or(fallback.seed),
            out: self.out.or(fallback.out),
            max_steps: self.max_steps.or(fallback.max_steps),
            thermal_source: self.thermal_source.or(fallback.thermal_source),
            taxis_beta: self.taxis_beta.or(fallback.taxis_beta),
        }
    }
}

/// Validated inputs of a simulation run.
#[derive(Debug, Clone)]
pub struct RunManifest {
    /// `None` selects the bundled plan.
    pub plan_path: Option<PathBuf>,
    /// `None` selects the bundled calibrated parameters (bundled plan) or
    /// the built-in defaults.
    pub params_path: Option<PathBuf>,
    pub start: Pos,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub max_steps: u32,
    pub thermal_source: Option<SourceRect>,
    pub plan: FloorPlan,
    pub params: BehaviorParams,
}

impl RunManifest {
    pub fn resolve(s: Settings) -> Result<RunManifest> {
        let plan = match &s.plan {
            Some(p) => load_plan(p)?,
            None => ece_plan(),
        };
        let base = match (&s.plan, &s.params) {
            (_, Some(p)) => {
                let text = fs::read_to_string(p).with_context(|| format!("{}", p.display()))?;
                leechsim::behavior::parse_params(&text, &BehaviorParams::default())
                    .with_context(|| format!("{}", p.display()))?
            }
            (None, None) => leechsim::behavior::ece_calibrated_params(),
            (Some(_), None) => BehaviorParams::default(),
        };
        let mut params = base;
        if let Some(beta) = s.taxis_beta {
            params.taxis_beta = beta;
            params.validate()?;
        }
        let start = match (s.start, &s.plan) {
            (Some(p), _) => p,
            (None, None) => ECE_START,
            (None, Some(_)) => bail!("--start is required with a custom plan"),
        };
        ensure!(
            plan.in_bounds(start) && plan.kind(start) == leechsim::CellKind::Free,
            "start position {start} is not a free cell of the plan"
        );
        let trials = s.trials.unwrap_or(DEFAULT_TRIALS);
        ensure!(trials >= 1, "trial count must be at least 1");
        let max_steps = s.max_steps.unwrap_or(leechsim::engine::DEFAULT_MAX_STEPS);
        ensure!(max_steps >= 1, "max_steps must be at least 1");
        let out = s.out.context("an output directory is required (--out)")?;
        if let Some(r) = s.thermal_source {
            for c in r.cells() {
                ensure!(
                    plan.in_bounds(c) && plan.kind(c) == leechsim::CellKind::Free,
                    "thermal source cell {c} is not a free cell"
                );
            }
        }
        Ok(RunManifest {
            plan_path: s.plan,
            params_path: s.params,
            start,
            trials,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            out,
            max_steps,
            thermal_source: s.thermal_source,
            plan,
            params,
        })
    }

    /// The resolved manifest as a config file that reproduces the run.
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let path = |p: &Option<PathBuf>| match p {
            Some(p) => p.display().to_string(),
            None => "(bundled)".into(),
        };
        let _ = writeln!(t, "# plan: {}", path(&self.plan_path));
        let _ = writeln!(t, "# params: {}", path(&self.params_path));
        let _ = writeln!(t, "start={},{}", self.start.x, self.start.y);
        let _ = writeln!(t, "trials={}", self.trials);
        let _ = writeln!(t, "seed={}", self.seed);
        let _ = writeln!(t, "max_steps={}", self.max_steps);
        if let Some(r) = self.thermal_source {
            let _ = writeln!(t, "thermal_source={r}");
        }
        let _ = writeln!(t, "taxis_beta={}", self.params.taxis_beta);
        t
    }
}

pub fn load_plan(path: &Path) -> Result<FloorPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    FloorPlan::parse(&text).with_context(|| format!("{}", path.display()))
}

pub fn parse_pos(s: &str) -> Result<Pos> {
    let parts = parse_list::<usize>(s, 2)?;
    Ok(Pos::new(parts[0], parts[1]))
}

pub fn parse_rect(s: &str) -> Result<SourceRect> {
    let v = parse_list::<usize>(s, 4)?;
    let (min, max) = (Pos::new(v[0], v[1]), Pos::new(v[2], v[3]));
    ensure!(min.x <= max.x && min.y <= max.y, "rectangle {s:?} has min beyond max");
    Ok(SourceRect { min, max })
}

pub fn parse_list<T: std::str::FromStr>(s: &str, n: usize) -> Result<Vec<T>> {
    let v: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow::anyhow!("expected {n} comma-separated numbers, got {s:?}"))?;
    ensure!(v.len() == n, "expected {n} comma-separated numbers, got {s:?}");
    Ok(v)
}
