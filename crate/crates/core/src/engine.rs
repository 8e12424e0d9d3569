//! Trials, ensembles, the steady-state thermal field and parameter
//! calibration.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::behavior::{move_agent, transition, AgentState, BehaviorParams, Heading, Mode};
use crate::error::{Error, Result};
use crate::floorplan::{CellKind, DomainId, FloorPlan, Pos};
use crate::metrics::{domain_frequencies, visit_frequency};

/// Trial length of a 30-minute recording at one step per second.
pub const DEFAULT_MAX_STEPS: u32 = 1800;

pub const SOURCE_TEMP_C: f64 = 70.0;
pub const AMBIENT_TEMP_C: f64 = 20.0;

const RELAX_TOLERANCE: f64 = 1e-6;
const RELAX_MAX_ITERATIONS: usize = 1_000_000;
const SOR_OMEGA: f64 = 1.99;
const SOR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub step: u32,
    pub pos: Pos,
    /// `None` for traces whose behavioural mode was not observed.
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrialOutcome {
    Escaped { at: u32 },
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub outcome: TrialOutcome,
}

impl Trajectory {
    pub fn duration(&self) -> u32 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.step - a.step,
            _ => 0,
        }
    }

    pub fn final_pos(&self) -> Option<Pos> {
        self.samples.last().map(|s| s.pos)
    }

    /// Checks that every sample lies on a passable cell of `plan`.
    pub fn check_on(&self, plan: &FloorPlan) -> Result<()> {
        for (row, s) in self.samples.iter().enumerate() {
            if !plan.in_bounds(s.pos) {
                return Err(Error::Argument(format!(
                    "sample {row} at {} is outside the {}x{} plan",
                    s.pos,
                    plan.width(),
                    plan.height()
                )));
            }
            if !plan.is_passable(s.pos) {
                return Err(Error::Argument(format!("sample {row} at {} is on a wall", s.pos)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrialConfig<'a> {
    pub plan: &'a FloorPlan,
    pub start_pos: Pos,
    pub params: BehaviorParams,
    pub max_steps: u32,
    pub seed: u64,
    pub field: Option<&'a ThermalField>,
    /// Drawn uniformly from the trial's stream when unset.
    pub initial_heading: Option<Heading>,
    pub initial_mode: Mode,
}

impl<'a> TrialConfig<'a> {
    pub fn new(plan: &'a FloorPlan, start_pos: Pos, params: BehaviorParams, seed: u64) -> Self {
        TrialConfig {
            plan,
            start_pos,
            params,
            max_steps: DEFAULT_MAX_STEPS,
            seed,
            field: None,
            initial_heading: None,
            initial_mode: Mode::Swimming,
        }
    }
}

/// Runs one trial until the agent reaches an exit or the clock runs out.
///
/// The trajectory holds one sample per step, starting with the release at
/// step 0. Each step applies [`transition`] with the previous step's
/// contact flag and then [`move_agent`].
pub fn run_trial(config: &TrialConfig<'_>) -> Result<Trajectory> {
    let plan = config.plan;
    if plan.kind(config.start_pos) != CellKind::Free {
        return Err(Error::Argument(format!(
            "start position {} is not a free cell",
            config.start_pos
        )));
    }
    if config.max_steps == 0 {
        return Err(Error::Argument("max_steps must be positive".into()));
    }
    config.params.validate()?;
    if let Some(f) = config.field {
        if f.width() != plan.width() || f.height() != plan.height() {
            return Err(Error::Argument("thermal field does not match plan dimensions".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let heading = config
        .initial_heading
        .unwrap_or_else(|| Heading::new(rng.random_range(0..8)));
    let mut state = AgentState::new(config.start_pos, heading, config.initial_mode);
    let mut samples = Vec::with_capacity(config.max_steps as usize + 1);
    samples.push(Sample {
        step: 0,
        pos: state.pos,
        mode: Some(state.mode),
    });

    for _ in 0..config.max_steps {
        state.mode = transition(&state, state.contact, &config.params, &mut rng);
        state = move_agent(&state, plan, &config.params, config.field, &mut rng);
        samples.push(Sample {
            step: state.step,
            pos: state.pos,
            mode: Some(state.mode),
        });
        if plan.kind(state.pos) == CellKind::Exit {
            return Ok(Trajectory {
                samples,
                outcome: TrialOutcome::Escaped { at: state.step },
            });
        }
    }
    Ok(Trajectory {
        samples,
        outcome: TrialOutcome::TimedOut,
    })
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index`: the `(index + 1)`-th output of a SplitMix64
/// generator started at `master_seed`. Depends only on the pair, never on
/// execution order.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Shared inputs of an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleConfig<'a> {
    pub plan: &'a FloorPlan,
    pub start_pos: Pos,
    pub params: BehaviorParams,
    pub max_steps: u32,
    pub field: Option<&'a ThermalField>,
}

impl<'a> EnsembleConfig<'a> {
    pub fn new(plan: &'a FloorPlan, start_pos: Pos, params: BehaviorParams) -> Self {
        EnsembleConfig {
            plan,
            start_pos,
            params,
            max_steps: DEFAULT_MAX_STEPS,
            field: None,
        }
    }

    pub fn trial(&self, seed: u64) -> TrialConfig<'a> {
        TrialConfig {
            plan: self.plan,
            start_pos: self.start_pos,
            params: self.params.clone(),
            max_steps: self.max_steps,
            seed,
            field: self.field,
            initial_heading: None,
            initial_mode: Mode::Swimming,
        }
    }
}

/// Runs `n` independent trials in parallel on the current rayon pool.
/// Trial `i` uses [`trial_seed`]`(master_seed, i)`; results are in index
/// order, so the output does not depend on the number of threads.
pub fn run_ensemble(config: &EnsembleConfig<'_>, n: usize, master_seed: u64) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::Argument("ensemble needs at least one trial".into()));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| run_trial(&config.trial(trial_seed(master_seed, i))))
        .collect()
}

/// Steady-state temperature over a plan, in degrees Celsius.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalField {
    width: usize,
    height: usize,
    temperature: Vec<f64>,
    iterations: usize,
}

impl ThermalField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, p: Pos) -> f64 {
        self.temperature[p.y * self.width + p.x]
    }

    pub fn values(&self) -> &[f64] {
        &self.temperature
    }

    /// Jacobi sweeps needed to converge.
    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Solves Laplace's equation on the passable cells by Jacobi relaxation.
///
/// Source cells are held at `source_temp` and exit cells at `ambient`;
/// walls are insulating, so each free cell relaxes toward the mean of its
/// passable neighbours. Iterates until the largest per-cell update falls
/// below 1e-6 degrees. Wall cells report `ambient`.
///
/// Long corridors make plain Jacobi slow to settle, so the field is first
/// brought close to steady state with over-relaxed Gauss-Seidel sweeps; the
/// Jacobi loop then runs from that starting point and decides convergence.
/// `iterations` counts the Jacobi sweeps only.
pub fn thermal_field(
    plan: &FloorPlan,
    source: &[Pos],
    source_temp: f64,
    ambient: f64,
) -> Result<ThermalField> {
    if source.is_empty() {
        return Err(Error::Argument("thermal source is empty".into()));
    }
    if !(source_temp > ambient) {
        return Err(Error::Argument(format!(
            "source temperature {source_temp} must exceed ambient {ambient}"
        )));
    }
    let n = plan.len();
    let mut fixed = vec![false; n];
    let mut temp = vec![ambient; n];
    for &p in source {
        if plan.kind(p) != CellKind::Free {
            return Err(Error::Argument(format!("source cell {p} is not a free cell")));
        }
        let i = plan.index(p);
        fixed[i] = true;
        temp[i] = source_temp;
    }
    for p in plan.exits() {
        let i = plan.index(p);
        fixed[i] = true;
        temp[i] = ambient;
    }

    // neighbour lists of the relaxed cells
    let mut active = Vec::new();
    let mut offsets = Vec::new();
    let mut nbrs = Vec::new();
    for i in 0..n {
        if fixed[i] || plan.cells()[i] != CellKind::Free {
            continue;
        }
        active.push(i);
        offsets.push(nbrs.len());
        nbrs.extend(plan.passable_neighbors(plan.pos_of(i)).map(|q| plan.index(q)));
    }
    offsets.push(nbrs.len());

    presolve(&active, &offsets, &nbrs, &mut temp);
    // over-relaxation can overshoot the boundary values by rounding error
    for &i in &active {
        temp[i] = temp[i].clamp(ambient, source_temp);
    }

    let mut next = temp.clone();
    let mut iterations = 0;
    loop {
        if iterations >= RELAX_MAX_ITERATIONS {
            let last_update = max_update(&active, &offsets, &nbrs, &temp);
            return Err(Error::Convergence {
                iterations,
                last_update,
            });
        }
        iterations += 1;
        let mut delta: f64 = 0.0;
        for (k, &i) in active.iter().enumerate() {
            let around = &nbrs[offsets[k]..offsets[k + 1]];
            if around.is_empty() {
                continue;
            }
            let mean = around.iter().map(|&j| temp[j]).sum::<f64>() / around.len() as f64;
            delta = delta.max((mean - temp[i]).abs());
            next[i] = mean;
        }
        std::mem::swap(&mut temp, &mut next);
        if delta < RELAX_TOLERANCE {
            break;
        }
    }
    Ok(ThermalField {
        width: plan.width(),
        height: plan.height(),
        temperature: temp,
        iterations,
    })
}

fn presolve(active: &[usize], offsets: &[usize], nbrs: &[usize], temp: &mut [f64]) {
    for _ in 0..RELAX_MAX_ITERATIONS {
        let mut delta: f64 = 0.0;
        for (k, &i) in active.iter().enumerate() {
            let around = &nbrs[offsets[k]..offsets[k + 1]];
            if around.is_empty() {
                continue;
            }
            let mean = around.iter().map(|&j| temp[j]).sum::<f64>() / around.len() as f64;
            let step = SOR_OMEGA * (mean - temp[i]);
            delta = delta.max(step.abs());
            temp[i] += step;
        }
        if delta < SOR_TOLERANCE {
            return;
        }
    }
}

fn max_update(active: &[usize], offsets: &[usize], nbrs: &[usize], temp: &[f64]) -> f64 {
    active
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let around = &nbrs[offsets[k]..offsets[k + 1]];
            if around.is_empty() {
                return 0.0;
            }
            let mean = around.iter().map(|&j| temp[j]).sum::<f64>() / around.len() as f64;
            (mean - temp[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Breadth-first path distances (4-connected) from a set of cells over
/// passable space; `None` for unreachable cells.
pub fn path_distances(plan: &FloorPlan, from: &[Pos]) -> Vec<Option<u32>> {
    let mut dist = vec![None; plan.len()];
    let mut queue = VecDeque::new();
    for &p in from {
        let i = plan.index(p);
        if dist[i].is_none() {
            dist[i] = Some(0);
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        let d = dist[plan.index(p)].unwrap();
        for q in plan.passable_neighbors(p) {
            let j = plan.index(q);
            if dist[j].is_none() {
                dist[j] = Some(d + 1);
                queue.push_back(q);
            }
        }
    }
    dist
}

/// Search bounds for calibration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchBounds {
    pub d_max: (f64, f64),
    pub speed_max: f64,
    pub turn_sigma: (f64, f64),
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            d_max: (5.0, 200.0),
            speed_max: 3.0,
            turn_sigma: (5.0, 180.0),
        }
    }
}

impl SearchBounds {
    /// Draws a candidate uniformly within the bounds. Probabilities span
    /// [0, 1]; speeds span (0, speed_max]. Taxis is off.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BehaviorParams {
        let mut unit = || rng.random::<f64>();
        let speed = |u: f64| self.speed_max * (1.0 - u);
        BehaviorParams {
            p0_return: unit(),
            d_max: self.d_max.0 + (self.d_max.1 - self.d_max.0) * unit(),
            p_rest_enter: unit(),
            p_rest_exit: unit(),
            p_swim_spont: unit(),
            v_swim: speed(unit()),
            v_crawl: speed(unit()),
            v_explore: speed(unit()),
            turn_sigma_explore: self.turn_sigma.0 + (self.turn_sigma.1 - self.turn_sigma.0) * unit(),
            wall_follow_side_flip: unit(),
            taxis_beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub best_params: BehaviorParams,
    pub loss: f64,
    pub evaluations: usize,
    pub target: BTreeMap<DomainId, f64>,
    /// Domain frequencies produced by `best_params`.
    pub achieved: BTreeMap<DomainId, f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CalibrationConfig<'a> {
    pub plan: &'a FloorPlan,
    pub start_pos: Pos,
    pub target: BTreeMap<DomainId, f64>,
    pub budget: usize,
    pub trials_per_eval: usize,
    pub master_seed: u64,
    pub max_steps: u32,
    pub bounds: SearchBounds,
}

impl<'a> CalibrationConfig<'a> {
    pub fn new(
        plan: &'a FloorPlan,
        start_pos: Pos,
        target: BTreeMap<DomainId, f64>,
        budget: usize,
        trials_per_eval: usize,
        master_seed: u64,
    ) -> Self {
        CalibrationConfig {
            plan,
            start_pos,
            target,
            budget,
            trials_per_eval,
            master_seed,
            max_steps: DEFAULT_MAX_STEPS,
            bounds: SearchBounds::default(),
        }
    }
}

/// Sum of absolute differences over the target's domains.
pub fn l1_loss(achieved: &BTreeMap<DomainId, f64>, target: &BTreeMap<DomainId, f64>) -> f64 {
    target
        .iter()
        .map(|(d, t)| (achieved.get(d).copied().unwrap_or(0.0) - t).abs())
        .sum()
}

pub fn check_target(target: &BTreeMap<DomainId, f64>) -> Result<()> {
    if target.is_empty() {
        return Err(Error::Argument("calibration target is empty".into()));
    }
    if let Some((d, v)) = target.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Argument(format!("target f({d}) = {v} is not a fraction")));
    }
    let sum: f64 = target.values().sum();
    if (sum - 1.0).abs() > 0.02 {
        return Err(Error::Argument(format!(
            "target frequencies sum to {sum}, expected 1 within 0.02"
        )));
    }
    Ok(())
}

/// Domain frequencies of an ensemble run with `params`.
pub fn simulate_domain_frequencies(
    config: &EnsembleConfig<'_>,
    trials: usize,
    master_seed: u64,
) -> Result<BTreeMap<DomainId, f64>> {
    let trajectories = run_ensemble(config, trials, master_seed)?;
    let fm = visit_frequency(&trajectories, config.plan)?;
    Ok(domain_frequencies(&fm, config.plan).f)
}

/// Uniform random search over [`BehaviorParams`].
///
/// Candidates come from one stream seeded by `master_seed`; every candidate
/// is scored on the same ensemble seed (common random numbers) by the L1
/// distance between its domain frequencies and the target. The first
/// candidate reaching the lowest loss wins.
pub fn calibrate(config: &CalibrationConfig<'_>) -> Result<CalibrationResult> {
    if config.budget == 0 {
        return Err(Error::Argument("calibration budget must be at least 1".into()));
    }
    if config.trials_per_eval == 0 {
        return Err(Error::Argument("trials per evaluation must be at least 1".into()));
    }
    check_target(&config.target)?;

    let mut sampler = ChaCha8Rng::seed_from_u64(mix64(config.master_seed ^ 0x6361_6c69_6272_6174));
    let eval_seed = mix64(config.master_seed.wrapping_add(1));
    let mut best: Option<(BehaviorParams, f64, BTreeMap<DomainId, f64>)> = None;
    for _ in 0..config.budget {
        let candidate = config.bounds.sample(&mut sampler);
        let mut ensemble = EnsembleConfig::new(config.plan, config.start_pos, candidate.clone());
        ensemble.max_steps = config.max_steps;
        let achieved = simulate_domain_frequencies(&ensemble, config.trials_per_eval, eval_seed)?;
        let loss = l1_loss(&achieved, &config.target);
        if best.as_ref().is_none_or(|(_, l, _)| loss < *l) {
            best = Some((candidate, loss, achieved));
        }
    }
    let (best_params, loss, achieved) = best.expect("budget is positive");
    Ok(CalibrationResult {
        best_params,
        loss,
        evaluations: config.budget,
        target: config.target.clone(),
        achieved,
        seed: config.master_seed,
    })
}
