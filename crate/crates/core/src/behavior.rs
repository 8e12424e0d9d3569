//! The behavioural automaton and its movement rules.
//!
//! Four modes: resting (stationary), swimming (persistent straight motion
//! until something is touched), crawling (wall following) and exploring (a
//! correlated random walk near the last contact). Contact with a wall stops
//! a swimmer and turns a crawler into an explorer; an explorer goes back to
//! crawling with a probability that falls off linearly with the distance
//! travelled since its last contact.
//!
//! One step is one second of trial time.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::ThermalField;
use crate::error::{Error, Result};
use crate::floorplan::{FloorPlan, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Resting,
    Swimming,
    Crawling,
    Exploring,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Resting => "resting",
            Mode::Swimming => "swimming",
            Mode::Crawling => "crawling",
            Mode::Exploring => "exploring",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "resting" => Mode::Resting,
            "swimming" => Mode::Swimming,
            "crawling" => Mode::Crawling,
            "exploring" => Mode::Exploring,
            _ => return Err(Error::Argument(format!("unknown mode {s:?}"))),
        })
    }
}

/// One of eight compass headings, clockwise from north (0 = N, 1 = NE, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Heading(u8);

impl Heading {
    pub const N: Heading = Heading(0);
    pub const NE: Heading = Heading(1);
    pub const E: Heading = Heading(2);
    pub const SE: Heading = Heading(3);
    pub const S: Heading = Heading(4);
    pub const SW: Heading = Heading(5);
    pub const W: Heading = Heading(6);
    pub const NW: Heading = Heading(7);

    pub fn new(index: u8) -> Heading {
        Heading(index % 8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Rotates by `eighths` 45-degree increments; positive is clockwise.
    pub fn rotate(self, eighths: i32) -> Heading {
        Heading((self.0 as i32 + eighths).rem_euclid(8) as u8)
    }

    pub fn delta(self) -> (i64, i64) {
        const D: [(i64, i64); 8] = [
            (0, -1),
            (1, -1),
            (1, 0),
            (1, 1),
            (0, 1),
            (-1, 1),
            (-1, 0),
            (-1, -1),
        ];
        D[self.index()]
    }

    pub fn is_diagonal(self) -> bool {
        self.0 % 2 == 1
    }

    /// Nearest cardinal heading, rounding diagonals anticlockwise.
    pub fn cardinal(self) -> Heading {
        Heading(self.0 & !1)
    }
}

/// Which hand the crawler keeps on the wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WallSide {
    Left,
    Right,
}

impl WallSide {
    fn sign(self) -> i32 {
        match self {
            WallSide::Left => -1,
            WallSide::Right => 1,
        }
    }

    pub fn flipped(self) -> WallSide {
        match self {
            WallSide::Left => WallSide::Right,
            WallSide::Right => WallSide::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub pos: Pos,
    pub heading: Heading,
    pub mode: Mode,
    /// Cells travelled since the last wall contact.
    pub dist_since_contact: u32,
    pub step: u32,
    /// Whether the last move touched a wall.
    pub contact: bool,
    pub wall_side: WallSide,
}

impl AgentState {
    pub fn new(pos: Pos, heading: Heading, mode: Mode) -> Self {
        AgentState {
            pos,
            heading,
            mode,
            dist_since_contact: 0,
            step: 0,
            contact: false,
            wall_side: WallSide::Right,
        }
    }
}

/// Transition probabilities, speeds and gains of the automaton.
///
/// Speeds are in cells per step; fractional parts are realized by drawing an
/// extra unit move with that probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorParams {
    pub p0_return: f64,
    pub d_max: f64,
    pub p_rest_enter: f64,
    pub p_rest_exit: f64,
    pub p_swim_spont: f64,
    pub v_swim: f64,
    pub v_crawl: f64,
    pub v_explore: f64,
    /// Standard deviation of the exploring turn, in degrees.
    pub turn_sigma_explore: f64,
    pub wall_follow_side_flip: f64,
    /// Gain per degree Celsius; 0 disables taxis.
    pub taxis_beta: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        BehaviorParams {
            p0_return: 0.5,
            d_max: 40.0,
            p_rest_enter: 0.001,
            p_rest_exit: 0.05,
            p_swim_spont: 0.01,
            v_swim: 2.0,
            v_crawl: 1.0,
            v_explore: 1.0,
            turn_sigma_explore: 60.0,
            wall_follow_side_flip: 0.01,
            taxis_beta: 0.0,
        }
    }
}

impl BehaviorParams {
    pub const KEYS: [&'static str; 11] = [
        "p0_return",
        "d_max",
        "p_rest_enter",
        "p_rest_exit",
        "p_swim_spont",
        "v_swim",
        "v_crawl",
        "v_explore",
        "turn_sigma_explore",
        "wall_follow_side_flip",
        "taxis_beta",
    ];

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p0_return", self.p0_return),
            ("p_rest_enter", self.p_rest_enter),
            ("p_rest_exit", self.p_rest_exit),
            ("p_swim_spont", self.p_swim_spont),
            ("wall_follow_side_flip", self.wall_follow_side_flip),
        ];
        for (k, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!("{k} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.d_max.is_finite() && self.d_max > 0.0) {
            return Err(Error::Argument(format!("d_max must be positive, got {}", self.d_max)));
        }
        for (k, v) in [
            ("v_swim", self.v_swim),
            ("v_crawl", self.v_crawl),
            ("v_explore", self.v_explore),
            ("turn_sigma_explore", self.turn_sigma_explore),
            ("taxis_beta", self.taxis_beta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Argument(format!("{k} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "p0_return" => self.p0_return,
            "d_max" => self.d_max,
            "p_rest_enter" => self.p_rest_enter,
            "p_rest_exit" => self.p_rest_exit,
            "p_swim_spont" => self.p_swim_spont,
            "v_swim" => self.v_swim,
            "v_crawl" => self.v_crawl,
            "v_explore" => self.v_explore,
            "turn_sigma_explore" => self.turn_sigma_explore,
            "wall_follow_side_flip" => self.wall_follow_side_flip,
            "taxis_beta" => self.taxis_beta,
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "p0_return" => &mut self.p0_return,
            "d_max" => &mut self.d_max,
            "p_rest_enter" => &mut self.p_rest_enter,
            "p_rest_exit" => &mut self.p_rest_exit,
            "p_swim_spont" => &mut self.p_swim_spont,
            "v_swim" => &mut self.v_swim,
            "v_crawl" => &mut self.v_crawl,
            "v_explore" => &mut self.v_explore,
            "turn_sigma_explore" => &mut self.turn_sigma_explore,
            "wall_follow_side_flip" => &mut self.wall_follow_side_flip,
            "taxis_beta" => &mut self.taxis_beta,
            _ => return Err(Error::Argument(format!("unknown parameter {key:?}"))),
        };
        *slot = value;
        Ok(())
    }
}

/// Probability of an explorer returning to crawling after travelling `d`
/// cells since its last contact: `p0_return * max(0, 1 - d / d_max)`.
pub fn return_probability(d: f64, params: &BehaviorParams) -> f64 {
    params.p0_return * (1.0 - d / params.d_max).max(0.0)
}

/// Chooses the next mode from the current one and the last contact flag.
pub fn transition<R: Rng + ?Sized>(
    state: &AgentState,
    contact: bool,
    params: &BehaviorParams,
    rng: &mut R,
) -> Mode {
    match (state.mode, contact) {
        (Mode::Swimming, true) => Mode::Crawling,
        (Mode::Crawling, true) => Mode::Exploring,
        (Mode::Exploring, false) => {
            let p = return_probability(state.dist_since_contact as f64, params);
            if rng.random::<f64>() < p {
                Mode::Crawling
            } else {
                Mode::Exploring
            }
        }
        (Mode::Crawling, false) => {
            if rng.random::<f64>() < params.p_swim_spont {
                Mode::Swimming
            } else if rng.random::<f64>() < params.p_rest_enter {
                Mode::Resting
            } else {
                Mode::Crawling
            }
        }
        (Mode::Resting, _) => {
            if rng.random::<f64>() < params.p_rest_exit {
                Mode::Crawling
            } else {
                Mode::Resting
            }
        }
        (mode, _) => mode,
    }
}

/// Advances the agent by one step in its current mode.
///
/// Moves blocked by walls become contact events and end the step's motion.
/// Diagonal moves are two axis steps and succeed only when both are clear,
/// so walls are never cut at corners. With a thermal field and positive
/// `taxis_beta`, heading choices in the swimming and exploring modes are
/// reweighted by `exp(taxis_beta * dT)` where `dT` is the temperature
/// difference to the cell in that direction.
pub fn move_agent<R: Rng + ?Sized>(
    state: &AgentState,
    plan: &FloorPlan,
    params: &BehaviorParams,
    field: Option<&ThermalField>,
    rng: &mut R,
) -> AgentState {
    let mut next = state.clone();
    next.step += 1;
    next.contact = false;

    let speed = match state.mode {
        Mode::Resting => return next,
        Mode::Swimming => params.v_swim,
        Mode::Crawling => params.v_crawl,
        Mode::Exploring => params.v_explore,
    };
    let field = field.filter(|_| params.taxis_beta > 0.0);

    if state.mode == Mode::Crawling && rng.random::<f64>() < params.wall_follow_side_flip {
        next.wall_side = next.wall_side.flipped();
    }

    let whole = speed.floor();
    let mut unit_moves = whole as u32;
    if rng.random::<f64>() < speed - whole {
        unit_moves += 1;
    }

    let mut travelled = 0u32;
    for _ in 0..unit_moves {
        let outcome = match state.mode {
            Mode::Swimming => {
                let h = pick_heading(&next, plan, &SWIM_TURNS, params.taxis_beta, field, rng);
                next.heading = h;
                try_step(plan, next.pos, h)
            }
            Mode::Exploring => {
                let turns = explore_turns(params.turn_sigma_explore);
                let h = pick_heading(&next, plan, &turns, params.taxis_beta, field, rng);
                next.heading = h;
                let r = try_step(plan, next.pos, h);
                if r.is_none() {
                    next.heading = h.rotate(4);
                }
                r
            }
            Mode::Crawling => crawl_step(&mut next, plan),
            Mode::Resting => unreachable!(),
        };
        match outcome {
            Some((pos, cells)) => {
                next.pos = pos;
                travelled += cells;
            }
            None => {
                next.contact = true;
                break;
            }
        }
    }

    if plan.passable_neighbors(next.pos).next().is_none() {
        next.contact = true;
    }
    if next.contact {
        next.dist_since_contact = 0;
    } else {
        next.dist_since_contact = next.dist_since_contact.saturating_add(travelled);
    }
    next
}

/// Swimming keeps its heading half the time and otherwise veers 45 degrees
/// either way, a mean absolute turn of 22.5 degrees.
const SWIM_TURNS: [f64; 8] = [0.5, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25];

/// Discretized wrapped Gaussian over the eight relative turns.
fn explore_turns(sigma_deg: f64) -> [f64; 8] {
    let mut w = [0.0; 8];
    if sigma_deg <= 1e-9 {
        w[0] = 1.0;
        return w;
    }
    for (r, slot) in w.iter_mut().enumerate() {
        let angle = 45.0 * r.min(8 - r) as f64;
        *slot = (-0.5 * (angle / sigma_deg).powi(2)).exp();
    }
    w
}

/// Samples a heading; `turns[r]` weighs a clockwise turn of `r` eighths.
fn pick_heading<R: Rng + ?Sized>(
    state: &AgentState,
    plan: &FloorPlan,
    turns: &[f64; 8],
    beta: f64,
    field: Option<&ThermalField>,
    rng: &mut R,
) -> Heading {
    let mut w = *turns;
    if let Some(field) = field {
        let here = field.at(state.pos);
        let gains: Vec<f64> = (0..8)
            .map(|r| {
                let h = state.heading.rotate(r as i32);
                let (dx, dy) = h.delta();
                match state.pos.offset(dx, dy) {
                    Some(p) if plan.is_passable(p) => beta * (field.at(p) - here),
                    _ => 0.0,
                }
            })
            .collect();
        let top = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (slot, g) in w.iter_mut().zip(&gains) {
            *slot *= (g - top).exp();
        }
    }
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (r, &wr) in w.iter().enumerate() {
        if wr <= 0.0 {
            continue;
        }
        if u < wr {
            return state.heading.rotate(r as i32);
        }
        u -= wr;
    }
    // rounding fell off the end; take the last positive weight
    let r = (0..8).rev().find(|&r| w[r] > 0.0).unwrap_or(0);
    state.heading.rotate(r as i32)
}

/// Attempts one unit move along `h`. Returns the destination and the number
/// of axis steps taken, or `None` when a wall blocks the move.
fn try_step(plan: &FloorPlan, from: Pos, h: Heading) -> Option<(Pos, u32)> {
    let (dx, dy) = h.delta();
    if h.is_diagonal() {
        let mid = from.offset(dx, 0).filter(|&p| plan.is_passable(p))?;
        let to = mid.offset(0, dy).filter(|&p| plan.is_passable(p))?;
        Some((to, 2))
    } else {
        let to = from.offset(dx, dy).filter(|&p| plan.is_passable(p))?;
        Some((to, 1))
    }
}

/// One wall-following unit move on cardinal headings.
///
/// With no wall in the surrounding eight cells the crawler goes straight.
/// Otherwise it turns toward its wall side when that cell is open (wrapping
/// around convex corners and into doorways), else continues straight, else
/// registers contact and turns away from the wall side without moving.
fn crawl_step(state: &mut AgentState, plan: &FloorPlan) -> Option<(Pos, u32)> {
    let h = state.heading.cardinal();
    state.heading = h;
    if !plan.wall_nearby(state.pos) {
        return try_step(plan, state.pos, h);
    }
    let toward = h.rotate(2 * state.wall_side.sign());
    if let Some(step) = try_step(plan, state.pos, toward) {
        state.heading = toward;
        return Some(step);
    }
    if let Some(step) = try_step(plan, state.pos, h) {
        return Some(step);
    }
    state.heading = h.rotate(-2 * state.wall_side.sign());
    None
}

/// Parameters calibrated against the bundled ECE plan.
pub const ECE_CALIBRATED_PARAMS: &str = include_str!("../data/ece_calibrated.params");

pub fn ece_calibrated_params() -> BehaviorParams {
    parse_params(ECE_CALIBRATED_PARAMS, &BehaviorParams::default())
        .expect("bundled parameters are valid")
}

/// Parses a flat `key=value` parameter file. Keys are the field names of
/// [`BehaviorParams`]; missing keys keep their value from `base`. Blank
/// lines and `#` comments are ignored.
pub fn parse_params(text: &str, base: &BehaviorParams) -> Result<BehaviorParams> {
    let mut params = base.clone();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(i + 1, format!("expected key=value, got {line:?}")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::format(i + 1, format!("invalid number {:?}", v.trim())))?;
        params
            .set(k.trim(), value)
            .map_err(|e| Error::format(i + 1, e.to_string()))?;
    }
    params.validate()?;
    Ok(params)
}

/// Writes every parameter as `key=value`, one per line, in field order.
pub fn format_params(params: &BehaviorParams) -> String {
    BehaviorParams::KEYS
        .iter()
        .map(|k| format!("{k}={}\n", params.get(k).unwrap()))
        .collect()
}
