//! Grid floor plans: parsing, validation, domain labels and the
//! corner-based complexity measure.
//!
//! A plan file is UTF-8 text. The first line is `scale_mm_per_cell=<decimal>`;
//! every following line is one row of cells: `#` wall, `X` exit, `A`..`F` a
//! free cell belonging to that domain. Rows must have equal length.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SCALE_KEY: &str = "scale_mm_per_cell";

/// The bundled first-floor template (110 x 100 cells, 1 mm per cell).
pub const ECE_PLAN_TEXT: &str = include_str!("../data/ece_floor1.plan");

/// Release point at the right end of the domain C corridor.
pub const ECE_START: Pos = Pos { x: 105, y: 47 };

/// Heat-source footprint (inclusive corners) in the top-left corner room of
/// domain A.
pub const ECE_THERMAL_SOURCE: (Pos, Pos) = (Pos { x: 3, y: 3 }, Pos { x: 5, y: 5 });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Wall,
    Free,
    Exit,
}

impl CellKind {
    pub fn is_passable(self) -> bool {
        !matches!(self, CellKind::Wall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DomainId {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl DomainId {
    pub const ALL: [DomainId; 6] = [
        DomainId::A,
        DomainId::B,
        DomainId::C,
        DomainId::D,
        DomainId::E,
        DomainId::F,
    ];

    pub fn from_char(c: char) -> Option<Self> {
        Some(match c {
            'A' => DomainId::A,
            'B' => DomainId::B,
            'C' => DomainId::C,
            'D' => DomainId::D,
            'E' => DomainId::E,
            'F' => DomainId::F,
            _ => return None,
        })
    }

    pub fn as_char(self) -> char {
        (b'A' + self.index() as u8) as char
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Cell coordinate; `x` grows to the east, `y` to the south.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }

    pub fn offset(self, dx: i64, dy: i64) -> Option<Pos> {
        let x = self.x as i64 + dx;
        let y = self.y as i64 + dy;
        if x < 0 || y < 0 {
            None
        } else {
            Some(Pos::new(x as usize, y as usize))
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The four axis directions used for mechanosensory contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dir4 {
    N,
    E,
    S,
    W,
}

impl Dir4 {
    pub const ALL: [Dir4; 4] = [Dir4::N, Dir4::E, Dir4::S, Dir4::W];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Dir4::N => (0, -1),
            Dir4::E => (1, 0),
            Dir4::S => (0, 1),
            Dir4::W => (-1, 0),
        }
    }
}

/// Validated, immutable occupancy grid with per-cell domain labels.
///
/// Exit cells carry the domain of an adjacent free cell (the smallest one
/// when several touch), so every passable cell belongs to exactly one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorPlan {
    width: usize,
    height: usize,
    cell_size_mm: f64,
    cells: Vec<CellKind>,
    domain_of: Vec<Option<DomainId>>,
}

impl FloorPlan {
    /// Parses and validates plan-file text.
    pub fn parse(text: &str) -> Result<FloorPlan> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(1, "empty plan file"))?;
        let cell_size_mm = parse_scale(header.trim())?;

        let mut width = None;
        let mut cells = Vec::new();
        let mut labels = Vec::new();
        let mut height = 0;
        let mut blank_at = None;
        for (i, raw) in lines.enumerate() {
            let line_no = i + 2;
            let row = raw.trim_end_matches('\r');
            if row.is_empty() {
                blank_at.get_or_insert(line_no);
                continue;
            }
            if let Some(b) = blank_at {
                return Err(Error::format(b, "blank line inside the grid"));
            }
            let n = row.chars().count();
            match width {
                None => width = Some(n),
                Some(w) if w != n => {
                    return Err(Error::format(
                        line_no,
                        format!("row has {n} cells, expected {w}"),
                    ))
                }
                _ => {}
            }
            for (col, c) in row.chars().enumerate() {
                let (kind, dom) = match c {
                    '#' => (CellKind::Wall, None),
                    'X' => (CellKind::Exit, None),
                    _ => match DomainId::from_char(c) {
                        Some(d) => (CellKind::Free, Some(d)),
                        None => {
                            return Err(Error::format(
                                line_no,
                                format!("unknown cell character {c:?} at column {}", col + 1),
                            ))
                        }
                    },
                };
                cells.push(kind);
                labels.push(dom);
            }
            height += 1;
        }
        let width = width.ok_or_else(|| Error::format(2, "plan has no grid rows"))?;
        FloorPlan::from_grid(width, height, cell_size_mm, cells, labels)
    }

    /// Builds a plan from raw grids and validates it. Domain labels on exit
    /// cells are ignored and re-derived.
    pub fn from_grid(
        width: usize,
        height: usize,
        cell_size_mm: f64,
        cells: Vec<CellKind>,
        mut domain_of: Vec<Option<DomainId>>,
    ) -> Result<FloorPlan> {
        if width < 3 || height < 3 {
            return Err(Error::Validation(format!(
                "plan must be at least 3x3 cells, got {width}x{height}"
            )));
        }
        if cells.len() != width * height || domain_of.len() != width * height {
            return Err(Error::Validation("grid size does not match dimensions".into()));
        }
        if !(cell_size_mm.is_finite() && cell_size_mm > 0.0) {
            return Err(Error::Validation(format!(
                "cell size must be positive, got {cell_size_mm}"
            )));
        }
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let on_border = x == 0 || y == 0 || x == width - 1 || y == height - 1;
                match cells[i] {
                    CellKind::Free if on_border => {
                        return Err(Error::Validation(format!(
                            "boundary cell ({x}, {y}) is free; boundary must be wall or exit"
                        )))
                    }
                    CellKind::Free if domain_of[i].is_none() => {
                        return Err(Error::Validation(format!(
                            "free cell ({x}, {y}) has no domain label"
                        )))
                    }
                    CellKind::Wall => domain_of[i] = None,
                    CellKind::Exit => domain_of[i] = None,
                    CellKind::Free => {}
                }
            }
        }
        // exits inherit a neighbouring free cell's domain
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if cells[i] != CellKind::Exit {
                    continue;
                }
                let inherited = Dir4::ALL
                    .iter()
                    .filter_map(|d| {
                        let (dx, dy) = d.delta();
                        let p = Pos::new(x, y).offset(dx, dy)?;
                        (p.x < width && p.y < height).then_some(p)
                    })
                    .filter(|p| cells[p.y * width + p.x] == CellKind::Free)
                    .filter_map(|p| domain_of[p.y * width + p.x])
                    .min();
                match inherited {
                    Some(d) => domain_of[i] = Some(d),
                    None => {
                        return Err(Error::Validation(format!(
                            "exit cell ({x}, {y}) does not touch any free cell"
                        )))
                    }
                }
            }
        }

        let plan = FloorPlan {
            width,
            height,
            cell_size_mm,
            cells,
            domain_of,
        };
        plan.check_connected()?;
        Ok(plan)
    }

    fn check_connected(&self) -> Result<()> {
        let passable: Vec<usize> = (0..self.cells.len())
            .filter(|&i| self.cells[i].is_passable())
            .collect();
        let Some(&first) = passable.first() else {
            return Err(Error::Validation("plan has no free cells".into()));
        };
        if !self.cells.iter().any(|&k| k == CellKind::Free) {
            return Err(Error::Validation("plan has no free cells".into()));
        }
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([first]);
        seen[first] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            let p = self.pos_of(i);
            for n in self.passable_neighbors(p) {
                let j = self.index(n);
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        if reached != passable.len() {
            let stray = passable.iter().find(|&&i| !seen[i]).copied().unwrap();
            return Err(Error::Validation(format!(
                "free space is disconnected: cell {} is unreachable",
                self.pos_of(stray)
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size_mm(&self) -> f64 {
        self.cell_size_mm
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, p: Pos) -> usize {
        p.y * self.width + p.x
    }

    pub fn pos_of(&self, i: usize) -> Pos {
        Pos::new(i % self.width, i / self.width)
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x < self.width && p.y < self.height
    }

    /// Cell kind; positions outside the grid read as walls.
    pub fn kind(&self, p: Pos) -> CellKind {
        if self.in_bounds(p) {
            self.cells[self.index(p)]
        } else {
            CellKind::Wall
        }
    }

    fn kind_at(&self, x: i64, y: i64) -> CellKind {
        if x < 0 || y < 0 {
            CellKind::Wall
        } else {
            self.kind(Pos::new(x as usize, y as usize))
        }
    }

    pub fn is_passable(&self, p: Pos) -> bool {
        self.kind(p).is_passable()
    }

    pub fn domain(&self, p: Pos) -> Option<DomainId> {
        if self.in_bounds(p) {
            self.domain_of[self.index(p)]
        } else {
            None
        }
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    pub fn domain_labels(&self) -> &[Option<DomainId>] {
        &self.domain_of
    }

    /// Passable 4-neighbours of `p`, in N, E, S, W order.
    pub fn passable_neighbors(&self, p: Pos) -> impl Iterator<Item = Pos> + '_ {
        Dir4::ALL.into_iter().filter_map(move |d| {
            let (dx, dy) = d.delta();
            p.offset(dx, dy).filter(|&n| self.is_passable(n))
        })
    }

    /// Domains with at least one free cell, in id order.
    pub fn domains(&self) -> Vec<DomainId> {
        let mut present = [false; 6];
        for d in self.domain_of.iter().flatten() {
            present[d.index()] = true;
        }
        DomainId::ALL
            .into_iter()
            .filter(|d| present[d.index()])
            .collect()
    }

    pub fn cells_in(&self, d: DomainId) -> impl Iterator<Item = Pos> + '_ {
        (0..self.cells.len())
            .filter(move |&i| self.domain_of[i] == Some(d))
            .map(|i| self.pos_of(i))
    }

    pub fn exits(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.cells.len())
            .filter(|&i| self.cells[i] == CellKind::Exit)
            .map(|i| self.pos_of(i))
    }

    /// Serializes back to plan-file text. Exit cells are written as `X`.
    pub fn serialize(&self) -> String {
        let mut out = format!("{SCALE_KEY}={}\n", self.cell_size_mm);
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                out.push(match self.cells[i] {
                    CellKind::Wall => '#',
                    CellKind::Exit => 'X',
                    CellKind::Free => self.domain_of[i].map(DomainId::as_char).unwrap_or('?'),
                });
            }
            out.push('\n');
        }
        out
    }

    /// The plan rotated a quarter turn clockwise.
    pub fn rotated_cw(&self) -> FloorPlan {
        let (w, h) = (self.height, self.width);
        let mut cells = vec![CellKind::Wall; w * h];
        let mut doms = vec![None; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                let (nx, ny) = (self.height - 1 - y, x);
                cells[ny * w + nx] = self.cells[y * self.width + x];
                doms[ny * w + nx] = self.domain_of[y * self.width + x];
            }
        }
        FloorPlan {
            width: w,
            height: h,
            cell_size_mm: self.cell_size_mm,
            cells,
            domain_of: doms,
        }
    }

    /// Wall directions among the 4-neighbours of `pos`.
    pub fn contact_walls(&self, pos: Pos) -> Result<Vec<Dir4>> {
        if !self.in_bounds(pos) {
            return Err(Error::Argument(format!("position {pos} is outside the plan")));
        }
        if !self.is_passable(pos) {
            return Err(Error::Argument(format!("position {pos} is a wall cell")));
        }
        Ok(Dir4::ALL
            .into_iter()
            .filter(|d| {
                let (dx, dy) = d.delta();
                self.kind_at(pos.x as i64 + dx, pos.y as i64 + dy) == CellKind::Wall
            })
            .collect())
    }

    /// True when any of the eight cells around `pos` is a wall.
    pub fn wall_nearby(&self, pos: Pos) -> bool {
        let (x, y) = (pos.x as i64, pos.y as i64);
        (-1..=1).any(|dy| {
            (-1..=1).any(|dx| (dx, dy) != (0, 0) && self.kind_at(x + dx, y + dy) == CellKind::Wall)
        })
    }

    /// Corner tallies for every domain, indexed by [`DomainId::index`].
    ///
    /// Corners are lattice vertices where the wall/free boundary turns. Each
    /// vertex is classified from the 2x2 block of cells around it (cells
    /// outside the grid count as wall): one or three walls make a single
    /// corner (convex or reflex); two diagonally opposite walls make two.
    /// The corner goes to the smallest domain among the block's passable
    /// cells.
    pub fn corner_tallies(&self) -> [usize; 6] {
        let mut tally = [0usize; 6];
        for vy in 0..=self.height as i64 {
            for vx in 0..=self.width as i64 {
                let block = [(vx - 1, vy - 1), (vx, vy - 1), (vx - 1, vy), (vx, vy)];
                let wall = block.map(|(x, y)| self.kind_at(x, y) == CellKind::Wall);
                let walls = wall.iter().filter(|&&w| w).count();
                let corners = match walls {
                    1 | 3 => 1,
                    2 if wall[0] == wall[3] => 2,
                    _ => 0,
                };
                if corners == 0 {
                    continue;
                }
                let owner = block
                    .iter()
                    .zip(wall)
                    .filter(|(_, w)| !w)
                    .filter_map(|(&(x, y), _)| self.domain(Pos::new(x as usize, y as usize)))
                    .min();
                if let Some(d) = owner {
                    tally[d.index()] += corners;
                }
            }
        }
        tally
    }

    pub fn count_corners(&self, d: DomainId) -> usize {
        self.corner_tallies()[d.index()]
    }

    /// Corner-based complexity: each domain's share of all corners.
    pub fn complexity(&self) -> Result<ComplexityReport> {
        let tally = self.corner_tallies();
        let total: usize = tally.iter().sum();
        if total == 0 {
            return Err(Error::DegenerateGeometry);
        }
        let corners_per_domain: BTreeMap<DomainId, usize> = self
            .domains()
            .into_iter()
            .map(|d| (d, tally[d.index()]))
            .collect();
        let c = corners_per_domain
            .iter()
            .map(|(&d, &n)| (d, n as f64 / total as f64))
            .collect();
        Ok(ComplexityReport {
            corners_per_domain,
            total_corners: total,
            c,
        })
    }
}

fn parse_scale(header: &str) -> Result<f64> {
    let value = header
        .strip_prefix(SCALE_KEY)
        .and_then(|rest| rest.trim_start().strip_prefix('='))
        .ok_or_else(|| Error::format(1, format!("expected `{SCALE_KEY}=<decimal>` header")))?;
    let scale: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::format(1, format!("invalid scale value {:?}", value.trim())))?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::format(1, format!("scale must be positive, got {scale}")));
    }
    Ok(scale)
}

pub fn parse_plan(text: &str) -> Result<FloorPlan> {
    FloorPlan::parse(text)
}

/// The bundled building template.
pub fn ece_plan() -> FloorPlan {
    FloorPlan::parse(ECE_PLAN_TEXT).expect("bundled plan is valid")
}

/// Cells of the bundled heat-source footprint.
pub fn ece_thermal_source() -> Vec<Pos> {
    let (lo, hi) = ECE_THERMAL_SOURCE;
    (lo.y..=hi.y)
        .flat_map(|y| (lo.x..=hi.x).map(move |x| Pos::new(x, y)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub corners_per_domain: BTreeMap<DomainId, usize>,
    pub total_corners: usize,
    pub c: BTreeMap<DomainId, f64>,
}
