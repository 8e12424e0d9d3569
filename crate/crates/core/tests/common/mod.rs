#![allow(dead_code)]

use std::collections::VecDeque;

use leechsim::{CellKind, DomainId, FloorPlan, Pos};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random walled plan of at most `max_side` cells a side. Free cells get
/// random labels from A..C; cells outside the largest free component are
/// walled off so the plan validates.
pub fn random_plan(seed: u64, max_side: usize) -> FloorPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(4..=max_side);
    let h = rng.random_range(4..=max_side);
    let density = rng.random_range(0.0..0.35);
    let mut cells = vec![CellKind::Wall; w * h];
    let mut doms = vec![None; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            if rng.random::<f64>() >= density {
                cells[y * w + x] = CellKind::Free;
                doms[y * w + x] = Some(DomainId::ALL[rng.random_range(0..3)]);
            }
        }
    }
    // guarantee at least one free cell
    let c = (h / 2) * w + w / 2;
    cells[c] = CellKind::Free;
    doms[c] = Some(DomainId::A);
    keep_component(w, h, &mut cells, &mut doms, c);
    FloorPlan::from_grid(w, h, 1.0, cells, doms).expect("generated plan is valid")
}

fn keep_component(w: usize, h: usize, cells: &mut [CellKind], doms: &mut [Option<DomainId>], from: usize) {
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            let j = ny * w + nx;
            if nx < w && ny < h && !seen[j] && cells[j] != CellKind::Wall {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    for i in 0..w * h {
        if !seen[i] {
            cells[i] = CellKind::Wall;
            doms[i] = None;
        }
    }
}

/// An open `n` x `n` room of domain A inside a one-cell wall.
pub fn open_square(n: usize) -> FloorPlan {
    let mut text = String::from("scale_mm_per_cell=1\n");
    text += &"#".repeat(n + 2);
    text += "\n";
    for _ in 0..n {
        text += "#";
        text += &"A".repeat(n);
        text += "#\n";
    }
    text += &"#".repeat(n + 2);
    text += "\n";
    FloorPlan::parse(&text).unwrap()
}

pub fn free_cells(plan: &FloorPlan) -> Vec<Pos> {
    (0..plan.len())
        .map(|i| plan.pos_of(i))
        .filter(|&p| plan.kind(p) == CellKind::Free)
        .collect()
}
