//! Backtracking search over constraint sides with conflict-directed
//! backjumping. Each assignment records the decisions it depends on
//! (`support`) and every choice used to derive it (`involved`).

use std::time::Instant;

use super::order::{DynamicOrder, OwnedEdge, FIXED};
use super::{Choice, SolveError, SolverInstance, SolverStats};
use crate::constraints::Side;

pub(super) struct Conflict {
    pub involved: Vec<u32>,
    pub cycles: Vec<Vec<OwnedEdge>>,
}

pub(super) enum Outcome {
    Sat { sides: Vec<Side>, order: Vec<u32> },
    Unsat(Conflict),
}

struct Entry {
    choice: u32,
    side: Side,
    level: u32,
    decision: bool,
    support: Vec<u32>,
    involved: Vec<u32>,
}

pub(super) struct Search<'a> {
    inst: &'a SolverInstance,
    order: DynamicOrder,
    slot: Vec<Option<usize>>,
    trail: Vec<Entry>,
    level: u32,
    visit: Vec<u32>,
    pos: Vec<usize>,
    cursor: usize,
    deadline: Option<Instant>,
    ticks: u64,
    pub stats: SolverStats,
}

const MAX_CYCLES: usize = 16;

fn union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn insert_sorted(v: &mut Vec<u32>, x: u32) {
    if let Err(p) = v.binary_search(&x) {
        v.insert(p, x);
    }
}

impl<'a> Search<'a> {
    /// Search restricted to the choices in `active`.
    pub fn new(inst: &'a SolverInstance, active: &'a [u32], deadline: Option<Instant>) -> Self {
        let mut visit: Vec<u32> = active.to_vec();
        visit.sort_by_key(|&c| {
            let ch = &inst.choices[c as usize];
            let lowest = ch
                .first
                .iter()
                .chain(&ch.second)
                .map(|&(a, b)| a.min(b))
                .min()
                .unwrap_or(u32::MAX);
            (ch.first.len() + ch.second.len(), lowest, c)
        });
        let mut pos = vec![usize::MAX; inst.choices.len()];
        for (i, &c) in visit.iter().enumerate() {
            pos[c as usize] = i;
        }
        Search {
            inst,
            order: DynamicOrder::new(inst.n),
            slot: vec![None; inst.choices.len()],
            trail: Vec::new(),
            level: 0,
            visit,
            pos,
            cursor: 0,
            deadline,
            ticks: 0,
            stats: SolverStats::default(),
        }
    }

    fn tick(&mut self) -> Result<(), SolveError> {
        self.ticks += 1;
        if self.ticks.is_multiple_of(256) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(SolveError::TimeBudgetExceeded);
                }
            }
        }
        Ok(())
    }

    fn choice(&self, c: u32) -> &'a Choice {
        &self.inst.choices[c as usize]
    }

    /// Adds the edges of one side, or returns the cycle that blocks it with
    /// nothing added.
    fn try_side(&mut self, c: u32, side: Side) -> Result<(), Vec<OwnedEdge>> {
        let edges = self.choice(c).side(side);
        for (i, &(a, b)) in edges.iter().enumerate() {
            if let Err(cycle) = self.order.add_edge(a, b, c) {
                for &(a2, b2) in edges[..i].iter().rev() {
                    self.order.remove_last(a2, b2);
                }
                return Err(cycle);
            }
        }
        Ok(())
    }

    fn remove_side(&mut self, c: u32, side: Side) {
        for &(a, b) in self.choice(c).side(side).iter().rev() {
            self.order.remove_last(a, b);
        }
    }

    /// Support and involved sets of everything a cycle depends on, other
    /// than choice `c` itself.
    fn blame(&self, cycle: &[OwnedEdge], c: u32) -> (Vec<u32>, Vec<u32>) {
        let mut support = Vec::new();
        let mut involved = Vec::new();
        for e in cycle {
            if e.owner == FIXED || e.owner == c {
                continue;
            }
            let entry = &self.trail[self.slot[e.owner as usize].expect("cycle edge owner is assigned")];
            support = union(&support, &entry.support);
            involved = union(&involved, &entry.involved);
        }
        (support, involved)
    }

    fn push(&mut self, c: u32, side: Side, decision: bool, support: Vec<u32>, mut involved: Vec<u32>) {
        insert_sorted(&mut involved, c);
        if decision {
            self.level += 1;
            self.stats.decisions += 1;
        } else {
            self.stats.implications += 1;
        }
        self.slot[c as usize] = Some(self.trail.len());
        self.trail.push(Entry {
            choice: c,
            side,
            level: self.level,
            decision,
            support,
            involved,
        });
    }

    fn undo_to(&mut self, level: u32) {
        while let Some(e) = self.trail.last() {
            if e.level <= level {
                break;
            }
            let e = self.trail.pop().unwrap();
            self.remove_side(e.choice, e.side);
            self.slot[e.choice as usize] = None;
            self.cursor = self.cursor.min(self.pos[e.choice as usize]);
        }
        self.level = level;
    }

    fn preferred(&self, c: u32) -> Side {
        let ch = self.choice(c);
        let backward = |edges: &[(u32, u32)]| edges.iter().filter(|&&(a, b)| !self.order.is_forward(a, b)).count();
        if backward(&ch.first) <= backward(&ch.second) {
            Side::First
        } else {
            Side::Second
        }
    }

    pub fn run(mut self) -> Result<(Outcome, SolverStats), SolveError> {
        let inst = self.inst;
        for &(a, b) in &inst.fixed {
            if let Err(cycle) = self.order.add_edge(a, b, FIXED) {
                let out = Outcome::Unsat(Conflict {
                    involved: Vec::new(),
                    cycles: vec![cycle],
                });
                return Ok((out, self.stats));
            }
        }
        if let Some(conflict) = self.sweep()? {
            return Ok((Outcome::Unsat(conflict), self.stats));
        }
        while self.cursor < self.visit.len() {
            self.tick()?;
            let c = self.visit[self.cursor];
            if self.slot[c as usize].is_some() {
                self.cursor += 1;
                continue;
            }
            let p = self.preferred(c);
            let cyc_p = match self.try_side(c, p) {
                Ok(()) => {
                    self.push(c, p, true, vec![c], Vec::new());
                    self.cursor += 1;
                    continue;
                }
                Err(cyc) => cyc,
            };
            let (sp, ip) = self.blame(&cyc_p, c);
            let q = p.other();
            let cyc_q = match self.try_side(c, q) {
                Ok(()) => {
                    self.push(c, q, false, sp, ip);
                    self.cursor += 1;
                    continue;
                }
                Err(cyc) => cyc,
            };
            let (sq, iq) = self.blame(&cyc_q, c);
            let mut involved = union(&ip, &iq);
            insert_sorted(&mut involved, c);
            if let Some(conflict) = self.resolve(union(&sp, &sq), involved, vec![cyc_p, cyc_q])? {
                return Ok((Outcome::Unsat(conflict), self.stats));
            }
        }
        let mut sides = vec![Side::First; self.inst.choices.len()];
        for e in &self.trail {
            sides[e.choice as usize] = e.side;
        }
        let order = self.order.order().to_vec();
        Ok((Outcome::Sat { sides, order }, self.stats))
    }

    /// Fixes every choice one of whose sides is blocked by the fixed edges
    /// and earlier fixings.
    fn sweep(&mut self) -> Result<Option<Conflict>, SolveError> {
        for i in 0..self.visit.len() {
            self.tick()?;
            let c = self.visit[i];
            let first = self.try_side(c, Side::First);
            if first.is_ok() {
                self.remove_side(c, Side::First);
            }
            let second = self.try_side(c, Side::Second);
            if second.is_ok() {
                self.remove_side(c, Side::Second);
            }
            match (first, second) {
                (Ok(()), Ok(())) => {}
                (Err(cyc), Ok(())) => self.fix(c, Side::Second, &cyc),
                (Ok(()), Err(cyc)) => self.fix(c, Side::First, &cyc),
                (Err(a), Err(b)) => {
                    let (_, ia) = self.blame(&a, c);
                    let (_, ib) = self.blame(&b, c);
                    let mut involved = union(&ia, &ib);
                    insert_sorted(&mut involved, c);
                    return Ok(Some(Conflict {
                        involved,
                        cycles: vec![a, b],
                    }));
                }
            }
        }
        Ok(None)
    }

    fn fix(&mut self, c: u32, side: Side, blocking: &[OwnedEdge]) {
        let (s, inv) = self.blame(blocking, c);
        self.try_side(c, side).expect("side just tested acyclic");
        self.push(c, side, false, s, inv);
    }

    /// Backjumps past the latest decision in `support` and asserts its other
    /// side. Returns the final conflict when no decision is left to blame.
    fn resolve(
        &mut self,
        mut support: Vec<u32>,
        mut involved: Vec<u32>,
        mut cycles: Vec<Vec<OwnedEdge>>,
    ) -> Result<Option<Conflict>, SolveError> {
        loop {
            self.stats.conflicts += 1;
            self.tick()?;
            let Some(&d) = support
                .iter()
                .max_by_key(|&&d| self.trail[self.slot[d as usize].unwrap()].level)
            else {
                return Ok(Some(Conflict { involved, cycles }));
            };
            let entry = &self.trail[self.slot[d as usize].unwrap()];
            debug_assert!(entry.decision);
            let (lvl, side) = (entry.level, entry.side);
            support.retain(|&x| x != d);
            self.undo_to(lvl - 1);
            self.stats.backjumps += 1;
            let flipped = side.other();
            match self.try_side(d, flipped) {
                Ok(()) => {
                    self.push(d, flipped, false, support, involved);
                    return Ok(None);
                }
                Err(cyc) => {
                    let (s, i) = self.blame(&cyc, d);
                    support = union(&support, &s);
                    involved = union(&involved, &i);
                    cycles.push(cyc);
                    if cycles.len() > MAX_CYCLES {
                        cycles.remove(0);
                    }
                }
            }
        }
    }
}
