//! Acyclicity solver for polygraphs: pick one side of every choice so that
//! the fixed edges plus all picked sides form a DAG.

pub mod order;
mod search;

use std::collections::HashMap;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{Constraint, ConstraintId, Side};
use crate::error::ParseError;
use crate::graph::DiGraph;
use crate::history::{ExtendedHistory, TxnId};

pub use order::{OwnedEdge, FIXED};
use search::{Outcome, Search};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Choice {
    pub first: Vec<(u32, u32)>,
    pub second: Vec<(u32, u32)>,
}

impl Choice {
    pub fn side(&self, s: Side) -> &[(u32, u32)] {
        match s {
            Side::First => &self.first,
            Side::Second => &self.second,
        }
    }
}

/// Vertices `0..n`, fixed edges, and binary choices between edge sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolverInstance {
    pub n: usize,
    pub fixed: Vec<(u32, u32)>,
    pub choices: Vec<Choice>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    /// Wall-clock limit for the whole call.
    pub time_budget: Option<Duration>,
    /// Cores larger than this are reported without shrinking.
    pub shrink_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_budget: None,
            shrink_limit: 200,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("time budget exceeded")]
    TimeBudgetExceeded,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub decisions: u64,
    pub implications: u64,
    pub conflicts: u64,
    pub backjumps: u64,
    pub shrink_solves: u64,
}

impl SolverStats {
    fn absorb(&mut self, o: &SolverStats) {
        self.decisions += o.decisions;
        self.implications += o.implications;
        self.conflicts += o.conflicts;
        self.backjumps += o.backjumps;
        self.shrink_solves += o.shrink_solves;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub sides: Vec<Side>,
    /// A topological order of the fixed edges plus the chosen sides.
    pub order: Vec<u32>,
}

/// A subset of choices that is unsatisfiable together with the fixed edges,
/// and cycles witnessing the final conflict. Empty `choices` means the fixed
/// edges alone are cyclic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Core {
    pub choices: Vec<u32>,
    pub cycles: Vec<Vec<OwnedEdge>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverVerdict {
    Sat(Model),
    Unsat(Core),
}

pub fn solve(inst: &SolverInstance, opts: SolveOptions) -> Result<(SolverVerdict, SolverStats), SolveError> {
    let deadline = opts.time_budget.map(|b| Instant::now() + b);
    let all: Vec<u32> = (0..inst.choices.len() as u32).collect();
    let (outcome, mut stats) = Search::new(inst, &all, deadline).run()?;
    let conflict = match outcome {
        Outcome::Sat { sides, order } => return Ok((SolverVerdict::Sat(Model { sides, order }), stats)),
        Outcome::Unsat(c) => c,
    };
    let mut core = conflict.involved;
    let mut cycles = conflict.cycles;
    if core.len() <= opts.shrink_limit && !core.is_empty() {
        let mut i = 0;
        let mut verified = false;
        while i < core.len() {
            let mut trial = core.clone();
            trial.remove(i);
            stats.shrink_solves += 1;
            match Search::new(inst, &trial, deadline).run() {
                Ok((Outcome::Unsat(c), s)) => {
                    stats.absorb(&s);
                    core = c.involved;
                    cycles = c.cycles;
                    verified = true;
                    i = core.partition_point(|&x| x < trial.get(i).copied().unwrap_or(u32::MAX));
                }
                Ok((Outcome::Sat { .. }, s)) => {
                    stats.absorb(&s);
                    i += 1;
                }
                Err(SolveError::TimeBudgetExceeded) => break,
            }
        }
        if !verified {
            if let Ok((Outcome::Unsat(c), s)) = Search::new(inst, &core, deadline).run() {
                stats.absorb(&s);
                core = c.involved;
                cycles = c.cycles;
            }
        }
    }
    Ok((SolverVerdict::Unsat(Core { choices: core, cycles }), stats))
}

impl SolverInstance {
    /// Whether picking `sides` yields an acyclic graph.
    pub fn is_acyclic_with(&self, sides: &[Side]) -> bool {
        let mut g = DiGraph::from_edges(self.n, self.fixed.iter().copied());
        for (c, s) in self.choices.iter().zip(sides) {
            for &(a, b) in c.side(*s) {
                g.add_edge(a, b);
            }
        }
        g.is_acyclic()
    }

    /// Text form: `n N`, one `e a b` per fixed edge, and per choice a
    /// `c |A| |B|` line followed by its `a`/`b` edge lines.
    pub fn export(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "n {}", self.n)?;
        for (a, b) in &self.fixed {
            writeln!(w, "e {a} {b}")?;
        }
        for c in &self.choices {
            writeln!(w, "c {} {}", c.first.len(), c.second.len())?;
            for (a, b) in &c.first {
                writeln!(w, "a {a} {b}")?;
            }
            for (a, b) in &c.second {
                writeln!(w, "b {a} {b}")?;
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut inst = SolverInstance::default();
        let mut seen_n = false;
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let mut parts = line.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            let nums: Vec<u64> = parts
                .map(|p| {
                    p.parse::<u64>()
                        .map_err(|_| ParseError::syntax(ln, format!("bad number {p:?}")))
                })
                .collect::<Result<_, _>>()?;
            let pair = |nums: &[u64]| -> Result<(u32, u32), ParseError> {
                match nums {
                    [a, b] if (*a as usize) < inst.n && (*b as usize) < inst.n => Ok((*a as u32, *b as u32)),
                    [_, _] => Err(ParseError::syntax(ln, "vertex out of range")),
                    _ => Err(ParseError::syntax(ln, "expected two vertices")),
                }
            };
            match tag {
                "n" if !seen_n => {
                    let [n] = nums[..] else {
                        return Err(ParseError::syntax(ln, "expected vertex count"));
                    };
                    inst.n = n as usize;
                    seen_n = true;
                }
                "e" => {
                    let e = pair(&nums)?;
                    inst.fixed.push(e);
                }
                "c" => {
                    if nums.len() != 2 {
                        return Err(ParseError::syntax(ln, "expected two side sizes"));
                    }
                    inst.choices.push(Choice::default());
                }
                "a" | "b" => {
                    let e = pair(&nums)?;
                    let c = inst
                        .choices
                        .last_mut()
                        .ok_or_else(|| ParseError::syntax(ln, "side edge before any choice"))?;
                    if tag == "a" {
                        c.first.push(e)
                    } else {
                        c.second.push(e)
                    }
                }
                _ => return Err(ParseError::syntax(ln, format!("unexpected line tag {tag:?}"))),
            }
        }
        Ok(inst)
    }
}

/// A polygraph mapped to dense vertices.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub instance: SolverInstance,
    pub ids: Vec<TxnId>,
    pub index: HashMap<TxnId, u32>,
    pub constraint_ids: Vec<ConstraintId>,
}

impl Encoding {
    pub fn edge_ids(&self, (a, b): (u32, u32)) -> (TxnId, TxnId) {
        (self.ids[a as usize], self.ids[b as usize])
    }
}

/// Known graph edges become fixed edges, each constraint a choice.
pub fn encode(e: &ExtendedHistory, cons: &[Constraint]) -> Encoding {
    let ids: Vec<TxnId> = e.graph().nodes().collect();
    let index: HashMap<TxnId, u32> = ids.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
    let fixed = e.graph().edges().map(|(a, b, _)| (index[&a], index[&b])).collect();
    let map = |edges: &[(TxnId, TxnId)]| edges.iter().map(|(a, b)| (index[a], index[b])).collect();
    let choices = cons
        .iter()
        .map(|c| Choice {
            first: map(&c.first),
            second: map(&c.second),
        })
        .collect();
    Encoding {
        instance: SolverInstance {
            n: ids.len(),
            fixed,
            choices,
        },
        ids,
        index,
        constraint_ids: cons.iter().map(|c| c.id).collect(),
    }
}

/// Deterministic serial order for a model: smallest index first among ready
/// vertices.
pub fn extract_schedule(inst: &SolverInstance, sides: &[Side]) -> Option<Vec<u32>> {
    let mut g = DiGraph::from_edges(inst.n, inst.fixed.iter().copied());
    for (c, s) in inst.choices.iter().zip(sides) {
        for &(a, b) in c.side(*s) {
            g.add_edge(a, b);
        }
    }
    g.topo_order().ok()
}
