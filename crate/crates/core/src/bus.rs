//! Tile-to-tile command forwarding and power daisy-chain checks.
//!
//! Every tile links to its four grid neighbours; links can be removed to
//! model missing cables. Commands enter at the host tile and hop along links.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::TilePose;

/// Longest chain of tiles one power feed can supply.
pub const MAX_POWER_CHAIN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileAddress {
    pub row: usize,
    pub col: usize,
}

impl TileAddress {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    fn is_adjacent(&self, o: &TileAddress) -> bool {
        self.row.abs_diff(o.row) + self.col.abs_diff(o.col) == 1
    }
}

impl fmt::Display for TileAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("tile {0} is outside the {1}x{2} array")]
    OutOfBounds(TileAddress, usize, usize),
    #[error("tiles {0} and {1} are not neighbours")]
    NotNeighbours(TileAddress, TileAddress),
    #[error("tile {target} cannot be reached from {host}")]
    Unreachable { host: TileAddress, target: TileAddress },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkTopology {
    pub rows: usize,
    pub cols: usize,
    removed: BTreeSet<(TileAddress, TileAddress)>,
    pub host: TileAddress,
    /// Port of the host tile the controller is plugged into.
    pub host_port: Port,
    pub power_chain: Vec<TileAddress>,
}

fn edge(a: TileAddress, b: TileAddress) -> (TileAddress, TileAddress) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LinkTopology {
    /// All links present, host on the north-west tile.
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            removed: BTreeSet::new(),
            host: TileAddress::new(0, 0),
            host_port: Port::Left,
            power_chain: Vec::new(),
        }
    }

    pub fn contains(&self, a: TileAddress) -> bool {
        a.row < self.rows && a.col < self.cols
    }

    fn check(&self, a: TileAddress) -> Result<(), BusError> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(BusError::OutOfBounds(a, self.rows, self.cols))
        }
    }

    pub fn remove_link(&mut self, a: TileAddress, b: TileAddress) -> Result<(), BusError> {
        self.check(a)?;
        self.check(b)?;
        if !a.is_adjacent(&b) {
            return Err(BusError::NotNeighbours(a, b));
        }
        self.removed.insert(edge(a, b));
        Ok(())
    }

    /// Symmetric by construction.
    pub fn has_link(&self, a: TileAddress, b: TileAddress) -> bool {
        self.contains(a) && self.contains(b) && a.is_adjacent(&b) && !self.removed.contains(&edge(a, b))
    }

    pub fn links(&self, a: TileAddress) -> [bool; 4] {
        let step = |p: Port| self.neighbour(a, p).is_some_and(|b| self.has_link(a, b));
        [step(Port::Up), step(Port::Down), step(Port::Left), step(Port::Right)]
    }

    fn neighbour(&self, a: TileAddress, port: Port) -> Option<TileAddress> {
        let (r, c) = (a.row, a.col);
        let b = match port {
            Port::Up => TileAddress::new(r.checked_sub(1)?, c),
            Port::Down => TileAddress::new(r + 1, c),
            Port::Left => TileAddress::new(r, c.checked_sub(1)?),
            Port::Right => TileAddress::new(r, c + 1),
        };
        self.contains(b).then_some(b)
    }

    /// Linked neighbours, along-row moves first.
    fn linked_neighbours(&self, a: TileAddress) -> impl Iterator<Item = TileAddress> + '_ {
        [Port::Left, Port::Right, Port::Up, Port::Down]
            .into_iter()
            .filter_map(move |p| self.neighbour(a, p))
            .filter(move |b| self.has_link(a, *b))
    }
}

/// Hop list from `host` to `target` (host excluded). Travels along the host's
/// row first, then along the column; if a link on that route is missing the
/// shortest path over the remaining links is used.
pub fn route_command(topology: &LinkTopology, host: TileAddress, target: TileAddress) -> Result<Vec<TileAddress>, BusError> {
    topology.check(host)?;
    topology.check(target)?;
    let mut hops = Vec::new();
    let mut at = host;
    let mut intact = true;
    while at != target {
        let next = if at.col != target.col {
            TileAddress::new(at.row, if at.col < target.col { at.col + 1 } else { at.col - 1 })
        } else {
            TileAddress::new(if at.row < target.row { at.row + 1 } else { at.row - 1 }, at.col)
        };
        if !topology.has_link(at, next) {
            intact = false;
            break;
        }
        hops.push(next);
        at = next;
    }
    if intact {
        return Ok(hops);
    }
    shortest_route(topology, host, target)
}

fn shortest_route(topology: &LinkTopology, host: TileAddress, target: TileAddress) -> Result<Vec<TileAddress>, BusError> {
    let idx = |a: TileAddress| a.row * topology.cols + a.col;
    let mut prev: Vec<Option<TileAddress>> = vec![None; topology.rows * topology.cols];
    let mut seen = vec![false; prev.len()];
    let mut queue = VecDeque::from([host]);
    seen[idx(host)] = true;
    while let Some(a) = queue.pop_front() {
        if a == target {
            let mut path = vec![a];
            let mut cur = a;
            while let Some(p) = prev[idx(cur)] {
                if p == host {
                    break;
                }
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(path);
        }
        for b in topology.linked_neighbours(a) {
            if !seen[idx(b)] {
                seen[idx(b)] = true;
                prev[idx(b)] = Some(a);
                queue.push_back(b);
            }
        }
    }
    Err(BusError::Unreachable { host, target })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Pose(TilePose),
    Mode(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub target: TileAddress,
    pub payload: Payload,
    pub hops: usize,
}

/// Routes a payload from the topology's host and records the hop count.
pub fn send_command(topology: &LinkTopology, target: TileAddress, payload: Payload) -> Result<Command, BusError> {
    let route = route_command(topology, topology.host, target)?;
    Ok(Command { target, payload, hops: route.len() })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PowerViolation {
    #[error("power chain is longer than {MAX_POWER_CHAIN} tiles (tile at index {index})")]
    TooLong { index: usize },
    #[error("power chain index {index}: tile {tile} is outside the array")]
    OutOfBounds { index: usize, tile: TileAddress },
    #[error("power chain index {index}: no link between {from} and {to}")]
    MissingLink { index: usize, from: TileAddress, to: TileAddress },
    #[error("power chain index {index}: tile {tile} appears twice")]
    Repeated { index: usize, tile: TileAddress },
}

/// Checks the chain tile by tile and reports the first violation.
pub fn validate_power_chain(topology: &LinkTopology) -> Result<(), PowerViolation> {
    let chain = &topology.power_chain;
    let mut seen = BTreeSet::new();
    for (index, &tile) in chain.iter().enumerate() {
        if index >= MAX_POWER_CHAIN {
            return Err(PowerViolation::TooLong { index });
        }
        if !topology.contains(tile) {
            return Err(PowerViolation::OutOfBounds { index, tile });
        }
        if !seen.insert(tile) {
            return Err(PowerViolation::Repeated { index, tile });
        }
        if index > 0 && !topology.has_link(chain[index - 1], tile) {
            return Err(PowerViolation::MissingLink { index, from: chain[index - 1], to: tile });
        }
    }
    Ok(())
}

/// Serpentine chain covering the first `len` tiles row by row.
pub fn serpentine_chain(rows: usize, cols: usize, len: usize) -> Vec<TileAddress> {
    (0..rows)
        .flat_map(|r| {
            let cs: Vec<usize> = if r % 2 == 0 { (0..cols).collect() } else { (0..cols).rev().collect() };
            cs.into_iter().map(move |c| TileAddress::new(r, c))
        })
        .take(len)
        .collect()
}
