use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Link, Network};
use crate::error::KinonError;

/// Regular lattice family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum DegreeClass {
    /// 1-D chain or ring.
    D2,
    /// Von Neumann neighbourhood.
    D4,
    /// Moore neighbourhood.
    D8,
}

impl DegreeClass {
    pub fn degree(self) -> usize {
        match self {
            DegreeClass::D2 => 2,
            DegreeClass::D4 => 4,
            DegreeClass::D8 => 8,
        }
    }

    /// Link directions in slot order: d2 = (W, E); d4 = (N, E, S, W);
    /// d8 = d4 followed by (NE, SE, SW, NW).
    pub fn directions(self) -> &'static [Direction] {
        use Direction::*;
        match self {
            DegreeClass::D2 => &[W, E],
            DegreeClass::D4 => &[N, E, S, W],
            DegreeClass::D8 => &[N, E, S, W, NE, SE, SW, NW],
        }
    }
}

impl TryFrom<u32> for DegreeClass {
    type Error = KinonError;

    fn try_from(d: u32) -> Result<Self, Self::Error> {
        match d {
            2 => Ok(DegreeClass::D2),
            4 => Ok(DegreeClass::D4),
            8 => Ok(DegreeClass::D8),
            other => Err(KinonError::UnsupportedDegree(other)),
        }
    }
}

impl From<DegreeClass> for u32 {
    fn from(d: DegreeClass) -> u32 {
        d.degree() as u32
    }
}

impl fmt::Display for DegreeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.degree())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Torus (ring for d2).
    Periodic,
    /// Links leaving the lattice are removed.
    Bordered,
}

/// Lattice direction; y grows downwards (image rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    N,
    E,
    S,
    W,
    NE,
    SE,
    SW,
    NW,
}

impl Direction {
    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::N => (0, -1),
            Direction::E => (1, 0),
            Direction::S => (0, 1),
            Direction::W => (-1, 0),
            Direction::NE => (1, -1),
            Direction::SE => (1, 1),
            Direction::SW => (-1, 1),
            Direction::NW => (-1, -1),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::E => Direction::W,
            Direction::S => Direction::N,
            Direction::W => Direction::E,
            Direction::NE => Direction::SW,
            Direction::SE => Direction::NW,
            Direction::SW => Direction::NE,
            Direction::NW => Direction::SE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub degree_class: DegreeClass,
    pub width: usize,
    pub height: usize,
    pub boundary: Boundary,
}

impl Geometry {
    pub fn node_count(&self) -> usize {
        self.width * self.height
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node % self.width, node / self.width)
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Neighbour in a direction, honouring the boundary mode.
    pub fn neighbor(&self, node: usize, dir: Direction) -> Option<usize> {
        let (x, y) = self.coords(node);
        let (dx, dy) = dir.offset();
        let shift = |v: usize, d: isize, len: usize| -> Option<usize> {
            let moved = v as isize + d;
            match self.boundary {
                Boundary::Periodic => Some(moved.rem_euclid(len as isize) as usize),
                Boundary::Bordered => (0..len as isize).contains(&moved).then_some(moved as usize),
            }
        };
        Some(self.index(shift(x, dx, self.width)?, shift(y, dy, self.height)?))
    }
}

/// Builds a regular lattice. d2 lattices are one row tall; `height` must be 1.
pub fn build_grid(
    degree_class: DegreeClass,
    width: usize,
    height: usize,
    boundary: Boundary,
) -> Result<Network, KinonError> {
    let too_small = || KinonError::GridTooSmall {
        degree: degree_class.degree() as u32,
        width,
        height,
    };
    match degree_class {
        DegreeClass::D2 if width < 3 || height != 1 => return Err(too_small()),
        DegreeClass::D4 | DegreeClass::D8 if width < 3 || height < 3 => return Err(too_small()),
        _ => {}
    }
    let geometry = Geometry {
        degree_class,
        width,
        height,
        boundary,
    };
    let dirs = degree_class.directions();

    // Live directions per node, in canonical order.
    let live: Vec<Vec<(Direction, usize)>> = (0..geometry.node_count())
        .map(|node| {
            dirs.iter()
                .filter_map(|&d| geometry.neighbor(node, d).map(|t| (d, t)))
                .collect()
        })
        .collect();

    let adjacency: Vec<Vec<(Link, Option<Direction>)>> = live
        .iter()
        .map(|links| {
            links
                .iter()
                .map(|&(dir, target)| {
                    let back = dir.opposite();
                    let reciprocal_slot = live[target]
                        .iter()
                        .position(|&(d, _)| d == back)
                        .expect("lattice neighbour relation is symmetric");
                    (
                        Link {
                            target,
                            reciprocal_slot,
                        },
                        Some(dir),
                    )
                })
                .collect()
        })
        .collect();
    Network::assemble(&adjacency, Some(geometry))
}
