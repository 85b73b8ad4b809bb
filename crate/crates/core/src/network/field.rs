use super::{Boundary, DegreeClass, Geometry, Network, NetworkState};

/// A scalar per node, laid out row-major over the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub geometry: Geometry,
    pub cycle: u64,
    pub values: Vec<f64>,
}

fn geometry_of(network: &Network) -> Geometry {
    // Hand-built networks have no lattice; show them as one bordered row.
    network.geometry().copied().unwrap_or(Geometry {
        degree_class: DegreeClass::D2,
        width: network.node_count(),
        height: 1,
        boundary: Boundary::Bordered,
    })
}

impl FieldSnapshot {
    /// Total local mass `S_o + sum(O)` per node.
    pub fn mass(network: &Network, state: &NetworkState, cycle: u64) -> Self {
        Self {
            geometry: geometry_of(network),
            cycle,
            values: (0..network.node_count()).map(|i| state.node_mass(network, i)).collect(),
        }
    }

    /// Storage `S_o` only.
    pub fn storage(network: &Network, state: &NetworkState, cycle: u64) -> Self {
        Self {
            geometry: geometry_of(network),
            cycle,
            values: state.storage.clone(),
        }
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.geometry.width + x]
    }

    /// Index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    /// Default symmetry pivot: the geometric centre of a bordered lattice, or
    /// node `(w/2, h/2)` of a periodic one (the default seed position).
    pub fn default_pivot(&self) -> Pivot {
        let g = &self.geometry;
        match g.boundary {
            Boundary::Bordered => Pivot {
                x2: g.width as isize - 1,
                y2: g.height as isize - 1,
            },
            Boundary::Periodic => Pivot {
                x2: 2 * (g.width / 2) as isize,
                y2: 2 * (g.height / 2) as isize,
            },
        }
    }
}

/// Symmetry centre in doubled coordinates, so half-integer centres are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pivot {
    pub x2: isize,
    pub y2: isize,
}

impl Pivot {
    pub fn at_node(x: usize, y: usize) -> Self {
        Self {
            x2: 2 * x as isize,
            y2: 2 * y as isize,
        }
    }
}

/// The eight symmetries of the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symmetry {
    Identity,
    Rotate90,
    Rotate180,
    Rotate270,
    FlipX,
    FlipY,
    Transpose,
    AntiTranspose,
}

impl Symmetry {
    pub const ALL: [Symmetry; 8] = [
        Symmetry::Identity,
        Symmetry::Rotate90,
        Symmetry::Rotate180,
        Symmetry::Rotate270,
        Symmetry::FlipX,
        Symmetry::FlipY,
        Symmetry::Transpose,
        Symmetry::AntiTranspose,
    ];

    fn swaps_axes(self) -> bool {
        matches!(
            self,
            Symmetry::Rotate90 | Symmetry::Rotate270 | Symmetry::Transpose | Symmetry::AntiTranspose
        )
    }

    /// Symmetries that map the lattice onto itself about `pivot`.
    pub fn valid_for(geometry: &Geometry, pivot: Pivot) -> Vec<Symmetry> {
        let axis_swap_ok = geometry.width == geometry.height
            && (pivot.x2 - pivot.y2).rem_euclid(2) == 0
            && (geometry.boundary == Boundary::Periodic || pivot.x2 == pivot.y2);
        Self::ALL
            .into_iter()
            .filter(|s| !s.swaps_axes() || axis_swap_ok)
            .collect()
    }

    fn apply_offset(self, dx: isize, dy: isize) -> (isize, isize) {
        match self {
            Symmetry::Identity => (dx, dy),
            Symmetry::Rotate90 => (-dy, dx),
            Symmetry::Rotate180 => (-dx, -dy),
            Symmetry::Rotate270 => (dy, -dx),
            Symmetry::FlipX => (-dx, dy),
            Symmetry::FlipY => (dx, -dy),
            Symmetry::Transpose => (dy, dx),
            Symmetry::AntiTranspose => (-dy, -dx),
        }
    }

    /// Image of a point given as an offset from the pivot.
    pub fn map_point(self, (dx, dy): (f64, f64)) -> (f64, f64) {
        match self {
            Symmetry::Identity => (dx, dy),
            Symmetry::Rotate90 => (-dy, dx),
            Symmetry::Rotate180 => (-dx, -dy),
            Symmetry::Rotate270 => (dy, -dx),
            Symmetry::FlipX => (-dx, dy),
            Symmetry::FlipY => (dx, -dy),
            Symmetry::Transpose => (dy, dx),
            Symmetry::AntiTranspose => (-dy, -dx),
        }
    }

    /// Image of node `(x, y)`; `None` if it falls outside a bordered lattice.
    pub fn map(self, geometry: &Geometry, pivot: Pivot, x: usize, y: usize) -> Option<(usize, usize)> {
        let (dx, dy) = (2 * x as isize - pivot.x2, 2 * y as isize - pivot.y2);
        let (ex, ey) = self.apply_offset(dx, dy);
        let (nx2, ny2) = (ex + pivot.x2, ey + pivot.y2);
        if nx2.rem_euclid(2) != 0 || ny2.rem_euclid(2) != 0 {
            return None;
        }
        let (nx, ny) = (nx2 / 2, ny2 / 2);
        let (w, h) = (geometry.width as isize, geometry.height as isize);
        match geometry.boundary {
            Boundary::Periodic => Some((nx.rem_euclid(w) as usize, ny.rem_euclid(h) as usize)),
            Boundary::Bordered => ((0..w).contains(&nx) && (0..h).contains(&ny)).then_some((nx as usize, ny as usize)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: usize, h: usize, boundary: Boundary) -> Geometry {
        Geometry {
            degree_class: DegreeClass::D4,
            width: w,
            height: h,
            boundary,
        }
    }

    #[test]
    fn bordered_symmetries_are_permutations() {
        let g = geom(5, 5, Boundary::Bordered);
        let pivot = Pivot { x2: 4, y2: 4 };
        for s in Symmetry::valid_for(&g, pivot) {
            let mut seen = vec![false; 25];
            for y in 0..5 {
                for x in 0..5 {
                    let (mx, my) = s.map(&g, pivot, x, y).unwrap();
                    seen[my * 5 + mx] = true;
                }
            }
            assert!(seen.iter().all(|&b| b), "{s:?}");
        }
        assert_eq!(Symmetry::Rotate90.map(&g, pivot, 4, 2), Some((2, 4)));
    }

    #[test]
    fn rectangular_lattice_has_four_symmetries() {
        let g = geom(6, 4, Boundary::Bordered);
        assert_eq!(Symmetry::valid_for(&g, Pivot { x2: 5, y2: 3 }).len(), 4);
    }

    #[test]
    fn periodic_wraps() {
        let g = geom(4, 4, Boundary::Periodic);
        let pivot = Pivot::at_node(2, 2);
        assert_eq!(Symmetry::FlipX.map(&g, pivot, 0, 1), Some((0, 1)));
        assert_eq!(Symmetry::FlipX.map(&g, pivot, 1, 1), Some((3, 1)));
    }
}
