use std::collections::VecDeque;

use crate::network::{FieldSnapshot, Pivot, Symmetry};
use crate::sum::{exact_sum, ExactSum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMetrics {
    /// Nodes with value at or above the level.
    pub support_area: usize,
    /// Connected components of the support under lattice adjacency.
    pub components: usize,
    /// Largest normalised deviation under the square's symmetries.
    pub asymmetry: f64,
}

pub fn support_area(snapshot: &FieldSnapshot, level: f64) -> usize {
    snapshot.values.iter().filter(|&&v| v >= level).count()
}

/// Counts connected components of `{v >= level}` using the lattice's own
/// neighbourhood (von Neumann for d4, Moore for d8).
pub fn connected_components(snapshot: &FieldSnapshot, level: f64) -> usize {
    let g = &snapshot.geometry;
    let inside: Vec<bool> = snapshot.values.iter().map(|&v| v >= level).collect();
    let mut seen = vec![false; inside.len()];
    let dirs = g.degree_class.directions();
    let mut queue = VecDeque::new();
    let mut components = 0;
    for start in 0..inside.len() {
        if !inside[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(node) = queue.pop_front() {
            for &d in dirs {
                if let Some(n) = g.neighbor(node, d) {
                    if inside[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
    }
    components
}

/// `max over symmetries s of sum_i |v_i - v_s(i)| / sum_i v_i`.
pub fn dihedral_asymmetry(snapshot: &FieldSnapshot, pivot: Pivot) -> f64 {
    let g = &snapshot.geometry;
    let total = exact_sum(snapshot.values.iter().copied());
    if total <= 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for sym in Symmetry::valid_for(g, pivot) {
        let mut acc = ExactSum::new();
        for y in 0..g.height {
            for x in 0..g.width {
                let v = snapshot.at(x, y);
                let mirrored = match sym.map(g, pivot, x, y) {
                    Some((mx, my)) => snapshot.at(mx, my),
                    // Falls off a bordered lattice: nothing to match against.
                    None => 0.0,
                };
                acc.add((v - mirrored).abs());
            }
        }
        worst = worst.max(acc.value() / total);
    }
    worst
}

/// Support area, component count and asymmetry about the default pivot.
pub fn shape_metrics(snapshot: &FieldSnapshot, level: f64) -> ShapeMetrics {
    ShapeMetrics {
        support_area: support_area(snapshot, level),
        components: connected_components(snapshot, level),
        asymmetry: dihedral_asymmetry(snapshot, snapshot.default_pivot()),
    }
}
