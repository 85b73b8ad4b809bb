//! Marching-squares isolines over node centres.
//!
//! Node `(x, y)` sits at point `(x + 0.5, y + 0.5)`. Cells span four
//! neighbouring nodes and never wrap around a periodic lattice. A node is
//! inside when its value is `>= level`. Crossing points are interpolated
//! linearly along cell edges; saddle cells are split by the average of their
//! four corners.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::network::FieldSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    /// Closed loops do not repeat their first point.
    pub closed: bool,
}

/// Edge identifier: `(y * w + x) << 1`, low bit 0 for the edge to `(x+1, y)`
/// and 1 for the edge to `(x, y+1)`. Sorting keys orders edges row-major.
type EdgeKey = u64;

fn h_edge(w: usize, x: usize, y: usize) -> EdgeKey {
    ((y * w + x) as u64) << 1
}

fn v_edge(w: usize, x: usize, y: usize) -> EdgeKey {
    (((y * w + x) as u64) << 1) | 1
}

fn crossing(snapshot: &FieldSnapshot, level: f64, key: EdgeKey) -> (f64, f64) {
    let w = snapshot.width();
    let node = (key >> 1) as usize;
    let (x, y) = (node % w, node / w);
    let (dx, dy) = if key & 1 == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
    let a = snapshot.values[node];
    let b = if key & 1 == 0 {
        snapshot.values[node + 1]
    } else {
        snapshot.values[node + w]
    };
    let t = (level - a) / (b - a);
    (x as f64 + 0.5 + t * dx, y as f64 + 0.5 + t * dy)
}

/// Contours of `snapshot` at `level`, as closed or boundary-terminated
/// polylines. Open chains come first, each starting at its smaller-keyed
/// end; loops follow, each starting at its smallest edge.
pub fn extract_isolines(snapshot: &FieldSnapshot, level: f64) -> Vec<Polyline> {
    let (w, h) = (snapshot.width(), snapshot.height());
    let inside = |x: usize, y: usize| snapshot.values[y * w + x] >= level;
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let (tl, tr, br, bl) = (inside(x, y), inside(x + 1, y), inside(x + 1, y + 1), inside(x, y + 1));
            let top = h_edge(w, x, y);
            let right = v_edge(w, x + 1, y);
            let bottom = h_edge(w, x, y + 1);
            let left = v_edge(w, x, y);
            let crossed: Vec<EdgeKey> = [(top, tl != tr), (right, tr != br), (bottom, bl != br), (left, tl != bl)]
                .into_iter()
                .filter_map(|(k, c)| c.then_some(k))
                .collect();
            match crossed.len() {
                2 => segments.push((crossed[0], crossed[1])),
                4 => {
                    let corners = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)];
                    let mean = corners.iter().map(|&(cx, cy)| snapshot.values[cy * w + cx]).sum::<f64>() / 4.0;
                    if (mean >= level) == tl {
                        // The tl-br diagonal is connected; cut off tr and bl.
                        segments.push((top, right));
                        segments.push((bottom, left));
                    } else {
                        segments.push((left, top));
                        segments.push((right, bottom));
                    }
                }
                _ => {}
            }
        }
    }

    let mut incident: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (i, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(i);
        incident.entry(b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let walk = |start: EdgeKey, used: &mut [bool]| -> Vec<EdgeKey> {
        let mut keys = vec![start];
        let mut at = start;
        while let Some(&s) = incident[&at].iter().find(|&&s| !used[s]) {
            used[s] = true;
            let (a, b) = segments[s];
            at = if a == at { b } else { a };
            keys.push(at);
        }
        keys
    };

    let mut lines = Vec::new();
    let ends: Vec<EdgeKey> = incident.iter().filter(|(_, s)| s.len() == 1).map(|(&k, _)| k).collect();
    for start in ends {
        if incident[&start].iter().all(|&s| used[s]) {
            continue;
        }
        let keys = walk(start, &mut used);
        lines.push(Polyline {
            points: keys.iter().map(|&k| crossing(snapshot, level, k)).collect(),
            closed: false,
        });
    }
    let starts: Vec<EdgeKey> = incident.keys().copied().collect();
    for start in starts {
        if incident[&start].iter().all(|&s| used[s]) {
            continue;
        }
        let mut keys = walk(start, &mut used);
        if keys.len() > 1 && keys.last() == keys.first() {
            keys.pop();
        }
        lines.push(Polyline {
            points: keys.iter().map(|&k| crossing(snapshot, level, k)).collect(),
            closed: true,
        });
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ModelParams;
    use crate::network::{build_grid, Boundary, DegreeClass, Geometry, Pivot, Simulation, Symmetry};

    fn field(w: usize, h: usize, values: Vec<f64>) -> FieldSnapshot {
        FieldSnapshot {
            geometry: Geometry {
                degree_class: DegreeClass::D4,
                width: w,
                height: h,
                boundary: Boundary::Bordered,
            },
            cycle: 0,
            values,
        }
    }

    /// Every sign change along a lattice edge, found by brute force.
    fn brute_crossings(f: &FieldSnapshot, level: f64) -> Vec<(f64, f64)> {
        let (w, h) = (f.width(), f.height());
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let a = f.at(x, y);
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if nx >= w || ny >= h {
                        continue;
                    }
                    let b = f.at(nx, ny);
                    if (a >= level) != (b >= level) {
                        let t = (level - a) / (b - a);
                        out.push((
                            x as f64 + 0.5 + t * (nx - x) as f64,
                            y as f64 + 0.5 + t * (ny - y) as f64,
                        ));
                    }
                }
            }
        }
        out
    }

    fn vertices(lines: &[Polyline]) -> Vec<(f64, f64)> {
        lines.iter().flat_map(|l| l.points.iter().copied()).collect()
    }

    fn contains(points: &[(f64, f64)], p: (f64, f64), tol: f64) -> bool {
        points.iter().any(|q| (q.0 - p.0).abs() <= tol && (q.1 - p.1).abs() <= tol)
    }

    #[test]
    fn field_below_level_has_no_contours() {
        assert!(extract_isolines(&field(4, 4, vec![0.2; 16]), 0.5).is_empty());
    }

    #[test]
    fn single_cell_plateau_gives_quad_loop() {
        let mut v = vec![0.0; 25];
        v[12] = 1.0;
        let lines = extract_isolines(&field(5, 5, v), 0.5);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        let mut pts = lines[0].points.clone();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pts, vec![(2.0, 2.5), (2.5, 2.0), (2.5, 3.0), (3.0, 2.5)]);
    }

    #[test]
    fn plateau_on_border_is_open() {
        let mut v = vec![0.0; 9];
        v[1] = 1.0;
        let lines = extract_isolines(&field(3, 3, v), 0.5);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].closed);
        assert_eq!(lines[0].points, vec![(1.0, 0.5), (1.5, 1.0), (2.0, 0.5)]);
    }

    #[test]
    fn saddle_follows_centre_average() {
        // Diagonal pair inside; centre average decides the connection.
        let high = field(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let low = field(2, 2, vec![0.6, 0.0, 0.0, 0.6]);
        let a = extract_isolines(&high, 0.5);
        let b = extract_isolines(&low, 0.5);
        assert_eq!((a.len(), b.len()), (2, 2));
        // Mean 0.5 joins tl and br, so the chains isolate tr and bl.
        assert!(a.iter().any(|l| l.points.contains(&(1.0, 0.5)) && l.points.contains(&(1.5, 1.0))));
        // Mean 0.3 isolates tl and br.
        assert!(b.iter().any(|l| l.points.iter().any(|p| p.1 == 0.5) && l.points.iter().any(|p| p.0 == 0.5)));
    }

    #[test]
    fn matches_brute_force_edge_scan() {
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..20 {
            let (w, h) = (7, 6);
            let values: Vec<f64> = (0..w * h)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect();
            let f = field(w, h, values);
            let lines = extract_isolines(&f, 0.5);
            let got = vertices(&lines);
            let want = brute_crossings(&f, 0.5);
            assert_eq!(got.len(), want.len());
            for p in &want {
                assert!(contains(&got, *p, 1e-12), "missing crossing {p:?}");
            }
            for line in &lines {
                for pair in line.points.windows(2) {
                    assert!((pair[0].0 - pair[1].0).abs() <= 1.0 && (pair[0].1 - pair[1].1).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn vertex_order_is_deterministic() {
        let v: Vec<f64> = (0..49).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let f = field(7, 7, v);
        assert_eq!(extract_isolines(&f, 0.45), extract_isolines(&f, 0.45));
    }

    #[test]
    fn engine_blob_contours_are_symmetric() {
        let net = build_grid(DegreeClass::D4, 15, 15, Boundary::Bordered).unwrap();
        let seed = net.node_at(7, 7).unwrap();
        let mut sim = Simulation::new(net, ModelParams::basic(3.0).with_lambda(1.0), 112.5, seed).unwrap();
        sim.run(12);
        let f = sim.field();
        let lines = extract_isolines(&f, 0.5);
        assert!(!lines.is_empty());
        let pts = vertices(&lines);
        let pivot = Pivot::at_node(7, 7);
        let syms = Symmetry::valid_for(&f.geometry, pivot);
        assert_eq!(syms.len(), 8);
        for sym in syms {
            for &(u, v) in &pts {
                // Map the point through the symmetry about (7.5, 7.5).
                let (mu, mv) = sym.map_point((u - 7.5, v - 7.5));
                assert!(contains(&pts, (mu + 7.5, mv + 7.5), 1e-9), "{sym:?} breaks ({u}, {v})");
            }
        }
    }
}
