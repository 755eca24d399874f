//! Terrain, uniform placement, random-waypoint mobility and unit-disk
//! connectivity.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::RngStream;
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Terrain {
    pub width: f64,
    pub height: f64,
}

impl Default for Terrain {
    fn default() -> Self {
        Terrain { width: 1000.0, height: 1000.0 }
    }
}

impl Terrain {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    fn random_point(&self, rng: &mut RngStream) -> Point {
        Point {
            x: rng.random_range(0.0..=self.width),
            y: rng.random_range(0.0..=self.height),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Speed band for waypoint legs, metres per second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedRange {
    pub min: f64,
    pub max: f64,
}

impl Default for SpeedRange {
    fn default() -> Self {
        SpeedRange { min: 5.0, max: 20.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodePosition {
    pub node_id: NodeId,
    pub pos: Point,
    pub waypoint: Point,
    pub speed: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("cannot place zero nodes")]
    NoNodes,
}

/// Independent uniform draws per coordinate. Nodes start parked on their own
/// position, so the first mobility step draws their first leg.
pub fn place_uniform(
    n: usize,
    terrain: &Terrain,
    rng: &mut RngStream,
) -> Result<Vec<NodePosition>, FieldError> {
    if n == 0 {
        return Err(FieldError::NoNodes);
    }
    Ok((0..n)
        .map(|i| {
            let pos = terrain.random_point(rng);
            NodePosition { node_id: NodeId(i as u32), pos, waypoint: pos, speed: 0.0 }
        })
        .collect())
}

/// One random-waypoint step with zero pause time.
///
/// A node sitting on its waypoint draws a new leg (target and speed) and stays
/// put for this step; otherwise it moves toward the waypoint, stopping on it.
pub fn advance_mobility(
    node: NodePosition,
    dt: f64,
    terrain: &Terrain,
    speeds: SpeedRange,
    rng: &mut RngStream,
) -> NodePosition {
    let mut next = node;
    if node.pos == node.waypoint {
        next.waypoint = terrain.random_point(rng);
        next.speed = if speeds.max > speeds.min {
            rng.random_range(speeds.min..=speeds.max)
        } else {
            speeds.min
        };
        return next;
    }
    let remaining = node.pos.distance(node.waypoint);
    let step = node.speed * dt;
    if step >= remaining {
        next.pos = node.waypoint;
    } else {
        let f = step / remaining;
        next.pos = Point {
            x: node.pos.x + (node.waypoint.x - node.pos.x) * f,
            y: node.pos.y + (node.waypoint.y - node.pos.y) * f,
        };
    }
    next
}

/// Every other node within `range` metres, boundary inclusive, in id order.
pub fn neighbors(node: NodeId, all: &[Point], range: f64) -> Vec<NodeId> {
    let me = all[node.index()];
    all.iter()
        .enumerate()
        .filter(|&(j, p)| j != node.index() && me.distance(*p) <= range)
        .map(|(j, _)| NodeId(j as u32))
        .collect()
}

pub fn in_range(a: Point, b: Point, range: f64) -> bool {
    a.distance(b) <= range
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{derive_rng, StreamLabel};

    #[test]
    fn zero_nodes_rejected() {
        let mut rng = derive_rng(1, StreamLabel::Placement);
        assert_eq!(place_uniform(0, &Terrain::default(), &mut rng), Err(FieldError::NoNodes));
    }

    #[test]
    fn single_node_in_bounds() {
        let mut rng = derive_rng(9, StreamLabel::Placement);
        let t = Terrain::default();
        let p = place_uniform(1, &t, &mut rng).unwrap();
        assert_eq!(p.len(), 1);
        assert!(t.contains(p[0].pos));
    }

    #[test]
    fn placement_deterministic() {
        let t = Terrain::default();
        let a = place_uniform(50, &t, &mut derive_rng(5, StreamLabel::Placement)).unwrap();
        let b = place_uniform(50, &t, &mut derive_rng(5, StreamLabel::Placement)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn placement_chi_square_uniform() {
        // 100 cells, 99 dof; the 0.99 quantile of chi2(99) is 134.642.
        let t = Terrain::default();
        let pts = place_uniform(10_000, &t, &mut derive_rng(2024, StreamLabel::Placement)).unwrap();
        let mut cells = [0u32; 100];
        for p in &pts {
            let cx = ((p.pos.x / 100.0) as usize).min(9);
            let cy = ((p.pos.y / 100.0) as usize).min(9);
            cells[cy * 10 + cx] += 1;
        }
        let expected = 100.0;
        let chi2: f64 = cells.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 134.642, "chi2 = {chi2}");
    }

    #[test]
    fn straight_line_step() {
        let mut rng = derive_rng(1, StreamLabel::Mobility);
        let n = NodePosition {
            node_id: NodeId(0),
            pos: Point::new(0.0, 0.0),
            waypoint: Point::new(100.0, 0.0),
            speed: 10.0,
        };
        let m = advance_mobility(n, 1.0, &Terrain::default(), SpeedRange::default(), &mut rng);
        assert!((m.pos.x - 10.0).abs() < 1e-12 && m.pos.y == 0.0);
    }

    #[test]
    fn arrival_draws_new_leg_without_moving() {
        let mut rng = derive_rng(3, StreamLabel::Mobility);
        let p = Point::new(20.0, 30.0);
        let n = NodePosition { node_id: NodeId(0), pos: p, waypoint: p, speed: 7.0 };
        let m = advance_mobility(n, 0.1, &Terrain::default(), SpeedRange::default(), &mut rng);
        assert_eq!(m.pos, p);
        assert!(m.speed >= 5.0 && m.speed <= 20.0);
        assert_ne!(m.waypoint, p);
    }

    #[test]
    fn distance_bounded_by_speed_times_time() {
        let t = Terrain::default();
        let speeds = SpeedRange { min: 5.0, max: 5.0 };
        let mut rng = derive_rng(11, StreamLabel::Mobility);
        let mut n = place_uniform(1, &t, &mut derive_rng(11, StreamLabel::Placement)).unwrap()[0];
        let mut travelled = 0.0;
        for _ in 0..1000 {
            let next = advance_mobility(n, 0.1, &t, speeds, &mut rng);
            travelled += n.pos.distance(next.pos);
            assert!(t.contains(next.pos));
            n = next;
        }
        assert!(travelled <= 500.0 + 1e-6, "travelled {travelled}");
    }

    #[test]
    fn boundary_inclusive() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(250.0, 0.0), Point::new(500.1, 0.0)];
        assert_eq!(neighbors(NodeId(0), &pts, 250.0), vec![NodeId(1)]);
        assert_eq!(neighbors(NodeId(2), &pts, 250.0), Vec::<NodeId>::new());
        let far = vec![Point::new(0.0, 0.0), Point::new(250.1, 0.0)];
        assert!(neighbors(NodeId(0), &far, 250.0).is_empty());
    }

    #[test]
    fn neighbors_match_all_pairs_scan() {
        let t = Terrain::default();
        let pts: Vec<Point> = place_uniform(50, &t, &mut derive_rng(77, StreamLabel::Placement))
            .unwrap()
            .iter()
            .map(|n| n.pos)
            .collect();
        for i in 0..pts.len() {
            let mut brute = vec![];
            for j in 0..pts.len() {
                let dx = pts[i].x - pts[j].x;
                let dy = pts[i].y - pts[j].y;
                if i != j && dx * dx + dy * dy <= 250.0 * 250.0 {
                    brute.push(NodeId(j as u32));
                }
            }
            assert_eq!(neighbors(NodeId(i as u32), &pts, 250.0), brute);
        }
    }
}
