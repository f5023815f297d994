//! Node placement, random waypoint movement and unit-disk connectivity.

use rand::Rng;

use crate::config::{MobilityConfig, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Symmetric adjacency under a fixed reception range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connectivity {
    n: usize,
    adj: Vec<bool>,
    neighbors: Vec<Vec<u32>>,
}

impl Connectivity {
    pub fn compute(positions: &[Point], range: f64) -> Self {
        let n = positions.len();
        let mut adj = vec![false; n * n];
        let mut neighbors = vec![Vec::new(); n];
        for a in 0..n {
            for b in a + 1..n {
                if positions[a].distance(&positions[b]) <= range {
                    adj[a * n + b] = true;
                    adj[b * n + a] = true;
                    neighbors[a].push(b as u32);
                    neighbors[b].push(a as u32);
                }
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Connectivity { n, adj, neighbors }
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.n + b]
    }

    /// Ascending neighbor ids.
    pub fn neighbors(&self, a: usize) -> &[u32] {
        &self.neighbors[a]
    }

    pub fn mean_degree(&self) -> f64 {
        self.neighbors.iter().map(Vec::len).sum::<usize>() as f64 / self.n as f64
    }
}

/// Initial positions: fixed if configured, otherwise uniform over the area.
pub fn initial_positions<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<Point> {
    match &cfg.positions {
        Some(fixed) => fixed.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        None => (0..cfg.node_count)
            .map(|_| Point::new(rng.random_range(0.0..=cfg.width), rng.random_range(0.0..=cfg.height)))
            .collect(),
    }
}

/// Positions plus connectivity at time zero.
pub fn build_topology<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> (Vec<Point>, Connectivity) {
    let pos = initial_positions(cfg, rng);
    let conn = Connectivity::compute(&pos, cfg.reception_range);
    (pos, conn)
}

/// Random waypoint state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub position: Point,
    pub target: Point,
    pub speed: f64,
    /// Remaining pause at the current waypoint.
    pub pause_left: f64,
}

impl Waypoint {
    pub fn start<R: Rng>(position: Point, area: (f64, f64), m: &MobilityConfig, rng: &mut R) -> Self {
        let mut w = Waypoint { position, target: position, speed: 0.0, pause_left: 0.0 };
        w.draw_leg(area, m, rng);
        w
    }

    fn draw_leg<R: Rng>(&mut self, area: (f64, f64), m: &MobilityConfig, rng: &mut R) {
        self.target = Point::new(rng.random_range(0.0..=area.0), rng.random_range(0.0..=area.1));
        self.speed = if m.speed_max > m.speed_min { rng.random_range(m.speed_min..=m.speed_max) } else { m.speed_min };
    }

    /// Moves for `dt` seconds: travel toward the target, pause on arrival,
    /// then draw a new uniform target and speed.
    pub fn advance<R: Rng>(&mut self, dt: f64, area: (f64, f64), m: &MobilityConfig, rng: &mut R) {
        let mut left = dt;
        while left > 0.0 {
            if self.pause_left > 0.0 {
                let p = self.pause_left.min(left);
                self.pause_left -= p;
                left -= p;
                if self.pause_left > 0.0 {
                    break;
                }
                self.draw_leg(area, m, rng);
                continue;
            }
            if self.speed <= 0.0 {
                break;
            }
            let dist = self.position.distance(&self.target);
            let reach = self.speed * left;
            if reach < dist {
                let f = reach / dist;
                self.position.x += (self.target.x - self.position.x) * f;
                self.position.y += (self.target.y - self.position.y) * f;
                break;
            }
            left -= dist / self.speed;
            self.position = self.target;
            self.pause_left = m.pause;
            if m.pause == 0.0 {
                self.draw_leg(area, m, rng);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_vector_kinematics() {
        let m = MobilityConfig { speed_min: 5.0, speed_max: 5.0, pause: 10.0, update_interval: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = Waypoint { position: Point::new(0.0, 0.0), target: Point::new(30.0, 40.0), speed: 5.0, pause_left: 0.0 };
        w.advance(1.0, (500.0, 500.0), &m, &mut rng);
        assert!((w.position.x - 3.0).abs() < 1e-12 && (w.position.y - 4.0).abs() < 1e-12);
        // 9 more seconds reaches the target and starts pausing
        w.advance(9.0, (500.0, 500.0), &m, &mut rng);
        assert_eq!(w.position, Point::new(30.0, 40.0));
        assert_eq!(w.pause_left, 10.0);
        w.advance(4.0, (500.0, 500.0), &m, &mut rng);
        assert_eq!(w.position, Point::new(30.0, 40.0));
        assert_eq!(w.pause_left, 6.0);
    }

    #[test]
    fn zero_speed_never_moves() {
        let m = MobilityConfig { speed_min: 0.0, speed_max: 0.0, pause: 0.0, update_interval: 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = Waypoint::start(Point::new(10.0, 20.0), (500.0, 500.0), &m, &mut rng);
        for _ in 0..1000 {
            w.advance(0.5, (500.0, 500.0), &m, &mut rng);
        }
        assert_eq!(w.position, Point::new(10.0, 20.0));
    }

    #[test]
    fn connectivity_is_unit_disk() {
        let pts = [Point::new(0.0, 0.0), Point::new(150.0, 0.0), Point::new(300.1, 0.0)];
        let c = Connectivity::compute(&pts, 150.0);
        assert!(c.connected(0, 1) && c.connected(1, 0));
        assert!(!c.connected(1, 2) && !c.connected(0, 2));
        assert_eq!(c.neighbors(1), &[0]);
    }
}
