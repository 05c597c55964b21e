use serde::{Deserialize, Serialize};

/// Axis-aligned obstacle box in the workspace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Obstacle {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Obstacle { min, max }
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }

    pub fn half_extents(&self) -> [f64; 2] {
        [(self.max[0] - self.min[0]) / 2.0, (self.max[1] - self.min[1]) / 2.0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Default for Goal {
    fn default() -> Self {
        Goal {
            center: [0.7, 0.7],
            radius: 0.1,
        }
    }
}

fn default_beacons() -> [[f64; 2]; 2] {
    [[-0.7, 0.7], [0.7, -0.7]]
}

fn default_footprint() -> [f64; 2] {
    [0.06, 0.035]
}

/// Planar workspace [−1, 1]² with box obstacles, a circular goal and two
/// signal beacons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub goal: Goal,
    #[serde(default = "default_beacons")]
    pub beacons: [[f64; 2]; 2],
    /// Half-extents of the robot rectangle along and across its heading.
    #[serde(default = "default_footprint")]
    pub footprint: [f64; 2],
}

impl Default for Environment {
    fn default() -> Self {
        Environment::empty()
    }
}

impl Environment {
    pub fn empty() -> Self {
        Environment {
            obstacles: Vec::new(),
            goal: Goal::default(),
            beacons: default_beacons(),
            footprint: default_footprint(),
        }
    }

    /// Five wall boxes forming an S-shaped route from the lower-left start
    /// to the upper-right goal.
    pub fn maze() -> Self {
        Environment {
            obstacles: vec![
                Obstacle::new([-1.0, -0.25], [-0.25, -0.15]),
                Obstacle::new([0.25, 0.15], [1.0, 0.25]),
                Obstacle::new([-0.05, -1.0], [0.05, -0.55]),
                Obstacle::new([-0.05, 0.55], [0.05, 1.0]),
                Obstacle::new([0.35, -0.6], [0.55, -0.4]),
            ],
            ..Environment::empty()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.goal.radius > 0.0) {
            return Err("goal radius must be positive".into());
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            let inside = |v: f64| (-1.0..=1.0).contains(&v);
            if !(o.min[0] < o.max[0] && o.min[1] < o.max[1]) {
                return Err(format!("obstacle {i} has empty extent"));
            }
            if !(inside(o.min[0]) && inside(o.min[1]) && inside(o.max[0]) && inside(o.max[1])) {
                return Err(format!("obstacle {i} leaves the workspace"));
            }
        }
        if self.footprint.iter().any(|h| !(*h > 0.0)) {
            return Err("footprint half-extents must be positive".into());
        }
        Ok(())
    }

    /// Oriented-rectangle footprint at (x, y, θ) against every box
    /// (separating-axis test; touching counts as collision).
    pub fn collides(&self, x: f64, y: f64, theta: f64) -> bool {
        if self.obstacles.is_empty() {
            return false;
        }
        let (s, c) = theta.sin_cos();
        let (hx, hy) = (self.footprint[0], self.footprint[1]);
        // World-axis half-extents of the rotated rectangle.
        let ex = hx * c.abs() + hy * s.abs();
        let ey = hx * s.abs() + hy * c.abs();
        self.obstacles.iter().any(|o| {
            if x + ex < o.min[0] || x - ex > o.max[0] || y + ey < o.min[1] || y - ey > o.max[1] {
                return false;
            }
            let [cx, cy] = o.center();
            let [bx, by] = o.half_extents();
            let (dx, dy) = (cx - x, cy - y);
            let along = (dx * c + dy * s).abs();
            let across = (-dx * s + dy * c).abs();
            along <= hx + bx * c.abs() + by * s.abs() && across <= hy + bx * s.abs() + by * c.abs()
        })
    }

    pub fn in_goal(&self, x: f64, y: f64) -> bool {
        let [gx, gy] = self.goal.center;
        (x - gx).powi(2) + (y - gy).powi(2) <= self.goal.radius.powi(2)
    }

    /// Squared distances to the two beacons.
    pub fn beacon_sq_dists(&self, x: f64, y: f64) -> [f64; 2] {
        let d = |b: [f64; 2]| (x - b[0]).powi(2) + (y - b[1]).powi(2);
        [d(self.beacons[0]), d(self.beacons[1])]
    }
}
