//! Parking-lot geometry: lanes, bays, drop-off zone and static obstacles.

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: String,
    pub area: Aabb,
    pub one_way: bool,
}

impl Lane {
    pub fn width(&self) -> f64 {
        self.area.width().min(self.area.height())
    }
}

/// Which side of the driving lane a bay opens onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaySide {
    /// Bay lies at larger `y` than the lane; its mouth faces `-y`.
    North,
    /// Bay lies at smaller `y` than the lane; its mouth faces `+y`.
    South,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bay {
    pub index: usize,
    pub area: Aabb,
    pub side: BaySide,
}

impl Bay {
    /// Bay depth (the long dimension).
    pub fn length(&self) -> f64 {
        self.area.width().max(self.area.height())
    }

    pub fn width(&self) -> f64 {
        self.area.width().min(self.area.height())
    }

    /// Unit vector pointing from the mouth into the bay.
    pub fn inward(&self) -> Vec2 {
        match self.side {
            BaySide::North => Vec2::new(0.0, 1.0),
            BaySide::South => Vec2::new(0.0, -1.0),
        }
    }

    /// Centre of the edge shared with the lane.
    pub fn mouth(&self) -> Vec2 {
        let c = self.area.center();
        match self.side {
            BaySide::North => Vec2::new(c.x, self.area.min.y),
            BaySide::South => Vec2::new(c.x, self.area.max.y),
        }
    }

    /// A point `depth` metres inside the bay along its centre line.
    pub fn point_at_depth(&self, depth: f64) -> Vec2 {
        self.mouth() + self.inward() * depth
    }

    pub fn inward_heading(&self) -> f64 {
        let d = self.inward();
        d.y.atan2(d.x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParkingLot {
    /// Outer walls of the lot.
    pub bounds: Aabb,
    pub lanes: Vec<Lane>,
    pub bays: Vec<Bay>,
    pub drop_off: Aabb,
    /// Static obstacles other than parked vehicles (pillars, kerbs).
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
}

/// Bay width along the lane used by [`ParkingLot::default_lot`].
pub const DEFAULT_BAY_WIDTH: f64 = 2.7;
pub const DEFAULT_BAY_LENGTH: f64 = 5.0;
pub const DEFAULT_LANE_WIDTH: f64 = 6.0;
pub const DEFAULT_BAYS_PER_ROW: usize = 16;

impl ParkingLot {
    /// Single one-way aisle along `+x` with a row of perpendicular bays on each
    /// side. Bays `0..16` are on the north row, `16..32` on the south row, both
    /// numbered in driving direction.
    pub fn default_lot() -> Self {
        let half_lane = DEFAULT_LANE_WIDTH / 2.0;
        let x0 = 10.0;
        let x_end = 62.0;
        let y_wall = half_lane + DEFAULT_BAY_LENGTH;
        let mut bays = Vec::with_capacity(2 * DEFAULT_BAYS_PER_ROW);
        for (row, side) in [BaySide::North, BaySide::South].into_iter().enumerate() {
            for i in 0..DEFAULT_BAYS_PER_ROW {
                let xa = x0 + i as f64 * DEFAULT_BAY_WIDTH;
                let (ya, yb) = match side {
                    BaySide::North => (half_lane, half_lane + DEFAULT_BAY_LENGTH),
                    BaySide::South => (-half_lane - DEFAULT_BAY_LENGTH, -half_lane),
                };
                bays.push(Bay {
                    index: row * DEFAULT_BAYS_PER_ROW + i,
                    area: Aabb::new(Vec2::new(xa, ya), Vec2::new(xa + DEFAULT_BAY_WIDTH, yb)),
                    side,
                });
            }
        }
        Self {
            bounds: Aabb::new(Vec2::new(-5.0, -y_wall), Vec2::new(x_end, y_wall)),
            lanes: vec![Lane {
                id: "aisle".into(),
                area: Aabb::new(Vec2::new(-5.0, -half_lane), Vec2::new(x_end, half_lane)),
                one_way: true,
            }],
            bays,
            drop_off: Aabb::new(Vec2::new(-5.0, -half_lane), Vec2::new(0.0, half_lane)),
            obstacles: Vec::new(),
        }
    }

    pub fn bay(&self, index: usize) -> Option<&Bay> {
        self.bays.iter().find(|b| b.index == index)
    }

    /// Centre line `y` of the first lane; the ego starts on it.
    pub fn lane_center_y(&self) -> f64 {
        self.lanes.first().map(|l| l.area.center().y).unwrap_or(0.0)
    }

    pub fn lane_start_x(&self) -> f64 {
        self.lanes.first().map(|l| l.area.min.x).unwrap_or(0.0).max(self.drop_off.max.x)
    }

    /// Lane lateral edges `(low_y, high_y)` of the lane containing `p`, if any.
    pub fn lane_edges_at(&self, p: Vec2) -> Option<(f64, f64)> {
        self.lanes
            .iter()
            .find(|l| p.x >= l.area.min.x && p.x <= l.area.max.x)
            .map(|l| (l.area.min.y, l.area.max.y))
    }
}
