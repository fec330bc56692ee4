//! Deterministic 2D grasp-and-place environment: a gripper with an
//! aperture and three colored objects that can be grasped, carried,
//! dropped and stacked. Scripted proportional controllers act as the
//! base-policy roster for offline data generation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{JumpyError, Result};
use crate::rng::rng_from_seed;

pub const STATE_DIM: usize = 12;
pub const ACTION_DIM: usize = 3;
pub const GROUND_Y: f64 = 0.05;
pub const STACK_OFFSET: f64 = 0.10;
pub const STACK_X_TOL: f64 = 0.05;
pub const GRASP_RADIUS: f64 = 0.06;
pub const GRASP_APERTURE: f64 = 0.3;
pub const RELEASE_APERTURE: f64 = 0.7;
pub const MOVE_SCALE: f64 = 0.05;
pub const APERTURE_SCALE: f64 = 0.2;
pub const DEFAULT_MOTION_NOISE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
}

pub const COLORS: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

impl Color {
    fn index(self) -> usize {
        match self {
            Color::Red => 0,
            Color::Green => 1,
            Color::Blue => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjState {
    pub x: f64,
    pub y: f64,
    pub held: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub gripper_x: f64,
    pub gripper_y: f64,
    pub aperture: f64,
    pub objects: [ObjState; 3], // red, green, blue
}

impl EnvState {
    pub fn obj(&self, c: Color) -> &ObjState {
        &self.objects[c.index()]
    }

    pub fn obj_mut(&mut self, c: Color) -> &mut ObjState {
        &mut self.objects[c.index()]
    }

    pub fn held_object(&self) -> Option<Color> {
        COLORS.iter().copied().find(|c| self.obj(*c).held)
    }

    /// Fixed 12-dim layout:
    /// [gx, gy, ap, held_r, rx, ry, held_g, gx_g, gy_g, held_b, bx, by]
    pub fn to_vec(&self) -> [f64; STATE_DIM] {
        let r = self.obj(Color::Red);
        let g = self.obj(Color::Green);
        let b = self.obj(Color::Blue);
        [
            self.gripper_x,
            self.gripper_y,
            self.aperture,
            r.held as u8 as f64,
            r.x,
            r.y,
            g.held as u8 as f64,
            g.x,
            g.y,
            b.held as u8 as f64,
            b.x,
            b.y,
        ]
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() != STATE_DIM {
            return Err(JumpyError::shape("state vector must have length 12"));
        }
        Ok(EnvState {
            gripper_x: v[0],
            gripper_y: v[1],
            aperture: v[2],
            objects: [
                ObjState { held: v[3] != 0.0, x: v[4], y: v[5] },
                ObjState { held: v[6] != 0.0, x: v[7], y: v[8] },
                ObjState { held: v[9] != 0.0, x: v[10], y: v[11] },
            ],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub dx: f64,
    pub dy: f64,
    pub dap: f64,
}

impl EnvAction {
    /// Components are clamped to [-1, 1] on ingestion.
    pub fn new(dx: f64, dy: f64, dap: f64) -> Result<Self> {
        if !(dx.is_finite() && dy.is_finite() && dap.is_finite()) {
            return Err(JumpyError::domain("non-finite action"));
        }
        Ok(EnvAction {
            dx: dx.clamp(-1.0, 1.0),
            dy: dy.clamp(-1.0, 1.0),
            dap: dap.clamp(-1.0, 1.0),
        })
    }

    pub fn to_vec(&self) -> [f64; ACTION_DIM] {
        [self.dx, self.dy, self.dap]
    }

    pub fn from_vec(v: &[f64]) -> Result<Self> {
        if v.len() != ACTION_DIM {
            return Err(JumpyError::shape("action vector must have length 3"));
        }
        EnvAction::new(v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Env {
    /// Gaussian noise added to gripper motion; 0 disables.
    pub motion_noise: f64,
}

impl Default for Env {
    fn default() -> Self {
        Env { motion_noise: 0.0 }
    }
}

impl Env {
    pub fn with_noise(noise: f64) -> Self {
        Env { motion_noise: noise }
    }

    /// Initial state: gripper somewhere above the table, aperture open,
    /// objects on the ground at non-overlapping positions. Fully
    /// determined by the seed.
    pub fn reset(&self, seed: u64) -> EnvState {
        let mut rng = rng_from_seed(seed);
        let gripper_x = rng.gen_range(-0.8..0.8);
        let gripper_y = rng.gen_range(0.2..0.6);
        let mut xs: Vec<f64> = Vec::with_capacity(3);
        while xs.len() < 3 {
            let x = rng.gen_range(-0.8..0.8);
            if xs.iter().all(|o| (o - x).abs() >= 0.15) {
                xs.push(x);
            }
        }
        let obj = |x: f64| ObjState { x, y: GROUND_Y, held: false };
        EnvState {
            gripper_x,
            gripper_y,
            aperture: 1.0,
            objects: [obj(xs[0]), obj(xs[1]), obj(xs[2])],
        }
    }

    pub fn step(&self, state: &EnvState, action: &EnvAction, rng: &mut ChaCha8Rng) -> Result<EnvState> {
        if !(action.dx.is_finite() && action.dy.is_finite() && action.dap.is_finite()) {
            return Err(JumpyError::domain("non-finite action"));
        }
        let mut s = *state;
        let (dx, dy, dap) = (
            action.dx.clamp(-1.0, 1.0),
            action.dy.clamp(-1.0, 1.0),
            action.dap.clamp(-1.0, 1.0),
        );
        s.gripper_x += MOVE_SCALE * dx;
        s.gripper_y += MOVE_SCALE * dy;
        if self.motion_noise > 0.0 {
            let nx: f64 = rng.sample(rand_distr::StandardNormal);
            let ny: f64 = rng.sample(rand_distr::StandardNormal);
            s.gripper_x += self.motion_noise * nx;
            s.gripper_y += self.motion_noise * ny;
        }
        s.gripper_x = s.gripper_x.clamp(-1.0, 1.0);
        s.gripper_y = s.gripper_y.clamp(0.0, 1.0);
        s.aperture = (s.aperture + APERTURE_SCALE * dap).clamp(0.0, 1.0);

        if let Some(held) = s.held_object() {
            let (gx, gy) = (s.gripper_x, s.gripper_y);
            let o = s.obj_mut(held);
            o.x = gx;
            o.y = gy;
            if s.aperture > RELEASE_APERTURE {
                s.obj_mut(held).held = false;
            }
        } else if s.aperture < GRASP_APERTURE {
            let mut best: Option<(Color, f64)> = None;
            for c in COLORS {
                let o = s.obj(c);
                let d = ((o.x - s.gripper_x).powi(2) + (o.y - s.gripper_y).powi(2)).sqrt();
                if d <= GRASP_RADIUS && best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((c, d));
                }
            }
            if let Some((c, _)) = best {
                let (gx, gy) = (s.gripper_x, s.gripper_y);
                let o = s.obj_mut(c);
                o.held = true;
                o.x = gx;
                o.y = gy;
            }
        }

        settle(&mut s);
        Ok(s)
    }
}

/// Drop every non-held object onto the highest support below it: the
/// ground, or another settled object within the stacking x-tolerance.
/// Objects never move up during settling.
pub fn settle(s: &mut EnvState) {
    let mut order: Vec<usize> = (0..3).filter(|&i| !s.objects[i].held).collect();
    order.sort_by(|&a, &b| s.objects[a].y.partial_cmp(&s.objects[b].y).unwrap());
    let mut settled: Vec<usize> = Vec::with_capacity(3);
    for &i in &order {
        let (xi, yi) = (s.objects[i].x, s.objects[i].y);
        let mut rest = GROUND_Y;
        for &j in &settled {
            let oj = s.objects[j];
            let candidate = oj.y + STACK_OFFSET;
            if (oj.x - xi).abs() < STACK_X_TOL && candidate <= yi + 1e-9 {
                rest = rest.max(candidate);
            }
        }
        s.objects[i].y = rest;
        settled.push(i);
    }
}

/// Task reward family. All rewards map any state into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ReachRed,
    LiftRed,
    RedHoverBlue,
    RedStackBlue,
    RedHoverGreen,
    RedStackGreen,
    BringRed,
    ReachGreen,
    LiftGreen,
}

pub const ALL_TASKS: [Task; 9] = [
    Task::ReachRed,
    Task::LiftRed,
    Task::RedHoverBlue,
    Task::RedStackBlue,
    Task::RedHoverGreen,
    Task::RedStackGreen,
    Task::BringRed,
    Task::ReachGreen,
    Task::LiftGreen,
];

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::ReachRed => "reach_red",
            Task::LiftRed => "lift_red",
            Task::RedHoverBlue => "red_hover_blue",
            Task::RedStackBlue => "red_stack_blue",
            Task::RedHoverGreen => "red_hover_green",
            Task::RedStackGreen => "red_stack_green",
            Task::BringRed => "bring_red",
            Task::ReachGreen => "reach_green",
            Task::LiftGreen => "lift_green",
        }
    }

    pub fn parse(name: &str) -> Result<Task> {
        ALL_TASKS
            .iter()
            .copied()
            .find(|t| t.name() == name)
            .ok_or_else(|| JumpyError::domain(format!("unknown task: {name}")))
    }

    pub fn reward(self, s: &EnvState) -> f64 {
        fn dist(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
            ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
        }
        let reach = |c: Color| {
            let o = s.obj(c);
            (1.0 - dist(s.gripper_x, s.gripper_y, o.x, o.y) / 0.5).max(0.0)
        };
        let lift = |c: Color| ((s.obj(c).y - GROUND_Y) / 0.35).clamp(0.0, 1.0);
        let hover = |c: Color, d: Color| {
            let oc = s.obj(c);
            let od = s.obj(d);
            (1.0 - dist(oc.x, oc.y, od.x, od.y + 0.15) / 0.3).max(0.0)
        };
        let stack = |c: Color, d: Color| {
            let oc = s.obj(c);
            let od = s.obj(d);
            let near = (1.0 - dist(oc.x, oc.y, od.x, od.y + STACK_OFFSET) / 0.3).max(0.0);
            let resting = !oc.held
                && (oc.x - od.x).abs() < STACK_X_TOL
                && (oc.y - (od.y + STACK_OFFSET)).abs() < 1e-9;
            0.5 * near + if resting { 0.5 } else { 0.0 }
        };
        match self {
            Task::ReachRed => reach(Color::Red),
            Task::ReachGreen => reach(Color::Green),
            Task::LiftRed => lift(Color::Red),
            Task::LiftGreen => lift(Color::Green),
            Task::RedHoverBlue => hover(Color::Red, Color::Blue),
            Task::RedHoverGreen => hover(Color::Red, Color::Green),
            Task::RedStackBlue => stack(Color::Red, Color::Blue),
            Task::RedStackGreen => stack(Color::Red, Color::Green),
            Task::BringRed => {
                let o = s.obj(Color::Red);
                (1.0 - dist(o.x, o.y, 0.6, GROUND_Y) / 0.5).max(0.0)
            }
        }
    }
}

/// Scripted base policies used to generate offline training data. These
/// are proportional controllers; none of them ever grasps the green
/// object, which keeps a deliberate out-of-distribution gap in the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePolicyId {
    OpenFingers,
    CloseFingers,
    ReachRed,
    LiftRed,
    RedHoverBlue,
    MovePinchXInc,
    MovePinchXDec,
    MovePinchYInc,
    MovePinchYDec,
}

pub const ALL_BASE_POLICIES: [BasePolicyId; 9] = [
    BasePolicyId::OpenFingers,
    BasePolicyId::CloseFingers,
    BasePolicyId::ReachRed,
    BasePolicyId::LiftRed,
    BasePolicyId::RedHoverBlue,
    BasePolicyId::MovePinchXInc,
    BasePolicyId::MovePinchXDec,
    BasePolicyId::MovePinchYInc,
    BasePolicyId::MovePinchYDec,
];

const P_GAIN: f64 = 5.0;
const LIFT_TARGET_Y: f64 = 0.45;
const LIFTED_Y: f64 = 0.25;

impl BasePolicyId {
    pub fn to_u8(self) -> u8 {
        ALL_BASE_POLICIES.iter().position(|p| *p == self).unwrap() as u8
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        ALL_BASE_POLICIES
            .get(v as usize)
            .copied()
            .ok_or_else(|| JumpyError::domain(format!("unknown base policy id {v}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            BasePolicyId::OpenFingers => "open_fingers",
            BasePolicyId::CloseFingers => "close_fingers",
            BasePolicyId::ReachRed => "reach_red",
            BasePolicyId::LiftRed => "lift_red",
            BasePolicyId::RedHoverBlue => "red_hover_blue",
            BasePolicyId::MovePinchXInc => "move_pinch_x_inc",
            BasePolicyId::MovePinchXDec => "move_pinch_x_dec",
            BasePolicyId::MovePinchYInc => "move_pinch_y_inc",
            BasePolicyId::MovePinchYDec => "move_pinch_y_dec",
        }
    }

    pub fn action(self, s: &EnvState) -> EnvAction {
        let act = |dx: f64, dy: f64, dap: f64| EnvAction {
            dx: dx.clamp(-1.0, 1.0),
            dy: dy.clamp(-1.0, 1.0),
            dap: dap.clamp(-1.0, 1.0),
        };
        match self {
            BasePolicyId::OpenFingers => act(0.0, 0.0, 1.0),
            BasePolicyId::CloseFingers => act(0.0, 0.0, -1.0),
            BasePolicyId::MovePinchXInc => act(1.0, 0.0, 0.0),
            BasePolicyId::MovePinchXDec => act(-1.0, 0.0, 0.0),
            BasePolicyId::MovePinchYInc => act(0.0, 1.0, 0.0),
            BasePolicyId::MovePinchYDec => act(0.0, -1.0, 0.0),
            BasePolicyId::ReachRed => {
                let o = s.obj(Color::Red);
                act(
                    P_GAIN * (o.x - s.gripper_x),
                    P_GAIN * (o.y - s.gripper_y),
                    0.0,
                )
            }
            BasePolicyId::LiftRed => lift_red_action(s),
            BasePolicyId::RedHoverBlue => {
                let red = s.obj(Color::Red);
                if red.held && red.y >= LIFTED_Y {
                    let blue = s.obj(Color::Blue);
                    act(
                        P_GAIN * (blue.x - s.gripper_x),
                        P_GAIN * (blue.y + 0.15 - s.gripper_y),
                        -1.0,
                    )
                } else {
                    lift_red_action(s)
                }
            }
        }
    }
}

/// Phase logic: approach red with open fingers, close when in range,
/// then carry it toward the lift height.
fn lift_red_action(s: &EnvState) -> EnvAction {
    let act = |dx: f64, dy: f64, dap: f64| EnvAction {
        dx: dx.clamp(-1.0, 1.0),
        dy: dy.clamp(-1.0, 1.0),
        dap: dap.clamp(-1.0, 1.0),
    };
    let red = s.obj(Color::Red);
    if red.held {
        return act(0.0, P_GAIN * (LIFT_TARGET_Y - s.gripper_y), -1.0);
    }
    let d = ((red.x - s.gripper_x).powi(2) + (red.y - s.gripper_y).powi(2)).sqrt();
    if d > GRASP_RADIUS {
        // stay open while approaching
        act(
            P_GAIN * (red.x - s.gripper_x),
            P_GAIN * (red.y - s.gripper_y),
            1.0,
        )
    } else {
        act(0.0, 0.0, -1.0)
    }
}
