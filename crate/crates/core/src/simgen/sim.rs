//! Position-based 2-D particle liquid.
//!
//! Each frame is split into [`SUBSTEPS`] substeps. A substep integrates
//! gravity, then alternates pairwise separation (Gauss-Seidel over a spatial
//! hash) with wall projection. Velocities are recovered from the position
//! change, so projection removes the normal velocity (zero restitution).

use crate::simgen::geometry::{
    point_in_polygon, Container, SceneGeometry, Vec2, BASE_HEIGHT, BASE_WIDTH, TABLE_Y, WALL_RADIUS,
};
use crate::simgen::hash::unit;
use crate::simgen::scenario::Scenario;

pub const SUBSTEPS: usize = 4;
/// Rest distance between particle centres.
pub const SPACING: f64 = 0.4;
pub const PARTICLE_RADIUS: f64 = SPACING / 2.0;
/// Cells per second squared.
pub const GRAVITY: f64 = 300.0;
/// Cells per second; keeps a substep's travel at most one spacing.
pub const MAX_SPEED: f64 = 48.0;
/// Allowed penetration of a particle centre into a wall.
pub const CONTACT_TOLERANCE: f64 = 0.25;
/// Frames simulated upright before the first recorded frame.
pub const WARMUP_FRAMES: usize = 15;

const ITERATIONS: usize = 8;
const STIFFNESS: f64 = 1.0;
const DAMPING: f64 = 0.05;
/// Per-substep displacements below this are treated as rest (static friction).
const REST_DISPLACEMENT: f64 = 2e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub pos: Vec2,
    pub vel: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub particles: Vec<Particle>,
    /// Cup tilt in radians, clockwise on screen.
    pub tilt: f64,
}

impl SimState {
    pub fn max_speed(&self) -> f64 {
        self.particles.iter().map(|p| p.vel.norm()).fold(0.0, f64::max)
    }
}

struct SpatialHash {
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl SpatialHash {
    fn new() -> Self {
        let nx = (BASE_WIDTH / SPACING).ceil() as usize + 1;
        let ny = (BASE_HEIGHT / SPACING).ceil() as usize + 1;
        SpatialHash {
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            items: Vec::new(),
        }
    }

    fn cell(&self, p: Vec2) -> (usize, usize) {
        let cx = ((p.x / SPACING).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = ((p.y / SPACING).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn rebuild(&mut self, particles: &[Particle]) {
        self.start.fill(0);
        for p in particles {
            let (cx, cy) = self.cell(p.pos);
            self.start[cy * self.nx + cx + 1] += 1;
        }
        for i in 1..self.start.len() {
            self.start[i] += self.start[i - 1];
        }
        self.items.resize(particles.len(), 0);
        let mut fill = self.start.clone();
        for (i, p) in particles.iter().enumerate() {
            let (cx, cy) = self.cell(p.pos);
            let k = cy * self.nx + cx;
            self.items[fill[k]] = i;
            fill[k] += 1;
        }
    }
}

pub struct Simulator {
    geometry: SceneGeometry,
    state: SimState,
    dt: f64,
    grid: SpatialHash,
    prev: Vec<Vec2>,
}

impl Simulator {
    pub fn new(scenario: &Scenario) -> Self {
        let geometry = SceneGeometry::new(scenario);
        let particles = if scenario.has_liquid {
            fill_cup(&geometry.cup_local, scenario.fill_fraction, scenario.seed)
                .into_iter()
                .map(|p| Particle {
                    pos: p.add(geometry.pivot),
                    vel: Vec2::default(),
                })
                .collect()
        } else {
            Vec::new()
        };
        Simulator {
            geometry,
            state: SimState { particles, tilt: 0.0 },
            dt: 1.0 / (scenario.fps as f64 * SUBSTEPS as f64),
            grid: SpatialHash::new(),
            prev: Vec::new(),
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn geometry(&self) -> &SceneGeometry {
        &self.geometry
    }

    /// Advances one frame while the cup turns linearly to `tilt`.
    pub fn advance(&mut self, tilt: f64) {
        let start = self.state.tilt;
        for k in 1..=SUBSTEPS {
            let t = start + (tilt - start) * k as f64 / SUBSTEPS as f64;
            self.substep(t);
        }
        self.state.tilt = tilt;
    }

    fn substep(&mut self, tilt: f64) {
        let dt = self.dt;
        let old_tilt = self.state.tilt;
        self.prev.clear();
        for p in &mut self.state.particles {
            self.prev.push(p.pos);
            p.vel.y += GRAVITY * dt;
            let speed = p.vel.norm();
            if speed > MAX_SPEED {
                p.vel = p.vel.scale(MAX_SPEED / speed);
            }
            p.pos = p.pos.add(p.vel.scale(dt));
        }
        let cup_local = self.geometry.cup_local.clone();
        for _ in 0..ITERATIONS {
            self.separate();
            for (p, &q) in self.state.particles.iter_mut().zip(&self.prev) {
                p.pos = collide_static(&self.geometry.bowl, q, p.pos);
                p.pos = collide_moving(&cup_local, self.geometry.pivot, old_tilt, tilt, q, p.pos);
                p.pos = clamp_to_scene(p.pos);
            }
        }
        for (p, &q) in self.state.particles.iter_mut().zip(&self.prev) {
            let d = p.pos.sub(q);
            if d.norm() < REST_DISPLACEMENT {
                p.pos = q;
                p.vel = Vec2::default();
            } else {
                p.vel = d.scale((1.0 - DAMPING) / dt);
            }
        }
        self.state.tilt = tilt;
    }

    fn separate(&mut self) {
        let particles = &mut self.state.particles;
        self.grid.rebuild(particles);
        let g = &self.grid;
        for i in 0..particles.len() {
            let (cx, cy) = g.cell(particles[i].pos);
            for ny in cy.saturating_sub(1)..=(cy + 1).min(g.ny - 1) {
                for nx in cx.saturating_sub(1)..=(cx + 1).min(g.nx - 1) {
                    let k = ny * g.nx + nx;
                    for &j in &g.items[g.start[k]..g.start[k + 1]] {
                        if j <= i {
                            continue;
                        }
                        let d = particles[j].pos.sub(particles[i].pos);
                        let dist = d.norm();
                        if dist >= SPACING {
                            continue;
                        }
                        let n = if dist > 1e-9 {
                            d.scale(1.0 / dist)
                        } else {
                            let a = unit(&[i as u64, j as u64]) * std::f64::consts::TAU;
                            Vec2::new(a.cos(), a.sin())
                        };
                        let corr = n.scale(0.5 * STIFFNESS * (SPACING - dist));
                        particles[i].pos = particles[i].pos.sub(corr);
                        particles[j].pos = particles[j].pos.add(corr);
                    }
                }
            }
        }
    }
}

const CONTACT: f64 = WALL_RADIUS + PARTICLE_RADIUS;

/// Reverts moves that cross a wall, then pushes the particle out of every wall capsule.
fn project(walls: &Container, from: Vec2, to: Vec2) -> Vec2 {
    let mut p = to;
    if walls.walls().any(|s| s.crosses(from, p)) {
        p = from;
    }
    for s in walls.walls() {
        let c = s.closest(p);
        let d = p.sub(c);
        let dist = d.norm();
        if dist < CONTACT && dist > 1e-12 {
            p = c.add(d.scale(CONTACT / dist));
        }
    }
    p
}

fn collide_static(walls: &Container, from: Vec2, to: Vec2) -> Vec2 {
    project(walls, from, to)
}

/// Collision against the cup, resolved in the cup's frame so the wall's own
/// motion during the substep is accounted for.
fn collide_moving(local: &Container, pivot: Vec2, old_tilt: f64, tilt: f64, from: Vec2, to: Vec2) -> Vec2 {
    let lf = from.sub(pivot).rotate(-old_tilt);
    let lt = to.sub(pivot).rotate(-tilt);
    project(local, lf, lt).rotate(tilt).add(pivot)
}

fn clamp_to_scene(p: Vec2) -> Vec2 {
    Vec2::new(
        p.x.clamp(PARTICLE_RADIUS, BASE_WIDTH - PARTICLE_RADIUS),
        p.y.clamp(PARTICLE_RADIUS, TABLE_Y - PARTICLE_RADIUS),
    )
}

/// Grid of particles filling the lowest `fill` fraction of the cup's height.
fn fill_cup(cup: &Container, fill: f64, seed: u64) -> Vec<Vec2> {
    let (lo, hi) = cup.bounds();
    let level = hi.y - fill * (hi.y - lo.y);
    let mut out = Vec::new();
    let mut y = hi.y - CONTACT;
    let mut row = 0u64;
    while y >= level {
        let mut x = lo.x + CONTACT + if row % 2 == 1 { SPACING / 2.0 } else { 0.0 };
        while x <= hi.x - CONTACT {
            let jitter = Vec2::new(
                (unit(&[seed, out.len() as u64, 0]) - 0.5) * 0.02,
                (unit(&[seed, out.len() as u64, 1]) - 0.5) * 0.02,
            );
            let p = Vec2::new(x, y).add(jitter);
            if point_in_polygon(&cup.outline, p) && cup.walls().all(|s| s.distance(p) >= CONTACT) {
                out.push(p);
            }
            x += SPACING;
        }
        y -= SPACING * 0.866;
        row += 1;
    }
    out
}

/// States at every frame; frame 0 follows an upright warm-up.
pub fn simulate_pour(scenario: &Scenario) -> Vec<SimState> {
    let mut sim = Simulator::new(scenario);
    for _ in 0..WARMUP_FRAMES {
        sim.advance(0.0);
    }
    (0..scenario.duration_frames)
        .map(|t| {
            sim.advance(scenario.tilt_at(t as f64));
            sim.state().clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::scenario::{BowlShape, CupShape, PourProfile};

    #[test]
    fn full_straight_cup_holds_about_four_hundred() {
        let s = Scenario::example(CupShape::Straight, BowlShape::Wide);
        let n = Simulator::new(&s).state().particles.len();
        assert!((300..=500).contains(&n), "{n}");
    }

    #[test]
    fn negatives_have_no_particles() {
        let mut s = Scenario::example(CupShape::Tapered, BowlShape::Tall);
        s.has_liquid = false;
        s.fill_fraction = 0.0;
        assert!(simulate_pour(&s).iter().all(|f| f.particles.is_empty()));
    }

    #[test]
    fn upright_cup_settles() {
        for cup in CupShape::ALL {
            let s = Scenario::example(cup, BowlShape::Wide);
            let mut sim = Simulator::new(&s);
            for _ in 0..30 {
                sim.advance(0.0);
            }
            let per_frame = sim.state().max_speed() / s.fps as f64;
            assert!(per_frame < 0.05, "{cup:?}: {per_frame} cells/frame");
        }
    }

    #[test]
    fn fast_pour_lands_in_bowl() {
        for cup in CupShape::ALL {
            for bowl in BowlShape::ALL {
                let s = Scenario::example(cup, bowl);
                let frames = simulate_pour(&s);
                let g = SceneGeometry::new(&s);
                let last = frames.last().unwrap();
                let inside = last
                    .particles
                    .iter()
                    .filter(|p| g.bowl_interior_contains(p.pos))
                    .count();
                let frac = inside as f64 / last.particles.len() as f64;
                assert!(frac >= 0.8, "{cup:?}/{bowl:?}: {frac}");
            }
        }
    }

    #[test]
    fn particles_are_conserved_and_contained() {
        let mut s = Scenario::example(CupShape::NarrowNeck, BowlShape::Shallow);
        s.pour_profile = PourProfile::Slow;
        let frames = simulate_pour(&s);
        let n = frames[0].particles.len();
        for f in &frames {
            assert_eq!(f.particles.len(), n);
            for p in &f.particles {
                assert!(p.pos.x >= 0.0 && p.pos.x <= BASE_WIDTH && p.pos.y >= 0.0 && p.pos.y <= TABLE_Y);
            }
        }
    }

    #[test]
    fn walls_are_not_penetrated() {
        let s = Scenario::example(CupShape::Straight, BowlShape::Tall);
        let g = SceneGeometry::new(&s);
        for f in simulate_pour(&s) {
            let cup = g.cup_at(f.tilt);
            for p in &f.particles {
                for w in g.bowl.walls().chain(cup.walls()) {
                    let d = w.distance(p.pos);
                    assert!(d >= WALL_RADIUS - CONTACT_TOLERANCE, "penetration {d}");
                }
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let s = Scenario::example(CupShape::Tapered, BowlShape::Wide);
        assert_eq!(simulate_pour(&s), simulate_pour(&s));
    }
}
