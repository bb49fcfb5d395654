//! Ground-truth label rasters.
//!
//! Cup, bowl and liquid masks mark full extent and may overlap. The visible
//! class follows the painter's order background < liquid < bowl < cup, so
//! liquid inside a container silhouette is occluded while falling liquid is
//! visible.

use crate::error::{contract, Result};
use crate::simgen::geometry::{point_in_polygon, Container, SceneGeometry, Vec2, BASE_HEIGHT, BASE_WIDTH};
use crate::simgen::sim::SimState;
use crate::tensor::{Shape, Tensor};

/// Splat radius of one particle in base cells.
pub const SPLAT_RADIUS: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum VisibleClass {
    Background = 0,
    Cup = 1,
    Bowl = 2,
    Liquid = 3,
}

/// Per-pixel labels of one frame, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    pub cup: Vec<u8>,
    pub bowl: Vec<u8>,
    pub liquid: Vec<u8>,
    /// Values of [`VisibleClass`].
    pub visible: Vec<u8>,
}

/// Maps pixel centres to base units and back.
#[derive(Clone, Copy, Debug)]
pub struct PixelGrid {
    pub width: usize,
    pub height: usize,
    pub sx: f64,
    pub sy: f64,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize) -> Self {
        PixelGrid {
            width,
            height,
            sx: width as f64 / BASE_WIDTH,
            sy: height as f64 / BASE_HEIGHT,
        }
    }

    pub fn center(&self, px: usize, py: usize) -> Vec2 {
        Vec2::new((px as f64 + 0.5) / self.sx, (py as f64 + 0.5) / self.sy)
    }

    pub fn to_pixel(&self, p: Vec2) -> (f64, f64) {
        (p.x * self.sx, p.y * self.sy)
    }
}

/// Silhouette mask of a container, scanning only its bounding box.
pub fn container_mask(c: &Container, grid: &PixelGrid) -> Vec<u8> {
    let mut mask = vec![0u8; grid.width * grid.height];
    let (lo, hi) = c.bounds();
    let margin = 1.0;
    let x0 = (((lo.x - margin) * grid.sx).floor().max(0.0)) as usize;
    let y0 = (((lo.y - margin) * grid.sy).floor().max(0.0)) as usize;
    let x1 = (((hi.x + margin) * grid.sx).ceil() as usize).min(grid.width);
    let y1 = (((hi.y + margin) * grid.sy).ceil() as usize).min(grid.height);
    for py in y0..y1 {
        for px in x0..x1 {
            if c.covers(grid.center(px, py), 0.0) {
                mask[py * grid.width + px] = 1;
            }
        }
    }
    mask
}

/// Disc splats of every particle followed by one 3×3 closing. A particle
/// inside one of `clips` (container, its mask) only marks that mask's pixels.
pub fn liquid_mask(state: &SimState, grid: &PixelGrid, clips: &[(&Container, &[u8])]) -> Vec<u8> {
    let (w, h) = (grid.width, grid.height);
    let mut mask = vec![0u8; w * h];
    let r2 = SPLAT_RADIUS * SPLAT_RADIUS;
    for p in &state.particles {
        let clip = clips
            .iter()
            .find(|(c, _)| point_in_polygon(&c.outline, p.pos))
            .map(|(_, m)| *m);
        let (cx, cy) = grid.to_pixel(p.pos);
        let rx = SPLAT_RADIUS * grid.sx;
        let ry = SPLAT_RADIUS * grid.sy;
        let x0 = (cx - rx).floor().max(0.0) as usize;
        let y0 = (cy - ry).floor().max(0.0) as usize;
        let x1 = ((cx + rx).ceil().max(0.0) as usize).min(w);
        let y1 = ((cy + ry).ceil().max(0.0) as usize).min(h);
        for py in y0..y1 {
            for px in x0..x1 {
                let d = grid.center(px, py).sub(p.pos);
                if d.dot(d) <= r2 && clip.map_or(true, |m| m[py * w + px] != 0) {
                    mask[py * w + px] = 1;
                }
            }
        }
    }
    close3x3(&mask, w, h)
}

fn morph3x3(mask: &[u8], w: usize, h: usize, dilate: bool) -> Vec<u8> {
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut any = false;
            let mut all = true;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let v = mask[ny * w + nx] != 0;
                    any |= v;
                    all &= v;
                }
            }
            out[y * w + x] = u8::from(if dilate { any } else { all });
        }
    }
    out
}

/// Morphological closing; never removes a set pixel.
pub fn close3x3(mask: &[u8], w: usize, h: usize) -> Vec<u8> {
    if w == 0 || h == 0 {
        return mask.to_vec();
    }
    morph3x3(&morph3x3(mask, w, h, true), w, h, false)
}

pub fn rasterize_labels(state: &SimState, geometry: &SceneGeometry, height: usize, width: usize) -> LabelRaster {
    let grid = PixelGrid::new(width, height);
    let cup_shape = geometry.cup_at(state.tilt);
    let cup = container_mask(&cup_shape, &grid);
    let bowl = container_mask(&geometry.bowl, &grid);
    let liquid = liquid_mask(state, &grid, &[(&cup_shape, &cup[..]), (&geometry.bowl, &bowl[..])]);
    let visible = (0..width * height)
        .map(|i| {
            let class = if cup[i] != 0 {
                VisibleClass::Cup
            } else if bowl[i] != 0 {
                VisibleClass::Bowl
            } else if liquid[i] != 0 {
                VisibleClass::Liquid
            } else {
                VisibleClass::Background
            };
            class as u8
        })
        .collect();
    LabelRaster {
        width,
        height,
        cup,
        bowl,
        liquid,
        visible,
    }
}

impl LabelRaster {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn visible_liquid(&self) -> impl Iterator<Item = bool> + '_ {
        self.visible.iter().map(|&v| v == VisibleClass::Liquid as u8)
    }

    pub fn visible_liquid_count(&self) -> usize {
        self.visible_liquid().filter(|&b| b).count()
    }

    pub fn liquid_count(&self) -> usize {
        self.liquid.iter().filter(|&&v| v != 0).count()
    }

    pub fn occluded_liquid_count(&self) -> usize {
        self.liquid
            .iter()
            .zip(&self.visible)
            .filter(|(&l, &v)| l != 0 && v != VisibleClass::Liquid as u8)
            .count()
    }

    /// Channels (cup, bowl, liquid, visible_class).
    pub fn to_tensor(&self) -> Tensor {
        let n = self.len();
        let mut data = Vec::with_capacity(4 * n);
        for ch in [&self.cup, &self.bowl, &self.liquid, &self.visible] {
            data.extend(ch.iter().map(|&v| v as f32));
        }
        Tensor::from_vec(Shape::new(1, 4, self.height, self.width), data).expect("label length")
    }

    /// RGBA encoding: R = cup·255, G = bowl·255, B = liquid·255, A = visible_class·64.
    pub fn to_rgba(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * self.len());
        for i in 0..self.len() {
            out.extend_from_slice(&[
                self.cup[i] * 255,
                self.bowl[i] * 255,
                self.liquid[i] * 255,
                self.visible[i] * 64,
            ]);
        }
        out
    }

    pub fn from_rgba(width: usize, height: usize, rgba: &[u8]) -> Result<Self> {
        contract!(
            rgba.len() == 4 * width * height,
            "label buffer holds {} bytes, expected {}",
            rgba.len(),
            4 * width * height
        );
        let mut r = LabelRaster {
            width,
            height,
            cup: Vec::with_capacity(width * height),
            bowl: Vec::with_capacity(width * height),
            liquid: Vec::with_capacity(width * height),
            visible: Vec::with_capacity(width * height),
        };
        for px in rgba.chunks_exact(4) {
            contract!(
                px[..3].iter().all(|&v| v == 0 || v == 255) && px[3] % 64 == 0,
                "label pixel {px:?} is not a valid encoding"
            );
            r.cup.push(px[0] / 255);
            r.bowl.push(px[1] / 255);
            r.liquid.push(px[2] / 255);
            r.visible.push(px[3] / 64);
        }
        Ok(r)
    }
}

/// One-hot (background, cup, bowl, visible liquid) built from the visible
/// class alone, so occluded liquid never appears.
pub fn make_segmented_input(label: &LabelRaster) -> Tensor {
    let n = label.len();
    let mut data = vec![0.0f32; 4 * n];
    for (i, &v) in label.visible.iter().enumerate() {
        data[v as usize * n + i] = 1.0;
    }
    Tensor::from_vec(Shape::new(1, 4, label.height, label.width), data).expect("one-hot length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::scenario::{BowlShape, CupShape, Scenario};
    use crate::simgen::sim::Particle;

    fn scene() -> SceneGeometry {
        SceneGeometry::new(&Scenario::example(CupShape::Straight, BowlShape::Wide))
    }

    fn state_with(points: &[Vec2]) -> SimState {
        SimState {
            particles: points
                .iter()
                .map(|&pos| Particle {
                    pos,
                    vel: Vec2::default(),
                })
                .collect(),
            tilt: 0.0,
        }
    }

    #[test]
    fn empty_scene_has_no_liquid() {
        let l = rasterize_labels(&state_with(&[]), &scene(), 48, 64);
        assert_eq!(l.liquid_count(), 0);
        assert!(l.visible.iter().all(|&v| v <= 2));
        assert!(l.cup.iter().any(|&v| v == 1) && l.bowl.iter().any(|&v| v == 1));
    }

    #[test]
    fn falling_liquid_is_visible_and_contained_is_occluded() {
        let g = scene();
        let air = Vec2::new(50.5, 30.5);
        let (_, bowl_hi) = g.bowl.bounds();
        let inside = Vec2::new(44.5, bowl_hi.y - 2.5);
        let l = rasterize_labels(&state_with(&[air, inside]), &g, 48, 64);
        let at = |p: Vec2| (p.y as usize) * 64 + p.x as usize;
        assert_eq!((l.liquid[at(air)], l.visible[at(air)]), (1, VisibleClass::Liquid as u8));
        assert_eq!((l.liquid[at(inside)], l.visible[at(inside)]), (1, VisibleClass::Bowl as u8));
        assert!(l.occluded_liquid_count() > 0);
    }

    #[test]
    fn contained_liquid_stays_inside_its_container() {
        for cup in CupShape::ALL {
            let scenario = Scenario::example(cup, BowlShape::Wide);
            let states = crate::simgen::sim::simulate_pour(&scenario);
            let g = SceneGeometry::new(&scenario);
            // settled and still upright
            let l = rasterize_labels(&states[2], &g, 48, 64);
            assert!(l.liquid_count() > 0);
            assert_eq!(l.visible_liquid_count(), 0, "{cup:?}");
            assert!(l.liquid.iter().zip(&l.cup).all(|(&q, &c)| q <= c), "{cup:?}");
        }
    }

    #[test]
    fn segmented_input_hides_occluded_liquid() {
        let g = scene();
        let (_, bowl_hi) = g.bowl.bounds();
        let l = rasterize_labels(&state_with(&[Vec2::new(44.5, bowl_hi.y - 2.5), Vec2::new(50.5, 30.5)]), &g, 48, 64);
        let seg = make_segmented_input(&l);
        let n = l.len();
        for i in 0..n {
            let col: Vec<f32> = (0..4).map(|c| seg.data()[c * n + i]).collect();
            assert_eq!(col.iter().sum::<f32>(), 1.0);
            if l.visible[i] == VisibleClass::Bowl as u8 {
                assert_eq!(col, vec![0.0, 0.0, 1.0, 0.0]);
            }
            if l.liquid[i] == 1 && l.visible[i] == VisibleClass::Cup as u8 {
                assert_eq!(col, vec![0.0, 1.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn rgba_round_trip() {
        let g = scene();
        let l = rasterize_labels(&state_with(&[Vec2::new(50.5, 30.5)]), &g, 30, 40);
        assert_eq!(LabelRaster::from_rgba(40, 30, &l.to_rgba()).unwrap(), l);
        assert!(LabelRaster::from_rgba(1, 1, &[3, 0, 0, 0]).is_err());
    }

    #[test]
    fn closing_is_extensive() {
        let mask = vec![1, 0, 1, 0, 0, 0, 1, 0, 0];
        let c = close3x3(&mask, 3, 3);
        assert!(mask.iter().zip(&c).all(|(&a, &b)| b >= a));
    }
}
