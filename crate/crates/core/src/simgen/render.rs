//! Frame renderer. Liquid has no colour of its own: visible liquid pixels
//! resample the liquid-free image at an offset along the smoothed mask
//! gradient, are slightly attenuated, and carry sparse specular spikes.

use serde::{Deserialize, Serialize};

use crate::simgen::geometry::{SceneGeometry, Vec2, TABLE_Y};
use crate::simgen::hash::{mix, unit};
use crate::simgen::raster::{LabelRaster, PixelGrid};
use crate::simgen::scenario::Scenario;

/// Constants of the liquid pass, recorded in every manifest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    /// Largest refraction offset in pixels.
    pub refraction_px: f64,
    /// Probability that a boundary pixel receives a specular spike.
    pub specular_probability: f64,
    /// Multiplier on resampled colour inside liquid.
    pub attenuation: f64,
    /// Amplitude of the per-frame background noise.
    pub noise_amplitude: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            refraction_px: 2.0,
            specular_probability: 0.15,
            attenuation: 1.0,
            noise_amplitude: 0.04,
        }
    }
}

/// Linear RGB image in [0, 1], row-major, 3 floats per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<f32>,
}

impl Image {
    fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            rgb: vec![0.0; 3 * width * height],
        }
    }

    fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    fn put(&mut self, x: usize, y: usize, c: [f32; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    /// Bilinear lookup with clamped borders.
    fn sample(&self, x: f64, y: f64) -> [f32; 3] {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        std::array::from_fn(|k| {
            (a[k] * (1.0 - fx) + b[k] * fx) * (1.0 - fy) + (c[k] * (1.0 - fx) + d[k] * fx) * fy
        })
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }
}

const PALETTE: [[f32; 3]; 6] = [
    [0.80, 0.25, 0.20],
    [0.20, 0.45, 0.75],
    [0.85, 0.70, 0.20],
    [0.30, 0.65, 0.35],
    [0.60, 0.35, 0.65],
    [0.90, 0.90, 0.88],
];

fn background(id: u32, p: Vec2) -> [f32; 3] {
    let v = match id {
        0 => {
            let s = 0.5 + 0.25 * (p.y * 0.8).sin();
            [s, s * 0.9, s * 0.8]
        }
        1 => {
            let on = ((p.x / 4.0).floor() as i64 + (p.y / 4.0).floor() as i64) % 2 == 0;
            if on {
                [0.70, 0.72, 0.75]
            } else {
                [0.35, 0.38, 0.42]
            }
        }
        2 => {
            let g = 0.3 + 0.4 * (p.x + p.y) / 112.0;
            let blob = 0.12 * ((p.x * 0.3).sin() * (p.y * 0.25).cos());
            [g + blob, 0.5 + blob, 0.7 - g * 0.5]
        }
        _ => {
            let cell = |x: i64, y: i64| unit(&[id as u64, x as u64, y as u64]);
            let (gx, gy) = (p.x / 6.0, p.y / 6.0);
            let (x0, y0) = (gx.floor() as i64, gy.floor() as i64);
            let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
            let top = cell(x0, y0) * (1.0 - fx) + cell(x0 + 1, y0) * fx;
            let bot = cell(x0, y0 + 1) * (1.0 - fx) + cell(x0 + 1, y0 + 1) * fx;
            let n = 0.3 + 0.5 * (top * (1.0 - fy) + bot * fy);
            [n * 0.9, n, n * 0.7]
        }
    };
    v.map(|c| c as f32)
}

fn shade(base: [f32; 3], k: f64) -> [f32; 3] {
    base.map(|c| (c as f64 * k) as f32)
}

/// Image of the scene with liquid omitted.
pub fn render_scene(
    label: &LabelRaster,
    geometry: &SceneGeometry,
    tilt: f64,
    scenario: &Scenario,
    frame: usize,
    settings: &RenderSettings,
) -> Image {
    let grid = PixelGrid::new(label.width, label.height);
    let mut img = Image::new(label.width, label.height);
    let cup_color = PALETTE[(mix(scenario.seed, 1) % PALETTE.len() as u64) as usize];
    let bowl_color = PALETTE[(mix(scenario.seed, 2) % PALETTE.len() as u64) as usize];
    let noise_key = mix(scenario.seed, 0xa015e);
    for py in 0..label.height {
        for px in 0..label.width {
            let p = grid.center(px, py);
            let i = py * label.width + px;
            let c = if label.cup[i] != 0 {
                let local = p.sub(geometry.pivot).rotate(-tilt);
                shade(cup_color, 0.8 + 0.15 * (local.y * 1.5).sin())
            } else if label.bowl[i] != 0 {
                shade(bowl_color, 0.75 + 0.2 * (p.x * 0.9).cos() * (p.y * 0.4).sin().abs())
            } else if p.y > TABLE_Y {
                shade([0.55, 0.38, 0.22], 0.85 + 0.1 * (p.x * 2.1 + (p.y * 0.7).sin()).sin())
            } else {
                background(scenario.background_id, p)
            };
            let n = |ch: u64| {
                ((unit(&[noise_key, frame as u64, px as u64, py as u64, ch]) - 0.5) * 2.0 * settings.noise_amplitude) as f32
            };
            img.put(px, py, [c[0] + n(0), c[1] + n(1), c[2] + n(2)].map(|v| v.clamp(0.0, 1.0)));
        }
    }
    img
}

/// Box blur of a binary mask with radius 2.
fn blur(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut n = 0.0;
            for ny in y.saturating_sub(2)..=(y + 2).min(h - 1) {
                for nx in x.saturating_sub(2)..=(x + 2).min(w - 1) {
                    sum += f64::from(u8::from(mask[ny * w + nx]));
                    n += 1.0;
                }
            }
            out[y * w + x] = sum / n;
        }
    }
    out
}

/// Applies refraction, attenuation and specular spikes at visible liquid pixels.
pub fn liquid_pass(scene: &Image, label: &LabelRaster, scenario: &Scenario, frame: usize, settings: &RenderSettings) -> Image {
    let (w, h) = (label.width, label.height);
    let vis: Vec<bool> = label.visible_liquid().collect();
    if !vis.iter().any(|&v| v) {
        return scene.clone();
    }
    let m = blur(&vis, w, h);
    let at = |x: isize, y: isize| m[(y.clamp(0, h as isize - 1) as usize) * w + x.clamp(0, w as isize - 1) as usize];
    let spec_key = mix(scenario.seed, 0x5bec);
    let mut out = scene.clone();
    for y in 0..h {
        for x in 0..w {
            if !vis[y * w + x] {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            let gx = (at(xi + 1, yi) - at(xi - 1, yi)) / 2.0;
            let gy = (at(xi, yi + 1) - at(xi, yi - 1)) / 2.0;
            // a hard edge under the 5×5 blur has gradient 0.2 per pixel
            let scale = settings.refraction_px / 0.2;
            let mut off = Vec2::new(gx * scale, gy * scale);
            let len = off.norm();
            if len > settings.refraction_px {
                off = off.scale(settings.refraction_px / len);
            }
            let c = scene.sample(x as f64 + off.x, y as f64 + off.y);
            let mut c = c.map(|v| v * settings.attenuation as f32);
            let boundary = [(0, -1), (0, 1), (-1, 0), (1, 0)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (xi + dx, yi + dy);
                nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize || !vis[ny as usize * w + nx as usize]
            });
            if boundary && unit(&[spec_key, frame as u64, x as u64, y as u64]) < settings.specular_probability {
                c = c.map(|v| v + 0.6 * (1.0 - v));
            }
            out.put(x, y, c);
        }
    }
    out
}

pub fn render_frame(
    label: &LabelRaster,
    geometry: &SceneGeometry,
    tilt: f64,
    scenario: &Scenario,
    frame: usize,
    settings: &RenderSettings,
) -> Image {
    let scene = render_scene(label, geometry, tilt, scenario, frame, settings);
    liquid_pass(&scene, label, scenario, frame, settings)
}
