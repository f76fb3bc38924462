//! Synthetic video: textured convex polygons moving over a slowly panning
//! textured background, with exact object boundaries and flow.

use std::f32::consts::TAU;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::FlowField;
use crate::image::{Image, Mask};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub n_objects: usize,
    pub min_radius: f32,
    pub max_radius: f32,
    /// Object speed range in pixels per frame.
    pub min_speed: f32,
    pub max_speed: f32,
    /// Largest object rotation per frame, radians.
    pub max_spin: f32,
    pub pan_speed: f32,
    /// Amplitude of the texture relative to the color range.
    pub texture_contrast: f32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            width: 96,
            height: 72,
            n_frames: 6,
            n_objects: 3,
            min_radius: 10.0,
            max_radius: 20.0,
            min_speed: 2.5,
            max_speed: 5.0,
            max_spin: 0.03,
            pan_speed: 0.5,
            texture_contrast: 0.25,
        }
    }
}

/// Sum of a few random plane waves, roughly in [-1, 1].
#[derive(Debug, Clone)]
struct Texture {
    waves: Vec<(f32, f32, f32)>,
    tint: [f32; 3],
}

impl Texture {
    fn random(rng: &mut impl Rng) -> Self {
        let waves = (0..3)
            .map(|_| {
                let (a, f) = (rng.gen_range(0.0..TAU), rng.gen_range(0.25..0.9));
                (f * a.cos(), f * a.sin(), rng.gen_range(0.0..TAU))
            })
            .collect();
        let tint = [
            rng.gen_range(0.5..1.0),
            rng.gen_range(0.5..1.0),
            rng.gen_range(0.5..1.0),
        ];
        Texture { waves, tint }
    }

    fn at(&self, x: f32, y: f32) -> f32 {
        self.waves
            .iter()
            .map(|&(kx, ky, ph)| (kx * x + ky * y + ph).sin())
            .sum::<f32>()
            / 3.0
    }
}

#[derive(Debug, Clone)]
struct Object {
    /// Vertices relative to the centre, counter-clockwise.
    shape: Vec<(f32, f32)>,
    centre: (f32, f32),
    vel: (f32, f32),
    spin: f32,
    color: [f32; 3],
    texture: Texture,
}

impl Object {
    fn pose(&self, t: f32) -> ((f32, f32), f32) {
        (
            (self.centre.0 + t * self.vel.0, self.centre.1 + t * self.vel.1),
            t * self.spin,
        )
    }

    /// Body coordinates of the world point (x, y) at time t, if inside.
    fn local(&self, x: f32, y: f32, t: f32) -> Option<(f32, f32)> {
        let ((cx, cy), a) = self.pose(t);
        let (s, c) = a.sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
        let n = self.shape.len();
        let inside = (0..n).all(|i| {
            let (ax, ay) = self.shape[i];
            let (bx, by) = self.shape[(i + 1) % n];
            (bx - ax) * (ly - ay) - (by - ay) * (lx - ax) >= 0.0
        });
        inside.then_some((lx, ly))
    }

    /// Flow of the body point at (x, y) from time t to t + 1.
    fn flow_at(&self, x: f32, y: f32, t: f32) -> (f32, f32) {
        let ((cx, cy), _) = self.pose(t);
        let (s, c) = self.spin.sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        (self.vel.0 + c * dx - s * dy - dx, self.vel.1 + s * dx + c * dy - dy)
    }
}

/// One rendered frame: the image, its true boundaries (one pixel wide) and
/// the flow to the next frame.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub image: Image,
    pub edges: Mask,
    pub flow: FlowField,
}

struct Scene {
    background: Texture,
    bg_color: [f32; 3],
    pan: (f32, f32),
    objects: Vec<Object>,
    contrast: f32,
}

impl Scene {
    fn random(p: &SynthParams, rng: &mut impl Rng) -> Self {
        let a = rng.gen_range(0.0..TAU);
        let objects = (0..p.n_objects)
            .map(|_| {
                let r = rng.gen_range(p.min_radius..=p.max_radius);
                let n = rng.gen_range(3..=6);
                let mut angles: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
                angles.sort_by(f32::total_cmp);
                let shape = angles.iter().map(|a| (r * a.cos(), r * a.sin())).collect();
                let speed = rng.gen_range(p.min_speed..=p.max_speed);
                let dir = rng.gen_range(0.0..TAU);
                let vel = (speed * dir.cos(), speed * dir.sin());
                // start so that the object crosses the frame centre mid-sequence
                let mid = 0.5 * (p.n_frames.saturating_sub(1)) as f32;
                let target = (
                    rng.gen_range(0.25..0.75) * p.width as f32,
                    rng.gen_range(0.25..0.75) * p.height as f32,
                );
                Object {
                    shape,
                    centre: (target.0 - mid * vel.0, target.1 - mid * vel.1),
                    vel,
                    spin: rng.gen_range(-p.max_spin..=p.max_spin),
                    color: [rng.gen(), rng.gen(), rng.gen()],
                    texture: Texture::random(rng),
                }
            })
            .collect();
        Scene {
            background: Texture::random(rng),
            bg_color: [rng.gen(), rng.gen(), rng.gen()],
            pan: (p.pan_speed * a.cos(), p.pan_speed * a.sin()),
            objects,
            contrast: p.texture_contrast,
        }
    }

    /// Topmost object at (x, y) with its body coordinates; `None` is background.
    fn hit(&self, x: f32, y: f32, t: f32) -> Option<(usize, (f32, f32))> {
        self.objects
            .iter()
            .enumerate()
            .rev()
            .find_map(|(k, o)| o.local(x, y, t).map(|l| (k, l)))
    }

    fn color(&self, x: f32, y: f32, t: f32) -> [f32; 3] {
        let (base, tex, (u, v)) = match self.hit(x, y, t) {
            Some((k, l)) => (self.objects[k].color, &self.objects[k].texture, l),
            None => (
                self.bg_color,
                &self.background,
                (x - t * self.pan.0, y - t * self.pan.1),
            ),
        };
        let n = tex.at(u, v) * self.contrast;
        std::array::from_fn(|c| {
            (base[c] * (1.0 - self.contrast) + n * tex.tint[c] + 0.5 * self.contrast).clamp(0.0, 1.0)
        })
    }

    fn render(&self, w: usize, h: usize, t: f32) -> Result<SynthFrame> {
        // 2x2 supersampling
        const OFF: [f32; 2] = [0.25, 0.75];
        let mut rgb = vec![0.0f32; 3 * w * h];
        let mut label = vec![0usize; w * h];
        let mut u = vec![0.0f32; w * h];
        let mut v = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                for oy in OFF {
                    for ox in OFF {
                        let c = self.color(x as f32 + ox, y as f32 + oy, t);
                        for k in 0..3 {
                            rgb[k * w * h + i] += 0.25 * c[k];
                        }
                    }
                }
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                let hit = self.hit(px, py, t);
                label[i] = hit.map_or(0, |(k, _)| k + 1);
                let f = match hit {
                    Some((k, _)) => self.objects[k].flow_at(px, py, t),
                    None => self.pan,
                };
                u[i] = f.0;
                v[i] = f.1;
            }
        }
        let edges = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                (x + 1 < w && label[i + 1] != label[i]) || (y + 1 < h && label[i + w] != label[i])
            })
            .collect();
        Ok(SynthFrame {
            image: Image::new(w, h, 3, rgb)?,
            edges: Mask::new(w, h, edges)?,
            flow: FlowField::new(w, h, u, v)?,
        })
    }
}

/// Renders sequence number `index` of the corpus generated from `seed`.
pub fn sequence(params: &SynthParams, seed: u64, index: u64) -> Result<Vec<SynthFrame>> {
    if params.width < 32 || params.height < 32 || params.n_frames < 2 {
        return Err(invalid!(
            "synthetic frames must be at least 32x32 and sequences at least 2 frames long"
        ));
    }
    if !(params.min_radius > 0.0 && params.min_radius <= params.max_radius && params.min_speed <= params.max_speed) {
        return Err(invalid!("inconsistent synthetic radius or speed range"));
    }
    let mut rng = stream(seed, &[0x5e9, index]);
    let scene = Scene::random(params, &mut rng);
    (0..params.n_frames)
        .map(|t| scene.render(params.width, params.height, t as f32))
        .collect()
}

/// Writes `n_sequences` sequences as `<root>/seqNNN/fNNN.png`, true
/// boundaries as `<root>/gt/seqNNN_fNNN.png` and flow to the next frame as
/// `<root>/flow/seqNNN_fNNN.flo`.
pub fn write_corpus(root: impl AsRef<Path>, params: &SynthParams, n_sequences: usize, seed: u64) -> Result<()> {
    let root = root.as_ref();
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&root.join("gt"))?;
    mkdir(&root.join("flow"))?;
    for s in 0..n_sequences {
        let dir = root.join(format!("seq{s:03}"));
        mkdir(&dir)?;
        for (t, f) in sequence(params, seed, s as u64)?.iter().enumerate() {
            let stem = format!("f{t:03}");
            f.image.write(dir.join(format!("{stem}.png")))?;
            f.edges
                .write_png(root.join("gt").join(format!("seq{s:03}_{stem}.png")))?;
            if t + 1 < params.n_frames {
                crate::flow::write_flo(&f.flow, root.join("flow").join(format!("seq{s:03}_{stem}.flo")))?;
            }
        }
    }
    Ok(())
}
