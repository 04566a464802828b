//! Parameter- and dynamical-plane rasterisation into RGB buffers and PPM files.
//!
//! Images are computed in 64x64 tiles on the rayon pool; every tile owns its
//! pixels, so the result does not depend on the number of threads.

use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify_parameter, detect_attracting_cycle, ParamClass, ParamTag, DEFAULT_REFINE_TOL};
use crate::orbit::{raw_step, EscapePolicy, Param};
use crate::Complex;

pub const TILE: usize = 64;
/// Distance to a cycle point that counts as captured by its basin.
const BASIN_TOL: f64 = 1e-6;
const FIXED_TOL: f64 = 1e-12;

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid view rectangle: {0}")]
    InvalidRect(String),
    #[error("cannot write image: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewRect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub width: usize,
    pub height: usize,
}

impl ViewRect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64, width: usize, height: usize) -> Result<Self, RenderError> {
        let finite = [re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite());
        if !finite || !(re_min < re_max) || !(im_min < im_max) {
            return Err(RenderError::InvalidRect("need finite re_min < re_max and im_min < im_max".into()));
        }
        if width == 0 || height == 0 {
            return Err(RenderError::InvalidRect(format!("size {width}x{height} is empty")));
        }
        Ok(ViewRect {
            re_min,
            re_max,
            im_min,
            im_max,
            width,
            height,
        })
    }

    /// Centre of pixel `(x, y)`; row 0 is the top edge.
    pub fn pixel_center(&self, x: usize, y: usize) -> Complex {
        let re = self.re_min + (x as f64 + 0.5) * (self.re_max - self.re_min) / self.width as f64;
        let im = self.im_max - (y as f64 + 0.5) * (self.im_max - self.im_min) / self.height as f64;
        Complex::new(re, im)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer {
            width,
            height,
            pixels: vec![0; 3 * width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Binary PPM encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    /// Attracting parameters, indexed by `period mod len`.
    pub attracting: Vec<Rgb>,
    /// Escape gradient endpoints: fast escape to slow escape.
    pub escape_fast: Rgb,
    pub escape_slow: Rgb,
    /// Escape index at which the gradient saturates.
    pub escape_span: usize,
    pub candidate: Rgb,
    pub undecided: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            attracting: vec![
                [230, 159, 0],
                [86, 180, 233],
                [0, 158, 115],
                [240, 228, 66],
                [0, 114, 178],
                [213, 94, 0],
                [204, 121, 167],
            ],
            escape_fast: [40, 40, 70],
            escape_slow: [190, 190, 255],
            escape_span: 32,
            candidate: [255, 0, 0],
            undecided: [0, 0, 0],
        }
    }
}

impl Palette {
    pub fn attracting_color(&self, period: usize) -> Rgb {
        self.attracting[period % self.attracting.len()]
    }

    pub fn escape_color(&self, index: usize) -> Rgb {
        let t = index.min(self.escape_span) as f64 / self.escape_span.max(1) as f64;
        let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
        [
            mix(self.escape_fast[0], self.escape_slow[0]),
            mix(self.escape_fast[1], self.escape_slow[1]),
            mix(self.escape_fast[2], self.escape_slow[2]),
        ]
    }

    pub fn class_color(&self, class: &ParamClass) -> Rgb {
        match class.tag {
            ParamTag::Attracting { cycle } => self.attracting_color(cycle.period),
            ParamTag::Escaping { at_index } => self.escape_color(at_index),
            ParamTag::NonRecurrentCandidate { .. } => self.candidate,
            ParamTag::Undecided => self.undecided,
        }
    }
}

/// Renders `rect` in tiles, evaluating `pixel` at every pixel centre.
fn render_tiled<F>(rect: &ViewRect, pixel: F) -> ImageBuffer
where
    F: Fn(Complex) -> Rgb + Sync,
{
    let tiles_x = rect.width.div_ceil(TILE);
    let tiles_y = rect.height.div_ceil(TILE);
    let tiles: Vec<(usize, usize, Vec<Rgb>)> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| {
            let (x0, y0) = ((t % tiles_x) * TILE, (t / tiles_x) * TILE);
            let (x1, y1) = ((x0 + TILE).min(rect.width), (y0 + TILE).min(rect.height));
            let mut buf = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for y in y0..y1 {
                for x in x0..x1 {
                    buf.push(pixel(rect.pixel_center(x, y)));
                }
            }
            (x0, y0, buf)
        })
        .collect();
    let mut img = ImageBuffer::new(rect.width, rect.height);
    for (x0, y0, buf) in tiles {
        let w = (x0 + TILE).min(rect.width) - x0;
        for (i, c) in buf.into_iter().enumerate() {
            img.set(x0 + i % w, y0 + i / w, c);
        }
    }
    img
}

/// Class of the parameter at a pixel centre; `None` for `lambda = 0`.
pub fn parameter_pixel_class(lambda: Complex, policy: &EscapePolicy, delta: f64) -> Option<ParamClass> {
    let lam = Param::new(lambda).ok()?;
    classify_parameter(lam, policy, delta).ok()
}

/// Parameter plane coloured by [`classify_parameter`].
pub fn render_parameter_plane(rect: &ViewRect, policy: &EscapePolicy, delta: f64, palette: &Palette) -> ImageBuffer {
    render_tiled(rect, |lambda| match parameter_pixel_class(lambda, policy, delta) {
        Some(class) => palette.class_color(&class),
        None => palette.undecided,
    })
}

/// Fate of a point under iteration in the dynamical plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointFate {
    /// Escaped; `steps` evaluations were attempted, the last one signalling.
    Escaped { steps: usize },
    /// Came within the basin tolerance of the attracting cycle.
    Basin { steps: usize },
    Bounded,
}

pub fn point_fate(lambda: Param, z: Complex, policy: &EscapePolicy, cycle: &[Complex]) -> PointFate {
    let mut w = z;
    for k in 0..=policy.max_iter {
        if cycle.iter().any(|c| (w - c).norm() < BASIN_TOL) {
            return PointFate::Basin { steps: k };
        }
        if k == policy.max_iter {
            break;
        }
        if !(w.re <= policy.re_threshold) {
            return PointFate::Escaped { steps: k + 1 };
        }
        match raw_step(lambda, w) {
            // a numerically fixed point stays bounded, even a repelling one
            // that rounding would otherwise push off
            Some(next) if (next - w).norm() <= FIXED_TOL * w.norm().max(1.0) => return PointFate::Bounded,
            Some(next) => w = next,
            None => return PointFate::Escaped { steps: k + 1 },
        }
    }
    PointFate::Bounded
}

/// The attracting cycle of `lambda` as a list of points, if one is found.
pub fn attracting_cycle_points(lambda: Param, policy: &EscapePolicy) -> Vec<Complex> {
    let Ok(cyc) = detect_attracting_cycle(lambda, policy, DEFAULT_REFINE_TOL) else {
        return Vec::new();
    };
    let mut pts = vec![cyc.point];
    for _ in 1..cyc.period {
        match raw_step(lambda, *pts.last().expect("non-empty")) {
            Some(w) => pts.push(w),
            None => break,
        }
    }
    pts
}

/// Dynamical plane: escape time, or basin shading when `lambda` has an
/// attracting cycle.
pub fn render_dynamical_plane(lambda: Param, rect: &ViewRect, policy: &EscapePolicy) -> ImageBuffer {
    let palette = Palette::default();
    let cycle = attracting_cycle_points(lambda, policy);
    render_tiled(rect, |z| match point_fate(lambda, z, policy, &cycle) {
        PointFate::Escaped { steps } => palette.escape_color(steps),
        PointFate::Basin { steps } => {
            let [r, g, b] = palette.attracting_color(1);
            let shade = 1.0 - 0.5 * (steps.min(64) as f64 / 64.0);
            [(r as f64 * shade) as u8, (g as f64 * shade) as u8, (b as f64 * shade) as u8]
        }
        PointFate::Bounded => palette.undecided,
    })
}

/// Writes `image` as binary PPM through a temporary file and a rename.
pub fn write_ppm(image: &ImageBuffer, path: &Path) -> Result<(), RenderError> {
    write_atomic(path, &image.to_ppm())?;
    Ok(())
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TAU;

    const OMEGA: f64 = 0.567_143_290_409_783_8;

    fn point_rect(re: f64, im: f64) -> ViewRect {
        ViewRect::new(re - 0.5, re + 0.5, im - 0.5, im + 0.5, 1, 1).unwrap()
    }

    #[test]
    fn one_pixel_parameter_planes() {
        let pal = Palette::default();
        let pol = EscapePolicy::default();
        let img = render_parameter_plane(&point_rect(-1.0, 0.0), &pol, 1.0, &pal);
        assert_eq!(img.get(0, 0), pal.attracting_color(1));
        let img = render_parameter_plane(&point_rect(1.0, 0.0), &pol, 1.0, &pal);
        assert_eq!(img.get(0, 0), pal.escape_color(4));
        let rect = ViewRect::new(-2.0, 2.0, -0.5, 0.5, 2, 1).unwrap();
        let img = render_parameter_plane(&rect, &pol, 1.0, &pal);
        assert_eq!(img.get(0, 0), pal.attracting_color(1));
        assert_eq!(img.get(1, 0), pal.escape_color(4));
    }

    #[test]
    fn origin_pixel_is_undecided() {
        let pal = Palette::default();
        let img = render_parameter_plane(&point_rect(0.0, 0.0), &EscapePolicy::default(), 1.0, &pal);
        assert_eq!(img.get(0, 0), pal.undecided);
    }

    #[test]
    fn dynamical_fates() {
        let pol = EscapePolicy::default();
        let l = Param::from_parts(-1.0, 0.0).unwrap();
        let cyc = attracting_cycle_points(l, &pol);
        assert_eq!(point_fate(l, Complex::new(-OMEGA, 0.0), &pol, &cyc), PointFate::Basin { steps: 0 });
        let l = Param::from_parts(1.0, 0.0).unwrap();
        assert_eq!(point_fate(l, Complex::new(100.0, 0.0), &pol, &[]), PointFate::Escaped { steps: 1 });
        let l = Param::from_parts(0.0, TAU).unwrap();
        assert_eq!(point_fate(l, Complex::new(0.0, TAU), &pol, &[]), PointFate::Bounded);
    }

    #[test]
    fn ppm_header_and_rect_validation() {
        let mut img = ImageBuffer::new(1, 1);
        img.set(0, 0, [255, 255, 255]);
        assert_eq!(img.to_ppm(), b"P6\n1 1\n255\n\xff\xff\xff".to_vec());
        assert!(ViewRect::new(-1.0, 1.0, -1.0, 1.0, 0, 0).is_err());
        assert!(ViewRect::new(1.0, -1.0, -1.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn tiles_match_untiled() {
        let rect = ViewRect::new(-4.0, 4.0, -4.0, 4.0, 70, 67).unwrap();
        let pol = EscapePolicy::new(50.0, 60).unwrap();
        let pal = Palette::default();
        let img = render_parameter_plane(&rect, &pol, 1.0, &pal);
        for y in 0..rect.height {
            for x in 0..rect.width {
                let class = parameter_pixel_class(rect.pixel_center(x, y), &pol, 1.0);
                let want = class.map_or(pal.undecided, |c| pal.class_color(&c));
                assert_eq!(img.get(x, y), want);
            }
        }
    }
}
