//! 3D lookup tables: baking from a recipe, trilinear application and the
//! `.cube` text format.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Encoding, RgbImage};
use crate::pipeline::TransferRecipe;

pub const DEFAULT_LUT_SIZE: usize = 33;
pub const MAX_LUT_SIZE: usize = 256;

/// Lattice over `[0, 1]^3` with entries in row-major order, R fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Lut3D {
    pub size: usize,
    pub title: Option<String>,
    pub entries: Vec<[f64; 3]>,
}

fn check_size(size: usize) -> Result<()> {
    if !(2..=MAX_LUT_SIZE).contains(&size) {
        return Err(Error::InvalidConfig(format!("LUT size {size} outside 2..={MAX_LUT_SIZE}")));
    }
    Ok(())
}

impl Lut3D {
    pub fn identity(size: usize) -> Result<Self> {
        check_size(size)?;
        let n = size * size * size;
        let s = (size - 1) as f64;
        let entries = (0..n)
            .map(|i| [(i % size) as f64 / s, (i / size % size) as f64 / s, (i / (size * size)) as f64 / s])
            .collect();
        Ok(Lut3D {
            size,
            title: None,
            entries,
        })
    }

    #[inline]
    pub fn index(&self, r: usize, g: usize, b: usize) -> usize {
        r + self.size * (g + self.size * b)
    }

    /// Entries outside `[0, 1]`.
    pub fn out_of_range(&self) -> usize {
        self.entries.iter().flatten().filter(|v| !(0.0..=1.0).contains(*v)).count()
    }

    /// Trilinear interpolation; inputs are clamped to the lattice hull.
    pub fn sample(&self, rgb: [f64; 3]) -> [f64; 3] {
        let s = (self.size - 1) as f64;
        let mut i0 = [0usize; 3];
        let mut f = [0.0; 3];
        for c in 0..3 {
            let x = (rgb[c].clamp(0.0, 1.0) * s).min(s);
            let base = (x.floor() as usize).min(self.size - 2);
            i0[c] = base;
            f[c] = x - base as f64;
        }
        let at = |dr: usize, dg: usize, db: usize| self.entries[self.index(i0[0] + dr, i0[1] + dg, i0[2] + db)];
        let lerp = |a: [f64; 3], b: [f64; 3], t: f64| -> [f64; 3] { std::array::from_fn(|c| a[c] + (b[c] - a[c]) * t) };
        let c00 = lerp(at(0, 0, 0), at(1, 0, 0), f[0]);
        let c10 = lerp(at(0, 1, 0), at(1, 1, 0), f[0]);
        let c01 = lerp(at(0, 0, 1), at(1, 0, 1), f[0]);
        let c11 = lerp(at(0, 1, 1), at(1, 1, 1), f[0]);
        lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2])
    }
}

/// Carries every lattice node, as a gamma-encoded color, through the
/// point-wise stages of `recipe`. A spatial kernel in the recipe is not
/// baked.
pub fn bake_lut(recipe: &TransferRecipe, size: usize) -> Result<Lut3D> {
    check_size(size)?;
    let compiled = recipe.compile()?;
    if recipe.kernel.is_some() {
        log::warn!("recipe carries a spatial kernel; it is not part of the LUT and must be applied per frame");
    }
    let mut lut = Lut3D::identity(size)?;
    lut.entries.par_iter_mut().for_each(|e| *e = compiled.apply_pixel(*e));
    if let Some(i) = lut.entries.iter().position(|e| !e.iter().all(|v| v.is_finite())) {
        return Err(Error::RecipeIncomplete(format!("non-finite LUT entry at node {i}")));
    }
    Ok(lut)
}

/// Applies a LUT to a gamma-encoded image.
pub fn apply_lut(img: &RgbImage, lut: &Lut3D) -> RgbImage {
    img.map_pixels(Encoding::Gamma, |p| lut.sample(p))
}

/// Single-precision copy of a LUT laid out for fast interleaved frames.
#[derive(Debug, Clone)]
pub struct FastLut {
    /// Index of the last cell along an axis.
    top: usize,
    /// Node strides along G and B.
    sg: usize,
    sb: usize,
    scale: f32,
    /// RGB plus padding per node.
    nodes: Vec<[f32; 4]>,
}

impl From<&Lut3D> for FastLut {
    fn from(lut: &Lut3D) -> Self {
        FastLut {
            top: lut.size - 2,
            sg: lut.size,
            sb: lut.size * lut.size,
            scale: (lut.size - 1) as f32,
            nodes: lut.entries.iter().map(|e| [e[0] as f32, e[1] as f32, e[2] as f32, 0.0]).collect(),
        }
    }
}

impl FastLut {
    #[inline(always)]
    fn sample(&self, r: f32, g: f32, b: f32) -> [f32; 4] {
        let split = |v: f32| {
            let x = v.clamp(0.0, 1.0) * self.scale;
            // Truncation is floor here since x >= 0.
            let i = (x as usize).min(self.top);
            (i, x - i as f32)
        };
        let (ir, fr) = split(r);
        let (ig, fg) = split(g);
        let (ib, fb) = split(b);
        let (sg, sb) = (self.sg, self.sb);
        let nd = &self.nodes[ir + ig * sg + ib * sb..];
        let lerp = |a: [f32; 4], b: [f32; 4], t: f32| -> [f32; 4] {
            [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t, 0.0]
        };
        let c00 = lerp(nd[0], nd[1], fr);
        let c10 = lerp(nd[sg], nd[sg + 1], fr);
        let c01 = lerp(nd[sb], nd[sb + 1], fr);
        let c11 = lerp(nd[sg + sb], nd[sg + sb + 1], fr);
        lerp(lerp(c00, c10, fg), lerp(c01, c11, fg), fb)
    }

    /// Applies the LUT to interleaved RGB `input`, writing `output`.
    pub fn apply_interleaved(&self, input: &[f32], output: &mut [f32]) {
        assert_eq!(input.len(), output.len());
        assert_eq!(input.len() % 3, 0);
        const CHUNK: usize = 3 * 4096;
        output.par_chunks_mut(CHUNK).zip(input.par_chunks(CHUNK)).for_each(|(out, inp)| {
            for (o, i) in out.chunks_exact_mut(3).zip(inp.chunks_exact(3)) {
                let v = self.sample(i[0], i[1], i[2]);
                o.copy_from_slice(&v[..3]);
            }
        });
    }
}

/// `.cube` text: optional title, `LUT_3D_SIZE`, then one `r g b` line per
/// node with 6 decimals, R fastest. Entries are clamped to `[0, 1]`.
pub fn write_cube(lut: &Lut3D) -> String {
    let clamped = lut.out_of_range();
    if clamped > 0 {
        log::warn!("{clamped} LUT values outside [0, 1] clamped on write");
    }
    let mut s = String::with_capacity(lut.entries.len() * 27 + 64);
    if let Some(t) = &lut.title {
        let _ = writeln!(s, "TITLE \"{}\"", t.replace('"', "'"));
    }
    let _ = writeln!(s, "LUT_3D_SIZE {}", lut.size);
    for e in &lut.entries {
        // Adding zero turns -0.0 into 0.0.
        let [r, g, b] = e.map(|v| v.clamp(0.0, 1.0) + 0.0);
        let _ = writeln!(s, "{r:.6} {g:.6} {b:.6}");
    }
    s
}

/// Parses `.cube` text. Comments (`#`), blank lines and default `DOMAIN_MIN`
/// / `DOMAIN_MAX` lines are accepted.
pub fn read_cube(text: &str) -> Result<Lut3D> {
    let mut title = None;
    let mut size: Option<usize> = None;
    let mut entries = Vec::new();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().expect("non-empty line");
        match head {
            "TITLE" => {
                title = Some(line["TITLE".len()..].trim().trim_matches('"').to_string());
            }
            "LUT_3D_SIZE" => {
                let n: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(ln, "LUT_3D_SIZE needs an integer".into()))?;
                check_size(n).map_err(|e| parse_err(ln, e.to_string()))?;
                if size.replace(n).is_some() {
                    return Err(parse_err(ln, "repeated LUT_3D_SIZE".into()));
                }
            }
            "LUT_1D_SIZE" => return Err(Error::UnsupportedFormat("1D .cube LUT".into())),
            "DOMAIN_MIN" | "DOMAIN_MAX" => {
                let want = if head == "DOMAIN_MIN" { 0.0 } else { 1.0 };
                let vals: Vec<f64> = tokens.map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(ln, format!("{head}: {e}")))?;
                if vals.len() != 3 {
                    return Err(parse_err(ln, format!("{head} needs three values")));
                }
                if vals.iter().any(|v| *v != want) {
                    return Err(Error::UnsupportedFormat(format!("non-default {head}")));
                }
            }
            _ => {
                if size.is_none() {
                    return Err(parse_err(ln, format!("data or keyword `{head}` before LUT_3D_SIZE")));
                }
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(ln, format!("bad value: {e}")))?;
                let [r, g, b] = vals[..] else {
                    return Err(parse_err(ln, format!("expected 3 values, found {}", vals.len())));
                };
                if !(r.is_finite() && g.is_finite() && b.is_finite()) {
                    return Err(parse_err(ln, "non-finite value".into()));
                }
                entries.push([r, g, b]);
            }
        }
    }
    let size = size.ok_or_else(|| parse_err(text.lines().count().max(1), "missing LUT_3D_SIZE".into()))?;
    let expected = size * size * size;
    if entries.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: entries.len(),
        });
    }
    Ok(Lut3D { size, title, entries })
}
