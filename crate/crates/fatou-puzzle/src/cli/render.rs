//! SVG and PNG output.

use crate::poly_core::{classify, EscapeStatus, Polynomial, C64};
use crate::puzzle::{locate, PieceGeometry, PuzzleSpec};
use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Drawing order of SVG layers, bottom first.
pub const LAYER_ORDER: [&str; 5] = ["julia", "pieces", "equipotentials", "graph", "markers"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    Basins,
    Gray,
}

/// Viewport and raster options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub width: u32,
    pub height: u32,
    pub center: [f64; 2],
    /// Width of the viewport in the complex plane.
    pub span: f64,
    pub max_iter: usize,
    pub palette: Palette,
    pub layers: Vec<String>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            center: [0.0, 0.0],
            span: 4.0,
            max_iter: 256,
            palette: Palette::Basins,
            layers: LAYER_ORDER.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RenderOptions {
    pub fn pixel(&self, i: u32, j: u32) -> C64 {
        let scale = self.span / self.width as f64;
        C64::new(
            self.center[0] + (i as f64 + 0.5 - self.width as f64 / 2.0) * scale,
            self.center[1] - (j as f64 + 0.5 - self.height as f64 / 2.0) * scale,
        )
    }

    fn to_svg(&self, z: C64) -> (f64, f64) {
        let scale = self.width as f64 / self.span;
        (
            (z.re - self.center[0]) * scale + self.width as f64 / 2.0,
            (self.center[1] - z.im) * scale + self.height as f64 / 2.0,
        )
    }

    pub fn has(&self, layer: &str) -> bool {
        self.layers.iter().any(|l| l == layer)
    }
}

/// Pixel classes of an escape-time render.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifyStats {
    pub width: u32,
    pub height: u32,
    pub escaped: u64,
    /// Bounded pixels per attracting fixed point (in `attractors` order).
    pub basins: Vec<u64>,
    pub other_bounded: u64,
    pub attractors: Vec<C64>,
}

/// Attracting fixed points of `poly` (roots of `f(z) - z` with `|f'| < 1`).
pub fn attracting_fixed(poly: &Polynomial) -> Vec<C64> {
    let mut c: Vec<C64> = poly.coeffs().to_vec();
    c[1] -= C64::new(1.0, 0.0);
    let mut out: Vec<C64> = crate::poly_core::aberth_roots(&c)
        .into_iter()
        .filter(|&z| poly.eval_deriv(z).1.norm() < 1.0 - 1e-9)
        .collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    out
}

enum PixelClass {
    Escaped(usize),
    Basin(usize),
    Bounded,
}

fn classify_pixel(poly: &Polynomial, z: C64, radius: f64, max_iter: usize, attractors: &[C64]) -> PixelClass {
    let r = classify(poly, z, radius, max_iter);
    match r.status {
        EscapeStatus::Escaped { n } => PixelClass::Escaped(n),
        EscapeStatus::Bounded { .. } => {
            let w = r.last_point;
            attractors
                .iter()
                .position(|a| (w - a).norm() < 1e-3)
                .map_or(PixelClass::Bounded, PixelClass::Basin)
        }
    }
}

const BASIN_COLORS: [[u8; 3]; 6] = [[230, 190, 60], [70, 140, 220], [200, 80, 90], [90, 180, 110], [160, 100, 200], [240, 140, 60]];

/// Escape-time raster with basin coloring; rows are computed in parallel and reassembled in order.
pub fn escape_image(poly: &Polynomial, opts: &RenderOptions) -> (RgbImage, ClassifyStats) {
    let attractors = attracting_fixed(poly);
    let radius = poly.default_escape_radius();
    let rows: Vec<Vec<PixelClass>> = (0..opts.height)
        .into_par_iter()
        .map(|j| (0..opts.width).map(|i| classify_pixel(poly, opts.pixel(i, j), radius, opts.max_iter, &attractors)).collect())
        .collect();
    let mut img = RgbImage::new(opts.width, opts.height);
    let mut stats = ClassifyStats {
        width: opts.width,
        height: opts.height,
        basins: vec![0; attractors.len()],
        attractors: attractors.clone(),
        ..Default::default()
    };
    for (j, row) in rows.iter().enumerate() {
        for (i, px) in row.iter().enumerate() {
            let color = match *px {
                PixelClass::Escaped(n) => {
                    stats.escaped += 1;
                    let v = (255.0 * (1.0 - (n as f64 / 32.0).min(1.0))) as u8;
                    [v, v, v]
                }
                PixelClass::Basin(k) => {
                    stats.basins[k] += 1;
                    match opts.palette {
                        Palette::Basins => BASIN_COLORS[k % BASIN_COLORS.len()],
                        Palette::Gray => [0, 0, 0],
                    }
                }
                PixelClass::Bounded => {
                    stats.other_bounded += 1;
                    [0, 0, 0]
                }
            };
            img.put_pixel(i as u32, j as u32, Rgb(color));
        }
    }
    (img, stats)
}

/// Raster of depth-`n` pieces: each pixel colored by its word, graph points dark.
pub fn piece_image(spec: &PuzzleSpec, n: usize, opts: &RenderOptions) -> RgbImage {
    let rows: Vec<Vec<[u8; 3]>> = (0..opts.height)
        .into_par_iter()
        .map(|j| {
            (0..opts.width)
                .map(|i| match locate(spec, opts.pixel(i, j), n) {
                    Ok(w) => word_color(w.word()),
                    Err(crate::puzzle::PuzzleError::OnGraph(_)) => [20, 20, 20],
                    Err(_) => [255, 255, 255],
                })
                .collect()
        })
        .collect();
    let mut img = RgbImage::new(opts.width, opts.height);
    for (j, row) in rows.iter().enumerate() {
        for (i, c) in row.iter().enumerate() {
            img.put_pixel(i as u32, j as u32, Rgb(*c));
        }
    }
    img
}

fn word_color(w: &[u8]) -> [u8; 3] {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &s in w {
        h ^= s as u64 + 1;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    [100 + (h % 140) as u8, 100 + ((h >> 16) % 140) as u8, 100 + ((h >> 32) % 140) as u8]
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// SVG document with the puzzle graph, equipotentials and piece outlines.
pub struct Svg {
    opts: RenderOptions,
    layers: Vec<(String, String)>,
}

impl Svg {
    pub fn new(opts: &RenderOptions) -> Self {
        Self { opts: opts.clone(), layers: LAYER_ORDER.iter().map(|l| (l.to_string(), String::new())).collect() }
    }

    fn layer(&mut self, name: &str) -> Option<&mut String> {
        if !self.opts.has(name) {
            return None;
        }
        self.layers.iter_mut().find(|(l, _)| l == name).map(|(_, s)| s)
    }

    fn path(&self, pts: &[C64], closed: bool) -> String {
        let mut d = String::new();
        for (k, z) in pts.iter().enumerate() {
            let (x, y) = self.opts.to_svg(*z);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if k == 0 { "M" } else { "L" });
        }
        if closed {
            d.push('Z');
        }
        d
    }

    pub fn polyline(&mut self, layer: &str, pts: &[C64], closed: bool, stroke: &str, fill: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let d = self.path(pts, closed);
        if let Some(s) = self.layer(layer) {
            let _ = writeln!(s, r#"  <path d="{d}" stroke="{stroke}" fill="{fill}" stroke-width="{width}"/>"#);
        }
    }

    pub fn marker(&mut self, layer: &str, z: C64, r: f64, color: &str) {
        let (x, y) = self.opts.to_svg(z);
        if let Some(s) = self.layer(layer) {
            let _ = writeln!(s, r#"  <circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{color}"/>"#);
        }
    }

    pub fn text(&mut self, layer: &str, z: C64, text: &str) {
        let (x, y) = self.opts.to_svg(z);
        if let Some(s) = self.layer(layer) {
            let _ = writeln!(s, r#"  <text x="{x:.2}" y="{y:.2}" font-size="10" font-family="monospace">{text}</text>"#);
        }
    }

    pub fn image(&mut self, layer: &str, href: &str) {
        let (w, h) = (self.opts.width, self.opts.height);
        if let Some(s) = self.layer(layer) {
            let _ = writeln!(s, r#"  <image x="0" y="0" width="{w}" height="{h}" href="{href}"/>"#);
        }
    }

    pub fn finish(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = self.opts.width,
            h = self.opts.height
        );
        for (name, body) in &self.layers {
            if self.opts.has(name) {
                let _ = writeln!(out, r#"<g id="{name}">"#);
                out.push_str(body);
                let _ = writeln!(out, "</g>");
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Graph rays and the two closing equipotentials.
pub fn draw_graph(svg: &mut Svg, spec: &PuzzleSpec) {
    for r in &spec.rays {
        let color = if r.internal { "#1f4e9c" } else { "#9c1f1f" };
        svg.polyline("graph", &r.polyline, false, color, "none", 1.0);
    }
    for p in &spec.landing_points {
        svg.marker("graph", *p, 2.5, "#000000");
    }
    svg.polyline("equipotentials", &spec.external_equipotential, true, "#888888", "none", 0.8);
    svg.polyline("equipotentials", &spec.internal_equipotential, true, "#888888", "none", 0.8);
}

pub fn draw_pieces(svg: &mut Svg, pieces: &[PieceGeometry]) {
    for g in pieces {
        let fill = hex(word_color(g.word.word()));
        svg.polyline("pieces", &g.boundary, true, "#333333", &fill, 0.6);
        if let Some(c) = centroid(&g.boundary) {
            svg.text("pieces", c, &g.word.to_string());
        }
    }
}

fn centroid(pts: &[C64]) -> Option<C64> {
    if pts.is_empty() {
        return None;
    }
    Some(pts.iter().sum::<C64>() / pts.len() as f64)
}
