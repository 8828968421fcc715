//! Landmark-driven garment swap: vertex ordering, polygon rasterization,
//! masked cropping, resampling and compositing.
//!
//! Coordinates are continuous image coordinates with the origin at the
//! top-left corner and y pointing down. Pixel `(col, row)` covers
//! `[col, col+1) × [row, row+1)` and is sampled at its center.

use serde::{Deserialize, Serialize};

use crate::dataset::LandmarkSet;
use crate::error::{Error, Result};
use crate::image_io::ImageRgb;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    points: Vec<Point>,
}

impl Polygon {
    /// Takes the vertices in the given order.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::DegeneratePolygon(format!(
                "{} vertices, need at least 3",
                points.len()
            )));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::DegeneratePolygon("non-finite vertex".into()));
        }
        Ok(Polygon { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.points.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
        )
    }

    /// Shoelace area; positive for screen-clockwise order (y down).
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.points[i], self.points[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }
}

/// Orders points by ascending `atan2(y − cy, x − cx)` about their centroid,
/// which is screen-clockwise with y pointing down. The first vertex has the
/// smallest angle; equal angles are ordered nearest-first.
pub fn clockwise_sort(points: &[Point]) -> Result<Polygon> {
    if points.len() < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "{} points, need at least 3",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::DegeneratePolygon("non-finite point".into()));
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    if points.iter().all(|p| *p == points[0]) {
        return Err(Error::DegeneratePolygon("all points coincide".into()));
    }
    if collinear(points) {
        return Err(Error::DegeneratePolygon("all points are collinear".into()));
    }

    let mut keyed: Vec<(f64, f64, Point)> = points
        .iter()
        .map(|&p| {
            let (dx, dy) = (p.x - cx, p.y - cy);
            (dy.atan2(dx), dx * dx + dy * dy, p)
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.x.total_cmp(&b.2.x))
            .then(a.2.y.total_cmp(&b.2.y))
    });
    Polygon::new(keyed.into_iter().map(|(_, _, p)| p).collect())
}

fn collinear(points: &[Point]) -> bool {
    let origin = points[0];
    let far = points
        .iter()
        .copied()
        .max_by(|a, b| {
            let da = (a.x - origin.x).hypot(a.y - origin.y);
            let db = (b.x - origin.x).hypot(b.y - origin.y);
            da.total_cmp(&db)
        })
        .expect("non-empty");
    let (ux, uy) = (far.x - origin.x, far.y - origin.y);
    let scale = ux * ux + uy * uy;
    points.iter().all(|p| {
        let cross = ux * (p.y - origin.y) - uy * (p.x - origin.x);
        cross.abs() <= 1e-12 * scale
    })
}

/// Integer pixel rectangle `[x, x+width) × [y, y+height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl BBox {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        col >= self.x && col < self.x + self.width && row >= self.y && row < self.y + self.height
    }
}

/// Smallest integer box covering the polygon, clipped to a
/// `width × height` image; `None` when nothing is left after clipping.
pub fn polygon_bbox(polygon: &Polygon, width: usize, height: usize) -> Option<BBox> {
    let (x0, y0, x1, y1) = polygon.bounds();
    let clip = |v: f64, hi: usize| v.clamp(0.0, hi as f64) as usize;
    let (left, top) = (clip(x0.floor(), width), clip(y0.floor(), height));
    let (right, bottom) = (clip(x1.ceil(), width), clip(y1.ceil(), height));
    (right > left && bottom > top).then_some(BBox {
        x: left,
        y: top,
        width: right - left,
        height: bottom - top,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument {
                op: "PixelMask",
                reason: format!("zero dimension {width}x{height}"),
            });
        }
        Ok(PixelMask {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Even-odd scanline fill of the pixels whose centers lie inside the
/// polygon, on a `width × height` raster.
pub fn rasterize(polygon: &Polygon, width: usize, height: usize) -> Result<PixelMask> {
    rasterize_region(
        polygon,
        BBox {
            x: 0,
            y: 0,
            width,
            height,
        },
    )
}

/// Like [`rasterize`] but only for the pixels of `region`; the mask is
/// indexed relative to the region's corner. Pixel centers are computed in
/// absolute image coordinates, so the result equals the matching window of
/// a full-image raster.
pub fn rasterize_region(polygon: &Polygon, region: BBox) -> Result<PixelMask> {
    let mut mask = PixelMask::new(region.width, region.height)?;
    let pts = polygon.points();
    let mut crossings: Vec<f64> = Vec::with_capacity(pts.len());
    for row in 0..region.height {
        let py = (region.y + row) as f64 + 0.5;
        crossings.clear();
        let mut j = pts.len() - 1;
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[j]);
            // half-open in y: an edge counts when exactly one endpoint is above
            if (a.y > py) != (b.y > py) {
                crossings.push((b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x);
            }
            j = i;
        }
        crossings.sort_by(f64::total_cmp);
        let bits = &mut mask.bits[row * region.width..(row + 1) * region.width];
        for span in crossings.chunks_exact(2) {
            let (start, end) = (first_center_at_or_after(span[0], region), first_center_at_or_after(span[1], region));
            bits[start..end].fill(true);
        }
    }
    Ok(mask)
}

/// Region-relative index of the first column whose center is `>= x`.
fn first_center_at_or_after(x: f64, region: BBox) -> usize {
    let center = |col: usize| (region.x + col) as f64 + 0.5;
    let guess = (x - 0.5 - region.x as f64).ceil();
    let mut col = guess.clamp(0.0, region.width as f64) as usize;
    while col > 0 && center(col - 1) >= x {
        col -= 1;
    }
    while col < region.width && center(col) < x {
        col += 1;
    }
    col
}

/// The pixels of an image inside a polygon's clipped bounding box, with
/// the polygon mask for that box. Pixels outside the mask keep their
/// original values.
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub image: ImageRgb,
    pub mask: PixelMask,
    pub bbox: BBox,
}

pub fn masked_crop(image: &ImageRgb, polygon: &Polygon) -> Result<Crop> {
    let (w, h) = (image.width(), image.height());
    let bbox = polygon_bbox(polygon, w, h).ok_or(Error::EmptyIntersection {
        width: w,
        height: h,
    })?;
    let mask = rasterize_region(polygon, bbox)?;
    let mut data = Vec::with_capacity(3 * bbox.area());
    for row in bbox.y..bbox.y + bbox.height {
        let start = 3 * (row * w + bbox.x);
        data.extend_from_slice(&image.data()[start..start + 3 * bbox.width]);
    }
    Ok(Crop {
        image: ImageRgb::new(bbox.width, bbox.height, data)?,
        mask,
        bbox,
    })
}

/// Source coordinate sampled by destination index `i`, clamped to the
/// valid source range.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    ((i as f64 + 0.5) * (src as f64 / dst as f64) - 0.5).clamp(0.0, (src - 1) as f64)
}

/// Per-axis bilinear taps: `(lower index, upper index, fraction)`.
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let s = source_coord(i, src, dst);
            let lo = s.floor() as usize;
            (lo, (lo + 1).min(src - 1), s - lo as f64)
        })
        .collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn check_dims(op: &'static str, dims: [usize; 4]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidArgument {
            op,
            reason: format!(
                "dimensions must be positive, got {}x{} -> {}x{}",
                dims[0], dims[1], dims[2], dims[3]
            ),
        });
    }
    Ok(())
}

/// Bilinear resampling of a `[C, H, W]` float image.
pub fn resize_planar(image: &Tensor, width: usize, height: usize) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::InvalidShape {
            op: "resize_planar",
            reason: format!("expected [C, H, W], got {:?}", image.shape()),
        });
    };
    check_dims("resize_planar", [w, h, width, height])?;
    let (xs, ys) = (taps(w, width), taps(h, height));
    let mut out = Tensor::zeros(&[c, height, width]);
    let src = image.data();
    let dst = out.data_mut();
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for (row, &(y0, y1, fy)) in ys.iter().enumerate() {
            let (r0, r1) = (&plane[y0 * w..(y0 + 1) * w], &plane[y1 * w..(y1 + 1) * w]);
            let out_row = &mut dst[(ch * height + row) * width..][..width];
            for (slot, &(x0, x1, fx)) in out_row.iter_mut().zip(&xs) {
                *slot = lerp(lerp(r0[x0], r0[x1], fx), lerp(r1[x0], r1[x1], fx), fy);
            }
        }
    }
    Ok(out)
}

/// Bilinear resampling of an 8-bit image; channels are rounded to nearest.
pub fn resize_bilinear(image: &ImageRgb, width: usize, height: usize) -> Result<ImageRgb> {
    let (w, h) = (image.width(), image.height());
    check_dims("resize_bilinear", [w, h, width, height])?;
    let (xs, ys) = (taps(w, width), taps(h, height));
    let src = image.data();
    let mut data = Vec::with_capacity(3 * width * height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..3 {
                let at = |x: usize, y: usize| f64::from(src[3 * (y * w + x) + ch]);
                let v = lerp(lerp(at(x0, y0), at(x1, y0), fx), lerp(at(x0, y1), at(x1, y1), fx), fy);
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRgb::new(width, height, data)
}

/// Nearest-neighbour resampling on the same sampling grid as
/// [`resize_bilinear`] (ties round up).
pub fn resize_mask(mask: &PixelMask, width: usize, height: usize) -> Result<PixelMask> {
    check_dims("resize_mask", [mask.width, mask.height, width, height])?;
    let nearest = |i: usize, src: usize, dst: usize| {
        ((source_coord(i, src, dst) + 0.5).floor() as usize).min(src - 1)
    };
    let xs: Vec<usize> = (0..width).map(|i| nearest(i, mask.width, width)).collect();
    let mut out = PixelMask::new(width, height)?;
    for row in 0..height {
        let sy = nearest(row, mask.height, height);
        for (col, &sx) in xs.iter().enumerate() {
            out.bits[row * width + col] = mask.get(sx, sy);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwapResult {
    pub image: ImageRgb,
    pub source_bbox: BBox,
    pub dest_bbox: BBox,
    /// Destination pixels overwritten with source garment pixels.
    pub composited: usize,
}

/// Cuts the garment polygon out of `source`, scales it to the bounding box
/// of the destination garment polygon and pastes it over `dest` wherever
/// the scaled source mask is set. Pixels outside that box are untouched.
pub fn swap_garment(
    source: &ImageRgb,
    source_landmarks: &LandmarkSet,
    dest: &ImageRgb,
    dest_landmarks: &LandmarkSet,
) -> Result<SwapResult> {
    for (side, set) in [("source", source_landmarks), ("destination", dest_landmarks)] {
        if !set.all_visible() {
            return Err(Error::InvalidArgument {
                op: "swap_garment",
                reason: format!("{side} landmarks are not all visible"),
            });
        }
    }
    let source_poly = clockwise_sort(&source_landmarks.points())?;
    let dest_poly = clockwise_sort(&dest_landmarks.points())?;
    let crop = masked_crop(source, &source_poly)?;
    let dest_bbox =
        polygon_bbox(&dest_poly, dest.width(), dest.height()).ok_or(Error::EmptyIntersection {
            width: dest.width(),
            height: dest.height(),
        })?;

    let patch = resize_bilinear(&crop.image, dest_bbox.width, dest_bbox.height)?;
    let patch_mask = resize_mask(&crop.mask, dest_bbox.width, dest_bbox.height)?;

    let mut image = dest.clone();
    let mut composited = 0;
    for row in 0..dest_bbox.height {
        for col in 0..dest_bbox.width {
            if patch_mask.get(col, row) {
                image.set_pixel(dest_bbox.x + col, dest_bbox.y + row, patch.pixel(col, row));
                composited += 1;
            }
        }
    }
    Ok(SwapResult {
        image,
        source_bbox: crop.bbox,
        dest_bbox,
        composited,
    })
}
