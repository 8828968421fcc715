mod common;

use common::{cross_products, random_convex_set, random_star_polygon, ray_cast_mask, rng};
use dressswap::dataset::{render_synthetic, LandmarkSet};
use dressswap::geometry::{
    clockwise_sort, masked_crop, polygon_bbox, rasterize, rasterize_region, resize_mask,
    swap_garment, BBox, Point, Polygon,
};
use dressswap::image_io::ImageRgb;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn to_points(raw: &[(f64, f64)]) -> Vec<Point> {
    raw.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

fn sorted_multiset(points: &[Point]) -> Vec<(u64, u64)> {
    let mut v: Vec<(u64, u64)> = points.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
    v.sort_unstable();
    v
}

#[test]
fn convex_sets_turn_clockwise_and_ignore_input_order() {
    let mut r = rng(61);
    for case in 0..1000 {
        let points = random_convex_set(&mut r);
        let sorted = clockwise_sort(&points).unwrap();
        for c in cross_products(&sorted) {
            assert!(c >= 0.0, "case {case}: cross product {c}");
        }
        assert_eq!(sorted_multiset(sorted.points()), sorted_multiset(&points));
        let mut shuffled = points.clone();
        shuffled.shuffle(&mut r);
        assert_eq!(clockwise_sort(&shuffled).unwrap(), sorted, "case {case}");
    }
}

#[test]
fn sorted_polygon_keeps_its_order() {
    let square = to_points(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]);
    assert_eq!(clockwise_sort(&square).unwrap().points(), &square[..]);
}

#[test]
fn scanline_matches_ray_cast_on_random_polygons() {
    let mut r = rng(77);
    for case in 0..200 {
        let (w, h) = (r.random_range(1..=48), r.random_range(1..=48));
        let n = r.random_range(3..=14);
        let center = (r.random_range(-5.0..w as f64 + 5.0), r.random_range(-5.0..h as f64 + 5.0));
        let raw = if case % 4 == 0 {
            // arbitrary vertex order: self-intersecting polygons exercise even-odd
            (0..n)
                .map(|_| (r.random_range(-4.0..w as f64 + 4.0), r.random_range(-4.0..h as f64 + 4.0)))
                .collect()
        } else {
            random_star_polygon(&mut r, n, center, (1.0, 30.0))
        };
        let poly = Polygon::new(to_points(&raw)).unwrap();
        let mask = rasterize(&poly, w, h).unwrap();
        assert_eq!(mask.bits(), &ray_cast_mask(&raw, w, h)[..], "case {case}");
    }
}

#[test]
fn vertices_on_pixel_centers_match_ray_cast() {
    let mut r = rng(5);
    for case in 0..100 {
        let raw: Vec<(f64, f64)> = (0..r.random_range(3..=9))
            .map(|_| (r.random_range(0..16) as f64 + 0.5, r.random_range(0..16) as f64 + 0.5))
            .collect();
        let poly = Polygon::new(to_points(&raw)).unwrap();
        assert_eq!(rasterize(&poly, 16, 16).unwrap().bits(), &ray_cast_mask(&raw, 16, 16)[..], "case {case}");
    }
}

#[test]
fn region_raster_is_a_window_of_the_full_raster() {
    let mut r = rng(8);
    for _ in 0..50 {
        let raw = random_star_polygon(&mut r, 7, (20.0, 20.0), (3.0, 18.0));
        let poly = Polygon::new(to_points(&raw)).unwrap();
        let full = rasterize(&poly, 40, 40).unwrap();
        let region = BBox {
            x: r.random_range(0..20),
            y: r.random_range(0..20),
            width: r.random_range(1..=20),
            height: r.random_range(1..=20),
        };
        let part = rasterize_region(&poly, region).unwrap();
        for row in 0..region.height {
            for col in 0..region.width {
                assert_eq!(part.get(col, row), full.get(region.x + col, region.y + row));
            }
        }
    }
}

#[test]
fn corner_triangle_crop_matches_raster() {
    let img = ImageRgb::new(12, 9, (0..12 * 9 * 3).map(|v| (v % 251) as u8).collect()).unwrap();
    let tri = Polygon::new(to_points(&[(0.0, 0.0), (5.3, 0.0), (0.0, 4.6)])).unwrap();
    let crop = masked_crop(&img, &tri).unwrap();
    assert_eq!(crop.bbox, BBox { x: 0, y: 0, width: 6, height: 5 });
    assert_eq!(crop.mask.count(), rasterize(&tri, 12, 9).unwrap().count());
    for row in 0..5 {
        for col in 0..6 {
            assert_eq!(crop.image.pixel(col, row), img.pixel(col, row));
        }
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    to_points(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
}

/// Eight landmarks spread along the boundary of an axis-aligned rectangle.
fn rect_landmarks(x0: f64, y0: f64, x1: f64, y1: f64) -> LandmarkSet {
    let (mx, my) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    LandmarkSet::from_interleaved(&[x0, y0, x1, y0, x0, my, x1, my, mx, y0, mx, y1, x0, y1, x1, y1])
        .unwrap()
}

fn outside_untouched(before: &ImageRgb, after: &ImageRgb, bbox: BBox) -> bool {
    (0..before.height()).all(|row| {
        (0..before.width()).all(|col| bbox.contains(col, row) || before.pixel(col, row) == after.pixel(col, row))
    })
}

#[test]
fn four_by_four_crop_onto_eight_by_eight_box() {
    let src = ImageRgb::new(20, 20, (0..1200).map(|v| (v * 7 % 256) as u8).collect()).unwrap();
    let dst = ImageRgb::filled(20, 20, [9, 9, 9]);
    let (src_lm, dst_lm) = (rect_landmarks(3.0, 5.0, 7.0, 9.0), rect_landmarks(10.0, 2.0, 18.0, 10.0));
    let out = swap_garment(&src, &src_lm, &dst, &dst_lm).unwrap();
    assert_eq!(out.source_bbox, BBox { x: 3, y: 5, width: 4, height: 4 });
    assert_eq!(out.dest_bbox, BBox { x: 10, y: 2, width: 8, height: 8 });

    let crop = masked_crop(&src, &clockwise_sort(&src_lm.points()).unwrap()).unwrap();
    let oracle = resize_mask(&crop.mask, 8, 8).unwrap().count();
    assert_eq!(crop.mask.count(), 16);
    assert_eq!(out.composited, oracle);
    assert_eq!(out.composited, 64);
    assert!(outside_untouched(&dst, &out.image, out.dest_bbox));
}

#[test]
fn full_frame_destination_is_covered() {
    let src = ImageRgb::new(10, 10, (0..300).map(|v| (v % 200) as u8 + 10).collect()).unwrap();
    let dst = ImageRgb::filled(16, 12, [0, 0, 0]);
    let out = swap_garment(&src, &rect_landmarks(2.0, 2.0, 8.0, 8.0), &dst, &rect_landmarks(0.0, 0.0, 16.0, 12.0)).unwrap();
    assert_eq!(out.dest_bbox, BBox { x: 0, y: 0, width: 16, height: 12 });
    assert_eq!(out.composited, 16 * 12);
    assert!((0..12).all(|r| (0..16).all(|c| out.image.pixel(c, r) != [0, 0, 0])));
}

#[test]
fn degenerate_landmarks_are_rejected() {
    let img = ImageRgb::filled(10, 10, [1, 1, 1]);
    let line = LandmarkSet::from_interleaved(&(0..16).map(|i| (i / 2) as f64).collect::<Vec<_>>()).unwrap();
    assert!(swap_garment(&img, &line, &img, &rect_landmarks(1.0, 1.0, 5.0, 5.0)).is_err());
}

#[test]
fn bbox_of_points_outside_is_none() {
    let poly = Polygon::new(rect(-9.0, -9.0, -1.0, -1.0)).unwrap();
    assert_eq!(polygon_bbox(&poly, 10, 10), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn raster_shifts_with_integer_translation(
        seed in any::<u64>(),
        dx in 0usize..12,
        dy in 0usize..12,
    ) {
        let mut r = rng(seed);
        // dyadic coordinates keep the translated vertices exact
        let raw: Vec<(f64, f64)> = random_star_polygon(&mut r, 6, (12.0, 12.0), (2.0, 10.0))
            .into_iter()
            .map(|(x, y)| ((x * 64.0).round() / 64.0, (y * 64.0).round() / 64.0))
            .collect();
        let poly = Polygon::new(to_points(&raw)).unwrap();
        let base = rasterize(&poly, 40, 40).unwrap();
        let moved = rasterize(&poly.translated(dx as f64, dy as f64), 40, 40).unwrap();
        for row in 0..40 {
            for col in 0..40 {
                let expected = row >= dy && col >= dx && base.get(col - dx, row - dy);
                prop_assert_eq!(moved.get(col, row), expected);
            }
        }
    }

    #[test]
    fn self_swap_is_identity(seed in any::<u64>()) {
        let synth = render_synthetic(&mut rng(seed)).unwrap();
        let out = swap_garment(&synth.image, &synth.landmarks, &synth.image, &synth.landmarks).unwrap();
        prop_assert_eq!(&out.image, &synth.image);
        let poly = clockwise_sort(&synth.landmarks.points()).unwrap();
        prop_assert_eq!(out.composited, rasterize(&poly, 128, 192).unwrap().count());
    }
}

#[test]
fn synthetic_pairs_respect_the_swap_contract() {
    let mut r = rng(404);
    for case in 0..50 {
        let a = render_synthetic(&mut r).unwrap();
        let b = render_synthetic(&mut r).unwrap();
        let out = swap_garment(&a.image, &a.landmarks, &b.image, &b.landmarks).unwrap();
        let crop = masked_crop(&a.image, &clockwise_sort(&a.landmarks.points()).unwrap()).unwrap();
        let popcount = resize_mask(&crop.mask, out.dest_bbox.width, out.dest_bbox.height)
            .unwrap()
            .count();
        assert_eq!(out.composited, popcount, "case {case}");
        assert!(out.composited <= out.dest_bbox.area());
        assert!(outside_untouched(&b.image, &out.image, out.dest_bbox), "case {case}");
    }
}
