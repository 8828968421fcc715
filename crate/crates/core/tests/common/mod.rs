//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod grad_cases;

use dressswap::geometry::{Point, Polygon};
use dressswap::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Random values bounded away from zero, so ReLU kinks stay out of reach
/// of finite-difference probes.
pub fn random_away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Quadruple-loop cross-correlation with zero padding.
pub fn naive_conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Tensor {
    let [n, c, h, w] = <[usize; 4]>::try_from(input.shape()).unwrap();
    let [f, _, kh, kw] = <[usize; 4]>::try_from(kernel.shape()).unwrap();
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let mut out = Tensor::zeros(&[n, f, oh, ow]);
    for s in 0..n {
        for o in 0..f {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = bias.data()[o];
                    for ch in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (y * stride + i) as isize - padding as isize;
                                let ix = (x * stride + j) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += input.get(&[s, ch, iy as usize, ix as usize]).unwrap()
                                    * kernel.get(&[o, ch, i, j]).unwrap();
                            }
                        }
                    }
                    let k = out.offset(&[s, o, y, x]).unwrap();
                    out.data_mut()[k] = acc;
                }
            }
        }
    }
    out
}

pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.data()[i * k + p] * b.data()[p * n + j];
            }
            out.data_mut()[i * n + j] = acc;
        }
    }
    out
}

/// Even-odd ray cast (crossings strictly to the right of the point).
pub fn ray_cast_inside(poly: &[(f64, f64)], px: f64, py: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Row-major mask of pixel centers inside the polygon.
pub fn ray_cast_mask(poly: &[(f64, f64)], width: usize, height: usize) -> Vec<bool> {
    let mut mask = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            mask.push(ray_cast_inside(poly, col as f64 + 0.5, row as f64 + 0.5));
        }
    }
    mask
}

/// Star-shaped (hence simple) polygon with `n` vertices around `center`.
pub fn random_star_polygon(
    rng: &mut impl Rng,
    n: usize,
    center: (f64, f64),
    radius: (f64, f64),
) -> Vec<(f64, f64)> {
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
        .into_iter()
        .map(|a| {
            let r = rng.random_range(radius.0..radius.1);
            (center.0 + r * a.cos(), center.1 + r * a.sin())
        })
        .collect()
}

/// Points on a circle at distinct random angles: always in convex position.
pub fn random_convex_set(r: &mut impl Rng) -> Vec<Point> {
    let n = r.random_range(3..=12);
    let (cx, cy, radius) = (r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), r.random_range(1.0..40.0));
    let mut angles: Vec<f64> = Vec::new();
    while angles.len() < n {
        let a = r.random_range(0.0..std::f64::consts::TAU);
        if angles.iter().all(|b| (a - b).abs() > 1e-3) {
            angles.push(a);
        }
    }
    angles
        .into_iter()
        .map(|a| Point::new(cx + radius * a.cos(), cy + radius * a.sin()))
        .collect()
}

pub fn cross_products(poly: &Polygon) -> Vec<f64> {
    let p = poly.points();
    let n = p.len();
    (0..n)
        .map(|i| {
            let (a, b, c) = (p[i], p[(i + 1) % n], p[(i + 2) % n]);
            let (x1, y1) = (b.x - a.x, b.y - a.y);
            let (x2, y2) = (c.x - b.x, c.y - b.y);
            x1 * y2 - y1 * x2
        })
        .collect()
}
