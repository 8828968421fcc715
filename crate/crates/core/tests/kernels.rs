mod common;

use common::{naive_conv2d, naive_matmul, random_tensor, rng};
use dressswap::tensor::{
    conv2d_backward, conv2d_forward, conv2d_forward_cached, conv2d_forward_cached_with, matmul,
    ConvGeometry, Precision,
};
use dressswap::Tensor;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn conv_matches_naive_on_stated_case() {
    let mut r = rng(11);
    let x = random_tensor(&mut r, &[1, 2, 5, 5], 1.0);
    let k = random_tensor(&mut r, &[3, 2, 3, 3], 1.0);
    let b = random_tensor(&mut r, &[3], 1.0);
    let fast = conv2d_forward(&x, &k, &b, ConvGeometry::new(2, 1)).unwrap();
    let slow = naive_conv2d(&x, &k, &b, 2, 1);
    assert_eq!(fast.shape(), &[1, 3, 3, 3]);
    assert!(fast.max_abs_diff(&slow) <= 1e-10);
}

#[test]
fn conv_matches_naive_on_random_geometries() {
    let mut r = rng(2024);
    for case in 0..100 {
        let n = r.random_range(1..=3);
        let c = r.random_range(1..=4);
        let f = r.random_range(1..=4);
        let kh: usize = r.random_range(1..=4);
        let kw: usize = r.random_range(1..=4);
        let stride = r.random_range(1..=3);
        let padding: usize = r.random_range(0..=2);
        let h = r.random_range(kh.saturating_sub(2 * padding).max(1)..=9);
        let w = r.random_range(kw.saturating_sub(2 * padding).max(1)..=9);
        let x = random_tensor(&mut r, &[n, c, h, w], 2.0);
        let k = random_tensor(&mut r, &[f, c, kh, kw], 1.0);
        let b = random_tensor(&mut r, &[f], 1.0);
        let fast = conv2d_forward(&x, &k, &b, ConvGeometry::new(stride, padding)).unwrap();
        let slow = naive_conv2d(&x, &k, &b, stride, padding);
        let diff = fast.max_abs_diff(&slow);
        assert!(diff <= 1e-10, "case {case}: diff {diff}");
    }
}

#[test]
fn matmul_matches_naive() {
    let mut r = rng(5);
    let a = random_tensor(&mut r, &[7, 5], 1.0);
    let b = random_tensor(&mut r, &[5, 4], 1.0);
    assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) <= 1e-10);
    for case in 0..100 {
        let (m, k, n) = (
            r.random_range(1..=40),
            r.random_range(1..=40),
            r.random_range(1..=40),
        );
        let a = random_tensor(&mut r, &[m, k], 1.0);
        let b = random_tensor(&mut r, &[k, n], 1.0);
        let diff = matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b));
        assert!(diff <= 1e-10, "case {case}: diff {diff}");
    }
}

#[test]
fn conv_is_bit_deterministic() {
    let mut r = rng(9);
    let x = random_tensor(&mut r, &[2, 8, 20, 20], 1.0);
    let k = random_tensor(&mut r, &[16, 8, 3, 3], 1.0);
    let b = random_tensor(&mut r, &[16], 1.0);
    let g = ConvGeometry::new(1, 1);
    let first = conv2d_forward(&x, &k, &b, g).unwrap();
    let second = conv2d_forward(&x, &k, &b, g).unwrap();
    assert!(first
        .data()
        .iter()
        .zip(second.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_is_linear_without_bias(
        seed in any::<u64>(),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        stride in 1usize..3,
        padding in 0usize..2,
    ) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, &[2, 3, 6, 7], 1.0);
        let y = random_tensor(&mut r, &[2, 3, 6, 7], 1.0);
        let k = random_tensor(&mut r, &[4, 3, 3, 3], 1.0);
        let zero = Tensor::zeros(&[4]);
        let g = ConvGeometry::new(stride, padding);
        let combo = Tensor::new(
            x.shape(),
            x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect(),
        ).unwrap();
        let lhs = conv2d_forward(&combo, &k, &zero, g).unwrap();
        let cx = conv2d_forward(&x, &k, &zero, g).unwrap();
        let cy = conv2d_forward(&y, &k, &zero, g).unwrap();
        let rhs = Tensor::new(
            cx.shape(),
            cx.data().iter().zip(cy.data()).map(|(a, b)| alpha * a + beta * b).collect(),
        ).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-9);
    }
}

/// Mixed precision rounds both product operands to f32 and accumulates in
/// f32, so an output summing `t` terms of magnitude ≤ 1 is off by at most
/// `t·(t+2)·ε₃₂` (the classic γₜ bound with the two operand roundings).
fn single_precision_bound(terms: usize) -> f64 {
    let t = terms as f64;
    t * (t + 2.0) * f64::from(f32::EPSILON)
}

#[test]
fn mixed_precision_stays_within_single_precision_bound() {
    let mut r = rng(31);
    for case in 0..20 {
        let (n, c, f) = (r.random_range(1..=3), r.random_range(1..=4), r.random_range(1..=4));
        let (h, w) = (r.random_range(3..=9), r.random_range(3..=9));
        let (stride, padding) = (r.random_range(1..=2), r.random_range(0..=1));
        let x = random_tensor(&mut r, &[n, c, h, w], 1.0);
        let k = random_tensor(&mut r, &[f, c, 3, 3], 1.0);
        let b = random_tensor(&mut r, &[f], 1.0);
        let g = ConvGeometry::new(stride, padding);
        let (exact, c64) = conv2d_forward_cached(&x, &k, &b, g).unwrap();
        let (mixed, c32) = conv2d_forward_cached_with(x.clone(), &k, &b, g, Precision::Mixed).unwrap();
        assert!(exact.max_abs_diff(&mixed) <= single_precision_bound(9 * c), "case {case}");
        assert_ne!(exact, mixed, "case {case}: mixed path was not exercised");

        let dy = random_tensor(&mut r, exact.shape(), 1.0);
        let (g64, g32) = (conv2d_backward(&c64, &dy).unwrap(), conv2d_backward(&c32, &dy).unwrap());
        assert_eq!(g64.bias, g32.bias);
        let pixels = exact.len() / (n * f);
        assert!(g64.kernel.max_abs_diff(&g32.kernel) <= single_precision_bound(n * pixels), "case {case}");
        assert!(g64.input.max_abs_diff(&g32.input) <= 9.0 * single_precision_bound(f), "case {case}");
    }
}
