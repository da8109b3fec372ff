//! Optimised convolution paths against the six-nested-loop reference.

use cxrnet_core::rng::stream_rng;
use cxrnet_core::tensor::{concat_channels, conv2d, ConvSpec};
use cxrnet_core::Tensor;
use cxrnet_testkit::naive_conv2d;
use rand::Rng;

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = stream_rng(seed, "conv-oracle", 0);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn assert_close(a: &Tensor, b: &Tensor, tol: f64, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shapes");
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        let denom = x.abs().max(y.abs()).max(1.0);
        assert!(
            (x - y).abs() / denom <= tol,
            "{what}: element {i}: {x} vs {y}"
        );
    }
}

#[test]
fn optimized_paths_match_reference_across_geometries() {
    // (n, cin, cout, h, w, k, stride, pad, groups)
    let cases = [
        (2, 3, 5, 9, 9, 3, 1, 1, 1),
        (1, 4, 4, 8, 8, 3, 1, 1, 4), // depthwise
        (2, 6, 4, 10, 7, 3, 2, 1, 2),
        (1, 5, 7, 6, 6, 1, 1, 0, 1), // pointwise fast path
        (1, 1, 8, 16, 16, 7, 2, 3, 1),
        (2, 8, 8, 5, 5, 5, 1, 2, 8),
        (1, 12, 6, 9, 9, 3, 3, 0, 3),
    ];
    for (ci, &(n, cin, cout, h, w, k, stride, pad, groups)) in cases.iter().enumerate() {
        let spec = ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel_h: k,
            kernel_w: k,
            stride,
            padding: pad,
            groups,
        };
        let x = random_tensor(&[n, cin, h, w], 100 + ci as u64);
        let wt = random_tensor(&spec.weight_shape(), 200 + ci as u64);
        let b = random_tensor(&[cout], 300 + ci as u64);
        let fast = conv2d(&x, &wt, Some(&b), &spec).unwrap();
        let (slow, _) = naive_conv2d(&x, &wt, Some(&b), &spec);
        assert_close(&fast, &slow, 1e-12, &format!("case {ci}"));
    }
}

#[test]
fn pointwise_conv_equals_per_pixel_matrix_product() {
    let (c, co, h, w) = (6, 4, 5, 7);
    let spec = ConvSpec::pointwise(c, co);
    let x = random_tensor(&[1, c, h, w], 11);
    let wt = random_tensor(&[co, c, 1, 1], 12);
    let y = conv2d(&x, &wt, None, &spec).unwrap();
    for py in 0..h {
        for px in 0..w {
            for oc in 0..co {
                let mut want = 0.0;
                for ic in 0..c {
                    want += wt.data()[oc * c + ic] * x.data()[(ic * h + py) * w + px];
                }
                let got = y.data()[(oc * h + py) * w + px];
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                    "pixel ({py},{px}) channel {oc}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn grouped_conv_decomposes_into_per_group_ungrouped_convs() {
    let (n, cin, cout, h, w, groups) = (2, 8, 6, 7, 7, 2);
    let spec = ConvSpec {
        in_channels: cin,
        out_channels: cout,
        kernel_h: 3,
        kernel_w: 3,
        stride: 1,
        padding: 1,
        groups,
    };
    let x = random_tensor(&[n, cin, h, w], 21);
    let wt = random_tensor(&spec.weight_shape(), 22);
    let grouped = conv2d(&x, &wt, None, &spec).unwrap();

    let (cg, ocg) = (cin / groups, cout / groups);
    let sub_spec = ConvSpec {
        in_channels: cg,
        out_channels: ocg,
        groups: 1,
        ..spec
    };
    let mut parts = Vec::new();
    for g in 0..groups {
        let xs = Tensor::from_fn(&[n, cg, h, w], |i| {
            let per = cg * h * w;
            let (ni, rest) = (i / per, i % per);
            x.data()[(ni * cin + g * cg) * h * w + rest]
        });
        let ws = Tensor::from_fn(&[ocg, cg, 3, 3], |i| wt.data()[g * ocg * cg * 9 + i]);
        parts.push(conv2d(&xs, &ws, None, &sub_spec).unwrap());
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    let assembled = concat_channels(&refs).unwrap();
    assert_close(&grouped, &assembled, 1e-12, "group decomposition");
}

#[test]
fn forward_is_bitwise_deterministic() {
    let spec = ConvSpec {
        in_channels: 5,
        out_channels: 10,
        kernel_h: 3,
        kernel_w: 3,
        stride: 1,
        padding: 1,
        groups: 1,
    };
    let x = random_tensor(&[2, 5, 12, 12], 31);
    let wt = random_tensor(&spec.weight_shape(), 32);
    let b = random_tensor(&[10], 33);
    let a = conv2d(&x, &wt, Some(&b), &spec).unwrap();
    let c = conv2d(&x, &wt, Some(&b), &spec).unwrap();
    assert_eq!(a, c);
}
