//! Independent oracles shared by the integration and acceptance suites.
//!
//! Nothing here calls into the code path it checks: convolutions are direct
//! nested loops, gradients are central differences, metrics are textbook
//! float64 formulas.

#![allow(dead_code)]

use deepkeygen::tensor::{Activation, PadMode, Scalar, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-scale..scale))).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Values bounded away from zero, so kinked activations are differentiable
/// within the finite-difference step.
pub fn random_tensor_off_zero<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(margin..1.0);
            T::from_f64_lossy(if rng.gen_bool(0.5) { v } else { -v })
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn reflect(i: isize, n: isize) -> isize {
    if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    }
}

/// Direct sliding-window convolution in f64. `x` is NCHW, `w` is [cout, cin, kh, kw].
pub fn naive_conv2d(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    stride: usize,
    pad: usize,
    mode: PadMode,
) -> (Vec<f64>, [usize; 4]) {
    let [n, cin, h, wd] = xs;
    let [cout, _, kh, kw] = ws;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let mut iy = (oy * stride + ky) as isize - pad as isize;
                                let mut ix = (ox * stride + kx) as isize - pad as isize;
                                match mode {
                                    PadMode::Zeros => {
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                            continue;
                                        }
                                    }
                                    PadMode::Reflect => {
                                        iy = reflect(iy, h as isize);
                                        ix = reflect(ix, wd as isize);
                                    }
                                }
                                let xv = x[((b * cin + ci) * h + iy as usize) * wd + ix as usize];
                                let wv = w[((co * cin + ci) * kh + ky) * kw + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((b * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

/// Direct scatter form of the transposed convolution. `w` is [cin, cout, kh, kw].
pub fn naive_conv_transpose2d(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    stride: usize,
    pad: usize,
    output_padding: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, cin, h, wd] = xs;
    let [_, cout, kh, kw] = ws;
    let oh = (h - 1) * stride + kh + output_padding - 2 * pad;
    let ow = (wd - 1) * stride + kw + output_padding - 2 * pad;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for ci in 0..cin {
            for iy in 0..h {
                for ix in 0..wd {
                    let xv = x[((b * cin + ci) * h + iy) * wd + ix];
                    for co in 0..cout {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((b * cout + co) * oh + oy as usize) * ow + ox as usize] +=
                                    xv * w[((ci * cout + co) * kh + ky) * kw + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

pub fn to_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}

/// Compare analytic tape gradients against central differences.
///
/// `build` records the op under test given the input vars. The scalar loss
/// is `sum(out * r)` for a fixed random `r`; the numeric side evaluates that
/// projection in f64. Returns the worst normwise relative error
/// `|g_a - g_n| / (|g_a| + |g_n|)` over all inputs.
pub fn grad_check<T, F>(inputs: &[Tensor<T>], h: f64, seed: u64, build: F) -> f64
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> deepkeygen::Result<Var>,
{
    let eval = |vals: &[Tensor<T>]| -> Tensor<T> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.constant(v.clone()).unwrap()).collect();
        let out = build(&mut tape, &vars).unwrap();
        tape.value(out).clone()
    };
    let probe = eval(inputs);
    let mut r = rng(seed);
    let weights: Tensor<T> = random_tensor(&mut r, probe.shape(), 1.0);
    let project = |t: &Tensor<T>| -> f64 { t.data().iter().zip(weights.data()).map(|(a, b)| a.as_f64() * b.as_f64()).sum() };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone().with_grad()).unwrap()).collect();
    let out = build(&mut tape, &vars).unwrap();
    let loss = tape.weighted_sum(out, &weights).unwrap();
    let grads = tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic: Vec<f64> = grads.get(vars[i]).expect("gradient for input").iter().map(|v| v.as_f64()).collect();
        let mut numeric = vec![0.0; input.numel()];
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            let base = input.data()[j].as_f64();
            plus[i].data_mut()[j] = T::from_f64_lossy(base + h);
            minus[i].data_mut()[j] = T::from_f64_lossy(base - h);
            // Use the step actually representable in T.
            let step = plus[i].data()[j].as_f64() - minus[i].data()[j].as_f64();
            numeric[j] = (project(&eval(&plus)) - project(&eval(&minus))) / step;
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm_a: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_n: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let rel = if norm_a + norm_n < 1e-12 { diff } else { diff / (norm_a + norm_n) };
        worst = worst.max(rel);
    }
    worst
}

/// Worst f32 relative gradient error per op over `instances` random cases
/// (step 1e-3). Activation inputs stay away from the kinks at zero.
pub fn f32_op_gradient_sweep(instances: u64) -> Vec<(String, f64)> {
    let h = 1e-3;
    let mut r = rng(8);
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut record = |name: &str, e: f64| match worst.iter_mut().find(|(n, _)| n == name) {
        Some((_, w)) => *w = w.max(e),
        None => worst.push((name.to_string(), e)),
    };
    for i in 0..instances {
        let x = random_tensor::<f32>(&mut r, &[1, 2, 5, 5], 1.0);
        let w = random_tensor::<f32>(&mut r, &[2, 2, 3, 3], 1.0);
        let xw = [x.clone(), w.clone()];
        record("conv2d zeros", grad_check(&xw, h, i, |t, v| t.conv2d(v[0], v[1], 1, 1, PadMode::Zeros)));
        record("conv2d reflect stride 2", grad_check(&xw, h, i, |t, v| t.conv2d(v[0], v[1], 2, 1, PadMode::Reflect)));
        record("conv_transpose2d", grad_check(&xw, h, i, |t, v| t.conv_transpose2d(v[0], v[1], 2, 1, 1)));
        record("instance_norm", grad_check(&[x.clone()], h, i, |t, v| t.instance_norm(v[0], 1e-5)));
        record(
            "residual add",
            grad_check(&xw, h, i, |t, v| {
                let y = t.conv2d(v[0], v[1], 1, 1, PadMode::Zeros)?;
                t.add(v[0], y)
            }),
        );
        record("scale", grad_check(&[x.clone()], h, i, |t, v| t.scale(v[0], 0.7)));
        record("mean_per_sample", grad_check(&[x.clone()], h, i, |t, v| t.mean_per_sample(v[0])));
        record("mean", grad_check(&[x.clone()], h, i, |t, v| t.mean(v[0])));
        let kinked = random_tensor_off_zero::<f32>(&mut r, &[1, 2, 4, 4], 0.05);
        for kind in [Activation::Relu, Activation::LeakyRelu, Activation::Tanh, Activation::Sigmoid] {
            record(&format!("{kind:?}"), grad_check(&[kinked.clone()], h, i, |t, v| t.activation(v[0], kind)));
        }
        let probs: Tensor<f32> = Tensor::new(vec![2], (0..2).map(|_| r.gen_range(0.2f32..0.8)).collect()).unwrap();
        for complement in [false, true] {
            record("log_prob", grad_check(&[probs.clone()], h, i, |t, v| t.log_prob(v[0], complement, 1e-7)));
        }
    }
    worst
}

// ---- metric oracles (float64, textbook formulas) ----

pub fn oracle_entropy(bytes: &[u8]) -> f64 {
    let mut counts = [0f64; 256];
    for &b in bytes {
        counts[b as usize] += 1.0;
    }
    let n = bytes.len() as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0.0 {
            let p = c / n;
            h += p * (1.0 / p).log2();
        }
    }
    h
}

pub fn oracle_npcr(a: &[u8], b: &[u8]) -> f64 {
    let mut d = 0.0;
    for i in 0..a.len() {
        if a[i] != b[i] {
            d += 1.0;
        }
    }
    100.0 * d / a.len() as f64
}

pub fn oracle_uaci(a: &[u8], b: &[u8]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] as f64 - b[i] as f64).abs() / 255.0;
    }
    100.0 * s / a.len() as f64
}

pub fn oracle_mse(a: &[u8], b: &[u8]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] as f64 - b[i] as f64).powi(2);
    }
    s / a.len() as f64
}

/// Global SSIM per channel, averaged over channels.
pub fn oracle_ssim(a: &[u8], b: &[u8], channels: usize) -> f64 {
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut total = 0.0;
    for c in 0..channels {
        let xs: Vec<f64> = a.iter().skip(c).step_by(channels).map(|&v| v as f64).collect();
        let ys: Vec<f64> = b.iter().skip(c).step_by(channels).map(|&v| v as f64).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let mut vx = 0.0;
        let mut vy = 0.0;
        let mut cxy = 0.0;
        for i in 0..xs.len() {
            vx += (xs[i] - mx).powi(2);
            vy += (ys[i] - my).powi(2);
            cxy += (xs[i] - mx) * (ys[i] - my);
        }
        vx /= n;
        vy /= n;
        cxy /= n;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    total / channels as f64
}

/// Pearson correlation with E and D taken as sample mean and variance.
pub fn oracle_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let ex = x.iter().sum::<f64>() / n;
    let ey = y.iter().sum::<f64>() / n;
    let dx = x.iter().map(|v| (v - ex).powi(2)).sum::<f64>() / n;
    let dy = y.iter().map(|v| (v - ey).powi(2)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - ex) * (b - ey)).sum::<f64>() / n;
    cov / (dx.sqrt() * dy.sqrt())
}
