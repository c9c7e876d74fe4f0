//! Forward and backward kernels for the layer types the network uses.
//!
//! These are plain functions over [`Tensor`]s. The tape in
//! [`super::tape`] calls them and handles gradient bookkeeping.

use super::Tensor;
use crate::error::{shape_err, Result};

fn conv_dims(input: &Tensor, kernel: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if input.rank() != 3 {
        return Err(shape_err("conv2d", format!("input must be C×H×W, got {:?}", input.shape())));
    }
    if kernel.rank() != 4 {
        return Err(shape_err(
            "conv2d",
            format!("kernel must be Cout×Cin×kH×kW, got {:?}", kernel.shape()),
        ));
    }
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, k_in, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    if k_in != c_in {
        return Err(shape_err(
            "conv2d",
            format!("kernel expects {k_in} input channels, input has {c_in}"),
        ));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(shape_err("conv2d", format!("kernel spatial size {kh}×{kw} must be odd")));
    }
    Ok((c_in, h, w, c_out, kh, kw))
}

/// Zero-padded copy of each `h×w` plane, as `(h+2ph)×(w+2pw)` planes.
fn pad_planes(x: &[f64], planes: usize, h: usize, w: usize, ph: usize, pw: usize) -> Vec<f64> {
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let mut out = vec![0.0; planes * hp * wp];
    for l in 0..planes {
        for i in 0..h {
            let dst = (l * hp + i + ph) * wp + pw;
            out[dst..dst + w].copy_from_slice(&x[(l * h + i) * w..(l * h + i + 1) * w]);
        }
    }
    out
}

/// Output planes are computed in the padded row stride `wp`: entry
/// `i·wp + j` holds output `(i, j)` for `j < w` and scratch otherwise.
/// Every kernel tap is then a single contiguous multiply-add of this length.
fn strided_len(h: usize, w: usize, wp: usize) -> usize {
    (h - 1) * wp + w
}

/// Dot product with four independent partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            lanes[k] += x[k] * y[k];
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// `acc[t] += Σ_k w[k]·src[off[k] + t]` for `t < acc.len()`.
fn correlate_into(acc: &mut [f64], src: &[f64], w: &[f64], off: &[usize]) {
    match w.len() {
        1 => correlate_fixed::<1>(acc, src, w, off),
        9 => correlate_fixed::<9>(acc, src, w, off),
        25 => correlate_fixed::<25>(acc, src, w, off),
        _ => {
            let n = acc.len();
            for (&wt, &o) in w.iter().zip(off) {
                for (d, &x) in acc.iter_mut().zip(&src[o..o + n]) {
                    *d += wt * x;
                }
            }
        }
    }
}

#[inline(always)]
fn correlate_fixed<const T: usize>(acc: &mut [f64], src: &[f64], w: &[f64], off: &[usize]) {
    let n = acc.len();
    let w: [f64; T] = w.try_into().expect("tap count");
    let taps: [&[f64]; T] = std::array::from_fn(|k| &src[off[k]..off[k] + n]);
    for (t, d) in acc.iter_mut().enumerate() {
        let mut a = *d;
        for k in 0..T {
            a += w[k] * taps[k][t];
        }
        *d = a;
    }
}

/// Same-padded, stride-1 cross-correlation.
///
/// `out[c,i,j] = bias[c] + Σ kernel[c,l,u,v] · input[l, i+u-ph, j+v-pw]`
/// with zeros outside the input.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (c_in, h, w, c_out, kh, kw) = conv_dims(input, kernel)?;
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(shape_err("conv2d", format!("bias shape {:?}, expected [{c_out}]", b.shape())));
        }
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let xp = pad_planes(input.data(), c_in, h, w, ph, pw);
    let k = kernel.data();
    let len = strided_len(h, w, wp);
    let off: Vec<usize> = (0..kh * kw).map(|t| (t / kw) * wp + t % kw).collect();
    let mut acc = vec![0.0; len];
    let mut out = vec![0.0; c_out * h * w];
    for c in 0..c_out {
        acc.fill(bias.map_or(0.0, |b| b.data()[c]));
        for l in 0..c_in {
            let taps = &k[(c * c_in + l) * kh * kw..(c * c_in + l + 1) * kh * kw];
            correlate_into(&mut acc, &xp[l * hp * wp..(l + 1) * hp * wp], taps, &off);
        }
        for i in 0..h {
            out[(c * h + i) * w..(c * h + i + 1) * w].copy_from_slice(&acc[i * wp..i * wp + w]);
        }
    }
    Tensor::new(vec![c_out, h, w], out)
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, h, w, c_out, kh, kw) = conv_dims(input, kernel)?;
    if grad_out.shape() != [c_out, h, w] {
        return Err(shape_err("conv2d_backward", format!("grad shape {:?}", grad_out.shape())));
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let xp = pad_planes(input.data(), c_in, h, w, ph, pw);
    let k = kernel.data();
    let g = grad_out.data();
    let len = strided_len(h, w, wp);
    let taps = kh * kw;
    let off: Vec<usize> = (0..taps).map(|t| (t / kw) * wp + t % kw).collect();
    // The input gradient is a correlation of the output gradient with the
    // flipped kernel; `margin` leading zeros make every shifted read valid.
    let margin = off[taps - 1];
    let flipped: Vec<usize> = off.iter().map(|&o| margin - o).collect();
    let mut gpad = vec![0.0; margin + len + margin];
    let mut gxp = vec![0.0; c_in * hp * wp];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; c_out];
    let mut wflip = vec![0.0; taps];
    for c in 0..c_out {
        let gplane = &g[c * h * w..(c + 1) * h * w];
        gb[c] = gplane.iter().sum();
        for i in 0..h {
            gpad[margin + i * wp..margin + i * wp + w].copy_from_slice(&gplane[i * w..(i + 1) * w]);
        }
        let gs = &gpad[margin..margin + len];
        for l in 0..c_in {
            let src = &xp[l * hp * wp..(l + 1) * hp * wp];
            let base = (c * c_in + l) * taps;
            for t in 0..taps {
                gk[base + t] += dot(gs, &src[off[t]..off[t] + len]);
            }
            let kw_l = &k[base..base + taps];
            if kw_l.iter().all(|&v| v == 0.0) {
                continue;
            }
            wflip.copy_from_slice(kw_l);
            correlate_into(&mut gxp[l * hp * wp..(l + 1) * hp * wp], &gpad, &wflip, &flipped);
        }
    }
    let mut gx = vec![0.0; c_in * h * w];
    for l in 0..c_in {
        for i in 0..h {
            let from = (l * hp + i + ph) * wp + pw;
            gx[(l * h + i) * w..(l * h + i + 1) * w].copy_from_slice(&gxp[from..from + w]);
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(kernel.shape().to_vec(), gk)?,
        Tensor::vector(gb),
    ))
}

/// Per-cell maximum over channels of a `C×H×W` tensor.
///
/// Returns the `H×W` maxima and the winning channel per cell. Ties go to the
/// lowest channel index.
pub fn channel_max(input: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    if input.rank() != 3 {
        return Err(shape_err("channel_max", format!("input must be C×H×W, got {:?}", input.shape())));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let hw = h * w;
    let x = input.data();
    let mut values = x[..hw].to_vec();
    let mut argmax = vec![0u32; hw];
    for ch in 1..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ((best, arg), &v) in values.iter_mut().zip(argmax.iter_mut()).zip(plane) {
            if v > *best {
                *best = v;
                *arg = ch as u32;
            }
        }
    }
    Ok((Tensor::new(vec![h, w], values)?, argmax))
}

/// Channel max with a prescribed winner per cell.
pub fn channel_select(input: &Tensor, argmax: &[u32]) -> Result<Tensor> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let hw = h * w;
    if argmax.len() != hw || argmax.iter().any(|&a| a as usize >= c) {
        return Err(shape_err("channel_select", "argmax record does not fit input"));
    }
    let x = input.data();
    let values = argmax
        .iter()
        .enumerate()
        .map(|(cell, &a)| x[a as usize * hw + cell])
        .collect();
    Tensor::new(vec![h, w], values)
}

/// Routes each cell's gradient to its winning channel.
pub fn channel_max_backward(argmax: &[u32], channels: usize, grad_out: &Tensor) -> Tensor {
    let hw = argmax.len();
    let mut g = vec![0.0; channels * hw];
    for (cell, (&a, &gv)) in argmax.iter().zip(grad_out.data()).enumerate() {
        g[a as usize * hw + cell] += gv;
    }
    let (h, w) = (grad_out.shape()[0], grad_out.shape()[1]);
    Tensor::new(vec![channels, h, w], g).expect("consistent shape")
}

fn dense_dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    if weights.rank() != 2 {
        return Err(shape_err("dense", format!("weights must be m×n, got {:?}", weights.shape())));
    }
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != n {
        return Err(shape_err("dense", format!("input has {} elements, weights expect {n}", input.len())));
    }
    if bias.shape() != [m] {
        return Err(shape_err("dense", format!("bias shape {:?}, expected [{m}]", bias.shape())));
    }
    Ok((m, n))
}

/// Affine map `weights · input + bias`. The input is read flat.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = dense_dims(input, weights, bias)?;
    let x = input.data();
    let out = (0..m)
        .map(|r| {
            let row = &weights.data()[r * n..(r + 1) * n];
            bias.data()[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Ok(Tensor::vector(out))
}

/// Gradients of [`dense`]: (input, weights, bias). The input gradient keeps
/// the input's shape.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let mut gw = Tensor::zeros(weights.shape());
    let gx = dense_backward_accumulate(input, weights, grad_out, gw.data_mut())?;
    Ok((gx, gw, Tensor::vector(grad_out.data().to_vec())))
}

/// As [`dense_backward`], adding the weight gradient into `gw` and
/// returning the input gradient.
pub fn dense_backward_accumulate(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    gw: &mut [f64],
) -> Result<Tensor> {
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    if grad_out.len() != m || input.len() != n || gw.len() != m * n {
        return Err(shape_err("dense_backward", "gradient does not match layer"));
    }
    let x = input.data();
    let mut gx = vec![0.0; n];
    for (r, &gr) in grad_out.data().iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &weights.data()[r * n..(r + 1) * n];
        for (d, &xv) in gw[r * n..(r + 1) * n].iter_mut().zip(x) {
            *d += gr * xv;
        }
        for (d, &wv) in gx.iter_mut().zip(row) {
            *d += gr * wv;
        }
    }
    Tensor::new(input.shape().to_vec(), gx)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn conv_scaling_identity() {
        let x = Tensor::filled(&[1, 3, 3], 1.0);
        let k = Tensor::filled(&[1, 1, 1, 1], 2.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &k, Some(&b)).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv_box_filter_impulse() {
        let mut x = Tensor::zeros(&[1, 5, 5]);
        x.set(&[0, 2, 2], 1.0);
        let k = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, Some(&Tensor::zeros(&[1]))).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let inside = (1..=3).contains(&i) && (1..=3).contains(&j);
                assert_eq!(y.get(&[0, i, j]), if inside { 1.0 } else { 0.0 }, "cell {i},{j}");
            }
        }
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&mut rng, &[2, 5, 5]);
        let k = random(&mut rng, &[3, 2, 3, 3]);
        let b = random(&mut rng, &[3]);
        let fast = conv2d(&x, &k, Some(&b)).unwrap();
        let slow = oracle::naive_conv2d(&x, &k, Some(&b));
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d(&x, &k, None).is_err());
        let even = Tensor::zeros(&[1, 2, 2, 2]);
        assert!(conv2d(&x, &even, None).is_err());
    }

    #[test]
    fn conv_rectangular_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[2, 4, 7]);
        let k = random(&mut rng, &[2, 2, 1, 5]);
        let fast = conv2d(&x, &k, None).unwrap();
        let slow = oracle::naive_conv2d(&x, &k, None);
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn channel_max_single_channel() {
        let x = Tensor::from_fn(&[1, 3, 4], |i| i as f64 - 5.0);
        let (v, arg) = channel_max(&x).unwrap();
        assert_eq!(v.data(), x.data());
        assert!(arg.iter().all(|&a| a == 0));
    }

    #[test]
    fn channel_max_dominated_channel() {
        let mut x = Tensor::filled(&[2, 3, 3], 1.0);
        x.data_mut()[9..].fill(2.0);
        let (v, arg) = channel_max(&x).unwrap();
        assert!(v.data().iter().all(|&a| a == 2.0));
        assert!(arg.iter().all(|&a| a == 1));
    }

    #[test]
    fn channel_max_ties_pick_lowest() {
        let x = Tensor::filled(&[3, 2, 2], 0.5);
        let (_, arg) = channel_max(&x).unwrap();
        assert!(arg.iter().all(|&a| a == 0));
    }

    #[test]
    fn channel_max_random_and_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, &[4, 6, 6]);
        let (v, arg) = channel_max(&x).unwrap();
        let (ov, oarg) = oracle::naive_channel_max(&x);
        assert!(v.max_abs_diff(&ov) < 1e-12);
        assert_eq!(arg, oarg);
        let g = channel_max_backward(&arg, 4, &Tensor::filled(&[6, 6], 1.0));
        assert!(g.data().iter().all(|&m| m == 0.0 || m == 1.0));
        assert_eq!(g.sum(), 36.0);
    }

    #[test]
    fn dense_identity_and_bias() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.5]);
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let y = dense(&x, &eye, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());
        let b = Tensor::vector(vec![0.25, -1.0]);
        let y = dense(&x, &Tensor::zeros(&[2, 3]), &b).unwrap();
        assert_eq!(y.data(), b.data());
    }

    #[test]
    fn dense_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, &[8]);
        let w = random(&mut rng, &[4, 8]);
        let b = random(&mut rng, &[4]);
        let y = dense(&x, &w, &b).unwrap();
        let o = oracle::naive_dense(&x, &w, &b);
        assert!(y.max_abs_diff(&o) < 1e-12);
    }

    #[test]
    fn dense_rejects_mismatch() {
        let x = Tensor::zeros(&[3]);
        assert!(dense(&x, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2])).is_err());
        assert!(dense(&x, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(sigmoid_scalar(-800.0) >= 0.0);
        assert!(sigmoid_scalar(800.0) <= 1.0);
        assert!((sigmoid_scalar(2.0) + sigmoid_scalar(-2.0) - 1.0).abs() < 1e-15);
    }
}
