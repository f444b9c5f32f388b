//! Layer primitives shared by both model architectures.
//!
//! Functions operate on row-major buffers with explicit dimensions (NHWC for
//! images) so the convolutional and dense models reuse them. Inner loops run
//! over contiguous slices in a fixed order, which keeps results deterministic
//! for a given build and lets the compiler vectorize the hot paths.

use crate::Scalar;

const LANES: usize = 8;

/// Dot product with eight independent accumulators so the reduction
/// vectorizes without reassociating one serial chain.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        s = s + x * y;
    }
    s
}

/// `y += alpha * x`, elementwise.
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Valid, stride-1 convolution. Input `[n,h,w,cin]`, kernel `[cout,k,k,cin]`,
/// bias `[cout]`, output `[n,h-k+1,w-k+1,cout]`.
pub fn conv2d_forward<T: Scalar>(
    input: &[T],
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kernel: &[T],
    bias: &[T],
    cout: usize,
    k: usize,
) -> Vec<T> {
    let ho = h - k + 1;
    let wo = w - k + 1;
    let irow = w * cin;
    let krow = k * cin;
    let fstride = k * krow;
    debug_assert_eq!(input.len(), n * h * irow);
    debug_assert_eq!(kernel.len(), cout * fstride);
    debug_assert_eq!(bias.len(), cout);
    let mut out = vec![T::zero(); n * ho * wo * cout];
    for b in 0..n {
        let img = &input[b * h * irow..(b + 1) * h * irow];
        let obase = b * ho * wo * cout;
        for y in 0..ho {
            for x in 0..wo {
                let o = obase + (y * wo + x) * cout;
                for f in 0..cout {
                    let filt = &kernel[f * fstride..(f + 1) * fstride];
                    let mut acc = bias[f];
                    for ky in 0..k {
                        acc = acc
                            + dot(
                                &img[(y + ky) * irow + x * cin..][..krow],
                                &filt[ky * krow..][..krow],
                            );
                    }
                    out[o + f] = acc;
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d_forward`]: `(dkernel, dbias, dinput)`. `dinput`
/// comes back empty when `need_dinput` is false (first layer of a model).
pub fn conv2d_backward<T: Scalar>(
    input: &[T],
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kernel: &[T],
    cout: usize,
    k: usize,
    gout: &[T],
    need_dinput: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let ho = h - k + 1;
    let wo = w - k + 1;
    let irow = w * cin;
    let krow = k * cin;
    let fstride = k * krow;
    debug_assert_eq!(gout.len(), n * ho * wo * cout);
    let mut dkernel = vec![T::zero(); cout * fstride];
    let mut dbias = vec![T::zero(); cout];
    let mut dinput = if need_dinput {
        vec![T::zero(); input.len()]
    } else {
        Vec::new()
    };
    for b in 0..n {
        let ibase = b * h * irow;
        let img = &input[ibase..ibase + h * irow];
        let obase = b * ho * wo * cout;
        for y in 0..ho {
            for x in 0..wo {
                let go = &gout[obase + (y * wo + x) * cout..][..cout];
                for f in 0..cout {
                    let g = go[f];
                    if g == T::zero() {
                        continue;
                    }
                    dbias[f] += g;
                    let kf = f * fstride;
                    for ky in 0..k {
                        axpy(
                            g,
                            &img[(y + ky) * irow + x * cin..][..krow],
                            &mut dkernel[kf + ky * krow..][..krow],
                        );
                    }
                    if need_dinput {
                        for ky in 0..k {
                            axpy(
                                g,
                                &kernel[kf + ky * krow..][..krow],
                                &mut dinput[ibase + (y + ky) * irow + x * cin..][..krow],
                            );
                        }
                    }
                }
            }
        }
    }
    (dkernel, dbias, dinput)
}

/// 2x2 max pooling with stride 2 over `[n,h,w,c]`; `h` and `w` must be even
/// (model constructors validate this). Returns the pooled map and each
/// winner's flat input index; ties keep the first candidate in row-major
/// scan order.
pub fn maxpool2_forward<T: Scalar>(
    input: &[T],
    n: usize,
    h: usize,
    w: usize,
    c: usize,
) -> (Vec<T>, Vec<u32>) {
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let ho = h / 2;
    let wo = w / 2;
    let mut out = vec![T::zero(); n * ho * wo * c];
    let mut winners = vec![0u32; out.len()];
    let at = |b: usize, y: usize, x: usize, ch: usize| ((b * h + y) * w + x) * c + ch;
    let mut o = 0;
    for b in 0..n {
        for y in 0..ho {
            for x in 0..wo {
                for ch in 0..c {
                    let mut best_i = at(b, 2 * y, 2 * x, ch);
                    let mut best_v = input[best_i];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = at(b, 2 * y + dy, 2 * x + dx, ch);
                        if input[i] > best_v {
                            best_v = input[i];
                            best_i = i;
                        }
                    }
                    out[o] = best_v;
                    winners[o] = best_i as u32;
                    o += 1;
                }
            }
        }
    }
    (out, winners)
}

/// Routes `gout` back to each pooling winner.
pub fn maxpool2_backward<T: Scalar>(gout: &[T], winners: &[u32], input_len: usize) -> Vec<T> {
    debug_assert_eq!(gout.len(), winners.len());
    let mut dinput = vec![T::zero(); input_len];
    for (&g, &i) in gout.iter().zip(winners) {
        dinput[i as usize] += g;
    }
    dinput
}

/// Elementwise `max(0, x)`.
pub fn relu_forward<T: Scalar>(input: &[T]) -> Vec<T> {
    input.iter().map(|&v| v.max(T::zero())).collect()
}

/// Masks `gout` where the activation was clamped; the subgradient at exactly
/// zero is zero. `act` may be either the pre-activation or its relu output,
/// since both share the sign of the pass-through region.
pub fn relu_backward<T: Scalar>(act: &[T], gout: &[T]) -> Vec<T> {
    debug_assert_eq!(act.len(), gout.len());
    act.iter()
        .zip(gout)
        .map(|(&a, &g)| if a > T::zero() { g } else { T::zero() })
        .collect()
}

/// Affine map: input `[n,din]`, weights `[din,dout]`, bias `[dout]`.
pub fn dense_forward<T: Scalar>(
    input: &[T],
    n: usize,
    din: usize,
    weights: &[T],
    bias: &[T],
    dout: usize,
) -> Vec<T> {
    debug_assert_eq!(input.len(), n * din);
    debug_assert_eq!(weights.len(), din * dout);
    debug_assert_eq!(bias.len(), dout);
    let mut out = vec![T::zero(); n * dout];
    for b in 0..n {
        let orow = &mut out[b * dout..(b + 1) * dout];
        orow.copy_from_slice(bias);
        for i in 0..din {
            let xi = input[b * din + i];
            if xi != T::zero() {
                axpy(xi, &weights[i * dout..][..dout], orow);
            }
        }
    }
    out
}

/// Gradients of [`dense_forward`]: `(dweights, dbias, dinput)`.
pub fn dense_backward<T: Scalar>(
    input: &[T],
    n: usize,
    din: usize,
    weights: &[T],
    dout: usize,
    gout: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    debug_assert_eq!(gout.len(), n * dout);
    let mut dweights = vec![T::zero(); din * dout];
    let mut dbias = vec![T::zero(); dout];
    let mut dinput = vec![T::zero(); n * din];
    for b in 0..n {
        let go = &gout[b * dout..(b + 1) * dout];
        axpy(T::one(), go, &mut dbias);
        for i in 0..din {
            let xi = input[b * din + i];
            if xi != T::zero() {
                axpy(xi, go, &mut dweights[i * dout..][..dout]);
            }
            dinput[b * din + i] = dot(&weights[i * dout..][..dout], go);
        }
    }
    (dweights, dbias, dinput)
}

/// Row-wise softmax over `[n,k]` with max subtraction for stability. Output
/// rows sum to one within floating-point accumulation error.
pub fn softmax_rows<T: Scalar>(logits: &[T], n: usize, k: usize) -> Vec<T> {
    debug_assert_eq!(logits.len(), n * k);
    let mut out = vec![T::zero(); n * k];
    for b in 0..n {
        let row = &logits[b * k..(b + 1) * k];
        let orow = &mut out[b * k..(b + 1) * k];
        let mut m = row[0];
        for &v in &row[1..] {
            if v > m {
                m = v;
            }
        }
        let mut sum = T::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - m).exp();
            *o = e;
            sum += e;
        }
        let inv = T::one() / sum;
        for o in orow.iter_mut() {
            *o *= inv;
        }
    }
    out
}
