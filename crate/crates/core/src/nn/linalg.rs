//! Row-major batch kernels for dense layers.

use super::Dense;

/// `out[i, :] = b + x[i, :] · W` for every row of the batch.
pub(super) fn affine(x: &[f64], layer: &Dense, out: &mut [f64]) {
    let (k_in, k_out) = (layer.inputs, layer.outputs);
    debug_assert_eq!(x.len() / k_in * k_out, out.len());
    for (xi, oi) in x.chunks_exact(k_in).zip(out.chunks_exact_mut(k_out)) {
        oi.copy_from_slice(&layer.b);
        for (k, &xv) in xi.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wk = &layer.w[k * k_out..(k + 1) * k_out];
            for (o, &w) in oi.iter_mut().zip(wk) {
                *o += xv * w;
            }
        }
    }
}

/// Accumulates `W += xᵀ · dz` and `b += Σ dz` into `grad`.
pub(super) fn accumulate_grad(x: &[f64], dz: &[f64], grad: &mut Dense) {
    let (k_in, k_out) = (grad.inputs, grad.outputs);
    for (xi, di) in x.chunks_exact(k_in).zip(dz.chunks_exact(k_out)) {
        for (b, &d) in grad.b.iter_mut().zip(di) {
            *b += d;
        }
        for (k, &xv) in xi.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let gk = &mut grad.w[k * k_out..(k + 1) * k_out];
            for (g, &d) in gk.iter_mut().zip(di) {
                *g += xv * d;
            }
        }
    }
}

/// `dx[i, k] = dz[i, :] · W[k, :]`, restricted to input columns `cols`.
pub(super) fn backprop_input(dz: &[f64], layer: &Dense, cols: std::ops::Range<usize>, dx: &mut [f64]) {
    let k_out = layer.outputs;
    let width = cols.len();
    for (di, dxi) in dz.chunks_exact(k_out).zip(dx.chunks_exact_mut(width)) {
        for (slot, k) in dxi.iter_mut().zip(cols.clone()) {
            *slot = dot(di, &layer.w[k * k_out..(k + 1) * k_out]);
        }
    }
}

/// Dot product with four independent partial sums (fixed order).
pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
