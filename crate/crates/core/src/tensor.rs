//! Dense row-major tensor helpers.
//!
//! Arrays are stored with axis 0 slowest. Axis maps split the data into
//! work units of `(outer block, column range)`, gather the unit into a
//! contiguous `[len][w]` buffer, run the kernel on whole rows and scatter
//! the `[out_len][w]` result back.

use crate::par;

/// `(outer, len, inner)` for `axis` of `shape`.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

struct SharedOut(*mut f64);

// Work units write disjoint (outer, column) regions.
unsafe impl Sync for SharedOut {}
unsafe impl Send for SharedOut {}

impl SharedOut {
    /// # Safety
    /// Callers must write disjoint ranges from different threads.
    unsafe fn write(&self, offset: usize, src: &[f64]) {
        std::ptr::copy_nonoverlapping(src.as_ptr(), self.0.add(offset), src.len());
    }
}

const MIN_WIDTH: usize = 64;

/// Applies `kernel(src, dst, w)` to every fiber along `axis`, where `src`
/// holds `len` rows of width `w` and `dst` receives `out_len` rows.
pub fn map_axis<F>(data: &[f64], shape: &[usize], axis: usize, out_len: usize, kernel: F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64], usize) + Sync + Send,
{
    let (outer, len, inner) = axis_split(shape, axis);
    assert_eq!(data.len(), outer * len * inner);
    let mut out = vec![0.0; outer * out_len * inner];
    if out.is_empty() {
        return out;
    }

    let target = 4 * par::workers();
    let splits = if outer >= target {
        1
    } else {
        target.div_ceil(outer).min(inner.div_ceil(MIN_WIDTH)).max(1)
    };
    let width = inner.div_ceil(splits);
    let per_outer = inner.div_ceil(width);
    let units = outer * per_outer;

    let shared = SharedOut(out.as_mut_ptr());
    let shared = &shared;
    par::map_range(units, |u| {
        let o = u / per_outer;
        let c0 = (u % per_outer) * width;
        let w = width.min(inner - c0);
        let base_in = o * len * inner;
        let mut src = vec![0.0; len * w];
        for (r, row) in src.chunks_mut(w).enumerate() {
            let at = base_in + r * inner + c0;
            row.copy_from_slice(&data[at..at + w]);
        }
        let mut dst = vec![0.0; out_len * w];
        kernel(&src, &mut dst, w);
        let base_out = o * out_len * inner;
        for (r, row) in dst.chunks(w).enumerate() {
            // SAFETY: unit (o, c0..c0+w) owns these columns of block o.
            unsafe { shared.write(base_out + r * inner + c0, row) };
        }
    });
    out
}

/// `out[r] = Σ_c m[r][c] · in[c]` along `axis`, with `m` row-major of
/// shape `rows × shape[axis]`.
pub fn apply_matrix_axis(data: &[f64], shape: &[usize], axis: usize, m: &[f64], rows: usize) -> Vec<f64> {
    let cols = shape[axis];
    assert_eq!(m.len(), rows * cols);
    map_axis(data, shape, axis, rows, |src, dst, w| {
        for r in 0..rows {
            let out = &mut dst[r * w..(r + 1) * w];
            for c in 0..cols {
                let a = m[r * cols + c];
                if a != 0.0 {
                    let row = &src[c * w..(c + 1) * w];
                    for (o, &x) in out.iter_mut().zip(row) {
                        *o += a * x;
                    }
                }
            }
        }
    })
}

/// Contracts `axis` against `v`; the result has `axis` removed.
pub fn contract_axis(data: &[f64], shape: &[usize], axis: usize, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), shape[axis]);
    apply_matrix_axis(data, shape, axis, v, 1)
}

/// Reorders axes: output axis `k` is input axis `perm[k]`.
pub fn permute_axes(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let n = shape.len();
    assert_eq!(perm.len(), n);
    let new_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    if perm.iter().enumerate().all(|(k, &p)| k == p) {
        return (data.to_vec(), new_shape);
    }
    let mut in_strides = vec![1usize; n];
    for a in (0..n.saturating_sub(1)).rev() {
        in_strides[a] = in_strides[a + 1] * shape[a + 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let last = new_shape[n - 1];
    let mut out = vec![0.0; data.len()];
    if out.is_empty() {
        return (out, new_shape);
    }
    par::for_each_chunk_mut(&mut out, last, |row, chunk| {
        let mut rem = row;
        let mut base = 0;
        for k in (0..n - 1).rev() {
            base += (rem % new_shape[k]) * strides[k];
            rem /= new_shape[k];
        }
        let s = strides[n - 1];
        for (j, o) in chunk.iter_mut().enumerate() {
            *o = data[base + j * s];
        }
    });
    (out, new_shape)
}

/// Outer product `v_1 ⊗ … ⊗ v_n` in row-major order.
pub fn outer_product(factors: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for &a in &out {
            next.extend(f.iter().map(|&b| a * b));
        }
        out = next;
    }
    out
}
