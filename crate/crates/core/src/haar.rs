//! Functions on the product torus and their Haar expansions.
//!
//! Per parameter the orthonormal coefficient vector has `2^{L·d}` slots:
//! slot 0 is the torus average (the coarsest noncancellative function) and
//! the cancellative functions follow level by level. The redundant layout
//! used by paraproducts stores all `2^d` patterns, including `ε = 0`, for
//! every cube at levels `0..L`.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{realize_cube, DyadicCube, GridShift, TorusSpace};
use crate::par;
use crate::tensor;

/// A piecewise-constant function on the finest cells of a [`TorusSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct MultiFunction {
    space: TorusSpace,
    values: Vec<f64>,
}

impl MultiFunction {
    pub fn new(space: TorusSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.total_cells() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} cells",
                values.len(),
                space.total_cells()
            )));
        }
        Ok(Self { space, values })
    }

    pub fn zeros(space: &TorusSpace) -> Self {
        Self {
            values: vec![0.0; space.total_cells()],
            space: space.clone(),
        }
    }

    pub fn constant(space: &TorusSpace, c: f64) -> Self {
        Self {
            values: vec![c; space.total_cells()],
            space: space.clone(),
        }
    }

    /// `v_1 ⊗ … ⊗ v_n`, each factor given on the cells of its parameter.
    pub fn from_tensor(space: &TorusSpace, factors: &[Vec<f64>]) -> Result<Self> {
        if factors.len() != space.n() {
            return Err(Error::ShapeMismatch(format!(
                "{} factors for {} parameters",
                factors.len(),
                space.n()
            )));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.len() != space.cells(i) {
                return Err(Error::ShapeMismatch(format!(
                    "factor {i} has {} cells, expected {}",
                    f.len(),
                    space.cells(i)
                )));
            }
        }
        let refs: Vec<&[f64]> = factors.iter().map(|f| f.as_slice()).collect();
        Ok(Self {
            space: space.clone(),
            values: tensor::outer_product(&refs),
        })
    }

    /// Independent uniform values in `[-1, 1)` from a seeded stream.
    pub fn random(space: &TorusSpace, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            values: (0..space.total_cells()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            space: space.clone(),
        }
    }

    /// Evaluates `f(cells)` at every product cell; `cells[i]` is the flat
    /// cell index in parameter `i`.
    pub fn from_fn<F>(space: &TorusSpace, f: F) -> Self
    where
        F: Fn(&[usize]) -> f64 + Sync + Send,
    {
        let shape = space.shape();
        let values = par::map_range(space.total_cells(), |mut idx| {
            let mut cells = vec![0usize; shape.len()];
            for a in (0..shape.len()).rev() {
                cells[a] = idx % shape[a];
                idx /= shape[a];
            }
            f(&cells)
        });
        Self {
            space: space.clone(),
            values,
        }
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shape(&self) -> Vec<usize> {
        self.space.shape()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.space.dims() != other.space.dims() || self.space.depth() != other.space.depth() {
            return Err(Error::ShapeMismatch("functions live on different spaces".into()));
        }
        Ok(())
    }

    /// `⟨f, g⟩ = Σ f·g·vol`, summed in a fixed order.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(dot(&self.values, &other.values) * self.space.product_cell_volume())
    }

    pub fn norm(&self) -> f64 {
        (dot(&self.values, &self.values) * self.space.product_cell_volume()).sqrt()
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a·other`.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.check_same(other)?;
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }
}

const DOT_CHUNK: usize = 4096;

/// Chunked dot product with a fixed reduction tree.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let chunks = a.len().div_ceil(DOT_CHUNK);
    let partial = par::map_range(chunks, |c| {
        let r = c * DOT_CHUNK..((c + 1) * DOT_CHUNK).min(a.len());
        a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum::<f64>()
    });
    par::tree_sum(&partial)
}

/// One element of a per-parameter basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisElem {
    Average,
    Haar { level: u32, pos: usize, eps: u32 },
}

/// Index arithmetic for the orthonormal and redundant layouts of one
/// parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Basis1d {
    pub dim: u32,
    pub depth: u32,
}

impl Basis1d {
    pub fn new(dim: u32, depth: u32) -> Self {
        Self { dim, depth }
    }

    pub fn of(space: &TorusSpace, param: usize) -> Self {
        Self::new(space.dim(param), space.depth())
    }

    pub fn patterns(&self) -> usize {
        1 << self.dim
    }

    pub fn cubes_at(&self, level: u32) -> usize {
        1 << (level * self.dim)
    }

    pub fn len(&self) -> usize {
        1 << (self.depth * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn encode(&self, level: u32, pos: usize, eps: u32) -> usize {
        debug_assert!(eps >= 1 && (eps as usize) < self.patterns());
        self.cubes_at(level) + pos * (self.patterns() - 1) + eps as usize - 1
    }

    pub fn decode(&self, idx: usize) -> BasisElem {
        if idx == 0 {
            return BasisElem::Average;
        }
        let level = (usize::BITS - 1 - idx.leading_zeros()) / self.dim;
        let rel = idx - self.cubes_at(level);
        let per = self.patterns() - 1;
        BasisElem::Haar {
            level,
            pos: rel / per,
            eps: (rel % per) as u32 + 1,
        }
    }

    /// Level of an orthonormal slot; `None` for the average.
    pub fn level_of(&self, idx: usize) -> Option<u32> {
        match self.decode(idx) {
            BasisElem::Average => None,
            BasisElem::Haar { level, .. } => Some(level),
        }
    }

    /// Slots of the cancellative functions at `level`.
    pub fn level_range(&self, level: u32) -> Range<usize> {
        self.cubes_at(level)..self.cubes_at(level + 1)
    }

    pub fn redundant_offset(&self, level: u32) -> usize {
        (0..level).map(|k| self.cubes_at(k + 1)).sum()
    }

    pub fn redundant_len(&self) -> usize {
        self.redundant_offset(self.depth)
    }

    pub fn redundant_index(&self, level: u32, pos: usize, eps: u32) -> usize {
        self.redundant_offset(level) + pos * self.patterns() + eps as usize
    }

    pub fn redundant_decode(&self, idx: usize) -> (u32, usize, u32) {
        let mut level = 0;
        while self.redundant_offset(level + 1) <= idx {
            level += 1;
        }
        let rel = idx - self.redundant_offset(level);
        (level, rel / self.patterns(), (rel % self.patterns()) as u32)
    }
}

/// A Haar function `h_I^ε`; `eps = 0` is the noncancellative `h_I^1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HaarFunction {
    pub cube: DyadicCube,
    pub eps: u32,
}

impl HaarFunction {
    pub fn new(cube: DyadicCube, eps: u32) -> Self {
        Self { cube, eps }
    }

    pub fn is_cancellative(&self) -> bool {
        self.eps != 0
    }

    /// Values on the finest cells of the cube's parameter.
    pub fn cells(&self, space: &TorusSpace, grid: &GridShift) -> Result<Vec<f64>> {
        let param = self.cube.param;
        let b = realize_cube(grid, &self.cube)?;
        let m = b.modulus();
        let half = b.len / 2;
        let amp = self.cube.volume().powf(-0.5);
        let mut out = vec![0.0; space.cells(param)];
        let d = space.dim(param) as usize;
        for c in b.cells() {
            let mut sign = 1.0;
            for t in 0..d {
                if (self.eps >> t) & 1 == 1 {
                    let shift = space.depth() as usize * (d - 1 - t);
                    let x = ((c >> shift) as u64) & (m - 1);
                    if (x + m - b.start[t]) % m >= half {
                        sign = -sign;
                    }
                }
            }
            out[c] = amp * sign;
        }
        Ok(out)
    }
}

/// Values of an orthonormal basis slot on the cells of parameter `param`.
pub fn basis_vector(space: &TorusSpace, grid: &GridShift, param: usize, idx: usize) -> Result<Vec<f64>> {
    let b = Basis1d::of(space, param);
    match b.decode(idx) {
        BasisElem::Average => Ok(vec![1.0; space.cells(param)]),
        BasisElem::Haar { level, pos, eps } => {
            let cube = DyadicCube::from_flat(param, level, b.dim, pos);
            HaarFunction::new(cube, eps).cells(space, grid)
        }
    }
}

/// Values of a redundant slot on the cells of parameter `param`.
pub fn redundant_vector(space: &TorusSpace, grid: &GridShift, param: usize, idx: usize) -> Result<Vec<f64>> {
    let b = Basis1d::of(space, param);
    let (level, pos, eps) = b.redundant_decode(idx);
    let cube = DyadicCube::from_flat(param, level, b.dim, pos);
    HaarFunction::new(cube, eps).cells(space, grid)
}

/// Grid data needed to transform along one axis.
#[derive(Clone, Copy, Debug)]
pub struct AxisGrid<'a> {
    pub dim: u32,
    pub depth: u32,
    pub bits: &'a [u32],
}

impl<'a> AxisGrid<'a> {
    pub fn of(grid: &'a GridShift, param: usize) -> Self {
        Self {
            dim: grid.dims()[param],
            depth: grid.depth(),
            bits: grid.bits(param),
        }
    }

    fn basis(&self) -> Basis1d {
        Basis1d::new(self.dim, self.depth)
    }

    fn cell_volume(&self) -> f64 {
        (-((self.depth * self.dim) as f64)).exp2()
    }

    /// `table[p·2^d + e]` is the flat index of child `e` of the level-`k`
    /// cube `p`.
    fn child_table(&self, level: u32) -> Vec<usize> {
        let d = self.dim as usize;
        let k = level;
        let w = self.bits[k as usize];
        let np = 1usize << (k as usize * d);
        let pat = 1usize << d;
        let pmask = (1usize << k) - 1;
        let qmod = 1usize << (k + 1);
        let mut table = vec![0usize; np * pat];
        for p in 0..np {
            for e in 0..pat {
                let mut q = 0usize;
                for t in 0..d {
                    let pt = (p >> (k as usize * (d - 1 - t))) & pmask;
                    let b = ((w >> t) & 1) as usize;
                    let et = (e >> t) & 1;
                    let qt = (2 * pt + b + et) % qmod;
                    q = (q << (k + 1)) | qt;
                }
                table[p * pat + e] = q;
            }
        }
        table
    }

    pub(crate) fn child_tables(&self) -> Vec<Vec<usize>> {
        (0..self.depth).map(|k| self.child_table(k)).collect()
    }
}

/// In-place Walsh–Hadamard transform across `rows` rows of width `w`,
/// scaled to be orthonormal.
fn wht_rows(buf: &mut [f64], rows: usize, w: usize) {
    let mut h = 1;
    while h < rows {
        for i in (0..rows).step_by(2 * h) {
            for j in i..i + h {
                let (lo, hi) = buf.split_at_mut((j + h) * w);
                let a = &mut lo[j * w..(j + 1) * w];
                let b = &mut hi[..w];
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let s = *x + *y;
                    *y = *x - *y;
                    *x = s;
                }
            }
        }
        h *= 2;
    }
    let s = (rows as f64).sqrt().recip();
    buf.iter_mut().for_each(|v| *v *= s);
}

/// Orthonormal Haar analysis along `axis`.
pub fn forward_axis(data: &[f64], shape: &[usize], axis: usize, g: AxisGrid<'_>) -> Vec<f64> {
    let basis = g.basis();
    assert_eq!(shape[axis], basis.len());
    let tables = g.child_tables();
    let pat = basis.patterns();
    let sv = g.cell_volume().sqrt();
    tensor::map_axis(data, shape, axis, basis.len(), |src, dst, w| {
        let mut cur: Vec<f64> = src.iter().map(|v| v * sv).collect();
        let mut tmp = vec![0.0; pat * w];
        for k in (0..g.depth).rev() {
            let table = &tables[k as usize];
            let np = basis.cubes_at(k);
            let mut next = vec![0.0; np * w];
            for p in 0..np {
                for e in 0..pat {
                    let q = table[p * pat + e];
                    tmp[e * w..(e + 1) * w].copy_from_slice(&cur[q * w..(q + 1) * w]);
                }
                wht_rows(&mut tmp, pat, w);
                next[p * w..(p + 1) * w].copy_from_slice(&tmp[..w]);
                let at = basis.encode(k, p, 1);
                dst[at * w..(at + pat - 1) * w].copy_from_slice(&tmp[w..]);
            }
            cur = next;
        }
        dst[..w].copy_from_slice(&cur[..w]);
    })
}

/// Inverse of [`forward_axis`].
pub fn inverse_axis(data: &[f64], shape: &[usize], axis: usize, g: AxisGrid<'_>) -> Vec<f64> {
    let basis = g.basis();
    assert_eq!(shape[axis], basis.len());
    let tables = g.child_tables();
    let pat = basis.patterns();
    let isv = g.cell_volume().sqrt().recip();
    tensor::map_axis(data, shape, axis, basis.len(), |src, dst, w| {
        let mut cur = src[..w].to_vec();
        let mut tmp = vec![0.0; pat * w];
        for k in 0..g.depth {
            let table = &tables[k as usize];
            let np = basis.cubes_at(k);
            let mut next = vec![0.0; np * pat * w];
            for p in 0..np {
                tmp[..w].copy_from_slice(&cur[p * w..(p + 1) * w]);
                let at = basis.encode(k, p, 1);
                tmp[w..].copy_from_slice(&src[at * w..(at + pat - 1) * w]);
                wht_rows(&mut tmp, pat, w);
                for e in 0..pat {
                    let q = table[p * pat + e];
                    next[q * w..(q + 1) * w].copy_from_slice(&tmp[e * w..(e + 1) * w]);
                }
            }
            cur = next;
        }
        for (o, v) in dst.iter_mut().zip(&cur) {
            *o = v * isv;
        }
    })
}

/// Redundant analysis along `axis`: every `⟨f, h_I^ε⟩` for cubes at levels
/// `0..L` and all patterns, `ε = 0` included.
pub fn redundant_analysis_axis(data: &[f64], shape: &[usize], axis: usize, g: AxisGrid<'_>) -> Vec<f64> {
    let basis = g.basis();
    assert_eq!(shape[axis], basis.len());
    let tables = g.child_tables();
    let pat = basis.patterns();
    let sv = g.cell_volume().sqrt();
    tensor::map_axis(data, shape, axis, basis.redundant_len(), |src, dst, w| {
        let mut cur: Vec<f64> = src.iter().map(|v| v * sv).collect();
        let mut tmp = vec![0.0; pat * w];
        for k in (0..g.depth).rev() {
            let table = &tables[k as usize];
            let np = basis.cubes_at(k);
            let mut next = vec![0.0; np * w];
            for p in 0..np {
                for e in 0..pat {
                    let q = table[p * pat + e];
                    tmp[e * w..(e + 1) * w].copy_from_slice(&cur[q * w..(q + 1) * w]);
                }
                wht_rows(&mut tmp, pat, w);
                next[p * w..(p + 1) * w].copy_from_slice(&tmp[..w]);
                let at = basis.redundant_index(k, p, 0);
                dst[at * w..(at + pat) * w].copy_from_slice(&tmp);
            }
            cur = next;
        }
    })
}

/// Redundant synthesis along `axis`: `Σ c_{I,ε} h_I^ε`, the adjoint of
/// [`redundant_analysis_axis`].
pub fn redundant_synthesis_axis(data: &[f64], shape: &[usize], axis: usize, g: AxisGrid<'_>) -> Vec<f64> {
    let basis = g.basis();
    assert_eq!(shape[axis], basis.redundant_len());
    let tables = g.child_tables();
    let pat = basis.patterns();
    let isv = g.cell_volume().sqrt().recip();
    tensor::map_axis(data, shape, axis, basis.len(), |src, dst, w| {
        let mut cur = vec![0.0; w];
        let mut tmp = vec![0.0; pat * w];
        for k in 0..g.depth {
            let table = &tables[k as usize];
            let np = basis.cubes_at(k);
            let mut next = vec![0.0; np * pat * w];
            for p in 0..np {
                let at = basis.redundant_index(k, p, 0);
                tmp.copy_from_slice(&src[at * w..(at + pat) * w]);
                for (t, c) in tmp[..w].iter_mut().zip(&cur[p * w..(p + 1) * w]) {
                    *t += c;
                }
                wht_rows(&mut tmp, pat, w);
                for e in 0..pat {
                    let q = table[p * pat + e];
                    next[q * w..(q + 1) * w].copy_from_slice(&tmp[e * w..(e + 1) * w]);
                }
            }
            cur = next;
        }
        for (o, v) in dst.iter_mut().zip(&cur) {
            *o = v * isv;
        }
    })
}

/// Orthonormal Haar coefficients of a [`MultiFunction`] in a given grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoeffs {
    space: TorusSpace,
    values: Vec<f64>,
}

impl HaarCoeffs {
    pub fn new(space: TorusSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.total_cells() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for {} slots",
                values.len(),
                space.total_cells()
            )));
        }
        Ok(Self { space, values })
    }

    pub fn zeros(space: &TorusSpace) -> Self {
        Self {
            values: vec![0.0; space.total_cells()],
            space: space.clone(),
        }
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Flat offset of a multi-index of per-parameter slots.
    pub fn offset(&self, slots: &[usize]) -> usize {
        slots
            .iter()
            .zip(self.space.shape())
            .fold(0, |acc, (&s, n)| acc * n + s)
    }

    pub fn get(&self, slots: &[usize]) -> f64 {
        self.values[self.offset(slots)]
    }

    pub fn set(&mut self, slots: &[usize], v: f64) {
        let o = self.offset(slots);
        self.values[o] = v;
    }

    pub fn sum_squares(&self) -> f64 {
        dot(&self.values, &self.values)
    }
}

pub fn haar_forward(f: &MultiFunction, grid: &GridShift) -> Result<HaarCoeffs> {
    grid.check(f.space())?;
    let shape = f.shape();
    let mut data = f.values().to_vec();
    for i in 0..shape.len() {
        data = forward_axis(&data, &shape, i, AxisGrid::of(grid, i));
    }
    Ok(HaarCoeffs {
        space: f.space().clone(),
        values: data,
    })
}

pub fn haar_inverse(c: &HaarCoeffs, grid: &GridShift) -> Result<MultiFunction> {
    grid.check(c.space())?;
    let shape = c.space.shape();
    let mut data = c.values.clone();
    for i in 0..shape.len() {
        data = inverse_axis(&data, &shape, i, AxisGrid::of(grid, i));
    }
    MultiFunction::new(c.space.clone(), data)
}

/// Descendants of `cube` exactly `gap` levels below it.
pub fn descendants(grid: &GridShift, cube: &DyadicCube, gap: u32) -> Vec<DyadicCube> {
    let pat = 1u32 << cube.dim();
    let mut cur = vec![cube.clone()];
    for _ in 0..gap {
        cur = cur
            .iter()
            .flat_map(|c| (0..pat).map(move |e| c.child(grid, e)))
            .collect();
    }
    cur
}

/// Orthogonal projection onto the cancellative Haar functions of the cubes
/// `I ⊂ J` with `ℓ(I) = 2^{-gap} ℓ(J)`, in parameter `param`.
pub fn level_project(
    f: &MultiFunction,
    grid: &GridShift,
    param: usize,
    cube: &DyadicCube,
    gap: u32,
) -> Result<MultiFunction> {
    grid.check(f.space())?;
    let level = cube.level + gap;
    let depth = f.space().depth();
    if level > depth {
        return Err(Error::LevelOutOfRange { level, depth });
    }
    if level == depth {
        return Ok(MultiFunction::zeros(f.space()));
    }
    let basis = Basis1d::of(f.space(), param);
    let mut keep = vec![false; basis.len()];
    let c = DyadicCube { param, ..cube.clone() };
    for dsc in descendants(grid, &c, gap) {
        let pos = dsc.flat();
        for eps in 1..basis.patterns() as u32 {
            keep[basis.encode(level, pos, eps)] = true;
        }
    }
    let shape = f.shape();
    let g = AxisGrid::of(grid, param);
    let coeffs = forward_axis(f.values(), &shape, param, g);
    let masked = tensor::map_axis(&coeffs, &shape, param, basis.len(), |src, dst, w| {
        for (r, &k) in keep.iter().enumerate() {
            if k {
                dst[r * w..(r + 1) * w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
        }
    });
    MultiFunction::new(f.space().clone(), inverse_axis(&masked, &shape, param, g))
}

/// Integrates `f` against cell vectors in the listed parameters, returning
/// a function of the remaining parameters.
pub fn partial_pair(f: &MultiFunction, pairs: &[(usize, &[f64])]) -> Result<MultiFunction> {
    let space = f.space();
    let mut used = vec![false; space.n()];
    for &(p, v) in pairs {
        if p >= space.n() || used[p] {
            return Err(Error::ShapeMismatch(format!("bad pairing parameter {p}")));
        }
        if v.len() != space.cells(p) {
            return Err(Error::ShapeMismatch(format!(
                "pairing vector for parameter {p} has {} cells",
                v.len()
            )));
        }
        used[p] = true;
    }
    let rest: Vec<usize> = (0..space.n()).filter(|&p| !used[p]).collect();
    if pairs.is_empty() || rest.is_empty() {
        return Err(Error::ShapeMismatch(
            "partial pairing needs a nonempty proper parameter subset".into(),
        ));
    }
    let mut sorted: Vec<(usize, &[f64])> = pairs.to_vec();
    sorted.sort_by_key(|p| std::cmp::Reverse(p.0));
    let mut shape = f.shape();
    let mut data = f.values().to_vec();
    for (p, v) in sorted {
        let vol = space.cell_volume(p);
        let w: Vec<f64> = v.iter().map(|x| x * vol).collect();
        data = tensor::contract_axis(&data, &shape, p, &w);
        shape.remove(p);
    }
    MultiFunction::new(space.restrict(&rest)?, data)
}

/// [`partial_pair`] against Haar functions.
pub fn partial_pair_haar(
    f: &MultiFunction,
    grid: &GridShift,
    haars: &[HaarFunction],
) -> Result<MultiFunction> {
    let vecs = haars
        .iter()
        .map(|h| h.cells(f.space(), grid))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, &[f64])> = haars
        .iter()
        .zip(&vecs)
        .map(|(h, v)| (h.cube.param, v.as_slice()))
        .collect();
    partial_pair(f, &pairs)
}
