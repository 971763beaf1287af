//! Dyadic BMO and product-BMO surrogates from Carleson sums of squared Haar
//! coefficients.

use serde::{Deserialize, Serialize};

use crate::cases::make_s;
use crate::error::{Error, Result};
use crate::grid::{is_good, realize_cube, DyadicCube, GridShift};
use crate::haar::{redundant_analysis_axis, AxisGrid, Basis1d, HaarFunction, MultiFunction};
use crate::kernel::OperatorHandle;
use crate::par;
use crate::tensor;

/// A dyadic rectangle, one cube per parameter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub levels: Vec<u32>,
    pub positions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub value: f64,
    pub witnesses: Vec<Rect>,
    /// `single-rectangle` or `greedy-union-m`.
    pub family: String,
}

/// Squared cancellative coefficient mass per rectangle.
///
/// Rectangles are indexed per parameter by `redundant_offset(k)/2^d + p`,
/// levels `0..L`.
struct Energy {
    shape: Vec<usize>,
    bases: Vec<Basis1d>,
    values: Vec<f64>,
}

impl Energy {
    fn new(b: &MultiFunction, grid: &GridShift) -> Result<Self> {
        let space = b.space();
        if grid.dims() != space.dims() || grid.depth() != space.depth() {
            return Err(Error::GridMismatch("grid does not match the symbol's space".into()));
        }
        let mut shape = b.shape();
        let mut data = b.values().to_vec();
        for a in 0..space.n() {
            data = redundant_analysis_axis(&data, &shape, a, AxisGrid::of(grid, a));
            shape[a] = Basis1d::of(space, a).redundant_len();
        }
        data.iter_mut().for_each(|v| *v *= *v);
        let bases: Vec<Basis1d> = (0..space.n()).map(|a| Basis1d::of(space, a)).collect();
        for (a, basis) in bases.iter().enumerate() {
            let pat = basis.patterns();
            let cubes = shape[a] / pat;
            data = tensor::map_axis(&data, &shape, a, cubes, |src, dst, w| {
                for c in 0..cubes {
                    let out = &mut dst[c * w..(c + 1) * w];
                    out.fill(0.0);
                    for e in 1..pat {
                        let row = &src[(c * pat + e) * w..(c * pat + e + 1) * w];
                        for (o, v) in out.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            });
            shape[a] = cubes;
        }
        Ok(Self {
            shape,
            bases,
            values: data,
        })
    }

    fn cube_of(&self, param: usize, c: usize) -> (u32, usize) {
        let (level, pos, _) = self.bases[param].redundant_decode(c * self.bases[param].patterns());
        (level, pos)
    }

    fn index_of(&self, param: usize, level: u32, pos: usize) -> usize {
        self.bases[param].redundant_offset(level) / self.bases[param].patterns() + pos
    }

    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for a in (0..self.shape.len()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    fn rect(&self, idx: &[usize]) -> Rect {
        let (levels, positions) = idx.iter().enumerate().map(|(a, &c)| self.cube_of(a, c)).unzip();
        Rect { levels, positions }
    }

    /// `1/|R|` for the rectangle at `idx`.
    fn inv_volume(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .enumerate()
            .map(|(a, &c)| ((self.cube_of(a, c).0 * self.bases[a].dim) as f64).exp2())
            .product()
    }
}

/// Replaces each entry by the total over rectangles it contains.
fn subtree_sums(e: &Energy, grid: &GridShift) -> Vec<f64> {
    let mut data = e.values.clone();
    for (a, basis) in e.bases.iter().enumerate() {
        let tables = AxisGrid::of(grid, a).child_tables();
        let pat = basis.patterns();
        data = tensor::map_axis(&data, &e.shape, a, e.shape[a], |src, dst, w| {
            dst.copy_from_slice(src);
            for k in (0..basis.depth.saturating_sub(1)).rev() {
                let table = &tables[k as usize];
                for p in 0..basis.cubes_at(k) {
                    let at = e.index_of(a, k, p);
                    for c in 0..pat {
                        let child = e.index_of(a, k + 1, table[p * pat + c]);
                        let (lo, hi) = dst.split_at_mut(child * w);
                        for (o, v) in lo[at * w..(at + 1) * w].iter_mut().zip(&hi[..w]) {
                            *o += v;
                        }
                    }
                }
            }
        });
    }
    data
}

/// Supremum over single dyadic rectangles `R` of
/// `((1/|R|) Σ_{R'⊆R} Σ_ε ⟨b, h_{R'}^ε⟩²)^{1/2}`, for any number of
/// parameters. The witness is the first maximizer in index order.
pub fn carleson_rect(b: &MultiFunction, grid: &GridShift) -> Result<CarlesonReport> {
    let e = Energy::new(b, grid)?;
    let sums = subtree_sums(&e, grid);
    let row = e.shape[1..].iter().product::<usize>();
    let best = par::map_range(e.shape[0], |r| {
        let mut best = (0.0f64, r * row);
        for (j, s) in sums[r * row..(r + 1) * row].iter().enumerate() {
            let v = s * e.inv_volume(&e.unflatten(r * row + j));
            if v > best.0 {
                best = (v, r * row + j);
            }
        }
        best
    });
    let (value, at) = best
        .into_iter()
        .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
    Ok(CarlesonReport {
        value: value.sqrt(),
        witnesses: vec![e.rect(&e.unflatten(at))],
        family: "single-rectangle".into(),
    })
}

/// One-parameter dyadic BMO norm, exact at finite depth.
pub fn bmo_dyadic_1p(b: &MultiFunction, grid: &GridShift) -> Result<f64> {
    if b.space().n() != 1 {
        return Err(Error::ShapeMismatch("expected a one-parameter function".into()));
    }
    Ok(carleson_rect(b, grid)?.value)
}

/// Cyclic interval `[start, start+len)` of one realized cube.
#[derive(Clone, Copy)]
struct Span {
    start: usize,
    len: usize,
}

struct Prefix {
    n2: usize,
    p: Vec<u64>,
}

impl Prefix {
    fn new(mask: &[bool], n1: usize, n2: usize) -> Self {
        let mut p = vec![0u64; (n1 + 1) * (n2 + 1)];
        for i in 0..n1 {
            for j in 0..n2 {
                p[(i + 1) * (n2 + 1) + j + 1] = mask[i * n2 + j] as u64 + p[i * (n2 + 1) + j + 1]
                    + p[(i + 1) * (n2 + 1) + j]
                    - p[i * (n2 + 1) + j];
            }
        }
        Self { n2, p }
    }

    fn block(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> u64 {
        let w = self.n2 + 1;
        self.p[i1 * w + j1] + self.p[i0 * w + j0] - self.p[i0 * w + j1] - self.p[i1 * w + j0]
    }

    fn count(&self, a: Span, b: Span, n1: usize, n2: usize) -> u64 {
        let mut total = 0;
        for (i0, i1) in pieces(a, n1) {
            for (j0, j1) in pieces(b, n2) {
                total += self.block(i0, i1, j0, j1);
            }
        }
        total
    }
}

fn pieces(s: Span, n: usize) -> Vec<(usize, usize)> {
    if s.start + s.len <= n {
        vec![(s.start, s.start + s.len)]
    } else {
        vec![(s.start, n), (0, s.start + s.len - n)]
    }
}

/// Greedy search over unions of at most `m` dyadic rectangles for
/// `(Σ_{R ⊆ Ω} mass(R)) / |Ω|`. The result is a lower bound for the open-set
/// supremum and never below [`carleson_rect`]. Two parameters of dimension
/// one.
pub fn carleson_openset(b: &MultiFunction, grid: &GridShift, m: usize) -> Result<CarlesonReport> {
    if m == 0 {
        return Err(Error::Inconsistent("union size must be at least 1".into()));
    }
    let space = b.space();
    if space.n() != 2 || space.dims().iter().any(|&d| d != 1) {
        return Err(Error::Unsupported(
            "open-set search needs two one-dimensional parameters".into(),
        ));
    }
    let rect = carleson_rect(b, grid)?;
    let family = format!("greedy-union-{m}");
    if m == 1 {
        return Ok(CarlesonReport { family, ..rect });
    }
    let e = Energy::new(b, grid)?;
    let (c1, c2) = (e.shape[0], e.shape[1]);
    let (n1, n2) = (space.cells(0), space.cells(1));
    let spans = |param: usize| -> Result<Vec<Span>> {
        (0..e.shape[param])
            .map(|c| {
                let (level, pos) = e.cube_of(param, c);
                let bx = realize_cube(grid, &DyadicCube::from_flat(param, level, 1, pos))?;
                Ok(Span {
                    start: bx.start[0] as usize,
                    len: bx.len as usize,
                })
            })
            .collect()
    };
    let (s1, s2) = (spans(0)?, spans(1)?);
    let meet = |s: &[Span], param: usize| -> Vec<Option<usize>> {
        let n = s.len();
        let mut out = vec![None; n * n];
        for a in 0..n {
            for b in 0..n {
                let (la, lb) = (e.cube_of(param, a).0, e.cube_of(param, b).0);
                let (big, small) = if la <= lb { (a, b) } else { (b, a) };
                let modulus = if param == 0 { n1 } else { n2 };
                let off = (s[small].start + modulus - s[big].start) % modulus;
                if off < s[big].len {
                    out[a * n + b] = Some(small);
                }
            }
        }
        out
    };
    let (m1, m2) = (meet(&s1, 0), meet(&s2, 1));
    let size = |r1: usize, r2: usize| (s1[r1].len * s2[r2].len) as u64;
    let masses: Vec<(usize, usize, f64)> = (0..c1 * c2)
        .filter(|&i| e.values[i] > 0.0)
        .map(|i| (i / c2, i % c2, e.values[i]))
        .collect();
    let cell_vol = space.product_cell_volume();

    let mut mask = vec![false; n1 * n2];
    let mut chosen: Vec<Rect> = Vec::new();
    let add = |mask: &mut Vec<bool>, r1: usize, r2: usize, chosen: &mut Vec<Rect>| {
        for (i0, i1) in pieces(s1[r1], n1) {
            for (j0, j1) in pieces(s2[r2], n2) {
                for i in i0..i1 {
                    mask[i * n2 + j0..i * n2 + j1].fill(true);
                }
            }
        }
        chosen.push(e.rect(&[r1, r2]));
    };
    let w = &rect.witnesses[0];
    let r1 = e.index_of(0, w.levels[0], w.positions[0]);
    let r2 = e.index_of(1, w.levels[1], w.positions[1]);
    add(&mut mask, r1, r2, &mut chosen);
    let mut best = rect.value;
    let mut witnesses = chosen.clone();

    for _ in 1..m {
        let prefix = Prefix::new(&mask, n1, n2);
        let cnt: Vec<u64> = (0..c1 * c2)
            .map(|i| prefix.count(s1[i / c2], s2[i % c2], n1, n2))
            .collect();
        let area: u64 = mask.iter().filter(|&&x| x).count() as u64;
        let missing: Vec<u64> = masses.iter().map(|&(a, b, _)| size(a, b) - cnt[a * c2 + b]).collect();
        let scores = par::map_range(c1 * c2, |cand| {
            let (a1, a2) = (cand / c2, cand % c2);
            let fresh = size(a1, a2) - cnt[cand];
            if fresh == 0 {
                return None;
            }
            let mut num = 0.0;
            for (k, &(b1, b2, mass)) in masses.iter().enumerate() {
                let (inter, covered) = match (m1[a1 * c1 + b1], m2[a2 * c2 + b2]) {
                    (Some(x), Some(y)) => (size(x, y), cnt[x * c2 + y]),
                    _ => (0, 0),
                };
                if missing[k] + covered == inter {
                    num += mass;
                }
            }
            Some(num / ((area + fresh) as f64 * cell_vol))
        });
        let pick = scores
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|v| (i, v)))
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            });
        let Some((cand, v)) = pick else { break };
        add(&mut mask, cand / c2, cand % c2, &mut chosen);
        if v.sqrt() > best {
            best = v.sqrt();
            witnesses = chosen.clone();
        }
    }
    Ok(CarlesonReport {
        value: best,
        witnesses,
        family,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub small: Rect,
    pub big: Rect,
    pub gap: u32,
    pub value: f64,
    pub scale: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
    pub max_ratio: f64,
}

/// Rectangle BMO of `b_{I₁J₁} = ⟨T₂(h_{I₁}⊗1⊗…⊗1), s_{I₁J₁}⟩₁` over all good
/// `I₁ ⊊ J₁` of parameter 0, divided by `√(|I₁|/|J₁|)·2^{-i₁δ/2}`.
///
/// `T₂` is the partial adjoint in parameter 1. For tensor operators the
/// symbol factors as a scalar times `T₂1` on the remaining parameters, so
/// one Carleson evaluation serves every pair.
pub fn bmo_lemma_check(op: &OperatorHandle, grid: &GridShift) -> Result<LemmaReport> {
    let space = op.space();
    let n = space.n();
    if n < 2 {
        return Err(Error::Unsupported("the lemma needs at least two parameters".into()));
    }
    grid.check(space)?;
    let t2 = op.partial_adjoint(&[1]);
    let rest: Vec<usize> = (1..n).collect();
    let tail = t2.restrict(&rest)?;
    let one = MultiFunction::constant(tail.space(), 1.0);
    let symbol = tail.apply(&one)?;
    let bmo = carleson_rect(&symbol, &grid.restrict(&rest))?.value;

    let basis = Basis1d::of(space, 0);
    let d = basis.dim;
    let delta = space.delta();
    let mut rows = Vec::new();
    for small_level in 1..space.depth() {
        for p in 0..basis.cubes_at(small_level) {
            let small = DyadicCube::from_flat(0, small_level, d, p);
            if !is_good(space, grid, &small) {
                continue;
            }
            for big_level in 0..small_level {
                let big = small.ancestor(grid, big_level);
                let gap = small_level - big_level;
                let scale = (-((gap * d) as f64) / 2.0).exp2() * (-(gap as f64) * delta / 2.0).exp2();
                for ei in 1..basis.patterns() as u32 {
                    let h = HaarFunction::new(small.clone(), ei).cells(space, grid)?;
                    for ej in 1..basis.patterns() as u32 {
                        let s = make_s(space, grid, &small, &big, ej)?;
                        let value = t2.pair_factor(0, &h, &s.values).abs() * bmo;
                        rows.push(LemmaRow {
                            small: Rect {
                                levels: vec![small.level],
                                positions: vec![small.flat()],
                            },
                            big: Rect {
                                levels: vec![big.level],
                                positions: vec![big.flat()],
                            },
                            gap,
                            value,
                            scale,
                            ratio: value / scale,
                        });
                    }
                }
            }
        }
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(LemmaReport { rows, max_ratio })
}
