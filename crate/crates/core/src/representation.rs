//! Haar expansion of `⟨Tf, g⟩` regrouped by case, its goodness-weighted
//! average over random grids, complexity truncation and the eight-term
//! split of the inside/inside/inside case.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cases::{
    classify_slots, designates_f_side, make_s, slot_complexity, slot_is_good, Case, CasePair,
    SmConvention, BUCKETS,
};
use crate::error::{Error, Result};
use crate::grid::{derive_seed, exact_pi_good, realize_cube, sample_grid, DyadicCube, GridShift, TorusSpace};
use crate::haar::{dot, haar_forward, Basis1d, HaarFunction, MultiFunction};
use crate::kernel::OperatorHandle;
use crate::par;
use crate::shift::extract_shift_coefficients;
use crate::tensor::apply_matrix_axis;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSum {
    /// One case label per parameter, e.g. `["separated<", "inside>"]`.
    pub cases: Vec<String>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub mode: String,
    /// `⟨Tf, g⟩` by direct application.
    pub direct: f64,
    pub reconstructed: f64,
    pub relative_error: f64,
    /// Partial sums in bucket order; they add up to `reconstructed`.
    pub buckets: Vec<BucketSum>,
    pub complexity_cap: Option<u32>,
    pub samples: usize,
    pub stderr: Option<f64>,
    pub convention: Option<SmConvention>,
    /// `π_good` per parameter and level; `1/Π π` is the averaging constant.
    pub pi_good: Vec<Vec<f64>>,
    pub tail_bound: Option<f64>,
}

impl ReconstructionReport {
    fn new(mode: &str, direct: f64, reconstructed: f64, buckets: Vec<BucketSum>) -> Self {
        Self {
            mode: mode.into(),
            direct,
            reconstructed,
            relative_error: relative(reconstructed, direct),
            buckets,
            complexity_cap: None,
            samples: 1,
            stderr: None,
            convention: None,
            pi_good: Vec::new(),
            tail_bound: None,
        }
    }

    /// Writes `cases,value` rows, cases joined by `|`.
    pub fn write_buckets_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cases", "value"])?;
        for b in &self.buckets {
            w.write_record([b.cases.join("|"), format!("{:e}", b.value)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Per-parameter data of the expansion `Σ ⟨f,h_I⟩⟨g,h_J⟩ Π_t A_t[J_t, I_t]`.
struct AxisTerms {
    /// `A[J, I] = ⟨T_t h_I, h_J⟩` times the goodness weight.
    matrix: Vec<f64>,
    bucket: Vec<u8>,
}

impl AxisTerms {
    fn build(
        op: &OperatorHandle,
        grid: &GridShift,
        param: usize,
        cap: Option<u32>,
        weight: impl Fn(usize, usize) -> f64 + Sync,
        buckets: bool,
    ) -> Result<Self> {
        let space = op.space();
        let basis = Basis1d::of(space, param);
        let n = space.cells(param);
        let mut matrix = op.haar_matrix(grid, param);
        let rows = par::map_range(n, |j| -> Result<Vec<(f64, u8)>> {
            (0..n)
                .map(|i| {
                    let mut w = weight(i, j);
                    if let Some(c) = cap {
                        if slot_complexity(grid, &basis, param, i, j) > c {
                            w = 0.0;
                        }
                    }
                    let b = if buckets && w != 0.0 {
                        classify_slots(space, grid, param, i, j)?.bucket() as u8
                    } else {
                        0
                    };
                    Ok((w, b))
                })
                .collect()
        });
        let mut bucket = vec![0u8; n * n];
        for (j, row) in rows.into_iter().enumerate() {
            for (i, (w, b)) in row?.into_iter().enumerate() {
                matrix[j * n + i] *= w;
                bucket[j * n + i] = b;
            }
        }
        Ok(Self { matrix, bucket })
    }

    /// Matrices restricted to each nonempty bucket.
    fn split(&self, buckets: bool) -> Vec<(usize, Vec<f64>)> {
        if !buckets {
            return vec![(0, self.matrix.clone())];
        }
        (0..BUCKETS)
            .filter_map(|b| {
                let m: Vec<f64> = self
                    .matrix
                    .iter()
                    .zip(&self.bucket)
                    .map(|(&a, &k)| if k as usize == b { a } else { 0.0 })
                    .collect();
                m.iter().any(|&x| x != 0.0).then_some((b, m))
            })
            .collect()
    }
}

/// `⟨(⊗_t A_t^{β_t}) F, G⟩` for every bucket tuple `β`, depth first.
fn contract(
    f: &[f64],
    shape: &[usize],
    g: &[f64],
    lists: &[Vec<(usize, Vec<f64>)>],
) -> Vec<(Vec<usize>, f64)> {
    fn go(
        x: &[f64],
        shape: &[usize],
        g: &[f64],
        lists: &[Vec<(usize, Vec<f64>)>],
        axis: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if axis == lists.len() {
            out.push((prefix.clone(), dot(x, g)));
            return;
        }
        for (b, m) in &lists[axis] {
            let y = apply_matrix_axis(x, shape, axis, m, shape[axis]);
            prefix.push(*b);
            go(&y, shape, g, lists, axis + 1, prefix, out);
            prefix.pop();
        }
    }
    let top = par::map_range(lists[0].len(), |k| {
        let (b, m) = &lists[0][k];
        let y = apply_matrix_axis(f, shape, 0, m, shape[0]);
        let mut out = Vec::new();
        go(&y, shape, g, lists, 1, &mut vec![*b], &mut out);
        out
    });
    top.into_iter().flatten().collect()
}

fn labels(tuple: &[usize], buckets: bool) -> Vec<String> {
    tuple
        .iter()
        .enumerate()
        .map(|(p, &b)| {
            if buckets {
                CasePair::from_bucket(p, b).label()
            } else {
                "all".into()
            }
        })
        .collect()
}

/// One expansion in one grid; `weight(param, i, j)` scales each slot pair.
fn expand<W>(
    op: &OperatorHandle,
    f: &MultiFunction,
    g: &MultiFunction,
    grid: &GridShift,
    cap: Option<u32>,
    buckets: bool,
    weight: W,
) -> Result<Vec<(Vec<usize>, f64)>>
where
    W: Fn(usize, usize, usize) -> f64 + Sync,
{
    let space = op.space();
    let fc = haar_forward(f, grid)?;
    let gc = haar_forward(g, grid)?;
    let lists = (0..space.n())
        .map(|p| Ok(AxisTerms::build(op, grid, p, cap, |i, j| weight(p, i, j), buckets)?.split(buckets)))
        .collect::<Result<Vec<_>>>()?;
    let shape: Vec<usize> = (0..space.n()).map(|p| space.cells(p)).collect();
    if lists.iter().any(|l| l.is_empty()) {
        return Ok(Vec::new());
    }
    Ok(contract(fc.values(), &shape, gc.values(), &lists))
}

fn total(parts: &[(Vec<usize>, f64)]) -> f64 {
    let v: Vec<f64> = parts.iter().map(|p| p.1).collect();
    par::tree_sum(&v)
}

fn check_inputs(op: &OperatorHandle, f: &MultiFunction, g: &MultiFunction) -> Result<()> {
    if f.space() != op.space() || g.space() != op.space() {
        return Err(Error::ShapeMismatch("f and g must live on the operator's space".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    /// Regroup by per-parameter case buckets.
    pub buckets: bool,
    /// Keep only slot pairs with complexity at most this in every parameter.
    pub cap: Option<u32>,
}

/// Complete Haar expansion of `⟨Tf, g⟩` in one grid.
pub fn fixed_grid_reconstruct(
    op: &OperatorHandle,
    f: &MultiFunction,
    g: &MultiFunction,
    grid: &GridShift,
    opts: ReconstructOptions,
) -> Result<ReconstructionReport> {
    check_inputs(op, f, g)?;
    grid.check(op.space())?;
    let parts = expand(op, f, g, grid, opts.cap, opts.buckets, |_, _, _| 1.0)?;
    let value = total(&parts);
    let buckets = parts
        .iter()
        .map(|(t, v)| BucketSum {
            cases: labels(t, opts.buckets),
            value: *v,
        })
        .collect();
    let mut report = ReconstructionReport::new("fixed", op.pair(f, g)?, value, buckets);
    report.complexity_cap = opts.cap;
    Ok(report)
}

/// Exact `π_good` for every parameter and level `0..L`.
pub fn pi_table(space: &TorusSpace) -> Result<Vec<Vec<f64>>> {
    (0..space.n())
        .map(|p| {
            (0..space.depth())
                .map(|k| {
                    let v = exact_pi_good(space, p, k);
                    if v > 0.0 {
                        Ok(v)
                    } else {
                        Err(Error::ZeroGoodProbability { param: p, level: k })
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    pub convention: SmConvention,
    pub buckets: bool,
}

/// Goodness-weighted expansion of one random grid: each slot pair counts
/// only when its designated cube is good, weighted by `1/π_good`.
pub fn mc_sample(
    op: &OperatorHandle,
    f: &MultiFunction,
    g: &MultiFunction,
    grid: &GridShift,
    pi: &[Vec<f64>],
    convention: SmConvention,
    buckets: bool,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let space = op.space();
    let bases: Vec<Basis1d> = (0..space.n()).map(|p| Basis1d::of(space, p)).collect();
    let good: Vec<Vec<f64>> = (0..space.n())
        .map(|p| {
            (0..space.cells(p))
                .map(|s| {
                    if !slot_is_good(space, grid, p, s) {
                        return 0.0;
                    }
                    match bases[p].level_of(s) {
                        None => 1.0,
                        Some(k) => 1.0 / pi[p][k as usize],
                    }
                })
                .collect()
        })
        .collect();
    expand(op, f, g, grid, None, buckets, |p, i, j| {
        let d = if designates_f_side(convention, &bases[p], i, j) { i } else { j };
        good[p][d]
    })
}

/// Monte Carlo average of [`mc_sample`] over `samples` independent grids.
pub fn mc_reconstruct(
    op: &OperatorHandle,
    f: &MultiFunction,
    g: &MultiFunction,
    opts: McOptions,
) -> Result<ReconstructionReport> {
    check_inputs(op, f, g)?;
    if opts.samples == 0 {
        return Err(Error::Inconsistent("at least one sample is required".into()));
    }
    let space = op.space();
    let pi = pi_table(space)?;
    let runs = (0..opts.samples)
        .map(|s| {
            let grid = sample_grid(space, derive_seed(opts.seed, s as u64));
            mc_sample(op, f, g, &grid, &pi, opts.convention, opts.buckets)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = runs.iter().map(|r| total(r)).collect();
    let n = values.len() as f64;
    let mean = par::tree_sum(&values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let stderr = if values.len() > 1 {
        (par::tree_sum(&dev) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let mut acc: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for run in &runs {
        for (t, v) in run {
            match acc.iter_mut().find(|(k, _)| k == t) {
                Some((_, vs)) => vs.push(*v),
                None => acc.push((t.clone(), vec![*v])),
            }
        }
    }
    acc.sort_by(|a, b| a.0.cmp(&b.0));
    let buckets = acc
        .into_iter()
        .map(|(t, vs)| BucketSum {
            cases: labels(&t, opts.buckets),
            value: par::tree_sum(&vs) / n,
        })
        .collect();
    let mut report = ReconstructionReport::new("monte-carlo", op.pair(f, g)?, mean, buckets);
    report.samples = opts.samples;
    report.stderr = Some(stderr);
    report.convention = Some(opts.convention);
    report.pi_good = pi;
    Ok(report)
}

/// Expansion restricted to per-parameter complexity `≤ i_max`, with the
/// geometric tail estimate `C ‖f‖ ‖g‖ Σ_{i_max < i ≤ L} 2^{-iδ/2}`, where `C`
/// is the largest normalized separated coefficient at complexities `1..=2`.
pub fn truncated_representation(
    op: &OperatorHandle,
    f: &MultiFunction,
    g: &MultiFunction,
    grid: &GridShift,
    i_max: u32,
) -> Result<ReconstructionReport> {
    let mut report = fixed_grid_reconstruct(
        op,
        f,
        g,
        grid,
        ReconstructOptions {
            buckets: false,
            cap: Some(i_max),
        },
    )?;
    report.mode = "truncated".into();
    let space = op.space();
    let n = space.n();
    let mut c: f64 = 0.0;
    for i in 1..=2.min(space.depth().saturating_sub(1)) {
        let r = extract_shift_coefficients(op, grid, &vec![Case::Separated; n], &vec![(i, i); n])?;
        c = c.max(r.max_ratio);
    }
    let delta = space.delta();
    let tail: f64 = (i_max + 1..=space.depth())
        .map(|i| (-(i as f64) * delta / 2.0).exp2())
        .sum();
    report.tail_bound = Some(c * f.norm() * g.norm() * tail);
    Ok(report)
}

/// `(I₁ ⊊ J₁, I₂ ⊊ J₂, J₃ ⊊ I₃)` with Haar patterns; `i` holds the `f`-side
/// functions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedTriple {
    pub i: [HaarFunction; 3],
    pub j: [HaarFunction; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EightTerms {
    /// Terms I through VIII.
    pub terms: [f64; 8],
    pub direct: f64,
    /// `Σ terms − direct`.
    pub residual: f64,
}

/// Splits `⟨T(h_{I₁}⊗h_{I₂}⊗h_{I₃}), h_{J₁}⊗h_{J₂}⊗h_{J₃}⟩` by writing each
/// larger Haar function as `s + ⟨h_big⟩_small`. Term `4a₁ + 2a₂ + a₃` takes
/// the average in parameter `t` when `a_t = 1` and the `s`-function
/// otherwise.
pub fn eight_term_split(op: &OperatorHandle, grid: &GridShift, t: &NestedTriple) -> Result<EightTerms> {
    let space = op.space();
    if space.n() != 3 {
        return Err(Error::Unsupported("the eight-term split needs three parameters".into()));
    }
    grid.check(space)?;
    let mut factors = [[0.0; 2]; 3];
    for p in 0..3 {
        let (small, big) = if p < 2 { (&t.i[p], &t.j[p]) } else { (&t.j[p], &t.i[p]) };
        if small.cube.param != p || big.cube.param != p {
            return Err(Error::ShapeMismatch(format!("parameter {p} holds a foreign cube")));
        }
        if !small.is_cancellative() || !big.is_cancellative() {
            return Err(Error::NotNested("the split needs cancellative Haar functions".into()));
        }
        let s = make_s(space, grid, &small.cube, &big.cube, big.eps)?;
        let h = small.cells(space, grid)?;
        let ones = vec![1.0; space.cells(p)];
        factors[p] = if p < 2 {
            [
                op.pair_factor(p, &h, &s.values),
                s.average_on_q * op.pair_factor(p, &h, &ones),
            ]
        } else {
            [
                op.pair_factor(p, &s.values, &h),
                s.average_on_q * op.pair_factor(p, &ones, &h),
            ]
        };
    }
    let mut terms = [0.0; 8];
    for (k, term) in terms.iter_mut().enumerate() {
        *term = (0..3).map(|p| factors[p][(k >> (2 - p)) & 1]).product();
    }
    let direct = op.pair_haar(grid, &t.i, &t.j)?;
    let sum: f64 = terms.iter().sum();
    Ok(EightTerms {
        terms,
        direct,
        residual: sum - direct,
    })
}

/// Every `(small, big)` with `small ⊊ big` in `param`, both at levels
/// `0..L`.
pub fn nested_pairs(space: &TorusSpace, grid: &GridShift, param: usize) -> Vec<(DyadicCube, DyadicCube)> {
    let dim = space.dim(param);
    let mut out = Vec::new();
    for level in 1..space.depth() {
        for small in DyadicCube::all_at(param, level, dim) {
            for big_level in 0..level {
                let big = small.ancestor(grid, big_level);
                out.push((small.clone(), big));
            }
        }
    }
    out
}

/// `T₃^*(1)`, the symbol of the all-averages term.
pub fn term_viii_symbol(op: &OperatorHandle) -> Result<MultiFunction> {
    if op.space().n() != 3 {
        return Err(Error::Unsupported("term VIII needs three parameters".into()));
    }
    op.partial_adjoint(&[2]).adjoint().apply(&MultiFunction::constant(op.space(), 1.0))
}

/// `true` when `small` lies strictly inside `big` in the realized grid.
pub fn strictly_inside(grid: &GridShift, small: &DyadicCube, big: &DyadicCube) -> Result<bool> {
    Ok(small.level > big.level && realize_cube(grid, big)?.contains(&realize_cube(grid, small)?))
}
