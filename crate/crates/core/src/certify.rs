//! Sampled checks of the kernel conditions: mixed size-Hölder bounds for
//! full and partial kernels and the mixed BMO/WBP conditions.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::carleson::carleson_rect;
use crate::error::{Error, Result};
use crate::grid::{derive_seed, realize_cube, DyadicCube, GridShift, TorusSpace};
use crate::haar::MultiFunction;
use crate::kernel::{KernelDesc, OperatorHandle, QuadratureConfig};
use crate::par;

/// Smallest sampled separation is `2^{-MIN_SEP_EXP}`.
pub const MIN_SEP_EXP: i32 = 24;

/// Pointwise tensor kernel `Π_t K_t(x_t, y_t)` with optional slot swaps.
#[derive(Clone, Debug)]
pub struct KernelModel {
    space: TorusSpace,
    descs: Vec<KernelDesc>,
}

impl KernelModel {
    pub fn new(space: &TorusSpace, descs: Vec<KernelDesc>) -> Result<Self> {
        if descs.len() != space.n() {
            return Err(Error::ShapeMismatch(format!(
                "{} kernels for {} parameters",
                descs.len(),
                space.n()
            )));
        }
        for (p, d) in descs.iter().enumerate() {
            match d {
                KernelDesc::Tabulated { size, values } => {
                    if *size != space.cells(p) || values.len() != size * size {
                        return Err(Error::Kernel(format!("tabulated kernel of parameter {p} has the wrong size")));
                    }
                }
                _ if space.dim(p) != 1 => {
                    return Err(Error::Unsupported("analytic kernels need dimension one".into()));
                }
                _ => {}
            }
        }
        Ok(Self {
            space: space.clone(),
            descs,
        })
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    fn cell_of(&self, x: &[f64]) -> usize {
        let m = 1usize << self.space.depth();
        x.iter().fold(0, |acc, &c| {
            let k = ((c.rem_euclid(1.0) * m as f64) as usize).min(m - 1);
            acc * m + k
        })
    }

    /// `K_p(x, y)` for one parameter; `None` where undefined.
    pub fn factor(&self, p: usize, x: &[f64], y: &[f64]) -> Option<f64> {
        let v = match &self.descs[p] {
            KernelDesc::Tabulated { size, values } => {
                let vol = self.space.cell_volume(p);
                Some(values[self.cell_of(x) * size + self.cell_of(y)] / (vol * vol))
            }
            d => d.eval(x[0], y[0]),
        }?;
        v.is_finite().then_some(v)
    }

    /// `K_S(x, y)`: `x_p` and `y_p` trade places for `p ∈ s`.
    pub fn eval(&self, s: &[usize], x: &[Vec<f64>], y: &[Vec<f64>]) -> Option<f64> {
        let mut total = 1.0;
        for p in 0..self.space.n() {
            let v = if s.contains(&p) {
                self.factor(p, &y[p], &x[p])
            } else {
                self.factor(p, &x[p], &y[p])
            }?;
            total *= v;
        }
        Some(total)
    }
}

/// `Σ_{Λ⊆W} (−1)^{|Λ|} K_S^Λ(x, x'; y)`.
pub fn alternating_sum(
    model: &KernelModel,
    s: &[usize],
    w: &[usize],
    x: &[Vec<f64>],
    xp: &[Vec<f64>],
    y: &[Vec<f64>],
) -> Option<f64> {
    let mut total = 0.0;
    for mask in 0..1usize << w.len() {
        let mut z = x.to_vec();
        for (k, &p) in w.iter().enumerate() {
            if mask >> k & 1 == 1 {
                z[p] = xp[p].clone();
            }
        }
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * model.eval(s, &z, y)?;
    }
    Some(total)
}

fn torus_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| {
            let r = (u - v).rem_euclid(1.0);
            r.min(1.0 - r).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Right-hand side of the size-Hölder display.
fn holder_bound(space: &TorusSpace, params: &[usize], w: &[usize], x: &[Vec<f64>], xp: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let delta = space.delta();
    params
        .iter()
        .map(|&p| {
            let d = space.dim(p) as f64;
            let r = torus_dist(&x[p], &y[p]);
            if w.contains(&p) {
                torus_dist(&x[p], &xp[p]).powf(delta) / r.powf(d + delta)
            } else {
                r.powf(-d)
            }
        })
        .product()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<Vec<f64>>,
    pub x_prime: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// `|x_p − y_p|` per parameter.
    pub separation: Vec<f64>,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeHolderFit {
    /// Sample supremum of the normalized alternating sum.
    pub constant: f64,
    pub witness: Option<Witness>,
    /// `(smallest separation, ratio)` along the witness pushed toward the
    /// diagonal by halving.
    pub refinement: Vec<(f64, f64)>,
    pub samples: usize,
    /// Draws discarded because the kernel was undefined.
    pub resampled: usize,
}

/// Unit-free configuration of one sample: `y`, the direction of `x − y`,
/// the separation and the `x'` offset.
fn draw(space: &TorusSpace, w: &[usize], seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.n();
    let mut x = Vec::with_capacity(n);
    let mut xp = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for p in 0..n {
        let d = space.dim(p) as usize;
        let dir = |rng: &mut ChaCha8Rng| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if r > 1e-3 && r <= 1.0 {
                break v.into_iter().map(|a| a / r).collect::<Vec<f64>>();
            }
        };
        let yp: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let sep = (-rng.random_range(1.0..MIN_SEP_EXP as f64)).exp2();
        let u = dir(&mut rng);
        let xv: Vec<f64> = yp.iter().zip(&u).map(|(a, b)| (a + sep * b).rem_euclid(1.0)).collect();
        let xpv = if w.contains(&p) {
            let rho = rng.random_range(0.0..1.0f64).max(1e-6) * 0.5 * sep;
            let v = dir(&mut rng);
            xv.iter().zip(&v).map(|(a, b)| (a + rho * b).rem_euclid(1.0)).collect()
        } else {
            xv.clone()
        };
        x.push(xv);
        xp.push(xpv);
        y.push(yp);
    }
    (x, xp, y)
}

fn ratio_at(
    model: &KernelModel,
    s: &[usize],
    w: &[usize],
    x: &[Vec<f64>],
    xp: &[Vec<f64>],
    y: &[Vec<f64>],
) -> Option<f64> {
    let all: Vec<usize> = (0..model.space.n()).collect();
    let a = alternating_sum(model, s, w, x, xp, y)?;
    let b = holder_bound(&model.space, &all, w, x, xp, y);
    let r = a.abs() / b;
    r.is_finite().then_some(r)
}

/// Sample supremum of the mixed size-Hölder ratio for `K_S` and subset `W`.
///
/// Separations are log-uniform in `[2^{-24}, 1/2]`; sample `i` depends only
/// on `(seed, i)`, so enlarging `samples` never lowers the supremum.
pub fn check_size_holder(model: &KernelModel, s: &[usize], w: &[usize], samples: usize, seed: u64) -> SizeHolderFit {
    let space = &model.space;
    let draws = par::map_range(samples, |i| {
        let mut resampled = 0;
        for attempt in 0..16u64 {
            let (x, xp, y) = draw(space, w, derive_seed(seed, (i as u64) << 4 | attempt));
            match ratio_at(model, s, w, &x, &xp, &y) {
                Some(r) => return (Some((r, x, xp, y)), resampled),
                None => resampled += 1,
            }
        }
        (None, resampled)
    });
    let resampled = draws.iter().map(|d| d.1).sum();
    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> = None;
    for (d, _) in draws.into_iter() {
        if let Some(d) = d {
            if best.as_ref().is_none_or(|b| d.0 > b.0) {
                best = Some(d);
            }
        }
    }
    let Some((mut constant, x, xp, y)) = best else {
        return SizeHolderFit {
            constant: 0.0,
            witness: None,
            refinement: Vec::new(),
            samples,
            resampled,
        };
    };
    let mut witness = Witness {
        separation: (0..space.n()).map(|p| torus_dist(&x[p], &y[p])).collect(),
        x,
        x_prime: xp,
        y,
        ratio: constant,
    };
    let refinement = refine(model, s, w, &witness);
    for (k, &(_, r)) in refinement.iter().enumerate() {
        if r > constant {
            constant = r;
            witness = shrink(&witness, k as i32 + 1);
            witness.ratio = r;
        }
    }
    SizeHolderFit {
        constant,
        witness: Some(witness),
        refinement,
        samples,
        resampled,
    }
}

/// The witness with every displacement from `y` scaled by `2^{-k}`.
fn shrink(w: &Witness, k: i32) -> Witness {
    let f = (-(k as f64)).exp2();
    let mv = |from: &[f64], to: &[f64]| -> Vec<f64> {
        from.iter()
            .zip(to)
            .map(|(a, b)| {
                let mut d = (b - a).rem_euclid(1.0);
                if d > 0.5 {
                    d -= 1.0;
                }
                (a + d * f).rem_euclid(1.0)
            })
            .collect()
    };
    let n = w.y.len();
    Witness {
        x: (0..n).map(|p| mv(&w.y[p], &w.x[p])).collect(),
        x_prime: (0..n).map(|p| mv(&w.y[p], &w.x_prime[p])).collect(),
        y: w.y.clone(),
        separation: w.separation.iter().map(|s| s * f).collect(),
        ratio: 0.0,
    }
}

/// Ratios along the witness pushed geometrically toward the diagonal until
/// the smallest separation reaches `2^{-24}`.
fn refine(model: &KernelModel, s: &[usize], w: &[usize], wit: &Witness) -> Vec<(f64, f64)> {
    let floor = (-(MIN_SEP_EXP as f64)).exp2();
    let smallest = wit.separation.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    let mut k = 1;
    while smallest * (-(k as f64)).exp2() >= floor {
        let c = shrink(wit, k);
        if let Some(r) = ratio_at(model, s, w, &c.x, &c.x_prime, &c.y) {
            out.push((smallest * (-(k as f64)).exp2(), r));
        }
        k += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialKernelFit {
    pub v: Vec<usize>,
    /// `|⟨(⊗_{i∉V} T_i) f_{V^c}, g_{V^c}⟩|`.
    pub pairing: f64,
    /// Largest size-Hölder constant of `⊗_{i∈V} K_i` over `W ⊆ V`.
    pub kernel_constant: f64,
    /// `C^V = pairing · kernel_constant`.
    pub constant: f64,
}

/// Partial-kernel constant `C^V(f_{V^c}, g_{V^c})` of a tensor operator.
/// `f` and `g` hold one cell vector per parameter outside `V`.
pub fn check_partial_kernel(
    op: &OperatorHandle,
    model: &KernelModel,
    s: &[usize],
    v: &[usize],
    f: &[Vec<f64>],
    g: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<PartialKernelFit> {
    let n = op.space().n();
    if v.is_empty() || v.len() >= n || v.iter().any(|&p| p >= n) {
        return Err(Error::Inconsistent("V must be a nonempty proper subset".into()));
    }
    let rest: Vec<usize> = (0..n).filter(|p| !v.contains(p)).collect();
    if f.len() != rest.len() || g.len() != rest.len() {
        return Err(Error::ShapeMismatch("one test vector per parameter outside V".into()));
    }
    let ts = op.partial_adjoint(s);
    let pairing = rest
        .iter()
        .enumerate()
        .map(|(k, &p)| ts.pair_factor(p, &f[k], &g[k]))
        .product::<f64>()
        .abs();
    let sub_space = model.space.restrict(v)?;
    let sub = KernelModel::new(&sub_space, v.iter().map(|&p| model.descs[p].clone()).collect())?;
    let sub_s: Vec<usize> = v.iter().enumerate().filter(|(_, p)| s.contains(p)).map(|(k, _)| k).collect();
    let mut kernel_constant: f64 = 0.0;
    for mask in 0..1usize << v.len() {
        let w: Vec<usize> = (0..v.len()).filter(|k| mask >> k & 1 == 1).collect();
        let fit = check_size_holder(&sub, &sub_s, &w, samples, derive_seed(seed, mask as u64));
        kernel_constant = kernel_constant.max(fit.constant);
    }
    Ok(PartialKernelFit {
        v: v.to_vec(),
        pairing,
        kernel_constant,
        constant: pairing * kernel_constant,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmoWbpRow {
    pub level: u32,
    pub grid_seed: u64,
    /// Largest `|Π_{i∈W} ⟨T_i χ_{I_i}, χ_{I_i}⟩| / Π |I_i|` over positions.
    pub wbp: f64,
    /// Rectangle Carleson norm of `(⊗_{i∉W} T_i) 1`, or 1 when `W` is full.
    pub bmo: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmoWbpTable {
    pub w: Vec<usize>,
    pub rows: Vec<BmoWbpRow>,
    pub max_ratio: f64,
    /// `max/min` over rows with a nonzero ratio.
    pub spread: Option<f64>,
}

/// Mixed BMO/WBP ratios of a tensor operator for cubes of side `2^{-k}`,
/// `k ∈ levels`, in every listed grid.
pub fn check_bmo_wbp(op: &OperatorHandle, w: &[usize], levels: &[u32], grids: &[GridShift]) -> Result<BmoWbpTable> {
    let space = op.space();
    let n = space.n();
    let rest: Vec<usize> = (0..n).filter(|p| !w.contains(p)).collect();
    let mut rows = Vec::new();
    for grid in grids {
        grid.check(space)?;
        let bmo = if rest.is_empty() {
            1.0
        } else {
            let tail = op.restrict(&rest)?;
            let t1 = tail.apply(&MultiFunction::constant(tail.space(), 1.0))?;
            carleson_rect(&t1, &grid.restrict(&rest))?.value
        };
        for &level in levels {
            if level > space.depth() {
                return Err(Error::LevelOutOfRange {
                    level,
                    depth: space.depth(),
                });
            }
            let mut wbp = 1.0;
            for &p in w {
                let dim = space.dim(p);
                let mut best: f64 = 0.0;
                for cube in DyadicCube::all_at(p, level, dim) {
                    let bx = realize_cube(grid, &cube)?;
                    let chi = indicator(space, p, &bx);
                    let v = op.restrict(&[p])?.pair_factor(0, &chi, &chi).abs() / cube.volume();
                    best = best.max(v);
                }
                wbp *= best;
            }
            rows.push(BmoWbpRow {
                level,
                grid_seed: grid.seed(),
                wbp,
                bmo,
                ratio: wbp * bmo,
            });
        }
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let nz: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|&r| r > 0.0).collect();
    let spread = (!nz.is_empty())
        .then(|| nz.iter().cloned().fold(0.0, f64::max) / nz.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok(BmoWbpTable {
        w: w.to_vec(),
        rows,
        max_ratio,
        spread,
    })
}

fn indicator(space: &TorusSpace, p: usize, bx: &crate::grid::CellBox) -> Vec<f64> {
    let d = space.dim(p) as usize;
    let m = 1usize << space.depth();
    (0..space.cells(p))
        .map(|c| {
            let mut rem = c;
            let mut inside = true;
            for k in (0..d).rev() {
                inside &= bx.contains_cell_coord(k, (rem % m) as u64);
                rem /= m;
            }
            if inside { 1.0 } else { 0.0 }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertConfig {
    pub samples: usize,
    pub seed: u64,
    /// Constants at or above this fail.
    pub threshold: f64,
    /// Allowed growth of a constant when the sample count doubles.
    pub growth: f64,
    /// Cube levels for the BMO/WBP check.
    pub levels: Vec<u32>,
    /// Number of random grids for the BMO/WBP check, besides the standard
    /// one.
    pub grids: usize,
    pub quadrature: QuadratureConfig,
}

impl Default for CertConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            seed: 1,
            threshold: 1e3,
            growth: 2.0,
            levels: Vec::new(),
            grids: 2,
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    /// `size-holder`, `partial-kernel` or `bmo-wbp`.
    pub kind: String,
    /// Partial-adjoint set `S`.
    pub s: Vec<usize>,
    /// The subset `W` (or `V` for partial kernels).
    pub subset: Vec<usize>,
    pub constant: f64,
    pub stable: bool,
    pub passed: bool,
    pub witness: Option<Witness>,
    pub refinement: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub kernels: Vec<String>,
    pub delta: f64,
    pub config: CertConfig,
    pub conditions: Vec<Condition>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl CertReport {
    /// The failing condition with the largest constant.
    pub fn worst_failure(&self) -> Option<&Condition> {
        self.conditions
            .iter()
            .filter(|c| !c.passed)
            .max_by(|a, b| a.constant.total_cmp(&b.constant))
    }
}

impl fmt::Display for CertReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kernels: {}  delta: {}", self.kernels.join(" x "), self.delta)?;
        let mut kinds: Vec<&str> = self.conditions.iter().map(|c| c.kind.as_str()).collect();
        kinds.dedup();
        for kind in kinds {
            let cs: Vec<&Condition> = self.conditions.iter().filter(|c| c.kind == kind).collect();
            let worst = cs.iter().map(|c| c.constant).fold(0.0, f64::max);
            let failed = cs.iter().filter(|c| !c.passed).count();
            writeln!(f, "  {kind:<15} {:>4} checks  max constant {worst:.4e}  failed {failed}", cs.len())?;
        }
        if let Some(c) = self.worst_failure() {
            if let Some(w) = &c.witness {
                writeln!(f, "  witness: S={:?} subset={:?} separation={:?} ratio={:.4e}", c.s, c.subset, w.separation, w.ratio)?;
            }
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        write!(f, "verdict: {}", if self.passed { "pass" } else { "fail" })
    }
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..1usize << n).map(move |m| (0..n).filter(|k| m >> k & 1 == 1).collect())
}

/// Runs every check over every partial adjoint `T_S`.
fn mask_of(s: &[usize]) -> usize {
    s.iter().map(|p| 1 << p).sum()
}

pub fn certify_all(space: &TorusSpace, descs: Vec<KernelDesc>, config: &CertConfig) -> Result<CertReport> {
    let n = space.n();
    let model = KernelModel::new(space, descs.clone())?;
    let mut notes = vec![
        "product BMO is estimated on single dyadic rectangles, a lower bound for the open-set supremum".to_string(),
    ];
    let op = match OperatorHandle::build(space, descs.clone(), &config.quadrature) {
        Ok(op) => Some(op),
        Err(Error::NonIntegrable(what)) => {
            notes.push(format!("operator not assembled ({what}); partial-kernel and BMO/WBP checks skipped"));
            None
        }
        Err(e) => return Err(e),
    };
    let ok = |c: f64| c.is_finite() && c < config.threshold;
    let mut conditions = Vec::new();
    for s in subsets(n) {
        for w in subsets(n) {
            let seed = derive_seed(config.seed, (mask_of(&s) << 8 | mask_of(&w)) as u64);
            let half = check_size_holder(&model, &s, &w, config.samples, seed);
            let full = check_size_holder(&model, &s, &w, 2 * config.samples, seed);
            let stable = full.constant <= config.growth * half.constant || full.constant == 0.0;
            conditions.push(Condition {
                kind: "size-holder".into(),
                s: s.clone(),
                subset: w,
                constant: full.constant,
                stable,
                passed: ok(full.constant) && stable,
                witness: full.witness,
                refinement: full.refinement,
            });
        }
    }
    if let Some(op) = &op {
        let mut grids = vec![GridShift::standard(space)];
        grids.extend((0..config.grids).map(|k| crate::grid::sample_grid(space, derive_seed(config.seed, 1000 + k as u64))));
        let levels: Vec<u32> = if config.levels.is_empty() {
            (1..space.depth()).collect()
        } else {
            config.levels.clone()
        };
        for s in subsets(n) {
            let ts = op.partial_adjoint(&s);
            for v in subsets(n).filter(|v| !v.is_empty() && v.len() < n) {
                let rest: Vec<usize> = (0..n).filter(|p| !v.contains(p)).collect();
                let f: Vec<Vec<f64>> = rest
                    .iter()
                    .map(|&p| {
                        let c = space.cells(p);
                        (0..c).map(|i| if i < c / 2 { 1.0 } else { 0.0 }).collect()
                    })
                    .collect();
                let fit = check_partial_kernel(op, &model, &s, &v, &f, &f, config.samples / 4 + 1, config.seed)?;
                conditions.push(Condition {
                    kind: "partial-kernel".into(),
                    s: s.clone(),
                    subset: v,
                    constant: fit.constant,
                    stable: true,
                    passed: ok(fit.constant),
                    witness: None,
                    refinement: Vec::new(),
                });
            }
            for w in subsets(n) {
                let table = check_bmo_wbp(&ts, &w, &levels, &grids)?;
                conditions.push(Condition {
                    kind: "bmo-wbp".into(),
                    s: s.clone(),
                    subset: w,
                    constant: table.max_ratio,
                    stable: true,
                    passed: ok(table.max_ratio),
                    witness: None,
                    refinement: Vec::new(),
                });
            }
        }
    }
    let passed = conditions.iter().all(|c| c.passed);
    Ok(CertReport {
        kernels: descs.iter().map(|d| d.name().to_string()).collect(),
        delta: space.delta(),
        config: config.clone(),
        conditions,
        passed,
        notes,
    })
}
