//! Dyadic shifts `S^{i_1 j_1 … i_n j_n}`.
//!
//! A shift is applied through the redundant Haar layout: analysis gives
//! every `⟨f, ⊗h_I⟩`, coefficients move `I`-slots to `J`-slots inside each
//! `K`-tuple, and synthesis returns `Σ a ⟨f, ⊗h_I⟩ ⊗h_J`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cases::{classify_pair, join, make_s, Case, Orientation};
use crate::error::{Error, Result};
use crate::grid::{is_good, DyadicCube, GridShift, TorusSpace};
use crate::haar::{
    descendants, redundant_analysis_axis, redundant_synthesis_axis, AxisGrid, Basis1d, HaarFunction,
    MultiFunction,
};
use crate::kernel::OperatorHandle;
use crate::norm::{power_norm, NormEstimate};
use crate::par;

/// A Haar slot in one parameter; `eps = 0` is the noncancellative `h¹`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub level: u32,
    pub pos: usize,
    pub eps: u32,
}

/// One `(K_s, I_s, J_s)` choice per parameter.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ShiftTuple {
    pub k: Vec<(u32, usize)>,
    pub i: Vec<Slot>,
    pub j: Vec<Slot>,
}

pub type Provider = Arc<dyn Fn(&ShiftTuple) -> f64 + Send + Sync>;

/// Whether the `I` and `J` slots of a parameter use cancellative functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotKinds {
    pub i_cancellative: bool,
    pub j_cancellative: bool,
}

impl SlotKinds {
    pub const CANCELLATIVE: Self = Self {
        i_cancellative: true,
        j_cancellative: true,
    };
}

#[derive(Clone)]
pub struct ShiftSpec {
    space: TorusSpace,
    grid: GridShift,
    complexity: Vec<(u32, u32)>,
    kinds: Vec<SlotKinds>,
    provider: Provider,
}

impl fmt::Debug for ShiftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShiftSpec")
            .field("complexity", &self.complexity)
            .field("kinds", &self.kinds)
            .finish_non_exhaustive()
    }
}

impl ShiftSpec {
    pub fn new(
        space: &TorusSpace,
        grid: &GridShift,
        complexity: Vec<(u32, u32)>,
        kinds: Vec<SlotKinds>,
        provider: Provider,
    ) -> Result<Self> {
        grid.check(space)?;
        if complexity.len() != space.n() || kinds.len() != space.n() {
            return Err(Error::InvalidShift("one complexity and slot kind per parameter".into()));
        }
        for &(i, j) in &complexity {
            if i.max(j) >= space.depth() {
                return Err(Error::InvalidShift(format!(
                    "complexity ({i},{j}) does not fit depth {}",
                    space.depth()
                )));
            }
        }
        let noncancellative = kinds.iter().any(|k| !k.i_cancellative || !k.j_cancellative);
        if noncancellative && !complexity.iter().any(|&c| c == (0, 0)) {
            return Err(Error::InvalidShift(
                "noncancellative slots need some parameter with complexity (0,0)".into(),
            ));
        }
        Ok(Self {
            space: space.clone(),
            grid: grid.clone(),
            complexity,
            kinds,
            provider,
        })
    }

    /// A fully cancellative shift.
    pub fn cancellative(
        space: &TorusSpace,
        grid: &GridShift,
        complexity: Vec<(u32, u32)>,
        provider: Provider,
    ) -> Result<Self> {
        let kinds = vec![SlotKinds::CANCELLATIVE; space.n()];
        Self::new(space, grid, complexity, kinds, provider)
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    pub fn grid(&self) -> &GridShift {
        &self.grid
    }

    pub fn complexity(&self) -> &[(u32, u32)] {
        &self.complexity
    }

    /// `Π_s √(|I_s||J_s|)/|K_s|`.
    pub fn bound(&self) -> f64 {
        self.complexity
            .iter()
            .enumerate()
            .map(|(s, &(i, j))| (-((i + j) as f64) * self.space.dim(s) as f64 / 2.0).exp2())
            .product()
    }

    /// Admissible `(K, I, J)` triples of one parameter with their redundant
    /// indices.
    fn triples(&self, s: usize) -> Vec<Triple> {
        let (gi, gj) = self.complexity[s];
        let basis = Basis1d::of(&self.space, s);
        let kinds = self.kinds[s];
        let pats = |canc: bool| -> Vec<u32> {
            if canc {
                (1..basis.patterns() as u32).collect()
            } else {
                vec![0]
            }
        };
        let (pi, pj) = (pats(kinds.i_cancellative), pats(kinds.j_cancellative));
        let top = self.space.depth() - 1 - gi.max(gj);
        let mut out = Vec::new();
        for level in 0..=top {
            for k in DyadicCube::all_at(s, level, basis.dim) {
                let is = descendants(&self.grid, &k, gi);
                let js = descendants(&self.grid, &k, gj);
                for ic in &is {
                    for &ei in &pi {
                        for jc in &js {
                            for &ej in &pj {
                                let i = Slot { level: ic.level, pos: ic.flat(), eps: ei };
                                let j = Slot { level: jc.level, pos: jc.flat(), eps: ej };
                                out.push(Triple {
                                    k: (level, k.flat()),
                                    ri: basis.redundant_index(i.level, i.pos, i.eps),
                                    rj: basis.redundant_index(j.level, j.pos, j.eps),
                                    i,
                                    j,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
struct Triple {
    k: (u32, usize),
    i: Slot,
    j: Slot,
    ri: usize,
    rj: usize,
}

fn redundant_shape(space: &TorusSpace) -> Vec<usize> {
    (0..space.n()).map(|s| Basis1d::of(space, s).redundant_len()).collect()
}

fn analysis(space: &TorusSpace, grid: &GridShift, data: &[f64]) -> Vec<f64> {
    let mut shape = space.shape();
    let mut d = data.to_vec();
    for s in 0..space.n() {
        d = redundant_analysis_axis(&d, &shape, s, AxisGrid::of(grid, s));
        shape[s] = Basis1d::of(space, s).redundant_len();
    }
    d
}

fn synthesis(space: &TorusSpace, grid: &GridShift, data: &[f64]) -> Vec<f64> {
    let mut shape = redundant_shape(space);
    let mut d = data.to_vec();
    for s in 0..space.n() {
        d = redundant_synthesis_axis(&d, &shape, s, AxisGrid::of(grid, s));
        shape[s] = space.cells(s);
    }
    d
}

/// `S f`, or `S* f` when `transpose` is set.
pub fn shift_apply_values(spec: &ShiftSpec, values: &[f64], transpose: bool) -> Result<Vec<f64>> {
    let space = &spec.space;
    let n = space.n();
    let rshape = redundant_shape(space);
    let coeffs = analysis(space, &spec.grid, values);
    let mut strides = vec![1usize; n];
    for a in (0..n - 1).rev() {
        strides[a] = strides[a + 1] * rshape[a + 1];
    }
    let slab = strides[0];
    let lists: Vec<Vec<Triple>> = (0..n).map(|s| spec.triples(s)).collect();

    // Group parameter-0 triples by K so each group owns its output slots.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last: Option<(u32, usize)> = None;
    for (t, tr) in lists[0].iter().enumerate() {
        if last != Some(tr.k) {
            groups.push(Vec::new());
            last = Some(tr.k);
        }
        groups.last_mut().expect("pushed").push(t);
    }

    let bound = spec.bound() * (1.0 + 1e-12);
    let results = par::map_range(groups.len(), |g| -> Result<Vec<(usize, Vec<f64>)>> {
        let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut tuple = ShiftTuple {
            k: vec![(0, 0); n],
            i: vec![Slot { level: 0, pos: 0, eps: 0 }; n],
            j: vec![Slot { level: 0, pos: 0, eps: 0 }; n],
        };
        for &t in &groups[g] {
            let tr = &lists[0][t];
            tuple.k[0] = tr.k;
            tuple.i[0] = tr.i;
            tuple.j[0] = tr.j;
            let (src0, dst0) = if transpose { (tr.rj, tr.ri) } else { (tr.ri, tr.rj) };
            let slot = match out.iter().position(|(d, _)| *d == dst0) {
                Some(p) => p,
                None => {
                    out.push((dst0, vec![0.0; slab]));
                    out.len() - 1
                }
            };
            let src = &coeffs[src0 * slab..(src0 + 1) * slab];
            let dst = &mut out[slot].1;
            accumulate(spec, &lists, 1, &mut tuple, src, 0, dst, 0, &strides, transpose, bound)?;
        }
        Ok(out)
    });

    let mut outc = vec![0.0; coeffs.len()];
    for r in results {
        for (d, v) in r? {
            for (o, x) in outc[d * slab..(d + 1) * slab].iter_mut().zip(&v) {
                *o += x;
            }
        }
    }
    Ok(synthesis(space, &spec.grid, &outc))
}

#[allow(clippy::too_many_arguments)]
fn accumulate(
    spec: &ShiftSpec,
    lists: &[Vec<Triple>],
    s: usize,
    tuple: &mut ShiftTuple,
    src: &[f64],
    src_off: usize,
    dst: &mut [f64],
    dst_off: usize,
    strides: &[usize],
    transpose: bool,
    bound: f64,
) -> Result<()> {
    if s == lists.len() {
        let a = (spec.provider)(tuple);
        if a.abs() > bound || !a.is_finite() {
            return Err(Error::CoefficientBound {
                value: a,
                bound: spec.bound(),
                context: format!("{tuple:?}"),
            });
        }
        dst[dst_off] += a * src[src_off];
        return Ok(());
    }
    for tr in &lists[s] {
        tuple.k[s] = tr.k;
        tuple.i[s] = tr.i;
        tuple.j[s] = tr.j;
        let (a, b) = if transpose { (tr.rj, tr.ri) } else { (tr.ri, tr.rj) };
        accumulate(
            spec,
            lists,
            s + 1,
            tuple,
            src,
            src_off + a * strides[s],
            dst,
            dst_off + b * strides[s],
            strides,
            transpose,
            bound,
        )?;
    }
    Ok(())
}

pub fn shift_apply(spec: &ShiftSpec, f: &MultiFunction) -> Result<MultiFunction> {
    check(spec, f)?;
    MultiFunction::new(spec.space.clone(), shift_apply_values(spec, f.values(), false)?)
}

pub fn shift_adjoint_apply(spec: &ShiftSpec, f: &MultiFunction) -> Result<MultiFunction> {
    check(spec, f)?;
    MultiFunction::new(spec.space.clone(), shift_apply_values(spec, f.values(), true)?)
}

fn check(spec: &ShiftSpec, f: &MultiFunction) -> Result<()> {
    if f.space().dims() != spec.space.dims() || f.space().depth() != spec.space.depth() {
        return Err(Error::ShapeMismatch("function and shift spaces differ".into()));
    }
    Ok(())
}

/// Power-iteration estimate of `‖S‖_{L²→L²}`.
pub fn shift_norm_check(spec: &ShiftSpec, iters: usize, seed: u64) -> Result<NormEstimate> {
    // Validate the provider once so the iteration itself cannot fail.
    shift_apply_values(spec, &vec![1.0; spec.space.total_cells()], false)?;
    Ok(power_norm(
        spec.space.total_cells(),
        |x| shift_apply_values(spec, x, false).expect("validated"),
        |y| shift_apply_values(spec, y, true).expect("validated"),
        iters,
        seed,
    ))
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tuple_hash(t: &ShiftTuple, seed: u64) -> u64 {
    let mut h = mix(seed ^ 0x5DEE_CE66_D1CE_4E5B);
    let mut eat = |v: u64| h = mix(h ^ v.wrapping_add(0x9E37_79B9_7F4A_7C15));
    for s in 0..t.k.len() {
        eat(t.k[s].0 as u64);
        eat(t.k[s].1 as u64);
        for slot in [&t.i[s], &t.j[s]] {
            eat(slot.level as u64);
            eat(slot.pos as u64);
            eat(slot.eps as u64);
        }
    }
    h
}

/// Coefficients `±Π √(|I||J|)/|K|` with signs from a seeded hash of the tuple.
pub fn saturated_random_provider(space: &TorusSpace, complexity: &[(u32, u32)], seed: u64) -> Provider {
    let bound: f64 = complexity
        .iter()
        .enumerate()
        .map(|(s, &(i, j))| (-((i + j) as f64) * space.dim(s) as f64 / 2.0).exp2())
        .product();
    Arc::new(move |t| if tuple_hash(t, seed) & 1 == 0 { bound } else { -bound })
}

pub fn constant_provider(a: f64) -> Provider {
    Arc::new(move |_| a)
}

/// Writes every coefficient of a shift as CSV rows.
pub fn dump_coefficients<W: std::io::Write>(spec: &ShiftSpec, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = spec.space.n();
    let mut header = Vec::new();
    for s in 0..n {
        for field in ["k_level", "k_pos", "i_level", "i_pos", "i_eps", "j_level", "j_pos", "j_eps"] {
            header.push(format!("p{}_{field}", s + 1));
        }
    }
    header.push("value".into());
    w.write_record(&header)?;
    let lists: Vec<Vec<Triple>> = (0..n).map(|s| spec.triples(s)).collect();
    let mut idx = vec![0usize; n];
    if lists.iter().any(|l| l.is_empty()) {
        w.flush()?;
        return Ok(());
    }
    loop {
        let mut t = ShiftTuple::default();
        let mut row = Vec::new();
        for s in 0..n {
            let tr = &lists[s][idx[s]];
            t.k.push(tr.k);
            t.i.push(tr.i);
            t.j.push(tr.j);
            row.extend(
                [
                    tr.k.0 as u64,
                    tr.k.1 as u64,
                    tr.i.level as u64,
                    tr.i.pos as u64,
                    tr.i.eps as u64,
                    tr.j.level as u64,
                    tr.j.pos as u64,
                    tr.j.eps as u64,
                ]
                .iter()
                .map(|v| v.to_string()),
            );
        }
        row.push(format!("{:e}", (spec.provider)(&t)));
        w.write_record(&row)?;
        let mut s = n;
        loop {
            if s == 0 {
                w.flush()?;
                return Ok(());
            }
            s -= 1;
            idx[s] += 1;
            if idx[s] < lists[s].len() {
                break;
            }
            idx[s] = 0;
        }
    }
}

pub fn dump_coefficients_to(spec: &ShiftSpec, path: &Path) -> Result<()> {
    dump_coefficients(spec, std::fs::File::create(path)?)
}

/// One normalized coefficient of a term pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub k: (u32, usize),
    pub i: Slot,
    pub j: Slot,
    pub value: f64,
    pub ratio: f64,
}

/// Per-parameter coefficient tables and the supremum of normalized ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub cases: Vec<Case>,
    pub complexity: Vec<(u32, u32)>,
    pub tables: Vec<Vec<CoefficientEntry>>,
    /// `Π_s max ratio_s`; the pairings factor over parameters, so this is
    /// the supremum over all tuples.
    pub max_ratio: f64,
}

/// Realizes the per-case term pairings of a tensor operator as shift
/// coefficients and reports the normalized magnitudes.
///
/// Separated, near and equal pairs use `⟨T h_I, h_J⟩`; inside pairs use
/// `⟨T h_I, s_{IJ}⟩` (or `⟨T s_{JI}, h_J⟩` when `J ⊊ I`). Only tuples whose
/// smaller cube is good contribute.
pub fn extract_shift_coefficients(
    op: &OperatorHandle,
    grid: &GridShift,
    cases: &[Case],
    complexity: &[(u32, u32)],
) -> Result<CoefficientReport> {
    let space = op.space();
    grid.check(space)?;
    if cases.len() != space.n() || complexity.len() != space.n() {
        return Err(Error::ShapeMismatch("one case and complexity per parameter".into()));
    }
    let delta = space.delta();
    let mut tables = Vec::with_capacity(space.n());
    let mut max_ratio = 1.0;
    for s in 0..space.n() {
        let (gi, gj) = complexity[s];
        if gi.max(gj) >= space.depth() {
            return Err(Error::LevelOutOfRange {
                level: gi.max(gj),
                depth: space.depth(),
            });
        }
        let basis = Basis1d::of(space, s);
        let pats: Vec<u32> = (1..basis.patterns() as u32).collect();
        let one = op.restrict(&[s])?;
        let sub = space.restrict(&[s])?;
        let subgrid = grid.restrict(&[s]);
        let top = space.depth() - 1 - gi.max(gj);
        let rows: Vec<Vec<CoefficientEntry>> = par::map_range((top + 1) as usize, |level| {
            let mut rows = Vec::new();
            for k in DyadicCube::all_at(s, level as u32, basis.dim) {
                for ic in descendants(grid, &k, gi) {
                    for jc in descendants(grid, &k, gj) {
                        if join(grid, &ic, &jc) != k {
                            continue;
                        }
                        let Ok(pair) = classify_pair(space, grid, &ic, &jc) else { continue };
                        if pair.case != cases[s] {
                            continue;
                        }
                        let small = if pair.orientation == Orientation::ISmaller { &ic } else { &jc };
                        if !is_good(space, grid, small) {
                            continue;
                        }
                        for &ei in &pats {
                            for &ej in &pats {
                                let c = |cube: &DyadicCube| DyadicCube { param: 0, ..cube.clone() };
                                let value = match pair.case {
                                    Case::Inside if pair.orientation == Orientation::ISmaller => {
                                        let sf = make_s(&sub, &subgrid, &c(&ic), &c(&jc), ej);
                                        let hi = HaarFunction::new(c(&ic), ei).cells(&sub, &subgrid);
                                        match (sf, hi) {
                                            (Ok(sf), Ok(hi)) => one.pair_factor(0, &hi, &sf.values),
                                            _ => continue,
                                        }
                                    }
                                    Case::Inside => {
                                        let sf = make_s(&sub, &subgrid, &c(&jc), &c(&ic), ei);
                                        let hj = HaarFunction::new(c(&jc), ej).cells(&sub, &subgrid);
                                        match (sf, hj) {
                                            (Ok(sf), Ok(hj)) => one.pair_factor(0, &sf.values, &hj),
                                            _ => continue,
                                        }
                                    }
                                    _ => {
                                        let hi = HaarFunction::new(c(&ic), ei).cells(&sub, &subgrid);
                                        let hj = HaarFunction::new(c(&jc), ej).cells(&sub, &subgrid);
                                        match (hi, hj) {
                                            (Ok(hi), Ok(hj)) => one.pair_factor(0, &hi, &hj),
                                            _ => continue,
                                        }
                                    }
                                };
                                let size = (-((gi + gj) as f64) * basis.dim as f64 / 2.0).exp2();
                                let decay = (-(gi.max(gj) as f64) * delta / 2.0).exp2();
                                rows.push(CoefficientEntry {
                                    k: (k.level, k.flat()),
                                    i: Slot { level: ic.level, pos: ic.flat(), eps: ei },
                                    j: Slot { level: jc.level, pos: jc.flat(), eps: ej },
                                    value,
                                    ratio: value.abs() / (size * decay),
                                });
                            }
                        }
                    }
                }
            }
            rows
        });
        let table: Vec<CoefficientEntry> = rows.into_iter().flatten().collect();
        let m = table.iter().map(|e| e.ratio).fold(0.0, f64::max);
        max_ratio *= m;
        tables.push(table);
    }
    Ok(CoefficientReport {
        cases: cases.to_vec(),
        complexity: complexity.to_vec(),
        tables,
        max_ratio,
    })
}
