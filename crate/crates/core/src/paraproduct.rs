//! One-, bi- and tri-parameter dyadic paraproducts.
//!
//! With `A = (a_1, …, a_m)` the acting parameters, the operators are
//!
//! ```text
//! m = 1:  Π_b f = Σ_V     ⟨b, h_V⟩         ⟨f, h¹_V⟩         h_V           |V|^{-1/2}
//! m = 2:  Π_b f = Σ_{V,W} ⟨b, h_V⊗h_W⟩     ⟨f, h_V⊗h¹_W⟩     h¹_V⊗h_W      |V|^{-1/2}|W|^{-1/2}
//! m = 3:  Π_b f = Σ       ⟨b, h_K⊗h_V⊗h_W⟩ ⟨f, h_K⊗h_V⊗h¹_W⟩ h¹_K⊗h¹_V⊗h_W |K|^{-1/2}|V|^{-1/2}|W|^{-1/2}
//! ```
//!
//! acting as the identity in the remaining parameters.

use serde::{Deserialize, Serialize};

use crate::carleson::carleson_rect;
use crate::error::{Error, Result};
use crate::grid::{GridShift, TorusSpace};
use crate::haar::{redundant_analysis_axis, redundant_synthesis_axis, AxisGrid, Basis1d, MultiFunction};
use crate::norm::power_norm;
use crate::par;
use crate::tensor::permute_axes;

/// Which Haar function an argument carries in one acting parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    /// `h_V^ε`, with `ε` shared with the symbol.
    Cancellative,
    /// `h¹_V = |V|^{-1/2} χ_V`.
    Average,
}

#[derive(Clone, Debug)]
pub struct ParaproductSpec {
    space: TorusSpace,
    grid: GridShift,
    acting: Vec<usize>,
    symbol: MultiFunction,
    input: Vec<SlotKind>,
    output: Vec<SlotKind>,
    /// Redundant coefficients of the symbol along every acting axis.
    coeffs: Vec<f64>,
}

impl ParaproductSpec {
    /// Paraproduct with the standard slot pattern for `acting.len()`
    /// parameters. `symbol` lives on `space.restrict(acting)`.
    pub fn new(space: &TorusSpace, grid: &GridShift, acting: &[usize], symbol: MultiFunction) -> Result<Self> {
        use SlotKind::*;
        let (input, output) = match acting.len() {
            1 => (vec![Average], vec![Cancellative]),
            2 => (vec![Cancellative, Average], vec![Average, Cancellative]),
            3 => (
                vec![Cancellative, Cancellative, Average],
                vec![Average, Average, Cancellative],
            ),
            m => return Err(Error::Unsupported(format!("paraproducts in {m} parameters"))),
        };
        grid.check(space)?;
        let mut seen = vec![false; space.n()];
        for &p in acting {
            if p >= space.n() || seen[p] {
                return Err(Error::ShapeMismatch(format!("bad acting parameter {p}")));
            }
            seen[p] = true;
        }
        let sub = space.restrict(acting)?;
        if symbol.space().dims() != sub.dims() || symbol.space().depth() != sub.depth() {
            return Err(Error::ShapeMismatch(
                "symbol must live on the acting parameters".into(),
            ));
        }
        let sub_grid = grid.restrict(acting);
        let mut shape = symbol.shape();
        let mut coeffs = symbol.values().to_vec();
        for a in 0..acting.len() {
            coeffs = redundant_analysis_axis(&coeffs, &shape, a, AxisGrid::of(&sub_grid, a));
            shape[a] = Basis1d::of(&sub, a).redundant_len();
        }
        Ok(Self {
            space: space.clone(),
            grid: grid.clone(),
            acting: acting.to_vec(),
            symbol,
            input,
            output,
            coeffs,
        })
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    pub fn grid(&self) -> &GridShift {
        &self.grid
    }

    pub fn acting(&self) -> &[usize] {
        &self.acting
    }

    pub fn symbol(&self) -> &MultiFunction {
        &self.symbol
    }

    /// Slot kinds of `(f, output)` per acting parameter.
    pub fn pattern(&self) -> (&[SlotKind], &[SlotKind]) {
        (&self.input, &self.output)
    }

    fn run(&self, f: &MultiFunction, input: &[SlotKind], output: &[SlotKind]) -> Result<MultiFunction> {
        if f.space() != &self.space {
            return Err(Error::ShapeMismatch("function space differs from the paraproduct's".into()));
        }
        let n = self.space.n();
        let m = self.acting.len();
        let mut perm = self.acting.clone();
        perm.extend((0..n).filter(|p| !self.acting.contains(p)));
        let (mut data, mut shape) = permute_axes(f.values(), &f.shape(), &perm);
        let bases: Vec<Basis1d> = self.acting.iter().map(|&p| Basis1d::of(&self.space, p)).collect();
        for a in 0..m {
            data = redundant_analysis_axis(&data, &shape, a, AxisGrid::of(&self.grid, self.acting[a]));
            shape[a] = bases[a].redundant_len();
        }
        let inner: usize = shape[m..].iter().product();
        let red: Vec<usize> = shape[..m].to_vec();

        // Per acting axis: (redundant index of b, index into f, index into
        // the output, |V|^{-1/2}) for every cancellative slot.
        let table = |a: usize| -> Vec<(usize, usize, usize, f64)> {
            let basis = bases[a];
            let pat = basis.patterns();
            (0..red[a])
                .filter(|r| r % pat != 0)
                .map(|r| {
                    let (level, _, _) = basis.redundant_decode(r);
                    let base = r - r % pat;
                    let pick = |k: SlotKind| if k == SlotKind::Cancellative { r } else { base };
                    let w = ((level * basis.dim) as f64 / 2.0).exp2();
                    (r, pick(input[a]), pick(output[a]), w)
                })
                .collect()
        };
        let tables: Vec<_> = (0..m).map(table).collect();
        let stride = |idx: &[usize]| idx.iter().zip(&red).fold(0, |acc, (i, r)| acc * r + i);

        let pat0 = bases[0].patterns();
        let tail: usize = red[1..].iter().product();
        let chunk = pat0 * tail * inner;
        let mut out = vec![0.0; data.len()];
        par::for_each_chunk_mut(&mut out, chunk, |cube, dst| {
            let rows0 = &tables[0][cube * (pat0 - 1)..(cube + 1) * (pat0 - 1)];
            let mut combo = vec![0usize; m];
            for &(b0, f0, o0, w0) in rows0 {
                'tuples: loop {
                    let mut bidx = vec![b0];
                    let mut fidx = vec![f0];
                    let mut oidx = vec![o0 - cube * pat0];
                    let mut w = w0;
                    for a in 1..m {
                        let (b, fi, o, wa) = tables[a][combo[a]];
                        bidx.push(b);
                        fidx.push(fi);
                        oidx.push(o);
                        w *= wa;
                    }
                    let c = self.coeffs[stride(&bidx)] * w;
                    if c != 0.0 {
                        let src = stride(&fidx) * inner;
                        let at = stride(&oidx) * inner;
                        for (o, v) in dst[at..at + inner].iter_mut().zip(&data[src..src + inner]) {
                            *o += c * v;
                        }
                    }
                    let mut a = m;
                    loop {
                        if a == 1 {
                            break 'tuples;
                        }
                        a -= 1;
                        combo[a] += 1;
                        if combo[a] < tables[a].len() {
                            break;
                        }
                        combo[a] = 0;
                    }
                }
                combo.iter_mut().for_each(|c| *c = 0);
            }
        });
        let mut data = out;
        for a in 0..m {
            data = redundant_synthesis_axis(&data, &shape, a, AxisGrid::of(&self.grid, self.acting[a]));
            shape[a] = bases[a].len();
        }
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let (values, _) = permute_axes(&data, &shape, &inv);
        MultiFunction::new(self.space.clone(), values)
    }
}

/// `Π_b f`.
pub fn para_apply(spec: &ParaproductSpec, f: &MultiFunction) -> Result<MultiFunction> {
    spec.run(f, &spec.input, &spec.output)
}

/// `Π_b^* f`, exchanging the input and output slot kinds.
pub fn para_adjoint_apply(spec: &ParaproductSpec, f: &MultiFunction) -> Result<MultiFunction> {
    spec.run(f, &spec.output, &spec.input)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaNormReport {
    pub arity: usize,
    pub operator_norm: f64,
    pub bmo: f64,
    /// `operator_norm / bmo`, or 0 when both vanish.
    pub ratio: f64,
}

/// Power-iteration `‖Π_b‖` against the rectangle Carleson norm of `b`.
pub fn para_norm_vs_bmo(spec: &ParaproductSpec, iters: usize, seed: u64) -> Result<ParaNormReport> {
    let space = spec.space.clone();
    let wrap = |x: &[f64]| MultiFunction::new(space.clone(), x.to_vec()).expect("length checked");
    let est = power_norm(
        space.total_cells(),
        |x| para_apply(spec, &wrap(x)).expect("same space").into_values(),
        |y| para_adjoint_apply(spec, &wrap(y)).expect("same space").into_values(),
        iters,
        seed,
    );
    let bmo = carleson_rect(&spec.symbol, &spec.grid.restrict(&spec.acting))?.value;
    let norm = est.value;
    let ratio = if bmo > 0.0 {
        norm / bmo
    } else if norm <= 1e-12 {
        0.0
    } else {
        return Err(Error::Inconsistent(format!(
            "paraproduct norm {norm:e} with vanishing symbol estimate"
        )));
    };
    Ok(ParaNormReport {
        arity: spec.acting.len(),
        operator_norm: norm,
        bmo,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_grid;
    use crate::haar::{basis_vector, redundant_vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_fn(space: &TorusSpace, seed: u64) -> MultiFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..space.total_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        MultiFunction::new(space.clone(), v).unwrap()
    }

    #[test]
    fn single_haar_symbol_gives_average_times_haar() {
        let s = TorusSpace::uniform(1, 5, 0.5, 1).unwrap();
        let g = sample_grid(&s, 2);
        let basis = Basis1d::of(&s, 0);
        let hv = basis_vector(&s, &g, 0, basis.encode(2, 3, 1)).unwrap();
        let spec = ParaproductSpec::new(&s, &g, &[0], MultiFunction::new(s.clone(), hv.clone()).unwrap()).unwrap();
        let f = rand_fn(&s, 1);
        let chi = redundant_vector(&s, &g, 0, basis.redundant_index(2, 3, 0)).unwrap();
        let avg = f.inner(&MultiFunction::new(s.clone(), chi).unwrap()).unwrap() * 2.0;
        let got = para_apply(&spec, &f).unwrap();
        for (a, b) in got.values().iter().zip(&hv) {
            assert!((a - avg * b).abs() < 1e-12);
        }
        // Π*_b f = ⟨f, h_V⟩ |V|^{-1} χ_V
        let hf = f.inner(&MultiFunction::new(s.clone(), hv.clone()).unwrap()).unwrap();
        let adj = para_adjoint_apply(&spec, &f).unwrap();
        for (a, b) in adj.values().iter().zip(&hv) {
            let want = if *b != 0.0 { hf * 4.0 } else { 0.0 };
            assert!((a - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_returns_cancellative_part() {
        let s = TorusSpace::uniform(1, 6, 0.5, 1).unwrap();
        let g = sample_grid(&s, 8);
        let b = rand_fn(&s, 4);
        let spec = ParaproductSpec::new(&s, &g, &[0], b.clone()).unwrap();
        let got = para_apply(&spec, &MultiFunction::constant(&s, 1.0)).unwrap();
        let mean = b.values().iter().sum::<f64>() / b.values().len() as f64;
        for (a, v) in got.values().iter().zip(b.values()) {
            assert!((a - (v - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity_all_arities() {
        let s = TorusSpace::new(vec![1, 1, 1, 1], 3, 0.5, 1).unwrap();
        let g = sample_grid(&s, 6);
        for acting in [vec![2], vec![3, 0], vec![1, 3, 2]] {
            let sub = s.restrict(&acting).unwrap();
            let spec = ParaproductSpec::new(&s, &g, &acting, rand_fn(&sub, 9)).unwrap();
            let f = rand_fn(&s, 10);
            let h = rand_fn(&s, 11);
            let lhs = para_apply(&spec, &f).unwrap().inner(&h).unwrap();
            let rhs = f.inner(&para_adjoint_apply(&spec, &h).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{acting:?}");
        }
    }

    #[test]
    fn bi_parameter_matches_explicit_sum() {
        let s = TorusSpace::uniform(2, 3, 0.5, 1).unwrap();
        let g = sample_grid(&s, 12);
        let b = rand_fn(&s, 1);
        let f = rand_fn(&s, 2);
        let h = rand_fn(&s, 3);
        let spec = ParaproductSpec::new(&s, &g, &[0, 1], b.clone()).unwrap();
        let got = para_apply(&spec, &f).unwrap().inner(&h).unwrap();
        let basis = Basis1d::of(&s, 0);
        let rv = |p, level, pos, eps| redundant_vector(&s, &g, p, basis.redundant_index(level, pos, eps)).unwrap();
        let pair = |u: &MultiFunction, a: &[f64], c: &[f64]| {
            u.inner(&MultiFunction::from_tensor(&s, &[a.to_vec(), c.to_vec()]).unwrap()).unwrap()
        };
        let mut want = 0.0;
        for kv in 0..3 {
            for pv in 0..basis.cubes_at(kv) {
                for kw in 0..3 {
                    for pw in 0..basis.cubes_at(kw) {
                        let (hv, hv1) = (rv(0, kv, pv, 1), rv(0, kv, pv, 0));
                        let (hw, hw1) = (rv(1, kw, pw, 1), rv(1, kw, pw, 0));
                        let norm = ((kv + kw) as f64 / 2.0).exp2();
                        want += pair(&b, &hv, &hw) * pair(&f, &hv, &hw1) * pair(&h, &hv1, &hw) * norm;
                    }
                }
            }
        }
        assert!((got - want).abs() < 1e-10, "{got} {want}");
    }

    #[test]
    fn norm_of_single_haar_symbol() {
        let s = TorusSpace::uniform(1, 6, 0.5, 1).unwrap();
        let g = GridShift::standard(&s);
        let basis = Basis1d::of(&s, 0);
        let hv = basis_vector(&s, &g, 0, basis.encode(3, 5, 1)).unwrap();
        let spec = ParaproductSpec::new(&s, &g, &[0], MultiFunction::new(s.clone(), hv).unwrap()).unwrap();
        let r = para_norm_vs_bmo(&spec, 30, 1).unwrap();
        assert!((r.operator_norm - 8f64.sqrt()).abs() < 1e-9);
        assert!((r.ratio - 1.0).abs() < 1e-9);
        let flat = ParaproductSpec::new(&s, &g, &[0], MultiFunction::constant(&s, 2.0)).unwrap();
        assert_eq!(para_norm_vs_bmo(&flat, 5, 1).unwrap().ratio, 0.0);
    }
}
