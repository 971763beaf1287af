//! Kernels, cell pairing matrices and tensor-product operators.
//!
//! A one-parameter kernel is reduced to the matrix `M[c, c'] = ∫_c ∫_{c'}
//! K(x, y) dy dx` over finest cells, so `⟨T u, v⟩ = vᵀ M u` for cell-valued
//! `u, v`. An operator is the tensor product of one such matrix per
//! parameter, with a transpose flag per parameter realizing partial adjoints.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShift, TorusSpace};
use crate::haar::{basis_vector, forward_axis, AxisGrid, HaarFunction, MultiFunction};
use crate::norm::{matrix_norm, NormEstimate};
use crate::par;
use crate::quadrature::GaussLegendre;
use crate::tensor;

/// A real trigonometric polynomial
/// `c + Σ_k cos_k cos(2πkx) + sin_k sin(2πkx)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let w = 2.0 * PI * x;
        let mut v = self.constant;
        for (k, c) in self.cos.iter().enumerate() {
            v += c * (w * (k + 1) as f64).cos();
        }
        for (k, s) in self.sin.iter().enumerate() {
            v += s * (w * (k + 1) as f64).sin();
        }
        v
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let w = 2.0 * PI * x;
        let mut v = 0.0;
        for (k, c) in self.cos.iter().enumerate() {
            let f = 2.0 * PI * (k + 1) as f64;
            v -= c * f * (w * (k + 1) as f64).sin();
        }
        for (k, s) in self.sin.iter().enumerate() {
            let f = 2.0 * PI * (k + 1) as f64;
            v += s * f * (w * (k + 1) as f64).cos();
        }
        v
    }
}

/// One-parameter kernel descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelDesc {
    /// `cot(π(x − y))`.
    PeriodicHilbert,
    /// `a(x) cot(π(x − y)) b(y)`.
    Modulated { a: TrigSeries, b: TrigSeries },
    /// `|x − y|_T^{-β}`.
    RoughPower { beta: f64 },
    /// A cell matrix used as is, row-major.
    Tabulated { size: usize, values: Vec<f64> },
}

/// How the diagonal cells are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagonal {
    PrincipalValue,
    Finite,
    Given,
}

impl KernelDesc {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PeriodicHilbert => "periodic-hilbert",
            Self::Modulated { .. } => "modulated",
            Self::RoughPower { .. } => "rough-power",
            Self::Tabulated { .. } => "tabulated",
        }
    }

    pub fn diagonal(&self) -> Diagonal {
        match self {
            Self::PeriodicHilbert | Self::Modulated { .. } => Diagonal::PrincipalValue,
            Self::RoughPower { .. } => Diagonal::Finite,
            Self::Tabulated { .. } => Diagonal::Given,
        }
    }

    /// Pointwise value off the diagonal; `None` for tabulated kernels.
    pub fn eval(&self, x: f64, y: f64) -> Option<f64> {
        match self {
            Self::PeriodicHilbert => Some(cot(PI * (x - y))),
            Self::Modulated { a, b } => Some(a.value(x) * cot(PI * (x - y)) * b.value(y)),
            Self::RoughPower { beta } => Some(torus_abs(x - y).powf(-beta)),
            Self::Tabulated { .. } => None,
        }
    }
}

/// Quadrature settings for matrix construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Gauss–Legendre order per cell side.
    pub order: usize,
    /// Cell pairs within this cyclic distance use singular corrections.
    pub near_cells: usize,
    /// Geometric refinement levels toward logarithmic endpoint singularities.
    pub refine: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            order: 4,
            near_cells: 4,
            refine: 30,
        }
    }
}

fn cot(z: f64) -> f64 {
    z.cos() / z.sin()
}

fn torus_abs(t: f64) -> f64 {
    let r = t.rem_euclid(1.0);
    r.min(1.0 - r)
}

/// `cot(πt) − 1/(πt)`, smooth on `|t| < 1`.
fn cot_remainder(t: f64) -> f64 {
    let z = PI * t;
    if z.abs() < 1e-4 {
        -z / 3.0 - z * z * z / 45.0
    } else {
        cot(z) - 1.0 / z
    }
}

/// `∫_{-h}^{h} (h − |s|) g(u + s) ds`, the double cell integral of a
/// convolution kernel at offset `u`.
fn triangle<G: Fn(f64) -> f64>(gl: &GaussLegendre, u: f64, h: f64, g: G) -> f64 {
    gl.integrate(-h, 0.0, |s| (h + s) * g(u + s)) + gl.integrate(0.0, h, |s| (h - s) * g(u + s))
}

fn second_difference<P: Fn(f64) -> f64>(phi: P, u: f64, h: f64) -> f64 {
    phi(u + h) - 2.0 * phi(u) + phi(u - h)
}

/// Antiderivative of `ln|t| / π`, twice-integrated `1/(πt)`.
fn phi_log(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        (t * t.abs().ln() - t) / PI
    }
}

const HILBERT_EXACT_OFFSETS: usize = 8;

fn hilbert_offset(gl: &GaussLegendre, m: usize, h: f64) -> f64 {
    let u = m as f64 * h;
    if m <= HILBERT_EXACT_OFFSETS {
        second_difference(phi_log, u, h) + triangle(gl, u, h, cot_remainder)
    } else {
        triangle(gl, u, h, |t| cot(PI * t))
    }
}

fn hilbert_matrix(n: usize, gl: &GaussLegendre) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let half = n / 2;
    let table: Vec<f64> = par::map_range(half, |m| if m == 0 { 0.0 } else { hilbert_offset(gl, m, h) });
    let mut out = vec![0.0; n * n];
    par::for_each_chunk_mut(&mut out, n, |c, row| {
        for (cp, v) in row.iter_mut().enumerate() {
            let m = (c + n - cp) % n;
            *v = if m == 0 || 2 * m == n {
                0.0
            } else if m < half {
                table[m]
            } else {
                -table[n - m]
            };
        }
    });
    out
}

fn modulated_matrix(n: usize, a: &TrigSeries, b: &TrigSeries, quad: &QuadratureConfig) -> Vec<f64> {
    let gl = GaussLegendre::new(quad.order);
    let near = GaussLegendre::new((2 * quad.order).max(8));
    let h = 1.0 / n as f64;
    let rows = par::map_range(n, |c| {
        let x0 = c as f64 * h;
        let x1 = x0 + h;
        let xs: Vec<(f64, f64)> = gl.mapped(x0, x1).collect();
        let ax: Vec<f64> = xs.iter().map(|&(x, _)| a.value(x)).collect();
        (0..n)
            .map(|cp| {
                let fwd = (cp + n - c) % n;
                let dist = fwd.min(n - fwd);
                let base = cp as f64 * h;
                let y0 = base + (x0 - base).round();
                if dist > quad.near_cells {
                    let mut s = 0.0;
                    for ((x, wx), &axv) in xs.iter().zip(&ax) {
                        for (y, wy) in gl.mapped(y0, y0 + h) {
                            s += wx * wy * axv * b.value(y) * cot(PI * (x - y));
                        }
                    }
                    return s;
                }
                // a(y)b(y) cot + (a(x) − a(y)) b(y) cot
                let psi = |y: f64| {
                    ((PI * (x1 - y)).sin().abs().ln() - (PI * (x0 - y)).sin().abs().ln()) / PI
                };
                let t1 = near.graded(y0, y0 + h, quad.refine, |y| a.value(y) * b.value(y) * psi(y));
                let mut t2 = 0.0;
                for (x, wx) in near.mapped(x0, x1) {
                    for (y, wy) in near.mapped(y0, y0 + h) {
                        let t = x - y;
                        let g = if t.abs() < 1e-14 {
                            a.derivative(y) * b.value(y) / PI
                        } else {
                            (a.value(x) - a.value(y)) * b.value(y) * cot(PI * t)
                        };
                        t2 += wx * wy * g;
                    }
                }
                t1 + t2
            })
            .collect::<Vec<f64>>()
    });
    rows.concat()
}

fn rough_matrix(n: usize, beta: f64, quad: &QuadratureConfig) -> Result<Vec<f64>> {
    if !(beta < 1.0) || !beta.is_finite() {
        return Err(Error::NonIntegrable(format!(
            "rough-power kernel with beta = {beta}"
        )));
    }
    let gl = GaussLegendre::new(quad.order);
    let h = 1.0 / n as f64;
    let norm = (1.0 - beta) * (2.0 - beta);
    let phi = |t: f64| if t == 0.0 { 0.0 } else { t.abs().powf(2.0 - beta) / norm };
    let table = par::map_range(n / 2 + 1, |m| {
        let u = m as f64 * h;
        if u + h <= 0.5 {
            return second_difference(phi, u, h);
        }
        let g = |s: f64| (h - s.abs()) * torus_abs(u + s).powf(-beta);
        let mut cuts = vec![-h, 0.0, h];
        let kink = 0.5 - u;
        if kink > -h && kink < h && kink != 0.0 {
            cuts.push(kink);
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.windows(2).map(|w| gl.composite(w[0], w[1], 4, g)).sum()
    });
    let mut out = vec![0.0; n * n];
    par::for_each_chunk_mut(&mut out, n, |c, row| {
        for (cp, v) in row.iter_mut().enumerate() {
            let fwd = (c + n - cp) % n;
            *v = table[fwd.min(n - fwd)];
        }
    });
    Ok(out)
}

/// Cell pairing matrix of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PairingMatrix {
    pub param: usize,
    size: usize,
    values: Vec<f64>,
}

impl PairingMatrix {
    pub fn new(param: usize, size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {size}×{size} matrix",
                values.len()
            )));
        }
        Ok(Self {
            param,
            size,
            values,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size + col]
    }

    pub fn transpose(&self) -> Self {
        let n = self.size;
        let mut values = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                values[c * n + r] = self.values[r * n + c];
            }
        }
        Self {
            param: self.param,
            size: n,
            values,
        }
    }
}

/// Builds the cell pairing matrix of `desc` for parameter `param`.
pub fn build_pairing_matrix(
    desc: &KernelDesc,
    space: &TorusSpace,
    param: usize,
    quad: &QuadratureConfig,
) -> Result<PairingMatrix> {
    let n = space.cells(param);
    if let KernelDesc::Tabulated { size, values } = desc {
        if *size != n {
            return Err(Error::ShapeMismatch(format!(
                "tabulated kernel of size {size} for {n} cells"
            )));
        }
        return PairingMatrix::new(param, n, values.clone());
    }
    if space.dim(param) != 1 {
        return Err(Error::Unsupported(format!(
            "{} kernels are one-dimensional; parameter {param} has dimension {}",
            desc.name(),
            space.dim(param)
        )));
    }
    if quad.order == 0 {
        return Err(Error::Kernel("quadrature order must be positive".into()));
    }
    let values = match desc {
        KernelDesc::PeriodicHilbert => hilbert_matrix(n, &GaussLegendre::new(quad.order)),
        KernelDesc::Modulated { a, b } => modulated_matrix(n, a, b, quad),
        KernelDesc::RoughPower { beta } => rough_matrix(n, *beta, quad)?,
        KernelDesc::Tabulated { .. } => unreachable!(),
    };
    PairingMatrix::new(param, n, values)
}

/// A tensor-product operator `T = T_1 ⊗ … ⊗ T_n`.
#[derive(Clone, Debug)]
pub struct OperatorHandle {
    space: TorusSpace,
    descs: Vec<KernelDesc>,
    matrices: Vec<Arc<PairingMatrix>>,
    adjoint: Vec<bool>,
    scale: f64,
}

impl OperatorHandle {
    pub fn build(space: &TorusSpace, descs: Vec<KernelDesc>, quad: &QuadratureConfig) -> Result<Self> {
        if descs.len() != space.n() {
            return Err(Error::ShapeMismatch(format!(
                "{} kernels for {} parameters",
                descs.len(),
                space.n()
            )));
        }
        let mut matrices: Vec<Arc<PairingMatrix>> = Vec::with_capacity(descs.len());
        for (i, d) in descs.iter().enumerate() {
            let reuse = (0..i).find(|&j| {
                descs[j] == *d && space.dim(j) == space.dim(i)
            });
            let m = match reuse {
                Some(j) => {
                    let mut m = (*matrices[j]).clone();
                    m.param = i;
                    Arc::new(m)
                }
                None => Arc::new(build_pairing_matrix(d, space, i, quad)?),
            };
            matrices.push(m);
        }
        Ok(Self {
            space: space.clone(),
            adjoint: vec![false; descs.len()],
            descs,
            matrices,
            scale: 1.0,
        })
    }

    /// An operator from explicit cell matrices, described as tabulated.
    pub fn from_matrices(space: &TorusSpace, matrices: Vec<PairingMatrix>) -> Result<Self> {
        if matrices.len() != space.n() {
            return Err(Error::ShapeMismatch("one matrix per parameter required".into()));
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.size() != space.cells(i) {
                return Err(Error::ShapeMismatch(format!(
                    "matrix {i} has size {}, expected {}",
                    m.size(),
                    space.cells(i)
                )));
            }
        }
        Ok(Self {
            space: space.clone(),
            descs: matrices
                .iter()
                .map(|m| KernelDesc::Tabulated {
                    size: m.size(),
                    values: m.values().to_vec(),
                })
                .collect(),
            adjoint: vec![false; matrices.len()],
            matrices: matrices
                .into_iter()
                .enumerate()
                .map(|(i, mut m)| {
                    m.param = i;
                    Arc::new(m)
                })
                .collect(),
            scale: 1.0,
        })
    }

    pub fn space(&self) -> &TorusSpace {
        &self.space
    }

    pub fn descs(&self) -> &[KernelDesc] {
        &self.descs
    }

    pub fn adjoint_flags(&self) -> &[bool] {
        &self.adjoint
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `T_S`: transposes the parameters in `params`.
    pub fn partial_adjoint(&self, params: &[usize]) -> Self {
        let mut out = self.clone();
        for &p in params {
            out.adjoint[p] = !out.adjoint[p];
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let all: Vec<usize> = (0..self.space.n()).collect();
        self.partial_adjoint(&all)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale *= a;
        out
    }

    /// Restriction to a subset of the parameters with their flags.
    pub fn restrict(&self, params: &[usize]) -> Result<Self> {
        Ok(Self {
            space: self.space.restrict(params)?,
            descs: params.iter().map(|&p| self.descs[p].clone()).collect(),
            matrices: params.iter().map(|&p| self.matrices[p].clone()).collect(),
            adjoint: params.iter().map(|&p| self.adjoint[p]).collect(),
            scale: if params.contains(&0) { self.scale } else { 1.0 },
        })
    }

    pub fn raw_matrix(&self, param: usize) -> &PairingMatrix {
        &self.matrices[param]
    }

    /// The cell matrix acting in `param`, after the adjoint flag and scale.
    pub fn effective_matrix(&self, param: usize) -> Vec<f64> {
        let m = &self.matrices[param];
        let mut v = if self.adjoint[param] {
            m.transpose().values
        } else {
            m.values.clone()
        };
        if param == 0 && self.scale != 1.0 {
            v.iter_mut().for_each(|x| *x *= self.scale);
        }
        v
    }

    fn factor(&self, param: usize) -> f64 {
        if param == 0 {
            self.scale
        } else {
            1.0
        }
    }

    /// Applies the operator of parameter `param` along `axis` of a dense
    /// array, returning cell values of `T_param u`.
    pub fn apply_axis(&self, data: &[f64], shape: &[usize], axis: usize, param: usize) -> Vec<f64> {
        let m = &self.matrices[param];
        let n = m.size();
        let a = self.factor(param) / self.space.cell_volume(param);
        let vals = &m.values;
        let transpose = self.adjoint[param];
        tensor::map_axis(data, shape, axis, n, |src, dst, w| {
            for r in 0..n {
                for c in 0..n {
                    let coef = if transpose { vals[c * n + r] } else { vals[r * n + c] };
                    if coef != 0.0 {
                        let coef = coef * a;
                        let row = &src[c * w..(c + 1) * w];
                        for (o, &x) in dst[r * w..(r + 1) * w].iter_mut().zip(row) {
                            *o += coef * x;
                        }
                    }
                }
            }
        })
    }

    pub fn apply(&self, f: &MultiFunction) -> Result<MultiFunction> {
        self.check(f.space())?;
        let shape = f.shape();
        let mut data = f.values().to_vec();
        for i in 0..shape.len() {
            data = self.apply_axis(&data, &shape, i, i);
        }
        MultiFunction::new(self.space.clone(), data)
    }

    /// `⟨T f, g⟩`.
    pub fn pair(&self, f: &MultiFunction, g: &MultiFunction) -> Result<f64> {
        self.apply(f)?.inner(g)
    }

    fn check(&self, space: &TorusSpace) -> Result<()> {
        if space.dims() != self.space.dims() || space.depth() != self.space.depth() {
            return Err(Error::ShapeMismatch("operator and function spaces differ".into()));
        }
        Ok(())
    }

    /// `v_iᵀ M_i u_i` for one parameter, with cell-valued vectors.
    pub fn pair_factor(&self, param: usize, u: &[f64], v: &[f64]) -> f64 {
        let m = &self.matrices[param];
        let n = m.size();
        let mut s = 0.0;
        for r in 0..n {
            if v[r] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for c in 0..n {
                let e = if self.adjoint[param] { m.values[c * n + r] } else { m.values[r * n + c] };
                row += e * u[c];
            }
            s += v[r] * row;
        }
        s * self.factor(param)
    }

    /// `⟨T(⊗u_i), ⊗v_i⟩` for tensors of cell-valued factors.
    pub fn pair_tensor(&self, u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
        (0..self.space.n())
            .map(|i| self.pair_factor(i, &u[i], &v[i]))
            .product()
    }

    /// `⟨T(⊗h_{I_i}), ⊗h_{J_i}⟩`.
    pub fn pair_haar(&self, grid: &GridShift, hf: &[HaarFunction], hg: &[HaarFunction]) -> Result<f64> {
        if hf.len() != self.space.n() || hg.len() != self.space.n() {
            return Err(Error::ShapeMismatch("one Haar function per parameter required".into()));
        }
        let u = hf
            .iter()
            .map(|h| h.cells(&self.space, grid))
            .collect::<Result<Vec<_>>>()?;
        let v = hg
            .iter()
            .map(|h| h.cells(&self.space, grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.pair_tensor(&u, &v))
    }

    /// Pairing of orthonormal basis slots, one per parameter.
    pub fn pair_slots(&self, grid: &GridShift, f_slots: &[usize], g_slots: &[usize]) -> Result<f64> {
        let mut total = 1.0;
        for i in 0..self.space.n() {
            let u = basis_vector(&self.space, grid, i, f_slots[i])?;
            let v = basis_vector(&self.space, grid, i, g_slots[i])?;
            total *= self.pair_factor(i, &u, &v);
        }
        Ok(total)
    }

    /// `A[J, I] = ⟨T_i h_I, h_J⟩` over orthonormal slots, row-major in `J`.
    pub fn haar_matrix(&self, grid: &GridShift, param: usize) -> Vec<f64> {
        let n = self.space.cells(param);
        let vol = self.space.cell_volume(param);
        let m = self.effective_matrix(param);
        let g = AxisGrid::of(grid, param);
        let shape = [n, n];
        let a = forward_axis(&m, &shape, 1, g);
        let mut a = forward_axis(&a, &shape, 0, g);
        let s = 1.0 / (vol * vol);
        a.iter_mut().for_each(|x| *x *= s);
        a
    }

    /// `‖T_i‖` on `L²` of parameter `param`.
    pub fn factor_norm(&self, param: usize, iters: usize, seed: u64) -> NormEstimate {
        let n = self.space.cells(param);
        let vol = self.space.cell_volume(param);
        let m: Vec<f64> = self.effective_matrix(param).iter().map(|x| x / vol).collect();
        matrix_norm(&m, n, n, iters, seed)
    }

    /// `‖T‖ = Π ‖T_i‖`, each factor by power iteration.
    pub fn operator_norm(&self, iters: usize, seed: u64) -> NormEstimate {
        let parts: Vec<NormEstimate> = (0..self.space.n())
            .map(|i| self.factor_norm(i, iters, seed.wrapping_add(i as u64)))
            .collect();
        let len = parts.iter().map(|p| p.history.len()).max().unwrap_or(0);
        let history = (0..len)
            .map(|k| {
                parts
                    .iter()
                    .map(|p| p.history.get(k).or(p.history.last()).copied().unwrap_or(0.0))
                    .product()
            })
            .collect();
        NormEstimate {
            value: parts.iter().map(|p| p.value).product(),
            history,
        }
    }
}
