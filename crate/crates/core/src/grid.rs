//! Dyadic geometry on the finite torus.
//!
//! Each parameter lives on `[0,1)^d` with wraparound. A grid is the standard
//! dyadic grid translated at every scale by accumulated binary shifts; the
//! shift of a level-`k` cube only involves the bits `ω^j` with `j > k`, so at
//! finite depth `L` every realized cube is a union of finest cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Goodness threshold factor used unless a space overrides it.
///
/// With the classical factor 2 and `γ = δ/(2d+2δ)` every cube below level `r`
/// is bad unless `r·γ > 2`, which no desk-scale depth reaches.
pub const DESK_GOODNESS_FACTOR: f64 = 0.25;

/// Largest per-parameter dimension accepted.
pub const MAX_DIM: u32 = 8;

/// Largest per-parameter bit budget `L·d`.
pub const MAX_BITS_PER_PARAM: u32 = 24;

/// The `n`-parameter torus at finite depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusSpace {
    dims: Vec<u32>,
    depth: u32,
    delta: f64,
    r: u32,
    goodness_factor: f64,
}

impl TorusSpace {
    pub fn new(dims: Vec<u32>, depth: u32, delta: f64, r: u32) -> Result<Self> {
        let space = Self {
            dims,
            depth,
            delta,
            r,
            goodness_factor: DESK_GOODNESS_FACTOR,
        };
        space.validate()?;
        Ok(space)
    }

    /// `n` parameters of dimension one.
    pub fn uniform(n: usize, depth: u32, delta: f64, r: u32) -> Result<Self> {
        Self::new(vec![1; n], depth, delta, r)
    }

    pub fn with_goodness_factor(mut self, factor: f64) -> Result<Self> {
        self.goodness_factor = factor;
        self.validate()?;
        Ok(self)
    }

    pub fn with_r(mut self, r: u32) -> Result<Self> {
        self.r = r;
        self.validate()?;
        Ok(self)
    }

    pub fn with_depth(mut self, depth: u32) -> Result<Self> {
        self.depth = depth;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidSpace("need at least one parameter".into()));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d == 0 || d > MAX_DIM) {
            return Err(Error::InvalidSpace(format!(
                "dimension {d} outside 1..={MAX_DIM}"
            )));
        }
        if !(2..=16).contains(&self.depth) {
            return Err(Error::InvalidSpace(format!(
                "depth {} outside 2..=16",
                self.depth
            )));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d * self.depth > MAX_BITS_PER_PARAM) {
            return Err(Error::InvalidSpace(format!(
                "depth {} with dimension {d} exceeds {MAX_BITS_PER_PARAM} bits per parameter",
                self.depth
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidSpace(format!(
                "delta {} outside (0,1)",
                self.delta
            )));
        }
        if self.r == 0 {
            return Err(Error::InvalidSpace("r must be at least 1".into()));
        }
        if !(self.goodness_factor > 0.0 && self.goodness_factor.is_finite()) {
            return Err(Error::InvalidSpace(format!(
                "goodness factor {} must be positive",
                self.goodness_factor
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn dim(&self, param: usize) -> u32 {
        self.dims[param]
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn goodness_factor(&self) -> f64 {
        self.goodness_factor
    }

    /// `γ_i = δ/(2d_i + 2δ)`.
    pub fn gamma(&self, param: usize) -> f64 {
        let d = self.dims[param] as f64;
        self.delta / (2.0 * d + 2.0 * self.delta)
    }

    /// Finest cells in one parameter, `2^{L·d_i}`.
    pub fn cells(&self, param: usize) -> usize {
        1usize << (self.depth * self.dims[param])
    }

    /// Cell counts per parameter.
    pub fn shape(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.cells(i)).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.shape().iter().product()
    }

    /// Volume of one finest cell in parameter `param`.
    pub fn cell_volume(&self, param: usize) -> f64 {
        (-((self.depth * self.dims[param]) as f64)).exp2()
    }

    /// Volume of one finest cell of the product torus.
    pub fn product_cell_volume(&self) -> f64 {
        (0..self.n()).map(|i| self.cell_volume(i)).product()
    }

    /// The space formed by a subset of the parameters, in the given order.
    pub fn restrict(&self, params: &[usize]) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidSpace("empty parameter subset".into()));
        }
        let dims = params
            .iter()
            .map(|&p| {
                self.dims
                    .get(p)
                    .copied()
                    .ok_or_else(|| Error::InvalidSpace(format!("no parameter {p}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims,
            ..self.clone()
        })
    }
}

/// Random shift `ω = (ω_i^j)` of every parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridShift {
    seed: u64,
    dims: Vec<u32>,
    depth: u32,
    /// `bits[i][j - 1]` is `ω_i^j`, a `d_i`-bit pattern.
    bits: Vec<Vec<u32>>,
}

impl GridShift {
    /// The unshifted grid `D^0`.
    pub fn standard(space: &TorusSpace) -> Self {
        Self {
            seed: 0,
            dims: space.dims().to_vec(),
            depth: space.depth(),
            bits: space
                .dims()
                .iter()
                .map(|_| vec![0; space.depth() as usize])
                .collect(),
        }
    }

    /// Builds a grid from explicit patterns, `bits[i][j-1] = ω_i^j`.
    pub fn from_bits(space: &TorusSpace, seed: u64, bits: Vec<Vec<u32>>) -> Result<Self> {
        if bits.len() != space.n() {
            return Err(Error::GridMismatch(format!(
                "{} parameters given, space has {}",
                bits.len(),
                space.n()
            )));
        }
        for (i, seq) in bits.iter().enumerate() {
            if seq.len() != space.depth() as usize {
                return Err(Error::GridMismatch(format!(
                    "parameter {i} has {} levels, expected {}",
                    seq.len(),
                    space.depth()
                )));
            }
            let limit = 1u32 << space.dim(i);
            if let Some(b) = seq.iter().find(|&&b| b >= limit) {
                return Err(Error::GridMismatch(format!(
                    "pattern {b} too wide for dimension {}",
                    space.dim(i)
                )));
            }
        }
        Ok(Self {
            seed,
            dims: space.dims().to_vec(),
            depth: space.depth(),
            bits,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    /// `ω_i^j` for `1 ≤ j ≤ L`.
    pub fn omega(&self, param: usize, j: u32) -> u32 {
        self.bits[param][(j - 1) as usize]
    }

    pub fn bits(&self, param: usize) -> &[u32] {
        &self.bits[param]
    }

    /// Offset of the level-`k` grid in coordinate `coord`, in finest cells:
    /// `Σ_{j=k+1}^{L} 2^{L-j} ω^j_coord`.
    pub fn offset_cells(&self, param: usize, level: u32, coord: u32) -> u64 {
        let mut t = 0u64;
        for j in (level + 1)..=self.depth {
            let bit = (self.omega(param, j) >> coord) & 1;
            t += (bit as u64) << (self.depth - j);
        }
        t
    }

    /// Checks that the grid is usable with `space`.
    pub fn check(&self, space: &TorusSpace) -> Result<()> {
        if self.dims != space.dims() || self.depth != space.depth() {
            return Err(Error::GridMismatch(format!(
                "grid dims {:?} depth {} vs space dims {:?} depth {}",
                self.dims,
                self.depth,
                space.dims(),
                space.depth()
            )));
        }
        Ok(())
    }

    /// Grid on a subset of the parameters.
    pub fn restrict(&self, params: &[usize]) -> Self {
        Self {
            seed: self.seed,
            dims: params.iter().map(|&p| self.dims[p]).collect(),
            depth: self.depth,
            bits: params.iter().map(|&p| self.bits[p].clone()).collect(),
        }
    }

    pub fn to_record(&self) -> GridRecord {
        let bits = self
            .bits
            .iter()
            .zip(&self.dims)
            .map(|(seq, &d)| {
                let total = seq.len() * d as usize;
                let mut bytes = vec![0u8; total.div_ceil(8)];
                for (j, &pattern) in seq.iter().enumerate() {
                    for t in 0..d as usize {
                        if (pattern >> t) & 1 == 1 {
                            let pos = j * d as usize + t;
                            bytes[pos / 8] |= 1 << (pos % 8);
                        }
                    }
                }
                hex::encode(bytes)
            })
            .collect();
        GridRecord {
            seed: self.seed,
            n: self.n(),
            depth: self.depth,
            dims: self.dims.clone(),
            bits,
        }
    }

    pub fn from_record(record: &GridRecord) -> Result<Self> {
        if record.bits.len() != record.n || record.dims.len() != record.n {
            return Err(Error::GridMismatch("record arity mismatch".into()));
        }
        let mut bits = Vec::with_capacity(record.n);
        for (hexbits, &d) in record.bits.iter().zip(&record.dims) {
            let bytes = hex::decode(hexbits)
                .map_err(|e| Error::GridMismatch(format!("bad hex: {e}")))?;
            let mut seq = vec![0u32; record.depth as usize];
            for (j, slot) in seq.iter_mut().enumerate() {
                for t in 0..d as usize {
                    let pos = j * d as usize + t;
                    let byte = bytes
                        .get(pos / 8)
                        .ok_or_else(|| Error::GridMismatch("bit string too short".into()))?;
                    if (byte >> (pos % 8)) & 1 == 1 {
                        *slot |= 1 << t;
                    }
                }
            }
            bits.push(seq);
        }
        Ok(Self {
            seed: record.seed,
            dims: record.dims.clone(),
            depth: record.depth,
            bits,
        })
    }
}

/// Serialized form of a [`GridShift`]. Bits of `ω^j` occupy positions
/// `[(j-1)d, jd)` of a little-endian bit string, hex encoded per parameter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRecord {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "L")]
    pub depth: u32,
    pub dims: Vec<u32>,
    pub bits: Vec<String>,
}

/// Draws every `ω_i^j` uniformly from `{0,1}^{d_i}`.
pub fn sample_grid(space: &TorusSpace, seed: u64) -> GridShift {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = space
        .dims()
        .iter()
        .map(|&d| {
            (0..space.depth())
                .map(|_| rng.random_range(0..(1u32 << d)))
                .collect()
        })
        .collect();
    GridShift {
        seed,
        dims: space.dims().to_vec(),
        depth: space.depth(),
        bits,
    }
}

/// Derives a per-sample seed from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A dyadic cube of one parameter, in standard (unshifted) coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub param: usize,
    pub level: u32,
    /// Integer position per coordinate, each in `[0, 2^level)`.
    pub pos: Vec<u32>,
}

impl DyadicCube {
    pub fn new(param: usize, level: u32, pos: Vec<u32>) -> Self {
        Self { param, level, pos }
    }

    /// Builds a cube from a flat position (coordinate 0 most significant).
    pub fn from_flat(param: usize, level: u32, dim: u32, flat: usize) -> Self {
        let mut pos = vec![0u32; dim as usize];
        let mask = (1usize << level) - 1;
        for t in 0..dim as usize {
            let shift = level as usize * (dim as usize - 1 - t);
            pos[t] = ((flat >> shift) & mask) as u32;
        }
        Self { param, level, pos }
    }

    pub fn flat(&self) -> usize {
        self.pos
            .iter()
            .fold(0usize, |acc, &p| (acc << self.level) | p as usize)
    }

    pub fn dim(&self) -> u32 {
        self.pos.len() as u32
    }

    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn volume(&self) -> f64 {
        (-((self.level * self.dim()) as f64)).exp2()
    }

    /// Parent in the same grid, if any. The position relation depends on the
    /// shift bit at this cube's level.
    pub fn parent(&self, grid: &GridShift) -> Option<Self> {
        if self.level == 0 {
            return None;
        }
        let w = grid.omega(self.param, self.level);
        let modulus = 1u32 << self.level;
        let pos = self
            .pos
            .iter()
            .enumerate()
            .map(|(t, &q)| {
                let b = (w >> t) & 1;
                ((q + modulus - b) % modulus) / 2
            })
            .collect();
        Some(Self {
            param: self.param,
            level: self.level - 1,
            pos,
        })
    }

    /// The ancestor at `level`.
    pub fn ancestor(&self, grid: &GridShift, level: u32) -> Self {
        let mut c = self.clone();
        while c.level > level {
            c = c.parent(grid).expect("level > 0");
        }
        c
    }

    /// Child with offset `eps` (bit `t` set means upper half in coordinate `t`).
    pub fn child(&self, grid: &GridShift, eps: u32) -> Self {
        let w = grid.omega(self.param, self.level + 1);
        let modulus = 1u32 << (self.level + 1);
        let pos = self
            .pos
            .iter()
            .enumerate()
            .map(|(t, &p)| (2 * p + ((w >> t) & 1) + ((eps >> t) & 1)) % modulus)
            .collect();
        Self {
            param: self.param,
            level: self.level + 1,
            pos,
        }
    }

    /// All cubes of one parameter at `level`.
    pub fn all_at(param: usize, level: u32, dim: u32) -> impl Iterator<Item = Self> {
        (0..1usize << (level * dim)).map(move |f| Self::from_flat(param, level, dim, f))
    }
}

/// A realized cube in finest-cell units: coordinate `t` covers
/// `start[t] .. start[t] + len` modulo `2^L`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub start: Vec<u64>,
    pub len: u64,
    pub depth: u32,
}

impl CellBox {
    pub fn modulus(&self) -> u64 {
        1u64 << self.depth
    }

    /// Left endpoints in `[0,1)`.
    pub fn left(&self) -> Vec<f64> {
        let m = self.modulus() as f64;
        self.start.iter().map(|&s| s as f64 / m).collect()
    }

    pub fn side(&self) -> f64 {
        self.len as f64 / self.modulus() as f64
    }

    pub fn contains_cell_coord(&self, coord: usize, cell: u64) -> bool {
        let m = self.modulus();
        (cell + m - self.start[coord]) % m < self.len
    }

    /// Is `other` contained in `self`?
    pub fn contains(&self, other: &CellBox) -> bool {
        let m = self.modulus();
        other.len <= self.len
            && self
                .start
                .iter()
                .zip(&other.start)
                .all(|(&a, &b)| (b + m - a) % m + other.len <= self.len)
    }

    /// Flat cell indices covered (coordinate 0 most significant).
    pub fn cells(&self) -> Vec<usize> {
        let m = self.modulus();
        let mut out = vec![0usize];
        for &s in &self.start {
            let mut next = Vec::with_capacity(out.len() * self.len as usize);
            for &base in &out {
                for o in 0..self.len {
                    next.push(base * m as usize + ((s + o) % m) as usize);
                }
            }
            out = next;
        }
        out
    }
}

/// `I ∔ ω`: the standard cube translated by `Σ_{j: 2^{-j} < ℓ(I)} 2^{-j} ω^j`.
pub fn realize_cube(grid: &GridShift, cube: &DyadicCube) -> Result<CellBox> {
    if cube.level > grid.depth() {
        return Err(Error::LevelOutOfRange {
            level: cube.level,
            depth: grid.depth(),
        });
    }
    let depth = grid.depth();
    let m = 1u64 << depth;
    let len = 1u64 << (depth - cube.level);
    let start = cube
        .pos
        .iter()
        .enumerate()
        .map(|(t, &p)| (p as u64 * len + grid.offset_cells(cube.param, cube.level, t as u32)) % m)
        .collect();
    Ok(CellBox { start, len, depth })
}

/// Per-coordinate wrapped gap between two boxes, in cells; 0 when they meet.
fn coord_gap(a0: u64, la: u64, b0: u64, lb: u64, m: u64) -> u64 {
    let s = (b0 + m - a0) % m;
    if s < la || s + lb > m {
        0
    } else {
        (s - la).min(m - s - lb)
    }
}

/// Minimal wrapped distance between two boxes of the same parameter.
pub fn torus_distance(a: &CellBox, b: &CellBox) -> f64 {
    debug_assert_eq!(a.depth, b.depth);
    let m = a.modulus();
    let sq: f64 = a
        .start
        .iter()
        .zip(&b.start)
        .map(|(&a0, &b0)| {
            let g = coord_gap(a0, a.len, b0, b.len, m) as f64 / m as f64;
            g * g
        })
        .sum();
    sq.sqrt()
}

/// Goodness threshold `c · ℓ(I)^γ ℓ(Ĩ)^{1-γ}` for a level-`k` cube against a
/// level-`m` cube.
pub fn goodness_threshold(space: &TorusSpace, param: usize, level: u32, coarse: u32) -> f64 {
    let g = space.gamma(param);
    let small = (-(level as f64)).exp2();
    let big = (-(coarse as f64)).exp2();
    space.goodness_factor() * small.powf(g) * big.powf(1.0 - g)
}

/// A cube is bad if some cube `Ĩ` with `ℓ(Ĩ) ≥ 2^r ℓ(I)` has its boundary
/// within the goodness threshold. The level-0 cube is the whole torus and
/// has no boundary, so only levels `1..=k-r` are searched.
pub fn is_good(space: &TorusSpace, grid: &GridShift, cube: &DyadicCube) -> bool {
    let k = cube.level;
    if k <= space.r() {
        return true;
    }
    let depth = grid.depth();
    let m_all = 1u64 << depth;
    let len = 1u64 << (depth - k);
    let starts: Vec<u64> = cube
        .pos
        .iter()
        .enumerate()
        .map(|(t, &p)| (p as u64 * len + grid.offset_cells(cube.param, k, t as u32)) % m_all)
        .collect();
    for m in 1..=(k - space.r()) {
        let big = 1u64 << (depth - m);
        let gap = starts
            .iter()
            .enumerate()
            .map(|(t, &s)| {
                let base = grid.offset_cells(cube.param, m, t as u32) % big;
                let o = ((s + m_all - base) % m_all) % big;
                o.min(big - o - len)
            })
            .min()
            .unwrap_or(0);
        let dist = gap as f64 / m_all as f64;
        if dist <= goodness_threshold(space, cube.param, k, m) {
            return false;
        }
    }
    true
}

/// Exact probability that a level-`k` cube of parameter `param` is good,
/// by enumerating the shift bits that decide goodness.
pub fn exact_pi_good(space: &TorusSpace, param: usize, level: u32) -> f64 {
    let k = level;
    if k <= space.r() {
        return 1.0;
    }
    // Goodness per coordinate depends on ω^2..ω^k only (m ≥ 1).
    let free = (k - 1) as usize;
    let total = 1u64 << free;
    let good: u64 = (0..total)
        .filter(|&w| {
            (1..=(k - space.r())).all(|m| {
                let modulus = 1u64 << (k - m);
                // Σ_{j=m+1}^{k} w_j 2^{k-j}, with bit (j-2) of w holding w_j.
                let mut acc = 0u64;
                for j in (m + 1)..=k {
                    let b = (w >> (j - 2)) & 1;
                    acc += b << (k - j);
                }
                let o = (modulus - acc % modulus) % modulus;
                let gap = o.min(modulus - o - 1);
                let dist = gap as f64 * (-(k as f64)).exp2();
                dist > goodness_threshold(space, param, k, m)
            })
        })
        .count() as u64;
    let per_coord = good as f64 / total as f64;
    per_coord.powi(space.dim(param) as i32)
}

/// Monte Carlo estimate of a goodness probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiEstimate {
    pub p: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Estimates `P_ω(level-k cube at `pos` is good)` from `samples` random grids.
pub fn estimate_pi_good_at(
    space: &TorusSpace,
    param: usize,
    cube: &DyadicCube,
    samples: usize,
    seed: u64,
) -> PiEstimate {
    let samples = samples.max(1);
    let hits = par::map_range(samples, |s| {
        let grid = sample_grid(space, derive_seed(seed, s as u64));
        let c = DyadicCube {
            param,
            ..cube.clone()
        };
        is_good(space, &grid, &c) as u32
    });
    let count: u64 = hits.iter().map(|&h| h as u64).sum();
    let p = count as f64 / samples as f64;
    PiEstimate {
        p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    }
}

/// Estimates `π_good` at `level` using the cube at the origin.
pub fn estimate_pi_good(
    space: &TorusSpace,
    param: usize,
    level: u32,
    samples: usize,
    seed: u64,
) -> PiEstimate {
    let cube = DyadicCube::new(param, level, vec![0; space.dim(param) as usize]);
    estimate_pi_good_at(space, param, &cube, samples, seed)
}
