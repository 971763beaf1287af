//! Pair geometry: separated / inside / equal / near classification, dyadic
//! joins and the `s`-functions splitting a coarse Haar function around a
//! child.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{is_good, realize_cube, torus_distance, DyadicCube, GridShift, TorusSpace};
use crate::haar::{Basis1d, BasisElem, HaarFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Separated,
    Inside,
    Equal,
    Near,
}

/// Which side holds the smaller cube; ties belong to the `I` side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    /// `ℓ(I) ≤ ℓ(J)`.
    ISmaller,
    /// `ℓ(I) > ℓ(J)`.
    JSmaller,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CasePair {
    pub param: usize,
    pub case: Case,
    pub orientation: Orientation,
}

/// Number of distinct `(case, orientation)` buckets per parameter.
pub const BUCKETS: usize = 7;

impl CasePair {
    /// Compact bucket index in `0..BUCKETS`.
    pub fn bucket(&self) -> usize {
        let o = (self.orientation == Orientation::JSmaller) as usize;
        match self.case {
            Case::Separated => o,
            Case::Inside => 2 + o,
            Case::Equal => 4,
            Case::Near => 5 + o,
        }
    }

    pub fn from_bucket(param: usize, b: usize) -> Self {
        let (case, o) = match b {
            0 | 1 => (Case::Separated, b),
            2 | 3 => (Case::Inside, b - 2),
            4 => (Case::Equal, 0),
            5 | 6 => (Case::Near, b - 5),
            _ => panic!("bucket {b} out of range"),
        };
        Self {
            param,
            case,
            orientation: if o == 0 {
                Orientation::ISmaller
            } else {
                Orientation::JSmaller
            },
        }
    }

    pub fn label(&self) -> String {
        let case = match self.case {
            Case::Separated => "separated",
            Case::Inside => "inside",
            Case::Equal => "equal",
            Case::Near => "near",
        };
        match (self.case, self.orientation) {
            (Case::Equal, _) => case.to_string(),
            (_, Orientation::ISmaller) => format!("{case}<"),
            (_, Orientation::JSmaller) => format!("{case}>"),
        }
    }
}

/// Separation threshold `ℓ(small)^γ ℓ(big)^{1−γ}`.
pub fn separation_threshold(space: &TorusSpace, param: usize, small: u32, big: u32) -> f64 {
    let g = space.gamma(param);
    let ls = (-(small as f64)).exp2();
    let lb = (-(big as f64)).exp2();
    ls.powf(g) * lb.powf(1.0 - g)
}

/// Classifies two cubes of the same parameter and grid.
pub fn classify_pair(space: &TorusSpace, grid: &GridShift, i: &DyadicCube, j: &DyadicCube) -> Result<CasePair> {
    if i.param != j.param {
        return Err(Error::ShapeMismatch("cubes from different parameters".into()));
    }
    let param = i.param;
    let orientation = if i.level >= j.level {
        Orientation::ISmaller
    } else {
        Orientation::JSmaller
    };
    let pair = |case, orientation| Ok(CasePair { param, case, orientation });
    if i == j {
        return pair(Case::Equal, Orientation::ISmaller);
    }
    let bi = realize_cube(grid, i)?;
    let bj = realize_cube(grid, j)?;
    if bj.contains(&bi) {
        return pair(Case::Inside, Orientation::ISmaller);
    }
    if bi.contains(&bj) {
        return pair(Case::Inside, Orientation::JSmaller);
    }
    let (small, big) = if i.level >= j.level {
        (i.level, j.level)
    } else {
        (j.level, i.level)
    };
    let d = torus_distance(&bi, &bj);
    if d > separation_threshold(space, param, small, big) {
        pair(Case::Separated, orientation)
    } else {
        pair(Case::Near, orientation)
    }
}

/// Classifies two orthonormal basis slots. The average slot is coarser than
/// every cube and contains it.
pub fn classify_slots(space: &TorusSpace, grid: &GridShift, param: usize, si: usize, sj: usize) -> Result<CasePair> {
    let b = Basis1d::of(space, param);
    let pair = |case, orientation| Ok(CasePair { param, case, orientation });
    match (b.decode(si), b.decode(sj)) {
        (BasisElem::Average, BasisElem::Average) => pair(Case::Equal, Orientation::ISmaller),
        (BasisElem::Average, _) => pair(Case::Inside, Orientation::JSmaller),
        (_, BasisElem::Average) => pair(Case::Inside, Orientation::ISmaller),
        (BasisElem::Haar { level: li, pos: pi, .. }, BasisElem::Haar { level: lj, pos: pj, .. }) => {
            let i = DyadicCube::from_flat(param, li, b.dim, pi);
            let j = DyadicCube::from_flat(param, lj, b.dim, pj);
            classify_pair(space, grid, &i, &j)
        }
    }
}

/// Level rank of a slot: `-1` for the average, the cube level otherwise.
pub fn slot_rank(basis: &Basis1d, slot: usize) -> i32 {
    basis.level_of(slot).map_or(-1, |l| l as i32)
}

/// Smallest common ancestor `I ∨ J`.
pub fn join(grid: &GridShift, i: &DyadicCube, j: &DyadicCube) -> DyadicCube {
    let level = i.level.min(j.level);
    let mut a = i.ancestor(grid, level);
    let mut b = j.ancestor(grid, level);
    while a != b {
        a = a.parent(grid).expect("level 0 is common");
        b = b.parent(grid).expect("level 0 is common");
    }
    a
}

/// Level of the join of two slots; the average slot counts as level 0.
pub fn join_level(grid: &GridShift, basis: &Basis1d, param: usize, si: usize, sj: usize) -> u32 {
    match (basis.decode(si), basis.decode(sj)) {
        (BasisElem::Haar { level: li, pos: pi, .. }, BasisElem::Haar { level: lj, pos: pj, .. }) => {
            let i = DyadicCube::from_flat(param, li, basis.dim, pi);
            let j = DyadicCube::from_flat(param, lj, basis.dim, pj);
            join(grid, &i, &j).level
        }
        _ => 0,
    }
}

/// Complexity `max(level_I, level_J) − level(I ∨ J)` of a slot pair.
pub fn slot_complexity(grid: &GridShift, basis: &Basis1d, param: usize, si: usize, sj: usize) -> u32 {
    let li = basis.level_of(si).unwrap_or(0);
    let lj = basis.level_of(sj).unwrap_or(0);
    li.max(lj) - join_level(grid, basis, param, si, sj)
}

/// Which cube must be good for a pair to be counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmConvention {
    /// The cube of smaller side, ties going to the `f` side.
    #[default]
    SmallerCube,
    /// Always the `f`-side cube.
    FSide,
}

/// `true` when the designated cube of the pair is the `f`-side slot.
pub fn designates_f_side(convention: SmConvention, basis: &Basis1d, si: usize, sj: usize) -> bool {
    match convention {
        SmConvention::FSide => true,
        SmConvention::SmallerCube => slot_rank(basis, si) >= slot_rank(basis, sj),
    }
}

/// Goodness of an orthonormal slot; the average slot is always good.
pub fn slot_is_good(space: &TorusSpace, grid: &GridShift, param: usize, slot: usize) -> bool {
    let b = Basis1d::of(space, param);
    match b.decode(slot) {
        BasisElem::Average => true,
        BasisElem::Haar { level, pos, .. } => {
            is_good(space, grid, &DyadicCube::from_flat(param, level, b.dim, pos))
        }
    }
}

/// `s = χ_{Q^c}(h_big − ⟨h_big⟩_Q)` with `Q` the child of `big` containing
/// `small`.
#[derive(Clone, Debug, PartialEq)]
pub struct SFunction {
    pub small: DyadicCube,
    pub big: DyadicCube,
    pub q: DyadicCube,
    pub eps: u32,
    /// Value of `h_big` on `Q`.
    pub average_on_q: f64,
    /// Cell values on the parameter's torus.
    pub values: Vec<f64>,
}

pub fn make_s(
    space: &TorusSpace,
    grid: &GridShift,
    small: &DyadicCube,
    big: &DyadicCube,
    eps: u32,
) -> Result<SFunction> {
    if small.param != big.param || small.level <= big.level {
        return Err(Error::NotNested(format!(
            "level {} cube is not strictly below level {}",
            small.level, big.level
        )));
    }
    let q = small.ancestor(grid, big.level + 1);
    if q.parent(grid).as_ref() != Some(big) {
        return Err(Error::NotNested("small cube lies outside the big cube".into()));
    }
    let h = HaarFunction::new(big.clone(), eps).cells(space, grid)?;
    let qb = realize_cube(grid, &q)?;
    let qcells = qb.cells();
    let avg = h[qcells[0]];
    let mut values: Vec<f64> = h.iter().map(|v| v - avg).collect();
    for c in qcells {
        values[c] = 0.0;
    }
    Ok(SFunction {
        small: small.clone(),
        big: big.clone(),
        q,
        eps,
        average_on_q: avg,
        values,
    })
}
