use std::collections::BTreeMap;

use multidyadic::cases::{classify_slots, make_s, SmConvention};
use multidyadic::grid::{sample_grid, DyadicCube, GridShift, TorusSpace};
use multidyadic::haar::{basis_vector, HaarFunction, MultiFunction};
use multidyadic::kernel::{OperatorHandle, QuadratureConfig};
use multidyadic::registry::lookup;
use multidyadic::representation::{
    eight_term_split, fixed_grid_reconstruct, mc_reconstruct, nested_pairs, term_viii_symbol, truncated_representation,
    McOptions, NestedTriple, ReconstructOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn operator(name: &str, space: &TorusSpace) -> OperatorHandle {
    OperatorHandle::build(space, lookup(name, space.n()).unwrap(), &QuadratureConfig::default()).unwrap()
}

fn random(space: &TorusSpace, seed: u64) -> MultiFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MultiFunction::new(space.clone(), (0..space.total_cells()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn inner(a: &MultiFunction, b: &MultiFunction) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() * a.space().product_cell_volume()
}

#[test]
fn buckets_match_slot_by_slot_sum() {
    let space = TorusSpace::uniform(2, 3, 0.5, 1).unwrap();
    let op = operator("hilbert2", &space);
    let grid = sample_grid(&space, 12);
    let f = random(&space, 1);
    let g = random(&space, 2);
    let m = space.cells(0);
    let bv = |p: usize, i: usize| basis_vector(&space, &grid, p, i).unwrap();
    let coef = |h: &MultiFunction, i: usize, j: usize| inner(h, &MultiFunction::from_tensor(&space, &[bv(0, i), bv(1, j)]).unwrap());
    let mut want: BTreeMap<Vec<String>, f64> = BTreeMap::new();
    for i0 in 0..m {
        for i1 in 0..m {
            let fi = coef(&f, i0, i1);
            for j0 in 0..m {
                for j1 in 0..m {
                    let a = op.pair_tensor(&[bv(0, i0), bv(1, i1)], &[bv(0, j0), bv(1, j1)]);
                    let key = vec![
                        classify_slots(&space, &grid, 0, i0, j0).unwrap().label(),
                        classify_slots(&space, &grid, 1, i1, j1).unwrap().label(),
                    ];
                    *want.entry(key).or_default() += fi * coef(&g, j0, j1) * a;
                }
            }
        }
    }
    let r = fixed_grid_reconstruct(&op, &f, &g, &grid, ReconstructOptions { buckets: true, cap: None }).unwrap();
    let got: BTreeMap<Vec<String>, f64> = r.buckets.iter().map(|b| (b.cases.clone(), b.value)).collect();
    for (k, v) in &want {
        let x = got.get(k).copied().unwrap_or(0.0);
        assert!((x - v).abs() < 1e-12, "{k:?}: {x} vs {v}");
    }
    assert!(got.keys().all(|k| want.contains_key(k)));
    assert!(r.relative_error < 1e-12);
}

fn all_triples(space: &TorusSpace, grid: &GridShift) -> Vec<NestedTriple> {
    let per: Vec<_> = (0..3).map(|p| nested_pairs(space, grid, p)).collect();
    let h = |c: &DyadicCube| HaarFunction::new(c.clone(), 1);
    let mut out = Vec::new();
    for (s0, b0) in &per[0] {
        for (s1, b1) in &per[1] {
            for (s2, b2) in &per[2] {
                out.push(NestedTriple {
                    i: [h(s0), h(s1), h(b2)],
                    j: [h(b0), h(b1), h(s2)],
                });
            }
        }
    }
    out
}

#[test]
fn term_viii_is_the_symbol_pairing() {
    let space = TorusSpace::uniform(3, 3, 0.5, 1).unwrap();
    let op = operator("modulated3", &space);
    let grid = sample_grid(&space, 8);
    let symbol = term_viii_symbol(&op).unwrap();
    let mut largest: f64 = 0.0;
    for t in all_triples(&space, &grid) {
        let terms = eight_term_split(&op, &grid, &t).unwrap();
        let mut avg = 1.0;
        for p in 0..3 {
            let (small, big) = if p < 2 { (&t.i[p], &t.j[p]) } else { (&t.j[p], &t.i[p]) };
            avg *= make_s(&space, &grid, &small.cube, &big.cube, big.eps).unwrap().average_on_q;
        }
        let h: Vec<Vec<f64>> = [&t.i[0], &t.i[1], &t.j[2]].iter().map(|h| h.cells(&space, &grid).unwrap()).collect();
        let want = avg * inner(&symbol, &MultiFunction::from_tensor(&space, &h).unwrap());
        assert!((terms.terms[7] - want).abs() < 1e-11, "{} vs {want}", terms.terms[7]);
        largest = largest.max(want.abs());
    }
    assert!(largest > 1e-3);
}

#[test]
fn each_term_is_an_explicit_pairing() {
    let space = TorusSpace::uniform(3, 3, 0.5, 1).unwrap();
    let op = operator("hilbert3", &space);
    let grid = sample_grid(&space, 2);
    let triples = all_triples(&space, &grid);
    for t in triples.iter().step_by(7) {
        let terms = eight_term_split(&op, &grid, t).unwrap();
        let mut parts = Vec::new();
        for p in 0..3 {
            let (small, big) = if p < 2 { (&t.i[p], &t.j[p]) } else { (&t.j[p], &t.i[p]) };
            let s = make_s(&space, &grid, &small.cube, &big.cube, big.eps).unwrap();
            let avg = vec![s.average_on_q; space.cells(p)];
            parts.push((small.cells(&space, &grid).unwrap(), [s.values, avg]));
        }
        for (k, term) in terms.terms.iter().enumerate() {
            let mut u = Vec::new();
            let mut v = Vec::new();
            for (p, (small, pieces)) in parts.iter().enumerate() {
                let big = pieces[(k >> (2 - p)) & 1].clone();
                if p < 2 {
                    u.push(small.clone());
                    v.push(big);
                } else {
                    u.push(big);
                    v.push(small.clone());
                }
            }
            let want = op.pair_tensor(&u, &v);
            assert!((term - want).abs() < 1e-12, "term {k}: {term} vs {want}");
        }
        let sum: f64 = terms.terms.iter().sum();
        assert!((sum - terms.direct).abs() < 1e-12);
    }
}

#[test]
fn truncation_converges_to_full_expansion() {
    let space = TorusSpace::uniform(2, 4, 0.5, 1).unwrap();
    let op = operator("hilbert2", &space);
    let grid = sample_grid(&space, 6);
    let f = random(&space, 3);
    let g = random(&space, 4);
    let full = fixed_grid_reconstruct(&op, &f, &g, &grid, ReconstructOptions::default()).unwrap();
    let mut bounds = Vec::new();
    for cap in 0..space.depth() {
        let t = truncated_representation(&op, &f, &g, &grid, cap).unwrap();
        bounds.push(t.tail_bound.unwrap());
    }
    let last = truncated_representation(&op, &f, &g, &grid, space.depth() - 1).unwrap();
    assert!((last.reconstructed - full.reconstructed).abs() < 1e-12);
    assert!(bounds.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn monte_carlo_is_reproducible_and_bucketed() {
    let space = TorusSpace::uniform(2, 4, 0.5, 2).unwrap();
    let op = operator("hilbert2", &space);
    let f = random(&space, 5);
    let g = random(&space, 6);
    let opts = McOptions {
        samples: 12,
        seed: 99,
        convention: SmConvention::FSide,
        buckets: true,
    };
    let a = mc_reconstruct(&op, &f, &g, opts).unwrap();
    let b = mc_reconstruct(&op, &f, &g, opts).unwrap();
    assert_eq!(a, b);
    let sum: f64 = a.buckets.iter().map(|b| b.value).sum();
    assert!((sum - a.reconstructed).abs() < 1e-12 * a.reconstructed.abs().max(1.0));
    assert_eq!(a.samples, 12);
}
