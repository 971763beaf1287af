use multidyadic::carleson::{bmo_lemma_check, carleson_rect};
use multidyadic::cases::make_s;
use multidyadic::grid::{sample_grid, GridShift, TorusSpace};
use multidyadic::haar::{haar_forward, haar_inverse, HaarFunction, MultiFunction};
use multidyadic::io::{read_function, write_function};
use multidyadic::kernel::{OperatorHandle, PairingMatrix};
use multidyadic::paraproduct::{para_adjoint_apply, para_apply, ParaproductSpec};
use multidyadic::representation::{fixed_grid_reconstruct, nested_pairs, ReconstructOptions};
use multidyadic::shift::{saturated_random_provider, shift_norm_check, ShiftSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(space: &TorusSpace, seed: u64) -> MultiFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MultiFunction::new(space.clone(), (0..space.total_cells()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn inner(a: &MultiFunction, b: &MultiFunction) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() * a.space().product_cell_volume()
}

fn random_matrices(space: &TorusSpace, seed: u64) -> Vec<PairingMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..space.n())
        .map(|p| {
            let m = space.cells(p);
            PairingMatrix::new(p, m, (0..m * m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        })
        .collect()
}

fn small_space() -> impl Strategy<Value = TorusSpace> {
    prop_oneof![
        (2u32..=6).prop_map(|l| TorusSpace::uniform(1, l, 0.5, 1).unwrap()),
        (2u32..=4).prop_map(|l| TorusSpace::uniform(2, l, 0.5, 1).unwrap()),
        (2u32..=3).prop_map(|l| TorusSpace::new(vec![2, 1], l, 0.5, 1).unwrap()),
        Just(TorusSpace::uniform(3, 2, 0.5, 1).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn haar_roundtrip_and_parseval(space in small_space(), gs in any::<u64>(), fs in any::<u64>()) {
        let grid = sample_grid(&space, gs);
        let f = random(&space, fs);
        let c = haar_forward(&f, &grid).unwrap();
        let back = haar_inverse(&c, &grid).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let energy: f64 = c.values().iter().map(|v| v * v).sum();
        prop_assert!((energy - f.norm().powi(2)).abs() < 1e-10 * energy.max(1.0));
    }

    #[test]
    fn expansion_is_exact_for_any_tensor_operator(space in small_space(), seed in any::<u64>()) {
        let op = OperatorHandle::from_matrices(&space, random_matrices(&space, seed)).unwrap();
        let grid = sample_grid(&space, seed ^ 1);
        let f = random(&space, seed ^ 2);
        let g = random(&space, seed ^ 3);
        let r = fixed_grid_reconstruct(&op, &f, &g, &grid, ReconstructOptions { buckets: true, cap: None }).unwrap();
        prop_assert!((r.reconstructed - r.direct).abs() < 1e-10 * r.direct.abs().max(1.0));
        let sum: f64 = r.buckets.iter().map(|b| b.value).sum();
        prop_assert!((sum - r.reconstructed).abs() < 1e-10 * r.direct.abs().max(1.0));
    }

    #[test]
    fn paraproduct_adjoint_identity(arity in 1usize..=3, depth in 2u32..=3, seed in any::<u64>()) {
        let space = TorusSpace::uniform(3, depth, 0.5, 1).unwrap();
        let grid = sample_grid(&space, seed);
        let mut acting: Vec<usize> = (0..3).collect();
        acting.rotate_left((seed % 3) as usize);
        acting.truncate(arity);
        let b = random(&space.restrict(&acting).unwrap(), seed ^ 5);
        let spec = ParaproductSpec::new(&space, &grid, &acting, b).unwrap();
        let f = random(&space, seed ^ 6);
        let g = random(&space, seed ^ 7);
        let lhs = inner(&para_apply(&spec, &f).unwrap(), &g);
        let rhs = inner(&f, &para_adjoint_apply(&spec, &g).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn split_identity_holds_pointwise(depth in 2u32..=5, dim in 1u32..=2, seed in any::<u64>()) {
        let space = TorusSpace::new(vec![dim], depth, 0.5, 1).unwrap();
        let grid = sample_grid(&space, seed);
        let pairs = nested_pairs(&space, &grid, 0);
        let (small, big) = &pairs[(seed as usize) % pairs.len()];
        let eps = 1 + (seed >> 8) as u32 % ((1 << dim) - 1);
        let s = make_s(&space, &grid, small, big, eps).unwrap();
        let h = HaarFunction::new(big.clone(), eps).cells(&space, &grid).unwrap();
        let sup = 2.0 * big.volume().powf(-0.5);
        for (hv, sv) in h.iter().zip(&s.values) {
            prop_assert_eq!(*hv, sv + s.average_on_q);
            prop_assert!(sv.abs() <= sup + 1e-12);
        }
        let q = HaarFunction::new(s.q.clone(), 0).cells(&space, &grid).unwrap();
        prop_assert!(q.iter().zip(&s.values).all(|(a, b)| *a == 0.0 || *b == 0.0));
    }

    #[test]
    fn saturated_shifts_are_contractions(n in 1usize..=2, a in 0u32..=2, b in 0u32..=2, seed in any::<u64>()) {
        let space = TorusSpace::uniform(n, 4, 0.5, 1).unwrap();
        let grid = sample_grid(&space, seed);
        let complexity = vec![(a, b); n];
        let provider = saturated_random_provider(&space, &complexity, seed);
        let spec = ShiftSpec::cancellative(&space, &grid, complexity, provider).unwrap();
        prop_assert!(shift_norm_check(&spec, 25, seed).unwrap().value <= 1.0 + 1e-9);
    }

    #[test]
    fn carleson_is_a_seminorm_modulo_constants(space in small_space(), seed in any::<u64>(), lambda in -4.0f64..4.0, c in -3.0f64..3.0) {
        let grid = sample_grid(&space, seed);
        let b = random(&space, seed ^ 9);
        let base = carleson_rect(&b, &grid).unwrap().value;
        let scaled = MultiFunction::new(space.clone(), b.values().iter().map(|v| lambda * v).collect()).unwrap();
        prop_assert!((carleson_rect(&scaled, &grid).unwrap().value - lambda.abs() * base).abs() < 1e-10 * base.max(1.0));
        if space.n() == 1 {
            let shifted = MultiFunction::new(space.clone(), b.values().iter().map(|v| v + c).collect()).unwrap();
            prop_assert!((carleson_rect(&shifted, &grid).unwrap().value - base).abs() < 1e-10 * base.max(1.0));
        }
    }
}

#[test]
fn zero_kernel_has_zero_lemma_ratios() {
    let space = TorusSpace::uniform(3, 4, 0.5, 1).unwrap();
    let zeros = (0..3).map(|p| PairingMatrix::new(p, 16, vec![0.0; 256]).unwrap()).collect();
    let op = OperatorHandle::from_matrices(&space, zeros).unwrap();
    let r = bmo_lemma_check(&op, &GridShift::standard(&space)).unwrap();
    assert!(!r.rows.is_empty());
    assert_eq!(r.max_ratio, 0.0);
}

#[test]
fn function_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let space = TorusSpace::uniform(3, 3, 0.5, 1).unwrap();
    let f = random(&space, 4);
    let path = dir.path().join("f.f64");
    write_function(&path, &f).unwrap();
    assert_eq!(read_function(&path, &space).unwrap(), f);
}
