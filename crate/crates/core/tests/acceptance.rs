use std::time::Instant;

use multidyadic::carleson::bmo_lemma_check;
use multidyadic::cases::{make_s, Case, SmConvention};
use multidyadic::certify::{certify_all, check_size_holder, CertConfig, KernelModel};
use multidyadic::grid::{derive_seed, sample_grid, DyadicCube, GridShift, TorusSpace};
use multidyadic::haar::{haar_forward, HaarFunction, MultiFunction};
use multidyadic::kernel::{KernelDesc, OperatorHandle, QuadratureConfig};
use multidyadic::paraproduct::{para_norm_vs_bmo, ParaproductSpec};
use multidyadic::registry::lookup;
use multidyadic::representation::{
    eight_term_split, fixed_grid_reconstruct, mc_reconstruct, nested_pairs, truncated_representation, McOptions,
    NestedTriple, ReconstructOptions,
};
use multidyadic::shift::{extract_shift_coefficients, saturated_random_provider, shift_apply_values, shift_norm_check, ShiftSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, name: &str, pass: bool, detail: String) -> bool {
    println!("AC{id} {name}: {}  {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn operator(name: &str, space: &TorusSpace) -> OperatorHandle {
    OperatorHandle::build(space, lookup(name, space.n()).unwrap(), &QuadratureConfig::default()).unwrap()
}

fn random_function(space: &TorusSpace, seed: u64) -> MultiFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..space.total_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MultiFunction::new(space.clone(), v).unwrap()
}

/// Ratios at rounding level count as zero.
const NOISE_FLOOR: f64 = 1e-12;

fn drift(values: &[f64]) -> f64 {
    if values.iter().all(|v| v.abs() <= NOISE_FLOOR) {
        return 1.0;
    }
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    hi / lo
}

fn ac01_exact_expansion() -> bool {
    let start = Instant::now();
    let space = TorusSpace::uniform(3, 4, 0.5, 1).unwrap();
    let op = operator("hilbert3", &space);
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let grid = sample_grid(&space, derive_seed(11, k));
        let f = random_function(&space, 2 * k);
        let g = random_function(&space, 2 * k + 1);
        let r = fixed_grid_reconstruct(&op, &f, &g, &grid, ReconstructOptions::default()).unwrap();
        worst = worst.max(r.relative_error);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "exact expansion",
        worst <= 1e-10 && secs < 60.0,
        format!("max relative error {worst:.2e} over 20 pairs in {secs:.1}s"),
    )
}

fn triples(space: &TorusSpace, grid: &GridShift) -> Vec<NestedTriple> {
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

fn ac02_eight_term_identity() -> bool {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (depth, sampled) in [(3u32, None), (4, Some(500usize))] {
        let space = TorusSpace::uniform(3, depth, 0.5, 1).unwrap();
        let op = operator("modulated3", &space);
        let grid = sample_grid(&space, 5);
        let all = triples(&space, &grid);
        let chosen: Vec<&NestedTriple> = match sampled {
            None => all.iter().collect(),
            Some(m) => {
                let mut rng = ChaCha8Rng::seed_from_u64(17);
                (0..m).map(|_| &all[rng.random_range(0..all.len())]).collect()
            }
        };
        for t in chosen {
            worst = worst.max(eight_term_split(&op, &grid, t).unwrap().residual.abs());
            count += 1;
        }
    }
    verdict(
        2,
        "eight-term identity",
        worst <= 1e-10,
        format!("max |residual| {worst:.2e} over {count} triples"),
    )
}

fn ac03_split_identity() -> bool {
    let mut exact = true;
    let mut worst_excess = f64::MIN;
    let mut count = 0;
    for dims in [vec![1u32], vec![2]] {
        for depth in 2..=5u32 {
            let space = TorusSpace::new(dims.clone(), depth, 0.5, 1).unwrap();
            for grid in [GridShift::standard(&space), sample_grid(&space, depth as u64)] {
                for (small, big) in nested_pairs(&space, &grid, 0) {
                    for eps in 1..1u32 << dims[0] {
                        let s = make_s(&space, &grid, &small, &big, eps).unwrap();
                        let h = HaarFunction::new(big.clone(), eps).cells(&space, &grid).unwrap();
                        exact &= h.iter().zip(&s.values).all(|(h, v)| *h == v + s.average_on_q);
                        let sup = s.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                        worst_excess = worst_excess.max(sup - 2.0 * big.volume().powf(-0.5));
                        count += 1;
                    }
                }
            }
        }
    }
    verdict(
        3,
        "split identity and s-bounds",
        exact && worst_excess <= 1e-12,
        format!("pointwise exact: {exact}, max(sup|s| - 2|big|^-1/2) = {worst_excess:.2e} over {count} pairs"),
    )
}

fn complexities(case: Case, depth: u32) -> Vec<(u32, u32)> {
    let top = depth.min(4);
    match case {
        Case::Inside => (1..top).flat_map(|a| [(a, 0), (0, a)]).collect(),
        _ => (0..top).flat_map(|a| (0..top).map(move |b| (a, b))).collect(),
    }
}

fn coefficient_constant(depth: u32) -> f64 {
    let space = TorusSpace::uniform(2, depth, 0.5, 1).unwrap();
    let op = operator("hilbert2", &space);
    let grid = sample_grid(&space, 3);
    let mut worst: f64 = 0.0;
    for cases in [[Case::Separated; 2], [Case::Separated, Case::Inside], [Case::Inside; 2]] {
        for a in complexities(cases[0], depth) {
            for b in complexities(cases[1], depth) {
                let r = extract_shift_coefficients(&op, &grid, &cases, &[a, b]).unwrap();
                worst = worst.max(r.max_ratio);
            }
        }
    }
    worst
}

fn ac04_shift_normalization() -> bool {
    let c5 = coefficient_constant(5);
    let c6 = coefficient_constant(6);
    let d = drift(&[c5, c6]);
    verdict(
        4,
        "shift normalization",
        c5.is_finite() && c6.is_finite() && d < 2.0,
        format!("constant {c5:.4} at L=5, {c6:.4} at L=6, drift {d:.3}"),
    )
}

fn dense_norm(spec: &ShiftSpec) -> f64 {
    let n = spec.space().total_cells();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let col = shift_apply_values(spec, &e, false).unwrap();
        for r in 0..n {
            m[(r, c)] = col[r];
        }
    }
    m.singular_values().max()
}

fn ac05_cancellative_shift_norm() -> bool {
    let mut worst: f64 = 0.0;
    let mut cross: f64 = 0.0;
    let mut runs = 0;
    for (n, depth) in [(1usize, 8u32), (1, 6), (3, 3), (3, 5)] {
        let space = TorusSpace::uniform(n, depth, 0.5, 1).unwrap();
        for (k, cx) in [(0u32, 0u32), (1, 0), (0, 2), (1, 1), (2, 2)].into_iter().enumerate() {
            let complexity = vec![cx; n];
            let grid = sample_grid(&space, k as u64);
            let provider = saturated_random_provider(&space, &complexity, 40 + k as u64);
            let spec = ShiftSpec::cancellative(&space, &grid, complexity, provider).unwrap();
            let est = shift_norm_check(&spec, 40, k as u64).unwrap().value;
            worst = worst.max(est);
            if space.total_cells() <= 512 {
                let dense = dense_norm(&spec);
                cross = cross.max((est - dense).abs() / dense);
            }
            runs += 1;
        }
    }
    verdict(
        5,
        "cancellative shift norm",
        worst <= 1.05 && cross <= 0.01,
        format!("max norm {worst:.4} over {runs} shifts, power vs dense disagreement {cross:.2e}"),
    )
}

fn smooth_pair(space: &TorusSpace) -> (MultiFunction, MultiFunction) {
    let f = MultiFunction::from_fn(space, |c| {
        ((c.iter().enumerate().map(|(i, x)| (i + 2) * x * x + 3 * x).sum::<usize>() % 17) as f64 - 8.0) / 8.0
    });
    let g = MultiFunction::from_fn(space, |c| {
        ((c.iter().enumerate().map(|(i, x)| (i + 5) * x * x * x + x).sum::<usize>() % 13) as f64 - 6.0) / 6.0
    });
    (f, g)
}

fn ac06_averaging_formula() -> bool {
    let mut lines = Vec::new();
    let mut pass = true;
    for (n, depth, samples) in [(2usize, 5u32, 200usize), (3, 4, 100)] {
        let space = TorusSpace::uniform(n, depth, 0.5, 2).unwrap();
        let op = operator(&format!("hilbert{n}"), &space);
        let (f, g) = smooth_pair(&space);
        for convention in [SmConvention::SmallerCube, SmConvention::FSide] {
            let opts = McOptions {
                samples,
                seed: 7,
                convention,
                buckets: false,
            };
            let r = mc_reconstruct(&op, &f, &g, opts).unwrap();
            let z = (r.reconstructed - r.direct) / r.stderr.unwrap();
            pass &= z.abs() <= 3.0;
            lines.push(format!("n={n} {convention:?} z={z:+.2}"));
        }
    }
    verdict(6, "averaging-formula consistency", pass, lines.join(", "))
}

fn ac07_tail_decay() -> bool {
    let space = TorusSpace::uniform(2, 6, 0.5, 1).unwrap();
    let op = operator("hilbert2", &space);
    let grid = sample_grid(&space, 1);
    let caps: Vec<u32> = (0..space.depth() - 1).collect();
    let mut sq = vec![0.0; caps.len()];
    let pairs = 6u64;
    for k in 0..pairs {
        let f = random_function(&space, 100 + 2 * k);
        let g = random_function(&space, 101 + 2 * k);
        let full = fixed_grid_reconstruct(&op, &f, &g, &grid, ReconstructOptions::default())
            .unwrap()
            .reconstructed;
        for (e, &cap) in sq.iter_mut().zip(&caps) {
            let t = truncated_representation(&op, &f, &g, &grid, cap).unwrap();
            *e += (t.reconstructed - full).powi(2);
        }
    }
    let errs: Vec<f64> = sq.iter().map(|s| (s / pairs as f64).sqrt()).collect();
    let xs: Vec<f64> = caps.iter().map(|&c| c as f64).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let target = -space.delta() / 2.0;
    let errs_txt: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
    verdict(
        7,
        "tail decay",
        (slope - target).abs() <= 0.3 * target.abs(),
        format!("fitted slope {slope:.3}, target {target} ± 30%; rms errors by i_max [{}]", errs_txt.join(", ")),
    )
}

fn ac08_paraproduct_boundedness() -> bool {
    let mut lines = Vec::new();
    let mut pass = true;
    for (arity, depths) in [(1usize, 4..=8u32), (2, 4..=8), (3, 4..=4)] {
        let mut per_level = Vec::new();
        for depth in depths {
            let space = TorusSpace::uniform(arity, depth, 0.5, 1).unwrap();
            let grid = sample_grid(&space, depth as u64);
            let acting: Vec<usize> = (0..arity).collect();
            let mut worst: f64 = 0.0;
            for k in 0..10u64 {
                let b = random_function(&space, derive_seed(depth as u64, k));
                let spec = ParaproductSpec::new(&space, &grid, &acting, b).unwrap();
                worst = worst.max(para_norm_vs_bmo(&spec, 30, k).unwrap().ratio);
            }
            per_level.push(worst);
        }
        let d = drift(&per_level);
        pass &= per_level.iter().all(|r| r.is_finite()) && d < 2.0;
        let txt: Vec<String> = per_level.iter().map(|r| format!("{r:.3}")).collect();
        lines.push(format!("arity {arity} ratios [{}] drift {d:.3}", txt.join(", ")));
    }
    verdict(8, "paraproduct boundedness", pass, lines.join("; "))
}

fn ac09_bmo_lemmas() -> bool {
    let mut pass = true;
    let mut lines = Vec::new();
    for name in ["hilbert3", "modulated3"] {
        let ratios: Vec<f64> = [5u32, 6]
            .iter()
            .map(|&depth| {
                let space = TorusSpace::uniform(3, depth, 0.5, 1).unwrap();
                bmo_lemma_check(&operator(name, &space), &sample_grid(&space, 9)).unwrap().max_ratio
            })
            .collect();
        let d = drift(&ratios);
        if name == "hilbert3" {
            pass = ratios.iter().all(|r| r.is_finite()) && d < 2.0;
        }
        lines.push(format!("{name} max ratio {:.3e} (L=5), {:.3e} (L=6), drift {d:.3}", ratios[0], ratios[1]));
    }
    verdict(9, "BMO lemmas", pass, lines.join("; "))
}

fn ac10_certification_discrimination() -> bool {
    let cfg = CertConfig::default();
    let space = TorusSpace::uniform(3, 4, 0.5, 1).unwrap();
    let hilbert = certify_all(&space, lookup("hilbert3", 3).unwrap(), &cfg).unwrap();
    let modulated = certify_all(&space, lookup("modulated3", 3).unwrap(), &cfg).unwrap();
    let rough = certify_all(&space, lookup("rough(3/2)", 3).unwrap(), &cfg).unwrap();
    let sep = rough
        .worst_failure()
        .and_then(|c| c.witness.as_ref())
        .map(|w| w.separation.iter().cloned().fold(f64::MAX, f64::min))
        .unwrap_or(1.0);
    let one = TorusSpace::uniform(1, 4, 0.5, 1).unwrap();
    let model = KernelModel::new(&one, vec![KernelDesc::PeriodicHilbert]).unwrap();
    let c = check_size_holder(&model, &[], &[], 4000, 1).constant;
    let pi_err = (c - 1.0 / std::f64::consts::PI).abs();
    verdict(
        10,
        "certification discrimination",
        hilbert.passed && modulated.passed && !rough.passed && sep <= (-20f64).exp2() && pi_err <= 0.01,
        format!(
            "hilbert3 {}, modulated3 {}, rough(3/2) {} with witness separation {sep:.2e}; hilbert pure size {c:.5} (1/pi {:.5})",
            hilbert.passed,
            modulated.passed,
            rough.passed,
            1.0 / std::f64::consts::PI
        ),
    )
}

fn fingerprint() -> Vec<u64> {
    let space = TorusSpace::uniform(2, 5, 0.5, 2).unwrap();
    let op = operator("hilbert2", &space);
    let (f, g) = smooth_pair(&space);
    let grid = sample_grid(&space, 21);
    let fixed = fixed_grid_reconstruct(&op, &f, &g, &grid, ReconstructOptions { buckets: true, cap: None }).unwrap();
    let opts = McOptions {
        samples: 20,
        seed: 3,
        convention: SmConvention::SmallerCube,
        buckets: true,
    };
    let mc = mc_reconstruct(&op, &f, &g, opts).unwrap();
    let coeffs = haar_forward(&f, &grid).unwrap();
    let mut out: Vec<u64> = coeffs.values().iter().map(|v| v.to_bits()).collect();
    out.extend(fixed.buckets.iter().map(|b| b.value.to_bits()));
    out.extend(mc.buckets.iter().map(|b| b.value.to_bits()));
    out.extend([fixed.reconstructed, mc.reconstructed, mc.stderr.unwrap()].map(f64::to_bits));
    out
}

#[cfg(feature = "parallel")]
fn pools_agree(base: &[u64]) -> bool {
    [1, 3, 8].iter().all(|&threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(fingerprint) == base
    })
}

#[cfg(not(feature = "parallel"))]
fn pools_agree(_: &[u64]) -> bool {
    true
}

fn ac11_determinism_and_throughput() -> bool {
    let base = fingerprint();
    let same = fingerprint() == base && pools_agree(&base);
    let space = TorusSpace::uniform(2, 10, 0.5, 1).unwrap();
    let f = random_function(&space, 1);
    let grid = sample_grid(&space, 1);
    let reps = 5;
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(haar_forward(&f, &grid).unwrap());
    }
    let rate = (reps * space.total_cells()) as f64 / start.elapsed().as_secs_f64();
    verdict(
        11,
        "determinism and performance",
        same,
        format!("bitwise identical across runs and worker counts: {same}; haar_forward {rate:.2e} cells/s at n=2, L=10 (target 1e7, not asserted)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> bool); 11] = [
        ("ac01", ac01_exact_expansion),
        ("ac02", ac02_eight_term_identity),
        ("ac03", ac03_split_identity),
        ("ac04", ac04_shift_normalization),
        ("ac05", ac05_cancellative_shift_norm),
        ("ac06", ac06_averaging_formula),
        ("ac07", ac07_tail_decay),
        ("ac08", ac08_paraproduct_boundedness),
        ("ac09", ac09_bmo_lemmas),
        ("ac10", ac10_certification_discrimination),
        ("ac11", ac11_determinism_and_throughput),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (key, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| key.contains(f.as_str())) {
            continue;
        }
        if !run() {
            failed.push(key);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
