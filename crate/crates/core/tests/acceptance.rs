//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakmix::cli::group_norm_sq_range;
use weakmix::ergodic_means::{theorem71_discrepancy_check, theorem71_threshold_check};
use weakmix::hull_geometry::{banach_saks_select, min_norm_in_hull, separation_witness};
use weakmix::integer_sets::FiniteIndexSet;
use weakmix::mixing_analysis::{
    cesaro_abs_average, default_epsilon_grid, extract_failure_witness, lemma_2_1_identity, subsequence_mean_norm,
    uniform_mixing_value, Method, UniformOptions,
};
use weakmix::sequence_models::{monomial_inner_quadrature, BlockSchedule, Functional, VectorSequence};
use weakmix::shift_bounds::{convex_unboundedness_witness, non_orbit_certificate, shift_bound_scan, Scheme};
use weakmix::symbolic_structure::{detect_periodicity, empirical_measure, structure_search, DEFAULT_MIN_RECURRENCE};
use weakmix::Error;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T>(r: weakmix::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn tents_block_means_and_diracs() -> Check {
    let h = 1024;
    let s = BlockSchedule::default_for(h);
    ensure(h >= s.start(11), "horizon below n_11")?;
    let seq = ok(VectorSequence::example_3_1(s.clone(), h))?;
    for j in 1..=10 {
        let end = s.start(j + 1) - 1;
        let v = ok(seq.mean_norm(1, end))?;
        ensure(v >= 0.5, format!("block {j}: mean {v} < 0.5"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let t = rng.random_range(s.knot(5)..1.0);
        let v = ok(cesaro_abs_average(&seq, &Functional::dirac(t), h))?;
        ensure(v < 0.05, format!("Dirac at {t}: {v}"))?;
        worst = worst.max(v);
    }
    Ok(format!("10 block means >= 0.5; worst Dirac average {worst:.4}"))
}

fn orthogonal_blocks() -> Check {
    let h = 1024;
    let s = BlockSchedule::default_for(h);
    let seq = ok(VectorSequence::example_3_2(&s, h))?;
    for j in 1..=10 {
        let end = s.start(j + 1) - 1;
        let idx: Vec<u64> = (1..=end).collect();
        let sq = ok(seq.combo_norm_sq(&vec![1.0; idx.len()], &idx))? / (end * end) as f64;
        ensure(sq >= 0.25, format!("block {j}: squared mean {sq}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = ok(seq.random_unit_functional(&mut rng))?;
        let p = ok(seq.pairing(&f, s.start(10)))?.abs();
        ensure(p < 0.02, format!("pairing {p} at block 10"))?;
        worst = worst.max(p);
    }
    Ok(format!("10 squared block means >= 0.25; worst pairing {worst:.2e}"))
}

fn monomial_non_orbit() -> Check {
    let h = 128;
    let seq = ok(VectorSequence::example_3_3(h))?;
    let ks: Vec<u64> = (1..=101).step_by(4).collect();
    let rows = ok(non_orbit_certificate(&seq, &ks))?;
    ensure(rows.len() == 26, "missing rows")?;
    let sched = seq.monomial_schedule().ok_or("not a monomial model")?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (j, k) = (rng.random_range(1..=h), rng.random_range(1..=h));
        let (a, b) = (sched.exponent(j), sched.exponent(k));
        let q = monomial_inner_quadrature(a, b, 256);
        worst = worst
            .max((q - 1.0 / (a + b + 1.0)).abs())
            .max((q - ok(seq.gram(j, k))?).abs());
    }
    ensure(worst <= 1e-9, format!("quadrature deviation {worst}"))?;
    let scan = ok(shift_bound_scan(&seq, Scheme::Convex, 30, 10, 10_000, 13))?;
    ensure(
        scan.constant_estimate <= 1.0 + 1e-9,
        format!("convex constant {}", scan.constant_estimate),
    )?;
    Ok(format!(
        "26 exact inequalities; quadrature within {worst:.1e}; c ~ {:.6}",
        scan.constant_estimate
    ))
}

fn rotation_triples() -> Check {
    let h = 126;
    let seq = ok(VectorSequence::example_6_2(h))?;
    let scan = ok(shift_bound_scan(&seq, Scheme::ZeroOne, 30, h - 30, 10_000, 14))?;
    let cap = 22.5f64.sqrt();
    ensure(
        scan.constant_estimate <= cap + 1e-9,
        format!("Cesàro constant {}", scan.constant_estimate),
    )?;
    for k in (2..=20).step_by(2) {
        let w = ok(convex_unboundedness_witness(&seq, k))?;
        let floor = 2f64.sqrt() * (k + 3) as f64;
        ensure(w.ratio > floor, format!("k = {k}: ratio {} <= {floor}", w.ratio))?;
    }
    let (lo, hi) = ok(group_norm_sq_range(&seq))?;
    ensure(lo >= BigRational::new(4.into(), 9.into()), "a group norm is below 2/3")?;
    ensure(hi <= BigRational::from_integer(5.into()), "a group norm exceeds √5")?;
    Ok(format!(
        "c ~ {:.4} <= {cap:.4}; 10 unboundedness witnesses; group norms exact",
        scan.constant_estimate
    ))
}

fn uniform_oracle() -> Check {
    let o = ok(VectorSequence::orthonormal(256))?;
    let opts = UniformOptions::default();
    for n in 1..=16u64 {
        let u = ok(uniform_mixing_value(&o, n, &opts))?;
        let want = 1.0 / (n as f64).sqrt();
        ensure(u.method == Method::Exact, format!("n = {n} not exact"))?;
        ensure(
            (u.lower - want).abs() <= 1e-12,
            format!("n = {n}: {} vs {want}", u.lower),
        )?;
    }
    for n in [64u64, 256] {
        let u = ok(uniform_mixing_value(&o, n, &opts))?;
        let want = 1.0 / (n as f64).sqrt();
        ensure(
            u.lower <= want && want <= u.upper,
            format!("n = {n}: [{}, {}] misses {want}", u.lower, u.upper),
        )?;
    }
    Ok("exact for n <= 16; brackets at 64 and 256".into())
}

fn subsequence_consistency() -> Check {
    let h = 8192;
    let o = ok(VectorSequence::orthonormal(h))?;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        // bounded gaps: relatively dense, hence of positive lower density
        let gap = rng.random_range(1..=6u64);
        let mut k = Vec::new();
        let mut x = rng.random_range(1..=gap);
        while x <= h {
            k.push(x);
            x += rng.random_range(1..=gap);
        }
        let set = ok(FiniteIndexSet::new(k, h))?;
        let v = ok(subsequence_mean_norm(&o, &set, 1024))?;
        ensure(v < 0.05, format!("mean {v} at n = 1024"))?;
        worst = worst.max(v);
    }
    let s = BlockSchedule::default_for(1024);
    let b = ok(VectorSequence::example_3_2(&s, 1024))?;
    let all = ok(FiniteIndexSet::new((1..=1024).collect(), 1024))?;
    let mut stalled = f64::INFINITY;
    for j in 1..=10 {
        let v = ok(subsequence_mean_norm(&b, &all, s.start(j + 1) - 1))?;
        ensure(v >= 0.5, format!("block end {}: {v}", s.start(j + 1) - 1))?;
        stalled = stalled.min(v);
    }
    Ok(format!(
        "50 dense subsequences <= {worst:.4}; block-end means >= {stalled:.4}"
    ))
}

fn averaging_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 300;
    let models = [
        ok(VectorSequence::orthonormal(h))?,
        ok(VectorSequence::example_6_2(h))?,
        ok(VectorSequence::example_3_3(h))?,
        ok(VectorSequence::example_3_2(&BlockSchedule::default_for(h), h))?,
    ];
    let mut worst = 0.0f64;
    for i in 0..200 {
        let seq = &models[i % models.len()];
        let p = rng.random_range(0.05..0.9);
        let k: Vec<u64> = (1..=h).filter(|_| rng.random_bool(p)).collect();
        if k.is_empty() {
            continue;
        }
        let n = rng.random_range(k[0]..=h);
        let set = ok(FiniteIndexSet::new(k, h))?;
        let id = ok(lemma_2_1_identity(seq, &set, n))?;
        ensure(
            id.difference_norm <= 1e-12,
            format!("difference {}", id.difference_norm),
        )?;
        worst = worst.max(id.difference_norm);
    }
    Ok(format!("worst difference {worst:.1e}"))
}

fn witness_extraction() -> Check {
    let h = 1u64 << 14;
    let seq = ok(VectorSequence::example_3_1(BlockSchedule::default_for(h), h))?;
    let ns: Vec<u64> = (1..=h).collect();
    let opts = UniformOptions::default();
    let w = ok(extract_failure_witness(&seq, &ns, &default_epsilon_grid(), &opts))?.ok_or("no witness on tents")?;
    ok(w.verify(&seq))?;
    for (&n, &card) in w.anchor_indices.iter().zip(&w.card_b_n) {
        ensure(
            card as f64 >= 2.0 * n as f64 * w.epsilon_o,
            format!("card(B_{n}) = {card}"),
        )?;
    }
    let o = ok(VectorSequence::orthonormal(1024))?;
    let all: Vec<u64> = (1..=1024).collect();
    ensure(
        ok(extract_failure_witness(&o, &all, &default_epsilon_grid(), &opts))?.is_none(),
        "orthonormal witness",
    )?;
    Ok(format!(
        "eps_o = {}; anchors {:?}; none on orthonormal",
        w.epsilon_o, w.anchor_indices
    ))
}

fn window_bounds() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let h = 160;
    for _ in 0..500 {
        let d = rng.random_range(1..=4usize);
        let m: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..d).map(|_| rng.random_range(-0.7..0.7)).collect())
            .collect();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let seq = ok(VectorSequence::operator_orbit(&m, &x, h))?.normalized();
        let p = rng.random_range(1..=8usize);
        let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let lo = rng.random_range(0..=h - 2 * p as u64 - 10);
        let hi = rng.random_range(lo + p as u64..=h - p as u64);
        ok(theorem71_discrepancy_check(&seq, &weights, lo, hi))?;
    }
    let o = ok(VectorSequence::orthonormal(4096))?;
    let t = ok(theorem71_threshold_check(&o, &[1.0 / 64.0; 64], 0.25, 19))?;
    ensure(t.span == 1024, format!("span {}", t.span))?;
    ensure(
        t.windows.iter().all(|w| w.n - w.m >= 1024 && w.mean <= 0.25),
        "window above epsilon",
    )?;
    let c = ok(VectorSequence::constant(400))?;
    match theorem71_threshold_check(&c, &[0.25; 4], 0.25, 19) {
        Err(Error::HypothesisFailed { .. }) => {}
        other => return Err(format!("constant sequence not refused: {other:?}")),
    }
    Ok(format!(
        "500 discrepancy bounds; {} windows, max mean {:.4}; refusal triggers",
        t.windows.len(),
        t.max_mean
    ))
}

fn hull_geometry() -> Check {
    let o = ok(VectorSequence::orthonormal(64))?;
    for m in [2u64, 4, 16, 64] {
        let idx = ok(FiniteIndexSet::new((1..=m).collect(), 64))?;
        let c = ok(min_norm_in_hull(&o, &idx, 1e-10, 100_000))?;
        let want = 1.0 / (m as f64).sqrt();
        ensure(
            (c.achieved_norm - want).abs() <= 1e-6,
            format!("m = {m}: {}", c.achieved_norm),
        )?;
        ensure(c.gap <= 1e-10, format!("m = {m}: gap {}", c.gap))?;
        let sep = ok(separation_witness(&o, &idx, 1e-3))?.ok_or("no separation")?;
        for k in 1..=m {
            let v = ok(o.pairing(&sep.functional, k))?;
            ensure(v >= sep.pairing_floor, format!("pairing {v} at {k}"))?;
        }
    }
    let pm = ok(VectorSequence::alternating(2))?;
    let c = ok(min_norm_in_hull(
        &pm,
        &ok(FiniteIndexSet::new(vec![1, 2], 2))?,
        1e-10,
        1000,
    ))?;
    ensure(c.achieved_norm <= 1e-6, format!("±e_1: {}", c.achieved_norm))?;
    let s = BlockSchedule::default_for(1024);
    let b = ok(VectorSequence::example_3_2(&s, 1024))?;
    let sel = ok(banach_saks_select(&b, &(1..=1024).collect::<Vec<_>>(), 11))?;
    for (i, (v, bound)) in sel.prefix_mean_norm_sq.iter().zip(&sel.prefix_bound).enumerate() {
        ensure(v <= bound, format!("prefix {}: {v} > {bound}", i + 1))?;
    }
    Ok(format!("1/√m hull values; selected {} terms", sel.selected.len()))
}

fn symbolic_structure() -> Check {
    let m3 = ok(FiniteIndexSet::multiples(3, 0, 3000))?;
    let p = ok(detect_periodicity(&m3))?.ok_or("no period")?;
    ensure(
        p.period == 3 && (p.density.num, p.density.den) == (1, 3),
        format!("period {} density {}/{}", p.period, p.density.num, p.density.den),
    )?;
    let f10 = 3_628_800u64;
    let b = ok(FiniteIndexSet::factorial_blocks(10, 1, None))?;
    ensure(b.horizon() >= f10 + 9, format!("horizon {}", b.horizon()))?;
    let w = ok(structure_search(&b, &[3, 6, 9], DEFAULT_MIN_RECURRENCE))?;
    ok(w.verify(&b))?;
    let dens = w.a_density.num as f64 / w.a_density.den as f64;
    ensure(dens >= 0.9, format!("A density {dens}"))?;
    let e = ok(empirical_measure(&b, &[(f10, f10 + 9)], 1))?;
    let one = &e.cylinder_estimates["1"];
    ensure(one.frequencies[0] == 1.0, format!("frequency {}", one.frequencies[0]))?;
    ensure(one.counts[0] == b.count_in(f10, f10 + 9), "window counts disagree")?;
    Ok(format!("period 3; n_list {:?}; A density {dens}", w.n_list))
}

fn reproduce_determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_weakmix");
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    let examples = ["example_3_1", "example_3_2", "example_3_3", "example_6_2", "orbit_demo"];
    for ex in examples {
        let mut bytes = Vec::new();
        for d in &dirs {
            let status = Command::new(bin)
                .args(["--seed", "7", "--out"])
                .arg(d.path())
                .args(["reproduce", ex])
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.success(), format!("{ex} exited with {}", status.status))?;
            let file = d.path().join(format!("reproduce_{ex}.json"));
            bytes.push(std::fs::read(&file).map_err(|e| e.to_string())?);
        }
        ensure(bytes[0] == bytes[1], format!("{ex} reports differ"))?;
    }
    Ok("5 examples byte-identical across two runs".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("tent blocks and Dirac decay", tents_block_means_and_diracs),
        ("orthogonal blocks and Bessel decay", orthogonal_blocks),
        ("monomial non-orbit inequalities", monomial_non_orbit),
        ("rotation triples shift bounds", rotation_triples),
        ("uniform mixing oracle", uniform_oracle),
        ("subsequence mean consistency", subsequence_consistency),
        ("averaging identity", averaging_identity),
        ("failure witness extraction", witness_extraction),
        ("window mean bounds", window_bounds),
        ("hull geometry", hull_geometry),
        ("symbolic structure", symbolic_structure),
        ("reproduce determinism", reproduce_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
