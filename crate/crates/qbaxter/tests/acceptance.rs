//! Acceptance run: one PASS/FAIL line per criterion. Set `QBAXTER_SEED` to vary
//! the sampled parameters.

use qbaxter::bethe::{
    aba_eigenvalue, aba_state, closed_joint_spectrum, factorize_closed_eigenvalue,
    factorize_q_eigenvalue, joint_spectrum,
};
use qbaxter::chain::{
    sample_z, total_spin, transfer_v, transfer_w, tw_diagonal_recursion, ChainParams,
};
use qbaxter::qoscillator::{phi21, pochhammer};
use qbaxter::tensor_core::{powi, vec_norm, C64, ONE, ZERO};
use qbaxter::verify::{self, CheckOptions, CheckResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

struct Outcome {
    passed: bool,
    detail: String,
}

fn worst_below(results: &[CheckResult], bound: f64) -> Outcome {
    let bad: Vec<String> = results
        .iter()
        .filter(|r| !(r.residual < bound))
        .map(|r| format!("{}={:.2e} {}", r.name, r.residual, r.notes))
        .collect();
    let worst = results.iter().map(|r| r.residual).fold(0.0, f64::max);
    Outcome {
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{} checks, worst {worst:.2e} < {bound:.0e}", results.len())
        } else {
            bad.join("; ")
        },
    }
}

fn merge(parts: Vec<Outcome>) -> Outcome {
    Outcome {
        passed: parts.iter().all(|o| o.passed),
        detail: parts.into_iter().map(|o| o.detail).collect::<Vec<_>>().join(" | "),
    }
}

fn timed(limit: Duration, what: &str, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let e = t.elapsed();
    if e > limit {
        o.passed = false;
    }
    o.detail = format!("{} [{what} {:.1}s, limit {}s]", o.detail, e.as_secs_f64(), limit.as_secs());
    o
}

fn opts(seed: u64) -> CheckOptions {
    CheckOptions { seed, samples: 5, ..CheckOptions::default() }
}

fn identity_battery(seed: u64) -> Outcome {
    timed(Duration::from_secs(120), "suite", || {
        let mut all = Vec::new();
        for n in 1..=2 {
            let p = ChainParams::sample(n, seed + n as u64);
            let o = opts(seed);
            all.extend(verify::check_ybe(&p, &o));
            all.extend(verify::check_reflection(&p, &o));
            all.extend(verify::check_fusion(&p, &o));
            all.extend(verify::check_row_fusion_and_monodromy(&p, &o));
        }
        worst_below(&all, 1e-8)
    })
}

fn tq_relation(seed: u64) -> Outcome {
    let mut parts = Vec::new();
    for n in 0..=3 {
        let p = ChainParams::sample(n, seed + 10 + n as u64);
        let run = || {
            let r: Vec<CheckResult> = verify::check_tq(&p, &opts(seed), None)
                .into_iter()
                .filter(|r| r.name == "tq:relation")
                .collect();
            worst_below(&r, 1e-8)
        };
        parts.push(if n == 3 { timed(Duration::from_secs(300), "N=3", run) } else { run() });
    }
    merge(parts)
}

fn golden_values(seed: u64) -> Outcome {
    let mut worst = 0f64;
    let mut err = None;
    for n in 0..=3 {
        let p = ChainParams::sample(n, seed + 20 + n as u64);
        let sig = total_spin(n);
        match transfer_w(ZERO, &p) {
            Ok(t) => {
                for i in 0..1 << n {
                    for j in 0..1 << n {
                        let want = if i == j {
                            (ONE - powi(p.q, 2 * sig[(i, i)].re as i64) * p.xi * p.xitilde).inv()
                        } else {
                            ZERO
                        };
                        worst = worst.max((t.matrix[(i, j)] - want).norm() / want.norm().max(1.0));
                    }
                }
            }
            Err(e) => err = Some(e.to_string()),
        }
    }
    let p0 = ChainParams::sample(0, seed + 24);
    for z in sample_z(&p0, 3, 0.9, seed) {
        match transfer_w(z, &p0) {
            Ok(t) => {
                let want = (ONE - p0.xi * p0.xitilde).inv();
                worst = worst.max((t.matrix[(0, 0)] - want).norm() / want.norm());
            }
            Err(e) => err = Some(e.to_string()),
        }
    }
    let zero = Outcome {
        passed: err.is_none() && worst < 1e-12,
        detail: format!("T^W(0) and N=0 constant worst {worst:.2e} {}", err.unwrap_or_default()),
    };
    let p2 = ChainParams::sample(2, seed + 25);
    let n2 = verify::check_n2_closed_forms(&p2, &CheckOptions { samples: 3, ..opts(seed) });
    merge(vec![zero, worst_below(&n2, 1e-10)])
}

fn commutativity(seed: u64) -> Outcome {
    let mut all = Vec::new();
    for n in 1..=3 {
        let p = ChainParams::sample(n, seed + 30 + n as u64);
        all.extend(
            verify::check_commutators(&p, &opts(seed))
                .into_iter()
                .filter(|r| r.name != "commutator:Q-spin-twist"),
        );
    }
    worst_below(&all, 1e-9)
}

fn crossing(seed: u64) -> Outcome {
    let mut all = Vec::new();
    for n in 0..=3 {
        let p = ChainParams::sample(n, seed + 40 + n as u64);
        all.extend(verify::check_crossing(&p, &opts(seed)));
    }
    worst_below(&all, 1e-8)
}

fn polynomiality(seed: u64) -> Outcome {
    let mut all = Vec::new();
    let mut rec_worst = 0f64;
    let mut err = None;
    for n in 0..=3 {
        let p = ChainParams::sample(n, seed + 50 + n as u64);
        all.extend(verify::check_polynomiality(&p, &opts(seed)));
        let zs = sample_z(&p, 3, 0.9, seed);
        let traced: Vec<_> = zs.iter().map(|&z| transfer_w(z, &p)).collect();
        for idx in 0..1usize << n {
            let alpha: Vec<u8> = (0..n).map(|s| ((idx >> (n - 1 - s)) & 1) as u8).collect();
            match tw_diagonal_recursion(&alpha, &p) {
                Ok(poly) => {
                    for (&z, t) in zs.iter().zip(&traced) {
                        match t {
                            Ok(t) => {
                                let v = t.matrix[(idx, idx)];
                                rec_worst = rec_worst.max((poly.eval(z * z) - v).norm() / v.norm().max(1.0));
                            }
                            Err(e) => err = Some(e.to_string()),
                        }
                    }
                }
                Err(e) => err = Some(e.to_string()),
            }
        }
    }
    let rec = Outcome {
        passed: err.is_none() && rec_worst < 1e-9,
        detail: format!("recursion worst {rec_worst:.2e} {}", err.unwrap_or_default()),
    };
    merge(vec![worst_below(&all, 1e-8), rec])
}

fn bethe_pipeline(seed: u64) -> Outcome {
    let mut bad = Vec::new();
    let mut count = 0;
    let (mut w_res, mut w_prod, mut w_eig, mut w_state) = (0f64, 0f64, 0f64, 0f64);
    for n in 2..=3 {
        let p = ChainParams::sample(n, seed + 60 + n as u64);
        let zs = sample_z(&p, 3, 0.9, seed);
        let recs = match joint_spectrum(&p, C64::new(0.71, 0.43), &zs) {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("N={n}: {e}"));
                continue;
            }
        };
        for rec in &recs {
            count += 1;
            let roots = match factorize_q_eigenvalue(rec, &p) {
                Ok(r) => r,
                Err(e) => {
                    bad.push(format!("N={n} M={}: {e}", rec.sector.m_down));
                    continue;
                }
            };
            w_prod = w_prod.max(roots.product_residual);
            for r in &roots.residuals {
                w_res = w_res.max(r.norm());
            }
            for &(z, l) in &rec.tv_samples {
                match aba_eigenvalue(z, &roots.roots, &p) {
                    Ok(e) => w_eig = w_eig.max((e - l).norm() / l.norm()),
                    Err(e) => bad.push(e.to_string()),
                }
            }
            if roots.m_roots <= 2 {
                let st = aba_state(&roots.roots, &p);
                let tv = transfer_v(zs[0], &p);
                match (st, tv) {
                    (Ok(st), Ok(tv)) => {
                        let l = rec.tv_samples[0].1;
                        let r: Vec<C64> = tv.mul_vec(&st).iter().zip(&st).map(|(a, b)| a - l * b).collect();
                        w_state = w_state.max(vec_norm(&r) / vec_norm(&st));
                    }
                    (Err(e), _) | (_, Err(e)) => bad.push(e.to_string()),
                }
            }
        }
    }
    let passed = bad.is_empty() && w_prod < 1e-8 && w_res < 1e-6 && w_eig < 1e-6 && w_state < 1e-5;
    Outcome {
        passed,
        detail: format!(
            "{count} eigenvectors, root product {w_prod:.2e}, Bethe {w_res:.2e}, eigenvalue {w_eig:.2e}, state {w_state:.2e} {}",
            bad.join("; ")
        ),
    }
}

fn closed_chain(seed: u64) -> Outcome {
    let mut all = Vec::new();
    let mut bethe = 0f64;
    let mut bad = Vec::new();
    for n in 0..=3 {
        let p = ChainParams::sample(n, seed + 70 + n as u64);
        for r in verify::check_closed_chain(&p, &opts(seed)) {
            let bound = match r.name.as_str() {
                "closed:tq" => 1e-9,
                "closed:trace-at-zero" => 1e-12,
                _ => continue,
            };
            all.push(CheckResult { tolerance: bound, passed: r.residual < bound, ..r });
        }
        let zs = sample_z(&p, 2, 0.9, seed);
        match closed_joint_spectrum(&p, C64::new(0.63, 0.52), &zs) {
            Ok(recs) => {
                for rec in &recs {
                    match factorize_closed_eigenvalue(rec, &p) {
                        Ok(r) => r.residuals.iter().for_each(|x| bethe = bethe.max(x.norm())),
                        Err(e) => bad.push(e.to_string()),
                    }
                }
            }
            Err(e) => bad.push(e.to_string()),
        }
    }
    let failing: Vec<String> = all
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}={:.2e}", r.name, r.residual))
        .collect();
    let worst_tq = all.iter().filter(|r| r.name == "closed:tq").map(|r| r.residual).fold(0.0, f64::max);
    let worst_zero = all.iter().filter(|r| r.name != "closed:tq").map(|r| r.residual).fold(0.0, f64::max);
    Outcome {
        passed: failing.is_empty() && bad.is_empty() && bethe < 1e-6 && all.len() == 8,
        detail: format!(
            "TQ {worst_tq:.2e}, T^W(0) {worst_zero:.2e}, Bethe {bethe:.2e} {} {}",
            failing.join("; "),
            bad.join("; ")
        ),
    }
}

fn truncation(seed: u64) -> Outcome {
    let mut all = Vec::new();
    for n in 1..=3 {
        let p = ChainParams::sample(n, seed + 80 + n as u64);
        all.extend(verify::check_truncation_stability(&p, &opts(seed)));
    }
    let failing: Vec<String> = all
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}={:.2e} (tol {:.0e})", r.name, r.residual, r.tolerance))
        .collect();
    let worst = all.iter().map(|r| r.residual).fold(0.0, f64::max);
    Outcome {
        passed: failing.is_empty(),
        detail: format!("{} checks, worst {worst:.2e} {}", all.len(), failing.join("; ")),
    }
}

fn q_series(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a55);
    let mut disk = |lo: f64, hi: f64| C64::from_polar(rng.gen_range(lo..hi), rng.gen_range(0.0..std::f64::consts::TAU));
    let (mut gauss, mut heine) = (0f64, 0f64);
    let mut bad = Vec::new();
    let mut draws = 0;
    while draws < 20 {
        let q = disk(0.3, 0.8);
        let (a, b) = (disk(0.5, 2.0), disk(0.5, 2.0));
        let c = disk(0.05, 0.9) * a * b;
        let x = disk(0.1, 0.8);
        let q2 = q * q;
        // stay clear of poles in the denominator parameters
        if (0..60).any(|j| (ONE - powi(q2, j) * c / q2).norm() < 1e-3) {
            continue;
        }
        draws += 1;
        let tol = 1e-14;
        let g = (|| {
            let lhs = phi21(a, b, c, c / (a * b), tol, q)?;
            let rhs = pochhammer(c / a, None, q)? * pochhammer(c / b, None, q)?
                / (pochhammer(c / (a * b), None, q)? * pochhammer(c, None, q)?);
            Ok::<f64, qbaxter::Error>((lhs - rhs).norm() / rhs.norm().max(1.0))
        })();
        let h = (|| {
            let lhs = phi21(a, b, c, x, tol, q)?;
            let rhs = phi21(a, b, c / q2, x, tol, q)?
                - c * x / q2 * (ONE - a) * (ONE - b) / ((ONE - c / q2) * (ONE - c))
                    * phi21(q2 * a, q2 * b, q2 * c, x, tol, q)?;
            Ok::<f64, qbaxter::Error>((lhs - rhs).norm() / lhs.norm().max(1.0))
        })();
        match (g, h) {
            (Ok(g), Ok(h)) => {
                gauss = gauss.max(g);
                heine = heine.max(h);
            }
            (Err(e), _) | (_, Err(e)) => bad.push(e.to_string()),
        }
    }
    Outcome {
        passed: bad.is_empty() && gauss < 1e-10 && heine < 1e-10,
        detail: format!("20 draws, q-Gauss {gauss:.2e}, contiguous {heine:.2e} {}", bad.join("; ")),
    }
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes us skips the run
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if let Some(f) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(f.as_str()) {
            return;
        }
    }
    let seed = std::env::var("QBAXTER_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(2024);
    println!("acceptance seed {seed}");
    let criteria: [(&str, fn(u64) -> Outcome); 10] = [
        ("identity battery", identity_battery),
        ("TQ relation", tq_relation),
        ("golden values", golden_values),
        ("commutativity", commutativity),
        ("crossing", crossing),
        ("polynomiality", polynomiality),
        ("Bethe pipeline", bethe_pipeline),
        ("closed chain", closed_chain),
        ("truncation stability", truncation),
        ("q-series helpers", q_series),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f(seed);
        if !o.passed {
            failed += 1;
        }
        println!("criterion {:>2} {name}: {} {}", k + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
