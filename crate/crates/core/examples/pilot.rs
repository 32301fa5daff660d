//! Dev pilot #2: fast-reaction sandwich margins, GEQ const flow at h=0.05,
//! GEQ limit probes.

use std::time::Instant;

use homog_core::env::{EnvironmentSpec, ReactionSpec};
use homog_core::homog::{geq_limit_run, sandwich_run, ScaledExperiment};
use homog_core::noise::derive_seed;
use homog_core::wulff::{assemble_shape, estimate_speed_table, GSet, SpeedTableParams};

fn main() {
    geq_constant_flow_fine();
    kpp_fast_sandwich();
    geq_limit_pilot();
}

fn geq_constant_flow_fine() {
    let spec = EnvironmentSpec::geq(2, 1.0, 1.0, 0.0, [0.5, 0.0]);
    let params = SpeedTableParams {
        directions: 8, radius: 12, samples: 1, h: 0.05, m_bound: spec.m_guess(),
    };
    let t0 = Instant::now();
    let table = estimate_speed_table(&spec, ReactionSpec::LOGISTIC, &params, 42).unwrap();
    let exact = |e: [f64; 2]| { let ve = 0.5 * e[0]; ve + (ve * ve + 0.75).sqrt() };
    let worst = table.dirs.iter().enumerate()
        .map(|(k, e)| (100.0 * (table.w[k] - exact(*e)) / exact(*e)).abs())
        .fold(0.0f64, f64::max);
    println!("GEQ flow h=0.05: worst |rel err| = {worst:.2}% ({:.0}s)", t0.elapsed().as_secs_f64());
    for (k, e) in table.dirs.iter().enumerate() {
        println!("  ({:+.2},{:+.2}): w={:.4} exact={:.4}", e[0], e[1], table.w[k], exact(*e));
    }
}

fn kpp_fast_sandwich() {
    let mut spec = EnvironmentSpec::kpp(2, 1.0, 1.05, 0.0, 3.6, 4.4);
    spec.r_mol = 0.2;
    let t0 = Instant::now();
    let params = SpeedTableParams {
        directions: 32, radius: 32, samples: 4, h: 0.15, m_bound: spec.m_guess(),
    };
    let table = estimate_speed_table(&spec, ReactionSpec::LOGISTIC, &params, 7).unwrap();
    let shape = assemble_shape(&table).unwrap();
    println!("fast shape: w in [{:.3}, {:.3}], CI {:.4} ({:.0}s)",
        shape.min_speed(), shape.max_speed(), table.max_ci(), t0.elapsed().as_secs_f64());

    let exp = ScaledExperiment {
        g: GSet::Ball { center: [0.0, 0.0], radius: 1.0 },
        theta: 0.9, theta_prime: 0.5, delta: 0.25, rho_coeff: 0.05, shift_lambda: 1.0, h: 0.3,
    };
    for (ei, eps, seeds) in [(0usize, 0.25f64, 2u32), (1, 0.125, 2), (2, 0.0625, 2), (3, 0.03125, 2)] {
        let t0 = Instant::now();
        let mut pass = 0; let mut total = 0;
        let mut worst_inner = f64::INFINITY; let mut worst_outer = f64::INFINITY;
        for i in 0..seeds {
            let seed = derive_seed(1234, &[eps.to_bits(), i as u64]);
            let res = sandwich_run(&spec, ReactionSpec::LOGISTIC, &exp, &shape, eps, ei, seed, &[0.5, 1.0, 2.0]).unwrap();
            for r in &res {
                total += 1;
                if r.inner && r.outer { pass += 1; }
                worst_inner = worst_inner.min(r.margin_inner);
                worst_outer = worst_outer.min(r.margin_outer);
            }
        }
        println!("eps=1/{:.0}: {}/{} rows, worst margins inner {:+.3} outer {:+.3} ({:.0}s, {:.0}s/seed)",
            1.0/eps, pass, total, worst_inner, worst_outer,
            t0.elapsed().as_secs_f64(), t0.elapsed().as_secs_f64() / seeds as f64);
    }
}

fn geq_limit_pilot() {
    let spec = EnvironmentSpec::geq(2, 0.8, 1.2, 0.15, [0.0, 0.0]);
    let t0 = Instant::now();
    let params = SpeedTableParams {
        directions: 24, radius: 16, samples: 4, h: 0.1, m_bound: spec.m_guess(),
    };
    let table = estimate_speed_table(&spec, ReactionSpec::LOGISTIC, &params, 3).unwrap();
    let shape = assemble_shape(&table).unwrap();
    println!("geq shape: w in [{:.3},{:.3}] CI {:.4} ({:.0}s)",
        shape.min_speed(), shape.max_speed(), table.max_ci(), t0.elapsed().as_secs_f64());

    let exp = ScaledExperiment {
        g: GSet::Ball { center: [0.0, 0.0], radius: 1.0 },
        theta: 0.5, theta_prime: 0.5, delta: 0.25, rho_coeff: 0.05, shift_lambda: 1.0, h: 0.1,
    };
    // Smooth wide bump, Lipschitz <= 0.77.
    let u0 = |p: [f64; 2]| -> f64 {
        let r2 = (p[0] * p[0] + p[1] * p[1]) / 4.0;
        if r2 >= 1.0 { 0.0 } else { (1.0 - r2).powi(2) }
    };
    let probes: Vec<(f64, [f64; 2])> = vec![
        (0.5, [0.0, 0.0]), (0.5, [1.5, 0.0]), (0.5, [0.0, -2.5]),
        (1.0, [0.0, 0.0]), (1.0, [2.0, 1.0]), (1.0, [-3.0, 0.0]),
        (2.0, [0.0, 0.0]), (2.0, [2.0, 2.0]), (2.0, [-4.0, 0.0]),
    ];
    let t1 = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..4u32 {
        let seed = derive_seed(55, &[i as u64]);
        let res = geq_limit_run(&spec, &exp, &shape, 1.0/16.0, 0, seed, &u0, 2.0, &probes).unwrap();
        let m = res.iter().map(|r| r.error).fold(0.0f64, f64::max);
        println!("  seed {i}: max probe error {m:.4}");
        worst = worst.max(m);
    }
    println!("geq limit worst error {worst:.4} ({:.0}s total)", t1.elapsed().as_secs_f64());
}
