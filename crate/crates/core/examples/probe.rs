//! Dev probe: kernel throughput and constant-environment front speeds.
//! Run with `cargo run --release -p homog-core --example probe`.

use std::time::Instant;

use homog_core::env::{EnvironmentRealization, EnvironmentSpec, ReactionSpec};
use homog_core::grid::{kpp_stable_dt, Grid};
use homog_core::pde::{init_ball_datum, KppStepper};

fn main() {
    one_dimensional_speed();
    two_dimensional_coverage();
}

fn one_dimensional_speed() {
    let spec = EnvironmentSpec::kpp(1, 1.0, 1.0, 0.0, 1.0, 1.0);
    let env: EnvironmentRealization<f64> = EnvironmentRealization::new(&spec, 1).unwrap();
    let h = 0.02;
    let dt = kpp_stable_dt(1usize, h, 1.0, 0.0, 1.0);
    let grid = Grid::new(1, h, 100.0, dt).unwrap();
    let mut stepper = KppStepper::new(&env, ReactionSpec::LOGISTIC, grid).unwrap();
    let mut sol = init_ball_datum(&grid, 0.0, [0.0, 0.0], 0.5).unwrap();
    let mut positions = Vec::new();
    for k in 1..=8 {
        let t = 5.0 * k as f64;
        stepper.solve_until(&mut sol, t).unwrap();
        let p = sol.front_position(0.5).unwrap();
        positions.push((t, p));
        println!("1D t={t:5.1}  front={p:7.3}  pos/t={:.4}  lag(2t-p)={:.3}", p / t, 2.0 * t - p);
    }
    // Slope over the second half.
    let (t1, p1) = positions[3];
    let (t2, p2) = positions[7];
    println!("1D slope on [{t1},{t2}] = {:.4}", (p2 - p1) / (t2 - t1));
}

fn two_dimensional_coverage() {
    let spec = EnvironmentSpec::kpp(2, 1.0, 1.0, 0.0, 1.0, 1.0);
    let env: EnvironmentRealization<f64> = EnvironmentRealization::new(&spec, 1).unwrap();
    let h = 0.1;
    let dt = kpp_stable_dt(2usize, h, 1.0, 0.0, 1.0);
    let grid = Grid::new(2, h, 56.0, dt).unwrap();
    println!("2D grid {}x{} dt={dt:.5}", grid.nx, grid.ny);
    let mut stepper = KppStepper::new(&env, ReactionSpec::LOGISTIC, grid).unwrap();
    let mut sol = init_ball_datum(&grid, 0.0, [0.0, 0.0], 0.5).unwrap();

    // Targets: radii 10, 20, 40 along e1, diag, e2.
    let dirs: [[f64; 2]; 3] = [[1.0, 0.0], [std::f64::consts::FRAC_1_SQRT_2; 2], [0.0, 1.0]];
    let radii = [10.0, 20.0, 40.0];
    let mut targets = Vec::new();
    for &r in &radii {
        for d in &dirs {
            let c = [r * d[0], r * d[1]];
            targets.push((r, c, grid.ball_nodes(c, 1.0), false));
        }
    }

    let start = Instant::now();
    let mut steps = 0u64;
    let mut done = 0;
    while done < targets.len() && sol.t < 30.0 {
        stepper.step(&mut sol).unwrap();
        steps += 1;
        for tgt in targets.iter_mut() {
            if !tgt.3 && tgt.2.iter().all(|&i| sol.u[i as usize] >= 0.5) {
                tgt.3 = true;
                done += 1;
                println!(
                    "2D covered r={:5.1} dir=({:+.2},{:+.2}) at tau={:7.3}  w={:.4}",
                    tgt.0,
                    tgt.1[0] / tgt.0,
                    tgt.1[1] / tgt.0,
                    sol.t,
                    tgt.0 / sol.t
                );
            }
        }
    }
    let el = start.elapsed().as_secs_f64();
    let ns = steps as f64 * grid.len() as f64;
    println!(
        "2D {} steps to t={:.2} in {:.1}s  ({:.2} ns/node-step, {} nodes)",
        steps,
        sol.t,
        el,
        el * 1e9 / ns,
        grid.len()
    );
}
