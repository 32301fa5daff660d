//! Dev probe: oracle deficit after per-generation dedup + DP cone error map.
use homog_core::env::{EnvironmentRealization, EnvironmentSpec};
use homog_core::geq::{control_oracle, control_solution};
use homog_core::grid::Grid;

fn main() {
    let spec = EnvironmentSpec::geq(2, 1.0, 1.0, 0.0, [0.0, 0.0]);
    let env: EnvironmentRealization<f64> = EnvironmentRealization::new(&spec, 1).unwrap();
    for &h in &[0.1f64] {
        let grid = Grid::new(2, h, 8.0, 0.01).unwrap();
        for &t in &[2.0f64, 4.0, 6.0] {
            let n_steps = (t / h) as usize;
            let mask = control_oracle(&env, 0.0, [0.0, 0.0], t, n_steps, 16, &grid).unwrap();
            let mut inner_miss = f64::INFINITY;
            for i in 0..grid.len() {
                if !mask.get(i) {
                    let r = grid.dist(i, [0.0, 0.0]);
                    if r < inner_miss { inner_miss = r; }
                }
            }
            let (rmax, _) = mask.max_radius_from(&grid, [0.0, 0.0]);
            println!("oracle h={h} t={t} n={n_steps}: deficit={:.3} overshoot={:+.3}", t - inner_miss, rmax - t);
        }
    }
    // DP cone: error map by radius.
    let grid = Grid::new(2, 0.1, 6.0, 0.01).unwrap();
    let u0: Vec<f64> = (0..grid.len()).map(|i| -grid.dist(i, [0.0, 0.0])).collect();
    let t = 2.0;
    let out = control_solution(&env, &u0, 0.0, t, 20, 16, 1, &grid).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..grid.len() {
        let r = grid.dist(i, [0.0, 0.0]);
        if r < 3.5 {
            let exact = -(r - t).max(0.0);
            let e = (out[i] - exact).abs();
            if e > worst.0 { worst = (e, r); }
        }
    }
    println!("DP cone max err {:.3} at r={:.2}", worst.0, worst.1);
}
