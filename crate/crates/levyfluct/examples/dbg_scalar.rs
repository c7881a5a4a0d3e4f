use levyfluct::entrance::{excursion_mass, solve_qstar, Tolerances};
use levyfluct::{ModelSpec, SpaceGrid, TimeGrid};

fn main() {
    let bm = ModelSpec::brownian();
    let tg = TimeGrid::graded(1.0, 60, 2.0).unwrap();
    let xg = SpaceGrid::linear(0.05, 4.0, 200).unwrap();
    let tol = Tolerances { tol_solve: 10.0, tol_cross: 10.0, ..Default::default() };
    let t0 = std::time::Instant::now();
    let sol = solve_qstar(&bm, &tg, &xg, &tol).unwrap();
    println!("solve: {:?}  r19={:.4} r14={:.4}  grid {}x{}", t0.elapsed(),
        sol.diagnostics.residual_2_19, sol.diagnostics.residual_2_14,
        sol.field.time_grid().len(), sol.field.space_grid().len());
    let closed = |t: f64, x: f64| x / (std::f64::consts::PI.sqrt() * t.powf(1.5)) * (-x * x / (2.0 * t)).exp();
    let ts = sol.field.time_grid().nodes();
    let xs = sol.field.space_grid().nodes();
    for floor in [1e-2f64, 3e-3, 1e-3, 1e-4] {
        let mut worst: f64 = 0.0; let mut at = (0.0, 0.0);
        for (k, &t) in ts.iter().enumerate() {
            if t < 0.05 { continue; }
            let rowmax = xs.iter().map(|&x| closed(t, x)).fold(0.0, f64::max);
            for (j, &x) in xs.iter().enumerate() {
                if !(0.2..=3.0).contains(&x) { continue; }
                let c = closed(t, x);
                if c < floor * rowmax { continue; }
                let rel = (sol.field.get(k, j) / c - 1.0).abs();
                if rel > worst { worst = rel; at = (t, x); }
            }
        }
        println!("floor {floor:.0e}: worst {:.4} at {:?}", worst, at);
    }
    let ex = excursion_mass(&sol, &tol).unwrap();
    println!("m*(0.05) {:+.3}%  N*(1) {:+.3}%",
        (ex.m_star_at(0.05) * (std::f64::consts::PI * 0.05).sqrt() - 1.0) * 100.0,
        (ex.n_star_at(1.0) / (2.0 / std::f64::consts::PI.sqrt()) - 1.0) * 100.0);
    // profile at final time
    let k = ts.len() - 1;
    for &xq in &[0.21f64, 0.5, 1.0, 2.0, 3.0] {
        let j = xs.iter().position(|&z| (z - xq).abs() < 0.011).unwrap();
        let (f, c) = (sol.field.get(k, j), closed(ts[k], xs[j]));
        print!("x={:.2}: {:+.2}%  ", xs[j], (f / c - 1.0) * 100.0);
    }
    println!();
}
