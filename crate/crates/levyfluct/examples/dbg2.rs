use levyfluct::entrance::{residual_row_detail, solve_qstar, Tolerances};
use levyfluct::{ModelSpec, SpaceGrid, TimeGrid};

fn main() {
    let bm = ModelSpec::brownian();
    let tg = TimeGrid::graded(1.0, 60, 2.0).unwrap();
    let xg = SpaceGrid::linear(0.05, 4.0, 200).unwrap();
    let tol = Tolerances { tol_solve: 10.0, tol_cross: 10.0, ..Default::default() };
    let sol = solve_qstar(&bm, &tg, &xg, &tol).unwrap();
    let ts = sol.field.time_grid().nodes().to_vec();
    let (r0, c0) = (sol.user_row0, sol.user_col0);
    let mut w19 = (0.0f64, 0, 0.0);
    let mut w14 = (0.0f64, 0, 0.0);
    for r in r0..ts.len() {
        for (defining, acc) in [(true, &mut w19), (false, &mut w14)] {
            let d = residual_row_detail(&sol, &bm, defining, r).unwrap();
            let floor = 0.01 * d[c0..].iter().fold(0.0f64, |a, &(_, l, _)| a.max(l.abs()));
            for &(x, l, rh) in &d[c0..] {
                let v = (l - rh).abs() / l.abs().max(floor);
                if v > acc.0 { *acc = (v, r, x); }
            }
        }
    }
    println!("user region: worst r19 {:.4} at t={:.5} x={:.3}", w19.0, ts[w19.1], w19.2);
    println!("user region: worst r14 {:.4} at t={:.5} x={:.3}", w14.0, ts[w14.1], w14.2);
    let d = residual_row_detail(&sol, &bm, false, ts.len() - 1).unwrap();
    for &(x, l, rh) in d[c0.saturating_sub(3)..c0 + 8].iter() {
        println!("x={x:.4}: lhs={l:.6} rhs={rh:.6} ({:+.2}%)", (rh / l - 1.0) * 100.0);
    }
}
