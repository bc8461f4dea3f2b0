use quasiground::{ProblemParams, ProfileOpts, RadialProfile};
fn main() {
    let params = ProblemParams::new(1, 6.0, 1.0).unwrap();
    let exact = (4.0f64).powf(1.0 / 3.0);
    for step in [1e-3, 5e-4, 2.5e-4, 1.25e-4] {
        let opts = ProfileOpts { step, tol: 1e-6, ..Default::default() };
        let p = RadialProfile::solve_with(&params, &opts).unwrap();
        println!("step {:9.2e}  peak {:.15}  rel err {:+.3e}  R {:.10}  mass {:.12}",
                 step, p.peak(), (p.peak() - exact) / exact, p.radius(), p.mass());
    }
}
