use mcfi_core::adjoint::{self, ModalRhs};
use mcfi_core::pod;
use mcfi_core::pipeline::Problem;
use ndarray::{Array1, Array2};

fn in_small_stack<F: FnOnce() + Send + 'static>(name: &str, f: F) {
    let h = std::thread::Builder::new()
        .stack_size(2 * 1024 * 1024)
        .name(name.into())
        .spawn(f)
        .unwrap();
    match h.join() {
        Ok(_) => println!("{name}: ok"),
        Err(_) => println!("{name}: PANIC/OVERFLOW"),
    }
}

#[test]
fn isolate_stack_usage() {
    let problem = Problem::burgers_1d();
    let x = ndarray::array![0.9, -0.15, 0.05, 0.15];
    let traj = problem.simulate(&x).unwrap();
    let centered = pod::center(&traj).unwrap();
    let c2 = centered.clone();
    in_small_stack("svd", move || {
        let m = pod::compute_modes(&c2, 1).unwrap();
        println!("  sigma1 = {}", m.triplets[0].sigma);
    });
    let modes = pod::compute_modes(&centered, 1).unwrap();
    let t = modes.triplets[0].clone();
    let (c3, t3) = (centered.clone(), t.clone());
    in_small_stack("gram", move || {
        let g = adjoint::snapshot_gram(&c3);
        println!("  gram trace = {}", g.diag().sum());
        let _ = t3;
    });
    let (c4, t4) = (centered.clone(), t.clone());
    in_small_stack("modal_solve", move || {
        let b_phi = Array1::from_elem(c4.n_state(), 0.1);
        let b_v = Array1::zeros(c4.n_snapshots());
        let psi = adjoint::solve_modal_adjoint(&t4, &c4, ModalRhs { d_mode: &b_phi, d_coeffs: &b_v, d_sigma: 0.0 }).unwrap();
        println!("  psi_sigma = {}", psi.psi_sigma);
    });
    let (pr, tr) = (problem.clone(), traj.clone());
    in_small_stack("sweep", move || {
        let alpha = pr.design.alpha_field(&ndarray::array![0.9, -0.15, 0.05, 0.15], &pr.grid).unwrap();
        let g = Array2::from_elem((tr.initial.len(), tr.n_steps()), 1e-3);
        let psi = adjoint::solve_unsteady_adjoint(&tr, &alpha, &pr.grid, &pr.config, &g).unwrap();
        println!("  psi norm0 = {}", psi.columns[0].dot(&psi.columns[0]));
    });
}
