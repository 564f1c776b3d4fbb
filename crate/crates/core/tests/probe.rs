use mcfi_core::objectives::{ObjectiveKind, ObjectiveSpec};
use mcfi_core::pipeline::Problem;
use ndarray::array;

#[test]
fn probe_table1_point() {
    let problem = Problem::burgers_1d();
    let x_star = array![0.25, -0.15, 0.05, 0.15];
    let targets = problem.make_targets(&x_star, 1).unwrap();
    let objective = ObjectiveSpec::new(ObjectiveKind::QuadraticMode, 1, targets);

    let f_init = problem.objective_value(&ndarray::Array1::zeros(4), &objective).unwrap();
    println!("f_init at x=0: {f_init:.6e}  (paper: 2.83e-1)");

    let x_test = array![0.90, -0.15, 0.05, 0.15];
    let t0 = std::time::Instant::now();
    let (f, grad) = problem.objective_and_gradient(&x_test, &objective).unwrap();
    println!("f(test) = {f:.6e}, adjoint in {:?}", t0.elapsed());
    let paper_adj = [0.2226819780, 0.1103718593, -0.1575599861, -0.1433312851];
    let paper_fd = [0.2226818384, 0.1103718646, -0.1575562218, -0.1433295612];
    let t1 = std::time::Instant::now();
    let fd = mcfi_core::verify::fd_gradient(&problem, &x_test, &objective, 1e-6).unwrap();
    println!("fd in {:?}", t1.elapsed());
    for j in 0..4 {
        let rel = (grad[j] - fd[j]).abs() / fd[j].abs();
        println!(
            "c{}: adj {:+.10} (paper {:+.10})  fd {:+.10} (paper {:+.10})  rel {:.3e}",
            j + 1, grad[j], paper_adj[j], fd[j], paper_fd[j], rel
        );
    }
}
