//! Build one instance of each problem family and print its constants.

use vrpl::problems::{build, ProblemSpec};

fn main() -> vrpl::Result<()> {
    let specs = [
        (
            "nonlinear regression",
            ProblemSpec::regression(20, 30, 200, 7),
        ),
        ("penalized NLP", ProblemSpec::penalized_nlp(10, 6, 500, 3)),
        (
            "doubly stochastic",
            ProblemSpec::doubly_stochastic(8, 5, 1_000, 5),
        ),
    ];
    for (name, spec) in specs {
        let problem = build(&spec)?;
        let x0 = &problem.initial_point;
        let phi = problem.f_value(&problem.g_value(x0)) + problem.h_value(x0);
        println!(
            "{name}: n={} m={} population={:?}",
            problem.dim_n, problem.dim_m, problem.population
        );
        println!(
            "  Φ(x₀) = {phi:.5}, lower bound = {:.5}",
            problem.phi_lower_bound
        );
        println!("  {:?}", problem.constants);
    }
    Ok(())
}
