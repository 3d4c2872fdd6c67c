use prox_admm::instances::{make_hvac, make_random_instance_with, p1, random_feasible_point, HvacParams, RandomSpec};
use prox_admm::oracle::{constrained_grid_search, multistart_penalty_solve, multistart_penalty_solve_from};
use prox_admm::{scalar, AdmmError, OracleMethod};

#[test]
fn grid_finds_the_symmetric_optimum() {
    let (p, _) = p1::<f64>();
    let r = constrained_grid_search(&p, 2001).unwrap();
    assert_eq!(r.method, OracleMethod::Grid);
    assert!((r.value - 0.05).abs() <= 1e-6, "{}", r.value);
    assert!(scalar::dist(&r.x_best, &[0.5, 0.5]) < 1e-6);
    assert!(scalar::norm(&p.coupling_residual(&r.x_best)) < 1e-12);
}

#[test]
fn multistart_matches_grid_on_the_two_variable_problem() {
    let (p, _) = p1::<f64>();
    let m = multistart_penalty_solve(&p, 1e4, 16, 3).unwrap();
    assert_eq!(m.method, OracleMethod::Multistart);
    assert!((m.value - 0.05).abs() < 1e-3);
    assert!(p.bounds().contains(&m.x_best));
}

#[test]
fn convex_instances_agree_and_beat_the_planted_point() {
    for seed in 10..13u64 {
        let spec = RandomSpec {
            n_agents: 3,
            dims: 1,
            m_rows: 1,
            seed,
            convex: true,
            coupling_weight: 0.05,
        };
        let p = make_random_instance_with::<f64>(spec).unwrap();
        let g = constrained_grid_search(&p, 1001).unwrap();
        let planted = random_feasible_point(spec);
        let m = multistart_penalty_solve_from(&p, 1e4, &[planted.clone(), p.bounds().midpoint()]).unwrap();
        assert!(
            (g.value - m.value).abs() < 1e-3,
            "seed {seed}: {} vs {}",
            g.value,
            m.value
        );
        assert!(g.value <= p.objective(&planted).unwrap() + 1e-9);
    }
}

#[test]
fn grid_refuses_large_free_dimension() {
    let p = make_hvac::<f64>(&HvacParams::default()).unwrap();
    assert!(matches!(
        constrained_grid_search(&p, 11),
        Err(AdmmError::DimensionTooLarge(_))
    ));
}
