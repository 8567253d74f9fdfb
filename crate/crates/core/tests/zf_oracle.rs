mod common;

use common::{two_user_instance, zf_grid_search, zf_objective};
use hutbeam::stochastic::RngStream;
use hutbeam::zfbf::{power_subproblem, power_subproblem_closed_form};

#[test]
fn conic_power_allocation_matches_grid_search() {
    let mut rng = RngStream::new(77, 100);
    for _ in 0..5 {
        let (cfg, e, zf) = two_user_instance(&mut rng);
        let p = power_subproblem(&cfg, &e, &zf).unwrap();
        let f = zf_objective(&cfg, &e, &zf, &p);
        let (g, at) = zf_grid_search(&cfg, &e, &zf, 1e-3);
        // the lattice cannot beat the true optimum by more than the solver gap
        assert!(f <= g + 1e-6 * g.abs(), "conic {f} above grid {g} at {at:?}");
        assert!((f - g).abs() <= 1e-4 * g.abs(), "conic {f} grid {g} at {at:?}, p {p:?}");
        let c = power_subproblem_closed_form(&cfg, &e, &zf).unwrap();
        let fc = zf_objective(&cfg, &e, &zf, &c);
        assert!((f - fc).abs() <= 1e-5 * fc.abs(), "conic {f} closed form {fc}");
    }
}
