//! Fixtures shared by the benchmarks.

use htrpm::gibbs::fit_data;
use htrpm::sim::generate_scenario1;
use htrpm::{default_hyperparameters, FitData, Hyperparameters, Variant};

/// Scenario-1 design (50 participants, 5 periods, 30 observations per cell)
/// and default hyperparameters for `variant`.
pub fn scenario1_fixture(variant: Variant, seed: u64) -> (FitData, Hyperparameters) {
    let (panel, _) = generate_scenario1(seed).expect("scenario 1 generator");
    let hyper = default_hyperparameters(variant);
    let fit = fit_data(&panel, &hyper).expect("valid design");
    (fit, hyper)
}
