//! Fixtures shared by the benchmarks.

use covsteer_core::examples::{cartpole_example, lti_example};
use covsteer_core::{BoundaryConditions, LtvSystem};

pub fn lti() -> (LtvSystem, BoundaryConditions) {
    lti_example()
}

pub fn cartpole() -> (LtvSystem, BoundaryConditions) {
    cartpole_example()
}
