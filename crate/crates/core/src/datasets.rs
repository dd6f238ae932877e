//! Bundled instances and scenarios.
//!
//! The 30-bus files share one instance: standard IEEE 30-bus loads, the six
//! classic generator buses with their textbook quadratic costs and limits,
//! and loss coefficients drawn once from `U[1e-4, 7e-4]` and frozen. See the
//! header of each file for details.

use crate::error::Result;
use crate::model::Fleet;
use crate::scenario::{parse_instance, parse_scenario, Scenario};

pub const IEEE30: &str = include_str!("../data/ieee30.toml");
/// Normal operation, demand step at bus 5, departure and return of bus 1.
pub const IEEE30_S1_S4: &str = include_str!("../data/ieee30_s1_s4.toml");
/// Per-node sampling times on the 30-bus system.
pub const IEEE30_ASYNC: &str = include_str!("../data/ieee30_async.toml");
/// Two generators and two loads on a complete graph.
pub const K4_TREND: &str = include_str!("../data/k4_trend.toml");

/// Buses carrying a generator in the 30-bus instance.
pub const IEEE30_GENERATORS: [u32; 6] = [1, 2, 5, 8, 11, 13];
/// Range the 30-bus loss coefficients were drawn from.
pub const IEEE30_ALPHA_RANGE: (f64, f64) = (1e-4, 7e-4);

pub fn ieee30() -> Result<Fleet> {
    parse_instance(IEEE30)
}

pub fn ieee30_scenario() -> Result<Scenario> {
    parse_scenario(IEEE30)
}

pub fn ieee30_s1_s4() -> Result<Scenario> {
    parse_scenario(IEEE30_S1_S4)
}

pub fn ieee30_async() -> Result<Scenario> {
    parse_scenario(IEEE30_ASYNC)
}

pub fn k4_trend() -> Result<Scenario> {
    parse_scenario(K4_TREND)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse() {
        for s in [ieee30_scenario(), ieee30_s1_s4(), ieee30_async(), k4_trend()] {
            s.unwrap();
        }
    }

    #[test]
    fn ieee30_totals() {
        let fleet = ieee30().unwrap();
        assert_eq!(fleet.len(), 30);
        assert!((fleet.total_demand() - 283.4).abs() < 1e-9);
        let max = fleet.nodes().iter().map(|n| n.demand).fold(0.0, f64::max);
        assert_eq!(max, 94.2);
        let gens: Vec<u32> = fleet.nodes().iter().filter(|n| !n.is_fixed()).map(|n| n.id.0).collect();
        assert_eq!(gens, IEEE30_GENERATORS);
    }
}
