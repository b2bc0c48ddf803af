//! Inputs shared by the benchmarks, sized to run in milliseconds.

use flowmm::factor::FactorGrid;
use flowmm::flow::{constant_flow, iid_flow, FactorLinks, LinkFn, OuFactor};
use flowmm::lattice::ASParams;
use flowmm::{FlowPath, IntensityModel, IntensityPair, PenaltyPath, Truncation};

pub struct FieldCase {
    pub flow: FlowPath,
    pub penalty: PenaltyPath,
    pub models: IntensityPair,
    pub trunc: Truncation,
}

/// Random flows with the exponential intensity.
pub fn field_case(nodes: usize) -> FieldCase {
    let model = IntensityModel::exponential(1.0).unwrap();
    FieldCase {
        flow: iid_flow(7, 20.0, 10.0, nodes, 1.0).unwrap(),
        penalty: PenaltyPath::constant(0.04, 0.04, nodes).unwrap(),
        models: IntensityPair::symmetric(model),
        trunc: Truncation::default_for(&model, 10.0),
    }
}

/// Constant flows for the linear-intensity ODEs.
pub fn linear_case(nodes: usize) -> (FlowPath, PenaltyPath) {
    (constant_flow(10.0, 8.0, nodes, 1.0).unwrap(), PenaltyPath::constant(0.05, 0.05, nodes).unwrap())
}

pub fn ou_factor() -> OuFactor {
    let links = FactorLinks {
        a: LinkFn::new(5.0, 1.0, 0.5, 9.5).unwrap(),
        b: LinkFn::new(4.0, -0.5, 0.5, 7.5).unwrap(),
        phi: LinkFn::new(0.1, 0.02, 0.0, 0.2).unwrap(),
        terminal: LinkFn::new(0.2, 0.05, 0.0, 0.4).unwrap(),
    };
    OuFactor { kappa: 1.0, mean: 0.0, vol: 0.5, l0: 0.0, links }
}

pub fn factor_grid(n_l: usize, n_t: usize) -> FactorGrid {
    FactorGrid::new(-3.0, 3.0, n_l, n_t, 1.0).unwrap()
}

pub fn as_params(delta: f64) -> ASParams {
    ASParams {
        delta,
        lambda_a: 10.0,
        lambda_b: 10.0,
        sigma: 0.1f64.sqrt(),
        terminal: 0.05,
        gamma: 1.0,
        horizon: 1.0,
        q_bound: 20.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        let c = field_case(21);
        assert_eq!(c.flow.grid().len(), c.penalty.len());
        ou_factor().validate().unwrap();
        as_params(0.5).validate().unwrap();
        assert_eq!(linear_case(11).0.grid().len(), 11);
        assert_eq!(factor_grid(9, 21).l_nodes().len(), 9);
    }
}
