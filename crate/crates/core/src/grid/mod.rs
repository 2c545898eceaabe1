//! Network description and the reduced linear swing model.

mod reduce;
mod system;

pub use reduce::{
    build_reduced_model, equilibrium_shifted, InjectionVector, MachineInfo, Network, ReducedModel,
    StateVector,
};
pub use system::{
    Branch, Bus, BusId, BusType, Cc, Generator, GridSystem, Load, PowerUnits, OMEGA_S_60HZ,
    SCHEMA_VERSION,
};


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::error::Error;
    use nalgebra::DVector;

    #[test]
    fn smib_reduces_to_line_susceptance() {
        let m = build_reduced_model(&smib()).unwrap();
        assert_eq!(m.ba.shape(), (1, 1));
        assert!((m.ba[(0, 0)] - 2.0).abs() < 1e-14);
        assert_eq!(m.bb.ncols(), 0);
        assert_eq!(m.bc.ncols(), 0);
        assert_eq!(m.delta_e[0], 0.0);
        assert_eq!(m.x_e[1], 1.0);
    }

    #[test]
    fn state_matrix_block_form() {
        let m = build_reduced_model(&meshed()).unwrap();
        let n = m.n_machines();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(m.a[(i, j)], 0.0);
                assert_eq!(m.a[(n + i, n + j)], 0.0);
                let expect_ur = if i == j { m.omega_s } else { 0.0 };
                assert_eq!(m.a[(i, n + j)], expect_ur);
                assert!((m.a[(n + i, j)] + 0.5 * m.ba[(i, j)] / m.h[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn missing_infinite_bus_is_rejected() {
        let mut s = smib();
        s.generators[1].infinite = false;
        assert!(matches!(build_reduced_model(&s), Err(Error::Model(_))));
    }

    #[test]
    fn symmetric_twins_share_angle() {
        // Hand solve: B_a = diag(1/x, 1/x) (no coupling through the grounded bus),
        // so δ = pm·x for each machine.
        let m = build_reduced_model(&twin(0.4, 0.5)).unwrap();
        assert!((m.delta_e[0] - m.delta_e[1]).abs() < 1e-14);
        assert!((m.delta_e[0] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn smib_cc_shift_matches_scalar_solve() {
        // B_a = 1/(x1+x2); B_c = -x2/(x1+x2) => δ_c − δ_e = x2·dp.
        let (x1, x2) = (0.3, 0.2);
        let m = build_reduced_model(&smib_cc(x1, x2, 0.4)).unwrap();
        assert!((m.ba[(0, 0)] - 1.0 / (x1 + x2)).abs() < 1e-12);
        assert!((m.bc[(0, 0)] + x2 / (x1 + x2)).abs() < 1e-12);
        let xc = equilibrium_shifted(&m, &DVector::from_element(1, 0.1)).unwrap();
        assert!((xc[0] - m.delta_e[0] - x2 * 0.1).abs() < 1e-12);
        assert_eq!(xc[1], 1.0);
    }

    #[test]
    fn zero_shift_is_identity() {
        let m = build_reduced_model(&meshed()).unwrap();
        let xc = equilibrium_shifted(&m, &DVector::zeros(m.n_ccs())).unwrap();
        assert_eq!(xc, m.x_e);
    }

    #[test]
    fn shift_rejects_wrong_length() {
        let m = build_reduced_model(&meshed()).unwrap();
        let err = equilibrium_shifted(&m, &DVector::zeros(2)).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                expected: 3,
                actual: 2,
                ..
            }
        ));
    }

    #[test]
    fn reduced_matrix_is_symmetric() {
        let m = build_reduced_model(&meshed()).unwrap();
        let asym = (&m.ba - m.ba.transpose()).amax();
        assert!(asym <= 1e-10 * m.ba.amax(), "asymmetry {asym}");
    }

    #[test]
    fn equilibrium_residual() {
        let m = build_reduced_model(&meshed()).unwrap();
        let r = &m.ba * &m.delta_e - (&m.pm + &m.bb * &m.pl - &m.bc * &m.p0);
        assert!(r.amax() < 1e-10, "residual {}", r.amax());
    }

    #[test]
    fn power_balance_against_full_network() {
        let m = build_reduced_model(&meshed()).unwrap();
        let u = m.bus_injections(&m.p0);
        let theta = m.network.node_angles(&m.delta_e, &u);
        let pe = m.electrical_power(&m.delta_e, &m.p0);
        // Lossless: machine output + reference output + CC injections = loads.
        let balance = pe.sum() + m.network.reference_injection(&theta) + m.p0.sum() - m.pl.sum();
        assert!(balance.abs() < 1e-8, "imbalance {balance}");
        // And the reduced electrical power equals the nodal power at machine internal nodes.
        assert!((&pe - &m.pm).amax() < 1e-10);
    }

    #[test]
    fn bus_injection_matches_cc_columns() {
        let m = build_reduced_model(&meshed()).unwrap();
        for (k, &b) in m.cc_buses.iter().enumerate() {
            assert_eq!(m.bus_column(b).unwrap(), m.bc.column(k).into_owned());
        }
        assert!(m.bus_column(99).is_err());
    }
}
