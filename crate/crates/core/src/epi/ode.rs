//! Compartment ODEs on population fractions and a classical RK4 integrator.
//!
//! Transmission is frequency dependent: `beta` multiplies products of
//! fractions, and recovery uses the rate `1 / gamma`.

use super::params::EpiParams;
use crate::{Error, Result};

fn rate(gamma: u32) -> f64 {
    1.0 / gamma as f64
}

/// Time derivative of the compartment-fraction vector `y`.
///
/// The layout of `y` is the model's trajectory column order
/// (see [`ModelKind::compartment_names`](super::ModelKind::compartment_names)).
pub fn ode_rhs(params: &EpiParams, y: &[f64]) -> Result<Vec<f64>> {
    let m = params.model().n_compartments();
    if y.len() != m {
        return Err(Error::contract(format!(
            "state has {} entries, model {} needs {m}",
            y.len(),
            params.model().as_str()
        )));
    }
    Ok(match params {
        EpiParams::Sir(p) => {
            let inf = p.beta * y[0] * y[1];
            let rec = rate(p.gamma) * y[1];
            vec![-inf, inf - rec, rec]
        }
        EpiParams::Seird2(p) => {
            let mut d = vec![0.0; 10];
            let infected = |age: usize| (y[2 + 2 * age], y[3 + 2 * age]);
            for target in 0..2 {
                let mut force = 0.0;
                for source in 0..2 {
                    let (sym, asym) = infected(source);
                    force += p.beta[0][target][source] * sym + p.beta[1][target][source] * asym;
                }
                let new = force * y[target];
                let g = rate(p.gamma[target]);
                let (sym, asym) = infected(target);
                d[target] = -new;
                d[2 + 2 * target] = (1.0 - p.psi[target]) * new - g * sym;
                d[3 + 2 * target] = p.psi[target] * new - g * asym;
                d[6 + target] = g * p.rho[target] * (sym + asym);
                d[8 + target] = g * (1.0 - p.rho[target]) * (sym + asym);
            }
            d
        }
        EpiParams::TwoStrain(p) => {
            let (r0, r1, r2) = (y[0], y[1], y[2]);
            let (r0i1, r0i2, r1i2, r2i1) = (y[4], y[5], y[6], y[7]);
            let i1 = r0i1 + r2i1;
            let i2 = r0i2 + r1i2;
            // routes: 0 = (∅,1), 1 = (∅,2), 2 = ({2},1), 3 = ({1},2)
            let new = [
                p.beta[0] * i1 * r0,
                p.beta[1] * i2 * r0,
                p.beta[2] * i1 * r2,
                p.beta[3] * i2 * r1,
            ];
            let out = [
                rate(p.gamma[0]) * r0i1,
                rate(p.gamma[1]) * r0i2,
                rate(p.gamma[2]) * r2i1,
                rate(p.gamma[3]) * r1i2,
            ];
            let rec = |r: usize| p.rho[r] * out[r];
            let dead: f64 = (0..4).map(|r| (1.0 - p.rho[r]) * out[r]).sum();
            vec![
                -(new[0] + new[1]),
                rec(0) - new[3],
                rec(1) - new[2],
                rec(2) + rec(3),
                new[0] - out[0],
                new[1] - out[1],
                new[3] - out[3],
                new[2] - out[2],
                dead,
            ]
        }
    })
}

/// Classical fourth-order Runge–Kutta for an arbitrary right-hand side.
///
/// Returns `steps + 1` states, the first being `y0`.
pub fn rk4<F>(mut rhs: F, y0: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0) {
        return Err(Error::contract("dt must be positive"));
    }
    let n = y0.len();
    let axpy = |y: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        y.iter().zip(k).map(|(a, b)| a + h * b).collect()
    };
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0.to_vec());
    let mut y = y0.to_vec();
    for step in 1..=steps {
        let k1 = rhs(&y)?;
        let k2 = rhs(&axpy(&y, &k1, dt / 2.0))?;
        let k3 = rhs(&axpy(&y, &k2, dt / 2.0))?;
        let k4 = rhs(&axpy(&y, &k3, dt))?;
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                step,
                reason: "non-finite state".into(),
            });
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Integrates a compartment model from the fraction vector `y0`.
pub fn integrate_rk4(
    params: &EpiParams,
    y0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    // validates the dimension once up front
    ode_rhs(params, y0)?;
    if y0.iter().any(|&v| v < 0.0) || ((y0.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
        return Err(Error::contract(
            "initial state must be a probability vector",
        ));
    }
    let out = rk4(|y| ode_rhs(params, y), y0, dt, steps)?;
    for (step, y) in out.iter().enumerate() {
        if let Some(v) = y.iter().find(|&&v| v < -1e-9) {
            return Err(Error::Integration {
                step,
                reason: format!("negative compartment {v}"),
            });
        }
        let total: f64 = y.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Integration {
                step,
                reason: format!("mass drifted to {total}"),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epi::{Seird2Params, SirParams, TwoStrainParams};

    fn sir(beta: f64, gamma: u32) -> EpiParams {
        EpiParams::Sir(SirParams { beta, gamma })
    }

    #[test]
    fn sir_rhs_by_hand() {
        let d = ode_rhs(&sir(0.3, 10), &[0.99, 0.01, 0.0]).unwrap();
        let want = [-0.00297, 0.00197, 0.001];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(
            ode_rhs(&sir(0.3, 10), &[1.0, 0.0, 0.0]).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn two_strain_naive_population_is_static() {
        let p = EpiParams::TwoStrain(TwoStrainParams {
            beta: [0.1, 0.2, 0.3, 0.4],
            gamma: [5, 6, 7, 8],
            rho: [0.9; 4],
        });
        let mut y = vec![0.0; 9];
        y[0] = 1.0;
        assert!(ode_rhs(&p, &y).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seird2_mass_is_conserved() {
        let p = EpiParams::Seird2(Seird2Params {
            beta: [[[0.1, 0.2], [0.3, 0.4]], [[0.05, 0.06], [0.07, 0.08]]],
            gamma: [7, 9],
            rho: [0.95, 0.9],
            psi: [0.1, 0.2],
        });
        let y = [0.3, 0.3, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05];
        let s: f64 = ode_rhs(&p, &y).unwrap().iter().sum();
        assert!(s.abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            ode_rhs(&sir(0.1, 3), &[1.0, 0.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn rk4_exponential_matches_closed_form() {
        let out = rk4(|y| Ok(vec![y[0]]), &[1.0], 0.01, 100).unwrap();
        assert!((out[100][0] - std::f64::consts::E).abs() < 1e-6);
    }

    #[test]
    fn rk4_edge_cases() {
        let y0 = [0.9, 0.1, 0.0];
        assert_eq!(
            integrate_rk4(&sir(0.2, 5), &y0, 1.0, 0).unwrap(),
            vec![y0.to_vec()]
        );
        let flat = integrate_rk4(&sir(0.0, 10), &y0, 1.0, 50).unwrap();
        assert!(flat.iter().all(|y| y[0] == 0.9));
        let idle = integrate_rk4(&sir(0.0, 10), &[1.0, 0.0, 0.0], 1.0, 50).unwrap();
        assert!(idle.iter().all(|y| y == &vec![1.0, 0.0, 0.0]));
        let sums_ok = integrate_rk4(&sir(0.3, 10), &y0, 0.5, 400)
            .unwrap()
            .iter()
            .all(|y| (y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(sums_ok);
    }

    #[test]
    fn rk4_reports_blowup() {
        let r = rk4(|y| Ok(vec![y[0] * y[0]]), &[1.0], 0.5, 100);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }
}
