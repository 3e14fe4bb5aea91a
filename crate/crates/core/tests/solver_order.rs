mod common;

use common::{dist, observed_order, pf_ode_rk4};
use lml_core::samplers::{lml_sample, SamplerConfig};
use lml_core::schedule::{make_grid, NoiseSchedule};
use lml_core::GaussianMixtureOracle;

const NS: [usize; 4] = [10, 20, 40, 80];

fn terminal_errors(oracle: &GaussianMixtureOracle, order: u8, chains: usize) -> Vec<f64> {
    let schedule = *oracle.schedule();
    NS.iter()
        .map(|&n| {
            let cfg = SamplerConfig {
                schedule,
                steps: n,
                order,
                chains,
                seed: 3,
                ..SamplerConfig::default()
            };
            let grid = make_grid(&schedule, n, cfg.eps_clip).unwrap();
            let runs = lml_sample(&cfg, oracle).unwrap();
            let total: f64 = runs
                .iter()
                .map(|r| {
                    let reference = pf_ode_rk4(
                        oracle,
                        &schedule,
                        r.states[0].as_slice(),
                        grid.time(n),
                        grid.time(0),
                        4096,
                    );
                    dist(r.final_state().as_slice(), &reference)
                })
                .sum();
            total / chains as f64
        })
        .collect()
}

#[test]
fn multistep_is_second_order_on_mixture() {
    let oracle = GaussianMixtureOracle::uniform(vec![vec![-1.0], vec![1.0]], NoiseSchedule::default()).unwrap();
    let errs = terminal_errors(&oracle, 2, 16);
    let p = observed_order(&NS, &errs);
    println!("multistep2 errors {errs:?}, order {p:.3}");
    assert!(p >= 1.8, "observed order {p}");
    let errs1 = terminal_errors(&oracle, 1, 16);
    // Coarse grids are pre-asymptotic; the finest pair shows first order.
    let p1 = observed_order(&NS[2..], &errs1[2..]);
    println!("ddim errors {errs1:?}, finest-pair order {p1:.3}");
    assert!(p1 > 0.8 && p1 < 1.3, "ddim order {p1}");
}

#[test]
fn rk4_reference_is_converged() {
    let oracle = GaussianMixtureOracle::uniform(vec![vec![-1.0], vec![1.0]], NoiseSchedule::default()).unwrap();
    let s = *oracle.schedule();
    let (hi, lo) = (s.t_max, 1e-3);
    for x in [-1.3, 0.2, 2.1] {
        let a = pf_ode_rk4(&oracle, &s, &[x], hi, lo, 4096);
        let b = pf_ode_rk4(&oracle, &s, &[x], hi, lo, 8192);
        assert!(dist(&a, &b) < 1e-8, "{a:?} vs {b:?}");
    }
}

#[test]
fn ddim_exact_on_single_component() {
    for schedule in [NoiseSchedule::default(), NoiseSchedule::ve(0.01, 10.0), NoiseSchedule::cosine(0.008)] {
        let oracle = GaussianMixtureOracle::uniform(vec![vec![0.7, -1.2]], schedule).unwrap();
        for n in [1, 3, 10, 57] {
            let cfg = SamplerConfig {
                schedule,
                steps: n,
                order: 1,
                chains: 4,
                ..SamplerConfig::default()
            };
            let grid = make_grid(&schedule, n, cfg.eps_clip).unwrap();
            let (a_n, s_n) = schedule.alpha_sigma(grid.time(n)).unwrap();
            let (a_0, s_0) = schedule.alpha_sigma(grid.time(0)).unwrap();
            for r in lml_sample(&cfg, &oracle).unwrap() {
                let x_n = r.states[0].as_slice();
                let exact: Vec<f64> = x_n
                    .iter()
                    .zip(oracle.center(0))
                    .map(|(x, y)| a_0 * y + s_0 * (x - a_n * y) / s_n)
                    .collect();
                let err = dist(r.final_state().as_slice(), &exact);
                assert!(err < 1e-10, "N={n} err {err}");
            }
        }
    }
}
