use pnpch_core::mms::{case_1d, case_2d, convergence_study, run_forced, ManufacturedCase};
use pnpch_core::{CellField, PeriodicGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D1: [f64; 7] = [-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0];
const D2: [f64; 7] = [2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0];

/// Sixth-order central first derivative of `f` along axis `k`.
fn d1(f: &dyn Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut acc = 0.0;
    for (j, w) in D1.iter().enumerate() {
        p[k] = x[k] + (j as f64 - 3.0) * h;
        acc += w * f(&p);
    }
    acc / (60.0 * h)
}

fn lap(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..x.len() {
        let mut p = x.to_vec();
        let mut s = 0.0;
        for (j, w) in D2.iter().enumerate() {
            p[k] = x[k] + (j as f64 - 3.0) * h;
            s += w * f(&p);
        }
        acc += s / (180.0 * h * h);
    }
    acc
}

/// Forcing recomputed from the continuum flux form with nested finite
/// differences in space and time; only point values of the exact fields
/// are used.
fn oracle_forcing(case: &ManufacturedCase, m: usize, t: f64, x: &[f64]) -> f64 {
    let h = 0.01;
    let sp = &case.species;
    let c = |y: &[f64]| case.exact_c(m, t, y);
    let mu = |y: &[f64]| {
        let mut v = sp.valence()[m] as f64 * case.exact_psi(t, y) + c(y).ln();
        for n in 0..sp.len() {
            v += case.g.get(m, n) * case.exact_c(n, t, y);
        }
        v - sp.sigma()[m] * lap(&c, y, h)
    };
    let mut div = 0.0;
    for k in 0..x.len() {
        let flux = |y: &[f64]| c(y) * d1(&mu, y, k, h);
        div += d1(&flux, x, k, h);
    }
    let ct = d1(&|s: &[f64]| case.exact_c(m, s[0], x), &[t], 0, 1e-3);
    ct - sp.epsilon()[m] * div
}

fn oracle_rho(case: &ManufacturedCase, t: f64, x: &[f64]) -> f64 {
    let psi = |y: &[f64]| case.exact_psi(t, y);
    let charge: f64 = (0..case.species.len())
        .map(|m| case.species.valence()[m] as f64 * case.exact_c(m, t, x))
        .sum();
    -case.kappa * lap(&psi, x, 0.01) - charge
}

fn scattered(case: &ManufacturedCase, count: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.random_range(0.0..case.final_time);
            let x = (0..case.dim)
                .map(|_| rng.random_range(case.lo..case.hi))
                .collect();
            (t, x)
        })
        .collect()
}

#[test]
fn forcing_matches_finite_difference_oracle() {
    for case in [case_1d(), case_2d()] {
        for (t, x) in scattered(&case, 40, 17) {
            for m in 0..2 {
                let a = case.forcing(m, t, &x);
                let b = oracle_forcing(&case, m, t, &x);
                assert!(
                    (a - b).abs() < 1e-8,
                    "{} m={m} t={t} x={x:?}: {a} vs {b}",
                    case.name
                );
            }
            let a = case.rho_f(t, &x);
            let b = oracle_rho(&case, t, &x);
            assert!(
                (a - b).abs() < 1e-8,
                "{} rho t={t} x={x:?}: {a} vs {b}",
                case.name
            );
        }
    }
}

#[test]
fn exact_mean_is_conserved() {
    let case = case_1d();
    for t in [0.0, 0.001, 0.0016] {
        let grid = PeriodicGrid::new(1, 64, -1.0, 1.0).unwrap();
        let c = CellField::from_fn(&grid, |x| case.exact_c(0, t, x));
        assert!((c.integral() - 0.4).abs() < 1e-14);
    }
}

#[test]
fn sampled_forcing_has_zero_mean() {
    for (case, n) in [(case_1d(), 100), (case_2d(), 20)] {
        let grid = case.grid(n).unwrap();
        for t in [0.0, 0.3 * case.final_time, case.final_time] {
            let f = case.sampled_forcing(&grid, t);
            for s in &f.source {
                assert!(
                    s.mean().abs() <= 1e-12 * s.max_abs(),
                    "{}: mean {}",
                    case.name,
                    s.mean()
                );
            }
        }
    }
}

#[test]
fn potential_error_ignores_constant_shift() {
    let case = case_1d();
    let mut shifted = case.clone();
    shifted.psi.offset += 3.0;
    let a = run_forced(&case, 50).unwrap();
    let b = run_forced(&shifted, 50).unwrap();
    assert!((a.err_psi - b.err_psi).abs() < 1e-12);
    assert_eq!(a.err_c, b.err_c);
}

#[test]
fn rejects_odd_or_tiny_levels() {
    assert!(run_forced(&case_1d(), 7).is_err());
    assert!(run_forced(&case_1d(), 6).is_err());
}

#[test]
fn halving_h_quarters_the_error() {
    let study = convergence_study(&case_1d(), &[100, 200, 400], (1.95, 2.05), 3).unwrap();
    for w in study.rows.windows(2) {
        for s in 0..2 {
            let r = w[0].err_c[s] / w[1].err_c[s];
            assert!((3.6..=4.4).contains(&r), "c{} ratio {r}", s + 1);
        }
        let r = w[0].err_psi / w[1].err_psi;
        assert!((3.6..=4.4).contains(&r), "psi ratio {r}");
    }
    assert!(study.passed);
}
