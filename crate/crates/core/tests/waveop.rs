mod common;

use common::*;
use faer::Mat;
use proptest::prelude::*;
use tdwo::diagnostics;
use tdwo::linalg::{self, CMat};
use tdwo::models::{BasisMode, Model, PulseSpec, ZerothOrderBasis};
use tdwo::oracle;
use tdwo::timegrid::TimeGrid;
use tdwo::waveop::*;
use tdwo::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn frob(b: &BlockSeries) -> f64 {
    b.norm_sqr().sqrt()
}

#[test]
fn residual_with_zero_x_is_the_coupling_block() {
    let (model, grid, active) = toy(true);
    let x = ReducedWaveOperator::zeros(6, 2, grid.len());
    let d = residual(&x, &model, &grid, &active).unwrap();
    for j in (0..grid.len()).step_by(17) {
        let h = model.hamiltonian(&active, grid.time(j));
        for q in 0..6 {
            for (p, &a) in active.indices().iter().enumerate() {
                let want = if active.contains(q) { c(0.0, 0.0) } else { h[(q, a)] };
                assert!((d.get(q, p, j) - want).norm() < 1e-14);
            }
        }
    }
}

#[test]
fn residual_vanishes_for_block_diagonal_hamiltonian() {
    let (mut model, grid, _) = toy(false);
    let active = ActiveSpace::new(vec![0, 2, 3, 4], 6).unwrap();
    // every coupling touching states 1 and 5 removed: {0,2,3,4} and {1,5} decouple
    model.basis.dipole = dipole(6, &[(0, 2, 1.0), (0, 3, 0.6), (0, 4, 0.3)]);
    let x = ReducedWaveOperator::zeros(6, 4, grid.len());
    let d = residual(&x, &model, &grid, &active).unwrap();
    assert_eq!(frob(&d), 0.0);
}

#[test]
fn residual_of_oracle_wave_operator_is_small() {
    let (model, grid, active) = toy(true);
    let (xo, _) = oracle::oracle_wave_operator(&model, &active, &grid, 100).unwrap();
    assert!(xo.is_structural(&active));
    let d = residual(&xo, &model, &grid, &active).unwrap();
    let d0 = residual(&ReducedWaveOperator::zeros(6, 2, grid.len()), &model, &grid, &active).unwrap();
    let rel = frob(&d) / frob(&d0);
    // the spectral residual has a grid floor set by the absorber ramp; the solver sits on the same floor
    let r = solve(&model, &grid, &active, &SolveOptions { eps: 1e-12, ..Default::default() }).unwrap();
    assert!(rel <= 1e-4, "relative residual {rel:e}");
    assert!((rel - r.relative_residual).abs() <= 1e-8, "{rel:e} vs {:e}", r.relative_residual);
}

#[test]
fn effective_hamiltonian_with_zero_x() {
    let (model, grid, active) = toy(true);
    let x = ReducedWaveOperator::zeros(6, 2, grid.len());
    let h = effective_hamiltonian(&x, &model, &grid, &active).unwrap();
    for j in (0..grid.len()).step_by(13) {
        let full = model.hamiltonian(&active, grid.time(j));
        let want = Mat::from_fn(2, 2, |r, k| full[(active.indices()[r], active.indices()[k])]);
        assert!(mat_diff(&h.at(j), &want) < 1e-15);
    }
}

#[test]
fn effective_hamiltonian_of_exact_single_state() {
    let (model, grid, _) = toy(true);
    let active = ActiveSpace::new(vec![0], 6).unwrap();
    let (xo, _) = oracle::oracle_wave_operator(&model, &active, &grid, 20).unwrap();
    let h = effective_hamiltonian(&xo, &model, &grid, &active).unwrap();
    let psi = oracle::oracle_propagate(&model, &active, &grid, &unit(6, 0), 20).unwrap();
    for j in 0..grid.len() {
        let ham = model.hamiltonian(&active, grid.time(j));
        let num: C64 = (0..6).map(|k| ham[(0, k)] * psi.states[j][k]).sum();
        let want = num / psi.states[j][0];
        assert!((h.at(j)[(0, 0)] - want).norm() < 1e-8);
    }
}

#[test]
fn dressed_diagonal_with_zero_x() {
    let (model, grid, active) = toy(true);
    let x = ReducedWaveOperator::zeros(6, 2, grid.len());
    let d = dressed_diagonal(&x, &model, &grid, &active).unwrap();
    for q in active.complement() {
        for j in 0..grid.len() {
            let t = grid.time(j);
            let want = model.basis.energies[q] - c(0.0, model.absorber_at(t));
            assert!((d.row(q)[j] - want).norm() < 1e-15);
            if t <= 30.0 {
                assert_eq!(d.row(q)[j], model.basis.energies[q]);
            }
        }
    }
    for &a in active.indices() {
        assert!(d.row(a).iter().all(|z| *z == c(0.0, 0.0)));
    }
}

#[test]
fn dressed_diagonal_matches_dense_formula() {
    let (mut model, grid, active) = toy(true);
    // a diagonal dipole element exercises the μ_qq term
    model.basis.dipole[(3, 3)] = c(0.25, 0.0);
    let mut x = ReducedWaveOperator::zeros(6, 2, grid.len());
    for q in active.complement() {
        for p in 0..2 {
            for j in 0..grid.len() {
                let s = (q * 7 + p * 3 + j) as f64;
                x.samples.set(q, p, j, c(0.01 * (0.3 * s).sin(), 0.02 * (0.7 * s).cos()));
            }
        }
    }
    let d = dressed_diagonal(&x, &model, &grid, &active).unwrap();
    for j in (0..grid.len()).step_by(7) {
        let h = model.hamiltonian(&active, grid.time(j));
        let xj = x.at(j);
        for q in active.complement() {
            let mut want = h[(q, q)];
            for (p, &a) in active.indices().iter().enumerate() {
                want -= xj[(q, p)] * h[(a, q)];
            }
            assert!((d.row(q)[j] - want).norm() < 1e-14);
        }
    }
}

fn series_const(m: usize, grid: &TimeGrid, h: CMat) -> EffectiveHamiltonianSeries {
    EffectiveHamiltonianSeries::from_fn(m, grid, move |_| h.clone())
}

#[test]
fn constant_diagonal_propagator() {
    let grid = TimeGrid::new(10.0, 64).unwrap();
    let e = [0.3, -1.2, 2.5];
    let h = Mat::from_fn(3, 3, |i, j| if i == j { c(e[i], 0.0) } else { c(0.0, 0.0) });
    for rule in [StepRule::Integral, StepRule::Commutator] {
        let p = propagate_effective(&series_const(3, &grid, h.clone()), &grid, 1.0, rule);
        for k in 0..=grid.len() {
            let t = k as f64 * grid.dt();
            for i in 0..3 {
                assert!((p.forward[k][(i, i)] - C64::from_polar(1.0, -e[i] * t)).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn rabi_rotation() {
    let grid = TimeGrid::new(20.0, 128).unwrap();
    let (a, b, g, hbar) = (0.4, -0.2, 0.35, 0.7);
    let h = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => c(a, 0.0),
        (1, 1) => c(b, 0.0),
        _ => c(g, 0.0),
    });
    let p = propagate_effective(&series_const(2, &grid, h), &grid, hbar, StepRule::Commutator);
    let d = (a - b) / 2.0;
    let w = (d * d + g * g).sqrt();
    for k in 0..=grid.len() {
        let t = k as f64 * grid.dt();
        let ph = C64::from_polar(1.0, -(a + b) / 2.0 * t / hbar);
        let (cs, sn) = ((w * t / hbar).cos(), (w * t / hbar).sin());
        let want = Mat::from_fn(2, 2, |i, j| {
            let z = match (i, j) {
                (0, 0) => c(cs, -sn * d / w),
                (1, 1) => c(cs, sn * d / w),
                _ => c(0.0, -sn * g / w),
            };
            ph * z
        });
        assert!(mat_diff(&p.forward[k], &want) < 1e-10);
        assert!(mat_diff(&(&p.forward[k] * &p.inverse[k]), &linalg::identity(2)) < 1e-12);
    }
}

fn three_level(t: f64) -> CMat {
    let f = 0.4 * (-((t - 5.0) / 1.0).powi(2)).exp();
    let e = [0.0, 0.8, 1.9];
    Mat::from_fn(3, 3, |i, j| {
        if i == j {
            c(e[i], 0.02 * f)
        } else if i + j == 1 {
            c(f * (1.1 * t).cos(), 0.0)
        } else if i + j == 3 {
            c(0.5 * f * (0.9 * t).cos(), 0.1 * f)
        } else {
            c(0.0, 0.0)
        }
    })
}

/// Largest deviation from 1000 midpoint substeps per interval.
fn fine_step_error(points: usize) -> f64 {
    let grid = TimeGrid::new(10.0, points).unwrap();
    let series = EffectiveHamiltonianSeries::from_fn(3, &grid, three_level);
    let p = propagate_effective(&series, &grid, 1.0, StepRule::Commutator);
    let sub = 1000;
    let h = grid.dt() / sub as f64;
    let mut u = linalg::identity(3);
    let mut worst = 0.0f64;
    for k in 0..grid.len() {
        for s in 0..sub {
            let tm = grid.time(k) + (s as f64 + 0.5) * h;
            u = linalg::expm(linalg::scale(three_level(tm).as_ref(), c(0.0, -h)).as_ref()) * &u;
        }
        worst = worst.max(mat_diff(&p.forward[k + 1], &u));
    }
    worst
}

#[test]
fn time_dependent_propagator_matches_fine_steps() {
    let coarse = fine_step_error(128);
    let fine = fine_step_error(256);
    assert!(fine < 1e-6, "max deviation {fine:e}");
    assert!(coarse / fine > 10.0, "order ratio {}", coarse / fine);
}

#[test]
fn commutator_rule_beats_plain_integral() {
    let grid = TimeGrid::new(10.0, 128).unwrap();
    let series = EffectiveHamiltonianSeries::from_fn(3, &grid, three_level);
    let fine = TimeGrid::new(10.0, 2048).unwrap();
    let reference = propagate_effective(&EffectiveHamiltonianSeries::from_fn(3, &fine, three_level), &fine, 1.0, StepRule::Commutator);
    let end = &reference.forward[fine.len()];
    let e1 = mat_diff(&propagate_effective(&series, &grid, 1.0, StepRule::Integral).forward[grid.len()], end);
    let e4 = mat_diff(&propagate_effective(&series, &grid, 1.0, StepRule::Commutator).forward[grid.len()], end);
    assert!(e4 < 0.1 * e1, "commutator {e4:e}, integral {e1:e}");
}

/// Two levels, one active (energy e_p) and one complement (energy e_q).
fn two_level(e_p: f64, e_q: f64) -> (Model, TimeGrid, ActiveSpace) {
    let basis = ZerothOrderBasis::from_parts(vec![c(e_p, 0.0), c(e_q, 0.0)], Mat::zeros(2, 2), BasisMode::Hermitian).unwrap();
    (Model::new(basis, Vec::new(), None), TimeGrid::new(40.0, 1024).unwrap(), ActiveSpace::new(vec![0], 2).unwrap())
}

#[test]
fn zero_source_gives_zero_increment() {
    let (model, grid, active) = two_level(0.1, 0.9);
    let x = ReducedWaveOperator::zeros(2, 1, grid.len());
    let heff = effective_hamiltonian(&x, &model, &grid, &active).unwrap();
    let diag = dressed_diagonal(&x, &model, &grid, &active).unwrap();
    let delta = BlockSeries::zeros(2, 1, grid.len());
    let inc = increment(&model, &grid, &active, &delta, &heff, &diag, 0.05, 1e-10).unwrap();
    assert_eq!(inc.samples.norm_sqr(), 0.0);
}

#[test]
fn increment_matches_quadrature() {
    let (e_p, e_q) = (0.1, 0.9);
    let (model, grid, active) = two_level(e_p, e_q);
    let x = ReducedWaveOperator::zeros(2, 1, grid.len());
    let heff = effective_hamiltonian(&x, &model, &grid, &active).unwrap();
    let diag = dressed_diagonal(&x, &model, &grid, &active).unwrap();
    let d0 = c(0.03, -0.01);
    let src = |t: f64| d0 * (-((t - 20.0) / 4.0).powi(2)).exp();
    let mut delta = BlockSeries::zeros(2, 1, grid.len());
    for j in 0..grid.len() {
        delta.set(1, 0, j, src(grid.time(j)));
    }
    let inc = increment(&model, &grid, &active, &delta, &heff, &diag, 0.0, 1e-10).unwrap();
    // iħ δẊ = e_q δX − δX e_p + Δ, δX(0) = 0, by composite Simpson
    let w = e_q - e_p;
    let integrand = |t: f64, s: f64| -c(0.0, 1.0) * C64::from_polar(1.0, -w * (t - s)) * src(s);
    let mut worst = 0.0f64;
    for j in (0..grid.len()).step_by(8) {
        let t = grid.time(j);
        let n = 2000;
        let h = t / n as f64;
        let mut acc = c(0.0, 0.0);
        if j > 0 {
            for k in 0..=n {
                let wgt = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += integrand(t, k as f64 * h) * wgt;
            }
            acc *= h / 3.0;
        }
        worst = worst.max((inc.samples.get(1, 0, j) - acc).norm());
        assert_eq!(inc.samples.get(0, 0, j), c(0.0, 0.0));
    }
    assert!(worst < 1e-8, "max deviation {worst:e}");
}

#[test]
fn pulses_off_converges_immediately() {
    let (mut model, grid, active) = toy(false);
    model.pulses.clear();
    let r = solve(&model, &grid, &active, &SolveOptions::default()).unwrap();
    assert!(r.converged());
    assert_eq!(r.factors, vec![0.0]);
    assert_eq!(r.x.samples.norm_sqr(), 0.0);
    for &i in active.indices() {
        let s = propagate_state(&r, &unit(6, i)).unwrap();
        for (k, t) in s.times.iter().enumerate() {
            let want = C64::from_polar(1.0, -TOY_ENERGIES[i] * t);
            assert!((s.states[k][i] - want).norm() < 1e-12);
            assert!((0..6).filter(|&r| r != i).all(|r| s.states[k][r] == c(0.0, 0.0)));
        }
    }
}

#[test]
fn state_outside_active_space_is_rejected() {
    let (model, grid, active) = toy(true);
    let r = solve(&model, &grid, &active, &SolveOptions::default()).unwrap();
    assert!(propagate_state(&r, &unit(6, 3)).is_err());
}

#[test]
fn increment_forms_agree() {
    let (model, grid, active) = toy(true);
    let direct = solve(&model, &grid, &active, &SolveOptions { eps: 1e-14, ..Default::default() }).unwrap();
    let resid = solve(&model, &grid, &active, &SolveOptions { eps: 1e-14, form: IncrementForm::Residual, ..Default::default() }).unwrap();
    assert!(direct.converged() && resid.converged());
    let mut worst = 0.0f64;
    for j in 0..grid.len() {
        worst = worst.max(mat_diff(&direct.x.at(j), &resid.x.at(j)));
    }
    assert!(worst < 1e-6, "max deviation {worst:e}");
}

#[test]
fn converged_fixed_point_is_stationary() {
    let (model, grid, active) = toy(true);
    let r = solve(&model, &grid, &active, &SolveOptions { eps: 1e-12, ..Default::default() }).unwrap();
    assert!(r.converged());
    assert!(*r.factors.last().unwrap() <= 1e-12);
    let d = residual(&r.x, &model, &grid, &active).unwrap();
    let d0 = residual(&ReducedWaveOperator::zeros(6, 2, grid.len()), &model, &grid, &active).unwrap();
    assert!((frob(&d) / frob(&d0) - r.relative_residual).abs() < 1e-12);
    let tighter = solve(&model, &grid, &active, &SolveOptions { eps: 1e-14, ..Default::default() }).unwrap();
    assert!((tighter.relative_residual - r.relative_residual).abs() < 1e-10);
}

#[test]
fn hermitian_norm_is_conserved() {
    let (model, grid, active) = toy(false);
    let opts = SolveOptions::default();
    let r = solve(&model, &grid, &active, &opts).unwrap();
    assert!(r.converged());
    for &i in active.indices() {
        let p = diagnostics::transition_probabilities(&r, i).unwrap();
        for k in 0..=grid.len() {
            assert!((p.total(k).sqrt() - 1.0).abs() <= 10.0 * opts.eps, "norm error {:e}", (p.total(k).sqrt() - 1.0).abs());
        }
    }
}

#[test]
fn halving_eps_moves_probabilities_by_less_than_eps() {
    let (model, grid, active) = toy(true);
    let eps = 1e-7;
    let a = solve(&model, &grid, &active, &SolveOptions { eps, ..Default::default() }).unwrap();
    let b = solve(&model, &grid, &active, &SolveOptions { eps: eps / 2.0, ..Default::default() }).unwrap();
    for &i in active.indices() {
        let pa = diagnostics::transition_probabilities(&a, i).unwrap();
        let pb = diagnostics::transition_probabilities(&b, i).unwrap();
        for k in 0..=grid.len() {
            for j in 0..6 {
                assert!((pa.probabilities[k][j] - pb.probabilities[k][j]).abs() <= eps);
            }
        }
    }
}

#[test]
fn invalid_options_are_rejected() {
    let (model, grid, active) = toy(true);
    assert!(solve(&model, &grid, &active, &SolveOptions { eps: 0.0, ..Default::default() }).is_err());
    assert!(solve(&model, &grid, &active, &SolveOptions { max_iterations: 0, ..Default::default() }).is_err());
}

fn random_model(energies: &[f64], couplings: &[f64], amp: f64) -> (Model, TimeGrid, ActiveSpace) {
    let n = energies.len();
    let mut d = Mat::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            d[(i, j)] = c(couplings[k], 0.0);
            d[(j, i)] = c(couplings[k], 0.0);
            k += 1;
        }
    }
    let mut e: Vec<C64> = energies.iter().map(|&x| c(x, 0.0)).collect();
    e[0] = c(0.0, 0.0);
    let basis = ZerothOrderBasis::from_parts(e, d, BasisMode::Hermitian).unwrap();
    let pulses = vec![PulseSpec { amplitude: amp, frequency: 1.0, center: 12.0, width: 3.0 }];
    let model = Model::new(basis, pulses, Some(tdwo::models::TimeAbsorber::with_damping(24.0, 32.0, 2.0, 25.0)));
    (model, TimeGrid::new(32.0, 256).unwrap(), ActiveSpace::new(vec![0, 1], n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_models_keep_structure_and_match_oracle(
        energies in proptest::collection::vec(0.2f64..3.0, 5),
        couplings in proptest::collection::vec(-1.0f64..1.0, 10),
        amp in 0.005f64..0.04,
    ) {
        let (model, grid, active) = random_model(&energies, &couplings, amp);
        let r = solve(&model, &grid, &active, &SolveOptions { eps: 1e-13, max_iterations: 60, ..Default::default() }).unwrap();
        prop_assert!(r.x.is_structural(&active));
        prop_assume!(r.converged());
        for &i in active.indices() {
            let got = propagate_state(&r, &unit(5, i)).unwrap();
            let want = oracle::oracle_propagate(&model, &active, &grid, &unit(5, i), 100).unwrap();
            for (k, t) in got.times.iter().enumerate() {
                if *t <= 24.0 {
                    prop_assert!(max_diff(&got.states[k], &want.states[k]) <= 1e-6);
                }
            }
        }
    }
}
