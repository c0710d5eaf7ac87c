//! Randomised invariant checks shared by the property suite and the
//! acceptance runner. Every check drives a proptest runner with a fixed seed.

#![allow(dead_code)]

use std::collections::BTreeMap;

use koopman_family::dmd::{self, companion_coefficients, companion_matrix, local_operator, StencilWindow};
use koopman_family::koopman::{algorithm1, algorithm2, theorem2_sweep, Algorithm1Options, Algorithm2Options};
use koopman_family::linalg::{self, c, eig, expm, identity, project_onto_span, real_matrix, CMatrix, CVector, C64};
use koopman_family::snapshots::{
    apply_observables, reconstruct_state, sample_trajectory, ObservableMap, SnapshotMatrix, TimeGrid,
};
use koopman_family::systems::{
    catalog, catalog_entry, fundamental_matrix, integrate_rk4, Harmonic, SpiralBlock, SystemSpec, CATALOG_NAMES,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

pub const SEED: u64 = 0x6b6f_6f70;

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        rng_seed: RngSeed::Fixed(SEED),
        failure_persistence: None,
        ..Config::default()
    })
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn square(max_n: usize, bound: f64) -> impl Strategy<Value = CMatrix> {
    (1..=max_n).prop_flat_map(move |n| {
        proptest::collection::vec(-bound..bound, n * n).prop_map(move |e| real_matrix(n, n, &e))
    })
}

fn overrides(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Catalog systems with randomised parameters, all with closed-form oracles.
pub fn random_catalog() -> impl Strategy<Value = (String, BTreeMap<String, f64>)> {
    prop_oneof![
        (0.5..3.0f64, 0.5..3.0f64, 50usize..150).prop_map(|(w1, w2, m)| (
            "switching-frequency".to_string(),
            overrides(&[
                ("omega1", w1),
                ("omega2", w2),
                ("period", m as f64 * 0.01),
                ("horizon", 10.0)
            ])
        )),
        (0.1..1.0f64, -1.0..-0.1f64, 1.0..3.0f64).prop_map(|(s1, s2, w)| (
            "switching-damped-driven".to_string(),
            overrides(&[("sigma1", s1), ("sigma2", s2), ("omega", w), ("horizon", 10.0)])
        )),
        (2.0..6.0f64, 6.0..12.0f64).prop_map(|(k1, k3)| (
            "hybrid-coupled-osc".to_string(),
            overrides(&[("k1_even", k1), ("k3_odd", k3), ("horizon", 10.0)])
        )),
        (0.05..0.2f64, 100usize..400).prop_map(|(k, m)| (
            "multicompartment".to_string(),
            overrides(&[("k12", k), ("t23", m as f64 * 0.01)])
        )),
        (1.0..3.0f64, 0.0..0.8f64, 0.5..4.0f64).prop_map(|(w0, a, wd)| (
            "cont-frequency".to_string(),
            overrides(&[("omega0", w0), ("a_d", a), ("omega_d", wd)])
        )),
        (-0.5..0.5f64, 0.0..0.8f64, 0.5..4.0f64).prop_map(|(s0, a, wd)| (
            "cont-damping".to_string(),
            overrides(&[("sigma0", s0), ("a_d", a), ("omega_d", wd)])
        )),
        (0.0..0.6f64, 0.0..0.6f64)
            .prop_map(|(a1, a2)| ("cont-coupled-osc".to_string(), overrides(&[("amp1", a1), ("amp2", a2)]))),
        (-1.0..1.0f64, 0.0..1.0f64, 0.5..3.0f64).prop_map(|(a, amp, f)| (
            "scalar".to_string(),
            overrides(&[("a", a), ("a_cos_amp", amp), ("a_freq", f)])
        )),
    ]
}

fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

// ---- linalg ----

pub fn eig_reconstructs() -> Result<(), String> {
    run(256, square(5, 2.0), |a| {
        let d = eig(&a).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if d.condition > 1e6 {
            return Ok(());
        }
        let scale = linalg::spectral_norm(&a).max(1e-300);
        let diag = CMatrix::from_diagonal(&CVector::from_vec(d.values.clone()));
        let back = &d.right * diag * d.left.adjoint();
        check((back - &a).norm() <= 1e-9 * scale, || format!("reconstruction of {a}"))?;
        for i in 0..d.values.len() {
            let v = d.right.column(i);
            let w = d.left.column(i);
            check((&a * v - v * d.values[i]).norm() <= 1e-10 * scale, || {
                format!("right residual {i}")
            })?;
            check(
                (w.adjoint() * &a - w.adjoint() * d.values[i]).norm() <= 1e-10 * scale * w.norm(),
                || format!("left residual {i}"),
            )?;
        }
        let gram = d.left.adjoint() * &d.right;
        check((gram - identity(d.values.len())).norm() <= 1e-9 * d.condition, || {
            "biorthogonality".into()
        })
    })
}

pub fn expm_inverse() -> Result<(), String> {
    run(256, square(5, 2.0), |a| {
        let norm = linalg::spectral_norm(&a);
        let a = if norm > 5.0 { a * c(5.0 / norm, 0.0) } else { a };
        let p = expm(&a).unwrap() * expm(&-a.clone()).unwrap();
        check((p - identity(a.nrows())).norm() <= 1e-10, || {
            "expm(A)expm(-A) != I".into()
        })
    })
}

pub fn expm_semigroup() -> Result<(), String> {
    run(256, (square(5, 1.0), 0.0..2.0f64, 0.0..2.0f64), |(a, s, t)| {
        let lhs = expm(&(&a * c(s + t, 0.0))).unwrap();
        let rhs = expm(&(&a * c(s, 0.0))).unwrap() * expm(&(&a * c(t, 0.0))).unwrap();
        check(rel_err(&rhs, &lhs) <= 1e-10, || format!("s={s} t={t}"))
    })
}

pub fn projection_orthogonal() -> Result<(), String> {
    let vectors = (2usize..6).prop_flat_map(|n| {
        (
            proptest::collection::vec(proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n), 1..n),
            proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n),
        )
    });
    run(256, vectors, |(basis, target)| {
        let to_vec = |v: &Vec<(f64, f64)>| CVector::from_iterator(v.len(), v.iter().map(|&(re, im)| c(re, im)));
        let basis: Vec<CVector> = basis.iter().map(to_vec).collect();
        let target = to_vec(&target);
        let p = project_onto_span(&basis, &target).unwrap();
        for b in &basis {
            let inner = b.dotc(&p.residual).norm();
            check(
                inner <= 1e-10 * p.residual.norm().max(1e-300) * b.norm() + 1e-12 * target.norm() * b.norm(),
                || format!("<r, b> = {inner}"),
            )?;
        }
        Ok(())
    })
}

// ---- systems ----

pub fn composition() -> Result<(), String> {
    run(
        96,
        (random_catalog(), 0usize..1000, 0usize..1000, 0usize..1000),
        |((name, params), a, b, d)| {
            let spec = catalog(&name, &params).unwrap();
            let mut idx = [a, b, d];
            idx.sort_unstable();
            let [i0, i1, i2] = idx.map(|i| i as f64 * 0.01);
            let m = |t: f64, s: f64| fundamental_matrix(&spec, t, s).unwrap().matrix;
            let direct = m(i2, i0);
            let composed = m(i2, i1) * m(i1, i0);
            check(rel_err(&composed, &direct) <= 1e-10, || {
                format!("{name} ({i0}, {i1}, {i2})")
            })
        },
    )
}

pub fn rk4_matches_oracle() -> Result<(), String> {
    run(24, random_catalog(), |(name, params)| {
        let entry = catalog_entry(&name, &params).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 300).unwrap();
        let x0 = linalg::real_vector(&entry.x0);
        let exact = sample_trajectory(&entry.spec, &x0, grid).unwrap();
        let rk = integrate_rk4(&entry.spec, &x0, grid, 100).unwrap();
        for k in 0..grid.columns() {
            let scale = exact.column(k).norm().max(1.0);
            check((rk.column(k) - exact.column(k)).norm() <= 1e-9 * scale, || {
                format!("{name} k={k}")
            })?;
        }
        Ok(())
    })
}

pub fn multicompartment_conservation() -> Result<(), String> {
    let rates = proptest::collection::vec((0.0..0.3f64, 0.0..40.0f64), 6);
    run(32, rates, |rates| {
        let keys = ["12", "21", "23", "34", "41", "45"];
        let params: BTreeMap<String, f64> = keys
            .iter()
            .zip(&rates)
            .flat_map(|(key, &(k, t))| [(format!("k{key}"), k), (format!("t{key}"), t)])
            .collect();
        let spec = catalog("multicompartment", &params).unwrap();
        let grid = TimeGrid::new(0.0, 0.5, 120).unwrap();
        let snaps = sample_trajectory(&spec, &linalg::real_vector(&[0.2, 0.3, 0.1, 0.25, 0.15]), grid).unwrap();
        for k in 0..grid.columns() {
            let total: C64 = snaps.column(k).iter().sum();
            check((total - c(1.0, 0.0)).norm() <= 1e-10, || format!("k={k} total={total}"))?;
        }
        Ok(())
    })
}

fn harmonic() -> impl Strategy<Value = Harmonic> {
    (-2.0..2.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..4.0f64).prop_map(|(a, b, c, f)| Harmonic::new(a, b, c, f))
}

pub fn spiral_commutes() -> Result<(), String> {
    run(
        256,
        (harmonic(), harmonic(), 0.0..10.0f64, 0.0..10.0f64),
        |(sigma, omega, t1, t2)| {
            let spec = SystemSpec::spiral(
                2,
                vec![SpiralBlock {
                    first: 0,
                    second: 1,
                    sigma,
                    omega,
                }],
            )
            .unwrap();
            let (a1, a2) = (spec.matrix_at(t1), spec.matrix_at(t2));
            let scale = a1.norm() * a2.norm();
            check((&a1 * &a2 - &a2 * &a1).norm() <= 1e-12 * scale.max(1.0), || {
                "non-commuting".into()
            })
        },
    )
}

// ---- snapshots ----

pub fn observable_round_trip() -> Result<(), String> {
    let states = proptest::collection::vec(prop_oneof![-5.0..-0.01f64, 0.01..5.0f64], 4);
    run(256, (states, 0usize..3), |(x, layout)| {
        let pairs = match layout {
            0 => vec![(0, 1), (2, 3)],
            1 => vec![(0, 2), (1, 3)],
            _ => vec![(3, 1)],
        };
        let map = ObservableMap::new(4, pairs).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 0).unwrap();
        let snaps = SnapshotMatrix::new(
            grid,
            CMatrix::from_column_slice(4, 1, &x.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>()),
            koopman_family::snapshots::state_labels(4),
        )
        .unwrap();
        let back = reconstruct_state(&map, &apply_observables(&map, &snaps).unwrap()).unwrap();
        check(
            (&back.values - &snaps.values).norm() <= 1e-10 * snaps.values.norm(),
            || format!("{x:?}"),
        )
    })
}

pub fn radius_log_ratio() -> Result<(), String> {
    run(64, (harmonic(), harmonic(), 0.005..0.05f64), |(sigma, omega, dt)| {
        let block = SpiralBlock {
            first: 0,
            second: 1,
            sigma,
            omega,
        };
        let spec = SystemSpec::spiral(2, vec![block]).unwrap();
        let grid = TimeGrid::new(0.0, dt, 100).unwrap();
        let snaps = sample_trajectory(&spec, &linalg::real_vector(&[1.0, 1.0]), grid).unwrap();
        let u = apply_observables(&ObservableMap::new(2, vec![(0, 1)]).unwrap(), &snaps).unwrap();
        for k in 1..grid.columns() {
            let ratio = (u.values[(0, k)] / u.values[(0, k - 1)]).re.ln();
            let (alpha, _) = block.exponents(grid.time(k - 1), grid.time(k));
            check((ratio - alpha).abs() <= 1e-10, || format!("k={k}"))?;
        }
        Ok(())
    })
}

// ---- dmd ----

fn stable_system(n: usize) -> impl Strategy<Value = CMatrix> {
    proptest::collection::vec(-1.5..1.5f64, n * n).prop_map(move |e| real_matrix(n, n, &e))
}

fn constant_snapshots(a: &CMatrix, x0: &[f64], dt: f64, steps: usize) -> SnapshotMatrix {
    let spec = SystemSpec::constant(a.clone()).unwrap();
    sample_trajectory(&spec, &linalg::real_vector(x0), TimeGrid::new(0.0, dt, steps).unwrap()).unwrap()
}

pub fn companion_operator_agree() -> Result<(), String> {
    let case = (2usize..4).prop_flat_map(|n| (stable_system(n), proptest::collection::vec(0.5..1.5f64, n)));
    run(128, case, |(a, x0)| {
        let n = a.nrows();
        let snaps = constant_snapshots(&a, &x0, 0.1, n + 2);
        let window = StencilWindow::new(1, n);
        let comp = companion_coefficients(&snaps, window).unwrap();
        let op = local_operator(&snaps, StencilWindow::new(1, n), dmd::DEFAULT_RANK_TOL).unwrap();
        if comp.rank < n || op.rank_used < n || linalg::condition_number(&snaps.values.columns(0, n).into_owned()) > 1e6
        {
            return Ok(());
        }
        let mut from_companion = linalg::eigenvalues(&companion_matrix(&comp.coefficients)).unwrap();
        let from_operator = linalg::eigenvalues(&op.matrix).unwrap();
        from_companion.sort_by(linalg::canonical_cmp);
        let (perm, _) = linalg::match_branches(&from_operator, &from_companion);
        for (b, &i) in perm.iter().enumerate() {
            check((from_companion[i] - from_operator[b]).norm() <= 1e-9, || format!("{a}"))?;
        }
        Ok(())
    })
}

pub fn residual_zero_iff_recurrence() -> Result<(), String> {
    let case = (stable_system(2), 0.5..3.0f64, 0.5..3.0f64, 0usize..2);
    run(128, case, |(a, w1, w2, offset)| {
        let exact = constant_snapshots(&a, &[1.0, 0.7], 0.05, 10);
        for k in 1..=6 {
            let r = local_operator(&exact, StencilWindow::new(k, 3), dmd::DEFAULT_RANK_TOL).unwrap();
            check(r.residual_rel <= 1e-12, || {
                format!("clean window {k}: {}", r.residual_rel)
            })?;
        }
        if (w1 - w2).abs() < 0.2 {
            return Ok(());
        }
        let params = overrides(&[("omega1", w1), ("omega2", w2), ("period", 0.5), ("horizon", 2.0)]);
        let spec = catalog("switching-frequency", &params).unwrap();
        let snaps = sample_trajectory(
            &spec,
            &linalg::real_vector(&[1.0, 1.0]),
            TimeGrid::new(0.0, 0.05, 20).unwrap(),
        )
        .unwrap();
        // switch at column 10; windows k = 9, 10 straddle it
        let k = 9 + offset;
        let r = local_operator(&snaps, StencilWindow::new(k, 3), dmd::DEFAULT_RANK_TOL).unwrap();
        check(r.residual_rel > 1e-12, || {
            format!("straddling window {k}: {}", r.residual_rel)
        })
    })
}

pub fn scale_equivariance() -> Result<(), String> {
    let case = (0.1..10.0f64, 0.5..3.0f64, 0.5..3.0f64);
    run(128, case, |(gamma, w1, w2)| {
        let params = overrides(&[("omega1", w1), ("omega2", w2), ("period", 0.5), ("horizon", 2.0)]);
        let spec = catalog("switching-frequency", &params).unwrap();
        let base = sample_trajectory(
            &spec,
            &linalg::real_vector(&[1.0, 1.0]),
            TimeGrid::new(0.0, 0.05, 20).unwrap(),
        )
        .unwrap();
        let mut scaled = base.clone();
        scaled.values *= c(gamma, 0.0);
        for k in [2usize, 9] {
            let w = StencilWindow::new(k, 2);
            let (c0, c1) = (
                companion_coefficients(&base, w).unwrap(),
                companion_coefficients(&scaled, w).unwrap(),
            );
            check(
                (&c0.coefficients - &c1.coefficients).norm() <= 1e-9 * c0.coefficients.norm().max(1.0),
                || "coefficients".into(),
            )?;
            check(
                (c1.residual_norm - gamma * c0.residual_norm).abs()
                    <= 1e-9 * gamma * c0.residual_norm + 1e-12 * gamma * base.values.norm(),
                || {
                    format!(
                        "residual k={k}: {} vs {} (gamma {gamma})",
                        c1.residual_norm,
                        gamma * c0.residual_norm
                    )
                },
            )?;
            let w = StencilWindow::new(k, 3);
            let (m0, m1) = (
                local_operator(&base, w, dmd::DEFAULT_RANK_TOL).unwrap(),
                local_operator(&scaled, w, dmd::DEFAULT_RANK_TOL).unwrap(),
            );
            let (mut e0, mut e1) = (
                linalg::eigenvalues(&m0.matrix).unwrap(),
                linalg::eigenvalues(&m1.matrix).unwrap(),
            );
            e0.sort_by(linalg::canonical_cmp);
            e1.sort_by(linalg::canonical_cmp);
            for (x, y) in e0.iter().zip(&e1) {
                check((x - y).norm() <= 1e-9, || "eigenvalues".into())?;
            }
            check(
                (m1.residual_norm - gamma * m0.residual_norm).abs()
                    <= 1e-9 * gamma * m0.residual_norm + 1e-12 * gamma * base.values.norm(),
                || "operator residual".into(),
            )?;
        }
        Ok(())
    })
}

// ---- koopman ----

fn switching_case() -> impl Strategy<Value = (f64, f64, usize)> {
    (0.5..3.0f64, 0.5..3.0f64, 40usize..120).prop_filter("distinct segments", |(w1, w2, _)| (w1 - w2).abs() > 0.1)
}

pub fn accumulation_identity() -> Result<(), String> {
    run(32, switching_case(), |(w1, w2, m)| {
        let params = overrides(&[
            ("omega1", w1),
            ("omega2", w2),
            ("period", m as f64 * 0.01),
            ("horizon", 5.0),
        ]);
        let spec = catalog("switching-frequency", &params).unwrap();
        let snaps = sample_trajectory(
            &spec,
            &linalg::real_vector(&[1.0, 1.0]),
            TimeGrid::new(0.0, 0.01, 400).unwrap(),
        )
        .unwrap();
        let result = algorithm1(&snaps, &Algorithm1Options::default()).unwrap();
        let fam = &result.family;
        check(fam.accumulated[0] == identity(2), || "M_00".into())?;
        for k in 1..fam.accumulated.len() {
            check(
                fam.accumulated[k] == &fam.locals[k - 1].matrix * &fam.accumulated[k - 1],
                || format!("k={k}"),
            )?;
        }
        for perm in &result.series.matching {
            let mut seen = perm.clone();
            seen.sort_unstable();
            check(seen == (0..perm.len()).collect::<Vec<_>>(), || {
                format!("{perm:?} not a permutation")
            })?;
        }
        Ok(())
    })
}

pub fn algorithm1_segment_exactness() -> Result<(), String> {
    run(32, (switching_case(), 0usize..2), |((w1, w2, m), which)| {
        let name = ["switching-frequency", "switching-damped-driven"][which];
        let params = if which == 0 {
            overrides(&[
                ("omega1", w1),
                ("omega2", w2),
                ("period", m as f64 * 0.01),
                ("horizon", 5.0),
            ])
        } else {
            overrides(&[("omega", w1), ("horizon", 5.0)])
        };
        let spec = catalog(name, &params).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 400).unwrap();
        let snaps = sample_trajectory(&spec, &linalg::real_vector(&[1.0, 1.0]), grid).unwrap();
        let result = algorithm1(&snaps, &Algorithm1Options::default()).unwrap();
        let SystemSpec::Hybrid { switch_times, .. } = &spec else {
            unreachable!()
        };
        let s = result.stencil;
        for k in 1..=grid.steps + 1 - s {
            let (lo, hi) = (grid.time(k - 1), grid.time(k + s - 1));
            if switch_times.iter().any(|&t| t > lo + 1e-9 && t < hi - 1e-9) {
                continue;
            }
            let exact = expm(&(spec.matrix_at(0.5 * (lo + hi)) * c(grid.dt, 0.0))).unwrap();
            let local = &result.family.locals[k - 1].matrix;
            check((local - &exact).norm() <= 1e-10, || {
                format!("{name} k={k}: {}", (local - &exact).norm())
            })?;
        }
        Ok(())
    })
}

pub fn algorithm2_branch_consistency() -> Result<(), String> {
    run(32, (1.0..3.0f64, 0.0..0.8f64, 0.5..4.0f64), |(w0, a, wd)| {
        let entry = catalog_entry(
            "cont-frequency",
            &overrides(&[("omega0", w0), ("a_d", a), ("omega_d", wd)]),
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 500).unwrap();
        let snaps = sample_trajectory(&entry.spec, &linalg::real_vector(&entry.x0), grid).unwrap();
        let map = ObservableMap::new(2, entry.pairs.clone()).unwrap();
        let (series, _) = algorithm2(&apply_observables(&map, &snaps).unwrap(), &Algorithm2Options::default()).unwrap();
        let SystemSpec::Spiral { blocks, .. } = &entry.spec else {
            unreachable!()
        };
        let mut running = 0.0;
        for k in 1..grid.columns() {
            running += (series.system_eigs[k][1] * c(grid.dt, 0.0)).im;
            let lambda = series.koopman_eigs[k][1];
            let (_, beta) = blocks[0].exponents(0.0, grid.time(k));
            check((lambda.im - running).abs() <= 1e-12 * k as f64, || format!("sum k={k}"))?;
            check((lambda.im + beta).abs() <= 1e-9, || {
                format!("k={k}: {} vs {}", lambda.im, -beta)
            })?;
        }
        Ok(())
    })
}

pub fn theorem2_order() -> Result<(), String> {
    run(24, (0usize..2, 0.2..0.5f64, 0.3..0.7f64), |(which, amp, t)| {
        let name = ["cont-frequency", "cont-damping"][which];
        let spec = catalog(name, &overrides(&[("a_d", amp)])).unwrap();
        let SystemSpec::Spiral { blocks, .. } = &spec else {
            unreachable!()
        };
        let sweep = theorem2_sweep(&blocks[0], (1.0, 1.0), 0.0, t, &[0.04, 0.02, 0.01, 0.005]).unwrap();
        for (order, label) in [(sweep.order_re, "re"), (sweep.order_arg, "arg")] {
            check(order.is_none_or(|p| p >= 0.9), || {
                format!("{name} t={t} {label}: order {order:?}")
            })?;
        }
        Ok(())
    })
}

pub fn switch_indicator_ratio() -> Result<(), String> {
    run(32, switching_case(), |(w1, w2, m)| {
        let params = overrides(&[
            ("omega1", w1),
            ("omega2", w2),
            ("period", m as f64 * 0.01),
            ("horizon", 5.0),
        ]);
        let spec = catalog("switching-frequency", &params).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 400).unwrap();
        let snaps = sample_trajectory(&spec, &linalg::real_vector(&[1.0, 1.0]), grid).unwrap();
        let s = 3;
        let baseline = dmd::moving_stencil_spectrum(&snaps, s, dmd::DEFAULT_RANK_TOL).unwrap();
        let (mut straddle, mut interior) = (f64::INFINITY, 0.0f64);
        for k in 1..=grid.steps + 1 - s {
            let r = baseline.series.residual_rel[k];
            if (1..)
                .map(|l| l * m)
                .take_while(|&j| j <= grid.steps)
                .any(|j| j > k - 1 && j < k + s - 1)
            {
                straddle = straddle.min(r);
            } else {
                interior = interior.max(r);
            }
        }
        check(straddle >= 1e3 * interior, || {
            format!("straddle {straddle} interior {interior}")
        })
    })
}

/// Every invariant in this module, by name.
pub type Check = fn() -> Result<(), String>;

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("eig_reconstructs", eig_reconstructs as fn() -> Result<(), String>),
        ("expm_inverse", expm_inverse),
        ("expm_semigroup", expm_semigroup),
        ("projection_orthogonal", projection_orthogonal),
        ("composition", composition),
        ("rk4_matches_oracle", rk4_matches_oracle),
        ("multicompartment_conservation", multicompartment_conservation),
        ("spiral_commutes", spiral_commutes),
        ("observable_round_trip", observable_round_trip),
        ("radius_log_ratio", radius_log_ratio),
        ("companion_operator_agree", companion_operator_agree),
        ("residual_zero_iff_recurrence", residual_zero_iff_recurrence),
        ("scale_equivariance", scale_equivariance),
        ("accumulation_identity", accumulation_identity),
        ("algorithm1_segment_exactness", algorithm1_segment_exactness),
        ("algorithm2_branch_consistency", algorithm2_branch_consistency),
        ("theorem2_order", theorem2_order),
        ("switch_indicator_ratio", switch_indicator_ratio),
    ]
}

pub fn catalog_names() -> &'static [&'static str] {
    &CATALOG_NAMES
}
