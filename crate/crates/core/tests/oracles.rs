//! Cross-checks against independent reference computations.

use faer::{Col, Mat};
use flab_core::dynamics::normalize_subsystem;
use flab_core::floquet::{FloquetSystem, DEFAULT_CLUSTER_TOL};
use flab_core::linalg::{max_abs_diff, max_abs_diff_col, trace, Axis};
use flab_core::periodicity::{epsilon_hat, midpoint_grid, period_distances, reference_profile};
use flab_core::spin_model::{build_piece_matrix, DEFAULT_INTERVAL};
use flab_core::{
    c64, clock_shift_basis, degeneracy_metrics, diagonal_ensemble_expectation, eigenspace_overlaps,
    make_model_b, observable_expectation, reduced_density_matrix, sample_haar_product_state,
    sample_model_b, sample_scalar_signal, spectral_decomposition, state_at, stream_rng,
    stroboscopic_state, trace_distance, von_neumann_entropy, DensityMatrix, DriveSchedule,
    Observable, StateVector, UnitaryMatrix,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn schedule(n: usize, draw: u64) -> DriveSchedule {
    let p = sample_model_b(n, DEFAULT_INTERVAL, &mut stream_rng(31, draw)).unwrap();
    make_model_b(&p, n).unwrap()
}

/// `exp(-i H t)` by scaling and squaring of a truncated Taylor series.
fn taylor_exp(h: &Mat<c64>, t: f64) -> Mat<c64> {
    let dim = h.nrows();
    let norm: f64 = (0..dim)
        .map(|i| (0..dim).map(|j| h[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
        * t.abs();
    let squarings = (norm / 0.25).log2().ceil().max(0.0) as u32;
    let dt = t / 2f64.powi(squarings as i32);
    let a = Mat::from_fn(dim, dim, |i, j| h[(i, j)] * c64::new(0.0, -dt));
    let mut out = Mat::<c64>::identity(dim, dim);
    let mut term = Mat::<c64>::identity(dim, dim);
    for k in 1..=20 {
        let next = &term * &a;
        term = Mat::from_fn(dim, dim, |i, j| next[(i, j)] / k as f64);
        out += &term;
    }
    for _ in 0..squarings {
        out = &out * &out;
    }
    out
}

/// Time-ordered propagator `U(0, t)` built from Taylor exponentials.
fn propagator_oracle(s: &DriveSchedule, t: f64) -> Mat<c64> {
    let n = s.n_qubits();
    let mut u = Mat::<c64>::identity(s.dim(), s.dim());
    let whole = t.floor() as usize;
    let frac = t - t.floor();
    let pieces: Vec<(f64, f64, Mat<c64>)> = s
        .pieces()
        .iter()
        .zip(s.boundaries().windows(2))
        .map(|(p, b)| (b[0], b[1], build_piece_matrix(p, n).unwrap().into_inner()))
        .collect();
    for _ in 0..whole {
        for (lo, hi, h) in &pieces {
            u = taylor_exp(h, hi - lo) * &u;
        }
    }
    for (lo, hi, h) in &pieces {
        if frac > *lo {
            u = taylor_exp(h, hi.min(frac) - lo) * &u;
        }
    }
    u
}

fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
    let v: Col<c64> = Col::from_fn(1 << n, |_| {
        c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    StateVector::normalized(v).unwrap()
}

fn random_density(n: usize, rank: usize, rng: &mut impl Rng) -> DensityMatrix {
    let d = 1 << n;
    let mut m = Mat::<c64>::zeros(d, d);
    let mut weights: Vec<f64> = (0..rank).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    for w in weights {
        let psi = random_state(n, rng);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += psi.amplitude(i) * psi.amplitude(j).conj() * w;
            }
        }
    }
    DensityMatrix::new(m).unwrap()
}

#[test]
fn propagator_matches_taylor_oracle() {
    for (n, draw) in [(1, 0), (3, 1), (4, 2)] {
        let s = schedule(n, draw);
        let sys = FloquetSystem::new(&s).unwrap();
        for t in [0.2, 0.5, 0.73, 1.0, 2.3] {
            let got = sys.propagator_at(t).unwrap();
            let err = max_abs_diff(got.as_mat(), &propagator_oracle(&s, t));
            assert!(err < 1e-10, "n={n} t={t} err={err:e}");
        }
    }
}

#[test]
fn state_at_matches_oracle_propagator() {
    let n = 4;
    let s = schedule(n, 5);
    let sys = FloquetSystem::new(&s).unwrap();
    let decomp = spectral_decomposition(&sys.floquet_operator(), DEFAULT_CLUSTER_TOL).unwrap();
    let psi = sample_haar_product_state(n, &mut stream_rng(3, 0)).unwrap();
    for t in [3.7, 1.0, 0.4] {
        let got = state_at(&psi, &sys, &decomp, t).unwrap();
        let want = propagator_oracle(&s, t) * psi.as_col();
        assert!(max_abs_diff_col(got.as_col(), &want) < 1e-10, "t={t}");
    }
}

#[test]
fn stroboscopic_state_matches_repeated_floquet_operator() {
    let n = 5;
    let sys = FloquetSystem::new(&schedule(n, 6)).unwrap();
    let u = sys.floquet_operator();
    let decomp = spectral_decomposition(&u, DEFAULT_CLUSTER_TOL).unwrap();
    let psi = sample_haar_product_state(n, &mut stream_rng(4, 0)).unwrap();
    let overlaps = eigenspace_overlaps(&psi, &decomp).unwrap();
    let mut v = psi.as_col().to_owned();
    for m in 1..=40u64 {
        v = u.as_mat() * &v;
        let got = stroboscopic_state(&overlaps, &decomp, m).unwrap();
        assert!(max_abs_diff_col(got.as_col(), &v) < 1e-10, "m={m}");
    }
}

#[test]
fn spectrum_invariant_under_conjugation() {
    let n = 4;
    let u = flab_core::floquet_operator(&schedule(n, 7)).unwrap();
    let v = flab_core::floquet_operator(&schedule(n, 8)).unwrap();
    let conj = v.then_after(&u).then_after(&v.adjoint());
    let a = spectral_decomposition(&u, DEFAULT_CLUSTER_TOL).unwrap();
    let b = spectral_decomposition(&conj, DEFAULT_CLUSTER_TOL).unwrap();
    let mut ea = a.eigenphases().to_vec();
    let mut eb = b.eigenphases().to_vec();
    ea.sort_by(f64::total_cmp);
    eb.sort_by(f64::total_cmp);
    for (x, y) in ea.iter().zip(&eb) {
        assert!((x - y).abs() < 1e-10);
    }
    let ma = degeneracy_metrics(&a, 1e-8).unwrap();
    let mb = degeneracy_metrics(&b, 1e-8).unwrap();
    assert_eq!((ma.d1, ma.d2), (mb.d1, mb.d2));
}

#[test]
fn power_sums_match_matrix_powers() {
    let u = flab_core::floquet_operator(&schedule(5, 9)).unwrap();
    let decomp = spectral_decomposition(&u, DEFAULT_CLUSTER_TOL).unwrap();
    let mut p = Mat::<c64>::identity(32, 32);
    for k in 1..=8 {
        p = &p * u.as_mat();
        assert!((decomp.power_sum(k) - trace(&p)).norm() < 1e-8, "k={k}");
    }
    assert!((decomp.power_sum(0) - c64::new(32.0, 0.0)).norm() < 1e-12);
    assert!((decomp.power_sum(-1) - trace(u.adjoint().as_mat())).norm() < 1e-8);
}

#[test]
fn diagonal_ensemble_is_the_long_time_average() {
    let n = 3;
    let sys = FloquetSystem::new(&schedule(n, 10)).unwrap();
    let u = sys.floquet_operator();
    let decomp = spectral_decomposition(&u, DEFAULT_CLUSTER_TOL).unwrap();
    let a = Observable::pauli_string(n, &[(2, Axis::Z)]).unwrap();
    let psi = sample_haar_product_state(n, &mut stream_rng(11, 0)).unwrap();
    let overlaps = eigenspace_overlaps(&psi, &decomp).unwrap();
    let predicted = diagonal_ensemble_expectation(&overlaps, &decomp, a.matrix()).unwrap();
    let m = 200_000;
    let mut v = psi.as_col().to_owned();
    let mut sum = 0.0;
    for _ in 0..m {
        sum += observable_expectation(&a, &StateVector::normalized(v.clone()).unwrap()).unwrap();
        v = u.as_mat() * &v;
    }
    // remaining error is dominated by the smallest quasienergy gap
    assert!(
        (sum / m as f64 - predicted).abs() < 5e-3,
        "{} vs {predicted}",
        sum / m as f64
    );
}

/// Partial trace through the full density matrix, site 1 being the leading bit.
fn partial_trace_oracle(psi: &StateVector, keep: &[usize], n: usize) -> Mat<c64> {
    let d = psi.dim();
    let bit = |i: usize, s: usize| (i >> (n - s)) & 1;
    let pack = |i: usize, sites: &[usize]| sites.iter().fold(0, |acc, &s| (acc << 1) | bit(i, s));
    let env: Vec<usize> = (1..=n).filter(|s| !keep.contains(s)).collect();
    let mut out = Mat::<c64>::zeros(1 << keep.len(), 1 << keep.len());
    for i in 0..d {
        for j in 0..d {
            if pack(i, &env) == pack(j, &env) {
                out[(pack(i, keep), pack(j, keep))] += psi.amplitude(i) * psi.amplitude(j).conj();
            }
        }
    }
    out
}

#[test]
fn reduced_density_matrix_matches_full_trace() {
    let mut rng = stream_rng(12, 0);
    for keep in [
        vec![1],
        vec![3],
        vec![1, 3],
        vec![2, 4, 5],
        vec![1, 2, 3, 4, 5],
    ] {
        let psi = random_state(5, &mut rng);
        let got = reduced_density_matrix(&psi, &keep).unwrap();
        assert!(max_abs_diff(got.as_mat(), &partial_trace_oracle(&psi, &keep, 5)) < 1e-12);
    }
    // unordered and repeated site lists normalize to the same subsystem
    assert_eq!(normalize_subsystem(&[3, 1], 4).unwrap(), vec![1, 3]);
    assert!(normalize_subsystem(&[1, 1], 4).is_err());
    assert!(normalize_subsystem(&[5], 4).is_err());
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }
}

#[test]
fn entropy_continuity_bound() {
    let mut rng = stream_rng(13, 0);
    for _ in 0..50 {
        let n = rng.gen_range(1..=3);
        let rho = random_density(n, rng.gen_range(1..=3), &mut rng);
        let sigma = random_density(n, rng.gen_range(1..=3), &mut rng);
        let d = (1 << n) as f64;
        let t = 0.5 * trace_distance(&rho, &sigma).unwrap();
        let ds = (von_neumann_entropy(&rho).unwrap() - von_neumann_entropy(&sigma).unwrap()).abs();
        let bound = t * (d - 1.0).ln() + binary_entropy(t);
        assert!(ds <= bound + 1e-10, "{ds} > {bound}");
    }
}

#[test]
fn trace_norm_between_frobenius_bounds() {
    let mut rng = stream_rng(14, 0);
    for _ in 0..50 {
        let rho = random_density(2, 2, &mut rng);
        let sigma = random_density(2, 3, &mut rng);
        let diff = rho.as_mat() - sigma.as_mat();
        let fro = diff.norm_l2();
        let t = trace_distance(&rho, &sigma).unwrap();
        assert!(fro <= t + 1e-12);
        assert!(t <= 2.0 * fro + 1e-12);
        assert!(t <= 2.0 + 1e-12);
    }
}

#[test]
fn clock_shift_basis_is_complete() {
    for d in [2usize, 3, 4] {
        let basis = clock_shift_basis(d).unwrap();
        assert_eq!(basis.len(), d * d);
        let mut rng = stream_rng(15, d as u64);
        let x = Mat::from_fn(d, d, |_, _| {
            c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        // sum_P P X P^dagger with unit-Frobenius P equals tr(X) I
        let mut twirl = Mat::<c64>::zeros(d, d);
        for p in &basis {
            twirl += p * &x * p.adjoint();
        }
        let tr = trace(&x);
        let want = Mat::from_fn(d, d, |i, j| if i == j { tr } else { c64::new(0.0, 0.0) });
        assert!(max_abs_diff(&twirl, &want) < 1e-12, "d={d}");
        for (i, p) in basis.iter().enumerate() {
            for (j, q) in basis.iter().enumerate() {
                let ip = trace(&(p.adjoint() * q));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - c64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn midpoint_quadrature_converges() {
    let n = 3;
    let s = schedule(n, 16);
    let sys = FloquetSystem::new(&s).unwrap();
    let decomp = spectral_decomposition(&sys.floquet_operator(), DEFAULT_CLUSTER_TOL).unwrap();
    let a = Observable::pauli_string(n, &[(1, Axis::Z)]).unwrap();
    let psi = sample_haar_product_state(n, &mut stream_rng(16, 0)).unwrap();
    let mean_distance = |k: usize| {
        let sig = sample_scalar_signal(&psi, &sys, &decomp, &a, 20, k).unwrap();
        let d = period_distances(&sig, &reference_profile(&sig).unwrap()).unwrap();
        d.iter().sum::<f64>() / d.len() as f64
    };
    let (a32, a64, a128) = (mean_distance(32), mean_distance(64), mean_distance(128));
    // midpoint rule on piecewise-smooth integrands: error shrinks ~4x per doubling
    assert!((a64 - a128).abs() < 0.5 * (a32 - a64).abs() + 1e-12);
    assert!((a64 - a128).abs() < 1e-2 * a128.max(1e-12));
    assert_eq!(midpoint_grid(4), vec![0.125, 0.375, 0.625, 0.875]);
}

#[test]
fn identity_floquet_operator_is_fully_degenerate() {
    let d = spectral_decomposition(&UnitaryMatrix::identity(8), DEFAULT_CLUSTER_TOL).unwrap();
    let m = degeneracy_metrics(&d, 1e-8).unwrap();
    assert_eq!(m.d1, 8.0);
    assert!(!m.is_generic());
}

/// Epsilon-hat values computed by hand from the definition: the smallest
/// eps such that at least (1 - eps) M of the distances are <= eps.
#[test]
fn epsilon_hat_frozen_values() {
    assert_eq!(epsilon_hat(&[0.0; 10]).unwrap(), 0.0);
    // nine zeros and one large value: eps = 0 needs 10 good periods, 1/10 works
    let mut d = vec![0.0; 9];
    d.push(3.0);
    assert_eq!(epsilon_hat(&d).unwrap(), 0.1);
    // all distances 0.3: 0.3 admits every period
    assert_eq!(epsilon_hat(&[0.3; 4]).unwrap(), 0.3);
    // [0.05, 0.6, 0.6, 0.6]: 0.05 gives one good period, which needs eps >= 0.75
    assert_eq!(epsilon_hat(&[0.05, 0.6, 0.6, 0.6]).unwrap(), 0.6);
    assert_eq!(epsilon_hat(&[0.05, 2.0, 2.0, 2.0]).unwrap(), 0.75);
    assert_eq!(epsilon_hat(&[5.0, 5.0]).unwrap(), 1.0);
}
