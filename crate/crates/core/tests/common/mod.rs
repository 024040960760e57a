//! Shared helpers for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use queue_design::simplex::{Constraint, LpProblem, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best objective over all basic feasible solutions of a problem whose
/// variables are all nonnegative, or `None` if no vertex is feasible.
///
/// Every vertex makes `n` linearly independent constraints tight, drawn
/// from the equalities (always tight), the `<=` rows and the bounds
/// `z_j = 0`. Each choice is solved with an LU factorisation and kept if
/// it satisfies everything within `feas_tol`.
pub fn vertex_enumeration(problem: &LpProblem, feas_tol: f64) -> Option<f64> {
    let n = problem.variables.len();
    assert!(problem.variables.iter().all(|v| v.nonneg));
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &problem.le {
        rows.push((c.coeffs.clone(), c.rhs));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e, 0.0));
    }
    let n_eq = problem.eq.len();
    if n_eq > n {
        return None;
    }
    let choose = n - n_eq;
    let mut best: Option<f64> = None;
    for subset in combinations(rows.len(), choose) {
        let tight: Vec<(&[f64], f64)> = problem
            .eq
            .iter()
            .map(|c| (c.coeffs.as_slice(), c.rhs))
            .chain(subset.iter().map(|&k| (rows[k].0.as_slice(), rows[k].1)))
            .collect();
        let a = DMatrix::from_fn(n, n, |i, j| tight[i].0[j]);
        let b = DVector::from_fn(n, |i, _| tight[i].1);
        let lu = a.lu();
        if lu.determinant().abs() < 1e-10 {
            continue;
        }
        let Some(z) = lu.solve(&b) else { continue };
        let z: Vec<f64> = z.iter().copied().collect();
        if !feasible(problem, &z, feas_tol) {
            continue;
        }
        let obj: f64 = problem.objective.iter().zip(&z).map(|(c, x)| c * x).sum();
        best = Some(best.map_or(obj, |b: f64| b.max(obj)));
    }
    best
}

fn feasible(problem: &LpProblem, z: &[f64], tol: f64) -> bool {
    let dot = |c: &Constraint| c.coeffs.iter().zip(z).map(|(a, x)| a * x).sum::<f64>();
    z.iter().all(|&x| x >= -tol)
        && problem.eq.iter().all(|c| (dot(c) - c.rhs).abs() <= tol)
        && problem.le.iter().all(|c| dot(c) <= c.rhs + tol)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Random bounded LP with small integer data: up to 6 nonnegative
/// variables and up to 8 constraints, one of which caps `sum z`.
pub fn random_lp(seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=8);
    let n_eq = rng.random_range(0..=2.min(m - 1));
    let coeffs = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-4..=4) as f64).collect()
    };
    let mut eq = Vec::new();
    let mut le = vec![Constraint {
        name: "cap".into(),
        coeffs: vec![1.0; n],
        rhs: 10.0,
    }];
    for k in 0..m - 1 {
        let c = coeffs(&mut rng);
        let rhs = rng.random_range(-3..=8) as f64;
        if k < n_eq {
            eq.push(Constraint {
                name: format!("e{k}"),
                coeffs: c,
                rhs,
            });
        } else {
            le.push(Constraint {
                name: format!("l{k}"),
                coeffs: c,
                rhs,
            });
        }
    }
    LpProblem {
        variables: (0..n)
            .map(|j| Variable {
                name: format!("z{j}"),
                nonneg: true,
            })
            .collect(),
        objective: coeffs(&mut rng),
        eq,
        le,
    }
}
