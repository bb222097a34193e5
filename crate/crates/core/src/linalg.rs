//! Small dense helpers on top of nalgebra.

use crate::{CMatrix, C64};
use faer::complex_native::c64;
use nalgebra::DVector;

/// Eigenvalues closer than this are treated as one cluster when ordering.
pub(crate) const TOL_DEG: f64 = 1e-9;

pub(crate) fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            scale = scale.max(m[(i, j)].norm());
        }
    }
    worst / scale.max(1.0)
}

/// Hermitian eigendecomposition with ascending eigenvalues, a deterministic
/// order inside near-degenerate clusters and a fixed phase per eigenvector
/// (largest component real and positive).
pub(crate) fn eigh(m: &CMatrix) -> Option<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    if n == 0 {
        return Some((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let fm = faer::Mat::<c64>::from_fn(n, n, |i, j| {
        let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
        c64::new(z.re, z.im)
    });
    let evd = fm.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();
    let eigenvalues: Vec<f64> = (0..n).map(|i| s.read(i).re).collect();
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let eig_vectors = CMatrix::from_fn(n, n, |i, j| {
        let z = u.read(i, j);
        C64::new(z.re, z.im)
    });
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));

    let lead: Vec<(usize, f64)> = (0..n)
        .map(|c| {
            let col = eig_vectors.column(c);
            let mut best = 0;
            let mut mag = -1.0;
            for i in 0..n {
                let a = col[i].norm();
                if a > mag + 1e-12 {
                    mag = a;
                    best = i;
                }
            }
            (best, mag)
        })
        .collect();

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n
            && eigenvalues[order[end]] - eigenvalues[order[end - 1]] < TOL_DEG
        {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| {
            lead[b]
                .1
                .total_cmp(&lead[a].1)
                .then(lead[a].0.cmp(&lead[b].0))
        });
        start = end;
    }

    let values: Vec<f64> = order.iter().map(|&c| eigenvalues[c]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (j, &c) in order.iter().enumerate() {
        let col = eig_vectors.column(c);
        let pivot = col[lead[c].0];
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            vectors[(i, j)] = col[i] * phase;
        }
    }
    Some((values, vectors))
}

/// Unitary factor W V† of the polar decomposition of a square matrix.
pub(crate) fn unitary_part(m: &CMatrix) -> CMatrix {
    if m.nrows() == 1 {
        let z = m[(0, 0)];
        let r = z.norm();
        let u = if r > 0.0 { z / r } else { C64::new(1.0, 0.0) };
        return CMatrix::from_element(1, 1, u);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    u * v_t
}

/// Eigenphases and Schur vectors of a unitary matrix.
pub(crate) fn unitary_log(u: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = u.nrows();
    if n == 1 {
        return (vec![u[(0, 0)].arg()], CMatrix::from_element(1, 1, C64::new(1.0, 0.0)));
    }
    let (q, t) = nalgebra::Schur::new(u.clone()).unpack();
    let phases = (0..n).map(|i| t[(i, i)].arg()).collect();
    (phases, q)
}

/// exp(-i H tau) for Hermitian H.
pub(crate) fn expm_hermitian(h: &CMatrix, tau: f64) -> Option<CMatrix> {
    let (vals, vecs) = eigh(h)?;
    let phases = DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&e| C64::from_polar(1.0, -e * tau)),
    );
    let scaled = CMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * phases[j]);
    Some(scaled * vecs.adjoint())
}

pub(crate) fn det(m: &CMatrix) -> C64 {
    if m.nrows() == 1 {
        m[(0, 0)]
    } else {
        m.clone().determinant()
    }
}

/// Largest absolute eigenvalue of a Hermitian matrix.
pub(crate) fn hermitian_norm(m: &CMatrix) -> f64 {
    match eigh(m) {
        Some((v, _)) => v.iter().fold(0.0f64, |a, &x| a.max(x.abs())),
        None => f64::INFINITY,
    }
}
