use crate::lattice::{unflatten, Lattice};
use crate::{CMatrix, Error, Result};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Dual-lattice vectors inside the ball `|G| <= cutoff`, ordered by length
/// and then lexicographically in integer coordinates.
#[derive(Clone, Debug)]
pub struct PlaneWaveBasis {
    lattice: Lattice,
    cutoff: f64,
    indices: Vec<Vec<i32>>,
    vectors: Vec<Vec<f64>>,
    lookup: HashMap<Vec<i32>, usize>,
}

impl PlaneWaveBasis {
    pub fn new(lat: &Lattice, cutoff: f64) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "plane-wave cutoff must be finite and non-negative (got {cutoff})"
            )));
        }
        let bounds: Vec<i32> = lat
            .basis()
            .iter()
            .map(|g| {
                let len = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                (cutoff * len / (2.0 * PI)).ceil() as i32 + 1
            })
            .collect();
        let sizes: Vec<usize> = bounds.iter().map(|&b| (2 * b + 1) as usize).collect();
        let total: usize = sizes.iter().product();
        let limit = cutoff * cutoff * (1.0 + 1e-12);
        let mut found: Vec<(f64, Vec<i32>)> = Vec::new();
        for idx in 0..total {
            let n: Vec<i32> = unflatten(idx, &sizes)
                .iter()
                .zip(&bounds)
                .map(|(&m, &b)| m as i32 - b)
                .collect();
            let g = lat.dual_point(&n);
            let g2: f64 = g.iter().map(|x| x * x).sum();
            if g2 <= limit {
                found.push((g2, n));
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let indices: Vec<Vec<i32>> = found.into_iter().map(|(_, n)| n).collect();
        let vectors = indices.iter().map(|n| lat.dual_point(n)).collect();
        let lookup = indices
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(PlaneWaveBasis {
            lattice: lat.clone(),
            cutoff,
            indices,
            vectors,
            lookup,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<i32>] {
        &self.indices
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn index_of(&self, n: &[i32]) -> Option<usize> {
        self.lookup.get(n).copied()
    }

    /// For coefficients of a state at `k`, the source index of each entry of
    /// the same state expressed at `k + shift` (in dual coordinates):
    /// `c'(G) = c(G + shift)`. Entries leaving the ball map to `None`.
    pub fn shift_table(&self, shift: &[i32]) -> Vec<Option<usize>> {
        self.indices
            .iter()
            .map(|n| {
                let m: Vec<i32> = n.iter().zip(shift).map(|(a, b)| a + b).collect();
                self.index_of(&m)
            })
            .collect()
    }

    /// Applies a shift table to the rows of `v`; `spin` doubles each row.
    pub fn relabel(&self, v: &CMatrix, table: &[Option<usize>], spin: bool) -> CMatrix {
        let s = if spin { 2 } else { 1 };
        let mut out = CMatrix::zeros(v.nrows(), v.ncols());
        for (i, src) in table.iter().enumerate() {
            if let Some(j) = src {
                for a in 0..s {
                    for c in 0..v.ncols() {
                        out[(s * i + a, c)] = v[(s * j + a, c)];
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hexagonal() -> Lattice {
        Lattice::new(&[vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]).unwrap()
    }

    #[test]
    fn ball_matches_a_brute_force_count() {
        let lat = hexagonal();
        let cutoff = 20.0;
        let basis = PlaneWaveBasis::new(&lat, cutoff).unwrap();
        let mut count = 0;
        for a in -20..=20 {
            for b in -20..=20 {
                let g = lat.dual_point(&[a, b]);
                if g[0] * g[0] + g[1] * g[1] <= cutoff * cutoff {
                    count += 1;
                }
            }
        }
        assert_eq!(basis.len(), count);
        assert_eq!(basis.indices()[0], vec![0, 0]);
        let lengths: Vec<f64> = basis.vectors().iter().map(|g| g[0].hypot(g[1])).collect();
        assert!(lengths.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }

    #[test]
    fn closed_under_negation() {
        let basis = PlaneWaveBasis::new(&hexagonal(), 31.0).unwrap();
        for n in basis.indices() {
            let m: Vec<i32> = n.iter().map(|x| -x).collect();
            assert!(basis.index_of(&m).is_some());
        }
    }

    #[test]
    fn shift_table_moves_coefficients() {
        let lat = Lattice::cubic(1, 2.0 * PI).unwrap();
        let basis = PlaneWaveBasis::new(&lat, 2.5).unwrap();
        assert_eq!(basis.len(), 5);
        let table = basis.shift_table(&[1]);
        let v = CMatrix::from_fn(5, 1, |i, _| crate::C64::new(basis.indices()[i][0] as f64, 0.0));
        let out = basis.relabel(&v, &table, false);
        for (i, n) in basis.indices().iter().enumerate() {
            let expect = if n[0] == 2 { 0.0 } else { (n[0] + 1) as f64 };
            assert_eq!(out[(i, 0)].re, expect);
        }
    }

    #[test]
    fn rejects_bad_cutoffs() {
        let lat = hexagonal();
        assert!(PlaneWaveBasis::new(&lat, -1.0).is_err());
        assert!(PlaneWaveBasis::new(&lat, f64::NAN).is_err());
        assert_eq!(PlaneWaveBasis::new(&lat, 0.0).unwrap().len(), 1);
    }
}
