use crate::lattice::{unflatten, KGrid, Lattice};
use crate::{Error, Result, C64};
use std::f64::consts::PI;

/// Periodic trigonometric interpolant `f(k) = Re sum_Q c_Q exp(i Q.k)` of
/// samples on a [`KGrid`], with `Q` running over lattice vectors. For even
/// grid sizes the Nyquist coefficient is split evenly between `+-N/2`.
#[derive(Clone, Debug)]
pub struct TrigInterpolant {
    terms: Vec<(Vec<f64>, C64)>,
}

/// Value, gradient and Hessian of an interpolant.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

impl TrigInterpolant {
    pub fn new(grid: &KGrid, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for a grid of {} points",
                samples.len(),
                grid.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(vec![*bad]));
        }
        let lat: &Lattice = grid.lattice();
        let sizes = grid.sizes();
        let d = sizes.len();
        // q_j in [-N_j/2, N_j/2]; even sizes include both Nyquist ends.
        let span: Vec<usize> = sizes.iter().map(|&n| n / 2 * 2 + 1).collect();
        let total: usize = span.iter().product();
        let n_total = grid.len() as f64;
        let mut terms = Vec::with_capacity(total);
        for t in 0..total {
            let idx = unflatten(t, &span);
            let q: Vec<i64> = idx
                .iter()
                .zip(sizes)
                .map(|(&i, &n)| i as i64 - (n / 2) as i64)
                .collect();
            let mut weight = 1.0;
            for (qj, &n) in q.iter().zip(sizes) {
                if n % 2 == 0 && qj.unsigned_abs() as usize * 2 == n {
                    weight *= 0.5;
                }
            }
            let mut c = C64::default();
            for (m, f) in samples.iter().enumerate() {
                let mm = unflatten(m, sizes);
                let ph: f64 = (0..d)
                    .map(|j| 2.0 * PI * q[j] as f64 * (mm[j] as f64 / sizes[j] as f64 - 0.5))
                    .sum();
                c += C64::from_polar(*f, -ph);
            }
            c *= weight / n_total;
            if c.norm() < 1e-300 {
                continue;
            }
            let frac: Vec<f64> = q.iter().map(|&x| x as f64).collect();
            terms.push((lat.lattice_point(&frac), c));
        }
        Ok(TrigInterpolant { terms })
    }

    pub fn value(&self, k: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(q, c)| {
                let ph: f64 = q.iter().zip(k).map(|(a, b)| a * b).sum();
                (c * C64::from_polar(1.0, ph)).re
            })
            .sum()
    }

    pub fn jet(&self, k: &[f64]) -> Jet {
        let d = k.len();
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for (q, c) in &self.terms {
            let ph: f64 = q.iter().zip(k).map(|(a, b)| a * b).sum();
            let z = c * C64::from_polar(1.0, ph);
            value += z.re;
            // d/dk_a Re(z) = Re(i q_a z) = -q_a Im z
            for a in 0..d {
                grad[a] -= q[a] * z.im;
                for b in 0..d {
                    hess[a][b] -= q[a] * q[b] * z.re;
                }
            }
        }
        Jet { value, grad, hess }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_samples_and_trig_polynomials() {
        let lat = Lattice::new(&[vec![2.0, 0.3], vec![-0.4, 1.5]]).unwrap();
        let grid = KGrid::new(&lat, &[6, 5]).unwrap();
        let g = lat.basis();
        let f = |k: &[f64]| {
            let a = g[0][0] * k[0] + g[0][1] * k[1];
            let b = g[1][0] * k[0] + g[1][1] * k[1];
            1.5 + (a + 0.2).cos() - 0.3 * (a - 2.0 * b).sin() + 0.1 * (3.0 * a).cos()
        };
        let samples: Vec<f64> = grid.points().iter().map(|k| f(k)).collect();
        let it = TrigInterpolant::new(&grid, &samples).unwrap();
        for (k, s) in grid.points().iter().zip(&samples) {
            assert!((it.value(k) - s).abs() < 1e-12);
        }
        // band-limited away from the Nyquist order: exact everywhere
        let k = [0.37, -0.81];
        let jet = it.jet(&k);
        assert!((jet.value - f(&k)).abs() < 1e-12);
        let h = 1e-5;
        for a in 0..2 {
            let mut kp = k;
            let mut km = k;
            kp[a] += h;
            km[a] -= h;
            assert!(((f(&kp) - f(&km)) / (2.0 * h) - jet.grad[a]).abs() < 1e-8);
            let (jp, jm) = (it.jet(&kp), it.jet(&km));
            for b in 0..2 {
                assert!(((jp.grad[b] - jm.grad[b]) / (2.0 * h) - jet.hess[a][b]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn periodic_under_dual_lattice() {
        let lat = Lattice::cubic(1, 2.0 * PI).unwrap();
        let grid = KGrid::new(&lat, &[8]).unwrap();
        let samples: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
        let it = TrigInterpolant::new(&grid, &samples).unwrap();
        let gs = lat.dual_basis()[0][0];
        assert!((it.value(&[0.123]) - it.value(&[0.123 + gs])).abs() < 1e-10);
        assert!(TrigInterpolant::new(&grid, &samples[1..]).is_err());
    }
}
