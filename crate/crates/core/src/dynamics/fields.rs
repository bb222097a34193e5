use crate::{Error, Result};

/// One term of a closed-form field in macroscopic coordinates `r`.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldTerm {
    /// `coeff * prod_j r_j^{powers_j}`
    Monomial { coeff: f64, powers: Vec<u32> },
    /// `coeff * cos(wavevector . r + phase)`
    Cosine {
        coeff: f64,
        wavevector: Vec<f64>,
        phase: f64,
    },
}

impl FieldTerm {
    fn dim(&self) -> usize {
        match self {
            FieldTerm::Monomial { powers, .. } => powers.len(),
            FieldTerm::Cosine { wavevector, .. } => wavevector.len(),
        }
    }

    /// Value, gradient and Hessian at `r`.
    fn eval(&self, r: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let d = r.len();
        match self {
            FieldTerm::Monomial { coeff, powers } => {
                let pw = |x: f64, p: i64| if p < 0 { 0.0 } else { x.powi(p as i32) };
                let value = coeff * (0..d).map(|j| pw(r[j], powers[j] as i64)).product::<f64>();
                let mut grad = vec![0.0; d];
                let mut hess = vec![vec![0.0; d]; d];
                for a in 0..d {
                    for b in 0..d {
                        let mut term = *coeff;
                        for j in 0..d {
                            let mut p = powers[j] as i64;
                            let mut f = 1.0;
                            for &x in &[a, b] {
                                if x == j {
                                    f *= p as f64;
                                    p -= 1;
                                }
                            }
                            term *= f * pw(r[j], p);
                        }
                        hess[a][b] = term;
                    }
                    let mut term = *coeff;
                    for j in 0..d {
                        let p = powers[j] as i64;
                        term *= if j == a { p as f64 * pw(r[j], p - 1) } else { pw(r[j], p) };
                    }
                    grad[a] = term;
                }
                (value, grad, hess)
            }
            FieldTerm::Cosine {
                coeff,
                wavevector,
                phase,
            } => {
                let arg: f64 = wavevector.iter().zip(r).map(|(q, x)| q * x).sum::<f64>() + phase;
                let (s, c) = arg.sin_cos();
                let grad = wavevector.iter().map(|q| -coeff * s * q).collect();
                let hess = wavevector
                    .iter()
                    .map(|qa| wavevector.iter().map(|qb| -coeff * c * qa * qb).collect())
                    .collect();
                (coeff * c, grad, hess)
            }
        }
    }
}

/// Sum of [`FieldTerm`]s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarField {
    pub terms: Vec<FieldTerm>,
}

impl ScalarField {
    pub fn new(terms: Vec<FieldTerm>) -> Self {
        ScalarField { terms }
    }

    /// `sum_j c_j r_j`.
    pub fn linear(c: &[f64]) -> Self {
        let d = c.len();
        ScalarField::new(
            (0..d)
                .filter(|&j| c[j] != 0.0)
                .map(|j| FieldTerm::Monomial {
                    coeff: c[j],
                    powers: (0..d).map(|i| u32::from(i == j)).collect(),
                })
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, r: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let d = r.len();
        let mut v = 0.0;
        let mut g = vec![0.0; d];
        let mut h = vec![vec![0.0; d]; d];
        for t in &self.terms {
            let (tv, tg, th) = t.eval(r);
            v += tv;
            for a in 0..d {
                g[a] += tg[a];
                for b in 0..d {
                    h[a][b] += th[a][b];
                }
            }
        }
        (v, g, h)
    }

    pub fn value(&self, r: &[f64]) -> f64 {
        self.eval(r).0
    }
}

/// Slowly varying potentials `phi(r)`, `A(r)` evaluated at `r = eps x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalFields {
    dim: usize,
    phi: ScalarField,
    vector: Vec<ScalarField>,
    epsilon: f64,
}

/// Local field data: potentials with first and second derivatives.
#[derive(Clone, Debug)]
pub struct FieldSample {
    pub phi: f64,
    pub grad_phi: Vec<f64>,
    pub hess_phi: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    /// `da[i][c] = d_i A_c`
    pub da: Vec<Vec<f64>>,
    /// `dda[c][i][j] = d_i d_j A_c`
    pub dda: Vec<Vec<Vec<f64>>>,
}

impl FieldSample {
    /// Magnetic field `curl A`, normal component only in two dimensions.
    pub fn b(&self) -> [f64; 3] {
        match self.a.len() {
            2 => [0.0, 0.0, self.da[0][1] - self.da[1][0]],
            3 => [
                self.da[1][2] - self.da[2][1],
                self.da[2][0] - self.da[0][2],
                self.da[0][1] - self.da[1][0],
            ],
            _ => [0.0; 3],
        }
    }

    /// `d_i B` for each coordinate `i`.
    pub fn grad_b(&self) -> Vec<[f64; 3]> {
        let d = self.a.len();
        (0..d)
            .map(|i| {
                let h = |c: usize, j: usize| self.dda[c][i][j];
                match d {
                    2 => [0.0, 0.0, h(1, 0) - h(0, 1)],
                    3 => [h(2, 1) - h(1, 2), h(0, 2) - h(2, 0), h(1, 0) - h(0, 1)],
                    _ => [0.0; 3],
                }
            })
            .collect()
    }
}

impl ExternalFields {
    /// `vector` is empty or has one component per dimension.
    pub fn new(dim: usize, phi: ScalarField, vector: Vec<ScalarField>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        if !vector.is_empty() && vector.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "vector potential needs {dim} components, got {}",
                vector.len()
            )));
        }
        let all = phi.terms.iter().chain(vector.iter().flat_map(|f| f.terms.iter()));
        for t in all {
            if t.dim() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "field term of dimension {} in a {dim}-dimensional problem",
                    t.dim()
                )));
            }
        }
        let vector = if vector.iter().all(|f| f.is_zero()) {
            Vec::new()
        } else {
            vector
        };
        Ok(ExternalFields {
            dim,
            phi,
            vector,
            epsilon,
        })
    }

    pub fn none(dim: usize, epsilon: f64) -> Result<Self> {
        ExternalFields::new(dim, ScalarField::default(), Vec::new(), epsilon)
    }

    /// Constant force `F`, i.e. `phi = -F . r`.
    pub fn constant_force(force: &[f64], epsilon: f64) -> Result<Self> {
        let c: Vec<f64> = force.iter().map(|f| -f).collect();
        ExternalFields::new(force.len(), ScalarField::linear(&c), Vec::new(), epsilon)
    }

    /// Uniform field `B` normal to the plane in the symmetric gauge
    /// `A = B/2 (-r_2, r_1)`, plus an optional constant force.
    pub fn uniform_magnetic(b: f64, force: [f64; 2], epsilon: f64) -> Result<Self> {
        let ax = ScalarField::linear(&[0.0, -b / 2.0]);
        let ay = ScalarField::linear(&[b / 2.0, 0.0]);
        ExternalFields::new(
            2,
            ScalarField::linear(&[-force[0], -force[1]]),
            vec![ax, ay],
            epsilon,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        ExternalFields::new(self.dim, self.phi.clone(), self.vector.clone(), epsilon)
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn vector_potential(&self) -> &[ScalarField] {
        &self.vector
    }

    pub fn has_vector_potential(&self) -> bool {
        !self.vector.is_empty()
    }

    pub fn sample(&self, r: &[f64]) -> FieldSample {
        let d = self.dim;
        let (phi, grad_phi, hess_phi) = self.phi.eval(r);
        let mut a = vec![0.0; d];
        let mut da = vec![vec![0.0; d]; d];
        let mut dda = vec![vec![vec![0.0; d]; d]; d];
        for (c, f) in self.vector.iter().enumerate() {
            let (v, g, h) = f.eval(r);
            a[c] = v;
            for i in 0..d {
                da[i][c] = g[i];
            }
            dda[c] = h;
        }
        FieldSample {
            phi,
            grad_phi,
            hess_phi,
            a,
            da,
            dda,
        }
    }
}
