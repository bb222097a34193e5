use crate::C64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// One-dimensional FFTs along every axis of a row-major array.
pub(crate) struct AxisFfts {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl AxisFfts {
    pub(crate) fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        AxisFfts {
            shape: shape.to_vec(),
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub(crate) fn apply(&self, data: &mut [C64], axis: usize, inverse: bool) {
        let n = self.shape[axis];
        let stride: usize = self.shape[axis + 1..].iter().product();
        let plan = if inverse {
            &self.inverse[axis]
        } else {
            &self.forward[axis]
        };
        let scale = 1.0 / n as f64;
        if stride == 1 {
            plan.process(data);
            if inverse {
                data.iter_mut().for_each(|z| *z *= scale);
            }
            return;
        }
        // gather lines contiguously, transform them in one call, scatter back
        let outer = data.len() / (n * stride);
        let mut lines = vec![C64::default(); data.len()];
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                let line = (o * stride + inner) * n;
                for j in 0..n {
                    lines[line + j] = data[base + j * stride];
                }
            }
        }
        plan.process(&mut lines);
        let f = if inverse { scale } else { 1.0 };
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                let line = (o * stride + inner) * n;
                for j in 0..n {
                    data[base + j * stride] = lines[line + j] * f;
                }
            }
        }
    }

    pub(crate) fn all(&self, data: &mut [C64], inverse: bool) {
        for axis in 0..self.shape.len() {
            self.apply(data, axis, inverse);
        }
    }
}
