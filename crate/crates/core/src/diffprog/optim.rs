use super::layers::ParamSet;
use super::tensor::Matrix;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Option<Matrix>>,
    v: Vec<Option<Matrix>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads[i]` belongs to the i-th parameter; `None`
    /// leaves that parameter and its moments untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Matrix>]) {
        assert_eq!(grads.len(), params.len(), "one gradient slot per parameter");
        if self.m.len() < params.len() {
            self.m.resize(params.len(), None);
            self.v.resize(params.len(), None);
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (id, g) in params.ids().collect::<Vec<_>>().into_iter().zip(grads) {
            let Some(g) = g else { continue };
            let value = params.get_mut(id);
            let i = id.index();
            let m = self.m[i].get_or_insert_with(|| Matrix::zeros(g.rows, g.cols));
            let v = self.v[i].get_or_insert_with(|| Matrix::zeros(g.rows, g.cols));
            for k in 0..g.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m.data[k] / c1;
                let vh = v.data[k] / c2;
                value.data[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("x", Matrix::scalar(x));
        ps
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut ps = single(1.25);
        let mut adam = Adam::new(0.1);
        adam.step(&mut ps, &[Some(Matrix::scalar(0.0))]);
        assert_eq!(ps.get(ps.find("x").unwrap()).item(), 1.25);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = single(0.0);
        let mut adam = Adam::new(0.001);
        adam.step(&mut ps, &[Some(Matrix::scalar(3.7))]);
        let x = ps.get(ps.find("x").unwrap()).item();
        // bias-corrected moments give g / (|g| + eps)
        let expect = -0.001 * 3.7 / (3.7 + 1e-8);
        assert!((x - expect).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut ps = single(3.0);
        let id = ps.find("x").unwrap();
        let mut adam = Adam::new(0.01);
        let mut run = |steps: usize, ps: &mut ParamSet| {
            for _ in 0..steps {
                let x = ps.get(id).item();
                adam.step(ps, &[Some(Matrix::scalar(2.0 * x))]);
            }
            ps.get(id).item()
        };
        // reference values from an independent Adam implementation
        assert!((run(500, &mut ps) - 0.1929811258843654).abs() < 1e-9);
        let x = run(500, &mut ps);
        assert!((x - 0.0008916026958649576).abs() < 1e-9);
        assert!(x.abs() < 0.1);
    }
}
