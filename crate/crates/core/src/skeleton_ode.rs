//! Latent super-node dynamics `dZ/dt = f(Z) + tanh(Â tanh(Z Θ3) Θ2)`,
//! integrated with an unrolled fixed-step solver.

use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffprog::layers::glorot;
use crate::diffprog::{Activation, Bound, Csr, Mlp, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Euler,
    #[default]
    Rk4,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Solver::Euler),
            "rk4" => Ok(Solver::Rk4),
            other => Err(Error::invalid(format!("unknown solver `{other}` (euler|rk4)"))),
        }
    }
}

/// Integrates `dz/dt = rhs(z)` for `steps` steps of size `dt` and returns
/// the states after each step (the initial state excluded).
pub fn integrate_with<F>(
    tape: &mut Tape,
    z0: Var,
    steps: usize,
    dt: f64,
    solver: Solver,
    mut rhs: F,
) -> Result<Vec<Var>>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let mut out = Vec::with_capacity(steps);
    let mut z = z0;
    for step in 0..steps {
        z = match solver {
            Solver::Euler => {
                let k1 = rhs(tape, z)?;
                tape.add_scaled(z, k1, dt)
            }
            Solver::Rk4 => {
                let k1 = rhs(tape, z)?;
                let z2 = tape.add_scaled(z, k1, dt / 2.0);
                let k2 = rhs(tape, z2)?;
                let z3 = tape.add_scaled(z, k2, dt / 2.0);
                let k3 = rhs(tape, z3)?;
                let z4 = tape.add_scaled(z, k3, dt);
                let k4 = rhs(tape, z4)?;
                let acc = tape.add_scaled(z, k1, dt / 6.0);
                let acc = tape.add_scaled(acc, k2, dt / 3.0);
                let acc = tape.add_scaled(acc, k3, dt / 3.0);
                tape.add_scaled(acc, k4, dt / 6.0)
            }
        };
        if !tape.value(z).all_finite() {
            return Err(Error::NonFinite {
                step: step + 1,
                context: "latent skeleton trajectory".into(),
            });
        }
        out.push(z);
    }
    Ok(out)
}

/// Encoder, self-dynamics and interaction parameters of the latent ODE.
#[derive(Debug, Clone)]
pub struct SkeletonOde {
    pub encoder: Mlp,
    pub self_dynamics: Mlp,
    pub theta2: ParamId,
    pub theta3: ParamId,
    pub latent_dim: usize,
}

impl SkeletonOde {
    pub fn new(params: &mut ParamSet, input: usize, hidden: usize, latent_dim: usize, rng: &mut impl Rng) -> Self {
        let encoder = Mlp::new(params, "ode.encoder", &[input, hidden, latent_dim], Activation::Identity, rng);
        let self_dynamics = Mlp::new(
            params,
            "ode.f",
            &[latent_dim, hidden, latent_dim],
            Activation::Identity,
            rng,
        );
        let theta3 = params.add("ode.theta3", glorot(latent_dim, hidden, rng));
        let theta2 = params.add("ode.theta2", glorot(hidden, latent_dim, rng));
        SkeletonOde {
            encoder,
            self_dynamics,
            theta2,
            theta3,
            latent_dim,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self.encoder.param_ids().chain(self.self_dynamics.param_ids()).collect();
        ids.extend([self.theta2, self.theta3]);
        ids
    }

    /// `Z_{s,0} = MLP(X_s)`.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, xs: Var) -> Result<Var> {
        self.encoder.forward(tape, bound, xs)
    }

    /// Interaction term `tanh(Â tanh(Z Θ3) Θ2)`.
    pub fn interaction(&self, tape: &mut Tape, bound: &Bound, adjacency: &Arc<Csr>, z: Var) -> Result<Var> {
        if adjacency.cols != tape.shape(z).0 {
            return Err(Error::shape(
                "ode_rhs",
                format!("skeleton adjacency {}x{} for {} rows", adjacency.rows, adjacency.cols, tape.shape(z).0),
            ));
        }
        let inner = tape.matmul(z, bound.var(self.theta3));
        let inner = tape.tanh(inner);
        let mixed = tape.spmm(Arc::clone(adjacency), inner);
        let out = tape.matmul(mixed, bound.var(self.theta2));
        Ok(tape.tanh(out))
    }

    pub fn rhs(&self, tape: &mut Tape, bound: &Bound, adjacency: &Arc<Csr>, z: Var) -> Result<Var> {
        let own = self.self_dynamics.forward(tape, bound, z)?;
        let coupled = self.interaction(tape, bound, adjacency, z)?;
        Ok(tape.add(own, coupled))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn integrate(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        adjacency: &Arc<Csr>,
        z0: Var,
        steps: usize,
        dt: f64,
        solver: Solver,
    ) -> Result<Vec<Var>> {
        integrate_with(tape, z0, steps, dt, solver, |t, z| self.rhs(t, bound, adjacency, z))
    }
}

/// Global error at `t = 1` of `dz/dt = -z` from `z(0) = 1` with `steps`
/// steps.
pub fn linear_decay_error(solver: Solver, steps: usize) -> f64 {
    let mut tape = Tape::new();
    let z0 = tape.constant(crate::diffprog::Matrix::scalar(1.0));
    let traj = integrate_with(&mut tape, z0, steps, 1.0 / steps as f64, solver, |t, z| Ok(t.scale(z, -1.0)))
        .expect("linear decay stays finite");
    let last = *traj.last().expect("at least one step");
    (tape.value(last).item() - (-1f64).exp()).abs()
}
