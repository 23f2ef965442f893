//! Parameter storage and the neural layers built on the tape.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Grads, Tape, Var};
use super::tensor::{Csr, Matrix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::NamedTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.bind_where(tape, |_| true)
    }

    /// Records parameters, trainable only where `trainable` says so.
    pub fn bind_where(&self, tape: &mut Tape, trainable: impl Fn(ParamId) -> bool) -> Bound {
        let vars = self
            .ids()
            .map(|id| {
                let v = self.values[id.0].clone();
                Some(if trainable(id) {
                    tape.variable(v)
                } else {
                    tape.constant(v)
                })
            })
            .collect();
        Bound { vars }
    }

    /// Records only `ids`; other parameters are unavailable in the result.
    pub fn bind_only(&self, tape: &mut Tape, ids: &[ParamId], trainable: bool) -> Bound {
        let mut vars = vec![None; self.values.len()];
        for &id in ids {
            let v = self.values[id.0].clone();
            vars[id.0] = Some(if trainable { tape.variable(v) } else { tape.constant(v) });
        }
        Bound { vars }
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, m)| NamedTensor {
                name: name.clone(),
                rows: m.rows,
                cols: m.cols,
                data: m.data.clone(),
            })
            .collect()
    }

    /// Overwrites values from a checkpoint; names and shapes must match.
    pub fn load_named(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        if tensors.len() != self.values.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                self.values.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            let m = &mut self.values[i];
            if t.name != self.names[i] || (t.rows, t.cols) != m.shape() {
                return Err(Error::Format(format!(
                    "tensor {i}: found {} {}x{}, expected {} {}x{}",
                    t.name, t.rows, t.cols, self.names[i], m.rows, m.cols
                )));
            }
            m.data.copy_from_slice(&t.data);
        }
        Ok(())
    }
}

/// Tape handles for a [`ParamSet`] bound to one forward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Option<Var>>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0].expect("parameter was not bound on this tape")
    }

    /// Gradients per parameter, in [`ParamSet`] order.
    pub fn gradients(&self, grads: &mut Grads) -> Vec<Option<Matrix>> {
        self.vars.iter().map(|v| v.and_then(|v| grads.take(v))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Uniform Glorot initialization.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect(),
    }
}

/// Affine layers with tanh between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    output: Activation,
    dims: Vec<usize>,
}

impl Mlp {
    /// `dims` lists the widths from input to output, at least two entries.
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        dims: &[usize],
        output: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let weight = params.add(format!("{name}.{i}.weight"), glorot(w[0], w[1], rng));
                let bias = params.add(format!("{name}.{i}.bias"), Matrix::zeros(1, w[1]));
                (weight, bias)
            })
            .collect();
        Mlp {
            layers,
            output,
            dims: dims.to_vec(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.input_dim() {
            return Err(Error::shape(
                "mlp_forward",
                format!("input has {cols} columns, layer expects {}", self.input_dim()),
            ));
        }
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.affine(h, bound.var(w), bound.var(b));
            h = if i + 1 < self.layers.len() {
                tape.tanh(h)
            } else {
                self.output.apply(tape, h)
            };
        }
        Ok(h)
    }
}

/// Graph convolution `σ(Â X Θ)` without bias.
#[derive(Debug, Clone)]
pub struct Gcn {
    weight: ParamId,
    activation: Activation,
}

impl Gcn {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), glorot(input, output, rng));
        Gcn { weight, activation }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, adjacency: &Arc<Csr>, x: Var) -> Result<Var> {
        let (rows, cols) = tape.shape(x);
        if adjacency.cols != rows {
            return Err(Error::shape(
                "gcn_forward",
                format!("adjacency is {}x{}, input has {rows} rows", adjacency.rows, adjacency.cols),
            ));
        }
        let w = bound.var(self.weight);
        if tape.shape(w).0 != cols {
            return Err(Error::shape(
                "gcn_forward",
                format!("input has {cols} columns, weight has {}", tape.shape(w).0),
            ));
        }
        let xw = tape.matmul(x, w);
        let h = tape.spmm(Arc::clone(adjacency), xw);
        Ok(self.activation.apply(tape, h))
    }
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` for a simple graph.
pub fn gcn_normalized_adjacency(graph: &Graph) -> Csr {
    let n = graph.node_count();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / ((graph.degree(i) + 1) as f64).sqrt()).collect();
    let mut triplets = Vec::with_capacity(n + 2 * graph.edge_count());
    for i in 0..n {
        triplets.push((i, i, scale[i] * scale[i]));
        for &j in graph.neighbors(i) {
            triplets.push((i, j, scale[i] * scale[j]));
        }
    }
    Csr::from_triplets(n, n, triplets)
}

/// `D^{-1}(A + I)` for a nonnegative weighted adjacency. Rows without any
/// connection stay zero.
pub fn row_normalized_with_self_loops(adjacency: &Matrix) -> Csr {
    let n = adjacency.rows;
    let mut triplets = Vec::new();
    for i in 0..n {
        let row = adjacency.row(i);
        let weight: f64 = row.iter().sum();
        if weight == 0.0 {
            continue;
        }
        let total = weight + 1.0;
        for (j, &a) in row.iter().enumerate() {
            let w = if i == j { a + 1.0 } else { a };
            if w != 0.0 {
                triplets.push((i, j, w / total));
            }
        }
    }
    Csr::from_triplets(n, n, triplets)
}
