//! Reverse-mode differentiation over a linear tape of tensor operations.

use super::ops;
use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Handle to a [`Parameter`] inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Outcomes of every piecewise-linear branch (ReLU masks and max-pool
/// winners) taken during one forward pass, in evaluation order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BranchRecord(Vec<Vec<u32>>);

impl BranchRecord {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
    },
    Add(Var, Var),
    Relu {
        input: Var,
        mask: Vec<u32>,
    },
    Sigmoid(Var),
    ChannelMax {
        input: Var,
        argmax: Vec<u32>,
    },
    Reshape(Var),
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Concat(Vec<Var>),
    Select {
        input: Var,
        index: Vec<usize>,
    },
    Sum(Var),
    Scale(Var, f64),
    External {
        input: Var,
        grad: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

enum Branching {
    Record(BranchRecord),
    Replay { record: BranchRecord, cursor: usize },
}

/// Records tensor operations so that gradients can be pulled back to
/// parameters with [`Tape::backward`].
pub struct Tape {
    nodes: Vec<Node>,
    branching: Branching,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            branching: Branching::Record(BranchRecord::default()),
        }
    }

    /// A tape that reuses the branch outcomes of an earlier pass instead of
    /// deciding them from the current values.
    pub fn replaying(record: BranchRecord) -> Self {
        Self {
            nodes: Vec::new(),
            branching: Branching::Replay { record, cursor: 0 },
        }
    }

    /// Branch outcomes recorded so far (empty for replaying tapes).
    pub fn branch_record(&self) -> &BranchRecord {
        match &self.branching {
            Branching::Record(r) => r,
            Branching::Replay { .. } => {
                static EMPTY: BranchRecord = BranchRecord(Vec::new());
                &EMPTY
            }
        }
    }

    pub fn into_branch_record(self) -> BranchRecord {
        match self.branching {
            Branching::Record(r) => r,
            Branching::Replay { record, .. } => record,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, what: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("{what} output")));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn branch(&mut self, len: usize, decide: impl FnOnce() -> Vec<u32>) -> Result<Vec<u32>> {
        match &mut self.branching {
            Branching::Record(r) => {
                let d = decide();
                r.0.push(d.clone());
                Ok(d)
            }
            Branching::Replay { record, cursor } => {
                let d = record
                    .0
                    .get(*cursor)
                    .cloned()
                    .ok_or_else(|| Error::Mismatch("branch replay exhausted".into()))?;
                if d.len() != len {
                    return Err(Error::Mismatch(format!(
                        "branch replay entry {} has {} cells, expected {len}",
                        cursor,
                        d.len()
                    )));
                }
                *cursor += 1;
                Ok(d)
            }
        }
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Records a constant.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Input });
        Var(self.nodes.len() - 1)
    }

    /// Records the current value of a parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: store.get(id).value.clone(),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let out = ops::conv2d(self.value(input), self.value(kernel), bias.map(|b| self.value(b)))?;
        self.push(out, Op::Conv2d { input, kernel, bias }, "conv2d")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let n = self.value(input).len();
        let mask = {
            let x = self.value(input).data().to_vec();
            self.branch(n, move || x.iter().map(|&v| u32::from(v > 0.0)).collect())?
        };
        let mut out = self.value(input).clone();
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            if m == 0 {
                *o = 0.0;
            }
        }
        self.push(out, Op::Relu { input, mask }, "relu")
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let out = ops::sigmoid(self.value(input));
        self.push(out, Op::Sigmoid(input), "sigmoid")
    }

    /// Channel-wise max of a `C×H×W` value; output is `H×W`.
    pub fn channel_max(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.rank() != 3 {
            return Err(shape_err("channel_max", format!("input must be C×H×W, got {:?}", x.shape())));
        }
        let cells = x.shape()[1] * x.shape()[2];
        let (values, argmax) = match &self.branching {
            Branching::Record(_) => {
                let (v, a) = ops::channel_max(x)?;
                self.branch(cells, || a.clone())?;
                (v, a)
            }
            Branching::Replay { .. } => {
                let a = self.branch(cells, Vec::new)?;
                (ops::channel_select(self.value(input), &a)?, a)
            }
        };
        self.push(values, Op::ChannelMax { input, argmax }, "channel_max")
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(input).reshape(shape)?;
        self.push(out, Op::Reshape(input), "reshape")
    }

    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::dense(self.value(input), self.value(weight), self.value(bias))?;
        self.push(out, Op::Dense { input, weight, bias }, "dense")
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "nothing to concatenate"))?;
        let trailing = self.value(*first).shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape()[1..] != trailing[..] {
                return Err(shape_err("concat", format!("{:?} vs trailing {:?}", v.shape(), trailing)));
            }
            lead += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![lead];
        shape.extend(trailing);
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::Concat(parts.to_vec()), "concat")
    }

    /// Gathers flat elements `index` into a vector.
    pub fn select(&mut self, input: Var, index: &[usize]) -> Result<Var> {
        let x = self.value(input);
        if index.is_empty() {
            return Err(shape_err("select", "empty index"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= x.len()) {
            return Err(shape_err("select", format!("index {bad} out of range {}", x.len())));
        }
        let out = Tensor::vector(index.iter().map(|&i| x.data()[i]).collect());
        self.push(
            out,
            Op::Select {
                input,
                index: index.to_vec(),
            },
            "select",
        )
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(input).sum());
        self.push(out, Op::Sum(input), "sum")
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let out = self.value(input).map(|v| v * factor);
        self.push(out, Op::Scale(input, factor), "scale")
    }

    /// A scalar function of `input` whose value and gradient were computed
    /// outside the tape.
    pub fn external_scalar(&mut self, input: Var, value: f64, grad: Tensor) -> Result<Var> {
        if grad.shape() != self.value(input).shape() {
            return Err(shape_err(
                "external_scalar",
                format!("gradient {:?} vs input {:?}", grad.shape(), self.value(input).shape()),
            ));
        }
        if !grad.all_finite() {
            return Err(Error::NonFinite("external gradient".into()));
        }
        self.push(Tensor::scalar(value), Op::External { input, grad }, "external_scalar")
    }

    /// Accumulates `∂loss/∂param` into every parameter reached from `loss`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let v = self.value(loss);
        if !v.is_scalar() {
            return Err(Error::NotScalar(v.shape().to_vec()));
        }
        self.backward_seeded(loss, Tensor::filled(v.shape(), 1.0), store)
    }

    /// Backpropagates an arbitrary upstream gradient `seed` from `from`.
    pub fn backward_seeded(&self, from: Var, seed: Tensor, store: &mut ParamStore) -> Result<()> {
        if seed.shape() != self.value(from).shape() {
            return Err(shape_err("backward", "seed shape differs from value shape"));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(from.0 + 1);
        grads.resize_with(from.0 + 1, || None);
        grads[from.0] = Some(seed);

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=from.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    if !g.all_finite() {
                        return Err(Error::NonFinite(format!("gradient of {}", store.get(*id).name)));
                    }
                    store.get_mut(*id).grad.add_assign(&g);
                }
                Op::Conv2d { input, kernel, bias } => {
                    let (gx, gk, gb) =
                        ops::conv2d_backward(self.value(*input), self.value(*kernel), &g)?;
                    acc(&mut grads, *input, gx);
                    acc(&mut grads, *kernel, gk);
                    if let Some(b) = bias {
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Relu { input, mask } => {
                    let mut gx = g;
                    for (v, &m) in gx.data_mut().iter_mut().zip(mask) {
                        if m == 0 {
                            *v = 0.0;
                        }
                    }
                    acc(&mut grads, *input, gx);
                }
                Op::Sigmoid(input) => {
                    let y = &node.value;
                    let mut gx = g;
                    for (v, &s) in gx.data_mut().iter_mut().zip(y.data()) {
                        *v *= s * (1.0 - s);
                    }
                    acc(&mut grads, *input, gx);
                }
                Op::ChannelMax { input, argmax } => {
                    let c = self.value(*input).shape()[0];
                    acc(&mut grads, *input, ops::channel_max_backward(argmax, c, &g));
                }
                Op::Reshape(input) => {
                    let gx = g.reshape(self.value(*input).shape())?;
                    acc(&mut grads, *input, gx);
                }
                Op::Dense { input, weight, bias } => {
                    let wv = self.value(*weight);
                    let gw = grads[weight.0].get_or_insert_with(|| Tensor::zeros(wv.shape()));
                    let gx = ops::dense_backward_accumulate(self.value(*input), wv, &g, gw.data_mut())?;
                    acc(&mut grads, *input, gx);
                    acc(&mut grads, *bias, g);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let shape = self.value(*p).shape().to_vec();
                        let n = self.value(*p).len();
                        let part = Tensor::new(shape, g.data()[offset..offset + n].to_vec())?;
                        offset += n;
                        acc(&mut grads, *p, part);
                    }
                }
                Op::Select { input, index } => {
                    let mut gx = Tensor::zeros(self.value(*input).shape());
                    for (&i, &gv) in index.iter().zip(g.data()) {
                        gx.data_mut()[i] += gv;
                    }
                    acc(&mut grads, *input, gx);
                }
                Op::Sum(input) => {
                    let gv = g.data()[0];
                    acc(&mut grads, *input, Tensor::filled(self.value(*input).shape(), gv));
                }
                Op::Scale(input, factor) => {
                    acc(&mut grads, *input, g.map(|v| v * factor));
                }
                Op::External { input, grad } => {
                    let gv = g.data()[0];
                    acc(&mut grads, *input, grad.map(|v| v * gv));
                }
            }
        }
        Ok(())
    }
}
