//! Define-by-run reverse-mode differentiation over [`Array`] values.
//!
//! A graph is recorded per loss evaluation: leaves are constants or named
//! parameters, interior nodes record the op and its operand ids. `backward`
//! walks the record once in reverse and accumulates parameter gradients.
//! Graphs are cheap to rebuild, so nothing is retained between iterations.

use crate::autodiff::array::{gemm, Array};
use crate::error::{Error, Result};

pub type NodeId = usize;
pub type ParamId = usize;

/// Named trainable arrays; the optimizer's single source of truth.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.values[id]
    }

    pub fn values_mut(&mut self) -> &mut [Array] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(|s| s.as_str()).zip(self.values.iter())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

enum Op {
    Const,
    Param(ParamId),
    Add(NodeId, NodeId),
    /// `(n x m) + (1 x m)`, row broadcast over n.
    AddRow(NodeId, NodeId),
    AddScalar(NodeId),
    Sub(NodeId, NodeId),
    /// `(n x m) - (1 x m)`, row broadcast over n.
    SubRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Array times a 1x1 node.
    MulScalarNode(NodeId, NodeId),
    /// Array times a compile-time constant.
    Scale(NodeId, f64),
    Div(NodeId, NodeId),
    /// Array divided by a 1x1 node.
    DivScalarNode(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Neg(NodeId),
    /// Mean binary cross-entropy of n x 1 logits against fixed 0/1 targets,
    /// fused for numerical stability: softplus(x) - y*x per row.
    BceWithLogits(NodeId, Vec<f64>),
    Sum(NodeId),
    /// n x m -> n x 1 row sums.
    RowSum(NodeId),
    HConcat(Vec<NodeId>),
    VConcat(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    GatherCols(NodeId, Vec<usize>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::AddScalar(..) => "add_scalar",
            Op::Sub(..) => "sub",
            Op::SubRow(..) => "sub_row",
            Op::Mul(..) => "mul",
            Op::MulScalarNode(..) => "mul_scalar_node",
            Op::Scale(..) => "scale",
            Op::Div(..) => "div",
            Op::DivScalarNode(..) => "div_scalar_node",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Neg(..) => "neg",
            Op::BceWithLogits(..) => "bce_with_logits",
            Op::Sum(..) => "sum",
            Op::RowSum(..) => "row_sum",
            Op::HConcat(..) => "hconcat",
            Op::VConcat(..) => "vconcat",
            Op::GatherRows(..) => "gather_rows",
            Op::GatherCols(..) => "gather_cols",
        }
    }
}

struct Node {
    op: Op,
    value: Array,
}

pub struct Tape {
    nodes: Vec<Node>,
    /// Shape of each bound param, for gradient allocation.
    param_shapes: Vec<(ParamId, usize, usize)>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), param_shapes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Array) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    fn err(&self, op: &str, msg: String) -> Error {
        Error::shape(format!("node {} ({op})", self.nodes.len()), msg)
    }

    fn shape_of(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id].value.shape()
    }

    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(Op::Const, value)
    }

    /// Bind a parameter as a leaf. Binding the same id more than once is
    /// allowed; gradients from every leaf accumulate.
    pub fn param(&mut self, id: ParamId, store: &ParamStore) -> NodeId {
        let value = store.get(id).clone();
        let (r, c) = value.shape();
        self.param_shapes.push((id, r, c));
        self.push(Op::Param(id), value)
    }

    fn binary_elementwise(
        &mut self,
        opname: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        mk: impl Fn(NodeId, NodeId) -> Op,
    ) -> Result<NodeId> {
        let (ar, ac) = self.shape_of(a);
        let (br, bc) = self.shape_of(b);
        if (ar, ac) != (br, bc) {
            return Err(self.err(opname, format!("{ar}x{ac} vs {br}x{bc}")));
        }
        let data = self.nodes[a]
            .value
            .data()
            .iter()
            .zip(self.nodes[b].value.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Array::from_vec(ar, ac, data)?;
        Ok(self.push(mk(a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise("div", a, b, |x, y| x / y, Op::Div)
    }

    fn row_broadcast(
        &mut self,
        opname: &'static str,
        a: NodeId,
        row: NodeId,
        f: impl Fn(f64, f64) -> f64,
        mk: impl Fn(NodeId, NodeId) -> Op,
    ) -> Result<NodeId> {
        let (ar, ac) = self.shape_of(a);
        let (br, bc) = self.shape_of(row);
        if br != 1 || bc != ac {
            return Err(self.err(opname, format!("{ar}x{ac} with row {br}x{bc}")));
        }
        let rowv = self.nodes[row].value.data();
        let mut data = Vec::with_capacity(ar * ac);
        for r in 0..ar {
            let base = self.nodes[a].value.row_slice(r);
            for c in 0..ac {
                data.push(f(base[c], rowv[c]));
            }
        }
        let value = Array::from_vec(ar, ac, data)?;
        Ok(self.push(mk(a, row), value))
    }

    /// `(n x m) + (1 x m)` broadcast, e.g. adding a bias row.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.row_broadcast("add_row", a, row, |x, y| x + y, Op::AddRow)
    }

    /// `(n x m) - (1 x m)` broadcast.
    pub fn sub_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.row_broadcast("sub_row", a, row, |x, y| x - y, Op::SubRow)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a].value.map(|x| x + c);
        self.push(Op::AddScalar(a), value)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a].value.map(|x| x * c);
        self.push(Op::Scale(a, c), value)
    }

    /// Elementwise product of `a` with the single element of the 1x1 node `s`.
    pub fn mul_scalar_node(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.shape_of(s) != (1, 1) {
            let (r, c) = self.shape_of(s);
            return Err(self.err("mul_scalar_node", format!("scalar operand is {r}x{c}")));
        }
        let sv = self.nodes[s].value.item();
        let value = self.nodes[a].value.map(|x| x * sv);
        Ok(self.push(Op::MulScalarNode(a, s), value))
    }

    /// Elementwise quotient of `a` by the single element of the 1x1 node `s`.
    pub fn div_scalar_node(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.shape_of(s) != (1, 1) {
            let (r, c) = self.shape_of(s);
            return Err(self.err("div_scalar_node", format!("scalar operand is {r}x{c}")));
        }
        let sv = self.nodes[s].value.item();
        let value = self.nodes[a].value.map(|x| x / sv);
        Ok(self.push(Op::DivScalarNode(a, s), value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape_of(a);
        let (br, bc) = self.shape_of(b);
        if ac != br {
            return Err(self.err("matmul", format!("{ar}x{ac} @ {br}x{bc}")));
        }
        let mut value = Array::zeros(ar, bc);
        gemm(false, false, 1.0, &self.nodes[a].value, &self.nodes[b].value, 0.0, &mut value);
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.transpose();
        self.push(Op::Transpose(a), value)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(f64::exp);
        self.push(Op::Exp(a), value)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(f64::ln);
        self.push(Op::Ln(a), value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(|x| -x);
        self.push(Op::Neg(a), value)
    }

    /// Mean over rows of `softplus(x) - y*x` for n x 1 logits and 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: Vec<f64>) -> Result<NodeId> {
        let (r, c) = self.shape_of(logits);
        if c != 1 || r == 0 {
            return Err(self.err("bce_with_logits", format!("logits must be n x 1, got {r}x{c}")));
        }
        if targets.len() != r {
            return Err(self.err(
                "bce_with_logits",
                format!("{} targets for {} logits", targets.len(), r),
            ));
        }
        if let Some(bad) = targets.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(self.err("bce_with_logits", format!("target {bad} is not 0 or 1")));
        }
        let mean = self.nodes[logits]
            .value
            .data()
            .iter()
            .zip(&targets)
            .map(|(&x, &y)| softplus(x) - y * x)
            .sum::<f64>()
            / r as f64;
        Ok(self.push(Op::BceWithLogits(logits, targets), Array::scalar(mean)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.nodes[a].value.data().iter().sum();
        self.push(Op::Sum(a), Array::scalar(total))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let (r, _) = self.shape_of(a);
        let data = (0..r).map(|i| self.nodes[a].value.row_slice(i).iter().sum()).collect();
        let value = Array::from_vec(r, 1, data).expect("row_sum shape");
        self.push(Op::RowSum(a), value)
    }

    /// Concatenate along columns; all parts share the row count.
    pub fn hconcat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(self.err("hconcat", "no parts".into()));
        }
        let (rows, _) = self.shape_of(parts[0]);
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape_of(p);
            if r != rows {
                return Err(self.err("hconcat", format!("row counts {rows} vs {r}")));
            }
            cols += c;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.nodes[p].value.row_slice(r));
            }
        }
        let value = Array::from_vec(rows, cols, data)?;
        Ok(self.push(Op::HConcat(parts.to_vec()), value))
    }

    /// Concatenate along rows; all parts share the column count.
    pub fn vconcat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(self.err("vconcat", "no parts".into()));
        }
        let (_, cols) = self.shape_of(parts[0]);
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.shape_of(p);
            if c != cols {
                return Err(self.err("vconcat", format!("column counts {cols} vs {c}")));
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.nodes[p].value.data());
        }
        let value = Array::from_vec(rows, cols, data)?;
        Ok(self.push(Op::VConcat(parts.to_vec()), value))
    }

    /// Select rows by index; repeats are allowed.
    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let (r, c) = self.shape_of(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(self.err("gather_rows", format!("row {bad} out of {r}")));
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.nodes[a].value.row_slice(i));
        }
        let value = Array::from_vec(idx.len(), c, data)?;
        Ok(self.push(Op::GatherRows(a, idx.to_vec()), value))
    }

    /// Select columns by index; repeats are allowed.
    pub fn gather_cols(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let (r, c) = self.shape_of(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= c) {
            return Err(self.err("gather_cols", format!("column {bad} out of {c}")));
        }
        let mut data = Vec::with_capacity(idx.len() * r);
        for row in 0..r {
            let slice = self.nodes[a].value.row_slice(row);
            for &j in idx {
                data.push(slice[j]);
            }
        }
        let value = Array::from_vec(r, idx.len(), data)?;
        Ok(self.push(Op::GatherCols(a, idx.to_vec()), value))
    }

    /// Reverse sweep from a scalar loss node. Returns one gradient per
    /// parameter in `store`; parameters not on the tape get zero gradients.
    pub fn backward(&self, loss: NodeId, store: &ParamStore) -> Result<Vec<Array>> {
        if self.shape_of(loss) != (1, 1) {
            let (r, c) = self.shape_of(loss);
            return Err(Error::shape(
                format!("node {loss} ({})", self.nodes[loss].op.name()),
                format!("backward needs a 1x1 loss, got {r}x{c}"),
            ));
        }
        let mut grads: Vec<Option<Array>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Array> =
            (0..store.len()).map(|i| Array::zeros(store.get(i).shape().0, store.get(i).shape().1)).collect();
        grads[loss] = Some(Array::scalar(1.0));

        for id in (0..=loss).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            macro_rules! acc {
                ($parent:expr, $update:expr) => {{
                    let parent: NodeId = $parent;
                    if grads[parent].is_none() {
                        let (r, c) = self.shape_of(parent);
                        grads[parent] = Some(Array::zeros(r, c));
                    }
                    let slot = grads[parent].as_mut().expect("initialized above");
                    #[allow(clippy::redundant_closure_call)]
                    ($update)(slot);
                }};
            }
            match &node.op {
                Op::Const => {}
                Op::Param(pid) => {
                    let pg = &mut param_grads[*pid];
                    for (o, gi) in pg.data_mut().iter_mut().zip(g.data()) {
                        *o += gi;
                    }
                }
                Op::Add(a, b) => {
                    acc!(*a, |s: &mut Array| add_assign(s, g.data()));
                    acc!(*b, |s: &mut Array| add_assign(s, g.data()));
                }
                Op::AddRow(a, row) => {
                    acc!(*a, |s: &mut Array| add_assign(s, g.data()));
                    acc!(*row, |s: &mut Array| {
                        let cols = s.cols();
                        for r in 0..g.rows() {
                            let gr = g.row_slice(r);
                            for c in 0..cols {
                                s.data_mut()[c] += gr[c];
                            }
                        }
                    });
                }
                Op::AddScalar(a) => {
                    acc!(*a, |s: &mut Array| add_assign(s, g.data()));
                }
                Op::Sub(a, b) => {
                    acc!(*a, |s: &mut Array| add_assign(s, g.data()));
                    acc!(*b, |s: &mut Array| sub_assign(s, g.data()));
                }
                Op::SubRow(a, row) => {
                    acc!(*a, |s: &mut Array| add_assign(s, g.data()));
                    acc!(*row, |s: &mut Array| {
                        let cols = s.cols();
                        for r in 0..g.rows() {
                            let gr = g.row_slice(r);
                            for c in 0..cols {
                                s.data_mut()[c] -= gr[c];
                            }
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    acc!(*a, |s: &mut Array| mul_add_assign(s, g.data(), bv.data()));
                    acc!(*b, |s: &mut Array| mul_add_assign(s, g.data(), av.data()));
                }
                Op::MulScalarNode(a, sc) => {
                    let sv = self.nodes[*sc].value.item();
                    let av = &self.nodes[*a].value;
                    acc!(*a, |s: &mut Array| {
                        for (o, gi) in s.data_mut().iter_mut().zip(g.data()) {
                            *o += gi * sv;
                        }
                    });
                    let dot: f64 = g.data().iter().zip(av.data()).map(|(x, y)| x * y).sum();
                    acc!(*sc, |s: &mut Array| s.data_mut()[0] += dot);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc!(*a, |s: &mut Array| {
                        for (o, gi) in s.data_mut().iter_mut().zip(g.data()) {
                            *o += gi * c;
                        }
                    });
                }
                Op::Div(a, b) => {
                    let bv = &self.nodes[*b].value;
                    let out = &node.value;
                    acc!(*a, |s: &mut Array| {
                        for ((o, gi), d) in s.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                            *o += gi / d;
                        }
                    });
                    acc!(*b, |s: &mut Array| {
                        for (((o, gi), q), d) in
                            s.data_mut().iter_mut().zip(g.data()).zip(out.data()).zip(bv.data())
                        {
                            *o -= gi * q / d;
                        }
                    });
                }
                Op::DivScalarNode(a, sc) => {
                    let sv = self.nodes[*sc].value.item();
                    let out = &node.value;
                    acc!(*a, |s: &mut Array| {
                        for (o, gi) in s.data_mut().iter_mut().zip(g.data()) {
                            *o += gi / sv;
                        }
                    });
                    let dot: f64 = g.data().iter().zip(out.data()).map(|(x, q)| x * q).sum();
                    acc!(*sc, |s: &mut Array| s.data_mut()[0] -= dot / sv);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    acc!(*a, |s: &mut Array| gemm(false, true, 1.0, &g, bv, 1.0, s));
                    acc!(*b, |s: &mut Array| gemm(true, false, 1.0, av, &g, 1.0, s));
                }
                Op::Transpose(a) => {
                    let gt = g.transpose();
                    acc!(*a, |s: &mut Array| add_assign(s, gt.data()));
                }
                Op::Exp(a) => {
                    let out = &node.value;
                    acc!(*a, |s: &mut Array| mul_add_assign(s, g.data(), out.data()));
                }
                Op::Ln(a) => {
                    let av = &self.nodes[*a].value;
                    acc!(*a, |s: &mut Array| {
                        for ((o, gi), x) in s.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                            *o += gi / x;
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let out = &node.value;
                    acc!(*a, |s: &mut Array| {
                        for ((o, gi), y) in s.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                            *o += gi * y * (1.0 - y);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let out = &node.value;
                    acc!(*a, |s: &mut Array| {
                        for ((o, gi), y) in s.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                            *o += gi * (1.0 - y * y);
                        }
                    });
                }
                Op::Neg(a) => {
                    acc!(*a, |s: &mut Array| sub_assign(s, g.data()));
                }
                Op::BceWithLogits(logits, targets) => {
                    let gs = g.item();
                    let n = targets.len() as f64;
                    let lv = &self.nodes[*logits].value;
                    acc!(*logits, |s: &mut Array| {
                        for ((o, &x), &y) in s.data_mut().iter_mut().zip(lv.data()).zip(targets) {
                            *o += gs * (sigmoid(x) - y) / n;
                        }
                    });
                }
                Op::Sum(a) => {
                    let gs = g.item();
                    acc!(*a, |s: &mut Array| {
                        for o in s.data_mut() {
                            *o += gs;
                        }
                    });
                }
                Op::RowSum(a) => {
                    acc!(*a, |s: &mut Array| {
                        let cols = s.cols();
                        for r in 0..s.rows() {
                            let gi = g.data()[r];
                            let row = &mut s.data_mut()[r * cols..(r + 1) * cols];
                            for o in row {
                                *o += gi;
                            }
                        }
                    });
                }
                Op::HConcat(parts) => {
                    let mut col0 = 0;
                    for &p in parts {
                        let (pr, pc) = self.shape_of(p);
                        acc!(p, |s: &mut Array| {
                            for r in 0..pr {
                                let gr = &g.row_slice(r)[col0..col0 + pc];
                                let sr = &mut s.data_mut()[r * pc..(r + 1) * pc];
                                for (o, gi) in sr.iter_mut().zip(gr) {
                                    *o += gi;
                                }
                            }
                        });
                        col0 += pc;
                    }
                }
                Op::VConcat(parts) => {
                    let mut row0 = 0;
                    for &p in parts {
                        let (pr, pc) = self.shape_of(p);
                        acc!(p, |s: &mut Array| {
                            let src = &g.data()[row0 * pc..(row0 + pr) * pc];
                            add_assign_slice(s.data_mut(), src);
                        });
                        row0 += pr;
                    }
                }
                Op::GatherRows(a, idx) => {
                    acc!(*a, |s: &mut Array| {
                        let cols = s.cols();
                        for (out_r, &src_r) in idx.iter().enumerate() {
                            let gr = g.row_slice(out_r);
                            let sr = &mut s.data_mut()[src_r * cols..(src_r + 1) * cols];
                            for (o, gi) in sr.iter_mut().zip(gr) {
                                *o += gi;
                            }
                        }
                    });
                }
                Op::GatherCols(a, idx) => {
                    acc!(*a, |s: &mut Array| {
                        let cols = s.cols();
                        for r in 0..s.rows() {
                            let gr = g.row_slice(r);
                            for (out_c, &src_c) in idx.iter().enumerate() {
                                s.data_mut()[r * cols + src_c] += gr[out_c];
                            }
                        }
                    });
                }
            }
        }
        Ok(param_grads)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn add_assign(s: &mut Array, g: &[f64]) {
    add_assign_slice(s.data_mut(), g);
}

fn add_assign_slice(s: &mut [f64], g: &[f64]) {
    for (o, gi) in s.iter_mut().zip(g) {
        *o += gi;
    }
}

fn sub_assign(s: &mut Array, g: &[f64]) {
    for (o, gi) in s.data_mut().iter_mut().zip(g) {
        *o -= gi;
    }
}

fn mul_add_assign(s: &mut Array, g: &[f64], other: &[f64]) {
    for ((o, gi), x) in s.data_mut().iter_mut().zip(g).zip(other) {
        *o += gi * x;
    }
}
