use super::params::{Initializer, ParamId, ParamStore};
use super::NnError;
use crate::autodiff::{Graph, Tensor, TensorError, Var};

/// One LSTM layer. Gate blocks are packed column-wise in the order
/// input, forget, cell, output: `w_ih: [in × 4H]`, `w_hh: [H × 4H]`,
/// `bias: [4H]`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct LstmStack {
    pub cells: Vec<LstmCell>,
    pub hidden_dim: usize,
}

/// Per-timestep validity of each batch row. Rows past the end of a shorter
/// sequence are invalid and carry their recurrent state forward unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMask {
    steps: Vec<Vec<bool>>,
}

impl StepMask {
    pub fn new(steps: Vec<Vec<bool>>) -> Self {
        Self { steps }
    }

    pub fn all_valid(steps: usize, batch: usize) -> Self {
        Self {
            steps: vec![vec![true; batch]; steps],
        }
    }

    /// Mask for a batch of sequences with the given lengths, padded to the
    /// longest.
    pub fn from_lengths(lengths: &[usize]) -> Self {
        let t_max = lengths.iter().copied().max().unwrap_or(0);
        Self {
            steps: (0..t_max)
                .map(|t| lengths.iter().map(|&l| t < l).collect())
                .collect(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, t: usize) -> &[bool] {
        &self.steps[t]
    }

    pub fn n_valid(&self) -> usize {
        self.steps.iter().flatten().filter(|v| **v).count()
    }

    /// `[B × width]` constants holding the mask and its complement at step `t`,
    /// or `None` when every row is valid.
    pub(crate) fn mix_constants(
        &self,
        g: &mut Graph,
        t: usize,
        width: usize,
    ) -> Option<(Var, Var)> {
        let rows = &self.steps[t];
        if rows.iter().all(|v| *v) {
            return None;
        }
        let keep: Vec<f64> = rows
            .iter()
            .flat_map(|&v| std::iter::repeat_n(if v { 1.0 } else { 0.0 }, width))
            .collect();
        let hold: Vec<f64> = keep.iter().map(|k| 1.0 - k).collect();
        let shape = vec![rows.len(), width];
        let keep = g.constant(Tensor::new(shape.clone(), keep).ok()?);
        let hold = g.constant(Tensor::new(shape, hold).ok()?);
        Some((keep, hold))
    }
}

/// `keep · new + hold · old`, used to freeze state at padded steps.
pub(crate) fn carry(
    g: &mut Graph,
    consts: Option<(Var, Var)>,
    new: Var,
    old: Var,
) -> Result<Var, TensorError> {
    match consts {
        None => Ok(new),
        Some((keep, hold)) => {
            let a = g.mul(keep, new)?;
            let b = g.mul(hold, old)?;
            g.add(a, b)
        }
    }
}

impl LstmCell {
    fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<Self, NnError> {
        let w_ih = init.uniform_weight(in_dim, 4 * hidden, in_dim, hidden)?;
        let w_hh = init.uniform_weight(hidden, 4 * hidden, hidden, hidden)?;
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Ok(Self {
            w_ih: store.add(format!("{name}.w_ih"), w_ih, true),
            w_hh: store.add(format!("{name}.w_hh"), w_hh, true),
            bias: store.add(format!("{name}.bias"), Tensor::new(vec![4 * hidden], bias)?, false),
            in_dim,
            hidden,
        })
    }

    /// Runs the cell over a whole sequence.
    fn forward(
        &self,
        g: &mut Graph,
        params: &[Var],
        xs: &[Var],
        mask: &StepMask,
    ) -> Result<Vec<Var>, TensorError> {
        let h_dim = self.hidden;
        let batch = g.shape(xs[0])[0];
        let steps = xs.len();

        // Input projections for all timesteps in one product: row t·B + b.
        let stacked = if steps == 1 { xs[0] } else { g.concat(xs, 0)? };
        let proj = g.matmul(stacked, params[self.w_ih.index()])?;
        let bias = g.broadcast(params[self.bias.index()], &[steps * batch, 4 * h_dim])?;
        let proj = g.add(proj, bias)?;

        let mut h = g.constant(Tensor::zeros(vec![batch, h_dim]));
        let mut c = g.constant(Tensor::zeros(vec![batch, h_dim]));
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let xp = if steps == 1 {
                proj
            } else {
                g.slice(proj, 0, t * batch, batch)?
            };
            let hp = g.matmul(h, params[self.w_hh.index()])?;
            let z = g.add(xp, hp)?;
            let i = g.slice(z, 1, 0, h_dim)?;
            let i = g.sigmoid(i);
            let f = g.slice(z, 1, h_dim, h_dim)?;
            let f = g.sigmoid(f);
            let cand = g.slice(z, 1, 2 * h_dim, h_dim)?;
            let cand = g.tanh(cand);
            let o = g.slice(z, 1, 3 * h_dim, h_dim)?;
            let o = g.sigmoid(o);

            let fc = g.mul(f, c)?;
            let ic = g.mul(i, cand)?;
            let c_new = g.add(fc, ic)?;
            let tc = g.tanh(c_new);
            let h_new = g.mul(o, tc)?;

            let consts = mask.mix_constants(g, t, h_dim);
            c = carry(g, consts, c_new, c)?;
            h = carry(g, consts, h_new, h)?;
            out.push(h);
        }
        Ok(out)
    }
}

impl LstmStack {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_dim: usize,
        hidden: usize,
        layers: usize,
    ) -> Result<Self, NnError> {
        if layers == 0 || hidden == 0 || in_dim == 0 {
            return Err(NnError::ZeroDim);
        }
        let mut cells = Vec::with_capacity(layers);
        for l in 0..layers {
            let input = if l == 0 { in_dim } else { hidden };
            cells.push(LstmCell::new(store, init, &format!("{name}.{l}"), input, hidden)?);
        }
        Ok(Self {
            cells,
            hidden_dim: hidden,
        })
    }

    /// `xs[t]: [B × in_dim]` → top-layer hidden states `[B × hidden]` per
    /// step. State starts at zero for every call.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &[Var],
        xs: &[Var],
        mask: &StepMask,
    ) -> Result<Vec<Var>, TensorError> {
        let Some(&first) = xs.first() else {
            return Err(TensorError::Empty { op: "lstm_forward" });
        };
        let shape = g.shape(first).to_vec();
        let in_dim = self.cells[0].in_dim;
        if shape.len() != 2 || shape[1] != in_dim {
            return Err(TensorError::shape("lstm_forward", &shape, &[shape[0], in_dim]));
        }
        for x in xs {
            if g.shape(*x) != shape.as_slice() {
                return Err(TensorError::shape("lstm_forward", &shape, g.shape(*x)));
            }
        }
        if mask.n_steps() != xs.len() || mask.step(0).len() != shape[0] {
            return Err(TensorError::InvalidArgument(format!(
                "lstm_forward: mask covers {} steps × {} rows, input has {} × {}",
                mask.n_steps(),
                mask.steps.first().map_or(0, Vec::len),
                xs.len(),
                shape[0]
            )));
        }
        let mut seq = xs.to_vec();
        for cell in &self.cells {
            seq = cell.forward(g, params, &seq, mask)?;
        }
        Ok(seq)
    }
}
