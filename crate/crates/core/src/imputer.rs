//! Missing-value handling for hourly time series.
//!
//! A bidirectional recurrent estimator predicts every cell of the series
//! from the cells before it (forward pass) and after it (backward pass);
//! the two estimates are averaged into `x_impute`. Observed cells pass
//! through unchanged and only missing cells take the estimate:
//!
//! `x_mixed = m · x + (1 − m) · x_impute`
//!
//! The imputation loss is the mean absolute error between `x_impute` and the
//! observed values, over observed cells only.

use crate::autodiff::{
    finite_difference_check, GradCheckConfig, GradCheckReport, Graph, Tensor, TensorError, Var,
};
use crate::nn::{carry, Initializer, NnError, ParamId, ParamStore, StepMask};

/// Hourly series with an observation mask (1 = observed). Unobserved value
/// cells hold `NaN` and never enter any computation.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSeries {
    pub values: Tensor,
    pub mask: Tensor,
}

impl MaskedSeries {
    /// Builds the mask from a `[T][d]` grid where `None` marks a missing
    /// value. Rows must share one feature count.
    pub fn build(raw: &[Vec<Option<f64>>]) -> Result<Self, TensorError> {
        let d = raw.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(raw.len() * d);
        let mut mask = Vec::with_capacity(raw.len() * d);
        for row in raw {
            if row.len() != d {
                return Err(TensorError::RaggedRows);
            }
            for v in row {
                match v {
                    Some(x) if x.is_finite() => {
                        values.push(*x);
                        mask.push(1.0);
                    }
                    _ => {
                        values.push(f64::NAN);
                        mask.push(0.0);
                    }
                }
            }
        }
        Ok(Self {
            values: Tensor::new(vec![raw.len(), d], values)?,
            mask: Tensor::new(vec![raw.len(), d], mask)?,
        })
    }

    pub fn steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn features(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn is_observed(&self, t: usize, f: usize) -> bool {
        self.mask.at2(t, f) == 1.0
    }

    pub fn get(&self, t: usize, f: usize) -> Option<f64> {
        self.is_observed(t, f).then(|| self.values.at2(t, f))
    }

    pub fn set(&mut self, t: usize, f: usize, value: Option<f64>) {
        let d = self.features();
        let (v, m) = match value {
            Some(x) => (x, 1.0),
            None => (f64::NAN, 0.0),
        };
        self.values.data_mut()[t * d + f] = v;
        self.mask.data_mut()[t * d + f] = m;
    }

    /// Values with every unobserved cell replaced by 0.
    pub fn zero_filled(&self) -> Tensor {
        let data = self
            .values
            .data()
            .iter()
            .zip(self.mask.data())
            .map(|(&v, &m)| if m == 1.0 { v } else { 0.0 })
            .collect();
        Tensor::new(self.values.shape().to_vec(), data).expect("same shape")
    }

    pub fn n_observed(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m == 1.0).count()
    }
}

#[derive(Clone, Debug)]
struct Direction {
    w_value: ParamId,
    w_mask: ParamId,
    w_hh: ParamId,
    bias: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

/// Parameters of the bidirectional estimator: per direction a tanh
/// recurrence over `[complement, mask]` inputs and a linear read-out.
#[derive(Clone, Debug)]
pub struct Imputer {
    fwd: Direction,
    bwd: Direction,
    pub features: usize,
    pub hidden: usize,
}

/// Batched imputer input: per-step `[B × d]` zero-filled values and masks.
#[derive(Clone, Debug)]
pub struct ImputerInput<'a> {
    pub values: &'a [Tensor],
    pub masks: &'a [Tensor],
    pub steps: &'a StepMask,
}

#[derive(Clone, Debug)]
pub struct ImputedVars {
    pub x_impute: Vec<Var>,
    pub x_mixed: Vec<Var>,
    pub loss: Var,
}

/// Plain-value result for a single series.
#[derive(Clone, Debug)]
pub struct ImputedSeries {
    pub x_impute: Tensor,
    pub x_mixed: Tensor,
    pub impute_loss: f64,
}

impl Direction {
    fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        d: usize,
        h: usize,
    ) -> Result<Self, NnError> {
        Ok(Self {
            w_value: store.add(
                format!("{name}.w_value"),
                init.uniform_weight(d, h, 2 * d, h)?,
                true,
            ),
            w_mask: store.add(
                format!("{name}.w_mask"),
                init.uniform_weight(d, h, 2 * d, h)?,
                true,
            ),
            w_hh: store.add(format!("{name}.w_hh"), init.uniform_weight(h, h, h, h)?, true),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(vec![h]), false),
            w_out: store.add(format!("{name}.w_out"), init.uniform_weight(h, d, h, d)?, true),
            b_out: store.add(format!("{name}.b_out"), Tensor::zeros(vec![d]), false),
        })
    }

    /// Returns per-step estimates in original time order. The estimate at
    /// step `t` depends only on steps visited before `t` in this direction.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        g: &mut Graph,
        p: &[Var],
        observed: &[Var],
        missing: &[Var],
        mask_proj: Var,
        steps: &StepMask,
        hidden: usize,
        reverse: bool,
    ) -> Result<Vec<Var>, TensorError> {
        let t_len = observed.len();
        let batch = g.shape(observed[0])[0];
        let d = g.shape(observed[0])[1];
        let mut h = g.constant(Tensor::zeros(vec![batch, hidden]));
        let mut est = vec![None; t_len];
        let b_out = g.broadcast(p[self.b_out.index()], &[batch, d])?;
        let order: Vec<usize> = if reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        };
        for t in order {
            let hw = g.matmul(h, p[self.w_out.index()])?;
            let x_hat = g.add(hw, b_out)?;
            est[t] = Some(x_hat);

            // complement: observed values, estimates elsewhere
            let fill = g.mul(missing[t], x_hat)?;
            let comp = g.add(observed[t], fill)?;
            let a = g.matmul(comp, p[self.w_value.index()])?;
            let m = if t_len == 1 {
                mask_proj
            } else {
                g.slice(mask_proj, 0, t * batch, batch)?
            };
            let r = g.matmul(h, p[self.w_hh.index()])?;
            let z = g.add(a, m)?;
            let z = g.add(z, r)?;
            let h_new = g.tanh(z);
            let consts = steps.mix_constants(g, t, hidden);
            h = carry(g, consts, h_new, h)?;
        }
        Ok(est.into_iter().map(|e| e.expect("every step visited")).collect())
    }
}

impl Imputer {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        features: usize,
        hidden: usize,
    ) -> Result<Self, NnError> {
        if features == 0 || hidden == 0 {
            return Err(NnError::ZeroDim);
        }
        Ok(Self {
            fwd: Direction::new(store, init, &format!("{name}.fwd"), features, hidden)?,
            bwd: Direction::new(store, init, &format!("{name}.bwd"), features, hidden)?,
            features,
            hidden,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        p: &[Var],
        input: &ImputerInput<'_>,
    ) -> Result<ImputedVars, TensorError> {
        let t_len = input.values.len();
        if t_len == 0 {
            return Err(TensorError::Empty { op: "impute" });
        }
        if input.masks.len() != t_len || input.steps.n_steps() != t_len {
            return Err(TensorError::InvalidArgument(format!(
                "impute: {} value steps, {} mask steps, {} validity steps",
                t_len,
                input.masks.len(),
                input.steps.n_steps()
            )));
        }
        let shape = input.values[0].shape().to_vec();
        if shape.len() != 2 || shape[1] != self.features {
            return Err(TensorError::shape("impute", &shape, &[shape[0], self.features]));
        }
        for (v, m) in input.values.iter().zip(input.masks) {
            if v.shape() != shape.as_slice() || m.shape() != shape.as_slice() {
                return Err(TensorError::shape("impute", &shape, v.shape()));
            }
        }
        let batch = shape[0];

        // observed part m·x and missing indicator (1 − m), both constant
        let mut observed = Vec::with_capacity(t_len);
        let mut missing = Vec::with_capacity(t_len);
        for (v, m) in input.values.iter().zip(input.masks) {
            let obs = v
                .data()
                .iter()
                .zip(m.data())
                .map(|(&x, &k)| if k == 1.0 { x } else { 0.0 })
                .collect();
            let miss = m.data().iter().map(|k| 1.0 - k).collect();
            observed.push(g.constant(Tensor::new(shape.clone(), obs)?));
            missing.push(g.constant(Tensor::new(shape.clone(), miss)?));
        }

        let masks: Vec<Var> = input.masks.iter().map(|m| g.constant(m.clone())).collect();
        let masks_stacked = if t_len == 1 { masks[0] } else { g.concat(&masks, 0)? };
        let mask_proj = |dir: &Direction, g: &mut Graph| -> Result<Var, TensorError> {
            let mp = g.matmul(masks_stacked, p[dir.w_mask.index()])?;
            let b = g.broadcast(p[dir.bias.index()], &[t_len * batch, self.hidden])?;
            g.add(mp, b)
        };
        let fwd_proj = mask_proj(&self.fwd, g)?;
        let bwd_proj = mask_proj(&self.bwd, g)?;

        let f = self.fwd.run(
            g, p, &observed, &missing, fwd_proj, input.steps, self.hidden, false,
        )?;
        let b = self.bwd.run(
            g, p, &observed, &missing, bwd_proj, input.steps, self.hidden, true,
        )?;
        let mut x_impute = Vec::with_capacity(t_len);
        for (ef, eb) in f.into_iter().zip(b) {
            let s = g.add(ef, eb)?;
            x_impute.push(g.scale(s, 0.5));
        }

        let mut x_mixed = Vec::with_capacity(t_len);
        for t in 0..t_len {
            x_mixed.push(mix(g, observed[t], missing[t], x_impute[t])?);
        }

        let loss = masked_mae(g, &observed, &masks, &x_impute, input.steps)?;
        Ok(ImputedVars {
            x_impute,
            x_mixed,
            loss,
        })
    }

    /// Convenience wrapper for one series, evaluated on a fresh graph.
    pub fn impute(&self, store: &ParamStore, series: &MaskedSeries) -> Result<ImputedSeries, TensorError> {
        let t_len = series.steps();
        let d = series.features();
        let zero = series.zero_filled();
        let values: Vec<Tensor> = (0..t_len)
            .map(|t| Tensor::new(vec![1, d], zero.row(t).to_vec()))
            .collect::<Result<_, _>>()?;
        let masks: Vec<Tensor> = (0..t_len)
            .map(|t| Tensor::new(vec![1, d], series.mask.row(t).to_vec()))
            .collect::<Result<_, _>>()?;
        let steps = StepMask::all_valid(t_len, 1);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let out = self.forward(
            &mut g,
            &p,
            &ImputerInput {
                values: &values,
                masks: &masks,
                steps: &steps,
            },
        )?;
        let gather = |vars: &[Var]| {
            let data = vars.iter().flat_map(|v| g.value(*v).data().to_vec()).collect();
            Tensor::new(vec![t_len, d], data)
        };
        Ok(ImputedSeries {
            x_impute: gather(&out.x_impute)?,
            x_mixed: gather(&out.x_mixed)?,
            impute_loss: g.value(out.loss).item().expect("scalar"),
        })
    }
}

/// Verifies the imputation-loss gradient against central differences.
///
/// The instance is rejected when any observed residual lies within `1e-3`
/// of zero, where `|·|` has a kink and finite differences are meaningless.
pub fn impute_loss_gradcheck(
    imputer: &Imputer,
    store: &ParamStore,
    series: &MaskedSeries,
    config: GradCheckConfig,
) -> Result<GradCheckReport, TensorError> {
    let out = imputer.impute(store, series)?;
    for t in 0..series.steps() {
        for f in 0..series.features() {
            if let Some(v) = series.get(t, f) {
                let r = v - out.x_impute.at2(t, f);
                if r.abs() < 1e-3 {
                    return Err(TensorError::InvalidArgument(format!(
                        "residual {r:e} at ({t}, {f}) is too close to the |·| kink"
                    )));
                }
            }
        }
    }
    let t_len = series.steps();
    let d = series.features();
    let zero = series.zero_filled();
    let values: Vec<Tensor> = (0..t_len)
        .map(|t| Tensor::new(vec![1, d], zero.row(t).to_vec()))
        .collect::<Result<_, _>>()?;
    let masks: Vec<Tensor> = (0..t_len)
        .map(|t| Tensor::new(vec![1, d], series.mask.row(t).to_vec()))
        .collect::<Result<_, _>>()?;
    let steps = StepMask::all_valid(t_len, 1);
    finite_difference_check(
        |g, p| {
            let input = ImputerInput {
                values: &values,
                masks: &masks,
                steps: &steps,
            };
            Ok(imputer.forward(g, p, &input)?.loss)
        },
        &store.values(),
        config,
    )
}

/// `observed + missing · x_impute`, i.e. `m·x + (1 − m)·x_impute` with the
/// first product precomputed.
pub fn mix(g: &mut Graph, observed: Var, missing: Var, x_impute: Var) -> Result<Var, TensorError> {
    let fill = g.mul(missing, x_impute)?;
    g.add(observed, fill)
}

/// Mean of `|x − x_impute|` over observed cells of valid steps; exactly 0
/// when nothing is observed.
pub fn masked_mae(
    g: &mut Graph,
    observed: &[Var],
    masks: &[Var],
    x_impute: &[Var],
    steps: &StepMask,
) -> Result<Var, TensorError> {
    let mut count = 0.0;
    for (t, m) in masks.iter().enumerate() {
        let d = g.shape(*m)[1];
        let row_valid = steps.step(t);
        for (b, valid) in row_valid.iter().enumerate() {
            if *valid {
                count += g.value(*m).data()[b * d..(b + 1) * d].iter().sum::<f64>();
            }
        }
    }
    if count == 0.0 {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let mut total = None;
    for t in 0..masks.len() {
        let mask = match steps.mix_constants(g, t, 1) {
            None => masks[t],
            Some(_) => {
                // drop rows of padded steps
                let d = g.shape(masks[t])[1];
                let keep = steps.step(t);
                let data: Vec<f64> = g
                    .value(masks[t])
                    .data()
                    .chunks(d)
                    .zip(keep)
                    .flat_map(|(row, &k)| row.iter().map(move |&v| if k { v } else { 0.0 }))
                    .collect();
                let shape = g.shape(masks[t]).to_vec();
                g.constant(Tensor::new(shape, data)?)
            }
        };
        let diff = g.sub(observed[t], x_impute[t])?;
        let a = g.abs(diff);
        let a = g.mul(mask, a)?;
        let s = g.sum(a);
        total = Some(match total {
            None => s,
            Some(acc) => g.add(acc, s)?,
        });
    }
    let total = total.expect("at least one step");
    Ok(g.scale(total, 1.0 / count))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn imputer(d: usize, h: usize, seed: u64) -> (ParamStore, Imputer) {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed);
        let imp = Imputer::new(&mut store, &mut init, "imputer", d, h).unwrap();
        (store, imp)
    }

    fn random_series(t: usize, d: usize, missing: f64, seed: u64) -> MaskedSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Vec<Option<f64>>> = (0..t)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let v = rng.random_range(-2.0..2.0);
                        (rng.random::<f64>() >= missing).then_some(v)
                    })
                    .collect()
            })
            .collect();
        MaskedSeries::build(&raw).unwrap()
    }

    #[test]
    fn mask_of_fully_observed_series_is_all_ones() {
        let s = MaskedSeries::build(&[vec![Some(1.0), Some(2.0)], vec![Some(0.0), Some(-1.0)]]).unwrap();
        assert!(s.mask.data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn mask_of_fully_missing_series_is_all_zeros() {
        let s = MaskedSeries::build(&vec![vec![None; 3]; 4]).unwrap();
        assert!(s.mask.data().iter().all(|&m| m == 0.0));
        assert!(s.values.data().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn single_missing_cell() {
        let mut raw = vec![vec![Some(1.5); 8]; 4];
        raw[2][5] = None;
        let s = MaskedSeries::build(&raw).unwrap();
        for t in 0..4 {
            for f in 0..8 {
                assert_eq!(s.is_observed(t, f), !(t == 2 && f == 5));
            }
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(MaskedSeries::build(&[vec![Some(1.0)], vec![Some(1.0), None]]).is_err());
    }

    #[test]
    fn fully_observed_series_passes_through() {
        let (store, imp) = imputer(3, 4, 1);
        let s = random_series(5, 3, 0.0, 2);
        let out = imp.impute(&store, &s).unwrap();
        assert_eq!(out.x_mixed, s.values);
    }

    #[test]
    fn fully_missing_series_takes_estimate_with_zero_loss() {
        let (store, imp) = imputer(3, 4, 1);
        let s = random_series(5, 3, 1.0, 2);
        let out = imp.impute(&store, &s).unwrap();
        assert_eq!(out.x_mixed, out.x_impute);
        assert_eq!(out.impute_loss, 0.0);
    }

    #[test]
    fn single_cell_loss_arithmetic() {
        let mut g = Graph::new();
        let obs = g.constant(Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        let mask = g.constant(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        let est = g.constant(Tensor::new(vec![1, 1], vec![1.5]).unwrap());
        let loss = masked_mae(&mut g, &[obs], &[mask], &[est], &StepMask::all_valid(1, 1)).unwrap();
        assert_eq!(g.value(loss).item(), Some(0.5));
    }

    #[test]
    fn mixing_is_bit_exact_on_random_masks() {
        let (store, imp) = imputer(4, 5, 3);
        for seed in 0..20 {
            let s = random_series(6, 4, 0.5, 100 + seed);
            let out = imp.impute(&store, &s).unwrap();
            for t in 0..6 {
                for f in 0..4 {
                    let mixed = out.x_mixed.at2(t, f);
                    match s.get(t, f) {
                        Some(v) => assert_eq!(mixed.to_bits(), v.to_bits()),
                        None => assert_eq!(mixed.to_bits(), out.x_impute.at2(t, f).to_bits()),
                    }
                }
            }
        }
    }

    #[test]
    fn loss_is_non_negative_and_matches_direct_mean() {
        let (store, imp) = imputer(3, 4, 5);
        let s = random_series(7, 3, 0.4, 9);
        let out = imp.impute(&store, &s).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for t in 0..7 {
            for f in 0..3 {
                if let Some(v) = s.get(t, f) {
                    sum += (v - out.x_impute.at2(t, f)).abs();
                    n += 1.0;
                }
            }
        }
        assert!(out.impute_loss >= 0.0);
        assert!((out.impute_loss - sum / n).abs() < 1e-14);
    }

    #[test]
    fn feature_permutation_permutes_estimates() {
        let d = 4;
        let (store, imp) = imputer(d, 3, 8);
        let s = random_series(5, d, 0.3, 10);
        let perm = [2usize, 0, 3, 1];

        let mut ps = store.clone();
        let permute_rows = |t: &Tensor| {
            let (r, c) = t.dims2().unwrap();
            assert_eq!(r, d);
            let data = (0..r).flat_map(|i| t.row(perm[i]).to_vec()).collect();
            Tensor::new(vec![r, c], data).unwrap()
        };
        let permute_cols = |t: &Tensor| {
            let (r, c) = t.dims2().unwrap();
            assert_eq!(c, d);
            let data = (0..r).flat_map(|i| (0..c).map(move |j| t.at2(i, perm[j]))).collect();
            Tensor::new(vec![r, c], data).unwrap()
        };
        for p in ps.iter_mut() {
            if p.name.ends_with("w_value") || p.name.ends_with("w_mask") {
                p.value = permute_rows(&p.value);
            } else if p.name.ends_with("w_out") {
                p.value = permute_cols(&p.value);
            } else if p.name.ends_with("b_out") {
                let data = perm.iter().map(|&j| p.value.data()[j]).collect();
                p.value = Tensor::new(vec![d], data).unwrap();
            }
        }
        let raw: Vec<Vec<Option<f64>>> = (0..5)
            .map(|t| (0..d).map(|f| s.get(t, perm[f])).collect())
            .collect();
        let sp = MaskedSeries::build(&raw).unwrap();

        let a = imp.impute(&store, &s).unwrap();
        let b = imp.impute(&ps, &sp).unwrap();
        for t in 0..5 {
            for f in 0..d {
                let x = a.x_impute.at2(t, perm[f]);
                let y = b.x_impute.at2(t, f);
                assert!((x - y).abs() < 1e-12, "t={t} f={f}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn padded_batch_matches_single_series() {
        let (store, imp) = imputer(3, 4, 12);
        let long = random_series(5, 3, 0.3, 1);
        let short = random_series(3, 3, 0.3, 2);
        let a = imp.impute(&store, &long).unwrap();
        let b = imp.impute(&store, &short).unwrap();

        let (zl, zs) = (long.zero_filled(), short.zero_filled());
        let mut values = Vec::new();
        let mut masks = Vec::new();
        for t in 0..5 {
            let mut v = zl.row(t).to_vec();
            let mut m = long.mask.row(t).to_vec();
            if t < 3 {
                v.extend_from_slice(zs.row(t));
                m.extend_from_slice(short.mask.row(t));
            } else {
                v.extend([0.0; 3]);
                m.extend([0.0; 3]);
            }
            values.push(Tensor::new(vec![2, 3], v).unwrap());
            masks.push(Tensor::new(vec![2, 3], m).unwrap());
        }
        let steps = StepMask::from_lengths(&[5, 3]);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let out = imp
            .forward(&mut g, &p, &ImputerInput { values: &values, masks: &masks, steps: &steps })
            .unwrap();
        for t in 0..5 {
            assert_eq!(g.value(out.x_impute[t]).row(0), a.x_impute.row(t));
            if t < 3 {
                assert_eq!(g.value(out.x_impute[t]).row(1), b.x_impute.row(t));
            }
        }
    }

    #[test]
    fn gradcheck_on_random_toy() {
        let (store, imp) = imputer(2, 3, 7);
        let s = random_series(3, 2, 0.3, 7);
        let report = impute_loss_gradcheck(&imp, &store, &s, GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_err() < 1e-4, "{}", report.max_rel_err());
    }

    #[test]
    fn gradcheck_rejects_kinked_instance() {
        let (store, imp) = imputer(1, 2, 7);
        let probe = MaskedSeries::build(&[vec![None], vec![None]]).unwrap();
        let est = imp.impute(&store, &probe).unwrap().x_impute;
        // observe exactly the estimate at t = 0: the residual is zero
        let s = MaskedSeries::build(&[vec![Some(est.at2(0, 0))], vec![None]]).unwrap();
        let err = impute_loss_gradcheck(&imp, &store, &s, GradCheckConfig::default()).unwrap_err();
        assert!(matches!(err, TensorError::InvalidArgument(_)));
    }

    #[test]
    fn zero_parameters_give_finite_reproducible_gradients() {
        let (mut store, imp) = imputer(2, 3, 7);
        for p in store.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let s = MaskedSeries::build(&vec![vec![Some(1.0), Some(1.0)]; 3]).unwrap();
        let grads = || {
            let z = s.zero_filled();
            let values: Vec<Tensor> = (0..3).map(|t| Tensor::new(vec![1, 2], z.row(t).to_vec()).unwrap()).collect();
            let masks: Vec<Tensor> = (0..3).map(|_| Tensor::full(vec![1, 2], 1.0)).collect();
            let steps = StepMask::all_valid(3, 1);
            let mut g = Graph::new();
            let p = store.bind(&mut g);
            let out = imp.forward(&mut g, &p, &ImputerInput { values: &values, masks: &masks, steps: &steps }).unwrap();
            g.backward(out.loss).unwrap();
            p.iter().flat_map(|v| g.grad(*v).unwrap().to_vec()).collect::<Vec<f64>>()
        };
        let a = grads();
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, grads());
    }

    #[test]
    fn doubled_loss_doubles_gradient() {
        let (store, imp) = imputer(2, 3, 4);
        let s = random_series(3, 2, 0.2, 5);
        let z = s.zero_filled();
        let values: Vec<Tensor> = (0..3).map(|t| Tensor::new(vec![1, 2], z.row(t).to_vec()).unwrap()).collect();
        let masks: Vec<Tensor> = (0..3).map(|t| Tensor::new(vec![1, 2], s.mask.row(t).to_vec()).unwrap()).collect();
        let steps = StepMask::all_valid(3, 1);
        let grads = |factor: f64| {
            let mut g = Graph::new();
            let p = store.bind(&mut g);
            let out = imp.forward(&mut g, &p, &ImputerInput { values: &values, masks: &masks, steps: &steps }).unwrap();
            let l = g.scale(out.loss, factor);
            g.backward(l).unwrap();
            p.iter().flat_map(|v| g.grad(*v).unwrap().to_vec()).collect::<Vec<f64>>()
        };
        let one = grads(1.0);
        let two = grads(2.0);
        for (a, b) in one.iter().zip(&two) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
