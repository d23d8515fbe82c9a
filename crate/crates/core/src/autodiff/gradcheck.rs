//! Central finite-difference verification of analytic gradients.

use super::{Graph, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Elements whose relative error exceeds this are flagged.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to rounding are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ElementCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub param: usize,
    pub max_rel_err: f64,
    pub flagged: Vec<ElementCheck>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.flagged.is_empty())
    }

    pub fn n_elements_flagged(&self) -> usize {
        self.params.iter().map(|p| p.flagged.len()).sum()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.constant(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.value(out).item().ok_or_else(|| TensorError::NonScalarLoss {
        shape: g.shape(out).to_vec(),
    })
}

/// Compares the reverse-mode gradient of `f` at `params` with the central
/// difference `(f(x+h) − f(x−h)) / 2h`, element by element.
///
/// `f` receives graph handles for `params` in order and must return a
/// scalar. It is evaluated twice at the unperturbed point first; any
/// difference between the two values is reported as non-determinism.
pub fn finite_difference_check<F>(
    f: F,
    params: &[Tensor],
    config: GradCheckConfig,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    if !(config.step > 0.0) {
        return Err(TensorError::InvalidArgument(format!(
            "finite-difference step must be positive, got {}",
            config.step
        )));
    }

    let first = evaluate(&f, params)?;
    let second = evaluate(&f, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(TensorError::NonDeterministic { first, second });
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| g.grad(*v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        params: Vec::with_capacity(params.len()),
        tolerance: config.tolerance,
    };
    for (p, grads) in analytic.iter().enumerate() {
        let mut check = ParamCheck {
            param: p,
            max_rel_err: 0.0,
            flagged: Vec::new(),
        };
        for (index, &a) in grads.iter().enumerate() {
            let orig = work[p].data()[index];
            work[p].data_mut()[index] = orig + config.step;
            let plus = evaluate(&f, &work)?;
            work[p].data_mut()[index] = orig - config.step;
            let minus = evaluate(&f, &work)?;
            work[p].data_mut()[index] = orig;

            let numeric = (plus - minus) / (2.0 * config.step);
            let rel_err = relative_error(a, numeric, config.floor);
            check.max_rel_err = check.max_rel_err.max(rel_err);
            if !(rel_err <= config.tolerance) {
                check.flagged.push(ElementCheck {
                    index,
                    analytic: a,
                    numeric,
                    rel_err,
                });
            }
        }
        report.params.push(check);
    }
    Ok(report)
}
