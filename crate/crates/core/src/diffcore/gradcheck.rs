use super::tensor::ParamStore;
use crate::error::{Error, Result};

/// A scalar function of a parameter store together with its analytic
/// gradient (ordered like `params.tensors()`).
pub trait Objective<P: ParamStore> {
    fn value(&self, params: &P) -> Result<f64>;
    fn gradient(&self, params: &P) -> Result<Vec<Vec<f64>>>;
}

#[derive(Clone, Debug)]
pub struct GroupError {
    pub name: String,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂, 1e-8)`.
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// Largest elementwise `|analytic − numeric|` in the group and where.
    pub max_abs_diff: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub step: f64,
    pub evaluations: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }

    pub fn worst_group(&self) -> Option<&GroupError> {
        self.groups.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

const FLOOR: f64 = 1e-8;

/// Compares the analytic gradient against central differences with the
/// given step, one parameter tensor at a time.
pub fn grad_check<P, O>(objective: &O, params: &mut P, step: f64) -> Result<GradCheckReport>
where
    P: ParamStore,
    O: Objective<P> + ?Sized,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Contract(format!("grad_check step must be positive, got {step}")));
    }
    let analytic = objective.gradient(params)?;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    if analytic.len() != names.len() {
        return Err(Error::Shape(format!(
            "gradient has {} groups, parameters {}",
            analytic.len(),
            names.len()
        )));
    }

    let mut groups = Vec::with_capacity(names.len());
    let mut evaluations = 0;
    for (gi, name) in names.iter().enumerate() {
        let len = analytic[gi].len();
        let mut numeric = vec![0.0; len];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let original = params.tensors()[gi].1.values()[j];
            let mut eval_at = |x: f64| -> Result<f64> {
                params.tensors_mut()[gi].1.values_mut()[j] = x;
                let v = objective.value(params);
                evaluations += 1;
                match v {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(Error::NonFinite {
                        name: format!("{name}[{j}]"),
                    }),
                    Err(e) => Err(e),
                }
            };
            let plus = eval_at(original + step);
            let minus = plus.as_ref().ok().map(|_| eval_at(original - step));
            params.tensors_mut()[gi].1.values_mut()[j] = original;
            let plus = plus?;
            let minus = minus.expect("evaluated after plus")?;
            *slot = (plus - minus) / (2.0 * step);
        }

        let a = &analytic[gi];
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let (worst_index, max_abs_diff) =
            diff.iter()
                .map(|d| d.abs())
                .enumerate()
                .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        let (an, nn) = (norm(a), norm(&numeric));
        groups.push(GroupError {
            name: name.clone(),
            rel_error: norm(&diff) / an.max(nn).max(FLOOR),
            analytic_norm: an,
            numeric_norm: nn,
            max_abs_diff,
            worst_index,
        });
    }
    Ok(GradCheckReport {
        groups,
        step,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{NamedParams, Tensor};

    struct Bowl;

    impl Objective<NamedParams> for Bowl {
        fn value(&self, p: &NamedParams) -> Result<f64> {
            Ok(p.0[0]
                .1
                .values()
                .iter()
                .enumerate()
                .map(|(i, x)| (i as f64 + 1.0) * x * x)
                .sum())
        }
        fn gradient(&self, p: &NamedParams) -> Result<Vec<Vec<f64>>> {
            Ok(vec![p.0[0]
                .1
                .values()
                .iter()
                .enumerate()
                .map(|(i, x)| 2.0 * (i as f64 + 1.0) * x)
                .collect()])
        }
    }

    struct Constant;

    impl Objective<NamedParams> for Constant {
        fn value(&self, _: &NamedParams) -> Result<f64> {
            Ok(4.2)
        }
        fn gradient(&self, p: &NamedParams) -> Result<Vec<Vec<f64>>> {
            Ok(p.zero_grads())
        }
    }

    struct Blowup;

    impl Objective<NamedParams> for Blowup {
        fn value(&self, p: &NamedParams) -> Result<f64> {
            Ok(1.0 / (p.0[0].1.values()[0] - 1e-5))
        }
        fn gradient(&self, p: &NamedParams) -> Result<Vec<Vec<f64>>> {
            Ok(p.zero_grads())
        }
    }

    fn params(values: Vec<f64>) -> NamedParams {
        NamedParams(vec![("w".into(), Tensor::vector(values))])
    }

    #[test]
    fn quadratic_bowl_is_exact() {
        let mut p = params(vec![0.3, -1.2, 2.5]);
        let r = grad_check(&Bowl, &mut p, 1e-5).unwrap();
        assert!(r.max_rel_error() < 1e-8, "{}", r.max_rel_error());
        assert_eq!(p.0[0].1.values(), &[0.3, -1.2, 2.5]);
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let mut p = params(vec![1.0, 2.0]);
        let r = grad_check(&Constant, &mut p, 1e-5).unwrap();
        assert_eq!(r.groups[0].analytic_norm, 0.0);
        assert_eq!(r.groups[0].numeric_norm, 0.0);
        assert_eq!(r.max_rel_error(), 0.0);
    }

    #[test]
    fn non_finite_value_names_parameter() {
        let mut p = params(vec![0.0]);
        let err = grad_check(&Blowup, &mut p, 1e-5).unwrap_err();
        assert!(err.to_string().contains("w[0]"), "{err}");
        assert_eq!(p.0[0].1.values(), &[0.0]);
    }
}
