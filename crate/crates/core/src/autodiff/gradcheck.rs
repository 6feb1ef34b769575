use std::fmt;

use crate::error::{Error, Result};

use super::params::{Bindings, ParameterSet};
use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients below this magnitude are compared absolutely rather than
/// relatively.
const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub max_rel_error: f64,
    /// Location of the largest error.
    pub worst: Option<String>,
    pub compared: usize,
    /// Locations skipped because the two probes took different branches.
    pub kinks: Vec<String>,
    /// Location of the first NaN in either gradient.
    pub nan_at: Option<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.nan_at.is_none() && self.max_rel_error <= self.tol
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} max_rel_err={:.3e} tol={:.0e} compared={} kinks_skipped={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error,
            self.tol,
            self.compared,
            self.kinks.len()
        )?;
        if let Some(w) = &self.worst {
            write!(f, " worst={w}")?;
        }
        if let Some(n) = &self.nan_at {
            write!(f, " nan_at={n}")?;
        }
        Ok(())
    }
}

/// `|a - n| / max(|a|, |n|, 1e-4)`.
pub(crate) fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn eval<F>(f: &F, x: &Tensor) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::with_branch_tracking();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    Ok((scalar_of(&tape, out)?, tape.branch_signature()))
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.shape() != [1, 1] {
        return Err(Error::NonScalarLoss {
            rows: t.rows(),
            cols: t.cols(),
        });
    }
    Ok(t.item())
}

struct Accumulator {
    report: GradCheckReport,
}

impl Accumulator {
    fn new(tol: f64) -> Self {
        Self {
            report: GradCheckReport {
                tol,
                max_rel_error: 0.0,
                worst: None,
                compared: 0,
                kinks: Vec::new(),
                nan_at: None,
            },
        }
    }

    fn probe(
        &mut self,
        loc: impl FnOnce() -> String,
        analytic: f64,
        plus: (f64, u64),
        minus: (f64, u64),
    ) {
        if plus.1 != minus.1 {
            self.report.kinks.push(loc());
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * FD_STEP);
        if analytic.is_nan() || numeric.is_nan() {
            if self.report.nan_at.is_none() {
                self.report.nan_at = Some(loc());
            }
            return;
        }
        let err = rel_error(analytic, numeric);
        self.report.compared += 1;
        if err > self.report.max_rel_error || self.report.worst.is_none() {
            self.report.max_rel_error = err;
            self.report.worst = Some(loc());
        }
    }
}

/// Compares the tape gradient of a scalar function against central finite
/// differences at every element of `x`.
///
/// Elements whose `+h` and `-h` probes take different branches (a relu
/// sign flip, a different max row, a different pooled selection) are
/// reported in `kinks` and left out of the comparison.
pub fn gradient_check<F>(f: F, x: &Tensor, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    scalar_of(&tape, out)?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .get(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));

    let mut acc = Accumulator::new(tol);
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let plus = eval(&f, &probe)?;
        probe.data_mut()[i] = orig - FD_STEP;
        let minus = eval(&f, &probe)?;
        probe.data_mut()[i] = orig;
        acc.probe(|| format!("x[{i}]"), analytic.data()[i], plus, minus);
    }
    Ok(acc.report)
}

/// [`gradient_check`] over every element of every parameter in `params`.
pub fn gradient_check_params<F>(params: &ParameterSet, f: F, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let run = |set: &ParameterSet, track: bool| -> Result<(Tape, Bindings, Var)> {
        let mut tape = if track {
            Tape::with_branch_tracking()
        } else {
            Tape::new()
        };
        let b = set.bind(&mut tape);
        let out = f(&mut tape, &b)?;
        scalar_of(&tape, out)?;
        Ok((tape, b, out))
    };

    let (tape, bindings, out) = run(params, false)?;
    let grads = tape.backward(out)?;

    let mut acc = Accumulator::new(tol);
    let mut probe = params.snapshot();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let var = bindings.get(name)?;
        let base = params.value(name)?.clone();
        let analytic = grads
            .get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(base.rows(), base.cols()));
        for i in 0..base.len() {
            let mut sample = |delta: f64| -> Result<(f64, u64)> {
                let mut t = base.clone();
                t.data_mut()[i] += delta;
                probe.set_value(name, t)?;
                let (tape, _, out) = run(&probe, true)?;
                Ok((tape.value(out).item(), tape.branch_signature()))
            };
            let plus = sample(FD_STEP)?;
            let minus = sample(-FD_STEP)?;
            acc.probe(|| format!("{name}[{i}]"), analytic.data()[i], plus, minus);
        }
        probe.set_value(name, base)?;
    }
    Ok(acc.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let r = gradient_check(|t, x| Ok(t.sum_all(x)), &x, 1e-6).unwrap();
        assert!(r.passed());
        assert!(r.max_rel_error < 1e-10, "{r}");
        assert_eq!(r.compared, 4);
    }

    #[test]
    fn tanh_of_linear_map() {
        let w = Tensor::from_rows(&[[0.3, -0.7, 1.1], [0.2, 0.4, -0.5], [-0.9, 0.6, 0.1]]).unwrap();
        let x = Tensor::column(vec![0.5, -1.5, 2.0]);
        let r = gradient_check(
            |t, wv| {
                let xv = t.constant(x.clone());
                let h = t.matmul(wv, xv)?;
                let a = t.tanh(h);
                Ok(t.sum_all(a))
            },
            &w,
            1e-6,
        )
        .unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn relu_kink_is_flagged_and_skipped() {
        let x = Tensor::column(vec![0.0, 1.0, -2.0]);
        let r = gradient_check(
            |t, x| {
                let y = t.relu(x);
                Ok(t.sum_all(y))
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert_eq!(r.kinks, vec!["x[0]".to_string()]);
        assert_eq!(r.compared, 2);
        assert!(r.passed());
    }

    #[test]
    fn wrong_gradient_fails() {
        // forward says sum(x^2) but the recorded op graph says sum(x*c)
        let x = Tensor::column(vec![1.0, 2.0]);
        let r = gradient_check(
            |t, x| {
                let v = t.value(x).clone();
                let c = t.constant(v);
                let y = t.mul(x, c)?;
                Ok(t.sum_all(y))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn nan_reported_with_location() {
        let x = Tensor::column(vec![1.0, 0.0]);
        let r = gradient_check(
            |t, x| {
                let n = t.norm(x);
                let z = t.scale(n, 0.0);
                let q = t.div_scalar(x, z)?;
                Ok(t.sum_all(q))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(!r.passed());
        assert!(r.nan_at.is_some());
    }
}
