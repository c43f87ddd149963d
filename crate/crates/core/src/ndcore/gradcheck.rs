//! Central finite-difference check of tape gradients.

use std::collections::{BTreeMap, BTreeSet};

use super::{ParamId, ParamKind, ParamStore, Reach, Tape, Var};
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckTolerance {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradCheckTolerance {
    fn default() -> Self {
        GradCheckTolerance {
            rel_tol: 1e-4,
            abs_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamClass {
    /// Reachable through at least one unblocked path.
    Checked,
    /// Reachable only through stop-gradient edges.
    SgExcluded,
    Unreached,
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub class: ParamClass,
    pub scalars: usize,
    /// Worst relative error among scalars that also failed the absolute bound.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_tape_grad: f64,
    pub max_fd_grad: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn checked(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.class == ParamClass::Checked)
    }

    pub fn sg_excluded(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.class == ParamClass::SgExcluded)
    }

    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.params.iter().filter(|p| !p.passed).collect()
    }
}

/// Compares tape gradients of `loss_fn` with central finite differences.
///
/// Embedding tables are probed only on rows that the tape looked up; every
/// other row has an exactly-zero gradient by construction. Gradients left in
/// `store` after the call are the tape gradients.
pub fn grad_check<F>(store: &mut ParamStore, loss_fn: F, tol: GradCheckTolerance) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(Tape, Var)>,
{
    store.zero_grads();
    let (tape, loss) = loss_fn(store)?;
    ensure_finite(tape.value(loss).get(0, 0), "initial evaluation")?;
    let reach = tape.param_reach(loss);
    let looked_up = tape.lookup_rows();
    tape.backward(loss, store)?;

    let mut report = GradCheckReport::default();
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let param = store.get(id);
        if !param.trainable {
            continue;
        }
        let name = param.name.clone();
        let class = match reach.get(&id) {
            Some(Reach::Open) => ParamClass::Checked,
            Some(Reach::BlockedOnly) => ParamClass::SgExcluded,
            None => ParamClass::Unreached,
        };
        let cols = param.value.cols();
        let indices: Vec<usize> = match param.kind {
            ParamKind::Dense => (0..param.value.len()).collect(),
            ParamKind::Embedding => looked_up
                .get(&id)
                .map(|rows| rows.iter().flat_map(|&r| r * cols..(r + 1) * cols).collect())
                .unwrap_or_default(),
        };
        let tape_grad = param.grad.clone();

        let mut check = ParamCheck {
            name: name.clone(),
            class,
            scalars: indices.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            max_tape_grad: tape_grad.max_abs(),
            max_fd_grad: 0.0,
            passed: true,
        };
        for idx in indices {
            let original = store.get(id).value.as_slice()[idx];
            store.value_mut(id).as_mut_slice()[idx] = original + FD_STEP;
            let plus = eval(&loss_fn, store, &name)?;
            store.value_mut(id).as_mut_slice()[idx] = original - FD_STEP;
            let minus = eval(&loss_fn, store, &name)?;
            store.value_mut(id).as_mut_slice()[idx] = original;

            let fd = (plus - minus) / (2.0 * FD_STEP);
            let analytic = tape_grad.as_slice()[idx];
            check.max_fd_grad = check.max_fd_grad.max(fd.abs());
            match class {
                ParamClass::Checked => {
                    let abs = (analytic - fd).abs();
                    let denom = analytic.abs().max(fd.abs());
                    let rel = if denom > 0.0 { abs / denom } else { 0.0 };
                    check.max_abs_error = check.max_abs_error.max(abs);
                    if abs > tol.abs_tol {
                        check.max_rel_error = check.max_rel_error.max(rel);
                        if rel > tol.rel_tol {
                            check.passed = false;
                        }
                    }
                }
                ParamClass::SgExcluded | ParamClass::Unreached => {
                    if analytic != 0.0 {
                        check.passed = false;
                    }
                }
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

fn eval<F>(loss_fn: &F, store: &ParamStore, name: &str) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(Tape, Var)>,
{
    let (tape, loss) = loss_fn(store)?;
    let v = tape.value(loss).get(0, 0);
    ensure_finite(v, name)?;
    Ok(v)
}

fn ensure_finite(v: f64, context: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("grad_check ({context})"), format!("loss is {v}")))
    }
}

impl Tape {
    /// Distinct table rows gathered by every lookup on the tape.
    pub fn lookup_rows(&self) -> BTreeMap<ParamId, BTreeSet<usize>> {
        let mut out: BTreeMap<ParamId, BTreeSet<usize>> = BTreeMap::new();
        for (id, rows) in self.lookups() {
            out.entry(id).or_default().extend(rows.iter().copied());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Matrix;

    #[test]
    fn quadratic_passes() {
        let mut store = ParamStore::new();
        let w = store
            .insert(
                "w",
                Matrix::from_rows(&[&[0.3, -1.2, 0.7], &[2.0, 0.1, -0.4]]).unwrap(),
                ParamKind::Dense,
            )
            .unwrap();
        let loss_fn = |s: &ParamStore| {
            let mut tape = Tape::new();
            let x = tape.input(Matrix::row_vector(&[1.0, -2.0, 0.5]));
            let wv = tape.param(s, w);
            let y = tape.affine(x, wv, None)?;
            let sq = tape.mul(y, y)?;
            let l = tape.sum(sq);
            Ok((tape, l))
        };
        let report = grad_check(&mut store, loss_fn, GradCheckTolerance::default()).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.params[0].class, ParamClass::Checked);
        assert!(report.params[0].max_tape_grad > 0.0);
    }

    #[test]
    fn blocked_param_is_sg_excluded() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Matrix::row_vector(&[1.5, -0.5]), ParamKind::Dense).unwrap();
        let b = store.insert("b", Matrix::row_vector(&[0.25, 2.0]), ParamKind::Dense).unwrap();
        let loss_fn = |s: &ParamStore| {
            let mut tape = Tape::new();
            let va = tape.param(s, a);
            let vb = tape.param(s, b);
            let sb = tape.stop_gradient(vb);
            let m = tape.mul(va, sb)?;
            let l = tape.sum(m);
            Ok((tape, l))
        };
        let report = grad_check(&mut store, loss_fn, GradCheckTolerance::default()).unwrap();
        assert!(report.passed());
        let rb = report.get("b").unwrap();
        assert_eq!(rb.class, ParamClass::SgExcluded);
        assert_eq!(rb.max_tape_grad, 0.0);
        assert!(rb.max_fd_grad > 0.1);
    }

    #[test]
    fn non_finite_loss_names_parameter() {
        let mut store = ParamStore::new();
        let a = store.insert("alpha", Matrix::row_vector(&[1.0]), ParamKind::Dense).unwrap();
        let loss_fn = |s: &ParamStore| {
            let mut tape = Tape::new();
            let va = tape.param(s, a);
            let v = s.value(a).get(0, 0);
            let c = tape.input(Matrix::row_vector(&[if v > 1.0 { f64::NAN } else { 1.0 }]));
            let m = tape.mul(va, c)?;
            let l = tape.sum(m);
            Ok((tape, l))
        };
        let err = grad_check(&mut store, loss_fn, GradCheckTolerance::default()).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }
}
