use super::{ParamStore, Tape, Var};

/// Denominator floor for the relative error, so gradients that are zero up
/// to rounding do not count as mismatches.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Result of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Checks every parameter entry of `ps` for the scalar loss built by `f`.
/// `f` must be deterministic. Existing gradients in `ps` are overwritten.
pub fn check_gradients(ps: &mut ParamStore, step: f64, f: impl Fn(&mut Tape, &ParamStore) -> Var) -> GradCheck {
    check_gradients_of(ps, step, usize::MAX, f)
}

/// Like [`check_gradients`] for any state that owns a parameter store.
/// At most `max_per_param` entries of each parameter are perturbed, spread
/// evenly over the array.
pub fn check_gradients_of<S: AsRef<ParamStore> + AsMut<ParamStore>>(
    state: &mut S,
    step: f64,
    max_per_param: usize,
    f: impl Fn(&mut Tape, &S) -> Var,
) -> GradCheck {
    let mut tape = Tape::new();
    state.as_mut().zero_grads();
    let loss = f(&mut tape, state);
    tape.backward(loss, state.as_mut());
    let analytic: Vec<Vec<f64>> = state.as_ref().iter().map(|(_, p)| p.grad.clone()).collect();

    let mut eval = |s: &S| {
        tape.clear();
        let l = f(&mut tape, s);
        tape.scalar(l)
    };
    let mut out = GradCheck { max_rel_err: 0.0, checked: 0, worst: None };
    let ids: Vec<_> = state.as_ref().iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = state.as_ref().get(id).len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let orig = state.as_ref().get(id).value[k];
            state.as_mut().get_mut(id).value[k] = orig + step;
            let up = eval(state);
            state.as_mut().get_mut(id).value[k] = orig - step;
            let down = eval(state);
            state.as_mut().get_mut(id).value[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let e = rel_err(analytic[id.0][k], numeric);
            out.checked += 1;
            if out.worst.is_none() || e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst = Some((state.as_ref().get(id).name.clone(), k));
            }
        }
    }
    state.as_mut().zero_grads();
    out
}
