//! Central-difference gradient checker.

use rayon::prelude::*;

use super::params::{Grads, ParamId, ParamStore};

/// A scalar function of the parameters with an analytic gradient.
pub trait Objective: Sync {
    fn value(&self, params: &ParamStore) -> f64;
    fn gradient(&self, params: &ParamStore) -> Grads;
}

/// Adapts a pair of closures into an [`Objective`].
pub struct FnObjective<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> Objective for FnObjective<V, G>
where
    V: Fn(&ParamStore) -> f64 + Sync,
    G: Fn(&ParamStore) -> Grads + Sync,
{
    fn value(&self, params: &ParamStore) -> f64 {
        (self.value)(params)
    }

    fn gradient(&self, params: &ParamStore) -> Grads {
        (self.gradient)(params)
    }
}

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    /// Entry with the largest error, with its analytic and numeric values.
    pub worst: Option<(usize, f64, f64)>,
    /// Relative error of every entry, in storage order.
    pub entry_errors: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self, threshold: f64) -> bool {
        self.max_rel_err < threshold
    }

    pub fn failing(&self, threshold: f64) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|g| g.max_rel_err >= threshold)
            .map(|g| g.name.as_str())
            .collect()
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`; infinite if either side is not finite.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    if !(analytic.is_finite() && numeric.is_finite()) {
        return f64::INFINITY;
    }
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

const CHUNK: usize = 256;

/// Compares the analytic gradient of `f` with `(f(θ+h) - f(θ-h)) / 2h` for
/// every parameter entry. Entries are perturbed on private copies of the
/// parameters, in parallel.
pub fn grad_check<O: Objective + ?Sized>(f: &O, params: &ParamStore, h: f64) -> GradCheckReport {
    let analytic = f.gradient(params);
    let mut groups = Vec::with_capacity(params.len());
    for (id, p) in params.iter() {
        let n = p.value.len();
        let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
        let errors: Vec<(usize, f64, f64, f64)> = starts
            .par_iter()
            .flat_map_iter(|&start| {
                let mut local = params.clone();
                let end = (start + CHUNK).min(n);
                let analytic = &analytic;
                (start..end)
                    .map(|i| {
                        let g_a = analytic.get(id).as_slice()[i];
                        let g_n = central_difference(f, &mut local, id, i, h);
                        (i, g_a, g_n, relative_error(g_a, g_n))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let worst = errors
            .iter()
            .max_by(|a, b| a.3.total_cmp(&b.3))
            .map(|&(i, a, n, _)| (i, a, n));
        let max_rel_err = errors.iter().map(|e| e.3).fold(0.0, f64::max);
        groups.push(GroupReport {
            name: p.name.clone(),
            entries: n,
            max_rel_err,
            worst,
            entry_errors: errors.iter().map(|e| e.3).collect(),
        });
    }
    let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    GradCheckReport {
        groups,
        max_rel_err,
    }
}

fn central_difference<O: Objective + ?Sized>(
    f: &O,
    params: &mut ParamStore,
    id: ParamId,
    i: usize,
    h: f64,
) -> f64 {
    let orig = params.get(id).as_slice()[i];
    params.get_mut(id).as_mut_slice()[i] = orig + h;
    let up = f.value(params);
    params.get_mut(id).as_mut_slice()[i] = orig - h;
    let down = f.value(params);
    params.get_mut(id).as_mut_slice()[i] = orig;
    (up - down) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::matrix::Matrix;
    use crate::numcore::tape::Tape;

    fn square_objective() -> impl Objective {
        FnObjective {
            value: |p: &ParamStore| {
                let v = p.get(p.id("theta").unwrap()).as_slice()[0];
                v * v
            },
            gradient: |p: &ParamStore| {
                let id = p.id("theta").unwrap();
                let mut tape = Tape::new(p);
                let t = tape.param(id);
                let sq = tape.mul(t, t).unwrap();
                let mut g = p.zeros_like();
                tape.backward(sq, 1.0, &mut g);
                g
            },
        }
    }

    #[test]
    fn square_function() {
        let mut params = ParamStore::new();
        params.add("theta", Matrix::column(vec![3.0]));
        let report = grad_check(&square_objective(), &params, 1e-5);
        let (_, a, n) = report.groups[0].worst.unwrap();
        assert_eq!(a, 6.0);
        assert!((n - 6.0).abs() < 1e-8);
        assert!(report.max_rel_err < 1e-9, "{report:?}");
    }

    #[test]
    fn constant_function() {
        let mut params = ParamStore::new();
        params.add("a", Matrix::column(vec![1.0, -2.0, 0.5]));
        let f = FnObjective {
            value: |_: &ParamStore| 4.25,
            gradient: |p: &ParamStore| p.zeros_like(),
        };
        let report = grad_check(&f, &params, 1e-5);
        let (_, a, n) = report.groups[0].worst.unwrap();
        assert_eq!(a, 0.0);
        assert!(n.abs() < 1e-10);
        assert!(report.passed(1e-4));
    }

    #[test]
    fn wrong_gradient_is_reported_by_group() {
        let mut params = ParamStore::new();
        params.add("theta", Matrix::column(vec![3.0]));
        params.add("other", Matrix::column(vec![1.0]));
        let f = FnObjective {
            value: |p: &ParamStore| {
                let v = p.get(p.id("theta").unwrap()).as_slice()[0];
                v * v
            },
            gradient: |p: &ParamStore| {
                let mut g = p.zeros_like();
                g.get_mut(p.id("theta").unwrap()).as_mut_slice()[0] = 5.0;
                g
            },
        };
        let report = grad_check(&f, &params, 1e-5);
        assert_eq!(report.failing(1e-4), vec!["theta"]);
    }
}
