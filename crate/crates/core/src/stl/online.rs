//! Incremental monitor giving the range of robustness values still reachable
//! by any completion of the observed prefix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::offline::{atom_value, sliding, window};
use super::{library::Verdict, Formula, SignalTable, StlError, TIME_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineValue {
    pub lo: f64,
    pub hi: f64,
    pub verdict: Verdict,
}

impl OnlineValue {
    fn from_bounds(lo: f64, hi: f64) -> Self {
        let verdict = if lo > 0.0 {
            Verdict::Satisfied
        } else if hi < 0.0 {
            Verdict::Violated
        } else {
            Verdict::Inconclusive
        };
        Self { lo, hi, verdict }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineMonitor {
    formula: Formula,
    table: SignalTable,
    last: Option<OnlineValue>,
}

type Bounds = Vec<(f64, f64)>;

impl OnlineMonitor {
    pub fn new(formula: Formula) -> Self {
        let mut table = SignalTable::default();
        for s in formula.signals() {
            table.insert(s, Vec::new());
        }
        Self {
            formula,
            table,
            last: None,
        }
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    /// Append one sample. Every signal used by the formula must be present.
    pub fn update(&mut self, t: f64, sample: &BTreeMap<String, f64>) -> Result<OnlineValue, StlError> {
        if let Some(&last) = self.table.times.last() {
            if !(t > last + TIME_EPS) {
                return Err(StlError::Sequencing { last, got: t });
            }
        }
        let mut values = Vec::new();
        for name in self.table.columns.keys() {
            values.push(*sample.get(name).ok_or_else(|| StlError::MissingSample(name.clone()))?);
        }
        self.table.times.push(t);
        for (col, v) in self.table.columns.values_mut().zip(values) {
            col.push(v);
        }
        let b = bounds(&self.formula, &self.table)?;
        let (lo, hi) = b[0];
        let v = OnlineValue::from_bounds(lo, hi);
        self.last = Some(v);
        Ok(v)
    }

    pub fn current(&self) -> Option<OnlineValue> {
        self.last
    }

    /// Treat the observed prefix as the whole trace and return the offline value at 0.
    pub fn finalize(&self) -> Result<f64, StlError> {
        if self.table.is_empty() {
            return Err(StlError::EmptyTrace);
        }
        Ok(super::offline::robustness(&self.formula, &self.table)?[0])
    }
}

/// Robustness bounds at every observed index; indices past the prefix are unknown.
fn bounds(f: &Formula, tr: &SignalTable) -> Result<Bounds, StlError> {
    let n = tr.len();
    let t = &tr.times;
    let t_last = t[n - 1];
    let open = |i: usize, b: f64| t[i] + b > t_last + TIME_EPS;
    Ok(match f {
        Formula::Atom { signal, cmp, c } => tr
            .column(signal)?
            .iter()
            .map(|s| {
                let v = atom_value(*cmp, *s, *c);
                (v, v)
            })
            .collect(),
        Formula::Not(x) => bounds(x, tr)?.into_iter().map(|(l, h)| (-h, -l)).collect(),
        Formula::And(a, b) => {
            let (x, y) = (bounds(a, tr)?, bounds(b, tr)?);
            x.iter().zip(&y).map(|(p, q)| (p.0.min(q.0), p.1.min(q.1))).collect()
        }
        Formula::Or(a, b) => {
            let (x, y) = (bounds(a, tr)?, bounds(b, tr)?);
            x.iter().zip(&y).map(|(p, q)| (p.0.max(q.0), p.1.max(q.1))).collect()
        }
        Formula::Implies(a, b) => {
            let (x, y) = (bounds(a, tr)?, bounds(b, tr)?);
            x.iter().zip(&y).map(|(p, q)| ((-p.1).max(q.0), (-p.0).max(q.1))).collect()
        }
        Formula::Globally(iv, x) => {
            let r = bounds(x, tr)?;
            let w: Vec<_> = (0..n).map(|i| window(t, i, iv)).collect();
            let (l, h): (Vec<f64>, Vec<f64>) = r.into_iter().unzip();
            let l = sliding(&l, &w, f64::INFINITY, |a, b| a < b);
            let h = sliding(&h, &w, f64::INFINITY, |a, b| a < b);
            (0..n)
                .map(|i| (if open(i, iv.b) { f64::NEG_INFINITY } else { l[i] }, h[i]))
                .collect()
        }
        Formula::Eventually(iv, x) => {
            let r = bounds(x, tr)?;
            let w: Vec<_> = (0..n).map(|i| window(t, i, iv)).collect();
            let (l, h): (Vec<f64>, Vec<f64>) = r.into_iter().unzip();
            let l = sliding(&l, &w, f64::NEG_INFINITY, |a, b| a > b);
            let h = sliding(&h, &w, f64::NEG_INFINITY, |a, b| a > b);
            (0..n)
                .map(|i| (l[i], if open(i, iv.b) { f64::INFINITY } else { h[i] }))
                .collect()
        }
        Formula::Until(iv, a, b) => {
            let (x, y) = (bounds(a, tr)?, bounds(b, tr)?);
            (0..n)
                .map(|i| {
                    let (lo, hi) = window(t, i, iv);
                    let (mut best_l, mut best_h) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                    let (mut run_l, mut run_h) = (f64::INFINITY, f64::INFINITY);
                    for j in i..hi {
                        if j >= lo {
                            best_l = best_l.max(y[j].0.min(run_l));
                            best_h = best_h.max(y[j].1.min(run_h));
                        }
                        run_l = run_l.min(x[j].0);
                        run_h = run_h.min(x[j].1);
                    }
                    if open(i, iv.b) {
                        // a future j may still satisfy psi with every phi before it
                        // bounded by the phi values already seen
                        let run_known = (i..n).map(|k| x[k].1).fold(f64::INFINITY, f64::min);
                        best_h = best_h.max(run_known);
                    }
                    (best_l, best_h)
                })
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse_stl;

    fn feed(m: &mut OnlineMonitor, t: f64, kv: &[(&str, f64)]) -> OnlineValue {
        let s: BTreeMap<String, f64> = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        m.update(t, &s).unwrap()
    }

    #[test]
    fn safety_goal_violation_is_sticky() {
        let f = parse_stl("G[0,inf] (min_ped_dist > 0.0 || ego_speed <= 0.000001)").unwrap();
        let mut m = OnlineMonitor::new(f);
        assert_eq!(feed(&mut m, 0.0, &[("min_ped_dist", 5.0), ("ego_speed", 1.0)]).verdict, Verdict::Inconclusive);
        assert_eq!(feed(&mut m, 0.1, &[("min_ped_dist", -0.1), ("ego_speed", 1.0)]).verdict, Verdict::Violated);
        assert_eq!(feed(&mut m, 0.2, &[("min_ped_dist", 5.0), ("ego_speed", 0.0)]).verdict, Verdict::Violated);
    }

    #[test]
    fn open_globally_inconclusive() {
        let mut m = OnlineMonitor::new(parse_stl("G[0,inf](v < 3)").unwrap());
        let mut last = None;
        for k in 0..10 {
            last = Some(feed(&mut m, k as f64 * 0.1, &[("v", 1.0)]));
        }
        assert_eq!(last.unwrap().verdict, Verdict::Inconclusive);
        assert_eq!(m.finalize().unwrap(), 2.0);
    }

    #[test]
    fn eventually_satisfied_once_seen() {
        let mut m = OnlineMonitor::new(parse_stl("F[0,1](d > 0)").unwrap());
        assert_eq!(feed(&mut m, 0.0, &[("d", -1.0)]).verdict, Verdict::Inconclusive);
        assert_eq!(feed(&mut m, 0.5, &[("d", 2.0)]).verdict, Verdict::Satisfied);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut m = OnlineMonitor::new(parse_stl("x > 0").unwrap());
        feed(&mut m, 1.0, &[("x", 1.0)]);
        let s = BTreeMap::from([("x".to_string(), 1.0)]);
        assert!(matches!(m.update(0.5, &s), Err(StlError::Sequencing { .. })));
        assert!(matches!(m.update(1.0, &s), Err(StlError::Sequencing { .. })));
    }
}
