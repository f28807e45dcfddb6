//! Discrete-time quantitative semantics over a complete signal table.

use std::collections::VecDeque;

use super::{Cmp, Formula, Interval, SignalTable, StlError, TIME_EPS};

pub fn atom_value(cmp: Cmp, s: f64, c: f64) -> f64 {
    match cmp {
        Cmp::Gt | Cmp::Ge => s - c,
        Cmp::Lt | Cmp::Le => c - s,
    }
}

pub fn atom_holds(cmp: Cmp, s: f64, c: f64) -> bool {
    match cmp {
        Cmp::Gt => s > c,
        Cmp::Ge => s >= c,
        Cmp::Lt => s < c,
        Cmp::Le => s <= c,
    }
}

/// Index range `[lo, hi)` of samples whose time lies in `t_i + [a, b]`.
pub(crate) fn window(times: &[f64], i: usize, iv: &Interval) -> (usize, usize) {
    let lo_t = times[i] + iv.a - TIME_EPS;
    let hi_t = times[i] + iv.b + TIME_EPS;
    let lo = i + times[i..].partition_point(|t| *t < lo_t);
    let hi = if iv.b.is_infinite() {
        times.len()
    } else {
        i + times[i..].partition_point(|t| *t <= hi_t)
    };
    (lo, hi.max(lo))
}

/// Sliding-window extremum over `[lo_i, hi_i)` windows whose bounds never move
/// backwards. `better(a, b)` is true when `a` should replace `b`.
pub(crate) fn sliding(values: &[f64], windows: &[(usize, usize)], empty: f64, better: fn(f64, f64) -> bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(windows.len());
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut pushed = 0usize;
    for &(lo, hi) in windows {
        while pushed < hi {
            while let Some(&back) = dq.back() {
                if better(values[pushed], values[back]) || values[pushed] == values[back] {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(pushed);
            pushed += 1;
        }
        while let Some(&front) = dq.front() {
            if front < lo {
                dq.pop_front();
            } else {
                break;
            }
        }
        out.push(if lo >= hi { empty } else { values[*dq.front().unwrap()] });
    }
    out
}

/// Robustness of `f` at every sample index.
pub fn robustness(f: &Formula, tr: &SignalTable) -> Result<Vec<f64>, StlError> {
    let n = tr.len();
    let t = &tr.times;
    Ok(match f {
        Formula::Atom { signal, cmp, c } => tr.column(signal)?.iter().map(|s| atom_value(*cmp, *s, *c)).collect(),
        Formula::Not(x) => robustness(x, tr)?.into_iter().map(|v| -v).collect(),
        Formula::And(a, b) => {
            let (ra, rb) = (robustness(a, tr)?, robustness(b, tr)?);
            ra.iter().zip(&rb).map(|(x, y)| x.min(*y)).collect()
        }
        Formula::Or(a, b) => {
            let (ra, rb) = (robustness(a, tr)?, robustness(b, tr)?);
            ra.iter().zip(&rb).map(|(x, y)| x.max(*y)).collect()
        }
        Formula::Implies(a, b) => {
            let (ra, rb) = (robustness(a, tr)?, robustness(b, tr)?);
            ra.iter().zip(&rb).map(|(x, y)| (-x).max(*y)).collect()
        }
        Formula::Globally(iv, x) => {
            let r = robustness(x, tr)?;
            let w: Vec<_> = (0..n).map(|i| window(t, i, iv)).collect();
            sliding(&r, &w, f64::INFINITY, |a, b| a < b)
        }
        Formula::Eventually(iv, x) => {
            let r = robustness(x, tr)?;
            let w: Vec<_> = (0..n).map(|i| window(t, i, iv)).collect();
            sliding(&r, &w, f64::NEG_INFINITY, |a, b| a > b)
        }
        Formula::Until(iv, a, b) => {
            let (ra, rb) = (robustness(a, tr)?, robustness(b, tr)?);
            (0..n)
                .map(|i| {
                    let (lo, hi) = window(t, i, iv);
                    let mut best = f64::NEG_INFINITY;
                    let mut run = f64::INFINITY; // min of phi over [i, j)
                    for j in i..hi {
                        if j >= lo {
                            best = best.max(rb[j].min(run));
                        }
                        run = run.min(ra[j]);
                    }
                    best
                })
                .collect()
        }
    })
}

fn index_of(tr: &SignalTable, t: f64) -> Result<usize, StlError> {
    if tr.is_empty() {
        return Err(StlError::EmptyTrace);
    }
    let i = tr.times.partition_point(|x| *x < t - TIME_EPS);
    if i >= tr.len() || (tr.times[i] - t).abs() > TIME_EPS {
        return Err(StlError::OutOfHorizon(t));
    }
    Ok(i)
}

/// Robustness at the sample whose time equals `t`.
pub fn robustness_at(f: &Formula, tr: &SignalTable, t: f64) -> Result<f64, StlError> {
    let i = index_of(tr, t)?;
    Ok(robustness(f, tr)?[i])
}

/// Boolean semantics, used to settle zero-robustness verdicts.
pub fn satisfied(f: &Formula, tr: &SignalTable) -> Result<Vec<bool>, StlError> {
    let n = tr.len();
    let t = &tr.times;
    Ok(match f {
        Formula::Atom { signal, cmp, c } => tr.column(signal)?.iter().map(|s| atom_holds(*cmp, *s, *c)).collect(),
        Formula::Not(x) => satisfied(x, tr)?.into_iter().map(|v| !v).collect(),
        Formula::And(a, b) => {
            let (x, y) = (satisfied(a, tr)?, satisfied(b, tr)?);
            x.iter().zip(&y).map(|(p, q)| *p && *q).collect()
        }
        Formula::Or(a, b) => {
            let (x, y) = (satisfied(a, tr)?, satisfied(b, tr)?);
            x.iter().zip(&y).map(|(p, q)| *p || *q).collect()
        }
        Formula::Implies(a, b) => {
            let (x, y) = (satisfied(a, tr)?, satisfied(b, tr)?);
            x.iter().zip(&y).map(|(p, q)| !*p || *q).collect()
        }
        Formula::Globally(iv, x) => {
            let s = satisfied(x, tr)?;
            (0..n)
                .map(|i| {
                    let (lo, hi) = window(t, i, iv);
                    s[lo..hi].iter().all(|v| *v)
                })
                .collect()
        }
        Formula::Eventually(iv, x) => {
            let s = satisfied(x, tr)?;
            (0..n)
                .map(|i| {
                    let (lo, hi) = window(t, i, iv);
                    s[lo..hi].iter().any(|v| *v)
                })
                .collect()
        }
        Formula::Until(iv, a, b) => {
            let (x, y) = (satisfied(a, tr)?, satisfied(b, tr)?);
            (0..n)
                .map(|i| {
                    let (lo, hi) = window(t, i, iv);
                    (lo..hi).any(|j| y[j] && x[i..j].iter().all(|v| *v))
                })
                .collect()
        }
    })
}

pub fn satisfied_at(f: &Formula, tr: &SignalTable, t: f64) -> Result<bool, StlError> {
    let i = index_of(tr, t)?;
    Ok(satisfied(f, tr)?[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse_stl;

    fn table(name: &str, v: &[f64]) -> SignalTable {
        let mut t = SignalTable::new((0..v.len()).map(|i| i as f64).collect());
        t.insert(name, v.to_vec());
        t
    }

    #[test]
    fn spec_examples() {
        let tr = table("v", &[1.0, 2.0, 2.5]);
        let g = parse_stl("G[0,2](v < 3)").unwrap();
        assert_eq!(robustness_at(&g, &tr, 0.0).unwrap(), 0.5);
        let tr = table("v", &[3.0]);
        assert_eq!(robustness_at(&parse_stl("v < 3").unwrap(), &tr, 0.0).unwrap(), 0.0);
        let tr = table("d", &[-1.0, 2.0]);
        assert_eq!(robustness_at(&parse_stl("F[0,1](d > 0)").unwrap(), &tr, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn unknown_signal() {
        let tr = table("v", &[1.0]);
        assert_eq!(
            robustness(&parse_stl("w > 0").unwrap(), &tr),
            Err(StlError::UnknownSignal("w".into()))
        );
    }

    #[test]
    fn bounded_window_sliding() {
        let tr = table("x", &[5.0, 1.0, 4.0, 3.0, 0.5, 6.0]);
        let g = parse_stl("G[1,2] x > 0").unwrap();
        assert_eq!(robustness(&g, &tr).unwrap(), vec![1.0, 3.0, 0.5, 0.5, 6.0, f64::INFINITY]);
        let f = parse_stl("F[1,2] x > 0").unwrap();
        assert_eq!(robustness(&f, &tr).unwrap(), vec![4.0, 4.0, 3.0, 6.0, 6.0, f64::NEG_INFINITY]);
    }

    #[test]
    fn until_semantics() {
        let mut tr = table("p", &[1.0, 2.0, -1.0, 3.0]);
        tr.insert("q", vec![-5.0, -2.0, 4.0, 9.0]);
        let u = parse_stl("p > 0 U[0,inf] q > 0").unwrap();
        // j=2: min(q=4, min p[0..2]=1) = 1 ; j=3: min(9, min p[0..3]=-1) = -1
        assert_eq!(robustness_at(&u, &tr, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn non_integer_times() {
        let mut tr = SignalTable::new((0..10).map(|i| i as f64 * 0.1).collect());
        tr.insert("x", (0..10).map(|i| i as f64).collect());
        let f = parse_stl("F[0,0.3] x > 0").unwrap();
        assert_eq!(robustness_at(&f, &tr, 0.0).unwrap(), 3.0);
    }
}
