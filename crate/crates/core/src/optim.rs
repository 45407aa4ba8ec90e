//! Small numerical optimizers: scalar bracketing and minimization, level
//! bisection, BFGS with backtracking, and Nelder-Mead.

/// Convergence controls shared by the multivariate optimizers.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Relative objective change that counts as converged.
    pub rel_f: f64,
    /// Gradient sup-norm that counts as converged.
    pub grad: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel_f: 1e-10,
            grad: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// A bracket `a < b < c` (or reversed) with `f(b) <= min(f(a), f(c))`.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub fb: f64,
    pub expansions: usize,
}

/// Record of every scalar evaluation, kept for unimodality checks.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub points: Vec<(f64, f64)>,
}

impl Trace {
    /// True when some sampled point sits above both of its sorted neighbours
    /// by more than `tol`, which a unimodal (minimum-seeking) curve forbids.
    pub fn has_interior_peak(&self, tol: f64) -> bool {
        let mut pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .copied()
            .filter(|p| p.1.is_finite())
            .collect();
        pts.sort_by(|l, r| l.0.total_cmp(&r.0));
        pts.dedup_by(|l, r| l.0 == r.0);
        pts.windows(3)
            .any(|w| w[1].1 > w[0].1 + tol && w[1].1 > w[2].1 + tol)
    }
}

fn eval_or_inf<F: FnMut(f64) -> f64>(f: &mut F, x: f64, trace: &mut Trace) -> f64 {
    let v = f(x);
    let v = if v.is_nan() { f64::INFINITY } else { v };
    trace.points.push((x, v));
    v
}

/// Walk downhill from `x0` with steps growing by a factor of two until the
/// objective turns up.
pub fn bracket_minimum<F: FnMut(f64) -> f64>(
    f: &mut F,
    x0: f64,
    step: f64,
    max_doublings: usize,
    trace: &mut Trace,
) -> Option<Bracket> {
    let mut a = x0;
    let mut fa = eval_or_inf(f, a, trace);
    let mut h = step;
    let mut b = a + h;
    let mut fb = eval_or_inf(f, b, trace);
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
        h = -h;
    }
    for k in 0..=max_doublings {
        h *= 2.0;
        let c = b + h;
        let fc = eval_or_inf(f, c, trace);
        if fc >= fb {
            return Some(Bracket {
                a,
                b,
                c,
                fb,
                expansions: k,
            });
        }
        a = b;
        b = c;
        fb = fc;
    }
    None
}

/// Brent's minimizer (golden section with parabolic steps) inside a bracket.
/// Stops once the bracket is narrower than `xtol`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(
    f: &mut F,
    br: Bracket,
    xtol: f64,
    max_iter: usize,
    trace: &mut Trace,
) -> (f64, f64, usize) {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if br.a < br.c {
        (br.a, br.c)
    } else {
        (br.c, br.a)
    };
    let mut x = br.b;
    let mut w = x;
    let mut v = x;
    let mut fx = br.fb;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for iter in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = 0.5 * xtol + 1e-15 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            return (x, fx, iter);
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = eval_or_inf(f, u, trace);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx, max_iter)
}

/// Outcome of a level search.
#[derive(Debug, Clone, Copy)]
pub struct LevelRoot {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Bisection for `g(x) = target` between `inside` (where `g <= target`) and
/// `outside` (where `g > target`). Evaluation failures count as outside.
pub fn bisect_level<F: FnMut(f64) -> Option<f64>>(
    g: &mut F,
    mut inside: f64,
    mut outside: f64,
    target: f64,
    ftol: f64,
    xtol: f64,
    max_iter: usize,
) -> LevelRoot {
    let mut best = (inside, f64::NAN);
    for iter in 0..max_iter {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside || (outside - inside).abs() <= xtol {
            return LevelRoot {
                x: best.0,
                value: best.1,
                iterations: iter,
            };
        }
        match g(mid) {
            Some(v) if v <= target => {
                inside = mid;
                best = (mid, v);
                if target - v <= ftol {
                    return LevelRoot {
                        x: mid,
                        value: v,
                        iterations: iter + 1,
                    };
                }
            }
            Some(v) => {
                outside = mid;
                if v - target <= ftol {
                    return LevelRoot {
                        x: mid,
                        value: v,
                        iterations: iter + 1,
                    };
                }
            }
            None => outside = mid,
        }
    }
    LevelRoot {
        x: best.0,
        value: best.1,
        iterations: max_iter,
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS minimization of `f` with an analytic gradient supplied by `fg`.
///
/// `fg(x, grad)` returns `f(x)` and fills `grad`; non-finite values are
/// treated as infeasible and rejected by the line search.
pub fn bfgs<F>(mut fg: F, x0: &[f64], tol: Tolerance) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut fx = fg(&x, &mut g);
    if !fx.is_finite() {
        return Minimum {
            x,
            f: fx,
            iterations: 0,
            converged: false,
            grad_norm: f64::NAN,
        };
    }
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        h[i * d + i] = 1.0;
    }
    let mut xn = vec![0.0; d];
    let mut gn = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut stalls = 0;
    for iter in 0..tol.max_iter {
        let gnorm = sup_norm(&g);
        if gnorm < tol.grad {
            return Minimum {
                x,
                f: fx,
                iterations: iter,
                converged: true,
                grad_norm: gnorm,
            };
        }
        for i in 0..d {
            dir[i] = -(0..d).map(|j| h[i * d + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // Lost descent: reset to steepest descent.
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] = if i == j { 1.0 } else { 0.0 };
                }
                dir[i] = -g[i];
            }
            slope = dot(&dir, &g);
        }
        // Cap the first trial step so wild directions stay local.
        let dnorm = sup_norm(&dir);
        let mut t = if dnorm > 5.0 { 5.0 / dnorm } else { 1.0 };
        let mut accepted = false;
        let mut fnew = fx;
        for _ in 0..60 {
            for i in 0..d {
                xn[i] = x[i] + t * dir[i];
            }
            fnew = fg(&xn, &mut gn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            let gnorm = sup_norm(&g);
            return Minimum {
                x,
                f: fx,
                iterations: iter,
                converged: gnorm < tol.grad * 1e3,
                grad_norm: gnorm,
            };
        }
        let s: Vec<f64> = (0..d).map(|i| xn[i] - x[i]).collect();
        let yv: Vec<f64> = (0..d).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| h[i * d + j] * yv[j]).sum())
                .collect();
            let yhy = dot(&yv, &hy);
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] +=
                        (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let rel = (fx - fnew).abs() / fx.abs().max(1.0);
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        fx = fnew;
        if rel < tol.rel_f {
            stalls += 1;
            if stalls >= 2 {
                let gnorm = sup_norm(&g);
                return Minimum {
                    x,
                    f: fx,
                    iterations: iter + 1,
                    converged: true,
                    grad_norm: gnorm,
                };
            }
        } else {
            stalls = 0;
        }
    }
    let gnorm = sup_norm(&g);
    Minimum {
        x,
        f: fx,
        iterations: tol.max_iter,
        converged: gnorm < tol.grad,
        grad_norm: gnorm,
    }
}

/// Central-difference gradient, for objectives without an analytic one.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], grad: &mut [f64]) {
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
}

/// Nelder-Mead simplex minimization from `x0` with initial edge `scale`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    scale: f64,
    ftol: f64,
    max_evals: usize,
) -> Minimum {
    let d = x0.len();
    let clean = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.to_vec());
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += scale;
        simplex.push(p);
    }
    let mut fs: Vec<f64> = simplex.iter().map(|p| clean(f(p))).collect();
    let mut evals = d + 1;
    let mut iterations = 0;
    while evals < max_evals {
        iterations += 1;
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&i, &j| fs[i].total_cmp(&fs[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fs = order.iter().map(|&i| fs[i]).collect();
        let spread = (fs[d] - fs[0]).abs();
        let size = simplex[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&simplex[0])
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0_f64, f64::max);
        if spread <= ftol * (fs[0].abs() + 1e-10) && size < 1e-8 {
            return Minimum {
                x: simplex[0].clone(),
                f: fs[0],
                iterations,
                converged: true,
                grad_norm: f64::NAN,
            };
        }
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|p| p[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..d)
                .map(|k| centroid[k] + t * (simplex[d][k] - centroid[k]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = clean(f(&xr));
        evals += 1;
        if fr < fs[0] {
            let xe = along(-2.0);
            let fe = clean(f(&xe));
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                fs[d] = fe;
            } else {
                simplex[d] = xr;
                fs[d] = fr;
            }
        } else if fr < fs[d - 1] {
            simplex[d] = xr;
            fs[d] = fr;
        } else {
            let (xc, fc) = if fr < fs[d] {
                let xc = along(-0.5);
                let fc = clean(f(&xc));
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = clean(f(&xc));
                (xc, fc)
            };
            evals += 1;
            if fc < fs[d].min(fr) {
                simplex[d] = xc;
                fs[d] = fc;
            } else {
                let (best, rest) = simplex.split_at_mut(1);
                for (v, fv) in rest.iter_mut().zip(&mut fs[1..]) {
                    for (x, b) in v.iter_mut().zip(&best[0]) {
                        *x = b + 0.5 * (*x - b);
                    }
                    *fv = clean(f(v));
                }
                evals += d;
            }
        }
    }
    let best = (0..=d)
        .min_by(|&i, &j| fs[i].total_cmp(&fs[j]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        f: fs[best],
        iterations,
        converged: false,
        grad_norm: f64::NAN,
    }
}
