//! Small self-contained optimizers: a derivative-free Nelder–Mead simplex
//! (used to refine angle searches) and a box-constrained limited-memory
//! quasi-Newton ascent (used for piecewise-constant control optimization).

/// Minimizes `f` with a Nelder–Mead simplex started at `x0` with initial
/// edge length `scale`. Deterministic; returns the best vertex found.
pub fn nelder_mead<F>(f: F, x0: &[f64], scale: f64, iters: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    xs.push(x0.to_vec());
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += scale;
        xs.push(v);
    }
    let mut fs: Vec<f64> = xs.iter().map(|x| f(x)).collect();
    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap());
        let xs2: Vec<Vec<f64>> = order.iter().map(|&i| xs[i].clone()).collect();
        let fs2: Vec<f64> = order.iter().map(|&i| fs[i]).collect();
        xs = xs2;
        fs = fs2;
        // centroid of all but the worst vertex
        let mut c = vec![0.0; d];
        for x in xs.iter().take(d) {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / d as f64;
            }
        }
        let lincomb = |a: f64, p: &[f64], b: f64, q: &[f64]| -> Vec<f64> {
            p.iter().zip(q).map(|(pi, qi)| a * pi + b * qi).collect()
        };
        let xr = lincomb(2.0, &c, -1.0, &xs[d]);
        let fr = f(&xr);
        if fr < fs[0] {
            let xe = lincomb(3.0, &c, -2.0, &xs[d]);
            let fe = f(&xe);
            if fe < fr {
                xs[d] = xe;
                fs[d] = fe;
            } else {
                xs[d] = xr;
                fs[d] = fr;
            }
        } else if fr < fs[d - 1] {
            xs[d] = xr;
            fs[d] = fr;
        } else {
            let xc = lincomb(0.5, &c, 0.5, &xs[d]);
            let fc = f(&xc);
            if fc < fs[d] {
                xs[d] = xc;
                fs[d] = fc;
            } else {
                // shrink toward the best vertex
                let x0v = xs[0].clone();
                for k in 1..=d {
                    xs[k] = lincomb(0.5, &x0v, 0.5, &xs[k]);
                    fs[k] = f(&xs[k]);
                }
            }
        }
    }
    let (mut bi, mut bf) = (0usize, fs[0]);
    for (i, &v) in fs.iter().enumerate() {
        if v < bf {
            bf = v;
            bi = i;
        }
    }
    (xs[bi].clone(), bf)
}

/// Progress of one accepted quasi-Newton iterate.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

/// Result of a box-constrained minimization.
#[derive(Debug, Clone)]
pub struct BoxMinResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub trace: Vec<IterRecord>,
    pub converged: bool,
}

fn clip(x: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    x.iter().map(|&v| v.clamp(lo, hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes a smooth objective with simple box bounds `[lo, hi]` on every
/// coordinate, using L-BFGS directions with projected backtracking line
/// search. `fg` returns (value, gradient). Stops on the projected-gradient
/// norm, a small relative decrease, or the iteration cap.
pub fn lbfgs_box<FG>(
    mut fg: FG,
    x0: &[f64],
    lo: f64,
    hi: f64,
    max_iter: usize,
    memory: usize,
    pg_tol: f64,
) -> BoxMinResult
where
    FG: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = clip(x0, lo, hi);
    let (mut fx, mut g) = fg(&x);
    let mut ss: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    let mut trace = vec![IterRecord { iteration: 0, objective: fx, grad_norm: f64::NAN }];
    let mut converged = false;
    let mut stall = 0usize;

    for it in 1..=max_iter {
        // projected gradient: distance to the feasible Cauchy point
        let pg: Vec<f64> = (0..n).map(|i| x[i] - (x[i] - g[i]).clamp(lo, hi)).collect();
        let pg_norm = dot(&pg, &pg).sqrt();
        trace.last_mut().unwrap().grad_norm = pg_norm;
        if pg_norm < pg_tol {
            converged = true;
            break;
        }

        // two-loop recursion for the L-BFGS direction
        let mut q = g.clone();
        let k = ss.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&ys[i], &ss[i]);
            let a = rho * dot(&ss[i], &q);
            alphas[i] = a;
            for (qj, yj) in q.iter_mut().zip(&ys[i]) {
                *qj -= a * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&ss[k - 1], &ys[k - 1]) / dot(&ys[k - 1], &ys[k - 1]);
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        } else {
            // first step: conservative scaling so the initial trial is small
            let gn = dot(&g, &g).sqrt().max(1e-30);
            for qj in q.iter_mut() {
                *qj /= gn;
            }
        }
        for i in 0..k {
            let rho = 1.0 / dot(&ys[i], &ss[i]);
            let b = rho * dot(&ys[i], &q);
            for (qj, sj) in q.iter_mut().zip(&ss[i]) {
                *qj += (alphas[i] - b) * sj;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|&v| -v).collect();
        if dot(&dir, &g) >= 0.0 {
            dir = g.iter().map(|&v| -v).collect();
            ss.clear();
            ys.clear();
        }

        // projected line search: Armijo backtracking, plus expansion when
        // the unit step already passes (flat landscapes need long steps)
        let trial = |alpha: f64, fg: &mut FG| {
            let xt: Vec<f64> = (0..n).map(|i| (x[i] + alpha * dir[i]).clamp(lo, hi)).collect();
            let step: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
            let pred = dot(&g, &step);
            if pred >= 0.0 {
                return None;
            }
            let (ft, gt) = fg(&xt);
            let ok = ft <= fx + 1e-4 * pred;
            Some((xt, step, ft, gt, ok))
        };
        let mut picked: Option<(Vec<f64>, Vec<f64>, f64, Vec<f64>)> = None;
        let mut alpha = 1.0;
        match trial(alpha, &mut fg) {
            Some((xt, step, ft, gt, true)) => {
                // expand while the Armijo trial keeps improving
                let mut best = (xt, step, ft, gt);
                for _ in 0..12 {
                    alpha *= 2.0;
                    match trial(alpha, &mut fg) {
                        Some((xt2, step2, ft2, gt2, true)) if ft2 < best.2 => {
                            best = (xt2, step2, ft2, gt2);
                        }
                        _ => break,
                    }
                }
                picked = Some(best);
            }
            _ => {
                // backtrack
                for _ in 0..40 {
                    alpha *= 0.5;
                    if let Some((xt, step, ft, gt, true)) = trial(alpha, &mut fg) {
                        picked = Some((xt, step, ft, gt));
                        break;
                    }
                }
            }
        }
        let mut accepted = false;
        if let Some((xt, step, ft, gt)) = picked {
            let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
            if dot(&yv, &step) > 1e-12 {
                ss.push(step);
                ys.push(yv);
                if ss.len() > memory {
                    ss.remove(0);
                    ys.remove(0);
                }
            }
            let rel = (fx - ft).abs() / fx.abs().max(1.0);
            x = xt;
            fx = ft;
            g = gt;
            accepted = true;
            stall = if rel < 1e-12 { stall + 1 } else { 0 };
        }
        trace.push(IterRecord { iteration: it, objective: fx, grad_norm: f64::NAN });
        if !accepted || stall >= 3 {
            converged = accepted;
            break;
        }
    }
    BoxMinResult { x, objective: fx, trace, converged }
}
