//! Elastic convex QP subproblem:
//!
//! ```text
//! min  gᵀd + ½dᵀ(H + δI)d + ν(Σ(p + q) + Σ v)
//! s.t. A_E d − p + q = b_E,   A_I d + s − v = b_I,   l <= d <= u,
//!      p, q, s, v >= 0
//! ```
//!
//! solved with Mehrotra's predictor-corrector method. The Newton systems are
//! condensed to a quasi-definite matrix over `(d, y, μ)` and factored with an
//! envelope LDLᵀ under a stage-wise ordering.

use super::ldl::{LdlFactor, Skyline};
use super::{BlockBfgs, SparseRows};

pub struct QpData<'a> {
    pub hessian: &'a BlockBfgs,
    /// Proximal shift `δ >= 0` added to the Hessian diagonal.
    pub shift: f64,
    pub gradient: &'a [f64],
    pub eq: &'a SparseRows,
    pub eq_rhs: &'a [f64],
    pub ineq: &'a SparseRows,
    pub ineq_rhs: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub penalty: f64,
    pub stages: &'a [Option<usize>],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 120 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub d: Vec<f64>,
    pub eq_mult: Vec<f64>,
    pub ineq_mult: Vec<f64>,
    /// `z_l − z_u`.
    pub bound_mult: Vec<f64>,
    /// Largest elastic variable.
    pub elastic: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Permutation of the unknowns `(d, y, μ)` that interleaves variables and
/// rows stage by stage, with stage-free unknowns last.
struct Ordering {
    pos: Vec<usize>,
    first: Vec<usize>,
}

impl Ordering {
    fn new(data: &QpData) -> Self {
        let n = data.gradient.len();
        let me = data.eq.nrows();
        let mi = data.ineq.nrows();
        let total = n + me + mi;
        let row_stage = |r: &Vec<(usize, f64)>| r.iter().filter_map(|&(c, _)| data.stages[c]).min();
        let mut keys: Vec<(usize, u8, usize)> = Vec::with_capacity(total);
        for (i, s) in data.stages.iter().enumerate() {
            keys.push((s.unwrap_or(usize::MAX), 0, i));
        }
        for (r, row) in data.eq.rows.iter().enumerate() {
            keys.push((row_stage(row).unwrap_or(usize::MAX), 1, n + r));
        }
        for (r, row) in data.ineq.rows.iter().enumerate() {
            keys.push((row_stage(row).unwrap_or(usize::MAX), 1, n + me + r));
        }
        keys.sort_unstable();
        let mut pos = vec![0; total];
        for (p, k) in keys.iter().enumerate() {
            pos[k.2] = p;
        }
        let mut first: Vec<usize> = (0..total).collect();
        let mut link = |a: usize, b: usize| {
            let (hi, lo) = if pos[a] > pos[b] { (pos[a], pos[b]) } else { (pos[b], pos[a]) };
            if lo < first[hi] {
                first[hi] = lo;
            }
        };
        for (idx, _) in data.hessian.blocks() {
            for &i in idx {
                for &j in idx {
                    link(i, j);
                }
            }
        }
        for (r, row) in data.eq.rows.iter().enumerate() {
            for &(c, _) in row {
                link(n + r, c);
            }
        }
        for (r, row) in data.ineq.rows.iter().enumerate() {
            for &(c, _) in row {
                link(n + me + r, c);
            }
        }
        Self { pos, first }
    }
}

struct Pair {
    p: f64,
    q: f64,
}

/// Solves the elastic QP.
pub fn solve(data: &QpData, opts: &QpOptions) -> QpSolution {
    let n = data.gradient.len();
    let me = data.eq.nrows();
    let mi = data.ineq.nrows();
    let nu = data.penalty;
    let ord = Ordering::new(data);
    let lo: Vec<usize> = (0..n).filter(|&i| data.lower[i].is_finite()).collect();
    let up: Vec<usize> = (0..n).filter(|&i| data.upper[i].is_finite()).collect();

    let mut d = vec![0.0; n];
    for i in 0..n {
        let (l, u) = (data.lower[i], data.upper[i]);
        let margin = if l.is_finite() && u.is_finite() { (0.25 * (u - l)).min(1e-2) } else { 1e-2 };
        let mut v = 0.0f64;
        if l.is_finite() {
            v = v.max(l + margin);
        }
        if u.is_finite() {
            v = v.min(u - margin);
        }
        d[i] = v;
    }
    let el = nu.recip().min(1.0);
    let re0 = sub(&data.eq.mul(&d), data.eq_rhs);
    let ri0 = sub(&data.ineq.mul(&d), data.ineq_rhs);
    let mut p: Vec<f64> = re0.iter().map(|r| r.max(0.0) + el).collect();
    let mut q: Vec<f64> = re0.iter().map(|r| (-r).max(0.0) + el).collect();
    let mut s: Vec<f64> = ri0.iter().map(|r| (-r).max(0.0) + 1.0).collect();
    let mut v: Vec<f64> = ri0.iter().map(|r| r.max(0.0) + el).collect();
    let mut y = vec![0.0; me];
    let mut mu = vec![(0.5 * nu).min(1.0); mi];
    let mut zl: Vec<f64> = vec![1.0; lo.len()];
    let mut zu: Vec<f64> = vec![1.0; up.len()];

    let gnorm = inf_norm(data.gradient).max(1.0);
    let bnorm = inf_norm(data.eq_rhs).max(inf_norm(data.ineq_rhs)).max(1.0);
    let npairs = 2 * me + 2 * mi + lo.len() + up.len();

    let mut converged = false;
    let mut iterations = 0;
    let mut reg = 1e-11;
    for it in 0..opts.max_iter {
        iterations = it;
        // residuals
        let mut rd = data.hessian.mul(&d);
        for i in 0..n {
            rd[i] += data.gradient[i] + data.shift * d[i];
        }
        data.eq.mul_transpose_add(&y, &mut rd);
        data.ineq.mul_transpose_add(&mu, &mut rd);
        for (k, &i) in lo.iter().enumerate() {
            rd[i] -= zl[k];
        }
        for (k, &i) in up.iter().enumerate() {
            rd[i] += zu[k];
        }
        let ad = data.eq.mul(&d);
        let re: Vec<f64> = (0..me).map(|r| ad[r] - p[r] + q[r] - data.eq_rhs[r]).collect();
        let ai = data.ineq.mul(&d);
        let ri: Vec<f64> = (0..mi).map(|r| ai[r] + s[r] - v[r] - data.ineq_rhs[r]).collect();
        let wl: Vec<f64> = lo.iter().map(|&i| d[i] - data.lower[i]).collect();
        let wu: Vec<f64> = up.iter().map(|&i| data.upper[i] - d[i]).collect();

        let pairs = collect_pairs(&p, &q, &y, &s, &v, &mu, &wl, &zl, &wu, &zu, nu);
        let gap = if npairs == 0 { 0.0 } else { pairs.iter().map(|x| x.p * x.q).sum::<f64>() / npairs as f64 };
        if inf_norm(&rd) <= opts.tol * gnorm && inf_norm(&re).max(inf_norm(&ri)) <= opts.tol * bnorm && gap <= opts.tol
        {
            converged = true;
            break;
        }

        // condensed matrix
        let de: Vec<f64> = (0..me).map(|r| p[r] / (nu - y[r]) + q[r] / (nu + y[r])).collect();
        let di: Vec<f64> = (0..mi).map(|r| s[r] / mu[r] + v[r] / (nu - mu[r])).collect();
        let mut sigma = vec![0.0; n];
        for (k, &i) in lo.iter().enumerate() {
            sigma[i] += zl[k] / wl[k];
        }
        for (k, &i) in up.iter().enumerate() {
            sigma[i] += zu[k] / wu[k];
        }
        let (kmat, factor) = match assemble_and_factor(data, &ord, &sigma, &de, &di, &mut reg) {
            Some(f) => f,
            None => break,
        };

        let newton = |cp: &[f64]| -> Vec<f64> {
            // cp holds the complementarity targets in `collect_pairs` order.
            let (cpe, rest) = cp.split_at(me);
            let (cqe, rest) = rest.split_at(me);
            let (cs, rest) = rest.split_at(mi);
            let (cv, rest) = rest.split_at(mi);
            let (cl, cu) = rest.split_at(lo.len());
            let mut rhs = vec![0.0; n + me + mi];
            for i in 0..n {
                rhs[i] = -rd[i];
            }
            for (k, &i) in lo.iter().enumerate() {
                rhs[i] += cl[k] / wl[k];
            }
            for (k, &i) in up.iter().enumerate() {
                rhs[i] -= cu[k] / wu[k];
            }
            for r in 0..me {
                rhs[n + r] = -re[r] + cpe[r] / (nu - y[r]) - cqe[r] / (nu + y[r]);
            }
            for r in 0..mi {
                rhs[n + me + r] = -ri[r] - cs[r] / mu[r] + cv[r] / (nu - mu[r]);
            }
            let sol = solve_refined(&kmat, &factor, &ord, &rhs);
            let (dd, rest) = sol.split_at(n);
            let (dy, dmu) = rest.split_at(me);
            let mut full = Vec::with_capacity(n + me + mi + 2 * pairs.len());
            full.extend_from_slice(dd);
            full.extend_from_slice(dy);
            full.extend_from_slice(dmu);
            // primal and dual parts of every complementarity pair
            for r in 0..me {
                full.push((cpe[r] + p[r] * dy[r]) / (nu - y[r]));
                full.push(-dy[r]);
            }
            for r in 0..me {
                full.push((cqe[r] - q[r] * dy[r]) / (nu + y[r]));
                full.push(dy[r]);
            }
            for r in 0..mi {
                full.push((cs[r] - s[r] * dmu[r]) / mu[r]);
                full.push(dmu[r]);
            }
            for r in 0..mi {
                full.push((cv[r] + v[r] * dmu[r]) / (nu - mu[r]));
                full.push(-dmu[r]);
            }
            for (k, &i) in lo.iter().enumerate() {
                full.push(dd[i]);
                full.push((cl[k] - zl[k] * dd[i]) / wl[k]);
            }
            for (k, &i) in up.iter().enumerate() {
                full.push(-dd[i]);
                full.push((cu[k] + zu[k] * dd[i]) / wu[k]);
            }
            full
        };
        let base = n + me + mi;
        let step_to_boundary = |dir: &[f64]| -> f64 {
            let mut a = 1.0f64;
            for (k, pr) in pairs.iter().enumerate() {
                let dp = dir[base + 2 * k];
                let dq = dir[base + 2 * k + 1];
                if dp < 0.0 {
                    a = a.min(-pr.p / dp);
                }
                if dq < 0.0 {
                    a = a.min(-pr.q / dq);
                }
            }
            a
        };

        let c_aff: Vec<f64> = pairs.iter().map(|x| -x.p * x.q).collect();
        let aff = newton(&c_aff);
        let a_aff = step_to_boundary(&aff);
        let gap_aff = if npairs == 0 {
            0.0
        } else {
            pairs
                .iter()
                .enumerate()
                .map(|(k, x)| (x.p + a_aff * aff[base + 2 * k]) * (x.q + a_aff * aff[base + 2 * k + 1]))
                .sum::<f64>()
                / npairs as f64
        };
        let sigma_c = if gap > 0.0 { (gap_aff / gap).clamp(0.0, 1.0).powi(3) } else { 0.0 };
        let c_cor: Vec<f64> = pairs
            .iter()
            .enumerate()
            .map(|(k, x)| sigma_c * gap - x.p * x.q - aff[base + 2 * k] * aff[base + 2 * k + 1])
            .collect();
        let dir = newton(&c_cor);
        let alpha = (0.995 * step_to_boundary(&dir)).min(1.0);
        if !alpha.is_finite() || alpha <= 0.0 {
            break;
        }

        for i in 0..n {
            d[i] += alpha * dir[i];
        }
        for r in 0..me {
            y[r] += alpha * dir[n + r];
        }
        for r in 0..mi {
            mu[r] += alpha * dir[n + me + r];
        }
        let mut k = base;
        for r in 0..me {
            p[r] += alpha * dir[k];
            k += 2;
        }
        for r in 0..me {
            q[r] += alpha * dir[k];
            k += 2;
        }
        for r in 0..mi {
            s[r] += alpha * dir[k];
            k += 2;
        }
        for r in 0..mi {
            v[r] += alpha * dir[k];
            k += 2;
        }
        for z in zl.iter_mut() {
            *z += alpha * dir[k + 1];
            k += 2;
        }
        for z in zu.iter_mut() {
            *z += alpha * dir[k + 1];
            k += 2;
        }
        // keep the elastic duals strictly inside (−ν, ν)
        for r in 0..me {
            y[r] = y[r].clamp(-nu * (1.0 - 1e-14), nu * (1.0 - 1e-14));
        }
        for r in 0..mi {
            mu[r] = mu[r].clamp(nu * 1e-300, nu * (1.0 - 1e-14));
        }
    }

    let mut bound_mult = vec![0.0; n];
    for (k, &i) in lo.iter().enumerate() {
        bound_mult[i] += zl[k];
    }
    for (k, &i) in up.iter().enumerate() {
        bound_mult[i] -= zu[k];
    }
    let elastic = p.iter().chain(&q).chain(&v).fold(0.0f64, |m, x| m.max(*x));
    QpSolution { d, eq_mult: y, ineq_mult: mu, bound_mult, elastic, iterations, converged }
}

#[allow(clippy::too_many_arguments)]
fn collect_pairs(
    p: &[f64],
    q: &[f64],
    y: &[f64],
    s: &[f64],
    v: &[f64],
    mu: &[f64],
    wl: &[f64],
    zl: &[f64],
    wu: &[f64],
    zu: &[f64],
    nu: f64,
) -> Vec<Pair> {
    let mut out = Vec::with_capacity(2 * p.len() + 2 * s.len() + wl.len() + wu.len());
    out.extend(p.iter().zip(y).map(|(&p, &y)| Pair { p, q: nu - y }));
    out.extend(q.iter().zip(y).map(|(&q, &y)| Pair { p: q, q: nu + y }));
    out.extend(s.iter().zip(mu).map(|(&s, &m)| Pair { p: s, q: m }));
    out.extend(v.iter().zip(mu).map(|(&v, &m)| Pair { p: v, q: nu - m }));
    out.extend(wl.iter().zip(zl).map(|(&w, &z)| Pair { p: w, q: z }));
    out.extend(wu.iter().zip(zu).map(|(&w, &z)| Pair { p: w, q: z }));
    out
}

fn assemble(data: &QpData, ord: &Ordering, sigma: &[f64], de: &[f64], di: &[f64]) -> Skyline {
    let n = sigma.len();
    let me = de.len();
    let mut k = Skyline::with_profile(ord.first.clone());
    let pos = &ord.pos;
    for (idx, h) in data.hessian.blocks() {
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate().take(a + 1) {
                k.add(pos[i], pos[j], h[(a, b)]);
            }
        }
    }
    for (i, c) in data.hessian.free() {
        k.add(pos[i], pos[i], c);
    }
    for i in 0..n {
        k.add(pos[i], pos[i], sigma[i] + data.shift);
    }
    for (r, row) in data.eq.rows.iter().enumerate() {
        for &(c, val) in row {
            k.add(pos[n + r], pos[c], val);
        }
        k.add(pos[n + r], pos[n + r], -de[r]);
    }
    for (r, row) in data.ineq.rows.iter().enumerate() {
        for &(c, val) in row {
            k.add(pos[n + me + r], pos[c], val);
        }
        k.add(pos[n + me + r], pos[n + me + r], -di[r]);
    }
    k
}

fn assemble_and_factor(
    data: &QpData,
    ord: &Ordering,
    sigma: &[f64],
    de: &[f64],
    di: &[f64],
    reg: &mut f64,
) -> Option<(Skyline, LdlFactor)> {
    let n = sigma.len();
    let kmat = assemble(data, ord, sigma, de, di);
    let total = kmat.dim();
    for _ in 0..12 {
        let mut kr = kmat.clone();
        for i in 0..total {
            let sign = if i < n { 1.0 } else { -1.0 };
            kr.add(ord.pos[i], ord.pos[i], sign * *reg);
        }
        if let Ok(f) = kr.factor() {
            let ok = (0..total).all(|i| {
                let piv = f.diag()[ord.pos[i]];
                if i < n {
                    piv > 0.0
                } else {
                    piv < 0.0
                }
            });
            if ok {
                *reg = (*reg * 0.1).max(1e-11);
                return Some((kmat, f));
            }
        }
        *reg *= 100.0;
    }
    None
}

fn solve_refined(kmat: &Skyline, f: &LdlFactor, ord: &Ordering, rhs: &[f64]) -> Vec<f64> {
    let total = rhs.len();
    let mut b = vec![0.0; total];
    for i in 0..total {
        b[ord.pos[i]] = rhs[i];
    }
    let mut x = f.solve(&b);
    for _ in 0..3 {
        let kx = kmat.mul(&x);
        let r: Vec<f64> = b.iter().zip(&kx).map(|(a, c)| a - c).collect();
        if inf_norm(&r) <= 1e-14 * inf_norm(&b).max(1e-300) {
            break;
        }
        let dx = f.solve(&r);
        for i in 0..total {
            x[i] += dx[i];
        }
    }
    (0..total).map(|i| x[ord.pos[i]]).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
