use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{post_controls, pre_design, BaselineEstimate, Method, UnitFit};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;

const KKT_TOL: f64 = 1e-9;

/// `min ‖y − X w‖²` subject to `w ≥ 0`, `Σ w = 1`.
///
/// Primal active-set method: starts from the best single control and alternately frees the
/// coordinate with the most negative reduced gradient and solves the equality-constrained
/// problem on the free set, stepping back to the boundary whenever a weight would turn
/// negative. The returned point satisfies the KKT conditions to `1e-9` relative to the scale of
/// `XᵀX`.
pub fn simplex_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    let k = x.ncols();
    if k == 0 || x.nrows() != y.len() {
        return Err(Error::Dimension(format!("design {}×{k} against {} outcomes", x.nrows(), y.len())));
    }
    let q = x.transpose() * x;
    let c = x.transpose() * y;
    let scale = 1.0 + q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = KKT_TOL * scale;

    // best vertex: ‖y − x_j‖² = yᵀy − 2c_j + Q_jj
    let start = (0..k)
        .min_by(|&a, &b| (q[(a, a)] - 2.0 * c[a]).total_cmp(&(q[(b, b)] - 2.0 * c[b])))
        .expect("k > 0");
    let mut w = vec![0.0; k];
    w[start] = 1.0;
    let mut free = vec![start];

    for _ in 0..(50 * k + 100) {
        let g = gradient(&q, &c, &w);
        let level: f64 = free.iter().map(|&j| w[j] * g[j]).sum();
        let entering = (0..k)
            .filter(|j| !free.contains(j))
            .map(|j| (j, g[j] - level))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let j_in = match entering {
            Some((j, r)) if r < -tol => j,
            _ => break,
        };
        free.push(j_in);
        loop {
            let target = solve_on_face(&q, &c, &free, scale)?;
            if target.iter().all(|&v| v > 0.0) {
                for (&j, &v) in free.iter().zip(&target) {
                    w[j] = v;
                }
                break;
            }
            // step toward the face optimum until the first weight reaches zero
            let alpha = free
                .iter()
                .zip(&target)
                .filter(|&(_, &v)| v <= 0.0)
                .map(|(&j, &v)| w[j] / (w[j] - v))
                .fold(1.0f64, f64::min);
            for (&j, &v) in free.iter().zip(&target) {
                w[j] += alpha * (v - w[j]);
            }
            let dropped: Vec<usize> = free
                .iter()
                .zip(&target)
                .filter(|&(&j, &v)| w[j] <= 1e-15 || (v <= 0.0 && alpha == 0.0))
                .map(|(&j, _)| j)
                .collect();
            free.retain(|j| !dropped.contains(j));
            for j in dropped {
                w[j] = 0.0;
            }
            if free.is_empty() {
                return Err(Error::Singular("simplex active set collapsed".into()));
            }
        }
        normalize(&mut w);
        if !free.contains(&j_in) {
            // the entering coordinate could not move off zero: optimal up to rounding
            break;
        }
    }
    normalize(&mut w);
    let violation = simplex_kkt_violation(&q, &c, &w);
    if violation > 1e3 * tol {
        log::warn!("simplex least squares stopped with KKT violation {violation:.3e}");
    }
    Ok(w)
}

fn gradient(q: &DMatrix<f64>, c: &DVector<f64>, w: &[f64]) -> Vec<f64> {
    let wv = DVector::from_column_slice(w);
    (q * wv - c).iter().copied().collect()
}

fn normalize(w: &mut [f64]) {
    for v in w.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|v| *v /= s);
    }
}

/// Minimizer of the quadratic on the affine hull `{Σ_{j∈free} w_j = 1}` through the KKT system.
fn solve_on_face(q: &DMatrix<f64>, c: &DVector<f64>, free: &[usize], scale: f64) -> Result<Vec<f64>> {
    let s = free.len();
    let ridge = 1e-12 * scale;
    let mut m = DMatrix::zeros(s + 1, s + 1);
    let mut rhs = DVector::zeros(s + 1);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            m[(a, b)] = q[(i, j)];
        }
        m[(a, a)] += ridge;
        m[(a, s)] = 1.0;
        m[(s, a)] = 1.0;
        rhs[a] = c[i];
    }
    rhs[s] = 1.0;
    let sol = match m.clone().lu().solve(&rhs) {
        Some(v) if v.iter().all(|x| x.is_finite()) => v,
        _ => m
            .svd(true, true)
            .solve(&rhs, 1e-14 * scale)
            .map_err(|e| Error::Singular(format!("simplex face system: {e}")))?,
    };
    Ok(sol.iter().take(s).copied().collect())
}

/// Largest violation of the simplex KKT conditions at `w` for `½wᵀQw − cᵀw`: feasibility, equal
/// reduced gradients on the support, and no descent direction into the zero set.
pub fn simplex_kkt_violation(q: &DMatrix<f64>, c: &DVector<f64>, w: &[f64]) -> f64 {
    let g = gradient(q, c, w);
    let level: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
    let mut worst = (w.iter().sum::<f64>() - 1.0).abs();
    for (j, &wj) in w.iter().enumerate() {
        worst = worst.max(-wj);
        if wj > 1e-12 {
            worst = worst.max((g[j] - level).abs());
        } else {
            worst = worst.max(level - g[j]);
        }
    }
    worst
}

/// Classic synthetic control: per treated unit, simplex weights on the raw pre-period outcomes.
pub fn fit_sc(data: &PanelDataset) -> Result<BaselineEstimate> {
    let post = post_controls(data);
    let units = (0..data.n_treated)
        .into_par_iter()
        .map(|i| {
            let (x, y) = pre_design(data, i);
            let w = simplex_least_squares(&x, &y)?;
            let wv = DVector::from_column_slice(&w);
            Ok(UnitFit {
                fitted_pre: (&x * &wv).iter().copied().collect(),
                point: (&post * &wv).iter().copied().collect(),
                weights: w,
                intercept: None,
                interval: None,
                draws: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineEstimate { method: Method::Sc, units })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> f64 {
        (y - x * DVector::from_column_slice(w)).norm_squared()
    }

    #[test]
    fn clipped_to_vertex() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        let y = DVector::from_vec(vec![2.0, 4.0]);
        let w = simplex_least_squares(&x, &y).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12);
    }

    #[test]
    fn interior_mixture() {
        let c1 = [1.0, 3.0, -2.0, 0.5, 4.0];
        let c2 = [2.0, -1.0, 0.0, 3.0, 1.0];
        let c3 = [0.0, 1.0, 1.0, 1.0, -3.0];
        let x = DMatrix::from_fn(5, 3, |t, c| [c1, c2, c3][c][t]);
        let y = DVector::from_fn(5, |t, _| 0.5 * c1[t] + 0.5 * c2[t]);
        let w = simplex_least_squares(&x, &y).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9 && w[2].abs() < 1e-9, "{w:?}");
        let q = x.transpose() * &x;
        let c = x.transpose() * &y;
        assert!(simplex_kkt_violation(&q, &c, &w) < 1e-9);
        for j in 0..3 {
            let mut e = vec![0.0; 3];
            e[j] = 1.0;
            assert!(objective(&x, &y, &w) <= objective(&x, &y, &e) + 1e-12);
        }
    }
}
