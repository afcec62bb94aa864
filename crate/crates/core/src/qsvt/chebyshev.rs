//! Even Chebyshev fits of the singular-value filter.
//!
//! The filter is fitted as `P(t) ≈ f_even(√t)` on `t ∈ [0, 1]`; substituting
//! `t = x²` turns each `T_k(2t − 1)` into `T_{2k}(x)`, so `Q(x) = P(x²)` is
//! even by construction.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{target_even, PolySpec};
use crate::error::{Error, Result};

/// Largest admissible polynomial degree.
pub const DEGREE_CAP: usize = 1_000_000;

/// Number of Chebyshev-distributed certification points on `[-1, 1]`.
pub const GRID_POINTS: usize = 10_000;

/// Stopping rule of the adaptive fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitRule {
    /// Interpolants of length `2^k + 1`, doubled until the coefficient tail
    /// shows a plateau below `ε` (Aurentz–Trefethen chopping); the tail past
    /// the plateau is dropped.
    #[default]
    Chop,
    /// Smallest truncation of a converged interpolant whose grid error is
    /// at most `ε`.
    Certified,
}

/// Even polynomial `Q(x) = Σ_k c_k T_{2k}(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPoly {
    spec: PolySpec,
    rule: FitRule,
    coefficients: Arc<Vec<f64>>,
    grid_error: f64,
    grid_max: f64,
    rescaled_by: f64,
}

#[derive(Serialize, Deserialize)]
struct FilterPolyRecord {
    mu: f64,
    y0: f64,
    eps: f64,
    degree: usize,
    rule: FitRule,
    max_error: f64,
    max_abs: f64,
    coefficients: Vec<f64>,
}

impl Serialize for FilterPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FilterPolyRecord {
            mu: self.spec.mu(),
            y0: self.spec.y0(),
            eps: self.spec.eps(),
            degree: self.degree(),
            rule: self.rule,
            max_error: self.grid_error,
            max_abs: self.grid_max,
            coefficients: self.coefficients.to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FilterPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = FilterPolyRecord::deserialize(d)?;
        let spec = PolySpec::new(rec.mu, rec.y0, rec.eps).map_err(serde::de::Error::custom)?;
        if rec.coefficients.is_empty() {
            return Err(serde::de::Error::custom("empty coefficient list"));
        }
        Ok(FilterPoly::from_coefficients(spec, rec.rule, rec.coefficients))
    }
}

impl FilterPoly {
    /// Wraps coefficients, recording their grid error and maximum.
    pub fn from_coefficients(spec: PolySpec, rule: FitRule, coefficients: Vec<f64>) -> Self {
        let grid = CertificationGrid::new(spec);
        let (grid_error, grid_max) = grid.measure(&coefficients);
        FilterPoly {
            spec,
            rule,
            coefficients: Arc::new(coefficients),
            grid_error,
            grid_max,
            rescaled_by: 1.0,
        }
    }

    pub fn spec(&self) -> PolySpec {
        self.spec
    }

    pub fn rule(&self) -> FitRule {
        self.rule
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        2 * (self.coefficients.len() - 1)
    }

    /// Sup-norm error against the target on the certification grid.
    pub fn max_error(&self) -> f64 {
        self.grid_error
    }

    /// Largest `|Q|` on the certification grid.
    pub fn max_abs(&self) -> f64 {
        self.grid_max
    }

    /// Factor `≤ 1` applied to the raw fit to keep `|Q| ≤ 1`.
    pub fn rescaled_by(&self) -> f64 {
        self.rescaled_by
    }

    pub fn eval(&self, x: f64) -> f64 {
        clenshaw(&self.coefficients, 2.0 * x * x - 1.0)
    }
}

/// `Q(x)` by Clenshaw recurrence in `2x² − 1`.
pub fn eval_poly(poly: &FilterPoly, x: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain(x));
    }
    Ok(poly.eval(x))
}

/// `Σ_k c_k T_k(s)`.
pub fn clenshaw(c: &[f64], s: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = ck + 2.0 * s * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c.first().copied().unwrap_or(0.0) + s * b1 - b2
}

/// Chebyshev coefficients of `g` on `[0, 1]` from its values at the `N + 1`
/// Lobatto points `t_j = (1 + cos(πj/N))/2`.
pub fn lobatto_coefficients(g: impl Fn(f64) -> f64 + Sync, n: usize) -> Vec<f64> {
    let values: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|j| g(0.5 * (1.0 + (std::f64::consts::PI * j as f64 / n as f64).cos())))
        .collect();
    let mut ext: Vec<Complex64> = values
        .iter()
        .chain(values[1..n].iter().rev())
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(2 * n).process(&mut ext);
    let mut c: Vec<f64> = ext[..=n].iter().map(|z| z.re / n as f64).collect();
    c[0] *= 0.5;
    c[n] *= 0.5;
    c
}

/// Aurentz–Trefethen plateau detection; returns how many leading
/// coefficients to keep, or `coeffs.len()` when no plateau is found.
pub fn standard_chop(coeffs: &[f64], tol: f64) -> usize {
    let n = coeffs.len();
    if n < 17 {
        return n;
    }
    let mut env: Vec<f64> = vec![0.0; n];
    let mut running = 0.0f64;
    for j in (0..n).rev() {
        running = running.max(coeffs[j].abs());
        env[j] = running;
    }
    if env[0] == 0.0 {
        return 1;
    }
    let head = env[0];
    env.iter_mut().for_each(|e| *e /= head);

    // 1-based indices as in the reference formulation
    let mut plateau = None;
    let mut j2 = 0usize;
    for j in 2..=n {
        j2 = (1.25 * j as f64 + 5.0).round() as usize;
        if j2 > n {
            return n;
        }
        let e1 = env[j - 1];
        let e2 = env[j2 - 1];
        let r = 3.0 * (1.0 - e1.ln() / tol.ln());
        if e1 == 0.0 || e2 / e1 > r {
            plateau = Some(j - 1);
            break;
        }
    }
    let plateau = match plateau {
        Some(p) => p,
        None => return n,
    };
    if env[plateau - 1] == 0.0 {
        return plateau;
    }
    let floor = tol.powf(7.0 / 6.0);
    let j3 = env.iter().filter(|&&e| e >= floor).count();
    if j3 < j2 {
        j2 = j3 + 1;
        env[j2 - 1] = floor;
    }
    let ramp = -tol.log10() / 3.0;
    let steps = (j2 - 1).max(1) as f64;
    let d = (0..j2)
        .map(|i| env[i].log10() + ramp * i as f64 / steps)
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
        .0
        + 1;
    (d - 1).max(1)
}

/// Chebyshev points of the first kind on `[−1, 1]` plus the target breakpoints.
struct CertificationGrid {
    targets: Vec<f64>,
    extra: Vec<(f64, f64)>,
}

impl CertificationGrid {
    fn new(spec: PolySpec) -> Self {
        let m = GRID_POINTS;
        let targets = (0..m)
            .map(|j| {
                let x = (std::f64::consts::PI * (j as f64 + 0.5) / m as f64).cos();
                target_even(x, &spec)
            })
            .collect();
        let extra = [spec.mu(), spec.mu() / 2.0]
            .iter()
            .map(|&x| (x, target_even(x, &spec)))
            .collect();
        CertificationGrid { targets, extra }
    }

    /// Values of `Σ c_k T_{2k}(x_j)` on the grid, by folding the series
    /// onto one length-`M` DFT: `T_k(2x_j² − 1) = cos(2πk(j + ½)/M)`.
    fn grid_values(&self, c: &[f64]) -> Vec<f64> {
        let m = self.targets.len();
        let mut folded = vec![Complex64::new(0.0, 0.0); m];
        for (k, &ck) in c.iter().enumerate() {
            let phase = std::f64::consts::PI * (k % (2 * m)) as f64 / m as f64;
            folded[k % m] += Complex64::from_polar(ck, phase);
        }
        FftPlanner::new().plan_fft_inverse(m).process(&mut folded);
        folded.iter().map(|z| z.re).collect()
    }

    /// `(sup |Q − f_even|, sup |Q|)` over the grid.
    fn measure(&self, c: &[f64]) -> (f64, f64) {
        let values = self.grid_values(c);
        let mut err = 0.0f64;
        let mut top = 0.0f64;
        for (v, t) in values.iter().zip(&self.targets) {
            err = err.max((v - t).abs());
            top = top.max(v.abs());
        }
        for &(x, t) in &self.extra {
            let v = clenshaw(c, 2.0 * x * x - 1.0);
            err = err.max((v - t).abs());
            top = top.max(v.abs());
        }
        (err, top)
    }
}

fn auxiliary(spec: PolySpec) -> impl Fn(f64) -> f64 + Sync {
    move |t: f64| target_even(t.max(0.0).sqrt(), &spec)
}

/// Fit with the default rule and the default degree cap.
pub fn fit_even_poly(spec: &PolySpec) -> Result<FilterPoly> {
    fit_even_poly_with(spec, FitRule::Chop, DEGREE_CAP)
}

pub fn fit_even_poly_with(spec: &PolySpec, rule: FitRule, degree_cap: usize) -> Result<FilterPoly> {
    let spec = *spec;
    let grid = CertificationGrid::new(spec);
    let g = auxiliary(spec);
    let mut best_error = f64::INFINITY;
    for k in 3.. {
        let n = 1usize << k;
        if 2 * n > degree_cap {
            break;
        }
        let coeffs = lobatto_coefficients(&g, n);
        match rule {
            FitRule::Chop => {
                let cutoff = standard_chop(&coeffs, spec.eps());
                if cutoff < coeffs.len() {
                    return Ok(finish(spec, rule, coeffs[..cutoff].to_vec(), &grid));
                }
                best_error = best_error.min(grid.measure(&coeffs).0);
            }
            FitRule::Certified => {
                let passes = |len: usize| {
                    let (err, top) = grid.measure(&coeffs[..len]);
                    let scale = if top > 1.0 { 1.0 / top } else { 1.0 };
                    let scaled_err = if scale < 1.0 {
                        grid.measure(&coeffs[..len].iter().map(|c| c * scale).collect::<Vec<_>>()).0
                    } else {
                        err
                    };
                    (scaled_err <= spec.eps(), scaled_err)
                };
                let (full_ok, full_err) = passes(coeffs.len());
                best_error = best_error.min(full_err);
                if !full_ok {
                    continue;
                }
                let (mut lo, mut hi) = (1usize, coeffs.len());
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if passes(mid).0 {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                return Ok(finish(spec, rule, coeffs[..lo].to_vec(), &grid));
            }
        }
    }
    Err(Error::DegreeCap {
        cap: degree_cap,
        achieved_error: best_error,
    })
}

fn finish(spec: PolySpec, rule: FitRule, mut coeffs: Vec<f64>, grid: &CertificationGrid) -> FilterPoly {
    let (_, top) = grid.measure(&coeffs);
    let mut rescaled_by = 1.0;
    if top > 1.0 {
        rescaled_by = 1.0 / top;
        coeffs.iter_mut().for_each(|c| *c *= rescaled_by);
    }
    let (grid_error, grid_max) = grid.measure(&coeffs);
    FilterPoly {
        spec,
        rule,
        coefficients: Arc::new(coeffs),
        grid_error,
        grid_max,
        rescaled_by,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mu: f64, y0: f64, eps: f64) -> PolySpec {
        PolySpec::new(mu, y0, eps).unwrap()
    }

    #[test]
    fn clenshaw_matches_cosine_form() {
        let c = [0.3, -0.2, 0.5, 0.1];
        for &s in &[-1.0, -0.4, 0.0, 0.77, 1.0] {
            let th: f64 = f64::acos(s);
            let direct: f64 = c.iter().enumerate().map(|(k, ck)| ck * (k as f64 * th).cos()).sum();
            assert!((clenshaw(&c, s) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn lobatto_coefficients_recover_polynomial() {
        // t ↦ T_3(2t − 1) + 0.5 T_1(2t − 1)
        let g = |t: f64| {
            let s = 2.0 * t - 1.0;
            4.0 * s * s * s - 3.0 * s + 0.5 * s
        };
        let c = lobatto_coefficients(g, 16);
        for (k, v) in c.iter().enumerate() {
            let expected = match k {
                1 => 0.5,
                3 => 1.0,
                _ => 0.0,
            };
            assert!((v - expected).abs() < 1e-13, "c[{k}] = {v}");
        }
    }

    #[test]
    fn grid_folding_matches_clenshaw() {
        let s = spec(0.01, 0.5, 1e-3);
        let grid = CertificationGrid::new(s);
        let c: Vec<f64> = (0..25_000).map(|k| ((k as f64) * 0.37).sin() / (1.0 + k as f64)).collect();
        let folded = grid.grid_values(&c);
        for j in [0usize, 17, 4999, 9999] {
            let x = (std::f64::consts::PI * (j as f64 + 0.5) / GRID_POINTS as f64).cos();
            assert!((folded[j] - clenshaw(&c, 2.0 * x * x - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn chop_degrees() {
        assert_eq!(fit_even_poly(&spec(0.01, 0.5, 1e-3)).unwrap().degree(), 382);
        assert_eq!(fit_even_poly(&spec(1e-3, 0.3, 1e-3)).unwrap().degree(), 6610);
    }

    #[test]
    fn chop_on_smooth_tail() {
        let decaying: Vec<f64> = (0..64).map(|k| 0.5f64.powi(k)).collect();
        let keep = standard_chop(&decaying, 1e-6);
        assert!(keep < 64 && keep > 15, "{keep}");
        assert_eq!(standard_chop(&[1.0; 10], 1e-6), 10);
        assert_eq!(standard_chop(&[0.0; 20], 1e-6), 1);
    }

    #[test]
    fn certified_fit_meets_tolerance() {
        let s = spec(0.01, 0.5, 1e-3);
        let p = fit_even_poly_with(&s, FitRule::Certified, DEGREE_CAP).unwrap();
        assert!(p.max_error() <= 1e-3);
        assert!(p.max_abs() <= 1.0 + 1e-9);
        assert!(p.degree() > 382);
    }

    #[test]
    fn degree_cap_reports_error() {
        let err = fit_even_poly_with(&spec(1e-3, 0.3, 1e-3), FitRule::Certified, 10_000).unwrap_err();
        match err {
            Error::DegreeCap { cap, achieved_error } => {
                assert_eq!(cap, 10_000);
                assert!(achieved_error > 1e-3 && achieved_error.is_finite());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let p = fit_even_poly(&spec(0.04, 0.3, 1e-2)).unwrap();
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["degree"], p.degree());
        assert_eq!(json["mu"], 0.04);
        let back: FilterPoly = serde_json::from_value(json).unwrap();
        assert_eq!(back.coefficients(), p.coefficients());
    }
}
