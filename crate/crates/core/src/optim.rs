//! Derivative-free minimization and PSD peak search.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BnseError, Result};
use crate::spectrum::{linspace, SpectrumPosterior};

const GOLD: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105_1;
const BRENT_REL_TOL: f64 = 3e-8;
const BRENT_MAX_ITER: usize = 200;
const MAX_EXPANSIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowellConfig {
    /// Stop when a full cycle improves the value by less than this, relatively.
    pub ftol: f64,
    pub max_iter: usize,
    /// First trial step of each line search.
    pub initial_step: f64,
    /// Shuffles the initial direction order.
    pub seed: u64,
}

impl Default for PowellConfig {
    fn default() -> Self {
        Self {
            ftol: 1e-12,
            max_iter: 200,
            initial_step: 0.1,
            seed: 0,
        }
    }
}

/// Final state of a Powell run.
#[derive(Debug, Clone, PartialEq)]
pub struct PowellState {
    pub point: Vec<f64>,
    pub value: f64,
    pub directions: Vec<Vec<f64>>,
    pub cycles: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<'a, F> {
    f: &'a F,
    evals: usize,
}

impl<F: Fn(&[f64]) -> f64> Counted<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(BnseError::NonFinite {
                point: x.to_vec(),
                value: v,
            })
        }
    }
}

fn along(x: &[f64], d: &[f64], s: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(d)
        .zip(bounds)
        .map(|((xi, di), (lo, hi))| (xi + s * di).clamp(*lo, *hi))
        .collect()
}

/// Range of `s` keeping `x + s d` inside the box.
fn feasible_steps(x: &[f64], d: &[f64], bounds: &[(f64, f64)]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ((xi, di), (bl, bh)) in x.iter().zip(d).zip(bounds) {
        if *di > 0.0 {
            lo = lo.max((bl - xi) / di);
            hi = hi.min((bh - xi) / di);
        } else if *di < 0.0 {
            lo = lo.max((bh - xi) / di);
            hi = hi.min((bl - xi) / di);
        }
    }
    (lo.min(0.0), hi.max(0.0))
}

/// Brent minimization of `g` on `[a, b]` starting from `x` with `g(x) = fx`.
fn brent<G: FnMut(f64) -> Result<f64>>(mut g: G, a: f64, b: f64, x: f64, fx: f64, abs_tol: f64) -> Result<(f64, f64)> {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let (mut x, mut w, mut v) = (x, x, x);
    let (mut fx, mut fw, mut fv) = (fx, fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..BRENT_MAX_ITER {
        let xm = 0.5 * (a + b);
        let tol1 = BRENT_REL_TOL * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
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
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
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
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = g(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, w, x) = (w, x, u);
            (fv, fw, fx) = (fw, fx, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, w) = (w, u);
                (fv, fw) = (fw, fu);
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, fx))
}

/// Minimizes along `d` from `x`, never returning a worse value than `fx`.
fn line_minimize<F: Fn(&[f64]) -> f64>(
    f: &mut Counted<'_, F>,
    x: &[f64],
    fx: f64,
    d: &[f64],
    bounds: &[(f64, f64)],
    step: f64,
) -> Result<(Vec<f64>, f64)> {
    let (smin, smax) = feasible_steps(x, d, bounds);
    if smax - smin <= 0.0 {
        return Ok((x.to_vec(), fx));
    }
    let mut g = |s: f64| f.eval(&along(x, d, s, bounds));
    let abs_tol = 1e-12 * step.max(f64::MIN_POSITIVE);

    // bracket the minimum, walking downhill from s = 0
    let (mut a, mut fa) = (0.0, fx);
    let mut b = step.min(smax);
    let mut fb = if b > 0.0 { g(b)? } else { f64::INFINITY };
    if fb > fa {
        let back = (-step).max(smin);
        let fback = if back < 0.0 { g(back)? } else { f64::INFINITY };
        if fback > fa {
            let lo = back.min(0.0);
            let hi = b.max(0.0);
            let (s, v) = brent(&mut g, lo, hi, 0.0, fx, abs_tol)?;
            return Ok(if v < fx {
                (along(x, d, s, bounds), v)
            } else {
                (x.to_vec(), fx)
            });
        }
        b = back;
        fb = fback;
    }
    let limit = if b > 0.0 { smax } else { smin };
    let mut c;
    let mut fc;
    let mut n = 0;
    loop {
        c = b + GOLD * (b - a);
        c = if b > 0.0 { c.min(limit) } else { c.max(limit) };
        fc = if c == b { fb } else { g(c)? };
        n += 1;
        if fc > fb || c == limit || n >= MAX_EXPANSIONS {
            break;
        }
        (a, fa) = (b, fb);
        (b, fb) = (c, fc);
    }
    let _ = fa;
    if fc <= fb {
        // minimum sits on the boundary
        return Ok((along(x, d, c, bounds), fc));
    }
    let (s, v) = brent(&mut g, a, c, b, fb, abs_tol)?;
    Ok((along(x, d, s, bounds), v))
}

/// Powell's conjugate-direction method inside a box.
///
/// Each line search brackets locally from the current point, so the run
/// stays in the basin of `x0`. In one dimension it reduces to a Brent line
/// search.
pub fn powell_minimize<F>(objective: F, x0: &[f64], bounds: &[(f64, f64)], cfg: &PowellConfig) -> Result<PowellState>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 || bounds.len() != n {
        return Err(BnseError::InvalidInput(
            "powell: x0 and bounds must be non-empty and of equal length".into(),
        ));
    }
    for (x, (lo, hi)) in x0.iter().zip(bounds) {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(BnseError::InvalidInput(format!("powell: invalid bounds [{lo}, {hi}]")));
        }
        if !(x >= lo && x <= hi) {
            return Err(BnseError::InvalidInput(format!(
                "powell: x0 = {x} outside [{lo}, {hi}]"
            )));
        }
    }
    if cfg.initial_step.is_nan() || cfg.initial_step <= 0.0 {
        return Err(BnseError::InvalidInput("powell: initial step must be > 0".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut dirs: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut f = Counted {
        f: &objective,
        evals: 0,
    };
    let mut x = x0.to_vec();
    let mut fx = f.eval(&x)?;
    let mut cycles = 0;
    let mut converged = false;
    while cycles < cfg.max_iter {
        cycles += 1;
        let (x_start, f_start) = (x.clone(), fx);
        let (mut biggest, mut drop) = (0, 0.0);
        for (i, d) in dirs.iter().enumerate() {
            let before = fx;
            (x, fx) = line_minimize(&mut f, &x, fx, d, bounds, cfg.initial_step)?;
            if before - fx > drop {
                drop = before - fx;
                biggest = i;
            }
        }
        if 2.0 * (f_start - fx) <= cfg.ftol * (f_start.abs() + fx.abs()) + 1e-300 {
            converged = true;
            break;
        }
        if n == 1 {
            continue;
        }
        let shift: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        let extrapolated = along(&x, &shift, 1.0, bounds);
        let fe = f.eval(&extrapolated)?;
        if fe < f_start {
            let t = 2.0 * (f_start - 2.0 * fx + fe) * (f_start - fx - drop).powi(2) - drop * (f_start - fe).powi(2);
            if t < 0.0 {
                (x, fx) = line_minimize(&mut f, &x, fx, &shift, bounds, cfg.initial_step)?;
                dirs.remove(biggest);
                dirs.push(shift);
            }
        }
    }
    Ok(PowellState {
        point: x,
        value: fx,
        directions: dirs,
        cycles,
        evaluations: f.evals,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    pub n_starts: usize,
    /// Frequency tolerance; restarts closer than `10 * tol` are merged.
    pub tol: f64,
    /// Points of the coarse grid used to seed restarts.
    pub coarse_points: usize,
    pub seed: u64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            n_starts: 8,
            tol: 1e-6,
            coarse_points: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq: f64,
    pub psd_mean: f64,
}

/// Local maxima of the posterior-mean PSD on `range`, strongest first.
///
/// Restarts from the `n_starts` highest local maxima of a coarse grid and
/// refines each with Powell on the negated PSD. Maxima that end on the edge
/// of `range` are not reported.
pub fn find_psd_peaks(post: &SpectrumPosterior, range: (f64, f64), cfg: &PeakConfig) -> Result<Vec<Peak>> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(BnseError::InvalidInput(format!(
            "invalid peak search range [{lo}, {hi}]"
        )));
    }
    if cfg.n_starts == 0 || cfg.coarse_points < 3 {
        return Err(BnseError::InvalidInput(
            "peak search needs n_starts >= 1 and at least 3 coarse points".into(),
        ));
    }
    let grid = linspace(lo, hi, cfg.coarse_points);
    let psd: Vec<f64> = post.pointwise(&grid)?.iter().map(|p| p.psd_mean()).collect();
    let mut seeds: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let left = i == 0 || psd[i] >= psd[i - 1];
            let right = i + 1 == grid.len() || psd[i] >= psd[i + 1];
            left && right
        })
        .collect();
    seeds.sort_by(|&a, &b| psd[b].total_cmp(&psd[a]).then(a.cmp(&b)));
    seeds.truncate(cfg.n_starts);
    log::debug!("peak search: {} restarts on [{lo}, {hi}]", seeds.len());

    let step = grid[1] - grid[0];
    let runs: Vec<Result<Peak>> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let pcfg = PowellConfig {
                ftol: 1e-12,
                max_iter: 100,
                initial_step: step,
                seed: cfg.seed.wrapping_add(k as u64),
            };
            let failure = std::sync::Mutex::new(None);
            let objective = |x: &[f64]| match post.psd_mean(x[0]) {
                Ok(v) => -v,
                Err(e) => {
                    failure.lock().unwrap().get_or_insert(e);
                    f64::NAN
                }
            };
            let res = powell_minimize(objective, &[grid[i]], &[(lo, hi)], &pcfg);
            if let Some(e) = failure.into_inner().unwrap() {
                return Err(e);
            }
            let state = res?;
            Ok(Peak {
                freq: state.point[0],
                psd_mean: -state.value,
            })
        })
        .collect();
    let mut found = runs.into_iter().collect::<Result<Vec<_>>>()?;
    found.sort_by(|a, b| b.psd_mean.total_cmp(&a.psd_mean).then(a.freq.total_cmp(&b.freq)));
    let mut peaks: Vec<Peak> = Vec::new();
    for p in found {
        // a maximum pinned to the range edge is not a stationary point
        if p.freq <= lo + cfg.tol || p.freq >= hi - cfg.tol {
            log::debug!("peak search: dropping edge maximum at {}", p.freq);
            continue;
        }
        if peaks.iter().all(|q| (q.freq - p.freq).abs() > 10.0 * cfg.tol) {
            peaks.push(p);
        }
    }
    Ok(peaks)
}

/// Writes `rank,freq,psd_mean`, rank starting at 1.
pub fn write_peaks_csv<W: Write>(peaks: &[Peak], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "freq", "psd_mean"])?;
    for (i, p) in peaks.iter().enumerate() {
        w.write_record([(i + 1).to_string(), p.freq.to_string(), p.psd_mean.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quadratic() {
        let s = powell_minimize(
            |x| (x[0] - 3.0).powi(2),
            &[0.0],
            &[(-10.0, 10.0)],
            &PowellConfig::default(),
        )
        .unwrap();
        assert!((s.point[0] - 3.0).abs() < 1e-6, "{:?}", s);
        assert!(s.converged);
    }

    #[test]
    fn cosine_interior_minimum() {
        let s = powell_minimize(
            |x| (2.0 * PI * x[0]).cos(),
            &[0.3],
            &[(0.0, 1.0)],
            &PowellConfig::default(),
        )
        .unwrap();
        assert!((s.point[0] - 0.5).abs() < 1e-6, "{:?}", s);
    }

    #[test]
    fn stays_in_basin_of_start() {
        // wells at -2 (deeper) and +2
        let f = |x: &[f64]| (x[0] * x[0] - 4.0).powi(2) + 0.5 * x[0];
        let cfg = PowellConfig {
            initial_step: 0.05,
            ..Default::default()
        };
        let right = powell_minimize(f, &[1.5], &[(-5.0, 5.0)], &cfg).unwrap();
        let left = powell_minimize(f, &[-1.5], &[(-5.0, 5.0)], &cfg).unwrap();
        assert!(right.point[0] > 1.0 && left.point[0] < -1.0);
        assert!(left.value < right.value);
    }

    #[test]
    fn rosenbrock_2d() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = PowellConfig {
            max_iter: 2000,
            ftol: 1e-14,
            ..Default::default()
        };
        let s = powell_minimize(f, &[-1.2, 1.0], &[(-5.0, 5.0), (-5.0, 5.0)], &cfg).unwrap();
        assert!(
            (s.point[0] - 1.0).abs() < 1e-4 && (s.point[1] - 1.0).abs() < 1e-4,
            "{:?}",
            s
        );
    }

    #[test]
    fn respects_bounds() {
        let s = powell_minimize(|x| x[0], &[0.5], &[(0.0, 1.0)], &PowellConfig::default()).unwrap();
        assert_eq!(s.point[0], 0.0);
        let s = powell_minimize(
            |x| -(x[0] + x[1]),
            &[0.1, 0.2],
            &[(0.0, 1.0), (-1.0, 2.0)],
            &PowellConfig::default(),
        )
        .unwrap();
        assert_eq!(s.point, vec![1.0, 2.0]);
    }

    #[test]
    fn non_finite_objective_reports_point() {
        let err = powell_minimize(
            |x| if x[0] > 1.0 { f64::NAN } else { -x[0] },
            &[0.0],
            &[(-3.0, 3.0)],
            &PowellConfig::default(),
        )
        .unwrap_err();
        match err {
            BnseError::NonFinite { point, .. } => assert!(point[0] > 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = PowellConfig::default();
        assert!(powell_minimize(|x| x[0], &[2.0], &[(0.0, 1.0)], &cfg).is_err());
        assert!(powell_minimize(|x| x[0], &[0.0], &[(0.0, f64::INFINITY)], &cfg).is_err());
        assert!(powell_minimize(|x| x[0], &[], &[], &cfg).is_err());
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (5.0 * x[0]).sin() + 0.1 * x[0] * x[0];
        for i in 0..40 {
            let x0 = -4.0 + 0.2 * i as f64;
            let s = powell_minimize(f, &[x0], &[(-4.0, 4.0)], &PowellConfig::default()).unwrap();
            assert!(s.value <= f(&[x0]));
        }
    }

    #[test]
    fn peaks_csv_format() {
        let mut buf = Vec::new();
        write_peaks_csv(
            &[Peak {
                freq: 0.5,
                psd_mean: 4.0,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rank,freq,psd_mean\n1,0.5,4\n");
    }
}
