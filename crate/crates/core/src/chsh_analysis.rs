//! Correlators, CHSH combinations with Poisson errors, optimal settings and
//! sinusoidal visibility fits.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Coincidence counts `(R11, R22, R12, R21)` and the derived correlator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEstimate {
    pub counts: [u64; 4],
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "sigma_E")]
    pub sigma_e: f64,
}

/// `E = (R11 + R22 − R12 − R21)/ΣR`, first-order Poisson error
/// `σ² = 4·R₊·R₋/ΣR³`.
pub fn correlator(counts: [u64; 4]) -> Result<CorrelatorEstimate> {
    let plus = counts[0] + counts[1];
    let minus = counts[2] + counts[3];
    let n = plus + minus;
    if n == 0 {
        return domain("correlator needs at least one coincidence");
    }
    let e = (plus as f64 - minus as f64) / n as f64;
    let nf = n as f64;
    let sigma_e = (4.0 * plus as f64 * minus as f64 / (nf * nf * nf)).sqrt();
    Ok(CorrelatorEstimate { counts, e, sigma_e })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dof {
    Polarization,
    Timebin,
}

/// Signal and idler setting of one correlator: HWP angles for polarization,
/// interferometer phases for time bins (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SettingPair {
    pub label: &'static str,
    pub signal: f64,
    pub idler: f64,
}

pub const SETTING_LABELS: [&str; 4] = ["(X,Y)", "(X',Y)", "(X,Y')", "(X',Y')"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub labels: [String; 4],
    pub correlators: [CorrelatorEstimate; 4],
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "sigma_S")]
    pub sigma_s: f64,
    /// `(S − 2)/σ_S`, absent when `σ_S = 0`.
    pub n_sigma: Option<f64>,
}

/// `S = |E1 + E2 + E3 − E4|` in the order `(X,Y), (X',Y), (X,Y'), (X',Y')`.
pub fn chsh_s(correlators: [CorrelatorEstimate; 4]) -> ChshResult {
    let [a, b, c, d] = correlators;
    let s = (a.e + b.e + c.e - d.e).abs();
    let sigma_s = correlators.iter().map(|k| k.sigma_e * k.sigma_e).sum::<f64>().sqrt();
    let n_sigma = (sigma_s > 0.0).then(|| (s - 2.0) / sigma_s);
    ChshResult { labels: SETTING_LABELS.map(String::from), correlators, s, sigma_s, n_sigma }
}

/// Settings reaching `2√2·V` for a Werner state. For polarization, `offset`
/// rotates both HWPs; for time bins it is the calibrated phase-sum offset,
/// subtracted from the idler phase.
pub fn optimal_settings(dof: Dof, offset: f64) -> [SettingPair; 4] {
    let (x, xp, y, yp) = match dof {
        Dof::Polarization => (offset, FRAC_PI_8 + offset, PI / 16.0 + offset, -PI / 16.0 + offset),
        Dof::Timebin => (0.0, FRAC_PI_2, -FRAC_PI_4 - offset, FRAC_PI_4 - offset),
    };
    [(x, y), (xp, y), (x, yp), (xp, yp)]
        .iter()
        .zip(SETTING_LABELS)
        .map(|(&(signal, idler), label)| SettingPair { label, signal, idler })
        .collect::<Vec<_>>()
        .try_into()
        .expect("four settings")
}

/// Werner-state correlator `V cos 4(θs − θi)` or `V cos(φs + φi + φ0)`.
pub fn analytic_correlator(dof: Dof, visibility: f64, pair: &SettingPair, offset: f64) -> f64 {
    match dof {
        Dof::Polarization => visibility * (4.0 * (pair.signal - pair.idler)).cos(),
        Dof::Timebin => visibility * (pair.signal + pair.idler + offset).cos(),
    }
}

pub fn analytic_s(dof: Dof, visibility: f64, settings: &[SettingPair; 4], offset: f64) -> f64 {
    let e: Vec<f64> = settings.iter().map(|p| analytic_correlator(dof, visibility, p, offset)).collect();
    (e[0] + e[1] + e[2] - e[3]).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    #[serde(rename = "V")]
    pub v: f64,
    /// `x0` in `A(1 + V cos(f·x − x0))`, wrapped to `(−π, π]`.
    pub phase_offset: f64,
    #[serde(rename = "sigma_V")]
    pub sigma_v: f64,
    pub sigma_phase: f64,
    pub amplitude: f64,
    pub chi2_per_dof: f64,
    pub iterations: usize,
}

const FIT_MAX_ITER: usize = 100;
const FIT_TOL: f64 = 1e-13;

/// Poisson-weighted fit of `A(1 + V cos(f·x − x0))` at fixed frequency `f`,
/// linear in `(A, A·V·cos x0, A·V·sin x0)`, iterated with model weights.
pub fn fit_visibility(scan: &[(f64, f64)], frequency: f64) -> Result<VisibilityFit> {
    if scan.len() < 6 {
        return Err(Error::Fit(format!("need at least 6 scan points, got {}", scan.len())));
    }
    if !(frequency > 0.0) {
        return Err(Error::Fit("fit frequency must be positive".into()));
    }
    if scan.iter().any(|&(x, y)| !x.is_finite() || !(y >= 0.0) || !y.is_finite()) {
        return Err(Error::Fit("scan values must be finite with nonnegative counts".into()));
    }
    let (xmin, xmax) = scan.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(x, _)| (a.min(x), b.max(x)));
    let n = scan.len() as f64;
    // sampled period [0, 2π) with n points also counts as a full period
    if frequency * (xmax - xmin) < 2.0 * PI * (n - 1.0) / n - 1e-9 {
        return Err(Error::Fit("scan spans less than one period".into()));
    }
    let basis = |x: f64| Vector3::new(1.0, (frequency * x).cos(), (frequency * x).sin());
    let mut weights: Vec<f64> = scan.iter().map(|&(_, y)| 1.0 / y.max(1.0)).collect();
    let mut params = Vector3::zeros();
    let mut cov = Matrix3::zeros();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=FIT_MAX_ITER {
        iterations = it;
        let mut m = Matrix3::zeros();
        let mut r = Vector3::zeros();
        for (&(x, y), &w) in scan.iter().zip(&weights) {
            let b = basis(x);
            m += b * b.transpose() * w;
            r += b * (w * y);
        }
        let inv = m.try_inverse().ok_or_else(|| Error::Fit("singular normal equations".into()))?;
        let next = inv * r;
        cov = inv;
        let change = (next - params).norm() / next.norm().max(1e-300);
        params = next;
        weights = scan.iter().map(|&(x, _)| 1.0 / basis(x).dot(&params).max(1e-6)).collect();
        if change < FIT_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!("fit did not converge in {FIT_MAX_ITER} iterations (params {params:?})")));
    }
    let (a, b, c) = (params[0], params[1], params[2]);
    if !(a > 0.0) {
        return Err(Error::Fit(format!("fitted mean level {a} is not positive")));
    }
    let rr = (b * b + c * c).sqrt();
    let v = rr / a;
    let grad_v = if rr > 0.0 { Vector3::new(-v / a, b / (rr * a), c / (rr * a)) } else { Vector3::new(0.0, 1.0 / a, 0.0) };
    let sigma_v = (grad_v.transpose() * cov * grad_v)[0].max(0.0).sqrt();
    let grad_x0 = if rr > 0.0 { Vector3::new(0.0, -c / (rr * rr), b / (rr * rr)) } else { Vector3::zeros() };
    let sigma_phase = (grad_x0.transpose() * cov * grad_x0)[0].max(0.0).sqrt();
    let chi2: f64 = scan
        .iter()
        .map(|&(x, y)| {
            let m = basis(x).dot(&params).max(1e-6);
            (y - m) * (y - m) / m
        })
        .sum();
    let phase_offset = c.atan2(b);
    Ok(VisibilityFit {
        v: v.min(1.0),
        phase_offset: if phase_offset <= -PI { phase_offset + 2.0 * PI } else { phase_offset },
        sigma_v,
        sigma_phase,
        amplitude: a,
        chi2_per_dof: chi2 / (n - 3.0),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Poisson};
    use std::f64::consts::SQRT_2;

    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a.abs() } else { gcd(b, a % b) }
    }

    #[test]
    fn correlator_examples() {
        let c = correlator([100, 100, 0, 0]).unwrap();
        assert_eq!((c.e, c.sigma_e), (1.0, 0.0));
        let c = correlator([50, 50, 50, 50]).unwrap();
        assert_eq!(c.e, 0.0);
        assert!((c.sigma_e - 1.0 / 200f64.sqrt()).abs() < 1e-15);
        let c = correlator([98, 96, 2, 4]).unwrap();
        assert!((c.e - 0.94).abs() < 1e-15);
        // first-order propagation gives 0.02412
        assert!((c.sigma_e - (4.0 * 194.0 * 6.0 / 200f64.powi(3)).sqrt()).abs() < 1e-15);
        assert!((c.sigma_e - 0.0243).abs() < 5e-4);
        assert!(correlator([0, 0, 0, 0]).is_err());
    }

    fn bootstrap_sigma(counts: [u64; 4], trials: usize, seed: u64) -> f64 {
        let mut rng = seeded(seed);
        let dists: Vec<Poisson<f64>> = counts.iter().map(|&c| Poisson::new(c.max(1) as f64).unwrap()).collect();
        let es: Vec<f64> = (0..trials)
            .filter_map(|_| {
                let r: Vec<u64> = counts.iter().zip(&dists).map(|(&c, d)| if c == 0 { 0 } else { d.sample(&mut rng) as u64 }).collect();
                correlator([r[0], r[1], r[2], r[3]]).ok().map(|c| c.e)
            })
            .collect();
        let m = es.iter().sum::<f64>() / es.len() as f64;
        (es.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (es.len() - 1) as f64).sqrt()
    }

    #[test]
    fn bootstrap_confirms_propagation() {
        for counts in [[50, 50, 50, 50], [98, 96, 2, 4], [400, 380, 60, 50]] {
            let c = correlator(counts).unwrap();
            let b = bootstrap_sigma(counts, 10_000, 17);
            assert!((b / c.sigma_e - 1.0).abs() < 0.06, "{counts:?}: {b} vs {}", c.sigma_e);
        }
    }

    #[test]
    fn exhaustive_rational_oracle() {
        let mut checked = 0;
        let mut es = Vec::new();
        for a in 0..=20u64 {
            for b in 0..=20 - a {
                for c in 0..=20 - a - b {
                    for d in 0..=20 - a - b - c {
                        if a + b + c + d == 0 {
                            continue;
                        }
                        let est = correlator([a, b, c, d]).unwrap();
                        let num = (a + b) as i64 - (c + d) as i64;
                        let den = (a + b + c + d) as i64;
                        let g = gcd(num, den).max(1);
                        assert_eq!(est.e, (num / g) as f64 / (den / g) as f64);
                        let var_num = 4 * (a + b) * (c + d);
                        let var_den = (den * den * den) as u64;
                        assert!((est.sigma_e * est.sigma_e - var_num as f64 / var_den as f64).abs() < 1e-15);
                        assert!(est.e.abs() <= 1.0);
                        es.push(((num, den), est));
                        checked += 1;
                    }
                }
            }
        }
        assert_eq!(checked, 10625);
        // CHSH combinations over a deterministic sweep of the same tuples
        for k in 0..es.len() {
            let pick = [k, (7 * k + 1) % es.len(), (13 * k + 5) % es.len(), (31 * k + 11) % es.len()];
            let r = chsh_s(pick.map(|i| es[i].1));
            // exact rational sum over the common denominator
            let den: i64 = pick.iter().map(|&i| es[i].0 .1).product();
            let num: i64 = pick
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    let (n, d) = es[i].0;
                    let sign = if j == 3 { -1 } else { 1 };
                    sign * n * (den / d)
                })
                .sum();
            assert!((r.s - (num.abs() as f64 / den as f64)).abs() < 1e-14);
        }
    }

    #[test]
    fn chsh_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mk = |e: f64| CorrelatorEstimate { counts: [0; 4], e, sigma_e: 0.0 };
        let r = chsh_s([mk(h), mk(h), mk(h), mk(-h)]);
        assert!((r.s - 2.0 * SQRT_2).abs() < 1e-15);
        assert!(r.n_sigma.is_none());
        let v = 0.92;
        let r = chsh_s([mk(v * h), mk(v * h), mk(v * h), mk(-v * h)]);
        assert!((r.s - 2.602).abs() < 1e-3);
        let mk2 = |e: f64| CorrelatorEstimate { counts: [0; 4], e, sigma_e: 0.035 };
        let r = chsh_s([mk2(0.65), mk2(0.65), mk2(0.65), mk2(-0.65)]);
        assert!((r.s - 2.60).abs() < 1e-12);
        assert!((r.sigma_s - 0.07).abs() < 1e-12);
        assert!((r.n_sigma.unwrap() - 8.571).abs() < 1e-3);
    }

    #[test]
    fn optimal_settings_saturate() {
        for dof in [Dof::Polarization, Dof::Timebin] {
            let s = optimal_settings(dof, 0.0);
            assert!((analytic_s(dof, 1.0, &s, 0.0) - 2.0 * SQRT_2).abs() < 1e-12);
            assert!((analytic_s(dof, 0.96, &s, 0.0) - 2.715).abs() < 1e-3);
            for p in &s {
                assert!((analytic_correlator(dof, 0.5, p, 0.0).abs() - 0.5 / SQRT_2).abs() < 1e-12);
            }
        }
        let s = optimal_settings(Dof::Polarization, 0.0);
        assert_eq!((s[0].signal, s[1].signal, s[0].idler, s[2].idler), (0.0, FRAC_PI_8, PI / 16.0, -PI / 16.0));
        let t = optimal_settings(Dof::Timebin, 0.0);
        let sums: Vec<f64> = t.iter().map(|p| p.signal + p.idler).collect();
        assert!(sums.iter().all(|x| (x.abs() - FRAC_PI_4).abs() < 1e-15 || (x - 3.0 * FRAC_PI_4).abs() < 1e-15));
    }

    fn synthetic_scan(v: f64, x0: f64, freq: f64, amp: f64, points: usize) -> Vec<(f64, f64)> {
        (0..points)
            .map(|k| {
                let x = k as f64 * 2.0 * PI / (freq * points as f64);
                (x, amp * (1.0 + v * (freq * x - x0).cos()))
            })
            .collect()
    }

    #[test]
    fn noiseless_fit_is_exact() {
        for freq in [1.0, 4.0] {
            let f = fit_visibility(&synthetic_scan(0.92, 0.0, freq, 1000.0, 12), freq).unwrap();
            assert!((f.v - 0.92).abs() < 1e-6);
            assert!(f.phase_offset.abs() < 1e-9);
            let f = fit_visibility(&synthetic_scan(0.92, PI / 3.0, freq, 1000.0, 12), freq).unwrap();
            assert!((f.phase_offset - PI / 3.0).abs() < 1e-9);
            assert!(f.chi2_per_dof < 1e-12);
        }
    }

    #[test]
    fn fit_preconditions() {
        assert!(matches!(fit_visibility(&synthetic_scan(0.9, 0.0, 1.0, 10.0, 5), 1.0), Err(Error::Fit(_))));
        let short: Vec<(f64, f64)> = (0..8).map(|k| (k as f64 * 0.1, 10.0)).collect();
        assert!(fit_visibility(&short, 1.0).is_err());
    }

    fn noisy(scan: &[(f64, f64)], rng: &mut crate::rng::SimRng) -> Vec<(f64, f64)> {
        scan.iter().map(|&(x, m)| (x, if m > 0.0 { Poisson::new(m).unwrap().sample(rng) } else { 0.0 })).collect()
    }

    #[test]
    fn measured_scale_noise() {
        // 20 Hz for 100 s per point
        let model = synthetic_scan(0.92, 0.4, 1.0, 2000.0, 8);
        let mut rng = seeded(23);
        let fits: Vec<VisibilityFit> = (0..2000).map(|_| fit_visibility(&noisy(&model, &mut rng), 1.0).unwrap()).collect();
        let mv = fits.iter().map(|f| f.v).sum::<f64>() / fits.len() as f64;
        let sd = (fits.iter().map(|f| (f.v - mv).powi(2)).sum::<f64>() / (fits.len() - 1) as f64).sqrt();
        let reported = fits.iter().map(|f| f.sigma_v).sum::<f64>() / fits.len() as f64;
        // counting noise alone stays below the 0.02 to 0.03 quoted for measured fringes
        assert!((0.004..0.02).contains(&reported), "{reported}");
        assert!((reported / sd - 1.0).abs() < 0.15, "{reported} vs {sd}");
        let mphase = fits.iter().map(|f| f.phase_offset).sum::<f64>() / fits.len() as f64;
        assert!((mphase - 0.4).abs() < 3.0 * fits[0].sigma_phase / (fits.len() as f64).sqrt() + 1e-3);
    }

    #[test]
    fn n_sigma_scales_with_root_time() {
        let v = 0.92f64;
        let settings = optimal_settings(Dof::Timebin, 0.0);
        let mut rng = seeded(29);
        let mut run = |scale: f64| {
            (0..200)
                .map(|_| {
                    let cs = settings.map(|p| {
                        let e = analytic_correlator(Dof::Timebin, v, &p, 0.0);
                        let m = 250.0 * scale;
                        let mut d = |x: f64| Poisson::new(x).unwrap().sample(&mut rng) as u64;
                        correlator([d(m * (1.0 + e)), d(m * (1.0 + e)), d(m * (1.0 - e)), d(m * (1.0 - e))]).unwrap()
                    });
                    chsh_s(cs).n_sigma.unwrap()
                })
                .sum::<f64>()
                / 200.0
        };
        let ratio = run(2.0) / run(1.0);
        assert!((ratio / SQRT_2 - 1.0).abs() < 0.1, "{ratio}");
    }

    proptest! {
        #[test]
        fn werner_optimum_is_tsirelson_times_v(v in 0.0..=1.0f64, offset in -PI..PI) {
            for dof in [Dof::Polarization, Dof::Timebin] {
                let s = optimal_settings(dof, offset);
                prop_assert!((analytic_s(dof, v, &s, offset) - 2.0 * SQRT_2 * v).abs() < 1e-12);
            }
        }

        #[test]
        fn correlator_bounds(c in prop::array::uniform4(0u64..10_000)) {
            prop_assume!(c.iter().sum::<u64>() > 0);
            let e = correlator(c).unwrap();
            prop_assert!(e.e.abs() <= 1.0 && e.sigma_e >= 0.0);
        }

        #[test]
        fn fit_recovers_noiseless(v in 0.05..=1.0f64, x0 in -3.0..3.0f64, amp in 10.0..1e5f64) {
            let f = fit_visibility(&synthetic_scan(v, x0, 4.0, amp, 16), 4.0).unwrap();
            prop_assert!((f.v - v).abs() < 1e-6);
            let d = (f.phase_offset - x0 + PI).rem_euclid(2.0 * PI) - PI;
            prop_assert!(d.abs() < 1e-6);
        }
    }
}
