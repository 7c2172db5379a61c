//! Mean (M) and variance (V) witnesses over the measurement-angle box.
//!
//! M is the mean of the squared two-time projection amplitude over
//! (θ₁, φ₁, θ₂, φ₂) ∈ [0, 2π]⁴ with the flat measure; V is the mean of the
//! squared deviation from the constant 1/4. M equals 1/4 for every scenario
//! family and cannot discriminate; V separates entangled histories from
//! both non-entangled families.
//!
//! Every integrand here is a trigonometric polynomial of degree at most 8
//! per angle, so the uniform periodic grid integrates it exactly once the
//! grid has more points per dimension than the highest harmonic. Grid
//! evaluation is parallel over nodes; partial sums are combined by a fixed
//! pairwise tree so results are bit-stable regardless of worker count.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::history::{proj_amplitude, Scenario};
use crate::qstate::{BlochAngles, NORM_TOL};

/// Environment variable overriding the worker count for grid evaluation.
pub const THREADS_ENV_VAR: &str = "TEMPO_BELL_THREADS";

/// Lower critical value: V below this certifies an entangled history.
pub const V_LOWER_CRITICAL: f64 = 9.0 / 256.0;

/// Upper critical value: V above this certifies an entangled history.
pub const V_UPPER_CRITICAL: f64 = 5.0 / 64.0;

/// The centering constant of the variance functional.
pub const V_CENTER: f64 = 0.25;

/// Uniform tensor-product grid over [0, 2π]⁴ with N points per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureGrid {
    points_per_dim: usize,
}

impl QuadratureGrid {
    /// At least 4 points per dimension; N ≥ 16 makes every witness
    /// integrand exact.
    pub fn new(points_per_dim: usize) -> Result<Self> {
        if points_per_dim < 4 {
            return Err(Error::InvalidArgument(format!(
                "quadrature grid needs at least 4 points per dimension, got {points_per_dim}"
            )));
        }
        Ok(Self { points_per_dim })
    }

    /// The default N = 16 grid (65 536 evaluations), exact for all witness
    /// integrands.
    pub fn default16() -> Self {
        Self { points_per_dim: 16 }
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn total_nodes(&self) -> usize {
        self.points_per_dim.pow(4)
    }
}

fn thread_pool() -> &'static Option<rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        std::env::var(THREADS_ENV_VAR)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .and_then(|n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .ok()
            })
    })
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match thread_pool() {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Fixed pairwise reduction; the summation order depends only on the slice
/// layout, never on thread scheduling.
fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            tree_sum(&values[..mid]) + tree_sum(&values[mid..])
        }
    }
}

fn squared_projection(scenario: &Scenario, t1: f64, p1: f64, t2: f64, p2: f64) -> f64 {
    let at_t1 = BlochAngles::new(t1, p1).expect("finite grid node");
    let at_t2 = BlochAngles::new(t2, p2).expect("finite grid node");
    proj_amplitude(scenario, at_t1, at_t2, false, false).norm_sqr()
}

fn check_trivial_evolution(scenario: &Scenario) -> Result<()> {
    if let Scenario::EvolvedInitial { bridging, .. } = scenario {
        if !bridging.is_identity(NORM_TOL) {
            return Err(Error::InvalidArgument(
                "the mean and variance witnesses assume trivial evolution; \
                 the bridging operator must be the identity"
                    .into(),
            ));
        }
    }
    Ok(())
}

const BLOCK: usize = 4096;

fn grid_mean<G>(scenario: &Scenario, grid: &QuadratureGrid, g: G) -> f64
where
    G: Fn(f64) -> f64 + Sync,
{
    let n = grid.points_per_dim();
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let total = grid.total_nodes();
    let node = |flat: usize| -> f64 {
        let p2 = flat % n;
        let t2 = (flat / n) % n;
        let p1 = (flat / (n * n)) % n;
        let t1 = flat / (n * n * n);
        g(squared_projection(
            scenario,
            t1 as f64 * step,
            p1 as f64 * step,
            t2 as f64 * step,
            p2 as f64 * step,
        ))
    };
    let blocks = total.div_ceil(BLOCK);
    let block_sums: Vec<f64> = with_pool(|| {
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let start = b * BLOCK;
                let end = (start + BLOCK).min(total);
                let mut acc = 0.0;
                for flat in start..end {
                    acc += node(flat);
                }
                acc
            })
            .collect()
    });
    tree_sum(&block_sums) / total as f64
}

/// The mean of the squared projection amplitude over the angle box.
/// Equals 1/4 for every scenario family.
pub fn m_functional(scenario: &Scenario, grid: &QuadratureGrid) -> Result<f64> {
    check_trivial_evolution(scenario)?;
    Ok(grid_mean(scenario, grid, |p| p))
}

/// The mean of (|amplitude|² − 1/4)² over the angle box. The centering
/// constant is fixed at 1/4, not the empirical mean.
pub fn v_functional(scenario: &Scenario, grid: &QuadratureGrid) -> Result<f64> {
    check_trivial_evolution(scenario)?;
    Ok(grid_mean(scenario, grid, |p| {
        (p - V_CENTER) * (p - V_CENTER)
    }))
}

/// A Monte Carlo estimate with its standard error of the mean.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Monte Carlo cross-check of the M and V witnesses: uniform sampling of
/// the angle box with one shared stream for both estimates.
///
/// The quadrature path is authoritative; this exists to validate it and to
/// model how an experiment with finite statistics would estimate V.
pub fn monte_carlo_functionals(
    scenario: &Scenario,
    samples: u64,
    seed: u64,
) -> Result<(MonteCarloEstimate, MonteCarloEstimate)> {
    check_trivial_evolution(scenario)?;
    if samples < 2 {
        return Err(Error::InvalidArgument(
            "Monte Carlo mode needs at least 2 samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = 2.0 * std::f64::consts::PI;
    let mut m_acc = WelfordAccumulator::new();
    let mut v_acc = WelfordAccumulator::new();
    for _ in 0..samples {
        let t1 = rng.gen_range(0.0..tau);
        let p1 = rng.gen_range(0.0..tau);
        let t2 = rng.gen_range(0.0..tau);
        let p2 = rng.gen_range(0.0..tau);
        let p = squared_projection(scenario, t1, p1, t2, p2);
        m_acc.push(p);
        v_acc.push((p - V_CENTER) * (p - V_CENTER));
    }
    Ok((m_acc.estimate(), v_acc.estimate()))
}

struct WelfordAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl WelfordAccumulator {
    fn new() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn estimate(&self) -> MonteCarloEstimate {
        let n = self.count as f64;
        let variance = self.m2 / (n - 1.0);
        MonteCarloEstimate {
            mean: self.mean,
            std_error: (variance / n).sqrt(),
            samples: self.count,
        }
    }
}

/// The two non-entangled scenario families with closed-form V, plus the
/// entangled z-history reference point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    EvolvedInitial,
    ProductHistory,
    EntangledZz,
}

/// The attainable [lower, upper] range of V for a non-entangled family.
pub fn v_bounds(family: Family) -> Result<(f64, f64)> {
    match family {
        Family::EvolvedInitial => Ok((45.0 / 1024.0, 35.0 / 512.0)),
        Family::ProductHistory => Ok((9.0 / 256.0, 5.0 / 64.0)),
        Family::EntangledZz => Err(Error::InvalidArgument(
            "the entangled history is a single point, not a bounded family".into(),
        )),
    }
}

/// The closed-form V of a family at the given Bloch polar angles.
///
/// `theta_prime` is required for the product-history family (the t₂ state's
/// polar angle) and ignored otherwise; the entangled z-history takes no
/// parameters. The closed forms are independent of both azimuthal angles.
pub fn analytic_v_oracle(family: Family, theta: f64, theta_prime: Option<f64>) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument("non-finite theta".into()));
    }
    match family {
        Family::EvolvedInitial => Ok((115.0 + 25.0 * (4.0 * theta).cos()) / 2048.0),
        Family::ProductHistory => {
            let tp = theta_prime.ok_or_else(|| {
                Error::InvalidArgument(
                    "the product-history oracle needs theta_prime for the t2 state".into(),
                )
            })?;
            if !tp.is_finite() {
                return Err(Error::InvalidArgument("non-finite theta_prime".into()));
            }
            let a = (4.0 * theta).cos();
            let b = (4.0 * tp).cos();
            Ok((57.0 + 11.0 * (a + b) + a * b) / 1024.0)
        }
        Family::EntangledZz => Ok(3.0 / 128.0),
    }
}

/// Which side of the non-entangled V ranges a value falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// Verdict of the V test. The test is sufficient, not necessary:
/// `NotFlagged` is not a certificate of non-entanglement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VClassification {
    NecessarilyEntangled(Side),
    NotFlagged,
}

/// Classifies a measured V value: below 9/256 − tol or above 5/64 + tol
/// certifies an entangled history.
pub fn classify(v: f64, tol: f64) -> Result<VClassification> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "V must be finite and non-negative, got {v}"
        )));
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "classification tolerance must be finite and non-negative, got {tol}"
        )));
    }
    if v < V_LOWER_CRITICAL - tol {
        Ok(VClassification::NecessarilyEntangled(Side::Below))
    } else if v > V_UPPER_CRITICAL + tol {
        Ok(VClassification::NecessarilyEntangled(Side::Above))
    } else {
        Ok(VClassification::NotFlagged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{entangled_zz_history, product_history};
    use crate::qstate::{chi, Ket, Unitary};
    use num_complex::Complex64 as C64;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn initial_scenario(theta: f64, phi: f64) -> Scenario {
        Scenario::trivially_evolved(chi(BlochAngles::new(theta, phi).unwrap())).unwrap()
    }

    fn product_scenario(theta: f64, phi: f64, theta_prime: f64, phi_prime: f64) -> Scenario {
        let t1 = chi(BlochAngles::new(theta, phi).unwrap());
        let t2 = chi(BlochAngles::new(theta_prime, phi_prime).unwrap());
        Scenario::history(product_history(&t1, &t2).unwrap())
    }

    fn entangled_scenario() -> Scenario {
        Scenario::history(entangled_zz_history())
    }

    #[test]
    fn m_is_one_quarter_for_all_families() {
        let grid = QuadratureGrid::default16();
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(83);
        for _ in 0..10 {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let m = m_functional(&initial_scenario(theta, phi), &grid).unwrap();
            assert!((m - 0.25).abs() < 1e-10, "initial: M = {m}");
        }
        for _ in 0..10 {
            let s = product_scenario(
                rng.gen_range(0.0..PI / 3.0),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.0..PI / 3.0),
                rng.gen_range(0.0..2.0 * PI),
            );
            let m = m_functional(&s, &grid).unwrap();
            assert!((m - 0.25).abs() < 1e-10, "product: M = {m}");
        }
        let m = m_functional(&entangled_scenario(), &grid).unwrap();
        assert!((m - 0.25).abs() < 1e-10, "entangled: M = {m}");
    }

    #[test]
    fn v_matches_analytic_oracles() {
        let grid = QuadratureGrid::default16();
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(89);
        for _ in 0..10 {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let v = v_functional(&initial_scenario(theta, phi), &grid).unwrap();
            let oracle = analytic_v_oracle(Family::EvolvedInitial, theta, None).unwrap();
            assert!((v - oracle).abs() < 1e-10, "initial: {v} vs {oracle}");
        }
        for _ in 0..10 {
            let theta = rng.gen_range(0.0..PI / 3.0);
            let theta_prime = rng.gen_range(0.0..PI / 3.0);
            let s = product_scenario(
                theta,
                rng.gen_range(0.0..2.0 * PI),
                theta_prime,
                rng.gen_range(0.0..2.0 * PI),
            );
            let v = v_functional(&s, &grid).unwrap();
            let oracle =
                analytic_v_oracle(Family::ProductHistory, theta, Some(theta_prime)).unwrap();
            assert!((v - oracle).abs() < 1e-10, "product: {v} vs {oracle}");
        }
        let v = v_functional(&entangled_scenario(), &grid).unwrap();
        assert!((v - 3.0 / 128.0).abs() < 1e-10, "entangled: V = {v}");
    }

    #[test]
    fn oracle_reference_points() {
        let v = analytic_v_oracle(Family::EvolvedInitial, FRAC_PI_4, None).unwrap();
        assert!((v - 45.0 / 1024.0).abs() < 1e-15);
        let v = analytic_v_oracle(Family::EvolvedInitial, 0.0, None).unwrap();
        assert!((v - 35.0 / 512.0).abs() < 1e-15);
        let v = analytic_v_oracle(Family::ProductHistory, FRAC_PI_4, Some(FRAC_PI_4)).unwrap();
        assert!((v - 9.0 / 256.0).abs() < 1e-15);
        let v = analytic_v_oracle(Family::ProductHistory, 0.0, Some(0.0)).unwrap();
        assert!((v - 5.0 / 64.0).abs() < 1e-15);
        let v = analytic_v_oracle(Family::EntangledZz, 0.0, None).unwrap();
        assert!((v - 3.0 / 128.0).abs() < 1e-15);

        assert!(analytic_v_oracle(Family::ProductHistory, 0.0, None).is_err());
    }

    #[test]
    fn quadrature_is_exact_above_harmonic_cutoff() {
        let g16 = QuadratureGrid::new(16).unwrap();
        let g24 = QuadratureGrid::new(24).unwrap();
        let scenarios = [
            initial_scenario(0.77, 1.3),
            product_scenario(0.4, 2.1, 0.9, 0.3),
            entangled_scenario(),
        ];
        for s in &scenarios {
            let coarse = v_functional(s, &g16).unwrap();
            let fine = v_functional(s, &g24).unwrap();
            assert!((coarse - fine).abs() < 1e-12, "{coarse} vs {fine}");
            let coarse = m_functional(s, &g16).unwrap();
            let fine = m_functional(s, &g24).unwrap();
            assert!((coarse - fine).abs() < 1e-12, "{coarse} vs {fine}");
        }
    }

    #[test]
    fn v_is_independent_of_azimuthal_angles() {
        let grid = QuadratureGrid::default16();
        let theta = 0.63;
        let v0 = v_functional(&initial_scenario(theta, 0.0), &grid).unwrap();
        let v1 = v_functional(&initial_scenario(theta, 2.5), &grid).unwrap();
        assert!((v0 - v1).abs() < 1e-12);
    }

    #[test]
    fn family_ranges_nest_and_contain_samples() {
        let (ilo, ihi) = v_bounds(Family::EvolvedInitial).unwrap();
        let (plo, phi) = v_bounds(Family::ProductHistory).unwrap();
        assert!(plo < ilo && ihi < phi);

        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(97);
        for _ in 0..1000 {
            let v = analytic_v_oracle(
                Family::EvolvedInitial,
                rng.gen_range(0.0..2.0 * PI),
                None,
            )
            .unwrap();
            assert!(v >= ilo - 1e-10 && v <= ihi + 1e-10);
            let v = analytic_v_oracle(
                Family::ProductHistory,
                rng.gen_range(0.0..2.0 * PI),
                Some(rng.gen_range(0.0..2.0 * PI)),
            )
            .unwrap();
            assert!(v >= plo - 1e-10 && v <= phi + 1e-10);
        }

        assert!(v_bounds(Family::EntangledZz).is_err());
    }

    #[test]
    fn classifier_verdicts() {
        assert_eq!(
            classify(3.0 / 128.0, 1e-9).unwrap(),
            VClassification::NecessarilyEntangled(Side::Below)
        );
        assert_eq!(classify(0.05, 1e-9).unwrap(), VClassification::NotFlagged);
        assert_eq!(
            classify(0.09, 1e-9).unwrap(),
            VClassification::NecessarilyEntangled(Side::Above)
        );
        assert!(classify(-0.1, 1e-9).is_err());
        assert!(classify(0.05, -1.0).is_err());
    }

    #[test]
    fn monte_carlo_brackets_quadrature_value() {
        let grid = QuadratureGrid::default16();
        let s = entangled_scenario();
        let exact_v = v_functional(&s, &grid).unwrap();
        let exact_m = m_functional(&s, &grid).unwrap();
        let (m, v) = monte_carlo_functionals(&s, 200_000, 42).unwrap();
        assert!((m.mean - exact_m).abs() <= 3.0 * m.std_error);
        assert!((v.mean - exact_v).abs() <= 3.0 * v.std_error);
        assert!(m.std_error > 0.0 && v.std_error > 0.0);
    }

    #[test]
    fn witnesses_reject_nontrivial_evolution() {
        let x = Unitary::new(
            2,
            vec![
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let s = Scenario::evolved_initial(Ket::z_plus(), x).unwrap();
        assert!(m_functional(&s, &QuadratureGrid::default16()).is_err());
        assert!(v_functional(&s, &QuadratureGrid::default16()).is_err());
    }

    #[test]
    fn grid_rejects_fewer_than_four_points() {
        assert!(QuadratureGrid::new(3).is_err());
        assert!(QuadratureGrid::new(4).is_ok());
    }
}
