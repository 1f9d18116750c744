//! Independent 1D stratified-atmosphere solver.
//!
//! For a horizontally homogeneous grey atmosphere the angular-averaged
//! transport reduces to a one-dimensional integral equation in optical
//! depth, with the boundary source entering through the third exponential
//! integral and the volume exchange through the first. This module solves
//! that equation by the same monotone source iteration as the 3D code and
//! doubles as the ground truth for the 3D validation runs.

use thiserror::Error;

use crate::spectral::SIGMA;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral E_n(x) = ∫₁^∞ e^{−xt} t^{−n} dt for n ≥ 1, x ≥ 0.
///
/// E₁(0) is +∞ and is returned as such; negative arguments are a domain
/// error and panic. Series expansion below x = 1, continued fraction above,
/// both driven to ~1e−14 relative accuracy.
pub fn expint(n: u32, x: f64) -> f64 {
    assert!(n >= 1, "expint order must be >= 1");
    assert!(x >= 0.0, "expint domain error: x = {x} < 0");
    if x == 0.0 {
        return if n == 1 {
            f64::INFINITY
        } else {
            1.0 / (n as f64 - 1.0)
        };
    }
    if x > 700.0 {
        return 0.0;
    }
    if x <= 1.0 {
        expint_series(n, x)
    } else {
        expint_continued_fraction(n, x)
    }
}

fn expint_series(n: u32, x: f64) -> f64 {
    let nm1 = n as i32 - 1;
    // psi(n) = -gamma + sum_{m=1}^{n-1} 1/m
    let mut psi = -EULER_GAMMA;
    for m in 1..n {
        psi += 1.0 / m as f64;
    }
    let mut sum = if nm1 == 0 {
        -x.ln() + psi
    } else {
        // leading term (-x)^{n-1}/(n-1)! * (-ln x + psi)
        let mut fact = 1.0;
        for m in 1..=nm1 {
            fact *= m as f64;
        }
        (-x).powi(nm1) / fact * (-x.ln() + psi)
    };
    let mut term = 1.0; // (-x)^m / m!
    for m in 0..200 {
        if m > 0 {
            term *= -x / m as f64;
        }
        if m as i32 != nm1 {
            let contrib = -term / (m as f64 - nm1 as f64);
            sum += contrib;
            if m as i32 > nm1 && contrib.abs() < 1e-16 * sum.abs().max(1e-300) {
                break;
            }
        }
    }
    sum
}

fn expint_continued_fraction(n: u32, x: f64) -> f64 {
    // Modified Lentz evaluation of e^{-x} * 1/(x+n - 1*n/(x+n+2 - 2(n+1)/(x+n+4 - ...)))
    const FPMIN: f64 = 1e-300;
    let nf = n as f64;
    let mut b = x + nf;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=400 {
        let a = -(i as f64) * (nf - 1.0 + i as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h * (-x).exp()
}

#[derive(Debug, Error)]
pub enum SlabError {
    #[error("absorption profile must stay positive on [0, H]; found {value} at x = {x}")]
    NonPositiveKappa { x: f64, value: f64 },
    #[error("slab grid must be strictly increasing from 0 to H")]
    BadGrid,
    #[error("angular oracle requires a constant absorption profile")]
    OracleNeedsConstantKappa,
}

/// Vertical absorption profile of the slab.
#[derive(Debug, Clone, Copy)]
pub enum KappaProfile {
    Constant(f64),
    /// κ(x) = base + slope·x.
    AffineX { base: f64, slope: f64 },
}

impl KappaProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            KappaProfile::Constant(k) => k,
            KappaProfile::AffineX { base, slope } => base + slope * x,
        }
    }

    /// Optical depth τ(x) = ∫₀ˣ κ.
    pub fn optical_depth(&self, x: f64) -> f64 {
        match *self {
            KappaProfile::Constant(k) => k * x,
            KappaProfile::AffineX { base, slope } => base * x + 0.5 * slope * x * x,
        }
    }
}

/// Grey slab problem: height, absorption profile, and the ground source
/// parameters (Q⁰, T_s) of the Lambertian re-emission boundary condition.
#[derive(Debug, Clone)]
pub struct SlabProblem {
    pub height: f64,
    pub kappa: KappaProfile,
    pub q0: f64,
    pub t_sun: f64,
    pub grid: Vec<f64>,
}

/// Converged slab fields on the problem grid.
#[derive(Debug, Clone)]
pub struct SlabSolution {
    pub x: Vec<f64>,
    pub temperature: Vec<f64>,
    pub mean_intensity: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SlabProblem {
    /// Problem on a uniform grid of `n` intervals over [0, height].
    pub fn with_uniform_grid(
        height: f64,
        n: usize,
        kappa: KappaProfile,
        q0: f64,
        t_sun: f64,
    ) -> Result<Self, SlabError> {
        let grid = (0..=n).map(|i| height * i as f64 / n as f64).collect();
        Self::new(height, kappa, q0, t_sun, grid)
    }

    pub fn new(
        height: f64,
        kappa: KappaProfile,
        q0: f64,
        t_sun: f64,
        grid: Vec<f64>,
    ) -> Result<Self, SlabError> {
        if grid.len() < 2
            || grid[0] != 0.0
            || (grid[grid.len() - 1] - height).abs() > 1e-12 * height.max(1.0)
            || grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(SlabError::BadGrid);
        }
        for &x in &grid {
            let k = kappa.eval(x);
            if !(k > 0.0) {
                return Err(SlabError::NonPositiveKappa { x, value: k });
            }
        }
        Ok(Self {
            height,
            kappa,
            q0,
            t_sun,
            grid,
        })
    }

    fn tau_grid(&self) -> Vec<f64> {
        self.grid.iter().map(|&x| self.kappa.optical_depth(x)).collect()
    }

    /// Ground source profile S̄ᴱ(x) = (Q⁰ σ T_s⁴ / 2) E₃(τ(x)).
    pub fn slab_source(&self) -> Vec<f64> {
        let amp = 0.5 * self.q0 * SIGMA * self.t_sun.powi(4);
        self.grid
            .iter()
            .map(|&x| amp * expint(3, self.kappa.optical_depth(x)))
            .collect()
    }

    /// Kernel weight matrix W of the volume exchange term in optical depth:
    /// row m holds the coefficients of (1/2)∫₀^{τ_H} u(τ′) E₁(|τ_m − τ′|) dτ′
    /// for piecewise-linear u. The E₁ log singularity is integrated
    /// analytically against the linear pieces via ∫E₁ = −E₂ and
    /// ∫ s E₁(s) ds = −sE₂(s) − E₃(s).
    fn kernel_matrix(&self, tau: &[f64]) -> Vec<Vec<f64>> {
        let m = tau.len();
        let mut w = vec![vec![0.0; m]; m];
        for i in 0..m {
            let ti = tau[i];
            for seg in 0..m - 1 {
                let (ta, tb) = (tau[seg], tau[seg + 1]);
                let h = tb - ta;
                if h <= 0.0 {
                    continue;
                }
                // signed distances from the target; intervals never straddle
                // a node because targets are grid nodes
                let (sa, sb, wa_goes_to) = if ta >= ti {
                    (ta - ti, tb - ti, seg)
                } else {
                    (ti - tb, ti - ta, seg + 1)
                };
                let m0 = expint(2, sa) - expint(2, sb);
                let m1 = (sa * expint(2, sa) + expint(3, sa))
                    - (sb * expint(2, sb) + expint(3, sb));
                // u(s) = u_near (sb - s)/h + u_far (s - sa)/h, where u_near is
                // the grid value nearer the target
                let near_coeff = (sb * m0 - m1) / h;
                let far_coeff = (m1 - sa * m0) / h;
                let (near_idx, far_idx) = if wa_goes_to == seg {
                    (seg, seg + 1)
                } else {
                    (seg + 1, seg)
                };
                w[i][near_idx] += 0.5 * near_coeff;
                w[i][far_idx] += 0.5 * far_coeff;
            }
        }
        w
    }

    /// Monotone source iteration on u = σT⁴: u ← S̄ᴱ + W u from u = 0.
    /// After convergence σT⁴(x) = J(x) holds by construction.
    pub fn solve(&self, tol: f64, max_iters: usize) -> SlabSolution {
        let tau = self.tau_grid();
        let w = self.kernel_matrix(&tau);
        let se = self.slab_source();
        let m = tau.len();
        let mut u = vec![0.0; m];
        let mut t = vec![0.0; m];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iters {
            iterations += 1;
            let mut residual: f64 = 0.0;
            let mut u_next = se.clone();
            for i in 0..m {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += w[i][j] * u[j];
                }
                u_next[i] += acc;
            }
            for i in 0..m {
                let t_new = (u_next[i] / SIGMA).max(0.0).powf(0.25);
                residual = residual.max((t_new - t[i]).abs());
                t[i] = t_new;
            }
            u = u_next;
            if residual < tol {
                converged = true;
                break;
            }
        }
        SlabSolution {
            x: self.grid.clone(),
            temperature: t,
            mean_intensity: u,
            iterations,
            converged,
        }
    }

    /// Brute-force angular oracle: solves the same slab by discrete
    /// ordinates with `n_mu` Gauss-Legendre directions per hemisphere and
    /// explicit integrating factors on each grid interval. No exponential
    /// integrals are involved, so this is an independent check of the
    /// E-kernel algebra (including its 1/2 front factor).
    pub fn angular_oracle(&self, n_mu: usize, tol: f64, max_iters: usize) -> Result<Vec<f64>, SlabError> {
        let kappa = match self.kappa {
            KappaProfile::Constant(k) => k,
            _ => return Err(SlabError::OracleNeedsConstantKappa),
        };
        let tau: Vec<f64> = self.grid.iter().map(|&x| kappa * x).collect();
        let m = tau.len();
        let (mu, wmu) = gauss_legendre_01(n_mu);
        let ground = self.q0 * SIGMA * self.t_sun.powi(4);

        let sweep = |u: &[f64]| -> Vec<f64> {
            let mut j = vec![0.0; m];
            for (g, (&mug, &wg)) in mu.iter().zip(&wmu).enumerate() {
                let _ = g;
                // upward intensities, BC I(0, mu) = mu * ground
                let mut i_up = mug * ground;
                j[0] += 0.5 * wg * i_up;
                for seg in 0..m - 1 {
                    let (ta, tb) = (tau[seg], tau[seg + 1]);
                    let h = tb - ta;
                    let (ua, ub) = (u[seg], u[seg + 1]);
                    let beta = (ub - ua) / h;
                    let alpha = ua - beta * ta;
                    // ∫_ta^tb u(τ') e^{-(tb-τ')/µ} dτ'/µ  for linear u
                    let e = (-h / mug).exp();
                    let src = (alpha + beta * tb - beta * mug) - e * (alpha + beta * ta - beta * mug);
                    i_up = i_up * e + src;
                    j[seg + 1] += 0.5 * wg * i_up;
                }
                // downward intensities, BC I(H, -mu) = 0
                let mut i_dn = 0.0;
                j[m - 1] += 0.5 * wg * i_dn;
                for seg in (0..m - 1).rev() {
                    let (ta, tb) = (tau[seg], tau[seg + 1]);
                    let h = tb - ta;
                    let (ua, ub) = (u[seg], u[seg + 1]);
                    let beta = (ub - ua) / h;
                    let alpha = ua - beta * ta;
                    // ∫_ta^tb u(τ') e^{-(τ'-ta)/µ} dτ'/µ
                    let e = (-h / mug).exp();
                    let src = (alpha + beta * ta + beta * mug) - e * (alpha + beta * tb + beta * mug);
                    i_dn = i_dn * e + src;
                    j[seg] += 0.5 * wg * i_dn;
                }
            }
            j
        };

        let mut u = vec![0.0; m];
        for _ in 0..max_iters {
            let j = sweep(&u);
            let mut delta: f64 = 0.0;
            for i in 0..m {
                delta = delta.max((j[i] - u[i]).abs());
            }
            u = j;
            if delta < tol {
                break;
            }
        }
        Ok(u)
    }
}

/// Gauss-Legendre nodes and weights on (0, 1).
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        // Newton iteration on P_n from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = nf * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        nodes[i] = x;
        weights[i] = w;
        nodes[n - 1 - i] = -x;
        weights[n - 1 - i] = w;
    }
    // map [-1, 1] -> (0, 1)
    for i in 0..n {
        nodes[i] = 0.5 * (nodes[i] + 1.0);
        weights[i] *= 0.5;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth > 50 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, left, tol / 2.0, depth + 1) + rec(f, m, b, right, tol / 2.0, depth + 1)
            }
        }
        rec(f, a, b, simpson(f, a, b), tol, 0)
    }

    /// Oracle: E_n(x) by adaptive quadrature of the defining integral.
    /// For n ≥ 2 the substitution t = 1/s maps it to a finite interval,
    /// ∫₁^∞ e^{-xt}/tⁿ dt = ∫₀^1 e^{-x/s} s^{n-2} ds; for n = 1 the
    /// substitution v = xt gives ∫_x^∞ e^{-v}/v dv, integrated in w = ln v
    /// so the range stays modest for tiny x.
    fn expint_oracle(n: u32, x: f64) -> f64 {
        assert!(n >= 1);
        // the integrand peaks at ~e^{-x}, so scale the absolute tolerance
        let tol = 1e-13 * (-x).exp();
        if n >= 2 {
            adaptive_simpson(
                &|s| {
                    if s <= 0.0 {
                        0.0
                    } else {
                        (-x / s).exp() * s.powi(n as i32 - 2)
                    }
                },
                0.0,
                1.0,
                tol,
            )
        } else {
            adaptive_simpson(&|w: f64| (-w.exp()).exp(), x.ln(), 45.0f64.ln(), tol)
        }
    }

    #[test]
    fn expint_special_values() {
        assert_relative_eq!(expint(3, 0.0), 0.5);
        assert_relative_eq!(expint(2, 0.0), 1.0);
        assert!(expint(1, 0.0).is_infinite());
        // E1(1) reference value via the defining integral
        assert_relative_eq!(expint(1, 1.0), 0.21938393439552062, max_relative = 1e-12);
    }

    #[test]
    fn expint_matches_quadrature_oracle() {
        for &x in &[1e-6, 1e-3, 0.1, 0.5, 0.999, 1.0, 1.001, 2.0, 5.0, 10.0, 20.0] {
            for n in 1..=3 {
                let reference = expint_oracle(n, x);
                assert_relative_eq!(expint(n, x), reference, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn expint_recurrence() {
        // E_{n+1}(x) = (e^{-x} - x E_n(x)) / n
        for &x in &[1e-5, 0.01, 0.3, 1.0, 4.0, 12.0, 20.0] {
            for n in 1..=2u32 {
                let lhs = expint(n + 1, x);
                let rhs = ((-x).exp() - x * expint(n, x)) / n as f64;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn expint_derivative_identity() {
        // E3'(x) = -E2(x) by central differences
        for &x in &[0.1f64, 1.0, 5.0] {
            let h = 1e-6 * x.max(1.0);
            let fd = (expint(3, x + h) - expint(3, x - h)) / (2.0 * h);
            assert_relative_eq!(fd, -expint(2, x), max_relative = 1e-7);
        }
    }

    #[test]
    #[should_panic(expected = "domain error")]
    fn expint_negative_argument_panics() {
        expint(1, -0.5);
    }

    #[test]
    fn slab_source_values() {
        let p = SlabProblem::with_uniform_grid(1.0, 10, KappaProfile::Constant(0.5), 2e-5, 1.02)
            .unwrap();
        let se = p.slab_source();
        // x = 0: E3(0) = 1/2 so SE = Q0 σ Ts⁴ / 4
        assert_relative_eq!(se[0], 2e-5 * SIGMA * 1.02f64.powi(4) / 4.0, max_relative = 1e-12);
        // x = 1
        assert_relative_eq!(
            se[10],
            0.5 * 2e-5 * SIGMA * 1.02f64.powi(4) * expint(3, 0.5),
            max_relative = 1e-12
        );
    }

    #[test]
    fn variable_kappa_uses_optical_depth() {
        let k = KappaProfile::AffineX { base: 0.5, slope: -0.25 };
        // τ(x) = 0.5(x - x²/4)
        assert_relative_eq!(k.optical_depth(1.0), 0.5 * (1.0 - 0.25));
        let p = SlabProblem::with_uniform_grid(1.0, 4, k, 2e-5, 1.02).unwrap();
        let se = p.slab_source();
        let amp = 0.5 * 2e-5 * SIGMA * 1.02f64.powi(4);
        assert_relative_eq!(se[4], amp * expint(3, 0.375), max_relative = 1e-12);
    }

    #[test]
    fn dark_boundary_stays_cold() {
        let p = SlabProblem::with_uniform_grid(1.0, 32, KappaProfile::Constant(0.5), 0.0, 1.02)
            .unwrap();
        let sol = p.solve(1e-13, 200);
        assert!(sol.converged);
        assert!(sol.temperature.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn grey_fixed_point_satisfies_stefan_balance() {
        let p = SlabProblem::with_uniform_grid(1.0, 200, KappaProfile::Constant(0.5), 2e-5, 1.02)
            .unwrap();
        let sol = p.solve(1e-12, 500);
        assert!(sol.converged);
        for i in 0..sol.x.len() {
            assert_relative_eq!(
                SIGMA * sol.temperature[i].powi(4),
                sol.mean_intensity[i],
                max_relative = 1e-10
            );
        }
        // decreasing with altitude above the thin boundary layer near the
        // ground (the half-sided volume exchange puts a ~0.02% bump there)
        let start = sol.x.iter().position(|&x| x >= 0.1).unwrap();
        for w in sol.temperature[start..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(sol.temperature[0] > 0.9 * sol.temperature[start]);
    }

    #[test]
    fn kernel_rows_match_closed_form() {
        // (1/2)∫₀^{τH} E₁(|τm − τ'|)dτ' = 1 − (E₂(τm) + E₂(τH − τm))/2,
        // so applying the kernel matrix to the constant 1 is known exactly.
        let p = SlabProblem::with_uniform_grid(1.0, 37, KappaProfile::Constant(0.5), 2e-5, 1.02)
            .unwrap();
        let tau: Vec<f64> = p.grid.iter().map(|&x| 0.5 * x).collect();
        let w = p.kernel_matrix(&tau);
        let tau_h = tau[tau.len() - 1];
        for (m, row) in w.iter().enumerate() {
            let got: f64 = row.iter().sum();
            let want = 1.0 - 0.5 * (expint(2, tau[m]) + expint(2, tau_h - tau[m]));
            assert_relative_eq!(got, want, max_relative = 1e-11);
        }
    }

    #[test]
    fn richardson_self_consistency() {
        let coarse =
            SlabProblem::with_uniform_grid(1.0, 400, KappaProfile::Constant(0.5), 2e-5, 1.02)
                .unwrap()
                .solve(1e-13, 500);
        let fine =
            SlabProblem::with_uniform_grid(1.0, 800, KappaProfile::Constant(0.5), 2e-5, 1.02)
                .unwrap()
                .solve(1e-13, 500);
        // mid-slab nodes coincide at even indices of the fine grid
        let tc = coarse.temperature[200];
        let tf = fine.temperature[400];
        assert!(
            (tc - tf).abs() / tf < 1e-4,
            "grid doubling changed mid-slab T by {}",
            (tc - tf).abs() / tf
        );
    }

    #[test]
    fn angular_oracle_agrees_with_e_kernel() {
        let p = SlabProblem::with_uniform_grid(1.0, 160, KappaProfile::Constant(0.5), 2e-5, 1.02)
            .unwrap();
        let sol = p.solve(1e-13, 500);
        let j_oracle = p.angular_oracle(64, 1e-13, 500).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..sol.x.len() {
            let rel = (sol.mean_intensity[i] - j_oracle[i]).abs() / j_oracle[i];
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "E-kernel vs angular oracle gap {worst}");
    }

    #[test]
    fn single_direction_transport_sanity() {
        // µ = 1 ray with constant source S: I(x) = S (1 - e^{-κx})
        let kappa = 0.7;
        let s = 2.5;
        let n = 50;
        let tau: Vec<f64> = (0..=n).map(|i| kappa * i as f64 / n as f64).collect();
        let mut i_up = 0.0;
        for seg in 0..n {
            let h = tau[seg + 1] - tau[seg];
            let e = (-h / 1.0f64).exp();
            // constant source: closed form of the interval update
            i_up = i_up * e + s * (1.0 - e);
        }
        assert_relative_eq!(i_up, s * (1.0 - (-kappa).exp()), max_relative = 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_01(8);
        let q: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(7)).sum();
        assert_relative_eq!(q, 1.0 / 8.0, max_relative = 1e-13);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-14);
    }
}
