//! Periodic one-dimensional grid and the FFT plumbing shared by every
//! Fourier-multiplier routine in the crate.
//!
//! Coordinates span `[-lx, lx)` with `n` points. Wavenumbers follow the usual
//! FFT ordering. The Nyquist mode is kept for even symbols and zeroed for odd
//! ones (first derivatives), which keeps real fields real.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Grid {
    n: usize,
    lx: f64,
    h: f64,
    x: Vec<f64>,
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("lx", &self.lx).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.lx == other.lx
    }
}

impl Grid {
    pub fn new(n: usize, lx: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("N = {n} is not a power of two >= 4")));
        }
        if !(lx.is_finite() && lx > 0.0) {
            return Err(Error::InvalidGrid(format!("half-extent {lx} must be positive")));
        }
        let h = 2.0 * lx / n as f64;
        let x = (0..n).map(|j| -lx + j as f64 * h).collect();
        let dk = PI / lx;
        let k = (0..n)
            .map(|j| if j < n / 2 { j as f64 * dk } else { (j as f64 - n as f64) * dk })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            lx,
            h,
            x,
            k,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn k_nyquist(&self) -> f64 {
        PI / self.h
    }

    /// Length of the periodic box.
    pub fn measure(&self) -> f64 {
        2.0 * self.lx
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Maps a coordinate into the fundamental cell `[-lx, lx)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let period = 2.0 * self.lx;
        (x + self.lx).rem_euclid(period) - self.lx
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.x.iter().map(|&x| f(x)).collect()
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    /// Inverse DFT in place, normalized so that `inverse(forward(f)) == f`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        let s = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= s;
        }
    }

    pub fn spectrum_of(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn real_from_spectrum(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Applies a real, even Fourier symbol to a real field.
    pub fn apply_symbol(&self, f: &[f64], symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut buf = self.spectrum_of(f);
        for (z, &k) in buf.iter_mut().zip(&self.k) {
            *z *= symbol(k);
        }
        self.real_from_spectrum(buf)
    }

    /// Applies a complex symbol to a complex field.
    pub fn apply_symbol_complex(&self, f: &[Complex64], symbol: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        for (z, &k) in buf.iter_mut().zip(&self.k) {
            *z *= symbol(k);
        }
        self.inverse(&mut buf);
        buf
    }

    /// Applies the 2x2 real even symbol `[[a, b], [c, d]]` to a pair of real
    /// fields with a single forward and a single inverse transform.
    pub fn apply_matrix_symbol(
        &self,
        f: &[f64],
        g: &[f64],
        symbol: impl Fn(f64) -> [f64; 4],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut w: Vec<Complex64> = f.iter().zip(g).map(|(&a, &b)| Complex64::new(a, b)).collect();
        self.forward(&mut w);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            let jm = (n - j) % n;
            let wj = w[j];
            let wm = w[jm].conj();
            let ff = (wj + wm) * 0.5;
            let gg = (wj - wm) * Complex64::new(0.0, -0.5);
            let [a, b, c, d] = symbol(self.k[j]);
            let r1 = ff * a + gg * b;
            let r2 = ff * c + gg * d;
            out[j] = r1 + Complex64::new(0.0, 1.0) * r2;
        }
        self.inverse(&mut out);
        (out.iter().map(|z| z.re).collect(), out.iter().map(|z| z.im).collect())
    }

    /// Spectral first derivative with the Nyquist mode removed.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let mut buf = self.spectrum_of(f);
        let ny = self.nyquist_index();
        for (j, (z, &k)) in buf.iter_mut().zip(&self.k).enumerate() {
            *z *= if j == ny { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k) };
        }
        self.real_from_spectrum(buf)
    }

    pub fn derivative_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        let ny = self.nyquist_index();
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        for (j, (z, &k)) in buf.iter_mut().zip(&self.k).enumerate() {
            *z *= if j == ny { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k) };
        }
        self.inverse(&mut buf);
        buf
    }

    pub fn second_derivative(&self, f: &[f64]) -> Vec<f64> {
        self.apply_symbol(f, |k| -k * k)
    }

    /// Riemann-sum inner product `h * sum(a * b)`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm_l2(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }

    pub fn norm_l2_complex(&self, a: &[Complex64]) -> f64 {
        (self.h * a.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Evaluates the trigonometric interpolant of `f` at arbitrary points.
    ///
    /// The Nyquist coefficient is split evenly between `+k` and `-k`, so the
    /// interpolant of a real field is real. Cost is O(n) per point.
    pub fn interpolate(&self, f: &[f64], points: &[f64]) -> Vec<f64> {
        let coef = self.interp_coefficients(f);
        points.iter().map(|&p| self.eval_coefficients(&coef, p, false)).collect()
    }

    /// Derivative of the trigonometric interpolant at arbitrary points.
    pub fn interpolate_derivative(&self, f: &[f64], points: &[f64]) -> Vec<f64> {
        let coef = self.interp_coefficients(f);
        points.iter().map(|&p| self.eval_coefficients(&coef, p, true)).collect()
    }

    fn interp_coefficients(&self, f: &[f64]) -> Vec<Complex64> {
        let mut c = self.spectrum_of(f);
        let s = 1.0 / self.n as f64;
        for z in c.iter_mut() {
            *z *= s;
        }
        c
    }

    fn eval_coefficients(&self, c: &[Complex64], p: f64, deriv: bool) -> f64 {
        let ny = self.nyquist_index();
        // Phases are taken relative to the left edge, where the DFT index starts.
        let xi = p + self.lx;
        let dk = PI / self.lx;
        let step = Complex64::from_polar(1.0, dk * xi);
        let mut acc = 0.0;
        let mut ph = Complex64::new(1.0, 0.0);
        for j in 0..ny {
            let k = j as f64 * dk;
            let term = c[j] * ph;
            if j == 0 {
                if !deriv {
                    acc += term.re;
                }
            } else {
                // Pair j with n - j: together they give 2 Re(c_j e^{ikx}).
                if deriv {
                    acc += 2.0 * (Complex64::new(0.0, k) * term).re;
                } else {
                    acc += 2.0 * term.re;
                }
            }
            ph *= step;
        }
        let kn = ny as f64 * dk;
        let cn = c[ny];
        if deriv {
            acc += -(cn.re) * kn * (kn * xi).sin();
        } else {
            acc += cn.re * (kn * xi).cos();
        }
        acc
    }
}
