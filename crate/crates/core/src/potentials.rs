//! Potential families and Lorentz boosts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// `γ = 1/√(1 − |β|²)`.
pub fn lorentz_gamma(beta: &[f64]) -> Result<f64> {
    let b2: f64 = beta.iter().map(|b| b * b).sum();
    if !b2.is_finite() || b2 >= 1.0 {
        return Err(Error::Superluminal(b2.sqrt()));
    }
    Ok(1.0 / ((1.0 - b2.sqrt()) * (1.0 + b2.sqrt())).sqrt())
}

pub fn gamma1(beta: f64) -> Result<f64> {
    lorentz_gamma(&[beta])
}

/// `Λ_β x = x + (γ − 1)(β·x) β/|β|²`.
pub fn boost_point(x: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let g = lorentz_gamma(beta)?;
    let b2: f64 = beta.iter().map(|b| b * b).sum();
    if b2 == 0.0 {
        return Ok(x.to_vec());
    }
    let bx: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    Ok(x.iter().zip(beta).map(|(xi, bi)| xi + (g - 1.0) * bx * bi / b2).collect())
}

/// Samples `f(γ x)` on a one-dimensional grid.
pub fn boost_function(grid: &Grid, f: impl Fn(f64) -> f64, beta: f64) -> Result<Vec<f64>> {
    let g = gamma1(beta)?;
    Ok(grid.sample(|x| f(g * x)))
}

/// Boosts a sampled field by band-limited interpolation. Points mapped
/// outside the box are treated as lying in the field's (vanishing) tail.
pub fn boost_field(grid: &Grid, f: &[f64], beta: f64) -> Result<Vec<f64>> {
    let g = gamma1(beta)?;
    let pts: Vec<f64> = grid.x().iter().map(|&x| g * x).collect();
    let inside: Vec<f64> = pts.iter().copied().filter(|p| p.abs() < grid.lx()).collect();
    let vals = grid.interpolate(f, &inside);
    let mut it = vals.into_iter();
    Ok(pts.iter().map(|p| if p.abs() < grid.lx() { it.next().unwrap_or(0.0) } else { 0.0 }).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `V(x) = −depth · sech²(x/width)`
    PoeschlTeller { depth: f64, width: f64 },
    /// `V(x) = −depth · exp(−(x/width)²)`
    Gaussian { depth: f64, width: f64 },
    /// Uniform samples on `[x0, x0 + dx·(len−1)]`, zero outside, evaluated by
    /// Catmull–Rom cubics. `decay_rate` is the user's claim about the tail.
    Tabulated { x0: f64, dx: f64, values: Vec<f64>, decay_rate: f64 },
}

impl PotentialSpec {
    pub fn poeschl_teller(depth: f64, width: f64) -> Self {
        PotentialSpec::PoeschlTeller { depth, width }
    }

    /// Pöschl–Teller well whose scalar operator `−∂² + V` has levels
    /// `−(s − n)²/w²`, with `depth = s(s+1)/w²`.
    pub fn poeschl_teller_levels(s: f64, width: f64) -> Self {
        PotentialSpec::PoeschlTeller { depth: s * (s + 1.0) / (width * width), width }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            PotentialSpec::PoeschlTeller { depth, width } | PotentialSpec::Gaussian { depth, width } => {
                depth.is_finite() && width.is_finite() && *width > 0.0
            }
            PotentialSpec::Tabulated { dx, values, decay_rate, x0 } => {
                *dx > 0.0 && values.len() >= 4 && values.iter().all(|v| v.is_finite()) && x0.is_finite() && *decay_rate > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad potential {self:?}")))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::PoeschlTeller { depth, width } => {
                let s = 1.0 / (x / width).cosh();
                -depth * s * s
            }
            PotentialSpec::Gaussian { depth, width } => -depth * (-(x / width).powi(2)).exp(),
            PotentialSpec::Tabulated { x0, dx, values, .. } => catmull_rom(*x0, *dx, values, x).0,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::PoeschlTeller { depth, width } => {
                let s = 1.0 / (x / width).cosh();
                2.0 * depth / width * s * s * (x / width).tanh()
            }
            PotentialSpec::Gaussian { depth, width } => {
                2.0 * depth * x / (width * width) * (-(x / width).powi(2)).exp()
            }
            PotentialSpec::Tabulated { x0, dx, values, .. } => catmull_rom(*x0, *dx, values, x).1,
        }
    }

    /// Boosted potential `V_β(x) = V(γx)` in one dimension.
    pub fn eval_boosted(&self, x: f64, gamma: f64) -> f64 {
        self.eval(gamma * x)
    }

    /// `∂_β V_β(x) = V′(γx) · x · βγ³`.
    pub fn d_beta(&self, x: f64, beta: f64) -> Result<f64> {
        let g = gamma1(beta)?;
        Ok(self.derivative(g * x) * x * beta * g * g * g)
    }

    /// Exponential decay rate of the tail (infinite for Gaussians).
    pub fn decay_rate(&self) -> f64 {
        match self {
            PotentialSpec::PoeschlTeller { width, .. } => 2.0 / width,
            PotentialSpec::Gaussian { .. } => f64::INFINITY,
            PotentialSpec::Tabulated { decay_rate, .. } => *decay_rate,
        }
    }

    /// Characteristic width used for resolution and box-size checks.
    pub fn width(&self) -> f64 {
        match self {
            PotentialSpec::PoeschlTeller { width, .. } | PotentialSpec::Gaussian { width, .. } => *width,
            PotentialSpec::Tabulated { decay_rate, .. } => 1.0 / decay_rate,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PotentialSpec::PoeschlTeller { depth, .. } | PotentialSpec::Gaussian { depth, .. } => *depth == 0.0,
            PotentialSpec::Tabulated { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Samples `V_β(x − centre)` on the grid using the periodic distance.
    pub fn sample(&self, grid: &Grid, beta: f64, centre: f64) -> Result<Vec<f64>> {
        let g = gamma1(beta)?;
        Ok(grid.sample(|x| self.eval(g * grid.wrap(x - centre))))
    }

    /// Fits the decay rate of `|V|` on `[a, b]` by least squares in log scale.
    pub fn fitted_decay_rate(&self, a: f64, b: f64) -> f64 {
        let m = 200;
        let pts: Vec<(f64, f64)> = (0..=m)
            .map(|i| a + (b - a) * i as f64 / m as f64)
            .filter_map(|x| {
                let v = self.eval(x).abs();
                (v > 0.0).then(|| (x, v.ln()))
            })
            .collect();
        -linear_fit(&pts).1
    }
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

/// Catmull–Rom value and derivative on uniform samples, zero outside.
fn catmull_rom(x0: f64, dx: f64, v: &[f64], x: f64) -> (f64, f64) {
    let s = (x - x0) / dx;
    let n = v.len();
    if s < 0.0 || s > (n - 1) as f64 {
        return (0.0, 0.0);
    }
    let i = (s.floor() as usize).min(n - 2);
    let t = s - i as f64;
    let at = |j: isize| -> f64 {
        if j < 0 || j as usize >= n {
            0.0
        } else {
            v[j as usize]
        }
    };
    let i = i as isize;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let m1 = 0.5 * (p2 - p0);
    let m2 = 0.5 * (p3 - p1);
    let t2 = t * t;
    let t3 = t2 * t;
    let val = (2.0 * t3 - 3.0 * t2 + 1.0) * p1 + (t3 - 2.0 * t2 + t) * m1 + (-2.0 * t3 + 3.0 * t2) * p2 + (t3 - t2) * m2;
    let der = (6.0 * t2 - 6.0 * t) * p1 + (3.0 * t2 - 4.0 * t + 1.0) * m1 + (-6.0 * t2 + 6.0 * t) * p2 + (3.0 * t2 - 2.0 * t) * m2;
    (val, der / dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_basics() {
        assert_eq!(lorentz_gamma(&[0.0]).unwrap(), 1.0);
        assert!((lorentz_gamma(&[0.6]).unwrap() - 1.25).abs() < 1e-15);
        assert!(lorentz_gamma(&[1.0]).is_err());
        assert!(lorentz_gamma(&[0.8, 0.7]).is_err());
    }

    #[test]
    fn boost_acts_along_velocity_only() {
        let g = lorentz_gamma(&[0.5, 0.0, 0.0]).unwrap();
        let p = boost_point(&[1.0, 1.0, 0.0], &[0.5, 0.0, 0.0]).unwrap();
        assert!((p[0] - g).abs() < 1e-15);
        assert_eq!(p[1], 1.0);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn tabulated_reproduces_samples() {
        let v: Vec<f64> = (0..41).map(|i| -((i as f64 - 20.0) * 0.25).powi(2)).collect();
        let p = PotentialSpec::Tabulated { x0: -5.0, dx: 0.25, values: v.clone(), decay_rate: 1.0 };
        assert!((p.eval(-5.0 + 0.25 * 7.0) - v[7]).abs() < 1e-14);
        assert_eq!(p.eval(100.0), 0.0);
    }

    #[test]
    fn pt_decay_rate_fit() {
        let p = PotentialSpec::poeschl_teller(6.0, 1.0);
        let r = p.fitted_decay_rate(8.0, 16.0);
        assert!((r - 2.0).abs() / 2.0 < 0.05);
    }
}
