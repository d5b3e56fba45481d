//! Greenwood-type atmospheric coherence time over a vertical path.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    NotConverged { a: f64, b: f64 },
    #[error("integrand is not finite at h = {0}")]
    NonFinite(f64),
}

/// Hufnagel-Valley 5/7 refractive-index structure profile with a configurable
/// ground term. `h` in meters, result in m^(-2/3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HufnagelValley {
    /// RMS upper-altitude wind in m/s; 21 gives the 5/7 profile.
    pub upper_wind: f64,
    pub ground_cn2: f64,
}

impl Default for HufnagelValley {
    fn default() -> Self {
        Self { upper_wind: 21.0, ground_cn2: 1.7e-14 }
    }
}

impl HufnagelValley {
    pub fn cn2(&self, h: f64) -> f64 {
        let w = self.upper_wind / 27.0;
        0.005_94 * w * w * (1e-5 * h).powi(10) * (-h / 1000.0).exp()
            + 2.7e-16 * (-h / 1500.0).exp()
            + self.ground_cn2 * (-h / 100.0).exp()
    }
}

/// Bufton wind profile in m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bufton {
    pub ground_speed: f64,
    pub jet_speed: f64,
    pub jet_altitude: f64,
    pub jet_thickness: f64,
}

impl Default for Bufton {
    fn default() -> Self {
        Self { ground_speed: 5.0, jet_speed: 30.0, jet_altitude: 9400.0, jet_thickness: 4800.0 }
    }
}

impl Bufton {
    pub fn speed(&self, h: f64) -> f64 {
        let x = (h - self.jet_altitude) / self.jet_thickness;
        self.ground_speed + self.jet_speed * (-x * x).exp()
    }
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64, QuadratureError> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, QuadratureError> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        if !flm.is_finite() {
            return Err(QuadratureError::NonFinite(lm));
        }
        if !frm.is_finite() {
            return Err(QuadratureError::NonFinite(rm));
        }
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(QuadratureError::NotConverged { a, b });
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    for (x, y) in [(a, fa), (b, fb), (0.5 * (a + b), fm)] {
        if !y.is_finite() {
            return Err(QuadratureError::NonFinite(x));
        }
    }
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 40)
}

/// `t0 = [2.91 k^2 int Cn^2(h) v(h)^(5/3) dh]^(-3/5)` over `0..path_len`.
pub fn coherence_time(
    cn2: &dyn Fn(f64) -> f64,
    wind: &dyn Fn(f64) -> f64,
    wavelength: f64,
    path_len: f64,
) -> Result<f64, QuadratureError> {
    let k = std::f64::consts::TAU / wavelength;
    let integrand = |h: f64| cn2(h) * wind(h).powf(5.0 / 3.0);
    // Scale so the tolerance is relative to the integral's order.
    let scale = integrand(0.0).abs().max(f64::MIN_POSITIVE) * path_len;
    let i = integrate(&|h| integrand(h) / scale, 0.0, path_len, 1e-10)? * scale;
    Ok((2.91 * k * k * i).powf(-0.6))
}

/// Coherence time with the default profiles.
pub fn default_coherence_time(ground_cn2: f64, wavelength: f64, path_len: f64) -> Result<f64, QuadratureError> {
    let hv = HufnagelValley { ground_cn2, ..Default::default() };
    let bw = Bufton::default();
    coherence_time(&|h| hv.cn2(h), &|h| bw.speed(h), wavelength, path_len)
}
