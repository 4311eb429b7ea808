//! Lag-window kernels and the Toeplitz weight matrix `𝒲_m`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

type KernelFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A user-supplied kernel, admitted only after the positive-definiteness
/// probe in [`Kernel::custom`].
#[derive(Clone)]
pub struct CustomKernel {
    name: String,
    f: Arc<KernelFn>,
    delta: Vec<f64>,
    compact: bool,
}

#[derive(Clone)]
pub enum Kernel {
    Bartlett,
    Parzen,
    QuadraticSpectral,
    Custom(CustomKernel),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Custom(a), Self::Custom(b)) => Arc::ptr_eq(&a.f, &b.f),
            (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bartlett" => Ok(Self::Bartlett),
            "parzen" => Ok(Self::Parzen),
            "qs" | "quadratic-spectral" => Ok(Self::QuadraticSpectral),
            other => Err(Error::Config(format!(
                "unknown kernel '{other}' (expected bartlett, parzen or qs)"
            ))),
        }
    }
}

impl serde::Serialize for Kernel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for Kernel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// Taylor series in z = 6πx/5; the closed form cancels catastrophically near 0.
fn qs_series(z: f64) -> f64 {
    let z2 = z * z;
    1.0 + z2
        * (-1.0 / 10.0
            + z2 * (1.0 / 280.0
                + z2 * (-1.0 / 15120.0 + z2 * (1.0 / 1_330_560.0 - z2 / 172_972_800.0))))
}

fn qs_closed(z: f64) -> f64 {
    3.0 / (z * z) * (z.sin() / z - z.cos())
}

fn qs(x: f64) -> f64 {
    let z = 6.0 * std::f64::consts::PI * x / 5.0;
    if z.abs() < 0.2 {
        qs_series(z)
    } else {
        qs_closed(z)
    }
}

impl Kernel {
    /// Registers a custom kernel. The function is probed for `κ(0) = 1`,
    /// evenness, and positive semi-definiteness of `[κ((i−j)/s)]` on random
    /// `(J ≤ 50, s)`; failing any probe rejects the kernel.
    pub fn custom<F>(name: impl Into<String>, f: F, delta: Vec<f64>, compact: bool) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        if (f(0.0) - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("kernel '{name}' must satisfy κ(0) = 1")));
        }
        let kernel = Self::Custom(CustomKernel { name: name.clone(), f: Arc::new(f), delta, compact });
        let mut rng = ChaCha8Rng::seed_from_u64(0x6b65726e);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-10.0..10.0);
            if kernel.eval(x) != kernel.eval(-x) {
                return Err(Error::Config(format!("kernel '{name}' is not even")));
            }
            let m = rng.gen_range(1..=50);
            let bw = rng.gen_range(0.01..100.0);
            let lo = linalg::min_eigenvalue(&kernel.toeplitz_weights(m, bw));
            if lo <= -1e-10 * m as f64 {
                return Err(Error::Config(format!(
                    "kernel '{name}' fails the positive-definiteness probe (λ_min = {lo:e} at m = {m}, bandwidth = {bw})"
                )));
            }
        }
        Ok(kernel)
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Bartlett => "bartlett",
            Self::Parzen => "parzen",
            Self::QuadraticSpectral => "qs",
            Self::Custom(c) => &c.name,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            Self::Bartlett => (1.0 - a).max(0.0),
            Self::Parzen => {
                if a <= 0.5 {
                    1.0 - 6.0 * a * a + 6.0 * a * a * a
                } else if a <= 1.0 {
                    2.0 * (1.0 - a).powi(3)
                } else {
                    0.0
                }
            }
            Self::QuadraticSpectral => qs(a),
            Self::Custom(c) => (c.f)(a),
        }
    }

    /// Points of `[0, ∞)` where `κ` fails to be continuously differentiable.
    pub fn delta_points(&self) -> &[f64] {
        match self {
            Self::Bartlett => &[1.0],
            Self::Parzen | Self::QuadraticSpectral => &[],
            Self::Custom(c) => &c.delta,
        }
    }

    pub fn compact_support(&self) -> bool {
        match self {
            Self::Bartlett | Self::Parzen => true,
            Self::QuadraticSpectral => false,
            Self::Custom(c) => c.compact,
        }
    }

    /// Lag weight `κ(i/M)`, with the convention that `M = 0` keeps lag 0 only.
    pub fn lag_weight(&self, lag: i64, bandwidth: f64) -> f64 {
        if lag == 0 {
            1.0
        } else if bandwidth > 0.0 {
            self.eval(lag as f64 / bandwidth)
        } else {
            0.0
        }
    }

    /// The `m×m` symmetric Toeplitz matrix with entries `κ((i−j)/bandwidth)`.
    pub fn toeplitz_weights(&self, m: usize, bandwidth: f64) -> DMatrix<f64> {
        let row: Vec<f64> = (0..m).map(|h| self.lag_weight(h as i64, bandwidth)).collect();
        linalg::symmetric_toeplitz(&row)
    }
}

pub fn kernel_eval(kernel: &Kernel, x: f64) -> f64 {
    kernel.eval(x)
}

pub fn toeplitz_weights(kernel: &Kernel, m: usize, bandwidth: f64) -> DMatrix<f64> {
    kernel.toeplitz_weights(m, bandwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// The QS kernel as the Fourier transform of the Epanechnikov-shaped
    /// spectral window `(3/(4a))(1−λ²/a²)` on `[−a, a]`, `a = 6π/5`,
    /// evaluated by composite Simpson quadrature.
    fn qs_by_quadrature(x: f64) -> f64 {
        let a = 6.0 * std::f64::consts::PI / 5.0;
        let n = 20_000;
        let h = 2.0 * a / n as f64;
        let g = |l: f64| 3.0 / (4.0 * a) * (1.0 - l * l / (a * a)) * (l * x).cos();
        let mut s = g(-a) + g(a);
        for i in 1..n {
            let l = -a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(l);
        }
        s * h / 3.0
    }

    #[test]
    fn values() {
        assert_eq!(Kernel::Bartlett.eval(0.0), 1.0);
        assert_eq!(Kernel::Bartlett.eval(0.5), 0.5);
        assert_eq!(Kernel::Bartlett.eval(-2.0), 0.0);
        assert_eq!(Kernel::Parzen.eval(0.0), 1.0);
        assert_relative_eq!(Kernel::Parzen.eval(0.5), 0.25, epsilon = 1e-15);
        assert_relative_eq!(Kernel::Parzen.eval(0.75), 2.0 * 0.25f64.powi(3), epsilon = 1e-15);
        assert_eq!(Kernel::Parzen.eval(1.5), 0.0);
        assert_eq!(Kernel::QuadraticSpectral.eval(0.0), 1.0);
    }

    #[test]
    fn qs_near_zero_matches_series() {
        let x = 1e-6;
        let z = 6.0 * std::f64::consts::PI * x / 5.0;
        let series = 1.0 - z * z / 10.0;
        assert!((Kernel::QuadraticSpectral.eval(x) - 1.0).abs() < 1e-8);
        assert_relative_eq!(Kernel::QuadraticSpectral.eval(x), series, epsilon = 1e-15);
        // Both branches agree where they meet.
        assert!((qs_series(0.2) - qs_closed(0.2)).abs() < 1e-13);
    }

    #[test]
    fn qs_matches_spectral_quadrature() {
        for &x in &[0.05, 0.3, 0.8, 1.0, 1.7, 3.2, 7.5] {
            assert_relative_eq!(Kernel::QuadraticSpectral.eval(x), qs_by_quadrature(x), epsilon = 1e-9);
        }
    }

    #[test]
    fn toeplitz_examples() {
        assert_eq!(Kernel::Bartlett.toeplitz_weights(3, 0.0), DMatrix::identity(3, 3));
        let w = Kernel::Bartlett.toeplitz_weights(3, 2.0);
        assert_eq!(w[(0, 1)], 0.5);
        assert_eq!(w[(0, 2)], 0.0);
        assert!(linalg::min_eigenvalue(&Kernel::Parzen.toeplitz_weights(10, 3.7)) > 0.0);
    }

    #[test]
    fn support_and_delta() {
        assert!(Kernel::Bartlett.compact_support());
        assert!(Kernel::Parzen.compact_support());
        assert!(!Kernel::QuadraticSpectral.compact_support());
        assert_eq!(Kernel::Bartlett.delta_points(), &[1.0]);
        assert!(Kernel::Parzen.delta_points().is_empty());
        assert!(Kernel::QuadraticSpectral.delta_points().is_empty());
    }

    #[test]
    fn parsing() {
        assert_eq!("bartlett".parse::<Kernel>().unwrap(), Kernel::Bartlett);
        assert_eq!("QS".parse::<Kernel>().unwrap(), Kernel::QuadraticSpectral);
        assert!(matches!("tukey".parse::<Kernel>(), Err(Error::Config(_))));
    }

    #[test]
    fn custom_registration() {
        // Truncated (rectangular) kernel is not positive definite.
        let rect = Kernel::custom("truncated", |x: f64| if x.abs() <= 1.0 { 1.0 } else { 0.0 }, vec![1.0], true);
        assert!(rect.is_err());
        let gauss = Kernel::custom("gaussian", |x: f64| (-x * x).exp(), vec![], false).unwrap();
        assert_eq!(gauss.eval(0.0), 1.0);
        assert_eq!(gauss.name(), "gaussian");
    }

    proptest! {
        #[test]
        fn kernels_are_even(x in -50.0f64..50.0) {
            for k in [Kernel::Bartlett, Kernel::Parzen, Kernel::QuadraticSpectral] {
                prop_assert_eq!(k.eval(x), k.eval(-x));
            }
        }

        #[test]
        fn toeplitz_weights_are_psd(m in 1usize..=50, bw in 0.01f64..100.0) {
            for k in [Kernel::Bartlett, Kernel::Parzen, Kernel::QuadraticSpectral] {
                let w = k.toeplitz_weights(m, bw);
                prop_assert!(linalg::min_eigenvalue(&w) > -1e-10 * m as f64);
            }
        }
    }
}
