use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Serializable description of the built-in test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunctionSpec {
    /// `f ≡ value` on the whole line.
    Constant { value: f64 },
    /// Smooth compactly supported bump `height · exp(1 − 1/(1 − z²))`,
    /// `z = (x − center)/radius`.
    Bump {
        center: f64,
        radius: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// `height · exp(−(x − center)² / (2 width²))` on the whole line.
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default = "one")]
        height: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// A real function together with its first two derivatives and a declared
/// support. Evaluation outside the support returns 0 for all three.
#[derive(Clone)]
pub struct TestFunction {
    label: String,
    support: (f64, f64),
    value: RealFn,
    first: RealFn,
    second: RealFn,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("support", &self.support)
            .finish()
    }
}

impl TestFunction {
    pub fn custom<F, F1, F2>(label: &str, support: (f64, f64), f: F, d1: F1, d2: F2) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        F1: Fn(f64) -> f64 + Send + Sync + 'static,
        F2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.to_string(),
            support,
            value: Arc::new(f),
            first: Arc::new(d1),
            second: Arc::new(d2),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_spec(&TestFunctionSpec::Constant { value: c })
    }

    pub fn bump(center: f64, radius: f64) -> Self {
        Self::from_spec(&TestFunctionSpec::Bump {
            center,
            radius,
            height: 1.0,
        })
    }

    pub fn from_spec(spec: &TestFunctionSpec) -> Self {
        match *spec {
            TestFunctionSpec::Constant { value } => Self::custom(
                &format!("const({value})"),
                (f64::NEG_INFINITY, f64::INFINITY),
                move |_| value,
                |_| 0.0,
                |_| 0.0,
            ),
            TestFunctionSpec::Bump { center, radius, height } => {
                let z = move |x: f64| (x - center) / radius;
                Self::custom(
                    &format!("bump({center},{radius})"),
                    (center - radius, center + radius),
                    move |x| height * bump_profile(z(x)).0,
                    move |x| height * bump_profile(z(x)).1 / radius,
                    move |x| height * bump_profile(z(x)).2 / (radius * radius),
                )
            }
            TestFunctionSpec::Gaussian { center, width, height } => {
                let w2 = width * width;
                let g = move |x: f64| height * (-(x - center).powi(2) / (2.0 * w2)).exp();
                Self::custom(
                    &format!("gauss({center},{width})"),
                    (f64::NEG_INFINITY, f64::INFINITY),
                    g,
                    move |x| -(x - center) / w2 * g(x),
                    move |x| ((x - center).powi(2) / (w2 * w2) - 1.0 / w2) * g(x),
                )
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn has_compact_support(&self) -> bool {
        self.support.0.is_finite() && self.support.1.is_finite()
    }

    #[inline]
    fn inside(&self, x: f64) -> bool {
        x >= self.support.0 && x <= self.support.1
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if self.inside(x) {
            (self.value)(x)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn first(&self, x: f64) -> f64 {
        if self.inside(x) {
            (self.first)(x)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn second(&self, x: f64) -> f64 {
        if self.inside(x) {
            (self.second)(x)
        } else {
            0.0
        }
    }
}

/// `(φ, φ', φ'')` for `φ(z) = exp(1 − 1/(1 − z²))` on `|z| < 1`.
fn bump_profile(z: f64) -> (f64, f64, f64) {
    let s = 1.0 - z * z;
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let phi = (1.0 - 1.0 / s).exp();
    let d1 = -2.0 * z / (s * s) * phi;
    let d2 = (4.0 * z * z / s.powi(4) - 2.0 / (s * s) - 8.0 * z * z / s.powi(3)) * phi;
    (phi, d1, d2)
}
