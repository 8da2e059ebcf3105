use serde::{Deserialize, Serialize};

/// Smooth bounded elementwise nonlinearity used on hidden layers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Logistic,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-x).exp()),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        self.derivative_from_output(self.eval(x))
    }

    /// `σ'(x)` expressed through `y = σ(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Logistic => y * (1.0 - y),
        }
    }

    pub fn second_derivative(self, x: f64) -> f64 {
        let y = self.eval(x);
        match self {
            Activation::Tanh => -2.0 * y * (1.0 - y * y),
            Activation::Logistic => y * (1.0 - y) * (1.0 - 2.0 * y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        for act in [Activation::Tanh, Activation::Logistic] {
            for &x in &[-2.3, -0.4, 0.0, 0.7, 1.9] {
                let d1 = (act.eval(x + h) - act.eval(x - h)) / (2.0 * h);
                let d2 = (act.derivative(x + h) - act.derivative(x - h)) / (2.0 * h);
                assert!((d1 - act.derivative(x)).abs() < 1e-9);
                assert!((d2 - act.second_derivative(x)).abs() < 1e-8);
            }
        }
    }
}
