/// Classical fourth-order Runge–Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Derivative evaluated at the start of the last step.
    pub fn first_stage(&self) -> &[f64] {
        &self.k1
    }

    /// Advances `x` from `t` to `t + dt` in place. `f(t, x, dx)` writes the
    /// derivative into `dx`; an error from any stage aborts the step and leaves
    /// `x` untouched.
    pub fn step<E, F>(&mut self, mut f: F, t: f64, x: &mut [f64], dt: f64) -> Result<(), E>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    {
        let h2 = 0.5 * dt;
        f(t, x, &mut self.k1)?;
        for ((y, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k1) {
            *y = x + h2 * k;
        }
        f(t + h2, &self.tmp, &mut self.k2)?;
        for ((y, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k2) {
            *y = x + h2 * k;
        }
        f(t + h2, &self.tmp, &mut self.k3)?;
        for ((y, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k3) {
            *y = x + dt * k;
        }
        f(t + dt, &self.tmp, &mut self.k4)?;
        let h6 = dt / 6.0;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h6 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Ok(())
    }
}
