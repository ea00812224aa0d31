//! Per-step drift/volatility rules `(μ_k, σ_k)` as functions of the running
//! normalized sum `w = W_{k−1,n}`.

/// A rule for steps `k = 1..=n`, evaluated at the state before step `k`.
pub trait StepRule: Sync {
    fn step_params(&self, k: usize, w: f64) -> (f64, f64);
}

/// The same `(μ, σ)` at every step: the classical normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRule {
    pub mu: f64,
    pub sigma: f64,
}

impl StepRule for ConstantRule {
    fn step_params(&self, _k: usize, _w: f64) -> (f64, f64) {
        (self.mu, self.sigma)
    }
}

/// Rule backed by a closure.
pub struct FnRule<F>(pub F);

impl<F> StepRule for FnRule<F>
where
    F: Fn(usize, f64) -> (f64, f64) + Sync,
{
    fn step_params(&self, k: usize, w: f64) -> (f64, f64) {
        (self.0)(k, w)
    }
}
