//! Kernel functions and the discrete convolution engine.
//!
//! Every signal in the toolkit lives on a uniform grid of step `dt` (ms) and is
//! carried by [`TimeSeries`]. Spike trains enter convolutions as impulse
//! sequences of amplitude `1/dt` at their bins, so that the discrete sums
//!
//! ```text
//! causal:  y[n] = dt * sum_{k=0..=n}  x[k] * kernel[n-k]
//! adjoint: w[n] = dt * sum_{k>=n}     z[k] * kernel[k-n]
//! ```
//!
//! approximate the continuous convolutions of Dirac trains. The adjoint form is
//! the exact transpose of the causal one on the grid:
//! `sum (x*y)[n] z[n] == sum adjoint(z, y)[n] x[n]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernels are sampled out to this many multiples of the slowest time constant.
pub const TRUNCATION_FACTOR: f64 = 8.0;

/// Synapse and learning-rule kernel constants. Times in ms, capacitance in pF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Slow decay of the post-synaptic current kernel.
    pub tau1: f64,
    /// Fast rise of the post-synaptic current kernel.
    pub tau2: f64,
    /// Membrane leak time constant, `Cm / gL`.
    pub tau_l: f64,
    /// Leak time constant of the approximate kernel used by the learning rule.
    pub tau_l_prime: f64,
    /// Low-pass constant of the correlation metric.
    pub tau_lp: f64,
    /// Membrane capacitance.
    pub cm: f64,
    /// Current (pA) injected per unit weight at the kernel's unit amplitude.
    pub psc_scale: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            tau1: 5.0,
            tau2: 1.25,
            tau_l: 10.0,
            tau_l_prime: 10.0,
            tau_lp: 5.0,
            cm: 300.0,
            psc_scale: 1000.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.tau1,
            self.tau2,
            self.tau_l,
            self.tau_l_prime,
            self.tau_lp,
            self.cm,
            self.psc_scale,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("kernel", "all constants must be finite"));
        }
        if !(self.tau2 > 0.0 && self.tau1 > self.tau2) {
            return Err(Error::invalid("kernel.tau1/tau2", "need tau1 > tau2 > 0"));
        }
        if !(self.tau_l_prime > 0.0 && self.tau_l_prime <= self.tau_l) {
            return Err(Error::invalid(
                "kernel.tau_l_prime",
                "need 0 < tau_l_prime <= tau_l",
            ));
        }
        if !(self.tau_lp > 0.0) {
            return Err(Error::invalid("kernel.tau_lp", "must be positive"));
        }
        if !(self.cm > 0.0) {
            return Err(Error::invalid("kernel.cm", "must be positive"));
        }
        if !(self.psc_scale > 0.0) {
            return Err(Error::invalid("kernel.psc_scale", "must be positive"));
        }
        Ok(())
    }

    /// Time of the post-synaptic current maximum.
    pub fn alpha_peak_time(&self) -> f64 {
        self.tau1 * self.tau2 / (self.tau1 - self.tau2) * (self.tau1 / self.tau2).ln()
    }

    /// Number of grid samples kept for the synaptic and leak kernels.
    pub fn kernel_len(&self, dt: f64) -> usize {
        (TRUNCATION_FACTOR * self.tau1.max(self.tau_l) / dt).ceil() as usize + 1
    }
}

/// Post-synaptic current kernel `[exp(-t/tau1) - exp(-t/tau2)] u(t)`.
pub fn alpha_kernel(t: f64, p: &KernelParams) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        (-t / p.tau1).exp() - (-t / p.tau2).exp()
    }
}

/// Time derivative of [`alpha_kernel`]; the right-hand limit is returned at `t = 0`.
pub fn alpha_prime(t: f64, p: &KernelParams) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        -(-t / p.tau1).exp() / p.tau1 + (-t / p.tau2).exp() / p.tau2
    }
}

/// Leaky-integrator impulse response `(1/Cm) exp(-t/tau) u(t)`.
pub fn leak_kernel(t: f64, p: &KernelParams, tau: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        (-t / tau).exp() / p.cm
    }
}

/// A uniformly sampled real signal over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive and finite"));
        }
        if values.is_empty() {
            return Err(Error::invalid("values", "time series must be non-empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("non-finite sample at {i}")));
        }
        Ok(Self { dt, values })
    }

    pub fn zeros(dt: f64, len: usize) -> Self {
        Self {
            dt,
            values: vec![0.0; len],
        }
    }

    /// Samples `f` at `n * dt` for `n in 0..len`.
    pub fn sample(dt: f64, len: usize, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dt,
            values: (0..len).map(|n| f(n as f64 * dt)).collect(),
        }
    }

    /// Impulse sequence with `1/dt` at each listed bin (repeated bins accumulate).
    pub fn impulses(dt: f64, len: usize, bins: impl IntoIterator<Item = usize>) -> Self {
        let mut ts = Self::zeros(dt, len);
        for b in bins {
            if b < len {
                ts.values[b] += 1.0 / dt;
            }
        }
        ts
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Epoch duration covered by the samples.
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    /// `dt * sum(values)`, the grid integral.
    pub fn integral(&self) -> f64 {
        self.dt * self.values.iter().sum::<f64>()
    }

    /// `dt * sum(self * other)`.
    pub fn inner(&self, other: &TimeSeries) -> Result<f64> {
        check_dt(self.dt, other.dt)?;
        if self.len() != other.len() {
            return Err(Error::Dimension {
                context: "inner product",
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(self.dt
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }
}

fn check_dt(a: f64, b: f64) -> Result<()> {
    // Grids built from the same configured step agree bit for bit; allow only
    // round-off from arithmetic on the step itself.
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::DtMismatch { left: a, right: b });
    }
    Ok(())
}

/// `y[n] = dt * sum_{k<=n} x[k] kernel[n-k]`, truncated to the length of `x`.
pub fn causal_convolve(x: &TimeSeries, kernel: &TimeSeries) -> Result<TimeSeries> {
    check_dt(x.dt, kernel.dt)?;
    let n = x.len();
    let mut y = vec![0.0; n];
    for (k, &xk) in x.values.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let a = x.dt * xk;
        for (yv, kv) in y[k..].iter_mut().zip(&kernel.values) {
            *yv += a * kv;
        }
    }
    Ok(TimeSeries { dt: x.dt, values: y })
}

/// `w[n] = dt * sum_{k>=n} z[k] kernel[k-n]`: the time-reversed kernel applied
/// to `z`, reading only samples inside the epoch.
pub fn adjoint_convolve(z: &TimeSeries, kernel: &TimeSeries) -> Result<TimeSeries> {
    check_dt(z.dt, kernel.dt)?;
    let values = (0..z.len()).map(|n| adjoint_at(z, kernel, n)).collect();
    Ok(TimeSeries { dt: z.dt, values })
}

/// Single sample of [`adjoint_convolve`] at bin `n`. The caller guarantees equal `dt`.
pub fn adjoint_at(z: &TimeSeries, kernel: &TimeSeries, n: usize) -> f64 {
    if n >= z.len() {
        return 0.0;
    }
    z.dt * z.values[n..]
        .iter()
        .zip(&kernel.values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
}

/// Untruncated grid convolution of two kernels (`len a + len b - 1` samples).
pub fn full_convolve(a: &TimeSeries, b: &TimeSeries) -> Result<TimeSeries> {
    check_dt(a.dt, b.dt)?;
    let mut y = vec![0.0; a.len() + b.len() - 1];
    for (i, &av) in a.values.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let s = a.dt * av;
        for (yv, bv) in y[i..].iter_mut().zip(&b.values) {
            *yv += s * bv;
        }
    }
    Ok(TimeSeries { dt: a.dt, values: y })
}

/// Adds `amp * kernel` into `target` starting at bin `start`, clipping at the end.
pub(crate) fn add_shifted(target: &mut [f64], kernel: &[f64], start: usize, amp: f64) {
    if start >= target.len() {
        return;
    }
    for (t, k) in target[start..].iter_mut().zip(kernel) {
        *t += amp * k;
    }
}

/// All sampled kernels needed by a forward pass and the learning rule.
///
/// `alpha` and `alpha_prime` carry the `psc_scale` factor, so a channel built
/// from them is a current in pA per unit weight and `E_L + w . d_hat` is in mV.
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub params: KernelParams,
    pub dt: f64,
    pub alpha: TimeSeries,
    pub alpha_prime: TimeSeries,
    pub h: TimeSeries,
    pub h_hat: TimeSeries,
    /// `alpha * h_hat` on the grid: the `d_hat` response to one input spike.
    pub alpha_h_hat: TimeSeries,
    /// `alpha' * h_hat` on the grid: the temporal backpropagation kernel.
    pub alpha_prime_h_hat: TimeSeries,
}

impl KernelBank {
    pub fn new(params: KernelParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive and finite"));
        }
        let len = params.kernel_len(dt);
        let s = params.psc_scale;
        let alpha = TimeSeries::sample(dt, len, |t| s * alpha_kernel(t, &params));
        let alpha_prime = TimeSeries::sample(dt, len, |t| s * alpha_prime(t, &params));
        // bin-averaged, so `dt * sum(I h)` reproduces the zero-order-hold membrane exactly
        let leak = |tau: f64| {
            let avg = -(-dt / tau).exp_m1() * tau / dt;
            TimeSeries::sample(dt, len, |t| avg * leak_kernel(t, &params, tau))
        };
        let h = leak(params.tau_l);
        let h_hat = leak(params.tau_l_prime);
        let alpha_h_hat = full_convolve(&alpha, &h_hat)?;
        let alpha_prime_h_hat = full_convolve(&alpha_prime, &h_hat)?;
        Ok(Self {
            params,
            dt,
            alpha,
            alpha_prime,
            h,
            h_hat,
            alpha_h_hat,
            alpha_prime_h_hat,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p() -> KernelParams {
        KernelParams::default()
    }

    #[test]
    fn alpha_vanishes_at_and_before_origin() {
        assert_eq!(alpha_kernel(0.0, &p()), 0.0);
        assert_eq!(alpha_kernel(-3.0, &p()), 0.0);
        assert_eq!(alpha_prime(-0.1, &p()), 0.0);
    }

    #[test]
    fn alpha_peak_matches_grid_argmax() {
        let p = p();
        let dt = 1e-4;
        let (mut best_t, mut best) = (0.0, f64::MIN);
        for n in 0..100_000 {
            let t = n as f64 * dt;
            let v = alpha_kernel(t, &p);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        assert!((best_t - p.alpha_peak_time()).abs() <= dt);
        assert!(alpha_prime(p.alpha_peak_time(), &p).abs() < 1e-12);
    }

    #[test]
    fn alpha_prime_matches_central_difference() {
        let p = p();
        let t = 2.0 * p.tau2;
        let h = 1e-5;
        let fd = (alpha_kernel(t + h, &p) - alpha_kernel(t - h, &p)) / (2.0 * h);
        assert_relative_eq!(fd, alpha_prime(t, &p), max_relative = 1e-4);
        assert_relative_eq!(alpha_prime(0.0, &p), 1.0 / p.tau2 - 1.0 / p.tau1);
    }

    #[test]
    fn leak_kernel_values() {
        let p = p();
        assert_relative_eq!(leak_kernel(0.0, &p, p.tau_l), 1.0 / p.cm);
        assert_eq!(leak_kernel(-1.0, &p, p.tau_l), 0.0);
        assert_relative_eq!(leak_kernel(p.tau_l, &p, p.tau_l), (-1.0f64).exp() / p.cm);
        let mut prev = f64::INFINITY;
        for n in 0..500 {
            let v = leak_kernel(n as f64 * 0.1, &p, 7.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn alpha_is_nonnegative_and_decays() {
        let p = p();
        for n in 0..2000 {
            assert!(alpha_kernel(n as f64 * 0.05, &p) >= 0.0);
        }
        assert!(alpha_kernel(200.0, &p) < 1e-15);
    }

    #[test]
    fn impulse_response_reproduces_kernel() {
        let p = p();
        let dt = 0.1;
        let k = TimeSeries::sample(dt, 400, |t| alpha_kernel(t, &p));
        let x = TimeSeries::impulses(dt, 300, [0]);
        let y = causal_convolve(&x, &k).unwrap();
        for n in 0..300 {
            assert_relative_eq!(y.values[n], alpha_kernel(n as f64 * dt, &p), epsilon = 1e-15);
        }
        let zero = causal_convolve(&TimeSeries::zeros(dt, 300), &k).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_impulses_superpose() {
        let p = p();
        let dt = 0.1;
        let k = TimeSeries::sample(dt, 800, |t| alpha_kernel(t, &p));
        let x = TimeSeries::impulses(dt, 500, [30, 75]);
        let y = causal_convolve(&x, &k).unwrap();
        for n in 0..500 {
            let t = n as f64 * dt;
            let want = alpha_kernel(t - 3.0, &p) + alpha_kernel(t - 7.5, &p);
            assert!((y.values[n] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_dt_is_rejected() {
        let a = TimeSeries::zeros(0.1, 10);
        let b = TimeSeries::zeros(0.05, 10);
        assert!(matches!(causal_convolve(&a, &b), Err(Error::DtMismatch { .. })));
        assert!(matches!(adjoint_convolve(&a, &b), Err(Error::DtMismatch { .. })));
    }

    #[test]
    fn adjoint_with_identity_kernel_is_passthrough() {
        let dt = 0.1;
        let z = TimeSeries::new(dt, vec![1.0, -2.0, 3.5, 0.0, 4.0]).unwrap();
        // unit impulse: dt * (1/dt) = 1
        let id = TimeSeries::impulses(dt, 1, [0]);
        let w = adjoint_convolve(&z, &id).unwrap();
        for (a, b) in w.values.iter().zip(&z.values) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let zero = adjoint_convolve(&TimeSeries::zeros(dt, 5), &id).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_identity_against_double_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let dt = 0.1;
        let n = 100;
        let mut gen = |len: usize| {
            TimeSeries::new(dt, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let x = gen(n);
        let z = gen(n);
        let y = gen(40);
        // direct double sum of sum_n (x*y)[n] z[n]
        let mut lhs = 0.0;
        for m in 0..n {
            for k in 0..=m {
                if m - k < y.len() {
                    lhs += dt * dt * x.values[k] * y.values[m - k] * z.values[m];
                }
            }
        }
        let rhs = adjoint_convolve(&z, &y).unwrap().inner(&x).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        let fwd = causal_convolve(&x, &y).unwrap().inner(&z).unwrap();
        assert_relative_eq!(lhs, fwd, max_relative = 1e-10);
    }

    #[test]
    fn full_convolve_composes_adjoints() {
        let p = p();
        let bank = KernelBank::new(p, 0.1).unwrap();
        let z = TimeSeries::impulses(0.1, 600, [100, 420]);
        let two = adjoint_convolve(&adjoint_convolve(&z, &bank.alpha_prime).unwrap(), &bank.h_hat)
            .unwrap();
        let one = adjoint_convolve(&z, &bank.alpha_prime_h_hat).unwrap();
        for (a, b) in one.values.iter().zip(&two.values) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    proptest! {
        #[test]
        fn causal_convolve_is_linear(
            x1 in prop::collection::vec(-5.0f64..5.0, 60),
            x2 in prop::collection::vec(-5.0f64..5.0, 60),
            k in prop::collection::vec(-1.0f64..1.0, 1..30),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let dt = 0.1;
            let kernel = TimeSeries::new(dt, k).unwrap();
            let mix: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
            let lhs = causal_convolve(&TimeSeries::new(dt, mix).unwrap(), &kernel).unwrap();
            let y1 = causal_convolve(&TimeSeries::new(dt, x1).unwrap(), &kernel).unwrap();
            let y2 = causal_convolve(&TimeSeries::new(dt, x2).unwrap(), &kernel).unwrap();
            let scale = lhs.values.iter().chain(&y1.values).chain(&y2.values)
                .fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..lhs.len() {
                let rhs = a * y1.values[i] + b * y2.values[i];
                prop_assert!((lhs.values[i] - rhs).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn adjoint_lemma_holds(
            x in prop::collection::vec(-1.0f64..1.0, 80),
            z in prop::collection::vec(-1.0f64..1.0, 80),
            y in prop::collection::vec(-1.0f64..1.0, 1..100),
        ) {
            let dt = 0.25;
            let x = TimeSeries::new(dt, x).unwrap();
            let z = TimeSeries::new(dt, z).unwrap();
            let y = TimeSeries::new(dt, y).unwrap();
            let lhs = causal_convolve(&x, &y).unwrap().inner(&z).unwrap();
            let rhs = adjoint_convolve(&z, &y).unwrap().inner(&x).unwrap();
            let scale: f64 = x.values.iter().map(|v| v.abs()).sum::<f64>()
                * z.values.iter().map(|v| v.abs()).sum::<f64>()
                * y.values.iter().map(|v| v.abs()).fold(0.0, f64::max) * dt * dt;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(lhs.abs()));
        }
    }
}
