//! Broken-line processes on the knot grid `k/n`: the ramp basis, classical
//! and adaptive normalized partial-sum lines, Wiener broken lines, bridge
//! refinement and the sup-norm.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::real::Real;
use crate::rng::{stream_id, task_rng};
use crate::rules::StepRule;
use crate::scenario::MomentEnvelope;

#[derive(Debug, thiserror::Error)]
pub enum PathError {
    #[error("broken line needs n >= 1 and n + 1 knots (got {knots} knots)")]
    Shape { knots: usize },
    #[error("knot values must be finite")]
    NonFinite,
    #[error("sample mixes lines with n = {0} and n = {1}")]
    Heterogeneous(usize, usize),
    #[error("argument out of range: {0}")]
    Argument(String),
    #[error("step {k}: rule produced (mu, sigma) = ({mu}, {sigma}) outside the moment envelope")]
    InvariantBreach { k: usize, mu: f64, sigma: f64 },
    #[error("malformed path csv: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The ramp `e_i(t)` on the grid `k/n`: `0` before `(i−1)/n`, `1` after
/// `i/n`, linear in between. `e_0 ≡ 1`, `e_{n+1} ≡ 0`.
pub fn basis_e<T: Real>(i: usize, n: usize, t: T) -> T {
    assert!(n >= 1 && i <= n + 1, "basis index {i} out of range for n = {n}");
    if i == 0 {
        return T::one();
    }
    if i == n + 1 {
        return T::zero();
    }
    let s = t * T::from_usize_lossy(n) - T::from_usize_lossy(i - 1);
    s.max(T::zero()).min(T::one())
}

/// `Σ_{k=0}^{n} |e_k(t) − e_{k+1}(t)|`.
pub fn basis_telescoping_sum<T: Real>(n: usize, t: T) -> T {
    (0..=n).map(|k| (basis_e(k, n, t) - basis_e(k + 1, n, t)).abs()).sum()
}

/// Piecewise-linear function on `[0, 1]` with knots at `k/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenLine<T> {
    knots: Vec<T>,
}

impl<T: Real> BrokenLine<T> {
    pub fn new(knots: Vec<T>) -> Result<Self, PathError> {
        if knots.len() < 2 {
            return Err(PathError::Shape { knots: knots.len() });
        }
        if knots.iter().any(|x| !x.is_finite()) {
            return Err(PathError::NonFinite);
        }
        Ok(Self { knots })
    }

    /// Line through the origin with the given increments.
    pub fn from_increments<I: IntoIterator<Item = T>>(increments: I) -> Result<Self, PathError> {
        let mut knots = vec![T::zero()];
        let mut acc = T::zero();
        for d in increments {
            acc = acc + d;
            knots.push(acc);
        }
        Self::new(knots)
    }

    pub fn n(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn terminal(&self) -> T {
        *self.knots.last().expect("nonempty")
    }

    pub fn eval(&self, t: T) -> T {
        let n = self.n();
        let s = t.max(T::zero()).min(T::one()) * T::from_usize_lossy(n);
        let k = s.floor().to_usize().unwrap_or(0).min(n - 1);
        let frac = s - T::from_usize_lossy(k);
        self.knots[k] + frac * (self.knots[k + 1] - self.knots[k])
    }

    /// Value at the rational time `num/den`, computed without rounding `t`.
    fn eval_ratio(&self, num: usize, den: usize) -> T {
        let n = self.n();
        let scaled = num * n;
        let k = (scaled / den).min(n - 1);
        let rem = scaled - k * den;
        if rem == 0 {
            return self.knots[k];
        }
        let frac = T::from_usize_lossy(rem) / T::from_usize_lossy(den);
        self.knots[k] + frac * (self.knots[k + 1] - self.knots[k])
    }

    pub fn map_knots(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            knots: self.knots.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// `max_t |x(t) − y(t)|`, exact: the difference is linear between points of
/// the merged knot grid.
pub fn sup_norm_distance<T: Real>(x: &BrokenLine<T>, y: &BrokenLine<T>) -> T {
    let (nx, ny) = (x.n(), y.n());
    if nx == ny {
        return x
            .knots
            .iter()
            .zip(&y.knots)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
    }
    let mut best = T::zero();
    for k in 0..=nx {
        best = best.max((x.knots[k] - y.eval_ratio(k, nx)).abs());
    }
    for j in 0..=ny {
        best = best.max((x.eval_ratio(j, ny) - y.knots[j]).abs());
    }
    best
}

/// Origin of a path sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    AdaptiveSn,
    ClassicalSn,
    WienerBn,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AdaptiveSn => "adaptive-S_n",
            Self::ClassicalSn => "classical-S_n",
            Self::WienerBn => "wiener-B_n",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = PathError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive-S_n" => Ok(Self::AdaptiveSn),
            "classical-S_n" => Ok(Self::ClassicalSn),
            "wiener-B_n" => Ok(Self::WienerBn),
            other => Err(PathError::Format(format!("unknown provenance {other:?}"))),
        }
    }
}

/// Homogeneous collection of broken lines with a provenance tag.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample<T> {
    provenance: Provenance,
    lines: Vec<BrokenLine<T>>,
}

impl<T: Real> PathSample<T> {
    pub fn new(provenance: Provenance, lines: Vec<BrokenLine<T>>) -> Result<Self, PathError> {
        if let Some(first) = lines.first() {
            if let Some(bad) = lines.iter().find(|l| l.n() != first.n()) {
                return Err(PathError::Heterogeneous(first.n(), bad.n()));
            }
        }
        Ok(Self { provenance, lines })
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn lines(&self) -> &[BrokenLine<T>] {
        &self.lines
    }

    pub fn into_lines(self) -> Vec<BrokenLine<T>> {
        self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn n(&self) -> Option<usize> {
        self.lines.first().map(BrokenLine::n)
    }

    /// CSV: a `# provenance=...,n=...` line, a `knot_0..knot_n` header, one
    /// row per path.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), PathError> {
        let n = self.n().unwrap_or(0);
        writeln!(out, "# provenance={},n={}", self.provenance, n)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..=n).map(|k| format!("knot_{k}")))?;
        for line in &self.lines {
            w.write_record(line.knots.iter().map(|x| format!("{x:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self, PathError> {
        let mut meta = String::new();
        input.read_line(&mut meta)?;
        let meta = meta
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| PathError::Format("missing metadata line".into()))?;
        let (mut provenance, mut n) = (None, None);
        for field in meta.split(',') {
            match field.trim().split_once('=') {
                Some(("provenance", v)) => provenance = Some(v.parse::<Provenance>()?),
                Some(("n", v)) => {
                    n = Some(v.parse::<usize>().map_err(|e| PathError::Format(e.to_string()))?)
                }
                _ => return Err(PathError::Format(format!("bad metadata field {field:?}"))),
            }
        }
        let provenance = provenance.ok_or_else(|| PathError::Format("no provenance".into()))?;
        let n = n.ok_or_else(|| PathError::Format("no n".into()))?;
        let mut rdr = csv::Reader::from_reader(input);
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let knots = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| PathError::Format(e.to_string()))
                })
                .collect::<Result<Vec<T>, _>>()?;
            if knots.len() != n + 1 {
                return Err(PathError::Format(format!("row with {} knots, expected {}", knots.len(), n + 1)));
            }
            lines.push(BrokenLine::new(knots)?);
        }
        Self::new(provenance, lines)
    }
}

/// `B_n`: knots are partial sums of i.i.d. `N(0, 1/n)` increments.
pub fn simulate_wiener_broken<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> BrokenLine<T> {
    assert!(n >= 1, "n must be positive");
    let sd = (n as f64).recip().sqrt();
    BrokenLine::from_increments((0..n).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        T::lit(sd * z)
    }))
    .expect("finite gaussian increments")
}

/// `count` independent Wiener broken lines; path `i` uses the stream
/// `(group, i)` of the master seed.
pub fn simulate_wiener_sample<T: Real>(n: usize, count: usize, master_seed: u64, group: u32) -> PathSample<T> {
    let lines = (0..count)
        .into_par_iter()
        .map(|i| simulate_wiener_broken(n, &mut task_rng(master_seed, stream_id(group, i as u32))))
        .collect();
    PathSample::new(Provenance::WienerBn, lines).expect("homogeneous by construction")
}

/// Inserts `m − 1` Brownian-bridge points in every knot interval.
///
/// Points are drawn sequentially: from value `v` at distance `rem` before
/// the right endpoint value `b`, the next point (step `δ`) is
/// `N(v + (b − v)δ/rem, δ(rem − δ)/rem)`.
pub fn refine_wiener<T: Real, R: Rng + ?Sized>(
    line: &BrokenLine<T>,
    m: usize,
    rng: &mut R,
) -> Result<BrokenLine<T>, PathError> {
    if m < 2 {
        return Err(PathError::Argument(format!("refinement factor must be >= 2, got {m}")));
    }
    let n = line.n();
    let delta = 1.0 / (n * m) as f64;
    let mut knots = Vec::with_capacity(n * m + 1);
    knots.push(line.knots[0]);
    for w in line.knots.windows(2) {
        let (left, right) = (w[0].as_f64(), w[1].as_f64());
        let mut v = left;
        for j in 1..m {
            let rem = (m - j + 1) as f64 * delta;
            let mean = v + (right - v) * delta / rem;
            let var = delta * (rem - delta) / rem;
            let z: f64 = StandardNormal.sample(rng);
            v = mean + var.sqrt() * z;
            knots.push(T::lit(v));
        }
        knots.push(w[1]);
    }
    BrokenLine::new(knots)
}

/// `S_n(k/n) = n^{-1/2} Σ_{i≤k} (x_i − μ)/σ`.
pub fn build_sn_classical<T: Real>(xs: &[T], mu: T, sigma: T) -> Result<BrokenLine<T>, PathError> {
    if xs.is_empty() {
        return Err(PathError::Argument("need at least one summand".into()));
    }
    if !(sigma > T::zero()) {
        return Err(PathError::Argument(format!("sigma must be positive, got {sigma}")));
    }
    let scale = sigma * T::from_usize_lossy(xs.len()).sqrt();
    BrokenLine::from_increments(xs.iter().map(|&x| (x - mu) / scale))
}

/// Adaptive line: `W_k = W_{k−1} + (X_k − μ_k(W_{k−1}))/(σ_k(W_{k−1})√n)`.
///
/// `sampler(k, w)` draws `X_k` given the state before step `k`. Every
/// realized pair is checked against the envelope (`μ_k ∈ [μ̲, μ̄]`,
/// `σ̲(μ_k) ≤ σ_k ≤ σ̄(μ_k)`, with a relative slack of `1e-9`).
pub fn build_sn_adaptive<R, S>(
    mut sampler: S,
    rule: &R,
    env: &MomentEnvelope,
    n: usize,
) -> Result<BrokenLine<f64>, PathError>
where
    R: StepRule + ?Sized,
    S: FnMut(usize, f64) -> f64,
{
    if n == 0 {
        return Err(PathError::Argument("n must be positive".into()));
    }
    let sqrt_n = (n as f64).sqrt();
    let tol = 1e-9;
    let mut knots = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    knots.push(w);
    for k in 1..=n {
        let (mu, sigma) = rule.step_params(k, w);
        let spread = tol * (1.0 + env.mu_low.abs().max(env.mu_high.abs()));
        let inside = sigma > 0.0
            && mu >= env.mu_low - spread
            && mu <= env.mu_high + spread
            && sigma >= env.sigma_low_at(mu) * (1.0 - tol)
            && sigma <= env.sigma_high_at(mu) * (1.0 + tol);
        if !inside {
            return Err(PathError::InvariantBreach { k, mu, sigma });
        }
        let x = sampler(k, w);
        w += (x - mu) / (sigma * sqrt_n);
        knots.push(w);
    }
    BrokenLine::new(knots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{ConstantRule, FnRule};
    use crate::scenario::{moment_envelope, ScenarioFamily, ScenarioLaw};
    use approx::assert_relative_eq;

    #[test]
    fn basis_examples() {
        let n = 5;
        for i in 1..=n {
            assert_eq!(basis_e(i, n, (i - 1) as f64 / n as f64), 0.0);
            assert_eq!(basis_e(i, n, i as f64 / n as f64), 1.0);
        }
        assert_eq!(basis_e(0, n, 0.37), 1.0);
        assert_eq!(basis_e(n + 1, n, 0.99), 0.0);
        for k in 0..=4 * n {
            let t = k as f64 / (4 * n) as f64;
            assert!(basis_telescoping_sum(n, t) <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn sup_norm_examples() {
        let x = BrokenLine::new(vec![0.0, 0.5, -0.2, 1.0]).unwrap();
        assert_eq!(sup_norm_distance(&x, &x), 0.0);
        let mut k = x.knots().to_vec();
        k[2] += 0.3;
        let y = BrokenLine::new(k).unwrap();
        assert_relative_eq!(sup_norm_distance(&x, &y), 0.3, epsilon = 1e-15);
        let z = BrokenLine::new(vec![0.0, 1.0]).unwrap();
        // 9999 = 3 * 3333, so the dense grid contains every knot of x
        let dense = (0..=9_999)
            .map(|i| {
                let t = i as f64 / 9_999.0;
                (x.eval(t) - z.eval(t)).abs()
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(sup_norm_distance(&x, &z), dense, epsilon = 1e-12);
    }

    #[test]
    fn classical_line_examples() {
        let zero = build_sn_classical(&[0.3, 0.3, 0.3], 0.3, 2.0).unwrap();
        assert!(zero.knots().iter().all(|&v| v == 0.0));
        let one = build_sn_classical(&[1.5], 0.5, 1.0).unwrap();
        assert_eq!(one.knots(), &[0.0, 1.0]);
        let xs = [0.2, -1.0, 0.7];
        let a = build_sn_classical(&xs, 0.1, 1.3).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| 0.1 + 2.5 * (x - 0.1)).collect();
        let b = build_sn_classical(&scaled, 0.1, 1.3).unwrap();
        for (u, v) in a.knots().iter().zip(b.knots()) {
            assert_relative_eq!(2.5 * u, *v, epsilon = 1e-14);
        }
    }

    #[test]
    fn f32_lines() {
        let x = BrokenLine::<f32>::new(vec![0.0, 0.5, 1.0]).unwrap();
        let y = BrokenLine::<f32>::new(vec![0.0, 1.0]).unwrap();
        assert!(sup_norm_distance(&x, &y) < 1e-6);
    }

    #[test]
    fn csv_roundtrip() {
        let mut rng = task_rng(5, 0);
        let lines = (0..3).map(|_| simulate_wiener_broken::<f64, _>(4, &mut rng)).collect();
        let s = PathSample::new(Provenance::WienerBn, lines).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# provenance=wiener-B_n,n=4\nknot_0,knot_1,knot_2,knot_3,knot_4\n"));
        let back = PathSample::<f64>::read_csv(&buf[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn refinement_pins_coarse_knots() {
        let mut rng = task_rng(9, 1);
        let coarse: BrokenLine<f64> = simulate_wiener_broken(3, &mut rng);
        let fine = refine_wiener(&coarse, 4, &mut rng).unwrap();
        assert_eq!(fine.n(), 12);
        for k in 0..=3 {
            assert_eq!(fine.knots()[4 * k], coarse.knots()[k]);
        }
        assert!(refine_wiener(&coarse, 1, &mut rng).is_err());
    }

    #[test]
    fn adaptive_matches_classical_for_constant_rule() {
        let fam = ScenarioFamily::new(vec![ScenarioLaw::uniform(-1.0, 1.0).unwrap()]).unwrap();
        let env = moment_envelope(&fam, 16).unwrap();
        let sigma = (1.0f64 / 3.0).sqrt();
        let xs = [0.3, -0.9, 0.5, 0.1];
        let rule = ConstantRule { mu: 0.0, sigma };
        let a = build_sn_adaptive(|k, _| xs[k - 1], &rule, &env, 4).unwrap();
        let c = build_sn_classical(&xs, 0.0, sigma).unwrap();
        for (u, v) in a.knots().iter().zip(c.knots()) {
            assert_relative_eq!(u, v, epsilon = 1e-15);
        }
        let bad = ConstantRule { mu: 0.0, sigma: 2.0 };
        assert!(matches!(
            build_sn_adaptive(|_, _| 0.0, &bad, &env, 2),
            Err(PathError::InvariantBreach { k: 1, .. })
        ));
    }

    #[test]
    fn two_step_enumeration() {
        let fam = ScenarioFamily::new(vec![
            ScenarioLaw::discrete(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
            ScenarioLaw::discrete(vec![-2.0, 2.0], vec![0.5, 0.5]).unwrap(),
        ])
        .unwrap();
        let env = moment_envelope(&fam, 16).unwrap();
        let rule = FnRule(|k: usize, w: f64| if k == 1 { (0.0, 1.0) } else if w > 0.0 { (0.0, 2.0) } else { (0.0, 1.5) });
        let s2 = 2f64.sqrt();
        for (x1, x2) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            let xs = [x1, x2];
            let line = build_sn_adaptive(|k, _| xs[k - 1], &rule, &env, 2).unwrap();
            let w1 = x1 / s2;
            let s = if w1 > 0.0 { 2.0 } else { 1.5 };
            assert_relative_eq!(line.knots()[1], w1, epsilon = 1e-15);
            assert_relative_eq!(line.knots()[2], w1 + x2 / (s * s2), epsilon = 1e-15);
        }
    }

    #[test]
    fn increments_bounded_by_envelope() {
        let fam = ScenarioFamily::new(vec![
            ScenarioLaw::gaussian(-0.2, 0.8).unwrap(),
            ScenarioLaw::gaussian(0.1, 1.2).unwrap(),
        ])
        .unwrap();
        let env = moment_envelope(&fam, 64).unwrap();
        let rule = FnRule(|_k: usize, w: f64| {
            let mu = if w > 0.0 { env.mu_high } else { env.mu_low };
            (mu, env.sigma_high_at(mu))
        });
        let mut rng = task_rng(3, 3);
        let n = 16;
        let mut xs = Vec::new();
        let line = build_sn_adaptive(
            |_, _| {
                let x = fam.laws()[rng.random_range(0..2)].sample(&mut rng);
                xs.push(x);
                x
            },
            &rule,
            &env,
            n,
        )
        .unwrap();
        let m = env.mu_low.abs().max(env.mu_high.abs());
        for (k, w) in line.knots().windows(2).enumerate() {
            let bound = (xs[k].abs() + m) / (env.sigma_low * (n as f64).sqrt());
            assert!((w[1] - w[0]).abs() <= bound + 1e-12);
        }
    }
}
