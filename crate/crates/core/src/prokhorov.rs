//! One-sided deficiency and Lévy–Prokhorov distance between uniform
//! empirical measures.
//!
//! For `P`, `Q` with `|P|`, `|Q|` atoms,
//! `def(P, Q, ε) = max_S [P(S) − Q(S^ε)]` over atom subsets `S` equals
//! `1 − F/L`, where `F` is the maximum flow of the bipartite network
//! `source → i` (capacity `L/|P|`), `i → j` when `d(i, j) ≤ ε` (capacity `L`),
//! `j → sink` (capacity `L/|Q|`) and `L = lcm(|P|, |Q|)`. All capacities are
//! integers, so the flow and the deficiency are exact.
//!
//! Neighbourhoods are closed (`d ≤ ε`). Against open neighbourhoods this only
//! changes the deficiency at finitely many `ε`, and not the distance.

use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::paths::PathSample;
use crate::real::Real;

/// Size limit of the subset-enumeration oracle.
pub const BRUTEFORCE_MAX_ATOMS: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum ProkhorovError {
    #[error("empirical measure needs at least one atom")]
    Empty,
    #[error("atoms have mixed dimensions ({0} and {1})")]
    Dimension(usize, usize),
    #[error("metrics differ: {0:?} vs {1:?}")]
    MetricMismatch(Metric, Metric),
    #[error("non-finite atom coordinate")]
    NonFinite,
    #[error("brute force limited to {BRUTEFORCE_MAX_ATOMS} atoms per measure, got {0}")]
    TooLarge(usize),
    #[error("epsilon must be nonnegative, got {0}")]
    BadEpsilon(f64),
    #[error("malformed atom csv: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `|x − y|` on the line.
    AbsoluteDifference,
    /// `max_k |x_k − y_k|` on knot vectors (broken lines with equal `n`).
    SupNorm,
}

/// Equal-weight atoms in `ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<T> {
    atoms: Vec<Vec<T>>,
    metric: Metric,
}

impl<T: Real> EmpiricalMeasure<T> {
    pub fn new(atoms: Vec<Vec<T>>, metric: Metric) -> Result<Self, ProkhorovError> {
        let first = atoms.first().ok_or(ProkhorovError::Empty)?;
        let d = first.len();
        for a in &atoms {
            if a.len() != d {
                return Err(ProkhorovError::Dimension(d, a.len()));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(ProkhorovError::NonFinite);
            }
        }
        if metric == Metric::AbsoluteDifference && d != 1 {
            return Err(ProkhorovError::Dimension(1, d));
        }
        Ok(Self { atoms, metric })
    }

    pub fn from_reals(xs: &[T]) -> Result<Self, ProkhorovError> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), Metric::AbsoluteDifference)
    }

    /// Knot vectors of a path sample under the sup-norm.
    pub fn from_paths(sample: &PathSample<T>) -> Result<Self, ProkhorovError> {
        Self::new(
            sample.lines().iter().map(|l| l.knots().to_vec()).collect(),
            Metric::SupNorm,
        )
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<T>] {
        &self.atoms
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Sub-measure on the given atom indices (repeats allowed).
    pub fn resample(&self, indices: &[usize]) -> Result<Self, ProkhorovError> {
        Self::new(indices.iter().map(|&i| self.atoms[i].clone()).collect(), self.metric)
    }

    fn distance(&self, a: &[T], b: &[T]) -> T {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs())
            .fold(T::zero(), T::max)
    }
}

/// Row-major `|P| × |Q|` distance matrix.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<T> {
    rows: usize,
    cols: usize,
    d: Vec<T>,
}

impl<T: Real> DistanceMatrix<T> {
    pub fn new(p: &EmpiricalMeasure<T>, q: &EmpiricalMeasure<T>) -> Result<Self, ProkhorovError> {
        if p.metric != q.metric {
            return Err(ProkhorovError::MetricMismatch(p.metric, q.metric));
        }
        if p.atoms[0].len() != q.atoms[0].len() {
            return Err(ProkhorovError::Dimension(p.atoms[0].len(), q.atoms[0].len()));
        }
        let d: Vec<T> = p
            .atoms
            .par_iter()
            .flat_map_iter(|a| q.atoms.iter().map(move |b| p.distance(a, b)))
            .collect();
        Ok(Self {
            rows: p.len(),
            cols: q.len(),
            d,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.d[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut d = Vec::with_capacity(self.d.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                d.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            d,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// `def(P, Q, ε)` with a maximizing subset of `P`-atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficiencyReport<T> {
    pub epsilon: T,
    pub deficiency: T,
    pub witness_indices: Vec<usize>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Dinic max-flow on integer capacities.
struct FlowNetwork {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<i64>,
    next: Vec<usize>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl FlowNetwork {
    fn new(nodes: usize, edge_hint: usize) -> Self {
        Self {
            head: vec![NIL; nodes],
            to: Vec::with_capacity(2 * edge_hint),
            cap: Vec::with_capacity(2 * edge_hint),
            next: Vec::with_capacity(2 * edge_hint),
            level: vec![-1; nodes],
            iter: vec![NIL; nodes],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: i64) {
        for (a, b, cap) in [(u, v, c), (v, u, 0)] {
            self.to.push(b);
            self.cap.push(cap);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() - 1;
        }
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut e = self.head[u];
            while e != NIL {
                let v = self.to[e];
                if self.cap[e] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
                e = self.next[e];
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, f: i64) -> i64 {
        if u == t {
            return f;
        }
        while self.iter[u] != NIL {
            let e = self.iter[u];
            let v = self.to[e];
            if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                let d = self.dfs(v, t, f.min(self.cap[e]));
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            self.iter[u] = self.next[e];
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.clone_from(&self.head);
            loop {
                let f = self.dfs(s, t, i64::MAX);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph (after `max_flow`).
    fn reachable(&mut self, s: usize) -> Vec<bool> {
        self.bfs(s);
        self.level.iter().map(|&l| l >= 0).collect()
    }
}

/// Exact integer deficiency `L·def` and the witness set.
fn deficiency_units<T: Real>(dm: &DistanceMatrix<T>, eps: T) -> (usize, usize, Vec<usize>) {
    let (np, nq) = dm.shape();
    let l = lcm(np, nq);
    let (src, sink) = (np + nq, np + nq + 1);
    let mut net = FlowNetwork::new(np + nq + 2, np + nq + np * nq / 4);
    for i in 0..np {
        net.add_edge(src, i, (l / np) as i64);
    }
    for j in 0..nq {
        net.add_edge(np + j, sink, (l / nq) as i64);
    }
    for i in 0..np {
        for j in 0..nq {
            if dm.get(i, j) <= eps {
                net.add_edge(i, np + j, l as i64);
            }
        }
    }
    let flow = net.max_flow(src, sink) as usize;
    let reach = net.reachable(src);
    let witness = (0..np).filter(|&i| reach[i]).collect();
    (l - flow, l, witness)
}

fn check_eps<T: Real>(eps: T) -> Result<(), ProkhorovError> {
    if !(eps >= T::zero()) {
        return Err(ProkhorovError::BadEpsilon(eps.as_f64()));
    }
    Ok(())
}

/// `sup_S [P(S) − Q(S^ε)]` by max-flow, with the min-cut witness.
pub fn deficiency<T: Real>(
    p: &EmpiricalMeasure<T>,
    q: &EmpiricalMeasure<T>,
    eps: T,
) -> Result<DeficiencyReport<T>, ProkhorovError> {
    check_eps(eps)?;
    let dm = DistanceMatrix::new(p, q)?;
    Ok(deficiency_with(&dm, eps))
}

pub fn deficiency_with<T: Real>(dm: &DistanceMatrix<T>, eps: T) -> DeficiencyReport<T> {
    let (units, l, witness) = deficiency_units(dm, eps);
    DeficiencyReport {
        epsilon: eps,
        deficiency: T::from_usize_lossy(units) / T::from_usize_lossy(l),
        witness_indices: witness,
    }
}

/// Sorted, deduplicated break points: distances `≤ 1` and levels `k/L`.
fn candidates<T: Real>(dms: &[&DistanceMatrix<T>]) -> Vec<T> {
    let (np, nq) = dms[0].shape();
    let l = lcm(np, nq);
    let lf = T::from_usize_lossy(l);
    let mut c: Vec<T> = (0..=l).map(|k| T::from_usize_lossy(k) / lf).collect();
    c.extend(dms[0].d.iter().copied().filter(|&d| d <= T::one()));
    c.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    c.dedup();
    c
}

/// Smallest candidate where the monotone predicate holds.
fn first_valid<T: Real, F: FnMut(T) -> bool>(cands: &[T], mut valid: F) -> T {
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    // the last candidate is 1, always valid
    while lo < hi {
        let mid = (lo + hi) / 2;
        if valid(cands[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    cands[lo]
}

/// `inf{ε > 0 : def(P, Q, ε) ≤ ε}`.
pub fn one_sided_prokhorov<T: Real>(p: &EmpiricalMeasure<T>, q: &EmpiricalMeasure<T>) -> Result<T, ProkhorovError> {
    let dm = DistanceMatrix::new(p, q)?;
    Ok(one_sided_with(&dm))
}

pub fn one_sided_with<T: Real>(dm: &DistanceMatrix<T>) -> T {
    let cands = candidates(&[dm]);
    first_valid(&cands, |eps| {
        let (units, l, _) = deficiency_units(dm, eps);
        T::from_usize_lossy(units) / T::from_usize_lossy(l) <= eps
    })
}

/// `inf{ε > 0 : max(def(P, Q, ε), def(Q, P, ε)) ≤ ε}`.
pub fn prokhorov_distance<T: Real>(p: &EmpiricalMeasure<T>, q: &EmpiricalMeasure<T>) -> Result<T, ProkhorovError> {
    let dm = DistanceMatrix::new(p, q)?;
    Ok(prokhorov_with(&dm))
}

pub fn prokhorov_with<T: Real>(dm: &DistanceMatrix<T>) -> T {
    let dt = dm.transpose();
    let cands = candidates(&[dm]);
    first_valid(&cands, |eps| {
        let (u1, l, _) = deficiency_units(dm, eps);
        let (u2, _, _) = deficiency_units(&dt, eps);
        T::from_usize_lossy(u1.max(u2)) / T::from_usize_lossy(l) <= eps
    })
}

/// Subset-enumeration deficiency (`|P|, |Q| ≤ 12`).
pub fn bruteforce_deficiency<T: Real>(
    p: &EmpiricalMeasure<T>,
    q: &EmpiricalMeasure<T>,
    eps: T,
) -> Result<DeficiencyReport<T>, ProkhorovError> {
    check_eps(eps)?;
    check_small(p, q)?;
    let dm = DistanceMatrix::new(p, q)?;
    let (num, den, mask) = brute_units(&dm, eps);
    Ok(DeficiencyReport {
        epsilon: eps,
        deficiency: T::from_usize_lossy(num) / T::from_usize_lossy(den),
        witness_indices: (0..p.len()).filter(|i| mask & (1 << i) != 0).collect(),
    })
}

fn check_small<T>(p: &EmpiricalMeasure<T>, q: &EmpiricalMeasure<T>) -> Result<(), ProkhorovError> {
    let m = p.atoms.len().max(q.atoms.len());
    if m > BRUTEFORCE_MAX_ATOMS {
        return Err(ProkhorovError::TooLarge(m));
    }
    Ok(())
}

/// `max_S (|S|·|Q| − |N(S)|·|P|)` over subsets, as `(numerator, |P||Q|, S)`.
fn brute_units<T: Real>(dm: &DistanceMatrix<T>, eps: T) -> (usize, usize, u32) {
    let (np, nq) = dm.shape();
    let near: Vec<u32> = (0..np)
        .map(|i| (0..nq).filter(|&j| dm.get(i, j) <= eps).fold(0u32, |m, j| m | (1 << j)))
        .collect();
    let mut nb = vec![0u32; 1 << np];
    let (mut best, mut arg) = (0i64, 0u32);
    for s in 1usize..(1 << np) {
        let low = s.trailing_zeros() as usize;
        nb[s] = nb[s & (s - 1)] | near[low];
        let v = (s.count_ones() as i64) * nq as i64 - (nb[s].count_ones() as i64) * np as i64;
        if v > best {
            best = v;
            arg = s as u32;
        }
    }
    (best as usize, np * nq, arg)
}

fn brute_candidates<T: Real>(dm: &DistanceMatrix<T>) -> Vec<T> {
    let (np, nq) = dm.shape();
    let den = np * nq;
    let mut c: Vec<T> = (0..=den)
        .map(|k| T::from_usize_lossy(k) / T::from_usize_lossy(den))
        .collect();
    c.extend(dm.d.iter().copied().filter(|&d| d <= T::one()));
    c.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    c.dedup();
    c
}

/// One-sided distance by subset enumeration and a linear candidate scan.
pub fn bruteforce_one_sided<T: Real>(p: &EmpiricalMeasure<T>, q: &EmpiricalMeasure<T>) -> Result<T, ProkhorovError> {
    check_small(p, q)?;
    let dm = DistanceMatrix::new(p, q)?;
    Ok(brute_candidates(&dm)
        .into_iter()
        .find(|&eps| {
            let (num, den, _) = brute_units(&dm, eps);
            T::from_usize_lossy(num) / T::from_usize_lossy(den) <= eps
        })
        .unwrap_or_else(T::one))
}

/// Two-sided distance by subset enumeration and a linear candidate scan.
pub fn bruteforce_prokhorov<T: Real>(p: &EmpiricalMeasure<T>, q: &EmpiricalMeasure<T>) -> Result<T, ProkhorovError> {
    check_small(p, q)?;
    let dm = DistanceMatrix::new(p, q)?;
    let dt = dm.transpose();
    Ok(brute_candidates(&dm)
        .into_iter()
        .find(|&eps| {
            let (a, den, _) = brute_units(&dm, eps);
            let (b, _, _) = brute_units(&dt, eps);
            T::from_usize_lossy(a.max(b)) / T::from_usize_lossy(den) <= eps
        })
        .unwrap_or_else(T::one))
}

/// Reads one atom per row. Lines starting with `#` are skipped, as is a
/// first row that does not parse as numbers (a header).
pub fn read_atoms_csv<R: Read>(input: R, metric: Metric) -> Result<EmpiricalMeasure<f64>, ProkhorovError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut atoms = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => atoms.push(v),
            Err(_) if row == 0 => continue,
            Err(e) => return Err(ProkhorovError::Format(format!("row {}: {e}", row + 1))),
        }
    }
    EmpiricalMeasure::new(atoms, metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;
    use rand::Rng;

    fn reals(xs: &[f64]) -> EmpiricalMeasure<f64> {
        EmpiricalMeasure::from_reals(xs).unwrap()
    }

    #[test]
    fn identical_measures() {
        let p = reals(&[0.1, 0.5, -2.0]);
        assert_eq!(deficiency(&p, &p, 0.0).unwrap().deficiency, 0.0);
        assert_eq!(prokhorov_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(one_sided_prokhorov(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn point_masses() {
        for a in [0.3, 0.9, 1.0, 2.5] {
            let (p, q) = (reals(&[0.0]), reals(&[a]));
            assert_eq!(deficiency(&p, &q, a * 0.99).unwrap().deficiency, 1.0);
            assert_eq!(deficiency(&p, &q, a).unwrap().deficiency, 0.0);
            assert_eq!(prokhorov_distance(&p, &q).unwrap(), a.min(1.0));
            assert_eq!(bruteforce_prokhorov(&p, &q).unwrap(), a.min(1.0));
        }
    }

    #[test]
    fn witness_attains_deficiency() {
        let p = reals(&[0.0, 0.1, 3.0]);
        let q = reals(&[0.05, 5.0]);
        let r = deficiency(&p, &q, 0.2).unwrap();
        // S = {0, 1, 2}: 1 − Q({0.05}) = 1/2
        assert_eq!(r.deficiency, 0.5);
        let s = &r.witness_indices;
        let ps = s.len() as f64 / 3.0;
        let qn = [0.05, 5.0]
            .iter()
            .filter(|&&y| s.iter().any(|&i| (p.atoms()[i][0] - y).abs() <= 0.2))
            .count() as f64
            / 2.0;
        assert_eq!(ps - qn, r.deficiency);
        let js = serde_json::to_string(&r).unwrap();
        assert!(js.contains("\"witness_indices\""));
    }

    #[test]
    fn flow_matches_bruteforce_on_random_instances() {
        let mut rng = task_rng(11, 0);
        for _ in 0..100 {
            let np = rng.random_range(1..=6);
            let nq = rng.random_range(1..=6);
            let p: Vec<f64> = (0..np).map(|_| (rng.random::<f64>() * 20.0).round() / 10.0).collect();
            let q: Vec<f64> = (0..nq).map(|_| (rng.random::<f64>() * 20.0).round() / 10.0).collect();
            let (p, q) = (reals(&p), reals(&q));
            for eps in [0.0, 0.1, 0.25, 0.5, 1.0] {
                assert_eq!(
                    deficiency(&p, &q, eps).unwrap().deficiency,
                    bruteforce_deficiency(&p, &q, eps).unwrap().deficiency
                );
            }
            assert_eq!(prokhorov_distance(&p, &q).unwrap(), bruteforce_prokhorov(&p, &q).unwrap());
            assert_eq!(one_sided_prokhorov(&p, &q).unwrap(), bruteforce_one_sided(&p, &q).unwrap());
        }
    }

    #[test]
    fn one_sided_below_two_sided() {
        let mut rng = task_rng(12, 0);
        for _ in 0..30 {
            let p: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
            let q: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0).collect();
            let (p, q) = (reals(&p), reals(&q));
            let d = prokhorov_distance(&p, &q).unwrap();
            assert!(one_sided_prokhorov(&p, &q).unwrap() <= d);
            assert_eq!(d, prokhorov_distance(&q, &p).unwrap());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(EmpiricalMeasure::<f64>::from_reals(&[]).is_err());
        let p = reals(&[0.0]);
        let q = EmpiricalMeasure::new(vec![vec![0.0, 1.0]], Metric::SupNorm).unwrap();
        assert!(deficiency(&p, &q, 0.1).is_err());
        assert!(deficiency(&p, &p, -0.1).is_err());
        let big = reals(&[0.0; 13]);
        assert!(matches!(bruteforce_prokhorov(&big, &p), Err(ProkhorovError::TooLarge(13))));
    }

    #[test]
    fn csv_atoms() {
        let text = "x\n0.5\n# note\n-1.25\n";
        let m = read_atoms_csv(text.as_bytes(), Metric::AbsoluteDifference).unwrap();
        assert_eq!(m.atoms(), &[vec![0.5], vec![-1.25]]);
        let paths = "# provenance=wiener-B_n,n=2\nknot_0,knot_1,knot_2\n0.0,0.1,0.2\n0.0,-0.3,0.4\n";
        let m = read_atoms_csv(paths.as_bytes(), Metric::SupNorm).unwrap();
        assert_eq!(m.len(), 2);
        assert!(read_atoms_csv("1.0\nabc\n".as_bytes(), Metric::AbsoluteDifference).is_err());
    }

    #[test]
    fn f32_measures() {
        let p = EmpiricalMeasure::<f32>::from_reals(&[0.0, 0.5]).unwrap();
        let q = EmpiricalMeasure::<f32>::from_reals(&[0.25]).unwrap();
        let d = prokhorov_distance(&p, &q).unwrap();
        assert_eq!(d, bruteforce_prokhorov(&p, &q).unwrap());
    }
}
