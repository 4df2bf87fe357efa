//! Copulas (independence, comonotone, FGM) and the Sklar assembly of
//! dependent vectors.

use serde::Serialize;

use crate::dists::{Counting, Marginal};
use crate::error::{invalid, Error, Result};
use crate::rng::Stream;

/// Largest FGM dimension accepted; admissibility enumerates `2^n` vertices.
pub const FGM_MAX_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Copula {
    Independence { n: usize },
    Comonotone { n: usize },
    Fgm(FgmCopula),
}

/// Farlie–Gumbel–Morgenstern copula with pairwise parameters
/// `C(u) = prod u_k * (1 + sum_{i<j} a_ij (1 - u_i)(1 - u_j))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FgmCopula {
    n: usize,
    a: Vec<Vec<f64>>,
    #[serde(skip)]
    pairs: Vec<(usize, usize, f64)>,
    #[serde(skip)]
    bounds: (f64, f64),
}

/// Outcome of the vertex admissibility check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// First sign vector (in `+` before `-` lexicographic order) at which
    /// the density is negative.
    pub witness: Option<Vec<i8>>,
    /// Smallest vertex value of `1 + sum a_ij e_i e_j`.
    pub min_vertex: f64,
    pub max_vertex: f64,
}

/// Checks `1 + sum_{i<j} a_ij e_i e_j >= 0` on every vertex `e` of `{-1,+1}^n`.
pub fn fgm_admissible(a: &[Vec<f64>]) -> Result<Admissibility> {
    let n = a.len();
    if n < 2 {
        return Err(invalid("FGM matrix must be at least 2x2"));
    }
    if n > FGM_MAX_DIM {
        return Err(invalid(format!(
            "FGM dimension {n} exceeds the supported maximum {FGM_MAX_DIM}"
        )));
    }
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(invalid("FGM matrix must be square"));
        }
        if row[i] != 0.0 {
            return Err(invalid("FGM matrix must have a zero diagonal"));
        }
        for j in 0..n {
            if !row[j].is_finite() || row[j] != a[j][i] {
                return Err(invalid(format!("FGM matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    let pairs = upper_pairs(a);
    let mut witness = None;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut signs = vec![0i8; n];
    for mask in 0u32..(1u32 << n) {
        for (i, s) in signs.iter_mut().enumerate() {
            *s = if mask >> (n - 1 - i) & 1 == 0 { 1 } else { -1 };
        }
        let v = 1.0
            + pairs
                .iter()
                .map(|&(i, j, aij)| aij * f64::from(signs[i] * signs[j]))
                .sum::<f64>();
        if v < 0.0 && witness.is_none() {
            witness = Some(signs.clone());
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(Admissibility {
        admissible: witness.is_none(),
        witness,
        min_vertex: lo,
        max_vertex: hi,
    })
}

fn upper_pairs(a: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate().skip(i + 1) {
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

impl FgmCopula {
    pub fn new(a: Vec<Vec<f64>>) -> Result<Self> {
        let check = fgm_admissible(&a)?;
        if let Some(witness) = check.witness {
            return Err(Error::InadmissibleFgm {
                witness,
                value: check.min_vertex,
            });
        }
        let pairs = upper_pairs(&a);
        Ok(Self {
            n: a.len(),
            a,
            pairs,
            bounds: (check.min_vertex, check.max_vertex),
        })
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn param(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    fn density(&self, u: &[f64]) -> f64 {
        1.0 + self
            .pairs
            .iter()
            .map(|&(i, j, a)| a * (1.0 - 2.0 * u[i]) * (1.0 - 2.0 * u[j]))
            .sum::<f64>()
    }
}

impl Copula {
    pub fn independence(n: usize) -> Result<Self> {
        check_dim(n, 1)?;
        Ok(Copula::Independence { n })
    }

    pub fn comonotone(n: usize) -> Result<Self> {
        check_dim(n, 1)?;
        Ok(Copula::Comonotone { n })
    }

    pub fn fgm(a: Vec<Vec<f64>>) -> Result<Self> {
        Ok(Copula::Fgm(FgmCopula::new(a)?))
    }

    /// Bivariate FGM with parameter `a`.
    pub fn fgm2(a: f64) -> Result<Self> {
        Self::fgm(vec![vec![0.0, a], vec![a, 0.0]])
    }

    /// n-variate FGM with every off-diagonal entry equal to `a`.
    pub fn fgm_uniform(n: usize, a: f64) -> Result<Self> {
        check_dim(n, 2)?;
        let m = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { a }).collect())
            .collect();
        Self::fgm(m)
    }

    pub fn dim(&self) -> usize {
        match self {
            Copula::Independence { n } | Copula::Comonotone { n } => *n,
            Copula::Fgm(f) => f.n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Copula::Independence { .. } => "independence",
            Copula::Comonotone { .. } => "comonotone",
            Copula::Fgm(_) => "fgm",
        }
    }

    fn check_point(&self, u: &[f64], open: bool) -> Result<()> {
        if u.len() != self.dim() {
            return Err(invalid(format!(
                "point has {} coordinates, copula has {}",
                u.len(),
                self.dim()
            )));
        }
        let ok = |x: f64| {
            if open {
                x > 0.0 && x < 1.0
            } else {
                (0.0..=1.0).contains(&x)
            }
        };
        if let Some(bad) = u.iter().find(|&&x| !ok(x)) {
            return Err(invalid(format!("copula argument {bad} out of range")));
        }
        Ok(())
    }

    /// `C(u)` for `u` in `[0,1]^n`.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u, false)?;
        Ok(match self {
            Copula::Independence { .. } => u.iter().product(),
            Copula::Comonotone { .. } => u.iter().copied().fold(1.0, f64::min),
            Copula::Fgm(f) => {
                let prod: f64 = u.iter().product();
                prod * (1.0
                    + f.pairs
                        .iter()
                        .map(|&(i, j, a)| a * (1.0 - u[i]) * (1.0 - u[j]))
                        .sum::<f64>())
            }
        })
    }

    /// Copula density on the open cube.
    pub fn density(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u, true)?;
        match self {
            Copula::Independence { .. } => Ok(1.0),
            Copula::Comonotone { .. } => Err(not_abs_continuous()),
            Copula::Fgm(f) => Ok(f.density(u)),
        }
    }

    /// Exact `(min, max)` of the density over the cube.
    pub fn density_bounds(&self) -> Result<(f64, f64)> {
        match self {
            Copula::Independence { .. } => Ok((1.0, 1.0)),
            Copula::Comonotone { .. } => Err(not_abs_continuous()),
            Copula::Fgm(f) => Ok(f.bounds),
        }
    }

    /// `1 - C(1 - v)` from the marginal tail levels `v`, without cancellation
    /// when every `v_k` is small.
    pub fn max_exceedance(&self, v: &[f64]) -> f64 {
        let log_prod: f64 = v.iter().map(|&t| (-t).ln_1p()).sum();
        let one_minus_prod = -log_prod.exp_m1();
        match self {
            Copula::Independence { .. } => one_minus_prod,
            Copula::Comonotone { .. } => v.iter().copied().fold(0.0, f64::max),
            Copula::Fgm(f) => {
                let correction: f64 = f.pairs.iter().map(|&(i, j, a)| a * v[i] * v[j]).sum();
                (one_minus_prod - log_prod.exp() * correction).clamp(0.0, 1.0)
            }
        }
    }

    /// `P(U_k > 1 - v_k for all k)`, the survival copula at `1 - v`.
    pub fn joint_exceedance(&self, v: &[f64]) -> f64 {
        match self {
            Copula::Independence { .. } => v.iter().product(),
            Copula::Comonotone { .. } => v.iter().copied().fold(1.0, f64::min),
            Copula::Fgm(f) => {
                let prod: f64 = v.iter().product();
                prod * (1.0
                    + f.pairs
                        .iter()
                        .map(|&(i, j, a)| a * (1.0 - v[i]) * (1.0 - v[j]))
                        .sum::<f64>())
            }
        }
    }

    /// `P(U_i <= a, U_j > 1 - v)` for a pair of coordinates.
    pub fn lower_upper_pair(&self, i: usize, j: usize, a: f64, v: f64) -> f64 {
        match self {
            Copula::Independence { .. } => a * v,
            Copula::Comonotone { .. } => (a + v - 1.0).max(0.0),
            Copula::Fgm(f) => a * v * (1.0 - f.param(i, j) * (1.0 - a) * (1.0 - v)),
        }
    }

    /// Copula of the coordinates listed in `idx`.
    pub fn sub(&self, idx: &[usize]) -> Result<Copula> {
        let n = self.dim();
        if idx.len() < 2 || idx.iter().any(|&i| i >= n) {
            return Err(invalid("sub-copula needs at least two valid coordinates"));
        }
        Ok(match self {
            Copula::Independence { .. } => Copula::Independence { n: idx.len() },
            Copula::Comonotone { .. } => Copula::Comonotone { n: idx.len() },
            Copula::Fgm(f) => {
                let a = idx
                    .iter()
                    .map(|&i| idx.iter().map(|&j| f.a[i][j]).collect())
                    .collect();
                Copula::fgm(a)?
            }
        })
    }

    /// Fills `out` with one draw. FGM uses rejection against the uniform
    /// proposal with envelope `M` from [`Copula::density_bounds`].
    pub fn sample_into(&self, stream: &mut Stream, out: &mut [f64]) {
        match self {
            Copula::Independence { .. } => out.iter_mut().for_each(|u| *u = stream.uniform()),
            Copula::Comonotone { .. } => {
                let u = stream.uniform();
                out.iter_mut().for_each(|x| *x = u);
            }
            Copula::Fgm(f) => {
                let envelope = f.bounds.1;
                loop {
                    out.iter_mut().for_each(|u| *u = stream.uniform());
                    let w = stream.uniform();
                    if w * envelope <= f.density(out) {
                        break;
                    }
                }
            }
        }
    }

    pub fn sample(&self, stream: &mut Stream, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let mut u = vec![0.0; self.dim()];
                self.sample_into(stream, &mut u);
                u
            })
            .collect()
    }
}

fn check_dim(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(invalid(format!(
            "copula dimension must be at least {min}, got {n}"
        )));
    }
    Ok(())
}

fn not_abs_continuous() -> Error {
    Error::AssumptionViolated("comonotone copula is not absolutely continuous".into())
}

/// Copula plus marginals plus an optional counting law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DependentModel {
    pub copula: Copula,
    pub marginals: Vec<Marginal>,
    pub tau: Option<Counting>,
}

impl DependentModel {
    pub fn new(copula: Copula, marginals: Vec<Marginal>, tau: Option<Counting>) -> Result<Self> {
        if copula.dim() != marginals.len() {
            return Err(invalid(format!(
                "copula dimension {} does not match {} marginals",
                copula.dim(),
                marginals.len()
            )));
        }
        Ok(Self {
            copula,
            marginals,
            tau,
        })
    }

    /// Model with `n` copies of one marginal.
    pub fn identical(copula: Copula, marginal: Marginal, tau: Option<Counting>) -> Result<Self> {
        let n = copula.dim();
        Self::new(copula, vec![marginal; n], tau)
    }

    pub fn dim(&self) -> usize {
        self.copula.dim()
    }

    pub fn identical_marginals(&self) -> bool {
        self.marginals.windows(2).all(|w| w[0] == w[1])
    }

    /// `P(X_1 > x_1, ..., X_n > x_n)`.
    pub fn joint_upper_survival(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(invalid("threshold vector length does not match the model"));
        }
        let v: Vec<f64> = self
            .marginals
            .iter()
            .zip(x)
            .map(|(m, &t)| m.tail(t))
            .collect();
        Ok(self.copula.joint_exceedance(&v))
    }

    /// Quantile transform of a copula draw into `out`; `u` is scratch.
    #[inline]
    pub fn sample_into(&self, stream: &mut Stream, u: &mut [f64], out: &mut [f64]) {
        self.copula.sample_into(stream, u);
        for ((o, &ui), m) in out.iter_mut().zip(u.iter()).zip(&self.marginals) {
            *o = m.quantile_unchecked(ui);
        }
    }

    pub fn sample_vector(&self, stream: &mut Stream, count: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut u = vec![0.0; n];
        (0..count)
            .map(|_| {
                let mut x = vec![0.0; n];
                self.sample_into(stream, &mut u, &mut x);
                x
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        let c = Copula::fgm2(1.0).unwrap();
        assert!((c.cdf(&[0.5, 0.5]).unwrap() - 0.3125).abs() < 1e-15);
        let z = Copula::fgm_uniform(3, 0.0).unwrap();
        assert_eq!(z.cdf(&[0.2, 0.5, 0.7]).unwrap(), 0.2 * 0.5 * 0.7);
        let m = Copula::comonotone(3).unwrap();
        assert_eq!(m.cdf(&[0.2, 0.7, 0.5]).unwrap(), 0.2);
        assert!(c.cdf(&[1.2, 0.5]).is_err());
    }

    #[test]
    fn density_examples() {
        let c = Copula::fgm2(0.5).unwrap();
        assert!((c.density(&[1e-12, 1e-12]).unwrap() - 1.5).abs() < 1e-9);
        assert_eq!(c.density_bounds().unwrap(), (0.5, 1.5));
        assert_eq!(
            Copula::independence(4).unwrap().density_bounds().unwrap(),
            (1.0, 1.0)
        );
        assert_eq!(
            Copula::fgm2(1.0).unwrap().density(&[0.5, 0.9]).unwrap(),
            1.0
        );
        assert!(matches!(
            Copula::comonotone(2).unwrap().density(&[0.3, 0.3]),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn admissibility_examples() {
        assert!(
            fgm_admissible(&[vec![0.0, 1.0], vec![1.0, 0.0]])
                .unwrap()
                .admissible
        );
        let bad = fgm_admissible(&[vec![0.0, 1.2], vec![1.2, 0.0]]).unwrap();
        assert!(!bad.admissible);
        assert_eq!(bad.witness, Some(vec![1, -1]));
        let tri = vec![
            vec![0.0, 0.4, 0.4],
            vec![0.4, 0.0, 0.4],
            vec![0.4, 0.4, 0.0],
        ];
        let t = fgm_admissible(&tri).unwrap();
        assert!(t.admissible);
        assert!((t.min_vertex - 0.6).abs() < 1e-15 && (t.max_vertex - 2.2).abs() < 1e-15);
        assert!(fgm_admissible(&[vec![0.0, 0.3], vec![0.2, 0.0]]).is_err());
        match Copula::fgm2(1.2) {
            Err(Error::InadmissibleFgm { witness, .. }) => assert_eq!(witness, vec![1, -1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn survival_matches_inclusion_exclusion() {
        // literal inclusion-exclusion over the cdf for n = 2, 3
        let cops = [
            Copula::fgm2(0.7).unwrap(),
            Copula::fgm(vec![
                vec![0.0, 0.3, -0.2],
                vec![0.3, 0.0, 0.4],
                vec![-0.2, 0.4, 0.0],
            ])
            .unwrap(),
            Copula::comonotone(3).unwrap(),
            Copula::independence(3).unwrap(),
        ];
        for c in &cops {
            let n = c.dim();
            let u: Vec<f64> = [0.3, 0.65, 0.8][..n].to_vec();
            let mut ie = 0.0;
            for mask in 0u32..(1 << n) {
                let point: Vec<f64> = (0..n)
                    .map(|k| if mask >> k & 1 == 1 { u[k] } else { 1.0 })
                    .collect();
                let sign = if mask.count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                ie += sign * c.cdf(&point).unwrap();
            }
            let v: Vec<f64> = u.iter().map(|x| 1.0 - x).collect();
            assert!((c.joint_exceedance(&v) - ie).abs() < 1e-14, "{c:?}");
            let max_ex = 1.0 - c.cdf(&u).unwrap();
            assert!((c.max_exceedance(&v) - max_ex).abs() < 1e-14, "{c:?}");
        }
    }

    #[test]
    fn bivariate_fgm_diagonal_survival() {
        let a = 0.6;
        let c = Copula::fgm2(a).unwrap();
        for &u in &[0.1, 0.5, 0.9, 0.999] {
            let expect = (1.0f64 - u).powi(2) * (1.0 + a * u * u);
            assert!((c.joint_exceedance(&[1.0 - u, 1.0 - u]) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn lower_upper_pair_matches_cdf() {
        for c in [
            Copula::fgm2(-0.8).unwrap(),
            Copula::independence(2).unwrap(),
            Copula::comonotone(2).unwrap(),
        ] {
            for &(a, v) in &[(0.3, 0.2), (0.9, 0.05), (0.1, 0.95)] {
                let direct = a - c.cdf(&[a, 1.0 - v]).unwrap();
                assert!((c.lower_upper_pair(0, 1, a, v) - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn comonotone_samples_are_equal() {
        let c = Copula::comonotone(2).unwrap();
        let mut s = Stream::new(1, 0);
        assert!(c.sample(&mut s, 1000).iter().all(|u| u[0] == u[1]));
    }

    #[test]
    fn fgm_sampler_matches_cdf() {
        let c = Copula::fgm2(1.0).unwrap();
        let mut s = Stream::new(3, 0);
        let n = 1_000_000;
        let draws = c.sample(&mut s, n);
        let both = draws.iter().filter(|u| u[0] <= 0.5 && u[1] <= 0.5).count() as f64 / n as f64;
        let sd = (0.3125f64 * 0.6875 / n as f64).sqrt();
        assert!((both - 0.3125).abs() <= 3.0 * sd, "{both}");
        let marg = draws.iter().filter(|u| u[0] <= 0.3).count() as f64 / n as f64;
        assert!(
            (marg - 0.3).abs() <= 3.0 * (0.21f64 / n as f64).sqrt(),
            "{marg}"
        );
    }

    #[test]
    fn sklar_assembly() {
        let p = Marginal::pareto(1.0, 1.0).unwrap();
        let m = DependentModel::identical(Copula::comonotone(2).unwrap(), p.clone(), None).unwrap();
        let mut s = Stream::new(4, 0);
        assert!(m.sample_vector(&mut s, 1000).iter().all(|x| x[0] == x[1]));

        let f = DependentModel::identical(
            Copula::fgm2(1.0).unwrap(),
            Marginal::exponential(1.0).unwrap(),
            None,
        )
        .unwrap();
        let q = Marginal::exponential(1.0).unwrap().quantile(0.9).unwrap();
        let expect = 0.01 * 1.81;
        assert!((f.joint_upper_survival(&[q, q]).unwrap() - expect).abs() < 1e-14);
        let n = 1_000_000;
        let hits = f
            .sample_vector(&mut s, n)
            .iter()
            .filter(|x| x[0] > q && x[1] > q)
            .count() as f64
            / n as f64;
        assert!(
            (hits - expect).abs() <= 3.0 * (expect * (1.0 - expect) / n as f64).sqrt(),
            "{hits}"
        );

        assert!(DependentModel::new(Copula::independence(3).unwrap(), vec![p], None).is_err());
    }
}
