//! Candidate-term library and the design matrix Θ.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::signal::{DerivativeSet, SignalPair};
use crate::{Error, Result};

/// Monomial `p^p_exp · ṗ^dp_exp · v^v_exp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 3]", into = "[u32; 3]")]
pub struct TermSpec {
    p_exp: u32,
    dp_exp: u32,
    v_exp: u32,
}

impl TermSpec {
    pub const DP: TermSpec = TermSpec::raw(0, 1, 0);
    pub const P: TermSpec = TermSpec::raw(1, 0, 0);
    pub const V: TermSpec = TermSpec::raw(0, 0, 1);
    /// Intercept column; only available through custom libraries.
    pub const CONSTANT: TermSpec = TermSpec::raw(0, 0, 0);

    const MAX_EXP: u32 = 8;

    const fn raw(p_exp: u32, dp_exp: u32, v_exp: u32) -> Self {
        Self { p_exp, dp_exp, v_exp }
    }

    pub fn new(p_exp: u32, dp_exp: u32, v_exp: u32) -> Result<Self> {
        if v_exp > 1 {
            return Err(Error::parameter(format!("velocity exponent must be 0 or 1, got {v_exp}")));
        }
        if p_exp > Self::MAX_EXP || dp_exp > Self::MAX_EXP {
            return Err(Error::parameter(format!(
                "exponents above {} are not supported",
                Self::MAX_EXP
            )));
        }
        Ok(Self::raw(p_exp, dp_exp, v_exp))
    }

    pub fn p_exp(self) -> u32 {
        self.p_exp
    }

    pub fn dp_exp(self) -> u32 {
        self.dp_exp
    }

    pub fn v_exp(self) -> u32 {
        self.v_exp
    }

    /// Pure forcing term `v`.
    pub fn is_forcing(self) -> bool {
        self == Self::V
    }

    pub fn eval(self, p: f64, dp: f64, v: f64) -> f64 {
        let mut x = 1.0;
        if self.p_exp > 0 {
            x *= p.powi(self.p_exp as i32);
        }
        if self.dp_exp > 0 {
            x *= dp.powi(self.dp_exp as i32);
        }
        if self.v_exp > 0 {
            x *= v;
        }
        x
    }
}

impl TryFrom<[u32; 3]> for TermSpec {
    type Error = Error;

    fn try_from(e: [u32; 3]) -> Result<Self> {
        TermSpec::new(e[0], e[1], e[2])
    }
}

impl From<TermSpec> for [u32; 3] {
    fn from(t: TermSpec) -> Self {
        [t.p_exp, t.dp_exp, t.v_exp]
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (sym, e) in [("p", self.p_exp), ("dp", self.dp_exp), ("v", self.v_exp)] {
            match e {
                0 => {}
                1 => parts.push(sym.to_string()),
                _ => parts.push(format!("{sym}^{e}")),
            }
        }
        if parts.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&parts.join("*"))
        }
    }
}

/// Ordered, duplicate-free list of terms; the order fixes Θ's columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TermSpec>", into = "Vec<TermSpec>")]
pub struct LibrarySpec {
    terms: Vec<TermSpec>,
}

impl LibrarySpec {
    pub fn new(terms: Vec<TermSpec>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::parameter("library needs at least one term"));
        }
        let mut seen = HashSet::new();
        for t in &terms {
            if !seen.insert(*t) {
                return Err(Error::parameter(format!("duplicate library term {t}")));
            }
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[TermSpec] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn position(&self, term: TermSpec) -> Option<usize> {
        self.terms.iter().position(|&t| t == term)
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(ToString::to_string).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl TryFrom<Vec<TermSpec>> for LibrarySpec {
    type Error = Error;

    fn try_from(terms: Vec<TermSpec>) -> Result<Self> {
        LibrarySpec::new(terms)
    }
}

impl From<LibrarySpec> for Vec<TermSpec> {
    fn from(l: LibrarySpec) -> Self {
        l.terms
    }
}

/// Nine-term library `[ṗ, ṗ², ṗ³, p, pṗ, pṗ², p², p²ṗ, v]`.
pub fn default_library() -> LibrarySpec {
    let t = TermSpec::raw;
    LibrarySpec {
        terms: vec![
            t(0, 1, 0),
            t(0, 2, 0),
            t(0, 3, 0),
            t(1, 0, 0),
            t(1, 1, 0),
            t(1, 2, 0),
            t(2, 0, 0),
            t(2, 1, 0),
            t(0, 0, 1),
        ],
    }
}

/// Damped-oscillator library `[ṗ, p, v]`.
pub fn linear_library() -> LibrarySpec {
    LibrarySpec {
        terms: vec![TermSpec::DP, TermSpec::P, TermSpec::V],
    }
}

/// Θ stored column-wise, with the regression target p̈.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    columns: Vec<Vec<f64>>,
    terms: LibrarySpec,
    target: Vec<f64>,
}

impl DesignMatrix {
    /// Assembles a matrix from raw columns; used by tests and custom pipelines.
    pub fn from_columns(columns: Vec<Vec<f64>>, terms: LibrarySpec, target: Vec<f64>) -> Result<Self> {
        if columns.len() != terms.len() {
            return Err(Error::input(format!(
                "{} columns for {} terms",
                columns.len(),
                terms.len()
            )));
        }
        if let Some(c) = columns.iter().position(|c| c.len() != target.len()) {
            return Err(Error::input(format!(
                "column {c} has {} rows, target has {}",
                columns[c].len(),
                target.len()
            )));
        }
        if target.is_empty() {
            return Err(Error::input("design matrix has no rows"));
        }
        if columns.iter().flatten().chain(&target).any(|x| !x.is_finite()) {
            return Err(Error::input("design matrix contains non-finite entries"));
        }
        Ok(Self { columns, terms, target })
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn terms(&self) -> &LibrarySpec {
        &self.terms
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_terms(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Drops `k` rows from each end.
    pub fn trim_rows(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Ok(self.clone());
        }
        let n = self.rows();
        if 2 * k >= n {
            return Err(Error::input(format!("cannot trim {k} rows from each end of {n} rows")));
        }
        let r = k..n - k;
        Ok(Self {
            columns: self.columns.iter().map(|c| c[r.clone()].to_vec()).collect(),
            terms: self.terms.clone(),
            target: self.target[r].to_vec(),
        })
    }
}

pub fn build_design_matrix(
    pair: &SignalPair,
    derivs: &DerivativeSet,
    spec: &LibrarySpec,
) -> Result<DesignMatrix> {
    let p = pair.pressure().values();
    let v = pair.velocity().values();
    let dp = derivs.d1.values();
    let d2 = derivs.d2.values();
    if dp.len() != p.len() || d2.len() != p.len() || derivs.d1.dt() != pair.dt() {
        return Err(Error::input(format!(
            "derivatives ({} samples, dt {}) do not match the signal pair ({} samples, dt {})",
            dp.len(),
            derivs.d1.dt(),
            p.len(),
            pair.dt()
        )));
    }
    let columns = spec
        .terms()
        .iter()
        .map(|term| (0..p.len()).map(|i| term.eval(p[i], dp[i], v[i])).collect())
        .collect();
    DesignMatrix::from_columns(columns, spec.clone(), d2.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{differentiate, TimeSeries};
    use proptest::prelude::*;

    fn pair(p: Vec<f64>, v: Vec<f64>) -> SignalPair {
        SignalPair::new(
            TimeSeries::new(p, 0.005, 0.0, "mmHg").unwrap(),
            TimeSeries::new(v, 0.005, 0.0, "cm/s").unwrap(),
            "t",
        )
        .unwrap()
    }

    #[test]
    fn default_library_layout() {
        let lib = default_library();
        assert_eq!(lib.len(), 9);
        assert_eq!(lib.terms()[0], TermSpec::new(0, 1, 0).unwrap());
        assert_eq!(lib.terms()[8], TermSpec::new(0, 0, 1).unwrap());
        assert_eq!(
            lib.names(),
            ["dp", "dp^2", "dp^3", "p", "p*dp", "p*dp^2", "p^2", "p^2*dp", "v"]
        );
        assert_eq!(linear_library().terms(), &[TermSpec::DP, TermSpec::P, TermSpec::V]);
    }

    #[test]
    fn term_validation() {
        assert!(TermSpec::new(0, 0, 2).is_err());
        assert!(LibrarySpec::new(vec![TermSpec::P, TermSpec::P]).is_err());
        assert!(LibrarySpec::new(vec![]).is_err());
        let custom = LibrarySpec::new(vec![TermSpec::CONSTANT, TermSpec::P]).unwrap();
        assert_eq!(custom.names(), ["1", "p"]);
    }

    #[test]
    fn library_json_format() {
        let json = serde_json::to_string(&linear_library()).unwrap();
        assert_eq!(json, "[[0,1,0],[1,0,0],[0,0,1]]");
        assert_eq!(LibrarySpec::from_json(&json).unwrap(), linear_library());
        assert!(LibrarySpec::from_json("[[0,1,0],[0,1,0]]").is_err());
        assert!(LibrarySpec::from_json("[[0,0,3]]").is_err());
    }

    #[test]
    fn zero_pressure_leaves_only_forcing() {
        let pr = pair(vec![0.0; 6], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = differentiate(pr.pressure()).unwrap();
        let theta = build_design_matrix(&pr, &d, &default_library()).unwrap();
        for j in 0..8 {
            assert!(theta.column(j).iter().all(|&x| x == 0.0), "column {j}");
        }
        assert_eq!(theta.column(8), pr.velocity().values());
    }

    #[test]
    fn single_row_evaluation() {
        let row: Vec<f64> = default_library().terms().iter().map(|t| t.eval(2.0, 3.0, 1.0)).collect();
        assert_eq!(row, [3.0, 9.0, 27.0, 2.0, 6.0, 18.0, 4.0, 12.0, 1.0]);
    }

    #[test]
    fn linear_library_columns_are_signals() {
        let pr = pair(vec![1.0, 4.0, 2.0, -1.0, 0.5], vec![0.3, 0.1, -0.2, 0.7, 0.0]);
        let d = differentiate(pr.pressure()).unwrap();
        let theta = build_design_matrix(&pr, &d, &linear_library()).unwrap();
        assert_eq!(theta.column(0), d.d1.values());
        assert_eq!(theta.column(1), pr.pressure().values());
        assert_eq!(theta.column(2), pr.velocity().values());
        assert_eq!(theta.target(), d.d2.values());
    }

    #[test]
    fn mismatched_derivatives_rejected() {
        let pr = pair(vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]);
        let other = TimeSeries::new(vec![1.0, 2.0, 3.0], 0.005, 0.0, "mmHg").unwrap();
        let d = differentiate(&other).unwrap();
        assert!(build_design_matrix(&pr, &d, &default_library()).is_err());
    }

    #[test]
    fn trimming_rows() {
        let pr = pair(vec![1.0, 4.0, 2.0, -1.0, 0.5, 2.0], vec![0.0; 6]);
        let d = differentiate(pr.pressure()).unwrap();
        let theta = build_design_matrix(&pr, &d, &linear_library()).unwrap();
        let t = theta.trim_rows(2).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.column(1), &[2.0, -1.0]);
        assert!(theta.trim_rows(3).is_err());
    }

    proptest! {
        #[test]
        fn pressure_scaling_homogeneity(
            p in prop::collection::vec(-3.0..3.0f64, 6..30),
            s in 0.2..4.0f64,
        ) {
            let n = p.len();
            let v: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let base = pair(p.clone(), v.clone());
            let scaled = pair(p.iter().map(|x| s * x).collect(), v);
            let lib = default_library();
            let t0 = build_design_matrix(&base, &differentiate(base.pressure()).unwrap(), &lib).unwrap();
            let t1 = build_design_matrix(&scaled, &differentiate(scaled.pressure()).unwrap(), &lib).unwrap();
            for (j, term) in lib.terms().iter().enumerate() {
                if term.v_exp() == 1 {
                    continue;
                }
                let k = s.powi((term.p_exp() + term.dp_exp()) as i32);
                for i in 0..n {
                    let expect = k * t0.column(j)[i];
                    prop_assert!((t1.column(j)[i] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
                }
            }
            let again = build_design_matrix(&base, &differentiate(base.pressure()).unwrap(), &lib).unwrap();
            prop_assert_eq!(again, t0);
        }
    }
}
