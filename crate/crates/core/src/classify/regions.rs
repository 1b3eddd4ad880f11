//! Argmax-class labels over regular grids in `(a, b, ε)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ClassifierModel, FeatureVector, N_CLASSES};
use crate::signal::ClassLabel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        let axis = Self { min, max, steps };
        axis.validate()?;
        Ok(axis)
    }

    fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::parameter("grid axes need at least 2 nodes"));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::parameter(format!("invalid axis range [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
    }
}

/// A coordinate plane; the omitted coordinate is held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Plane {
    AB,
    AEpsilon,
    BEpsilon,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::AB, Plane::AEpsilon, Plane::BEpsilon];

    /// Index of the omitted coordinate in `(a, b, ε)`.
    fn fixed_index(self) -> usize {
        match self {
            Self::AB => 2,
            Self::AEpsilon => 1,
            Self::BEpsilon => 0,
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AB => "ab",
            Self::AEpsilon => "ae",
            Self::BEpsilon => "be",
        })
    }
}

impl FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ab" | "ba" => Ok(Self::AB),
            "ae" | "ea" | "a-epsilon" | "epsilon-a" => Ok(Self::AEpsilon),
            "be" | "eb" | "b-epsilon" | "epsilon-b" => Ok(Self::BEpsilon),
            _ => Err(Error::parameter(format!("unknown plane {s:?}; use ab, ae or be"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a: Axis,
    pub b: Axis,
    pub epsilon: Axis,
    /// 2-D slice: the plane and the value of the omitted coordinate. That
    /// coordinate's axis is ignored.
    pub slice: Option<(Plane, f64)>,
}

impl GridSpec {
    /// Axes spanning the data range; a slice fixes the omitted coordinate at
    /// the data mean.
    pub fn covering(data: &[FeatureVector], steps: usize, plane: Option<Plane>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("cannot size a grid from no data"));
        }
        let axis = |j: usize| {
            let (lo, hi) = data
                .iter()
                .map(|d| d.raw()[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            Axis::new(lo, hi, steps)
        };
        let slice = plane.map(|p| {
            let j = p.fixed_index();
            (p, data.iter().map(|d| d.raw()[j]).sum::<f64>() / data.len() as f64)
        });
        Ok(Self { a: axis(0)?, b: axis(1)?, epsilon: axis(2)?, slice })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub class: ClassLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabeledGrid {
    pub spec: GridSpec,
    /// Row-major with `a` outermost and `ε` innermost.
    pub points: Vec<GridPoint>,
}

impl LabeledGrid {
    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for p in &self.points {
            c[p.class.index()] += 1;
        }
        c
    }

    /// `a,b,epsilon,class` with the class as its index.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "a,b,epsilon,class")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.a, p.b, p.epsilon, p.class.index())?;
        }
        Ok(())
    }
}

pub fn decision_regions(model: &ClassifierModel, spec: &GridSpec) -> Result<LabeledGrid> {
    let fixed = spec.slice.map(|(p, v)| (p.fixed_index(), v));
    let axes = [spec.a, spec.b, spec.epsilon];
    let nodes: Vec<Vec<f64>> = axes
        .iter()
        .enumerate()
        .map(|(j, ax)| match fixed {
            Some((k, v)) if k == j => {
                if v.is_finite() {
                    Ok(vec![v])
                } else {
                    Err(Error::parameter("slice value must be finite"))
                }
            }
            _ => {
                ax.validate()?;
                Ok((0..ax.steps).map(|i| ax.node(i)).collect())
            }
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(nodes.iter().map(Vec::len).product());
    for &a in &nodes[0] {
        for &b in &nodes[1] {
            for &epsilon in &nodes[2] {
                points.push(GridPoint { a, b, epsilon, class: model.predict([a, b, epsilon]) });
            }
        }
    }
    Ok(LabeledGrid { spec: *spec, points })
}
