//! Uniform grids on `[0,1)²` and real fields sampled on them.
//!
//! Grid point `(i, j)` sits at `(i/S, j/S)`; every quadrature in the crate
//! uses the uniform weight `1/S²`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct GridSpec {
    size: usize,
}

impl GridSpec {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidGrid(format!("size must be >= 2, got {size}")));
        }
        Ok(Self { size })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.size as f64
    }

    /// Number of grid points, `S²`.
    #[inline]
    pub fn len(&self) -> usize {
        self.size * self.size
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / self.size as f64
    }

    /// Quadrature weight of one grid point.
    #[inline]
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

impl TryFrom<usize> for GridSpec {
    type Error = Error;

    fn try_from(size: usize) -> Result<Self> {
        GridSpec::new(size)
    }
}

impl From<GridSpec> for usize {
    fn from(g: GridSpec) -> usize {
        g.size
    }
}

/// Real values on an `S×S` grid, row-major: `values[i*S + j] = f(i/S, j/S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "expected {} values for a {}x{} grid, got {}",
                spec.len(),
                spec.size(),
                spec.size(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "grid entry ({}, {}) = {}",
                pos / spec.size(),
                pos % spec.size(),
                values[pos]
            )));
        }
        Ok(Self { spec, values })
    }

    /// Builds a field from already-validated values. Used on hot paths where
    /// finiteness is checked by the caller.
    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self {
            spec,
            values: vec![value; spec.len()],
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let s = spec.size();
        let mut values = Vec::with_capacity(spec.len());
        for i in 0..s {
            for j in 0..s {
                values.push(f(spec.coord(i), spec.coord(j)));
            }
        }
        Self::new(spec, values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let spec = GridSpec::new(rows.len())?;
        let mut values = Vec::with_capacity(spec.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != spec.size() {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    spec.size()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(spec, values)
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.spec.size()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.size() + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.spec.size())
            .map(|r| r.to_vec())
            .collect()
    }

    /// `(1/S²) Σ f²`, the quadrature form of the squared `L²` norm.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.spec.weight()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Spatial mean, `(1/S²) Σ f`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.weight()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, alpha: f64) -> Result<Self> {
        self.map(|v| alpha * v)
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Shape(format!(
                "grid {} vs grid {}",
                self.spec.size(),
                other.spec.size()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        Self::new(
            self.spec,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        Self::new(
            self.spec,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    /// Squared quadrature distance `(1/S²) Σ (f − g)²`.
    pub fn dist_sq(&self, other: &Self) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * self.spec.weight())
    }

    /// Point subsampling onto a coarser grid: `out[i][j] = f[k·i][k·j]`, `k = S / target`.
    pub fn downsample(&self, target: GridSpec) -> Result<Self> {
        let s = self.spec.size();
        let t = target.size();
        if t > s || !s.is_multiple_of(t) {
            return Err(Error::Shape(format!(
                "cannot downsample a {s}-grid to a {t}-grid: sizes are not integer multiples"
            )));
        }
        let k = s / t;
        let mut out = Vec::with_capacity(target.len());
        for i in 0..t {
            for j in 0..t {
                out.push(self.values[(k * i) * s + k * j]);
            }
        }
        Ok(Self::from_raw(target, out))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20);
        for row in self.values.chunks(self.spec.size()) {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .map(|tok| {
                        tok.trim().parse::<f64>().map_err(|e| {
                            Error::Parse(format!("row {i}: cannot parse {tok:?}: {e}"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&FieldJson::from(self)).expect("field serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FieldJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// JSON wrapper `{size, values}` with `values` as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldJson {
    pub size: usize,
    pub values: Vec<Vec<f64>>,
}

impl From<&GridField> for FieldJson {
    fn from(f: &GridField) -> Self {
        Self {
            size: f.size(),
            values: f.rows(),
        }
    }
}

impl TryFrom<FieldJson> for GridField {
    type Error = Error;

    fn try_from(raw: FieldJson) -> Result<Self> {
        if raw.values.len() != raw.size {
            return Err(Error::Shape(format!(
                "size {} but {} rows",
                raw.size,
                raw.values.len()
            )));
        }
        GridField::from_rows(&raw.values)
    }
}

impl Serialize for GridField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FieldJson::deserialize(d)?;
        GridField::try_from(raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(s: usize) -> GridSpec {
        GridSpec::new(s).unwrap()
    }

    #[test]
    fn rejects_degenerate_grid() {
        assert!(GridSpec::new(1).is_err());
        assert!(GridSpec::new(0).is_err());
    }

    #[test]
    fn l2_norm_examples() {
        assert_eq!(GridField::zeros(g(25)).l2_norm_sq(), 0.0);
        assert!((GridField::constant(g(25), 1.0).l2_norm_sq() - 1.0).abs() < 1e-14);
        let f = GridField::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(f.l2_norm_sq(), 7.5);
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(GridField::zeros(g(5)).sup_norm(), 0.0);
        let mut v = vec![0.0; 25];
        v[13] = -7.0;
        assert_eq!(GridField::new(g(5), v).unwrap().sup_norm(), 7.0);
        let f = GridField::from_rows(&[vec![1.0, 2.0], vec![3.0, -4.0]]).unwrap();
        assert_eq!(f.sup_norm(), 4.0);
    }

    #[test]
    fn downsample_picks_every_kth_point() {
        let f = GridField::from_fn(g(100), |u, v| 1000.0 * u + v).unwrap();
        let d = f.downsample(g(25)).unwrap();
        for i in 0..25 {
            for j in 0..25 {
                assert_eq!(d.get(i, j), f.get(4 * i, 4 * j));
            }
        }
        let small = GridField::new(g(4), (0..16).map(|x| x as f64).collect()).unwrap();
        let d = small.downsample(g(2)).unwrap();
        assert_eq!(d.values(), &[0.0, 2.0, 8.0, 10.0]);
        assert_eq!(small.downsample(g(4)).unwrap(), small);
    }

    #[test]
    fn downsample_rejects_non_divisible() {
        let f = GridField::zeros(g(10));
        assert!(matches!(f.downsample(g(4)), Err(Error::Shape(_))));
        assert!(matches!(f.downsample(g(20)), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        assert!(GridField::new(g(2), vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
        assert!(GridField::new(g(2), vec![0.0; 3]).is_err());
        assert!(GridField::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let f = GridField::from_fn(g(7), |u, v| (3.1 * u).sin() - v / 3.0).unwrap();
        assert_eq!(GridField::from_csv(&f.to_csv()).unwrap(), f);
        assert_eq!(GridField::from_json(&f.to_json()).unwrap(), f);
        let text = f.to_csv();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().all(|l| l.split(',').count() == 7));
    }

    #[test]
    fn json_rejects_inconsistent_size() {
        assert!(GridField::from_json(r#"{"size":3,"values":[[1,2],[3,4]]}"#).is_err());
    }

    fn field_strategy() -> impl Strategy<Value = GridField> {
        (2usize..7).prop_flat_map(|s| {
            prop::collection::vec(-50.0f64..50.0, s * s)
                .prop_map(move |v| GridField::new(GridSpec::new(s).unwrap(), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn l2_homogeneous(f in field_strategy(), alpha in -10.0f64..10.0) {
            let lhs = f.scale(alpha).unwrap().l2_norm_sq();
            let rhs = alpha * alpha * f.l2_norm_sq();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn l2_below_sup_squared(f in field_strategy()) {
            prop_assert!(f.l2_norm_sq() <= f.sup_norm().powi(2) * (1.0 + 1e-12));
        }

        #[test]
        fn downsample_commutes_with_pointwise_maps(
            v in prop::collection::vec(-5.0f64..5.0, 144),
            k in prop::sample::select(vec![1usize, 2, 3, 4, 6]),
        ) {
            let f = GridField::new(GridSpec::new(12).unwrap(), v).unwrap();
            let target = GridSpec::new(12 / k).unwrap_or(GridSpec::new(2).unwrap());
            if 12 % target.size() == 0 {
                let tau = |x: f64| 1.5 + 2.5 * x.cos() + 2.0 * (2.0 * x).sin();
                let a = f.map(tau).unwrap().downsample(target).unwrap();
                let b = f.downsample(target).unwrap().map(tau).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
