use std::collections::HashMap;

use super::{ColumnValues, Dataset, Row};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Normalized {
    Skip,
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
}

/// Min-max normalized view of a dataset's columns.
///
/// Numeric values map to `(x - min) / (max - min)`; constant columns map to
/// zero. Categorical codes are kept as-is. A view built with
/// [`NormalizedView::with_ranges_of`] reuses another cohort's ranges, so its
/// values may fall outside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedView {
    tag: String,
    ranges: Vec<Option<(f64, f64)>>,
    columns: Vec<Normalized>,
    by_name: HashMap<String, usize>,
}

fn scale(values: &[f64], (min, max): (f64, f64)) -> Vec<f64> {
    let span = max - min;
    if span > 0.0 {
        values.iter().map(|&x| (x - min) / span).collect()
    } else {
        // degenerate range: own values all map to 0, foreign values keep their offset
        values.iter().map(|&x| x - min).collect()
    }
}

impl NormalizedView {
    pub fn new(ds: &Dataset) -> Self {
        let ranges: Vec<_> = (0..ds.schema().len())
            .map(|c| match ds.values(c) {
                ColumnValues::Numeric(v) => {
                    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if v.is_empty() {
                        Some((0.0, 0.0))
                    } else {
                        Some((min, max))
                    }
                }
                _ => None,
            })
            .collect();
        Self::build(ds, ranges)
    }

    /// Normalizes `ds` with the ranges of `reference`, matching columns by name.
    pub fn with_ranges_of(ds: &Dataset, reference: &NormalizedView) -> Result<Self> {
        let mut ranges = Vec::with_capacity(ds.schema().len());
        for (c, col) in ds.schema().iter().enumerate() {
            match ds.values(c) {
                ColumnValues::Numeric(_) => {
                    let range = reference
                        .by_name
                        .get(&col.name)
                        .and_then(|&i| reference.ranges[i])
                        .ok_or_else(|| {
                            Error::SchemaMismatch(format!(
                                "numeric column `{}` has no range in cohort `{}`",
                                col.name, reference.tag
                            ))
                        })?;
                    ranges.push(Some(range));
                }
                _ => ranges.push(None),
            }
        }
        Ok(Self::build(ds, ranges))
    }

    fn build(ds: &Dataset, ranges: Vec<Option<(f64, f64)>>) -> Self {
        let columns = (0..ds.schema().len())
            .map(|c| match ds.values(c) {
                ColumnValues::Numeric(v) => {
                    Normalized::Numeric(scale(v, ranges[c].expect("numeric column has a range")))
                }
                ColumnValues::Categorical(v) => Normalized::Categorical(v.clone()),
                ColumnValues::Id => Normalized::Skip,
            })
            .collect();
        let by_name = ds
            .schema()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), i))
            .collect();
        NormalizedView {
            tag: ds.tag().to_string(),
            ranges,
            columns,
            by_name,
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// `(min, max)` of a numeric column.
    pub fn range(&self, col: usize) -> Option<(f64, f64)> {
        self.ranges[col]
    }

    pub fn numeric(&self, col: usize) -> Option<&[f64]> {
        match &self.columns[col] {
            Normalized::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn categorical(&self, col: usize) -> Option<&[u32]> {
        match &self.columns[col] {
            Normalized::Categorical(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_numeric(&self, col: usize) -> bool {
        matches!(self.columns[col], Normalized::Numeric(_))
    }

    /// Normalized numeric cell.
    pub fn value(&self, col: usize, row: Row) -> f64 {
        match &self.columns[col] {
            Normalized::Numeric(v) => v[row],
            _ => panic!("column {col} is not numeric"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnSchema;
    use proptest::prelude::*;

    fn ds_with(cols: Vec<(&str, Vec<f64>)>) -> Dataset {
        let n = cols[0].1.len();
        let mut schema = vec![ColumnSchema::id("id")];
        let mut columns = vec![ColumnValues::Id];
        for (name, v) in cols {
            schema.push(ColumnSchema::numeric(name));
            columns.push(ColumnValues::Numeric(v));
        }
        schema.push(ColumnSchema::outcome("y", "n", "p"));
        columns.push(ColumnValues::Categorical(vec![0; n]));
        Dataset::from_parts("t", schema, (0..n).map(|i| i.to_string()).collect(), columns).unwrap()
    }

    #[test]
    fn affine_map() {
        let v = NormalizedView::new(&ds_with(vec![("a", vec![10.0, 20.0, 30.0])]));
        assert_eq!(v.numeric(1).unwrap(), &[0.0, 0.5, 1.0]);
        assert_eq!(v.range(1), Some((10.0, 30.0)));
    }

    #[test]
    fn constant_column_is_zero() {
        let v = NormalizedView::new(&ds_with(vec![("a", vec![5.0, 5.0, 5.0])]));
        assert_eq!(v.numeric(1).unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn scaled_columns_normalize_identically() {
        let v = NormalizedView::new(&ds_with(vec![
            ("a", vec![1.0, 7.0, 3.0, 4.0]),
            ("b", vec![1000.0, 7000.0, 3000.0, 4000.0]),
        ]));
        assert_eq!(v.numeric(1).unwrap(), v.numeric(2).unwrap());
    }

    #[test]
    fn foreign_ranges_extend_beyond_unit_interval() {
        let base = NormalizedView::new(&ds_with(vec![("a", vec![0.0, 10.0])]));
        let other = ds_with(vec![("a", vec![-5.0, 20.0])]);
        let v = NormalizedView::with_ranges_of(&other, &base).unwrap();
        assert_eq!(v.numeric(1).unwrap(), &[-0.5, 2.0]);
    }

    proptest! {
        // integer-valued data and integer factors keep every product exact,
        // so normalization must give bit-identical results
        #[test]
        fn scale_invariance_exact(values in prop::collection::vec(-1000i32..1000, 2..30), factor in 1u32..5000) {
            let raw: Vec<f64> = values.iter().map(|&x| x as f64).collect();
            let scaled: Vec<f64> = raw.iter().map(|x| x * factor as f64).collect();
            let a = NormalizedView::new(&ds_with(vec![("a", raw)]));
            let b = NormalizedView::new(&ds_with(vec![("a", scaled)]));
            prop_assert_eq!(a.numeric(1).unwrap(), b.numeric(1).unwrap());
        }

        #[test]
        fn scale_invariance_general(values in prop::collection::vec(-1e3f64..1e3, 2..30), factor in 1e-3f64..1e3) {
            let scaled: Vec<f64> = values.iter().map(|x| x * factor).collect();
            let a = NormalizedView::new(&ds_with(vec![("a", values)]));
            let b = NormalizedView::new(&ds_with(vec![("a", scaled)]));
            for (x, y) in a.numeric(1).unwrap().iter().zip(b.numeric(1).unwrap()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn idempotent(values in prop::collection::vec(-1e3f64..1e3, 2..30)) {
            let once = NormalizedView::new(&ds_with(vec![("a", values)]));
            let again = NormalizedView::new(&ds_with(vec![("a", once.numeric(1).unwrap().to_vec())]));
            prop_assert_eq!(once.numeric(1).unwrap(), again.numeric(1).unwrap());
        }
    }
}
