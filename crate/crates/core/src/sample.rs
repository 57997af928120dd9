//! Canonical pair storage, empirical distribution functions and CSV ingestion.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n >= 1` pairs `(u, v)` with `u <= v`, all finite.
///
/// The within-pair order of the underlying observations is unknown, so only
/// the minimum and maximum of each pair are kept. Repeated pairs are not
/// merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnorderedPairSample {
    pairs: Vec<(f64, f64)>,
}

impl UnorderedPairSample {
    /// Canonicalizes each row to `(min, max)`, preserving row order.
    pub fn from_rows<I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut pairs = Vec::new();
        for (row, (a, b)) in rows.into_iter().enumerate() {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::BadValue(row));
            }
            pairs.push(if a <= b { (a, b) } else { (b, a) });
        }
        if pairs.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Always false; a sample holds at least one pair.
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn minima(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.0)
    }

    pub fn maxima(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.1)
    }

    /// All `2n` values, minima first.
    pub fn pooled_values(&self) -> Vec<f64> {
        self.minima().chain(self.maxima()).collect()
    }

    /// ECDFs of the pair minima and pair maxima.
    pub fn min_max_ecdfs(&self) -> (Ecdf, Ecdf) {
        let lo: Vec<f64> = self.minima().collect();
        let hi: Vec<f64> = self.maxima().collect();
        (
            Ecdf::from_finite(lo).expect("sample is nonempty"),
            Ecdf::from_finite(hi).expect("sample is nonempty"),
        )
    }

    /// ECDF of the pooled `2n` values; equal to the average of the minimum
    /// and maximum ECDFs.
    pub fn pooled_ecdf(&self) -> Ecdf {
        Ecdf::from_finite(self.pooled_values()).expect("sample is nonempty")
    }

    /// Sorted distinct pooled values, the default evaluation grid.
    pub fn pooled_grid(&self) -> EvalGrid {
        EvalGrid::from_unsorted(self.pooled_values()).expect("sample is nonempty")
    }
}

/// Build a sample from raw rows. See [`UnorderedPairSample::from_rows`].
pub fn ingest_pairs(rows: &[(f64, f64)]) -> Result<UnorderedPairSample> {
    UnorderedPairSample::from_rows(rows.iter().copied())
}

/// Right-continuous empirical distribution function with aggregated jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    support: Vec<f64>,
    cum_prop: Vec<f64>,
    counts: Vec<usize>,
    total: usize,
}

impl Ecdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadValue(row));
        }
        Self::from_finite(values.to_vec())
    }

    fn from_finite(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        values.sort_by(f64::total_cmp);
        let total = values.len();
        let mut support = Vec::new();
        let mut counts = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            // -0.0 and 0.0 are the same support point
            if support.last() == Some(&v) {
                *counts.last_mut().unwrap() = i + 1;
            } else {
                support.push(v);
                counts.push(i + 1);
            }
        }
        let cum_prop = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self {
            support,
            cum_prop,
            counts,
            total,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum_prop(&self) -> &[f64] {
        &self.cum_prop
    }

    /// Number of observations the ECDF was built from.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Number of observations `<= x`.
    pub fn count_le(&self, x: f64) -> usize {
        match self.support.partition_point(|&s| s <= x) {
            0 => 0,
            j => self.counts[j - 1],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.support.partition_point(|&s| s <= x) {
            0 => 0.0,
            j => self.cum_prop[j - 1],
        }
    }
}

/// Build an ECDF. See [`Ecdf::new`].
pub fn ecdf_build(values: &[f64]) -> Result<Ecdf> {
    Ecdf::new(values)
}

pub fn ecdf_eval(f: &Ecdf, x: f64) -> f64 {
    f.eval(x)
}

pub fn min_max_ecdfs(s: &UnorderedPairSample) -> (Ecdf, Ecdf) {
    s.min_max_ecdfs()
}

pub fn pooled_ecdf(s: &UnorderedPairSample) -> Ecdf {
    s.pooled_ecdf()
}

/// Strictly increasing, nonempty list of finite evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvalGrid {
    points: Vec<f64>,
}

impl EvalGrid {
    /// Accepts points that are already strictly increasing.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::BadValue(i));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "grid points must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Sorts and deduplicates arbitrary finite points.
    pub fn from_unsorted(mut points: Vec<f64>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::BadValue(i));
        }
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| a == b);
        Self::new(points)
    }

    /// `count` equally spaced points from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "linspace needs count >= 2 and lo < hi, got {count} points on [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
        points[count - 1] = hi;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<f64>> for EvalGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<EvalGrid> for Vec<f64> {
    fn from(grid: EvalGrid) -> Self {
        grid.points
    }
}

/// Reads two numeric columns per record.
///
/// A first record that does not parse as two numbers is treated as a header.
/// Extra columns are rejected. Empty input yields [`Error::EmptySample`].
pub fn read_pairs_csv<R: Read>(reader: R, delimiter: u8) -> Result<UnorderedPairSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(idx as u64 + 1, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed = parse_record(&record);
        match parsed {
            Ok((a, b)) if !a.is_finite() || !b.is_finite() => {
                return Err(Error::MalformedRow {
                    line,
                    reason: "non-finite value".into(),
                })
            }
            Ok(row) => rows.push(row),
            Err(_) if idx == 0 => continue,
            Err(reason) => return Err(Error::MalformedRow { line, reason }),
        }
    }
    UnorderedPairSample::from_rows(rows)
}

fn parse_record(record: &csv::StringRecord) -> std::result::Result<(f64, f64), String> {
    if record.len() != 2 {
        return Err(format!("expected 2 columns, found {}", record.len()));
    }
    let a: f64 = record[0]
        .parse()
        .map_err(|_| format!("not a number: {:?}", &record[0]))?;
    let b: f64 = record[1]
        .parse()
        .map_err(|_| format!("not a number: {:?}", &record[1]))?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingest_canonicalizes_and_keeps_order() {
        let s = ingest_pairs(&[(2.0, 1.0), (3.0, 3.0)]).unwrap();
        assert_eq!(s.pairs(), &[(1.0, 2.0), (3.0, 3.0)]);
        assert_eq!(s.len(), 2);

        let s = ingest_pairs(&[(0.5, 0.7)]).unwrap();
        assert_eq!(s.pairs(), &[(0.5, 0.7)]);
    }

    #[test]
    fn ingest_errors() {
        assert!(matches!(ingest_pairs(&[]), Err(Error::EmptySample)));
        assert!(matches!(
            ingest_pairs(&[(1.0, f64::NAN)]),
            Err(Error::BadValue(0))
        ));
        assert!(matches!(
            ingest_pairs(&[(1.0, 2.0), (f64::INFINITY, 0.0)]),
            Err(Error::BadValue(1))
        ));
    }

    #[test]
    fn swapped_input_gives_identical_sample() {
        let rows = [(0.3, 0.1), (2.0, 5.0), (-1.0, -4.0)];
        let swapped: Vec<_> = rows.iter().map(|&(a, b)| (b, a)).collect();
        assert_eq!(ingest_pairs(&rows).unwrap(), ingest_pairs(&swapped).unwrap());
    }

    #[test]
    fn ecdf_build_aggregates_ties() {
        let f = ecdf_build(&[3.0, 1.0, 1.0]).unwrap();
        assert_eq!(f.support(), &[1.0, 3.0]);
        assert_eq!(f.cum_prop(), &[2.0 / 3.0, 1.0]);

        let f = ecdf_build(&[5.0]).unwrap();
        assert_eq!(f.support(), &[5.0]);
        assert_eq!(f.cum_prop(), &[1.0]);

        let f = ecdf_build(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.eval(2.5), 0.5);

        assert!(matches!(ecdf_build(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn ecdf_eval_is_right_continuous() {
        let f = ecdf_build(&[1.0, 2.0]).unwrap();
        assert_eq!(ecdf_eval(&f, 0.9), 0.0);
        assert_eq!(ecdf_eval(&f, 1.0), 0.5);
        assert_eq!(ecdf_eval(&f, 10.0), 1.0);
        assert_eq!(ecdf_eval(&f, f64::NEG_INFINITY), 0.0);
        assert_eq!(ecdf_eval(&f, f64::INFINITY), 1.0);
    }

    #[test]
    fn min_max_ecdf_examples() {
        let s = ingest_pairs(&[(1.0, 2.0)]).unwrap();
        let (lo, hi) = min_max_ecdfs(&s);
        assert_eq!(lo.support(), &[1.0]);
        assert_eq!(hi.support(), &[2.0]);

        let s = ingest_pairs(&[(1.0, 2.0), (1.0, 3.0)]).unwrap();
        let (lo, hi) = min_max_ecdfs(&s);
        assert_eq!((lo.eval(1.0), hi.eval(1.0)), (1.0, 0.0));

        let s = ingest_pairs(&[(0.2, 0.9), (0.4, 0.5), (0.1, 0.3)]).unwrap();
        let (lo, hi) = min_max_ecdfs(&s);
        assert_eq!(lo.eval(0.45), 1.0);
        assert_eq!(hi.eval(0.45), 1.0 / 3.0);
    }

    #[test]
    fn pooled_ecdf_examples() {
        let s = ingest_pairs(&[(1.0, 2.0)]).unwrap();
        assert_eq!(pooled_ecdf(&s).eval(1.5), 0.5);
        let s = ingest_pairs(&[(1.0, 2.0), (3.0, 4.0)]).unwrap();
        assert_eq!(pooled_ecdf(&s).eval(3.0), 0.75);
    }

    #[test]
    fn grid_validation() {
        assert!(EvalGrid::new(vec![]).is_err());
        assert!(EvalGrid::new(vec![1.0, 1.0]).is_err());
        assert!(EvalGrid::new(vec![2.0, 1.0]).is_err());
        assert_eq!(
            EvalGrid::from_unsorted(vec![3.0, 1.0, 3.0]).unwrap().points(),
            &[1.0, 3.0]
        );
        let g = EvalGrid::linspace(0.0, 1.0, 11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g.points()[10], 1.0);
    }

    #[test]
    fn csv_header_detection_and_delimiter() {
        let s = read_pairs_csv("a,b\n2,1\n3,4\n".as_bytes(), b',').unwrap();
        assert_eq!(s.pairs(), &[(1.0, 2.0), (3.0, 4.0)]);

        let s = read_pairs_csv("0.5;0.25\n1;2\n".as_bytes(), b';').unwrap();
        assert_eq!(s.pairs(), &[(0.25, 0.5), (1.0, 2.0)]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            read_pairs_csv("".as_bytes(), b','),
            Err(Error::EmptySample)
        ));
        assert!(matches!(
            read_pairs_csv("x,y\n".as_bytes(), b','),
            Err(Error::EmptySample)
        ));
        match read_pairs_csv("1,2\n3,oops\n".as_bytes(), b',') {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match read_pairs_csv("1,2\n3,4,5\n".as_bytes(), b',') {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_pairs_csv("1,2\n3,NaN\n".as_bytes(), b','),
            Err(Error::MalformedRow { .. })
        ));
    }
}
