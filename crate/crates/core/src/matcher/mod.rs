//! Nearest-vacancy matching and the salary association test.

mod salary;
mod welch;

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use salary::{
    report_from_matches, report_variants, salary_association, salary_association_threaded, ComparisonCell, ComparisonRow, GapStats, GroupStats, IndustrySalary,
    SalaryAnalysis, SalaryReport, VariantComparison, HOURS_PER_YEAR,
};
pub use welch::{welch_t, WelchTest};

/// Euclidean distances between every row of `r` and every row of `v`.
pub fn distance_matrix(r: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    distance_matrix_threaded(r, v, 1)
}

/// As [`distance_matrix`], splitting the rows of `r` over `threads` workers.
/// The result does not depend on the thread count.
pub fn distance_matrix_threaded(r: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>, threads: usize) -> Result<Array2<f64>> {
    if r.ncols() != v.ncols() {
        return Err(Error::Dimension { expected: r.ncols(), got: v.ncols() });
    }
    if r.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::data("non-finite vector entry"));
    }
    let mut out = Array2::zeros((r.nrows(), v.nrows()));
    if r.nrows() == 0 || v.nrows() == 0 {
        return Ok(out);
    }
    let v = v.as_standard_layout();
    let fill = |rows: ArrayView2<'_, f64>, mut dst: ndarray::ArrayViewMut2<'_, f64>| {
        for (a, mut drow) in rows.outer_iter().zip(dst.outer_iter_mut()) {
            let a = a.to_vec();
            for (b, d) in v.outer_iter().zip(drow.iter_mut()) {
                let b = b.as_slice().expect("standard layout");
                *d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            }
        }
    };
    let threads = threads.clamp(1, r.nrows());
    if threads == 1 {
        fill(r, out.view_mut());
        return Ok(out);
    }
    let chunk = r.nrows().div_ceil(threads);
    std::thread::scope(|s| {
        for (rows, dst) in r.axis_chunks_iter(Axis(0), chunk).zip(out.axis_chunks_iter_mut(Axis(0), chunk)) {
            s.spawn(move || fill(rows, dst));
        }
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub resume_id: String,
    pub vacancy_id: String,
    pub distance: f64,
}

/// One pair per resume; a vacancy may be the nearest for many resumes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchAssignment {
    pub pairs: Vec<MatchPair>,
}

/// Column index of the row minimum of `d` for each row. Ties go to the lowest
/// column index.
pub fn nearest_columns(d: ArrayView2<'_, f64>) -> Result<Vec<(usize, f64)>> {
    if d.ncols() == 0 {
        return Err(Error::data("no vacancies to match against"));
    }
    Ok(d.outer_iter()
        .map(|row| {
            let mut best = (0, row[0]);
            for (j, &x) in row.iter().enumerate().skip(1) {
                if x < best.1 {
                    best = (j, x);
                }
            }
            best
        })
        .collect())
}

/// Assigns every resume (row of `d`) to its closest vacancy (column).
pub fn match_nearest(d: ArrayView2<'_, f64>, resume_ids: &[String], vacancy_ids: &[String]) -> Result<MatchAssignment> {
    if d.nrows() != resume_ids.len() || d.ncols() != vacancy_ids.len() {
        return Err(Error::data(format!(
            "distance matrix is {}x{} but got {} resume and {} vacancy ids",
            d.nrows(),
            d.ncols(),
            resume_ids.len(),
            vacancy_ids.len()
        )));
    }
    let pairs = nearest_columns(d)?
        .into_iter()
        .zip(resume_ids)
        .map(|((j, distance), rid)| MatchPair { resume_id: rid.clone(), vacancy_id: vacancy_ids[j].clone(), distance })
        .collect();
    Ok(MatchAssignment { pairs })
}

impl MatchAssignment {
    /// `resume_id vacancy_id distance` per line.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<assignment>", e);
        for p in &self.pairs {
            writeln!(w, "{} {} {}", p.resume_id, p.vacancy_id, p.distance).map_err(io)?;
        }
        Ok(())
    }

    /// Inverse of [`MatchAssignment::write`]. Blank lines and `#` comments are skipped.
    pub fn read<R: BufRead>(r: R, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |field: &str, message: String| Error::Record {
                path: path.to_path_buf(),
                line: n + 1,
                field: field.to_string(),
                message,
            };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(bad("line", format!("expected 3 columns, got {}", cols.len())));
            }
            let distance: f64 = cols[2].parse().map_err(|e| bad("distance", format!("{e}")))?;
            if !(distance >= 0.0 && distance.is_finite()) {
                return Err(bad("distance", format!("{distance} is not a nonnegative distance")));
            }
            pairs.push(MatchPair { resume_id: cols[0].to_string(), vacancy_id: cols[1].to_string(), distance });
        }
        Ok(MatchAssignment { pairs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-3.0..3.0))
    }

    fn naive(r: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((r.nrows(), v.nrows()));
        for i in 0..r.nrows() {
            for j in 0..v.nrows() {
                let mut s = 0.0;
                for k in 0..r.ncols() {
                    s += (r[[i, k]] - v[[j, k]]).powi(2);
                }
                out[[i, j]] = s.sqrt();
            }
        }
        out
    }

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn small_distances() {
        let d = distance_matrix(array![[1.0, 2.0]].view(), array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(d, array![[0.0]]);
        let d = distance_matrix(array![[0.0, 0.0], [3.0, 4.0]].view(), array![[3.0, 0.0], [0.0, 4.0], [0.0, 0.0]].view())
            .unwrap();
        assert_eq!(d.row(0).to_vec(), vec![3.0, 4.0, 0.0]);
        assert_eq!(d[[1, 2]], 5.0);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random(8, 5, &mut rng);
        let v = random(6, 5, &mut rng);
        let d = distance_matrix(r.view(), v.view()).unwrap();
        let o = naive(&r, &v);
        for (a, b) in d.iter().zip(o.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn threads_do_not_change_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = random(37, 7, &mut rng);
        let v = random(11, 7, &mut rng);
        let one = distance_matrix(r.view(), v.view()).unwrap();
        for t in [2, 3, 8, 100] {
            assert_eq!(distance_matrix_threaded(r.view(), v.view(), t).unwrap(), one);
        }
    }

    #[test]
    fn width_mismatch() {
        let e = distance_matrix(Array2::zeros((2, 3)).view(), Array2::zeros((2, 4)).view()).unwrap_err();
        assert!(matches!(e, Error::Dimension { expected: 3, got: 4 }));
        assert!(distance_matrix(array![[f64::NAN]].view(), array![[0.0]].view()).is_err());
    }

    #[test]
    fn argmin_and_ties() {
        assert_eq!(nearest_columns(array![[2.0, 1.0, 3.0]].view()).unwrap(), vec![(1, 1.0)]);
        assert_eq!(nearest_columns(array![[1.0, 1.0]].view()).unwrap(), vec![(0, 1.0)]);
        assert!(nearest_columns(Array2::<f64>::zeros((2, 0)).view()).is_err());
    }

    #[test]
    fn assignment_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random(50, 20, &mut rng).mapv(f64::abs);
        let a = match_nearest(d.view(), &ids("r", 50), &ids("v", 20)).unwrap();
        for (i, p) in a.pairs.iter().enumerate() {
            let mut best = 0;
            for j in 0..20 {
                if d[[i, j]] < d[[i, best]] {
                    best = j;
                }
            }
            assert_eq!(p.vacancy_id, format!("v{best}"));
            assert_eq!(p.distance, d[[i, best]]);
        }
    }

    #[test]
    fn dump_round_trip() {
        let a = MatchAssignment {
            pairs: vec![
                MatchPair { resume_id: "r1".into(), vacancy_id: "v9".into(), distance: 0.1 + 0.2 },
                MatchPair { resume_id: "r2".into(), vacancy_id: "v9".into(), distance: 0.0 },
            ],
        };
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next().unwrap(), "r1 v9 0.30000000000000004");
        assert_eq!(MatchAssignment::read(&buf[..], Path::new("x")).unwrap(), a);
        let e = MatchAssignment::read(&b"r1 v1 -1\n"[..], Path::new("x")).unwrap_err();
        assert!(matches!(e, Error::Record { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn transpose_symmetry(seed in 0u64..1000, n in 1usize..8, m in 1usize..8, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random(n, d, &mut rng);
            let v = random(m, d, &mut rng);
            let rv = distance_matrix(r.view(), v.view()).unwrap();
            let vr = distance_matrix(v.view(), r.view()).unwrap();
            for (a, b) in rv.iter().zip(vr.t().iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn translation_invariance(seed in 0u64..1000, shift in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random(6, 4, &mut rng);
            let v = random(9, 4, &mut rng);
            let c = random(1, 4, &mut rng).row(0).mapv(|x| x * shift);
            let d0 = distance_matrix(r.view(), v.view()).unwrap();
            let d1 = distance_matrix((&r + &c).view(), (&v + &c).view()).unwrap();
            for (a, b) in d0.iter().zip(d1.iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            let a0 = nearest_columns(d0.view()).unwrap();
            let a1 = nearest_columns(d1.view()).unwrap();
            let cols = |a: &[(usize, f64)]| a.iter().map(|p| p.0).collect::<Vec<_>>();
            prop_assert_eq!(cols(&a0), cols(&a1));
        }

        #[test]
        fn pair_distance_is_row_minimum(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random(10, 7, &mut rng).mapv(|x| (x * 2.0).round().abs());
            for (row, (_, dist)) in d.outer_iter().zip(nearest_columns(d.view()).unwrap()) {
                prop_assert_eq!(dist, row.iter().copied().fold(f64::INFINITY, f64::min));
            }
        }
    }
}
