//! Dataset sampling: stratified train/test splitting and
//! oversampling-based class balancing.

use super::{RawDataset, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::rng::RunRng;

/// Splits record indices into train and test sides.
///
/// The test side holds round(n * test_fraction) rows. With
/// stratification the quota is apportioned per class by largest
/// remainder, so every class lands within one row of its exact share.
/// Both sides are disjoint and cover the dataset.
pub fn split(
    ds: &RawDataset,
    test_fraction: f64,
    stratified: bool,
    rng: &mut RunRng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Usage(format!(
            "test fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "cannot split a dataset of {n} rows"
        )));
    }
    let test_total = ((n as f64) * test_fraction).round() as usize;
    if test_total == 0 || test_total == n {
        return Err(Error::Validation(format!(
            "test fraction {test_fraction} leaves an empty split for {n} rows"
        )));
    }

    if !stratified {
        let mut indices: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut indices);
        let test = indices[..test_total].to_vec();
        let train = indices[test_total..].to_vec();
        return Ok((train, test));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); CLASS_NAMES.len()];
    for (i, r) in ds.records.iter().enumerate() {
        by_class[r.class].push(i);
    }
    for members in &mut by_class {
        rng.shuffle(members);
    }

    // Largest-remainder apportionment of the test quota.
    let mut quotas = Vec::new();
    let mut floor_sum = 0;
    for members in &by_class {
        let exact = (members.len() as f64) * test_fraction;
        let floor = (exact.floor() as usize).min(members.len());
        quotas.push((floor, exact - floor as f64));
        floor_sum += floor;
    }
    let mut leftover = test_total.saturating_sub(floor_sum);
    let mut order: Vec<usize> = (0..by_class.len()).collect();
    order.sort_by(|&a, &b| {
        quotas[b]
            .1
            .partial_cmp(&quotas[a].1)
            .unwrap()
            .then(a.cmp(&b))
    });
    while leftover > 0 {
        let mut progressed = false;
        for &c in &order {
            if leftover == 0 {
                break;
            }
            if quotas[c].0 < by_class[c].len() {
                quotas[c].0 += 1;
                leftover -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        let take = quotas[c].0.min(members.len());
        test.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Oversamples minority attack classes among the given training rows
/// until every class present matches the majority count. Rows are drawn
/// with replacement; an already balanced slice is returned unchanged.
///
/// A class that exists in the dataset but vanished from the training
/// rows cannot be recovered by resampling, so that is an error naming
/// the class.
pub fn balance_classes(
    ds: &RawDataset,
    train_rows: &[usize],
    rng: &mut RunRng,
) -> Result<Vec<usize>> {
    let dataset_counts = ds.class_counts();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); CLASS_NAMES.len()];
    for &i in train_rows {
        if i >= ds.len() {
            return Err(Error::Validation(format!(
                "row index {i} out of range for dataset of {}",
                ds.len()
            )));
        }
        by_class[ds.records[i].class].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if dataset_counts[c] > 0 && members.is_empty() {
            return Err(Error::Validation(format!(
                "class {:?} has no training rows to oversample from",
                CLASS_NAMES[c]
            )));
        }
    }
    let max = by_class.iter().map(Vec::len).max().unwrap_or(0);
    if max == 0 {
        return Err(Error::Validation("cannot balance zero training rows".into()));
    }
    if by_class.iter().all(|m| m.is_empty() || m.len() == max) {
        return Ok(train_rows.to_vec());
    }

    let mut out = train_rows.to_vec();
    for members in &by_class {
        if members.is_empty() {
            continue;
        }
        for _ in members.len()..max {
            let pick = members[rng.below(members.len())];
            out.push(pick);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{fixture, ColumnKind, ColumnSpec, RawDataset, RawRecord};
    use super::*;

    fn synthetic(counts: &[usize]) -> RawDataset {
        let mut records = Vec::new();
        for (class, &count) in counts.iter().enumerate() {
            for k in 0..count {
                records.push(RawRecord {
                    numeric: vec![k as f64],
                    categorical: vec![],
                    class,
                    label: if class == 0 { 0 } else { 1 },
                });
            }
        }
        RawDataset {
            feature_columns: vec![ColumnSpec {
                name: "v".into(),
                kind: ColumnKind::Numeric,
            }],
            records,
        }
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let ds = synthetic(&[50, 30, 20]);
        let mut rng = RunRng::from_seed(3);
        let (train, test) = split(&ds, 0.3, true, &mut rng).unwrap();
        assert_eq!(train.len() + test.len(), 100);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_split_hits_exact_share_per_class() {
        let ds = synthetic(&[50, 30, 20]);
        let mut rng = RunRng::from_seed(3);
        let (_, test) = split(&ds, 0.3, true, &mut rng).unwrap();
        assert_eq!(test.len(), 30);
        let mut counts = [0usize; 3];
        for &i in &test {
            counts[ds.records[i].class] += 1;
        }
        assert_eq!(counts, [15, 9, 6]);
    }

    #[test]
    fn largest_remainder_keeps_per_class_error_within_one() {
        let ds = synthetic(&[7, 6, 5, 3]);
        let mut rng = RunRng::from_seed(11);
        let (_, test) = split(&ds, 0.3, true, &mut rng).unwrap();
        assert_eq!(test.len(), 6);
        let mut counts = [0usize; 4];
        for &i in &test {
            counts[ds.records[i].class] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            let exact = ds.records.iter().filter(|r| r.class == c).count() as f64 * 0.3;
            assert!(
                (count as f64 - exact).abs() < 1.0,
                "class {c}: {count} vs {exact}"
            );
        }
    }

    #[test]
    fn degenerate_fractions_are_rejected() {
        let ds = synthetic(&[10]);
        let mut rng = RunRng::from_seed(1);
        assert!(split(&ds, 0.0, true, &mut rng).is_err());
        assert!(split(&ds, 1.0, true, &mut rng).is_err());
        assert!(split(&ds, 0.01, true, &mut rng).is_err());
    }

    #[test]
    fn balance_lifts_minorities_to_majority() {
        let ds = synthetic(&[40, 10, 4]);
        let rows: Vec<usize> = (0..54).collect();
        let mut rng = RunRng::from_seed(5);
        let out = balance_classes(&ds, &rows, &mut rng).unwrap();
        let mut counts = [0usize; 3];
        for &i in &out {
            counts[ds.records[i].class] += 1;
        }
        assert_eq!(counts, [40, 40, 40]);
        // Originals are all retained.
        for i in rows {
            assert!(out.contains(&i));
        }
    }

    #[test]
    fn already_balanced_rows_pass_through() {
        let ds = synthetic(&[5, 5]);
        let rows: Vec<usize> = (0..10).collect();
        let mut rng = RunRng::from_seed(5);
        let out = balance_classes(&ds, &rows, &mut rng).unwrap();
        assert_eq!(out, rows);
    }

    #[test]
    fn missing_class_in_training_rows_is_an_error() {
        let ds = synthetic(&[5, 5, 2]);
        // Drop class 2 (indices 10 and 11) from the training rows.
        let rows: Vec<usize> = (0..10).collect();
        let mut rng = RunRng::from_seed(5);
        let err = balance_classes(&ds, &rows, &mut rng).unwrap_err();
        assert!(err.to_string().contains("Exploits"));
    }

    #[test]
    fn fixture_split_and_balance_work_in_both_modes() {
        let ds = fixture().unwrap();
        let mut rng = RunRng::from_seed(2);
        let (train, test) = split(&ds, 0.3, true, &mut rng).unwrap();
        assert_eq!(test.len(), 300);
        let balanced = balance_classes(&ds, &train, &mut rng).unwrap();
        let mut counts = [0usize; 10];
        for &i in &balanced {
            counts[ds.records[i].class] += 1;
        }
        let max = *counts.iter().max().unwrap();
        assert!(counts.iter().all(|&c| c == max));
    }
}
