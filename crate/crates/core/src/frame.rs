//! Numeric data tables and the per-column tie-group structure behind the
//! rank likelihood.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Complete numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    names: Vec<String>,
    values: Matrix,
}

impl DataTable {
    /// Rejects tables with fewer than two rows or any non-finite cell.
    /// Negative zero is stored as zero so ties are decided by bits alone.
    pub fn new(names: Vec<String>, mut values: Matrix) -> Result<Self> {
        if names.len() != values.cols() {
            return Err(Error::Shape(format!("{} column names for {} columns", names.len(), values.cols())));
        }
        if values.rows() < 2 {
            return Err(Error::Invalid(format!("need at least two rows, got {}", values.rows())));
        }
        if values.cols() == 0 {
            return Err(Error::Invalid("table has no columns".into()));
        }
        let cols = values.cols();
        for (idx, v) in values.as_mut_slice().iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::Invalid(format!(
                    "non-finite value at row {}, column {}",
                    idx / cols + 1,
                    idx % cols + 1
                )));
            }
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self { names, values })
    }

    /// Table with generated names `V1..VJ`.
    pub fn unnamed(values: Matrix) -> Result<Self> {
        let names = (1..=values.cols()).map(|j| format!("V{j}")).collect();
        Self::new(names, values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn j(&self) -> usize {
        self.values.cols()
    }
}

/// Tie-group structure of one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRanks {
    /// Distinct values, strictly increasing.
    values: Vec<f64>,
    /// Tie-group index of each row.
    group_of: Vec<usize>,
    /// Rows of group `g` are `members[starts[g]..starts[g + 1]]`, ascending.
    members: Vec<usize>,
    starts: Vec<usize>,
}

impl ColumnRanks {
    pub fn new(column: &[f64]) -> Self {
        let n = column.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
        let mut values = Vec::new();
        let mut group_of = vec![0; n];
        let mut starts = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let v = column[i];
            if values.last().is_none_or(|last: &f64| last.to_bits() != v.to_bits()) {
                values.push(v);
                starts.push(pos);
            }
            group_of[i] = values.len() - 1;
        }
        starts.push(n);
        Self { values, group_of, members: order, starts }
    }

    pub fn n_groups(&self) -> usize {
        self.values.len()
    }

    pub fn distinct_values(&self) -> &[f64] {
        &self.values
    }

    pub fn group_of(&self, row: usize) -> usize {
        self.group_of[row]
    }

    pub fn group_rows(&self, g: usize) -> &[usize] {
        &self.members[self.starts[g]..self.starts[g + 1]]
    }

    /// Rows in nondecreasing value order (ascending row index within ties).
    pub fn sorted_rows(&self) -> &[usize] {
        &self.members
    }

    /// Number of rows with value at most that of group `g`.
    pub fn count_through(&self, g: usize) -> usize {
        self.starts[g + 1]
    }

    /// `inf { y : F(y) >= u }` for the empirical CDF of the column.
    pub fn empirical_quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("probability {u} outside [0, 1]")));
        }
        let n = self.group_of.len() as f64;
        // First group whose cumulative count reaches u * n.
        let g = self.starts[1..].partition_point(|&c| (c as f64) / n < u);
        Ok(self.values[g.min(self.values.len() - 1)])
    }
}

/// A data table with precomputed tie groups for every column.
#[derive(Debug, Clone, PartialEq)]
pub struct RankFrame {
    table: DataTable,
    columns: Vec<ColumnRanks>,
}

impl RankFrame {
    pub fn new(table: DataTable) -> Self {
        let columns = (0..table.j()).map(|j| ColumnRanks::new(&table.values().col(j))).collect();
        Self { table, columns }
    }

    pub fn table(&self) -> &DataTable {
        &self.table
    }

    pub fn column(&self, j: usize) -> &ColumnRanks {
        &self.columns[j]
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn j(&self) -> usize {
        self.table.j()
    }

    pub fn empirical_quantile(&self, j: usize, u: f64) -> Result<f64> {
        self.columns.get(j).ok_or_else(|| Error::Shape(format!("column {j} out of range")))?.empirical_quantile(u)
    }
}

pub fn build_rank_frame(table: DataTable) -> RankFrame {
    RankFrame::new(table)
}

/// Generalized inverse of the empirical CDF of `sorted` (ascending) at `u`.
pub fn quantile_sorted(sorted: &[f64], u: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Invalid("empty sample".into()));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("probability {u} outside [0, 1]")));
    }
    let n = sorted.len();
    // smallest k (1-based) with k / n >= u
    let mut k = libm::ceil(u * n as f64) as usize;
    while k > 1 && (k - 1) as f64 / n as f64 >= u {
        k -= 1;
    }
    while k < n && (k as f64) / (n as f64) < u {
        k += 1;
    }
    Ok(sorted[k.max(1) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> ColumnRanks {
        ColumnRanks::new(values)
    }

    #[test]
    fn groups_by_hand() {
        let c = column(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(c.distinct_values(), &[1.0, 2.0, 3.0]);
        assert_eq!(c.group_rows(0), &[1]);
        assert_eq!(c.group_rows(1), &[2, 3]);
        assert_eq!(c.group_rows(2), &[0]);
    }

    #[test]
    fn constant_and_increasing() {
        let c = column(&[5.0, 5.0, 5.0]);
        assert_eq!(c.n_groups(), 1);
        assert_eq!(c.group_rows(0), &[0, 1, 2]);
        let c = column(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.n_groups(), 4);
        for g in 0..4 {
            assert_eq!(c.group_rows(g), &[g]);
        }
    }

    #[test]
    fn quantiles() {
        let c = column(&[4.0, 2.0, 1.0, 3.0]);
        assert_eq!(c.empirical_quantile(0.5).unwrap(), 2.0);
        assert_eq!(c.empirical_quantile(0.0).unwrap(), 1.0);
        assert_eq!(c.empirical_quantile(1.0).unwrap(), 4.0);
        assert_eq!(c.empirical_quantile(0.51).unwrap(), 3.0);
        assert!(c.empirical_quantile(1.5).is_err());
        assert!(c.empirical_quantile(-0.1).is_err());
    }

    #[test]
    fn sorted_quantile_matches_column_quantile() {
        let sorted = [1.0, 2.0, 2.0, 5.0, 7.0];
        let c = column(&sorted);
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert_eq!(quantile_sorted(&sorted, u).unwrap(), c.empirical_quantile(u).unwrap());
        }
    }

    #[test]
    fn table_validation() {
        let m = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(DataTable::unnamed(m).is_err());
        let m = Matrix::from_rows(&[[1.0, f64::NAN], [0.0, 1.0]]).unwrap();
        assert!(DataTable::unnamed(m).is_err());
        let m = Matrix::from_rows(&[[-0.0], [0.0]]).unwrap();
        let t = DataTable::unnamed(m).unwrap();
        assert_eq!(RankFrame::new(t).column(0).n_groups(), 1);
    }
}
