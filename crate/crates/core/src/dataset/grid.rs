use crate::{Error, Result};

/// A scalar field on a regular `rows × cols` grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("grid `{name}` must have positive dimensions")));
        }
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "grid `{name}` is {rows}x{cols} but holds {} values",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: pos / cols,
                column: name,
                message: format!("non-finite grid value {} at column {}", values[pos], pos % cols),
            });
        }
        Ok(Self { name, rows, cols, values })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Drops `margin` grid points from every edge.
    pub fn trim_border(&self, margin: usize) -> Result<GridField> {
        if 2 * margin >= self.rows || 2 * margin >= self.cols {
            return Err(Error::Dimension(format!(
                "margin {margin} leaves no interior in a {}x{} grid",
                self.rows, self.cols
            )));
        }
        let rows = self.rows - 2 * margin;
        let cols = self.cols - 2 * margin;
        let mut values = Vec::with_capacity(rows * cols);
        for r in margin..self.rows - margin {
            let start = r * self.cols + margin;
            values.extend_from_slice(&self.values[start..start + cols]);
        }
        Ok(GridField { name: self.name.clone(), rows, cols, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rows: usize, cols: usize) -> GridField {
        GridField::new("f", rows, cols, (0..rows * cols).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn narr_domain_trim() {
        let trimmed = ramp(277, 349).trim_border(90).unwrap();
        assert_eq!((trimmed.rows(), trimmed.cols()), (97, 169));
        assert_eq!(trimmed.values().len(), 16_393);
        assert_eq!(trimmed.get(0, 0), (90 * 349 + 90) as f64);
    }

    #[test]
    fn three_by_three_keeps_center() {
        let t = ramp(3, 3).trim_border(1).unwrap();
        assert_eq!(t.values(), &[4.0]);
    }

    #[test]
    fn empty_interior_rejected() {
        assert!(matches!(ramp(4, 4).trim_border(2), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_margin_is_identity() {
        let f = ramp(5, 7);
        assert_eq!(f.trim_border(0).unwrap(), f);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GridField::new("f", 2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            GridField::new("f", 1, 2, vec![1.0, f64::NAN]),
            Err(Error::Data { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn trims_compose(rows in 1usize..30, cols in 1usize..30, m1 in 0usize..8, m2 in 0usize..8) {
            let f = ramp(rows, cols);
            let once = f.trim_border(m1 + m2);
            let twice = f.trim_border(m1).and_then(|g| g.trim_border(m2));
            match (once, twice) {
                (Ok(a), Ok(b)) => proptest::prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                (a, b) => proptest::prop_assert!(false, "{:?} vs {:?}", a.is_ok(), b.is_ok()),
            }
        }
    }
}
