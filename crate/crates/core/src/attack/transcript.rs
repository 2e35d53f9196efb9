use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::defense::Setup;
use crate::error::{Error, Result};

/// Recorded query/response pairs: one CSV row per query.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub setup: Setup,
    pub nodes: Vec<usize>,
    pub responses: Array2<f64>,
}

impl Transcript {
    pub fn new(setup: Setup, nodes: Vec<usize>, responses: ArrayView2<'_, f64>) -> Result<Self> {
        if nodes.len() != responses.nrows() {
            return Err(Error::Dimension(format!(
                "{} nodes vs {} responses",
                nodes.len(),
                responses.nrows()
            )));
        }
        Ok(Self {
            setup,
            nodes,
            responses: responses.to_owned(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,setup");
        for j in 0..self.responses.ncols() {
            write!(out, ",v{j}").unwrap();
        }
        out.push('\n');
        for (v, row) in self.nodes.iter().zip(self.responses.rows()) {
            write!(out, "{v},{}", self.setup).unwrap();
            for x in row {
                write!(out, ",{x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty transcript"))?;
        let width = header.split(',').count().saturating_sub(2);
        if !header.starts_with("node,setup") {
            return Err(Error::parse(path, 1, "expected `node,setup,...` header"));
        }
        let mut setup = None;
        let mut nodes = Vec::new();
        let mut data = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| Error::parse(path, i + 1, m.to_string());
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width + 2 {
                return Err(bad("wrong number of columns"));
            }
            nodes.push(cells[0].parse().map_err(|_| bad("bad node id"))?);
            let s: Setup = cells[1].parse().map_err(|_| bad("bad setup"))?;
            if *setup.get_or_insert(s) != s {
                return Err(bad("mixed setups in one transcript"));
            }
            for c in &cells[2..] {
                data.push(c.parse::<f64>().map_err(|_| bad("bad response value"))?);
            }
        }
        let responses = Array2::from_shape_vec((nodes.len(), width), data)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(Self {
            setup: setup.unwrap_or(Setup::A),
            nodes,
            responses,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = Transcript::new(
            Setup::C,
            vec![4, 0],
            array![[0.1, -1e-300], [1.0 / 3.0, 2.5]].view(),
        )
        .unwrap();
        t.save(&path).unwrap();
        assert!(fs::read_to_string(&path)
            .unwrap()
            .starts_with("node,setup,v0,v1\n4,C,0.1,"));
        assert_eq!(Transcript::load(&path).unwrap(), t);
        fs::write(&path, "node,setup,v0\n1,A,0.5\n2,B,0.5\n").unwrap();
        assert!(Transcript::load(&path)
            .unwrap_err()
            .to_string()
            .contains(":3:"));
    }
}
