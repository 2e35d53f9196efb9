//! Text persistence for trained target models.
//!
//! ```text
//! #adage-model v1
//! dims features=<m> dim=<d> classes=<c> steps=<k>
//! [w1]        m rows of d values
//! [w2]        d rows of c values
//! [b2]        1 row of c values
//! [projection] d rows of 2 values
//! [mean]      1 row of d values
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Classifier, EncoderParams, HeadParams, ProjectionHead, TargetModel};
use crate::error::{Error, Result};

pub const MODEL_HEADER: &str = "#adage-model v1";

fn write_block(out: &mut String, name: &str, rows: impl Iterator<Item = Vec<f64>>) {
    writeln!(out, "[{name}]").unwrap();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
}

pub fn save_model(model: &TargetModel, path: &Path) -> Result<()> {
    let enc = &model.classifier.encoder;
    let head = &model.classifier.head;
    let mut out = String::new();
    writeln!(out, "{MODEL_HEADER}").unwrap();
    writeln!(
        out,
        "dims features={} dim={} classes={} steps={}",
        enc.feature_dim(),
        enc.dim(),
        head.classes(),
        enc.steps
    )
    .unwrap();
    write_block(
        &mut out,
        "w1",
        enc.w1.rows().into_iter().map(|r| r.to_vec()),
    );
    write_block(
        &mut out,
        "w2",
        head.w2.rows().into_iter().map(|r| r.to_vec()),
    );
    write_block(&mut out, "b2", std::iter::once(head.b2.to_vec()));
    write_block(
        &mut out,
        "projection",
        model.projection.p.rows().into_iter().map(|r| r.to_vec()),
    );
    write_block(
        &mut out,
        "mean",
        std::iter::once(model.projection.mean.to_vec()),
    );
    fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    path: &'a Path,
    lines: Vec<(usize, &'a str)>,
    at: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        let line = self.lines.get(self.at).map_or(0, |l| l.0);
        Error::parse(self.path, line, message)
    }

    fn block(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        match self.lines.get(self.at) {
            Some((_, l)) if *l == format!("[{name}]") => self.at += 1,
            _ => return Err(self.err(format!("expected block [{name}]"))),
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let Some(&(line, l)) = self.lines.get(self.at) else {
                return Err(self.err(format!("block [{name}] is truncated")));
            };
            let row = l
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Error::parse(self.path, line, "malformed number"))?;
            if row.len() != cols {
                return Err(Error::parse(
                    self.path,
                    line,
                    format!("expected {cols} values, got {}", row.len()),
                ));
            }
            data.extend(row);
            self.at += 1;
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("sized above"))
    }
}

pub fn load_model(path: &Path) -> Result<TargetModel> {
    let text = fs::read_to_string(path)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut r = Reader { path, lines, at: 0 };
    if r.lines.first().map(|l| l.1) != Some(MODEL_HEADER) {
        return Err(r.err(format!("expected `{MODEL_HEADER}`")));
    }
    r.at = 1;
    let dims = r
        .lines
        .get(1)
        .and_then(|(_, l)| l.strip_prefix("dims "))
        .ok_or_else(|| r.err("expected dims line"))?;
    let mut m = None;
    let mut d = None;
    let mut c = None;
    let mut k = None;
    for kv in dims.split_whitespace() {
        let (key, val) = kv
            .split_once('=')
            .ok_or_else(|| r.err("malformed dims entry"))?;
        let val: usize = val
            .parse()
            .map_err(|_| r.err(format!("bad value for {key}")))?;
        match key {
            "features" => m = Some(val),
            "dim" => d = Some(val),
            "classes" => c = Some(val),
            "steps" => k = Some(val),
            other => return Err(r.err(format!("unknown dims key `{other}`"))),
        }
    }
    let (Some(m), Some(d), Some(c), Some(k)) = (m, d, c, k) else {
        return Err(r.err("dims line must set features, dim, classes, steps"));
    };
    r.at = 2;
    let w1 = r.block("w1", m, d)?;
    let w2 = r.block("w2", d, c)?;
    let b2: Array1<f64> = r.block("b2", 1, c)?.row(0).to_owned();
    let p = r.block("projection", d, 2)?;
    let mean: Array1<f64> = r.block("mean", 1, d)?.row(0).to_owned();
    Ok(TargetModel {
        classifier: Classifier {
            encoder: EncoderParams { w1, steps: k },
            head: HeadParams { w2, b2 },
        },
        projection: ProjectionHead { p, mean },
    })
}
