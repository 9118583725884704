//! CSV ingestion and export.
//!
//! Observations use the long layout `subject_id,time,value`; labels use
//! `subject_id,label`. Numbers are written with 17 significant digits so
//! that every emitted value parses back to the same `f64`.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{LongitudinalDataset, Subject};
use crate::dpca::DpcaFit;
use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Formats with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

/// Reads every record, checking the header; returns `(line, fields)` pairs.
fn records<R: Read>(input: R, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = reader(input);
    let mut out = Vec::new();
    let mut saw_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<String> = rec.iter().map(str::to_owned).collect();
        if !saw_header {
            let ok = fields.len() >= header.len()
                && fields.iter().zip(header).all(|(a, b)| a.eq_ignore_ascii_case(b));
            if !ok {
                return Err(parse_err(line, format!("expected header '{}'", header.join(","))));
            }
            saw_header = true;
            if fields.len() > header.len() && header.len() > 1 {
                return Err(parse_err(line, format!("expected header '{}'", header.join(","))));
            }
            out.push((line, fields));
            continue;
        }
        out.push((line, fields));
    }
    if !saw_header {
        return Err(parse_err(1, format!("empty input; expected header '{}'", header.join(","))));
    }
    Ok(out)
}

fn number(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(line, format!("{what} '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} '{field}' is not finite")));
    }
    Ok(v)
}

/// Parses long-form observations. Subjects keep their order of first
/// appearance; each subject's rows are sorted by time; repeated times
/// within a subject are rejected. The domain is the observed time range.
pub fn parse_long_csv<R: Read>(input: R) -> Result<LongitudinalDataset> {
    let rows = records(input, &["subject_id", "time", "value"])?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(f64, f64, usize)>> = HashMap::new();
    for (line, fields) in rows.into_iter().skip(1) {
        if fields.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", fields.len())));
        }
        let id = fields[0].clone();
        if id.is_empty() {
            return Err(parse_err(line, "empty subject_id"));
        }
        let t = number(&fields[1], line, "time")?;
        let y = number(&fields[2], line, "value")?;
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push((t, y, line));
    }
    if order.is_empty() {
        return Err(parse_err(2, "no observations"));
    }
    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let mut obs = groups.remove(&id).expect("grouped");
        obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(parse_err(
                w[1].2,
                format!("subject '{id}' has a repeated time {} (first on line {})", w[1].0, w[0].2),
            ));
        }
        let times = obs.iter().map(|o| o.0).collect();
        let values = obs.iter().map(|o| o.1).collect();
        subjects.push(Subject::new(id, times, values)?);
    }
    if subjects.iter().flat_map(|s| &s.times).all(|&t| t == subjects[0].times[0]) {
        return Err(Error::InvalidInput("all observations share one time; the domain is degenerate".into()));
    }
    LongitudinalDataset::from_subjects(subjects)
}

pub fn read_long_csv(path: &Path) -> Result<LongitudinalDataset> {
    parse_long_csv(open(path)?)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))
}

/// Parses `subject_id,label` with labels 0 or 1; ids must be unique.
pub fn parse_labels_csv<R: Read>(input: R) -> Result<Vec<(String, u8)>> {
    let rows = records(input, &["subject_id", "label"])?;
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (line, fields) in rows.into_iter().skip(1) {
        if fields.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", fields.len())));
        }
        let label = match fields[1].as_str() {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(line, format!("label '{other}' must be 0 or 1"))),
        };
        if let Some(first) = seen.insert(fields[0].clone(), line) {
            return Err(parse_err(line, format!("subject '{}' already labeled on line {first}", fields[0])));
        }
        out.push((fields[0].clone(), label));
    }
    if out.is_empty() {
        return Err(parse_err(2, "no labels"));
    }
    Ok(out)
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, u8)>> {
    parse_labels_csv(open(path)?)
}

/// Feature table keyed by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub values: DMatrix<f64>,
}

impl FeatureTable {
    /// Columns whose names start with `prefix`, in order.
    pub fn select_prefix(&self, prefix: &str) -> FeatureTable {
        let idx: Vec<usize> = (0..self.columns.len())
            .filter(|&j| self.columns[j].starts_with(prefix))
            .collect();
        FeatureTable {
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            ids: self.ids.clone(),
            values: DMatrix::from_fn(self.ids.len(), idx.len(), |i, c| self.values[(i, idx[c])]),
        }
    }

    /// Rows reordered to `ids`; every id must be present.
    pub fn align(&self, ids: &[String]) -> Result<DMatrix<f64>> {
        let pos: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let rows = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("subject '{id}' has no feature row")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(rows.len(), self.values.ncols(), |i, j| self.values[(rows[i], j)]))
    }
}

/// Parses `subject_id,<feature>,...` with one row per subject.
pub fn parse_feature_csv<R: Read>(input: R) -> Result<FeatureTable> {
    let rows = records(input, &["subject_id"])?;
    let mut iter = rows.into_iter();
    let (_, header) = iter.next().expect("header present");
    let columns: Vec<String> = header[1..].to_vec();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut seen = HashMap::new();
    for (line, fields) in iter {
        if fields.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), fields.len())));
        }
        if let Some(first) = seen.insert(fields[0].clone(), line) {
            return Err(parse_err(line, format!("subject '{}' repeated (first on line {first})", fields[0])));
        }
        ids.push(fields[0].clone());
        for (f, name) in fields[1..].iter().zip(&columns) {
            data.push(number(f, line, name)?);
        }
    }
    let values = DMatrix::from_row_slice(ids.len(), columns.len(), &data);
    Ok(FeatureTable { columns, ids, values })
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureTable> {
    parse_feature_csv(open(path)?)
}

/// Long-form CSV of per-subject curves sharing one grid.
pub fn long_csv(ids: &[String], curves: &[GridFunction]) -> String {
    let mut out = String::from("subject_id,time,value\n");
    for (id, c) in ids.iter().zip(curves) {
        for (t, v) in c.grid.points().iter().zip(&c.values) {
            out.push_str(&format!("{id},{},{}\n", fmt_num(*t), fmt_num(*v)));
        }
    }
    out
}

pub fn dataset_csv(data: &LongitudinalDataset) -> String {
    let mut out = String::from("subject_id,time,value\n");
    for s in &data.subjects {
        for (t, v) in s.times.iter().zip(&s.values) {
            out.push_str(&format!("{},{},{}\n", s.id, fmt_num(*t), fmt_num(*v)));
        }
    }
    out
}

pub fn mean_derivative_csv(fit: &DpcaFit) -> String {
    let mut out = String::from("time,mean,mean_derivative\n");
    for (j, t) in fit.grid.points().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_num(*t),
            fmt_num(fit.mean.values[j]),
            fmt_num(fit.mean_deriv.values[j])
        ));
    }
    out
}

/// Trajectory eigenfunctions `phi_k`, their derivatives `dphi_k`, and the
/// derivative eigenfunctions `psi_k`, one row per grid point.
pub fn eigenfunctions_csv(fit: &DpcaFit) -> String {
    let mut cols: Vec<(String, &GridFunction)> = Vec::new();
    for (k, f) in fit.trajectory.functions.iter().enumerate() {
        cols.push((format!("phi_{}", k + 1), f));
    }
    for (k, f) in fit.trajectory_derivs.iter().enumerate() {
        cols.push((format!("dphi_{}", k + 1), f));
    }
    for (k, f) in fit.derivative.functions.iter().enumerate() {
        cols.push((format!("psi_{}", k + 1), f));
    }
    let mut out = String::from("time");
    for (name, _) in &cols {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (j, t) in fit.grid.points().iter().enumerate() {
        out.push_str(&fmt_num(*t));
        for (_, f) in &cols {
            out.push(',');
            out.push_str(&fmt_num(f.values[j]));
        }
        out.push('\n');
    }
    out
}

/// `subject_id,fpc_1..,dpc_1..`.
pub fn scores_csv(fit: &DpcaFit) -> String {
    let (kf, kd) = (fit.fpc_scores.n_components(), fit.dpc_scores.n_components());
    let mut out = String::from("subject_id");
    for k in 1..=kf {
        out.push_str(&format!(",fpc_{k}"));
    }
    for k in 1..=kd {
        out.push_str(&format!(",dpc_{k}"));
    }
    out.push('\n');
    for (i, id) in fit.subject_ids.iter().enumerate() {
        out.push_str(id);
        for k in 0..kf {
            out.push(',');
            out.push_str(&fmt_num(fit.fpc_scores.values[(i, k)]));
        }
        for k in 0..kd {
            out.push(',');
            out.push_str(&fmt_num(fit.dpc_scores.values[(i, k)]));
        }
        out.push('\n');
    }
    out
}

/// DPCA derivative reconstructions with the selected `K`, in long form.
pub fn reconstructions_csv(fit: &DpcaFit) -> Result<String> {
    Ok(long_csv(&fit.subject_ids, &fit.derivative_curves(fit.k_dpc)?))
}

/// Writes `fit.json`, `mean_derivative.csv`, `eigenfunctions.csv`, `scores.csv` and `reconstructions.csv`.
pub fn write_fit_outputs(fit: &DpcaFit, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(fit).map_err(std::io::Error::other)?;
    fs::write(dir.join("fit.json"), json)?;
    fs::write(dir.join("mean_derivative.csv"), mean_derivative_csv(fit))?;
    fs::write(dir.join("eigenfunctions.csv"), eigenfunctions_csv(fit))?;
    fs::write(dir.join("scores.csv"), scores_csv(fit))?;
    let rec = reconstructions_csv(fit).map_err(std::io::Error::other)?;
    fs::write(dir.join("reconstructions.csv"), rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_sorts_and_keeps_first_appearance() {
        let text = "subject_id,time,value\nb,0.5,1\na,0.2,2\nb,0.1,3\n";
        let d = parse_long_csv(text.as_bytes()).unwrap();
        assert_eq!(d.ids(), vec!["b", "a"]);
        assert_eq!(d.subjects[0].times, vec![0.1, 0.5]);
        assert_eq!(d.subjects[0].values, vec![3.0, 1.0]);
        assert_eq!(d.domain, (0.1, 0.5));
    }

    #[test]
    fn line_numbered_errors() {
        let err = parse_long_csv("subject_id,time,value\na,0.1,1\na,x,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = parse_long_csv("subject_id,time,value\na,0.1,1\nb,0.3,1\na,0.1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
        assert!(matches!(parse_long_csv("".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_long_csv("id,t,y\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_long_csv("subject_id,time,value\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn labels_parse() {
        let l = parse_labels_csv("subject_id,label\nx,1\ny,0\n".as_bytes()).unwrap();
        assert_eq!(l, vec![("x".to_string(), 1), ("y".to_string(), 0)]);
        assert!(matches!(
            parse_labels_csv("subject_id,label\nx,2\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_labels_csv("subject_id,label\nx,1\nx,0\n".as_bytes()).is_err());
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let s = vec![
            Subject::new("s 1", vec![0.1, 1.0 / 3.0], vec![std::f64::consts::PI, -1e-300]).unwrap(),
            Subject::new("s2", vec![0.7], vec![2.0f64.sqrt()]).unwrap(),
        ];
        let d = LongitudinalDataset::from_subjects(s).unwrap();
        let back = parse_long_csv(dataset_csv(&d).as_bytes()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn features_align_by_id() {
        let t = parse_feature_csv("subject_id,fpc_1,dpc_1\na,1,2\nb,3,4\n".as_bytes()).unwrap();
        let m = t.select_prefix("dpc_").align(&["b".into(), "a".into()]).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 1, &[4.0, 2.0]));
        assert!(t.align(&["c".into()]).is_err());
    }
}
