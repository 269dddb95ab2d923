//! CSV input and output with declared variable roles.

use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{GroupedData, MediatorBlock, ObservedData};
use crate::error::{Error, Result};

/// One mediator block: its name and ordered columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub columns: Vec<String>,
}

/// Column roles. Mediator blocks are listed in causal order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Treatment column (the group indicator for disparity runs).
    #[serde(alias = "group")]
    pub treatment: String,
    pub outcome: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub mediators: Vec<BlockSpec>,
    /// Mediator columns holding integer-coded discrete values.
    #[serde(default)]
    pub discrete: Vec<String>,
}

impl DataSpec {
    fn check(&self) -> Result<()> {
        if self.treatment.is_empty() || self.outcome.is_empty() {
            return Err(Error::Config("data spec needs treatment and outcome columns".into()));
        }
        let mut seen = HashSet::new();
        let all = std::iter::once(&self.treatment)
            .chain(std::iter::once(&self.outcome))
            .chain(&self.covariates)
            .chain(self.mediators.iter().flat_map(|b| &b.columns));
        for c in all {
            if !seen.insert(c.as_str()) {
                return Err(Error::Config(format!("column '{c}' is assigned more than one role")));
            }
        }
        for b in &self.mediators {
            if b.columns.is_empty() {
                return Err(Error::Config(format!("mediator block '{}' lists no columns", b.name)));
            }
        }
        for d in &self.discrete {
            if !self.mediators.iter().any(|b| b.columns.contains(d)) {
                return Err(Error::Config(format!("discrete column '{d}' is not a mediator column")));
            }
        }
        Ok(())
    }
}

/// Raw numeric table keyed by header.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, name: &str, path: &Path) -> Result<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Config(format!("column '{name}' not found in {} (header: {})", path.display(), self.header.join(",")))
        })?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

fn read_table(path: &Path, needed: &[&str]) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| match e
        .kind()
    {
        csv::ErrorKind::Io(_) => Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("cannot open {}: {e}", path.display()),
        )),
        _ => Error::Csv(e),
    })?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Data(format!("{} has no header row", path.display())));
    }
    let wanted: Vec<usize> = needed
        .iter()
        .map(|name| {
            header.iter().position(|h| h == name).ok_or_else(|| {
                Error::Config(format!("column '{name}' not found in {} (header: {})", path.display(), header.join(",")))
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Data(format!("{} line {line}: {e}", path.display()))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = vec![f64::NAN; header.len()];
        for &j in &wanted {
            let field = rec.get(j).unwrap_or("");
            row[j] = field.parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "{} line {line}, column '{}': cannot parse '{field}' as a number",
                    path.display(),
                    header[j]
                ))
            })?;
            if !row[j].is_finite() {
                return Err(Error::Data(format!(
                    "{} line {line}, column '{}': non-finite value '{field}'",
                    path.display(),
                    header[j]
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    Ok(Table { header, rows })
}

/// Reads a dataset, keeping only the declared columns.
pub fn read_csv(path: &Path, spec: &DataSpec) -> Result<ObservedData> {
    spec.check()?;
    let mut needed: Vec<&str> = vec![&spec.treatment, &spec.outcome];
    needed.extend(spec.covariates.iter().map(String::as_str));
    needed.extend(spec.mediators.iter().flat_map(|b| b.columns.iter().map(String::as_str)));
    let t = read_table(path, &needed)?;
    let n = t.rows.len();
    let mut x = Array2::zeros((n, spec.covariates.len()));
    for (j, c) in spec.covariates.iter().enumerate() {
        for (i, v) in t.column(c, path)?.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let mut blocks = Vec::with_capacity(spec.mediators.len());
    for b in &spec.mediators {
        let mut values = Array2::zeros((n, b.columns.len()));
        for (j, c) in b.columns.iter().enumerate() {
            for (i, v) in t.column(c, path)?.into_iter().enumerate() {
                values[(i, j)] = v;
            }
        }
        let discrete = b.columns.iter().map(|c| spec.discrete.contains(c)).collect();
        blocks.push(MediatorBlock::new(b.name.clone(), b.columns.clone(), discrete, values));
    }
    ObservedData::with_names(
        x,
        spec.covariates.clone(),
        t.column(&spec.treatment, path)?,
        blocks,
        t.column(&spec.outcome, path)?,
        &spec.treatment,
        &spec.outcome,
    )
}

/// Reads group-disparity data; covariates must not be declared.
pub fn read_grouped_csv(path: &Path, spec: &DataSpec) -> Result<GroupedData> {
    if !spec.covariates.is_empty() {
        return Err(Error::Config("disparity decomposition takes no covariates".into()));
    }
    GroupedData::from_observed(read_csv(path, spec)?)
}

/// Writes `data` with its own column names (covariates, treatment, mediators, outcome).
pub fn write_csv(data: &ObservedData, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = data.x_names().to_vec();
    header.push(data.treatment_name().to_string());
    for b in data.blocks() {
        header.extend(b.columns.iter().cloned());
    }
    header.push(data.outcome_name().to_string());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.x_row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.a(i).to_string());
        rec.extend(data.m_row(i).iter().map(|v| v.to_string()));
        rec.push(data.y()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Spec matching the column names produced by [`write_csv`] for `data`.
pub fn spec_for(data: &ObservedData) -> DataSpec {
    DataSpec {
        treatment: data.treatment_name().to_string(),
        outcome: data.outcome_name().to_string(),
        covariates: data.x_names().to_vec(),
        mediators: data.blocks().iter().map(|b| BlockSpec { name: b.name.clone(), columns: b.columns.clone() }).collect(),
        discrete: data
            .blocks()
            .iter()
            .flat_map(|b| b.columns.iter().zip(&b.discrete).filter(|(_, &d)| d).map(|(c, _)| c.clone()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn spec() -> DataSpec {
        DataSpec {
            treatment: "a".into(),
            outcome: "y".into(),
            covariates: vec!["x".into()],
            mediators: vec![BlockSpec { name: "m".into(), columns: vec!["m".into()] }],
            discrete: vec![],
        }
    }

    #[test]
    fn bad_cell_reports_line_and_column() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,a,m,y\n1,0,0.5,1\n2,1,oops,0").unwrap();
        let err = read_csv(f.path(), &spec()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("'m'"), "{err}");
    }

    #[test]
    fn missing_column_is_a_config_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,a,y\n1,0,1\n2,1,0").unwrap();
        let err = read_csv(f.path(), &spec()).unwrap_err();
        assert_eq!(err.category(), crate::error::Category::Config);
    }

    #[test]
    fn extra_columns_are_ignored_and_round_trip_holds() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "note,x,a,m,y\nfoo,1,0,0.5,1\nbar,2,1,1.5,0").unwrap();
        let d = read_csv(f.path(), &spec()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, out.path()).unwrap();
        let back = read_csv(out.path(), &spec_for(&d)).unwrap();
        assert_eq!(back.y(), d.y());
        assert_eq!(back.m_row(1), d.m_row(1));
    }
}
