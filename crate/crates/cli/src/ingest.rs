//! CSV ingestion: the first row is a header, the configuration designates
//! outcome and covariate columns, empty cells are missing values. Missing
//! covariates become indicator-plus-zero-fill columns; missing outcomes are
//! an error.

use std::path::Path;

use mvassoc::data::Dataset;
use mvassoc::Error;

pub fn load_csv(
    path: &Path,
    outcomes: &[String],
    covariates: Option<&[String]>,
) -> Result<Dataset, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> =
        reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();

    for name in &headers {
        if headers.iter().filter(|h| *h == name).count() > 1 {
            return Err(Error::Config(format!("duplicate column '{name}' in header")));
        }
    }
    let col_of = |name: &String| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Config(format!("column '{name}' not found in {}", path.display()))
        })
    };
    let outcome_cols: Vec<usize> = outcomes.iter().map(col_of).collect::<Result<_, _>>()?;
    let covariate_cols: Vec<usize> = match covariates {
        Some(list) => list.iter().map(col_of).collect::<Result<_, _>>()?,
        None => (0..headers.len()).filter(|c| !outcome_cols.contains(c)).collect(),
    };
    if covariate_cols.is_empty() {
        return Err(Error::Config("no covariate columns remain".into()));
    }
    if let Some(&dup) = covariate_cols.iter().find(|c| outcome_cols.contains(c)) {
        return Err(Error::Config(format!(
            "column '{}' is both outcome and covariate",
            headers[dup]
        )));
    }

    let mut x_cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); covariate_cols.len()];
    let mut y_cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); outcome_cols.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parse = |col: usize| -> Result<Option<f64>, Error> {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>().map(Some).map_err(|_| {
                Error::Config(format!(
                    "row {}, column '{}': cannot parse '{cell}' as a number",
                    row_idx + 2,
                    headers[col]
                ))
            })
        };
        for (slot, &col) in x_cols.iter_mut().zip(&covariate_cols) {
            slot.push(parse(col)?);
        }
        for (slot, &col) in y_cols.iter_mut().zip(&outcome_cols) {
            slot.push(parse(col)?);
        }
    }

    Dataset::from_columns(
        covariate_cols
            .iter()
            .zip(x_cols)
            .map(|(&c, v)| (headers[c].clone(), v))
            .collect(),
        outcome_cols
            .iter()
            .zip(y_cols)
            .map(|(&c, v)| (headers[c].clone(), v))
            .collect(),
    )
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Write a dataset to CSV (used by `simulate --emit-data` and tests).
pub fn write_csv(data: &Dataset, path: &Path) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = data.covariate_names().to_vec();
    header.extend(data.outcome_names().iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for r in 0..data.n() {
        let mut row: Vec<String> =
            data.covariates().row(r).iter().map(|v| format!("{v}")).collect();
        row.extend(data.outcomes().row(r).iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
