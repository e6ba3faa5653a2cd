//! Dataset CSV and draws JSON-lines readers and writers.
//!
//! Data files have a header `x1,…,xp,y` with an optional trailing `z_true`
//! column. Draw files start with one metadata line followed by one line per
//! kept state.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComponentParams, Dataset, DrawStats, Draws, DrawsMeta, MixtureState};

pub const DRAWS_SCHEMA_VERSION: u32 = 1;

/// Parse a dataset, returning the true labels separately when present.
pub fn read_dataset<R: Read>(reader: R) -> Result<(Dataset, Option<Vec<usize>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let has_truth = headers.last().map(|h| h == "z_true").unwrap_or(false);
    let n_num = headers.len() - usize::from(has_truth);
    if n_num < 2 {
        return Err(Error::Data("need at least one covariate column and a y column".into()));
    }
    let p = n_num - 1;
    for (j, h) in headers.iter().take(p).enumerate() {
        if *h != format!("x{}", j + 1) {
            return Err(Error::Data(format!("column {} should be named x{}, found {h:?}", j + 1, j + 1)));
        }
    }
    if headers[p] != "y" {
        return Err(Error::Data(format!("column {} should be named y, found {:?}", p + 1, headers[p])));
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut truth = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row_no = line + 2;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!("row {row_no} has {} fields, expected {}", rec.len(), headers.len())));
        }
        let mut vals = Vec::with_capacity(n_num);
        for (j, field) in rec.iter().take(n_num).enumerate() {
            if field.is_empty() {
                return Err(Error::Data(format!("missing value in row {row_no}, column {}", headers[j])));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("row {row_no}, column {}: not a number: {field:?}", headers[j])))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {row_no}, column {}: non-finite value", headers[j])));
            }
            vals.push(v);
        }
        y.push(vals.pop().expect("y column"));
        rows.push(vals);
        if has_truth {
            let f = &rec[n_num];
            let z: usize = f
                .parse()
                .map_err(|_| Error::Data(format!("row {row_no}: z_true must be a non-negative integer, found {f:?}")))?;
            truth.push(z);
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let ds = Dataset::from_rows(&rows, &y)?;
    Ok((ds, has_truth.then_some(truth)))
}

pub fn read_dataset_file(path: &Path) -> Result<(Dataset, Option<Vec<usize>>)> {
    read_dataset(std::fs::File::open(path)?)
}

/// Write a dataset; floats use the shortest round-trip representation.
pub fn write_dataset<W: Write>(writer: W, ds: &Dataset, truth: Option<&[usize]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=ds.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if truth.is_some() {
        header.push("z_true".into());
    }
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.response(i).to_string());
        if let Some(t) = truth {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DrawsHeader {
    schema_version: u32,
    meta: DrawsMeta,
}

#[derive(Serialize, Deserialize)]
struct DrawLine {
    z: Vec<usize>,
    components: BTreeMap<usize, ComponentParams>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    weights: Option<Vec<f64>>,
    stats: DrawStats,
}

pub fn write_draws<W: Write>(mut writer: W, draws: &Draws) -> Result<()> {
    let header = DrawsHeader { schema_version: DRAWS_SCHEMA_VERSION, meta: draws.meta.clone() };
    serde_json::to_writer(&mut writer, &header)?;
    writer.write_all(b"\n")?;
    for (d, st) in draws.states.iter().enumerate() {
        let components = st.ids().into_iter().map(|id| (id, st.component(id).expect("live").clone())).collect();
        let line = DrawLine {
            z: st.z().to_vec(),
            components,
            weights: draws.weights.as_ref().map(|w| w[d].clone()),
            stats: draws.stats[d].clone(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_draws<R: Read>(reader: R) -> Result<Draws> {
    let mut lines = BufReader::new(reader).lines();
    let first = lines.next().ok_or_else(|| Error::Data("empty draws file".into()))??;
    let header: DrawsHeader = serde_json::from_str(&first)?;
    if header.schema_version != DRAWS_SCHEMA_VERSION {
        return Err(Error::Data(format!("unsupported draws schema version {}", header.schema_version)));
    }
    let mut states = Vec::new();
    let mut weights = Vec::new();
    let mut stats = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DrawLine = serde_json::from_str(&line)?;
        states.push(MixtureState::from_parts(d.z, d.components)?);
        weights.push(d.weights);
        stats.push(d.stats);
    }
    let weights = if weights.iter().all(Option::is_some) && !weights.is_empty() {
        Some(weights.into_iter().map(Option::unwrap).collect())
    } else {
        None
    };
    Ok(Draws { states, weights, stats, meta: header.meta })
}
