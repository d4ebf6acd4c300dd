//! Dataset CSV reading and writing.
//!
//! Header: `x1..xd,a,y1..ydY[,e1..eK]`. Columns may appear in any order but
//! each family must be numbered contiguously from 1.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, Observation, PropensityModel};
use crate::error::{Error, Result};

/// Declared shape and propensity source for a dataset file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSchema {
    pub num_actions: Option<usize>,
    /// Constant probabilities, used when the file has no `e` columns.
    pub propensity: Option<Vec<f64>>,
    pub propensity_floor: Option<f64>,
    pub covariate_dim: Option<usize>,
    pub num_outcomes: Option<usize>,
}

#[derive(Debug)]
struct Layout {
    x: Vec<usize>,
    a: usize,
    y: Vec<usize>,
    e: Vec<usize>,
}

fn family(header: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        if let Some(rest) = name.strip_prefix(prefix) {
            if let Ok(k) = rest.parse::<usize>() {
                found.push((k, col));
            }
        }
    }
    found.sort_unstable();
    for (i, (k, _)) in found.iter().enumerate() {
        if *k != i + 1 {
            return Err(Error::Schema(format!(
                "columns `{prefix}*` must be numbered 1..; found {prefix}{k} at position {}",
                i + 1
            )));
        }
    }
    Ok(found.into_iter().map(|(_, c)| c).collect())
}

fn layout(header: &csv::StringRecord) -> Result<Layout> {
    let a = header
        .iter()
        .position(|h| h.trim() == "a")
        .ok_or_else(|| Error::Schema("missing action column `a`".into()))?;
    let l = Layout {
        x: family(header, "x")?,
        a,
        y: family(header, "y")?,
        e: family(header, "e")?,
    };
    if l.y.is_empty() {
        return Err(Error::Schema("no outcome columns `y1..`".into()));
    }
    let known = l.x.len() + 1 + l.y.len() + l.e.len();
    if known != header.len() {
        let extra: Vec<&str> = header
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != l.a && !l.x.contains(c) && !l.y.contains(c) && !l.e.contains(c))
            .map(|(_, h)| h)
            .collect();
        return Err(Error::Schema(format!("unrecognized columns {extra:?}")));
    }
    Ok(l)
}

fn field(rec: &csv::StringRecord, col: usize, row: usize, name: &str) -> Result<f64> {
    let raw = rec.get(col).unwrap_or("").trim();
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Schema(format!("row {row}, column {name}: cannot parse `{raw}` as a number")))
}

pub fn read_dataset<R: Read>(reader: R, schema: &DatasetSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let l = layout(&header)?;
    if let Some(d) = schema.covariate_dim {
        if d != l.x.len() {
            return Err(Error::Schema(format!("expected {d} covariate columns, found {}", l.x.len())));
        }
    }
    if let Some(d) = schema.num_outcomes {
        if d != l.y.len() {
            return Err(Error::Schema(format!("expected {d} outcome columns, found {}", l.y.len())));
        }
    }

    let mut obs = Vec::new();
    let mut props = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Schema(format!("row {row}: {e}")))?;
        let x = l
            .x
            .iter()
            .enumerate()
            .map(|(k, &c)| field(&rec, c, row, &format!("x{}", k + 1)))
            .collect::<Result<Vec<_>>>()?;
        let a = field(&rec, l.a, row, "a")?;
        if a < 1.0 || a.fract() != 0.0 {
            return Err(Error::Schema(format!("row {row}, column a: `{a}` is not a positive integer action")));
        }
        let y = l
            .y
            .iter()
            .enumerate()
            .map(|(k, &c)| field(&rec, c, row, &format!("y{}", k + 1)))
            .collect::<Result<Vec<_>>>()?;
        if !l.e.is_empty() {
            props.push(
                l.e.iter()
                    .enumerate()
                    .map(|(k, &c)| field(&rec, c, row, &format!("e{}", k + 1)))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        obs.push(Observation::new(x, a as usize, y));
    }
    if obs.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let max_action = obs.iter().map(|o| o.action).max().unwrap_or(1);
    let k = schema
        .num_actions
        .or((!l.e.is_empty()).then_some(l.e.len()))
        .or(schema.propensity.as_ref().map(Vec::len))
        .unwrap_or(max_action.max(2));
    let propensity = if !l.e.is_empty() {
        let floor = schema
            .propensity_floor
            .unwrap_or_else(|| props.iter().flatten().copied().fold(f64::INFINITY, f64::min));
        PropensityModel::per_row(props, floor)?
    } else if let Some(p) = &schema.propensity {
        let floor = schema
            .propensity_floor
            .unwrap_or_else(|| p.iter().copied().fold(f64::INFINITY, f64::min));
        PropensityModel::constant(p.clone(), floor)?
    } else {
        return Err(Error::Schema(
            "no propensities: supply `e1..eK` columns or a constant `propensity` in the config".into(),
        ));
    };
    Dataset::new(obs, k, propensity)
}

pub fn read_dataset_file(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(f), schema)
}

/// Writes `x1..,a,y1..` with 6-decimal floats; `e1..eK` are appended when
/// `with_propensities` is set.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W, with_propensities: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dx = ds.covariate_dim();
    let dy = ds.num_outcomes();
    let k = ds.num_actions();
    let mut header: Vec<String> = (1..=dx).map(|j| format!("x{j}")).collect();
    header.push("a".into());
    header.extend((1..=dy).map(|j| format!("y{j}")));
    if with_propensities {
        header.extend((1..=k).map(|j| format!("e{j}")));
    }
    w.write_record(&header)?;
    let e = ds.propensity();
    for (i, o) in ds.observations().iter().enumerate() {
        let mut rec: Vec<String> = o.covariates.iter().map(|v| format!("{v:.6}")).collect();
        rec.push(o.action.to_string());
        rec.extend(o.outcomes.iter().map(|v| format!("{v:.6}")));
        if with_propensities {
            rec.extend((1..=k).map(|a| format!("{:.6}", e.prob(i, a))));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(ds: &Dataset, path: &Path, with_propensities: bool) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_dataset(ds, std::io::BufWriter::new(f), with_propensities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half() -> DatasetSchema {
        DatasetSchema {
            propensity: Some(vec![0.5, 0.5]),
            ..DatasetSchema::default()
        }
    }

    #[test]
    fn synthetic_round_trip() {
        let ds = synthetic::generate(30, &mut ChaCha8Rng::seed_from_u64(1));
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,x3,a,y1,y2\n"));
        let back = read_dataset(buf.as_slice(), &half()).unwrap();
        assert_eq!(back.len(), 30);
        for (a, b) in ds.observations().iter().zip(back.observations()) {
            assert_eq!(a.action, b.action);
            assert_eq!(a.outcomes, b.outcomes);
            for (u, v) in a.covariates.iter().zip(&b.covariates) {
                assert!((u - v).abs() <= 5e-7);
            }
        }
        // a second trip is exact
        let mut again = Vec::new();
        write_dataset(&back, &mut again, false).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn propensity_columns() {
        let text = "x1,a,y1,e1,e2\n0.1,1,1,0.3,0.7\n0.2,2,0,0.4,0.6\n";
        let ds = read_dataset(text.as_bytes(), &DatasetSchema::default()).unwrap();
        assert_eq!(ds.num_actions(), 2);
        assert!((ds.propensity().floor() - 0.3).abs() < 1e-15);
        assert!((ds.propensity().prob(1, 2) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn schema_errors() {
        let missing_a = "x1,y1\n0.1,1\n";
        assert!(matches!(read_dataset(missing_a.as_bytes(), &half()), Err(Error::Schema(m)) if m.contains("`a`")));
        let bad = "x1,a,y1\n0.1,1,1\n0.2,1,zz\n";
        let err = read_dataset(bad.as_bytes(), &half()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let gap = "x1,x3,a,y1\n0.1,0.2,1,1\n";
        assert!(matches!(read_dataset(gap.as_bytes(), &half()), Err(Error::Schema(_))));
        let extra = "x1,a,y1,z\n0.1,1,1,3\n";
        assert!(matches!(read_dataset(extra.as_bytes(), &half()), Err(Error::Schema(_))));
        let none = "x1,a,y1\n0.1,1,1\n";
        assert!(matches!(read_dataset(none.as_bytes(), &DatasetSchema::default()), Err(Error::Schema(_))));
        let out_of_range = "x1,a,y1\n0.1,1,1.5\n";
        assert!(matches!(
            read_dataset(out_of_range.as_bytes(), &half()),
            Err(Error::OutcomeOutOfRange { .. })
        ));
        let dims = DatasetSchema {
            covariate_dim: Some(3),
            ..half()
        };
        assert!(matches!(read_dataset("x1,a,y1\n0.1,1,1\n".as_bytes(), &dims), Err(Error::Schema(_))));
    }
}
