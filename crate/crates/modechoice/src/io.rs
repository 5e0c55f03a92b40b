//! Long CSV ingest and CSV exports.

use std::io::{Read, Write};

use anyhow::{anyhow, bail, Context, Result};
use modechoice_core::dataset::{ChoiceDataset, FoldAssignment, LongRecord, WideMatrix};
use serde::{Deserialize, Serialize};

/// Which CSV headers hold the required long-layout fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub obs_id: String,
    pub person_id: String,
    pub alt: String,
    pub chosen: String,
    /// Optional 0/1 availability column.
    pub available: Option<String>,
    /// Feature columns to load; every other column when absent.
    pub features: Option<Vec<String>>,
    /// Alternative order; first appearance when absent.
    pub alternatives: Option<Vec<String>>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            obs_id: "obs_id".into(),
            person_id: "person_id".into(),
            alt: "alt".into(),
            chosen: "chosen".into(),
            available: None,
            features: None,
            alternatives: None,
        }
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn parse_flag(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Reads the long layout: one row per (observation, alternative).
pub fn read_long<R: Read>(r: R, map: &ColumnMap) -> Result<ChoiceDataset> {
    let mut rdr = reader(r);
    let headers: Vec<String> = rdr.headers().context("reading CSV header")?.iter().map(String::from).collect();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("missing column `{name}` in CSV header"))
    };
    let (c_obs, c_person, c_alt, c_chosen) =
        (col(&map.obs_id)?, col(&map.person_id)?, col(&map.alt)?, col(&map.chosen)?);
    let c_avail = map.available.as_deref().map(col).transpose()?;
    let reserved: Vec<usize> =
        [Some(c_obs), Some(c_person), Some(c_alt), Some(c_chosen), c_avail].into_iter().flatten().collect();
    let features: Vec<String> = match &map.features {
        Some(f) => f.clone(),
        None => headers.iter().enumerate().filter(|(i, _)| !reserved.contains(i)).map(|(_, h)| h.clone()).collect(),
    };
    if features.is_empty() {
        bail!("no feature columns");
    }
    let f_cols: Vec<usize> = features.iter().map(|f| col(f)).collect::<Result<_>>()?;

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.context("reading CSV record")?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| row.get(c).unwrap_or("");
        let int = |c: usize| -> Result<u64> {
            field(c).parse().map_err(|_| {
                anyhow!("line {line}, column `{}`: expected an integer id, found `{}`", headers[c], field(c))
            })
        };
        let flag = |c: usize| -> Result<bool> {
            parse_flag(field(c))
                .ok_or_else(|| anyhow!("line {line}, column `{}`: expected 0 or 1, found `{}`", headers[c], field(c)))
        };
        let values = f_cols
            .iter()
            .map(|&c| {
                let s = field(c);
                if s.is_empty() {
                    return Ok(None);
                }
                let v: f64 = s
                    .parse()
                    .map_err(|_| anyhow!("line {line}, column `{}`: expected a number, found `{s}`", headers[c]))?;
                if !v.is_finite() {
                    bail!("line {line}, column `{}`: non-finite value `{s}`", headers[c]);
                }
                Ok(Some(v))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(LongRecord {
            line,
            obs_id: int(c_obs)?,
            person_id: int(c_person)?,
            alt: field(c_alt).to_string(),
            chosen: flag(c_chosen)?,
            available: c_avail.map(flag).transpose()?.unwrap_or(true),
            values,
        });
    }
    Ok(ChoiceDataset::from_long(&records, features, map.alternatives.clone())?)
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes `# ` prefixed lines ahead of a CSV body.
pub fn write_header_comment<W: Write>(w: &mut W, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

/// Long layout with default column names. Unavailable alternatives are left
/// out; non-applicable attributes are empty cells.
pub fn write_long<W: Write>(w: W, ds: &ChoiceDataset) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["obs_id".to_string(), "person_id".into(), "alt".into(), "chosen".into()];
    header.extend(ds.feature_names().iter().cloned());
    out.write_record(&header)?;
    for i in 0..ds.n_obs() {
        for a in 0..ds.n_alts() {
            if !ds.is_available(i, a) {
                continue;
            }
            let mut rec = vec![
                ds.obs_ids()[i].to_string(),
                ds.person_ids()[i].to_string(),
                ds.alt_names()[a].clone(),
                u8::from(ds.chosen()[i] == a).to_string(),
            ];
            rec.extend(
                (0..ds.n_features()).map(|p| if ds.applies(p, a) { num(ds.value(i, a, p)) } else { String::new() }),
            );
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per observation; the last column `choice` holds the chosen
/// alternative's name.
pub fn write_wide<W: Write>(w: W, m: &WideMatrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = m.col_names.clone();
    header.push("choice".into());
    out.write_record(&header)?;
    for i in 0..m.n_rows {
        let mut rec: Vec<String> = m.row(i).iter().map(|&v| num(v)).collect();
        rec.push(m.class_names[m.y[i]].clone());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_folds<W: Write>(w: W, ds: &ChoiceDataset, folds: &FoldAssignment) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["obs_id", "fold"])?;
    for (i, f) in folds.assignment.iter().enumerate() {
        out.write_record([ds.obs_ids()[i].to_string(), f.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use modechoice_core::dataset::WideLayout;
    use modechoice_core::synth::panel_fixture;

    const FOUR: &str = "\
obs_id,person_id,alt,chosen,tt,income
1,10,walk,0,30,50
1,10,bike,0,15,50
1,10,pt,1,20,50
1,10,car,0,10,50
";

    #[test]
    fn single_observation() {
        let ds = read_long(FOUR.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!((ds.n_obs(), ds.n_alts()), (1, 4));
        assert_eq!(ds.chosen(), &[2]);
        assert_eq!(WideLayout::from_dataset(&ds).columns.len(), 5);
    }

    #[test]
    fn errors_name_line_and_column() {
        let bad = FOUR.replace("15,50", "fast,50");
        let e = format!("{:#}", read_long(bad.as_bytes(), &ColumnMap::default()).unwrap_err());
        assert!(e.contains("line 3") && e.contains("`tt`"), "{e}");
        let e =
            format!("{:#}", read_long(FOUR.replace("chosen", "pick").as_bytes(), &ColumnMap::default()).unwrap_err());
        assert!(e.contains("`chosen`"), "{e}");
        let two = FOUR.replace("1,10,car,0", "1,10,car,1");
        let e = format!("{:#}", read_long(two.as_bytes(), &ColumnMap::default()).unwrap_err());
        assert!(e.contains('1'), "{e}");
        let nan = FOUR.replace("10,50\n", "NaN,50\n");
        assert!(read_long(nan.as_bytes(), &ColumnMap::default()).is_err());
    }

    #[test]
    fn round_trip() {
        let ds = panel_fixture(15, 3, -1.0, 0.5, 2).ds;
        let mut buf = Vec::new();
        write_long(&mut buf, &ds).unwrap();
        let back = read_long(buf.as_slice(), &ColumnMap::default()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn comments_are_skipped() {
        let text = format!("# produced by a test\n{FOUR}");
        assert_eq!(read_long(text.as_bytes(), &ColumnMap::default()).unwrap().n_obs(), 1);
    }
}
