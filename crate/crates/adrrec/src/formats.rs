//! Raw interaction log readers.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use adrrec_core::corpus::Interaction;
use serde_json::Value;

use crate::error::{AppError, AppResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// `UserID::MovieID::Rating::Timestamp`
    MovielensDat,
    /// `user,item,rating,timestamp`, no header.
    AmazonCsv,
    /// One object per line with `user`, `item`, `ts`.
    Jsonl,
}

impl FromStr for Format {
    type Err = AppError;

    fn from_str(s: &str) -> AppResult<Self> {
        match s {
            "movielens-dat" => Ok(Format::MovielensDat),
            "amazon-csv" => Ok(Format::AmazonCsv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(AppError::Config(format!("unknown format {other:?} (expected movielens-dat, amazon-csv or jsonl)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ingested {
    pub interactions: Vec<Interaction>,
    pub malformed: usize,
}

impl Ingested {
    fn push(&mut self, parsed: Option<Interaction>) {
        match parsed {
            Some(i) => self.interactions.push(i),
            None => self.malformed += 1,
        }
    }
}

fn interaction(user: &str, item: &str, ts: &str) -> Option<Interaction> {
    let ts = ts.trim();
    let ts = ts.parse::<i64>().ok().or_else(|| ts.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64))?;
    Interaction::new(user.trim(), item.trim(), ts).ok()
}

pub fn parse_movielens<R: BufRead>(reader: R) -> std::io::Result<Ingested> {
    let mut out = Ingested::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split("::").collect();
        out.push(if f.len() == 4 { interaction(f[0], f[1], f[3]) } else { None });
    }
    Ok(out)
}

pub fn parse_amazon_csv<R: Read>(reader: R) -> std::io::Result<Ingested> {
    let mut out = Ingested::default();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    for rec in rdr.records() {
        match rec {
            Ok(r) if r.len() == 4 => out.push(interaction(&r[0], &r[1], &r[3])),
            Ok(r) if r.iter().all(|f| f.trim().is_empty()) => {}
            Ok(_) => out.malformed += 1,
            Err(e) if e.is_io_error() => {
                if let csv::ErrorKind::Io(io) = e.into_kind() {
                    return Err(io);
                }
            }
            Err(_) => out.malformed += 1,
        }
    }
    Ok(out)
}

fn id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub fn parse_jsonl<R: BufRead>(reader: R) -> std::io::Result<Ingested> {
    let mut out = Ingested::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(&line).ok().and_then(|v| {
            let user = id(v.get("user")?)?;
            let item = id(v.get("item")?)?;
            let ts = v.get("ts")?.as_i64()?;
            Interaction::new(user, item, ts).ok()
        });
        out.push(parsed);
    }
    Ok(out)
}

pub fn parse(reader: impl BufRead, format: Format) -> std::io::Result<Ingested> {
    match format {
        Format::MovielensDat => parse_movielens(reader),
        Format::AmazonCsv => parse_amazon_csv(reader),
        Format::Jsonl => parse_jsonl(reader),
    }
}

pub fn read_interactions(path: &Path, format: Format) -> AppResult<Ingested> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    parse(BufReader::new(file), format).map_err(|e| AppError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn movielens_line() {
        let got = parse_movielens("1::1193::5::978300760\n\nbad line\n2::3::4::x\n".as_bytes()).unwrap();
        assert_eq!(got.interactions, vec![Interaction::new("1", "1193", 978300760).unwrap()]);
        assert_eq!(got.malformed, 2);
    }

    #[test]
    fn empty_streams() {
        for f in [Format::MovielensDat, Format::AmazonCsv, Format::Jsonl] {
            assert_eq!(parse("".as_bytes(), f).unwrap(), Ingested::default());
        }
    }

    #[test]
    fn jsonl_minimal() {
        let got = parse_jsonl("{\"user\":\"u1\",\"item\":\"i1\",\"ts\":0}\n{\"user\":7,\"item\":\"i2\",\"ts\":5}\n{\"user\":\"u\"}\n".as_bytes()).unwrap();
        assert_eq!(got.interactions, vec![Interaction::new("u1", "i1", 0).unwrap(), Interaction::new("7", "i2", 5).unwrap()]);
        assert_eq!(got.malformed, 1);
    }

    #[test]
    fn amazon_csv_rows() {
        let got = parse_amazon_csv("A1,B00,5.0,1369699200\nA2,B01,3.0,1355443200\nuser,item,rating,timestamp\nA3,B02\n".as_bytes()).unwrap();
        assert_eq!(got.interactions.len(), 2);
        assert_eq!(got.interactions[1], Interaction::new("A2", "B01", 1355443200).unwrap());
        assert_eq!(got.malformed, 2);
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("parquet".parse::<Format>(), Err(AppError::Config(_))));
    }
}
