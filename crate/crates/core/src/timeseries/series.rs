use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Ok,
    /// Row absent from the file; the value was filled with 0.
    Missing,
    /// Row present but marked invalid.
    Corrupted,
}

/// One named auxiliary channel aligned with the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

/// A target series with timestamps, quality flags and exogenous channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub name: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
    pub flags: Vec<Quality>,
    pub exogenous: Vec<Channel>,
}

/// First timestamp given to generated series.
pub fn synthetic_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2000, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

impl RawSeries {
    /// Checks equal channel lengths and strictly increasing timestamps.
    pub fn new(
        name: impl Into<String>,
        timestamps: Vec<NaiveDateTime>,
        values: Vec<f64>,
        flags: Vec<Quality>,
        exogenous: Vec<Channel>,
    ) -> Result<Self> {
        let n = values.len();
        if timestamps.len() != n || flags.len() != n {
            return Err(Error::dim(format!(
                "{n} values, {} timestamps, {} flags",
                timestamps.len(),
                flags.len()
            )));
        }
        for c in &exogenous {
            if c.values.len() != n {
                return Err(Error::dim(format!(
                    "channel {} has {} values, target has {n}",
                    c.name,
                    c.values.len()
                )));
            }
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "timestamps not increasing at index {}",
                i + 1
            )));
        }
        Ok(RawSeries {
            name: name.into(),
            timestamps,
            values,
            flags,
            exogenous,
        })
    }

    /// All-clean series on a regular grid from [`synthetic_epoch`].
    pub fn regular(
        name: impl Into<String>,
        values: Vec<f64>,
        step: Duration,
        exogenous: Vec<Channel>,
    ) -> Result<Self> {
        let t0 = synthetic_epoch();
        let ts = (0..values.len()).map(|i| t0 + step * i as i32).collect();
        let flags = vec![Quality::Ok; values.len()];
        RawSeries::new(name, ts, values, flags, exogenous)
    }

    /// Hourly grid, the layout used for the generated benchmarks.
    pub fn hourly(
        name: impl Into<String>,
        values: Vec<f64>,
        exogenous: Vec<Channel>,
    ) -> Result<Self> {
        RawSeries::regular(name, values, Duration::hours(1), exogenous)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self, q: Quality) -> usize {
        self.flags.iter().filter(|&&f| f == q).count()
    }

    /// Writes `timestamp,<name>,<exogenous…>`. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::io(path, e);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        write!(f, "timestamp,{}", self.name).map_err(io)?;
        for c in &self.exogenous {
            write!(f, ",{}", c.name).map_err(io)?;
        }
        writeln!(f).map_err(io)?;
        for i in 0..self.len() {
            write!(
                f,
                "{},{}",
                self.timestamps[i].format("%Y-%m-%dT%H:%M:%S"),
                self.values[i]
            )
            .map_err(io)?;
            for c in &self.exogenous {
                write!(f, ",{}", c.values[i]).map_err(io)?;
            }
            writeln!(f).map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// Column layout of an input CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default = "default_timestamp_column")]
    pub timestamp: String,
    pub target: String,
    #[serde(default)]
    pub exogenous: Vec<String>,
    /// Regular sampling step in seconds; absent rows on this grid are
    /// inserted as zeros flagged missing.
    #[serde(default)]
    pub step_seconds: Option<i64>,
    /// Target value that marks a corrupted measurement (e.g. `-1`).
    #[serde(default)]
    pub corrupted_marker: Option<f64>,
}

fn default_timestamp_column() -> String {
    "timestamp".into()
}

impl CsvSchema {
    pub fn new(target: impl Into<String>) -> Self {
        CsvSchema {
            timestamp: default_timestamp_column(),
            target: target.into(),
            exogenous: Vec::new(),
            step_seconds: None,
            corrupted_marker: None,
        }
    }
}

/// Accepts `YYYY-MM-DDTHH:MM[:SS]`, the same with a space separator,
/// RFC 3339 with offset (converted to UTC), or a bare date.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<RawSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, schema)
}

/// Parses CSV from any reader; `path` only labels error messages.
pub fn read_csv<R: std::io::Read>(reader: R, path: &Path, schema: &CsvSchema) -> Result<RawSeries> {
    let perr = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| perr(1, format!("missing column {name:?}")))
    };
    let ts_col = col(&schema.timestamp)?;
    let target_col = col(&schema.target)?;
    let exog_cols = schema
        .exogenous
        .iter()
        .map(|c| col(c))
        .collect::<Result<Vec<_>>>()?;

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut flags = Vec::new();
    let mut exog: Vec<Vec<f64>> = vec![Vec::new(); exog_cols.len()];
    let step = schema.step_seconds.map(Duration::seconds);
    if let Some(s) = step {
        if s <= Duration::zero() {
            return Err(Error::invalid("step_seconds must be positive"));
        }
    }

    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            perr(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| perr(line, format!("missing field {i}")))
        };
        let num = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.parse::<f64>()
                .map_err(|_| perr(line, format!("cannot parse {s:?} as a number")))
        };
        let ts_str = field(ts_col)?;
        let ts = parse_timestamp(ts_str)
            .ok_or_else(|| perr(line, format!("cannot parse timestamp {ts_str:?}")))?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(perr(line, format!("timestamp {ts} does not follow {prev}")));
            }
            if let Some(s) = step {
                let gap = ts - prev;
                if gap.num_seconds() % s.num_seconds() != 0 {
                    return Err(perr(
                        line,
                        format!("timestamp {ts} is off the {}s grid", s.num_seconds()),
                    ));
                }
                let mut t = prev + s;
                while t < ts {
                    timestamps.push(t);
                    values.push(0.0);
                    flags.push(Quality::Missing);
                    exog.iter_mut().for_each(|c| c.push(0.0));
                    t += s;
                }
            }
        }
        let v = num(target_col)?;
        let corrupted = schema.corrupted_marker == Some(v);
        let ex = exog_cols
            .iter()
            .map(|&i| num(i))
            .collect::<Result<Vec<_>>>()?;
        timestamps.push(ts);
        values.push(v);
        flags.push(if corrupted {
            Quality::Corrupted
        } else {
            Quality::Ok
        });
        for (c, v) in exog.iter_mut().zip(ex) {
            c.push(v);
        }
    }
    let exogenous = schema
        .exogenous
        .iter()
        .zip(exog)
        .map(|(name, values)| Channel {
            name: name.clone(),
            values,
        })
        .collect();
    RawSeries::new(schema.target.clone(), timestamps, values, flags, exogenous)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, schema: &CsvSchema) -> Result<RawSeries> {
        read_csv(text.as_bytes(), Path::new("mem.csv"), schema)
    }

    #[test]
    fn well_formed_file() {
        let s = parse(
            "timestamp,load,temp\n2020-01-01T00:00:00,1.5,3\n2020-01-01T01:00:00,2,4\n2020-01-01T02:00:00,2.5,5\n",
            &CsvSchema {
                exogenous: vec!["temp".into()],
                ..CsvSchema::new("load")
            },
        )
        .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values, vec![1.5, 2.0, 2.5]);
        assert_eq!(s.exogenous[0].values, vec![3.0, 4.0, 5.0]);
        assert_eq!(s.count(Quality::Ok), 3);
    }

    #[test]
    fn corrupted_marker_and_missing_rows() {
        let schema = CsvSchema {
            step_seconds: Some(3600),
            corrupted_marker: Some(-1.0),
            ..CsvSchema::new("calls")
        };
        let s = parse(
            "timestamp,calls\n2020-01-01 00:00,4\n2020-01-01 01:00,-1\n2020-01-01 04:00,7\n",
            &schema,
        )
        .unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(
            s.flags,
            vec![
                Quality::Ok,
                Quality::Corrupted,
                Quality::Missing,
                Quality::Missing,
                Quality::Ok
            ]
        );
        assert_eq!(s.values[2], 0.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let schema = CsvSchema::new("v");
        let cases = [
            ("timestamp,v\n2020-01-01,1\n2020-01-02,x\n", 3),
            ("timestamp,v\n2020-01-02,1\n2020-01-01,2\n", 3),
            ("timestamp,v\n2020-01-01,1\n2020-01-02,2,9\n", 3),
        ];
        for (text, line) in cases {
            match parse(text, &schema) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = RawSeries::hourly(
            "y",
            vec![0.1, 1.0 / 3.0, -2.5e-17],
            vec![Channel {
                name: "u".into(),
                values: vec![1.0, 2.0, std::f64::consts::PI],
            }],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        let back = load_csv(
            &p,
            &CsvSchema {
                exogenous: vec!["u".into()],
                ..CsvSchema::new("y")
            },
        )
        .unwrap();
        assert_eq!(back, s);
    }
}
