//! CSV schemas. The first column of every file is the schema version.

use std::io::{Read, Write};

use super::bound::BoundCertificate;
use super::pareto::ParetoPoint;
use crate::error::{Error, Result};
use crate::posterior::{Family, Validity};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CERTIFICATE_HEADER: [&str; 21] = [
    "schema_version",
    "family",
    "validity",
    "certified",
    "beta",
    "posterior_beta",
    "lambda",
    "n",
    "m",
    "delta",
    "delta_prime",
    "b",
    "c",
    "emp_risk",
    "kl_nats",
    "union_bound_nats",
    "chernoff_gap",
    "bound_value",
    "beta_star",
    "complexity",
    "seed",
];

pub const PARETO_HEADER: [&str; 7] = ["schema_version", "family", "x", "y", "beta", "lambda", "seed"];

pub const REFERENCE_HEADER: [&str; 4] = ["schema_version", "label", "x", "y"];

/// Label written next to the reference point.
pub const REFERENCE_LABEL: &str = "test-implied";

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_certificates<W: Write>(w: W, certs: &[BoundCertificate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CERTIFICATE_HEADER).map_err(csv_err)?;
    for c in certs {
        out.write_record([
            CSV_SCHEMA_VERSION.to_string(),
            c.family.name().to_string(),
            c.validity.name().to_string(),
            c.certified().to_string(),
            c.beta.to_string(),
            opt(c.posterior_beta),
            c.lambda.to_string(),
            c.n.to_string(),
            c.m.to_string(),
            c.delta.to_string(),
            c.delta_prime.to_string(),
            c.b.to_string(),
            c.c.to_string(),
            c.emp_risk.to_string(),
            c.kl_nats.to_string(),
            c.union_bound_nats.to_string(),
            c.chernoff_gap.to_string(),
            c.bound_value.to_string(),
            c.beta_star.to_string(),
            c.complexity.to_string(),
            c.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("line {line}: bad `{}` value", CERTIFICATE_HEADER[i])))
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::InvalidArgument(format!("unexpected header `{}`", found.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(())
}

pub fn read_certificates<R: Read>(r: R) -> Result<Vec<BoundCertificate>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers().map_err(csv_err)?, &CERTIFICATE_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let version: u32 = field(&rec, 0, line)?;
        if version != CSV_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!("line {line}: unsupported schema version {version}")));
        }
        let family = Family::parse(&rec[1])?;
        let validity = match &rec[2] {
            "valid" => Validity::Valid,
            "invalid-prior" => Validity::InvalidPrior,
            other => return Err(Error::InvalidArgument(format!("line {line}: unknown validity `{other}`"))),
        };
        let posterior_beta = if rec[5].is_empty() { None } else { Some(field(&rec, 5, line)?) };
        out.push(BoundCertificate {
            family,
            validity,
            beta: field(&rec, 4, line)?,
            posterior_beta,
            lambda: field(&rec, 6, line)?,
            n: field(&rec, 7, line)?,
            m: field(&rec, 8, line)?,
            delta: field(&rec, 9, line)?,
            delta_prime: field(&rec, 10, line)?,
            b: field(&rec, 11, line)?,
            c: field(&rec, 12, line)?,
            emp_risk: field(&rec, 13, line)?,
            kl_nats: field(&rec, 14, line)?,
            union_bound_nats: field(&rec, 15, line)?,
            chernoff_gap: field(&rec, 16, line)?,
            bound_value: field(&rec, 17, line)?,
            beta_star: field(&rec, 18, line)?,
            complexity: field(&rec, 19, line)?,
            seed: field(&rec, 20, line)?,
        });
    }
    Ok(out)
}

pub fn write_pareto<W: Write>(w: W, points: &[ParetoPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PARETO_HEADER).map_err(csv_err)?;
    for p in points {
        out.write_record([
            CSV_SCHEMA_VERSION.to_string(),
            p.family.map(|f| f.name().to_string()).unwrap_or_default(),
            p.x.to_string(),
            p.y.to_string(),
            opt(p.beta),
            opt(p.lambda),
            p.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}

pub fn write_reference<W: Write>(w: W, star: &ParetoPoint) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REFERENCE_HEADER).map_err(csv_err)?;
    out.write_record([CSV_SCHEMA_VERSION.to_string(), REFERENCE_LABEL.to_string(), star.x.to_string(), star.y.to_string()])
        .map_err(csv_err)?;
    out.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}

pub fn read_reference<R: Read>(r: R) -> Result<ParetoPoint> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers().map_err(csv_err)?, &REFERENCE_HEADER)?;
    let rec = rdr.records().next().ok_or_else(|| Error::InvalidArgument("reference file has no row".into()))?.map_err(csv_err)?;
    let parse = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| Error::InvalidArgument("bad reference row".into()));
    Ok(ParetoPoint::new(parse(2)?, parse(3)?))
}
