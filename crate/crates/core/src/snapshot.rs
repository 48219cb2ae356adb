//! Flat binary snapshots: a short text header followed by little-endian
//! `f64` arrays, one per field, x fastest.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{GmrError, Result};
use crate::field::{Dims, ScalarField};

pub const VERSION: &str = "GMR1";

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub dims: Dims,
    pub time: f64,
    pub fields: Vec<(String, ScalarField)>,
}

impl Snapshot {
    pub fn field(&self, name: &str) -> Option<&ScalarField> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let d = self.dims;
        let names: Vec<&str> = self.fields.iter().map(|(n, _)| n.as_str()).collect();
        if names.iter().any(|n| n.is_empty() || n.contains(char::is_whitespace)) {
            return Err(GmrError::Argument("snapshot field names must be non-empty words".into()));
        }
        writeln!(w, "{VERSION}")?;
        writeln!(w, "dims {} {} {}", d.nx, d.ny, d.nz)?;
        writeln!(w, "time {}", self.time)?;
        writeln!(w, "fields {}", names.join(" "))?;
        writeln!(w, "byte_order little")?;
        writeln!(w, "end")?;
        for (name, f) in &self.fields {
            f.check_dims(d, name)?;
            let mut buf = Vec::with_capacity(d.len() * 8);
            for x in f.as_slice() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next = |r: &mut BufReader<_>| -> Result<String> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(GmrError::Argument("truncated snapshot header".into()));
            }
            Ok(line.trim_end().to_string())
        };
        let bad = |m: &str| GmrError::Argument(format!("bad snapshot header: {m}"));
        if next(&mut r)? != VERSION {
            return Err(bad("unknown version"));
        }
        let dims_line = next(&mut r)?;
        let nums: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .ok_or_else(|| bad("dims"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("dims")))
            .collect::<Result<_>>()?;
        if nums.len() != 3 {
            return Err(bad("dims"));
        }
        let dims = Dims::new(nums[0], nums[1], nums[2]);
        let time: f64 = next(&mut r)?
            .strip_prefix("time ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("time"))?;
        let fields_line = next(&mut r)?;
        let names: Vec<String> = fields_line
            .strip_prefix("fields")
            .ok_or_else(|| bad("fields"))?
            .split_whitespace()
            .map(String::from)
            .collect();
        if next(&mut r)? != "byte_order little" {
            return Err(bad("byte order"));
        }
        if next(&mut r)? != "end" {
            return Err(bad("missing end"));
        }
        let mut fields = Vec::with_capacity(names.len());
        let mut buf = vec![0u8; dims.len() * 8];
        for n in names {
            r.read_exact(&mut buf)
                .map_err(|_| GmrError::Argument(format!("snapshot payload for {n} is truncated")))?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            fields.push((n, ScalarField::from_vec(dims, data)?));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(GmrError::Argument("snapshot has trailing bytes".into()));
        }
        Ok(Self { dims, time, fields })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
