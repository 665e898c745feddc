//! Cleaned-dataset file: schema text header followed by row-major `f64`s.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "CDMDATA\0"
//! version      u32       1
//! header_len   u32
//! header       header_len bytes of UTF-8 schema text
//! n_events     u64
//! per event:   u32 id_len, id_len bytes of UTF-8 id, u64 n_cdms
//! n_rows       u64       (sum of n_cdms)
//! width        u32       (schema width)
//! rows         n_rows × width f64, events in order, CDMs in order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::events::Event;
use super::kelvins::CdmRecord;
use super::schema::FeatureSchema;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"CDMDATA\0";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub events: Vec<Event>,
}

impl Dataset {
    pub fn num_cdms(&self) -> usize {
        self.events.iter().map(Event::len).sum()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let width = self.schema.width();
        let header = self.schema.to_text();
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        w.write_all(&(self.events.len() as u64).to_le_bytes())?;
        for ev in &self.events {
            w.write_all(&(ev.event_id.len() as u32).to_le_bytes())?;
            w.write_all(ev.event_id.as_bytes())?;
            w.write_all(&(ev.len() as u64).to_le_bytes())?;
        }
        w.write_all(&(self.num_cdms() as u64).to_le_bytes())?;
        w.write_all(&(width as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(width * 8);
        for cdm in self.events.iter().flat_map(|e| &e.cdms) {
            if cdm.values.len() != width {
                return Err(Error::shape(format!(
                    "CDM of event {} has {} values, schema width is {width}",
                    cdm.event_id,
                    cdm.values.len()
                )));
            }
            buf.clear();
            for v in &cdm.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("not a cleaned-dataset file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {version} is not supported (expected {DATASET_VERSION})"
            )));
        }
        let header_len = read_u32(&mut r)? as usize;
        let schema = FeatureSchema::from_text(&read_string(&mut r, header_len)?)?;
        let n_events = read_u64(&mut r)? as usize;
        let mut shells = Vec::with_capacity(n_events.min(1 << 20));
        for _ in 0..n_events {
            let id_len = read_u32(&mut r)? as usize;
            let id = read_string(&mut r, id_len)?;
            let n = read_u64(&mut r)? as usize;
            shells.push((id, n));
        }
        let n_rows = read_u64(&mut r)? as usize;
        let width = read_u32(&mut r)? as usize;
        if width != schema.width() {
            return Err(Error::Format(format!(
                "row width {width} disagrees with schema width {}",
                schema.width()
            )));
        }
        if shells.iter().map(|(_, n)| n).sum::<usize>() != n_rows {
            return Err(Error::Format("event sizes do not add up to the row count".into()));
        }
        let mut row = vec![0u8; width * 8];
        let mut events = Vec::with_capacity(shells.len());
        for (id, n) in shells {
            let mut cdms = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut row)?;
                let values = row
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect();
                cdms.push(CdmRecord::new(id.clone(), values, &schema)?);
            }
            events.push(Event { event_id: id, cdms });
        }
        Ok(Self { schema, events })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::Format("invalid UTF-8 in header".into()))
}
