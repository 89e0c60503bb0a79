//! Flat binary and CSV snapshots of datasets and pools.
//!
//! Binary layout, all little-endian: `d_in: u64, classes: u64, count: u64`,
//! then per row `d_in` f64 features, `label: u64`, `group: u64`,
//! `key: i64` (-1 when the sample has no key).

use std::io::{Read, Write};

use crate::{BenchError, Dataset, LabeledSample};

pub fn write_binary<W: Write>(w: &mut W, d_in: usize, classes: usize, rows: &[LabeledSample]) -> Result<(), BenchError> {
    for v in [d_in as u64, classes as u64, rows.len() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for r in rows {
        if r.features.len() != d_in {
            return Err(BenchError::InvalidArgument("row width differs from header".into()));
        }
        for f in &r.features {
            w.write_all(&f.to_le_bytes())?;
        }
        w.write_all(&(r.label as u64).to_le_bytes())?;
        w.write_all(&r.group.to_le_bytes())?;
        w.write_all(&r.key.map_or(-1i64, |k| k as i64).to_le_bytes())?;
    }
    Ok(())
}

fn read8<R: Read>(r: &mut R) -> Result<[u8; 8], BenchError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| BenchError::Format(e.to_string()))?;
    Ok(b)
}

pub fn read_binary<R: Read>(r: &mut R) -> Result<Dataset, BenchError> {
    let d_in = u64::from_le_bytes(read8(r)?) as usize;
    let classes = u64::from_le_bytes(read8(r)?) as usize;
    let count = u64::from_le_bytes(read8(r)?) as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut features = Vec::with_capacity(d_in);
        for _ in 0..d_in {
            features.push(f64::from_le_bytes(read8(r)?));
        }
        let label = u64::from_le_bytes(read8(r)?) as usize;
        let group = u64::from_le_bytes(read8(r)?);
        let key = i64::from_le_bytes(read8(r)?);
        let key = if key < 0 { None } else { Some(key as usize) };
        samples.push(LabeledSample { features, label, group, key });
    }
    Ok(Dataset { d_in, classes, samples })
}

/// CSV with header `f0..f{d-1},label,group,key`. Floats use shortest
/// round-trip formatting.
pub fn write_csv<W: Write>(w: &mut W, d_in: usize, rows: &[LabeledSample]) -> Result<(), BenchError> {
    let mut header: Vec<String> = (0..d_in).map(|i| format!("f{i}")).collect();
    header.extend(["label", "group", "key"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut cells: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
        cells.push(r.label.to_string());
        cells.push(r.group.to_string());
        cells.push(r.key.map_or(-1i64, |k| k as i64).to_string());
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
