use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{check_monotonic, format_event_record, parse_event_record, DvsEvent, EventError, Polarity, Result, SensorDims};

/// Magic prefix of the binary event format.
pub const EVENT_MAGIC: &[u8; 4] = b"EVT1";

/// Reads `t,x,y,p` lines. Blank lines, `#` comments and a leading text
/// header are skipped.
pub fn read_events_csv<R: BufRead>(reader: R, dims: SensorDims) -> Result<Vec<DvsEvent>> {
    let mut events = Vec::new();
    let mut seen_data = false;
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_data && line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            seen_data = true;
            continue;
        }
        seen_data = true;
        events.push(parse_event_record(line, dims)?);
    }
    check_monotonic(&events)?;
    Ok(events)
}

pub fn write_events_csv<W: Write>(mut writer: W, events: &[DvsEvent]) -> Result<()> {
    writeln!(writer, "t,x,y,p")?;
    for e in events {
        writeln!(writer, "{}", format_event_record(e))?;
    }
    Ok(())
}

/// Binary layout: `EVT1`, width and height as u32, then one
/// `(t, x, y, p)` record of four little-endian u32 per event.
pub fn read_events_bin<R: Read>(mut reader: R) -> Result<(SensorDims, Vec<DvsEvent>)> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != EVENT_MAGIC {
        return Err(EventError::BadMagic);
    }
    let mut word = [0u8; 4];
    let mut next = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    let dims = SensorDims::new(next(&mut reader)?, next(&mut reader)?);
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if rest.len() % 16 != 0 {
        return Err(EventError::MalformedRecord {
            record: format!("{} trailing bytes", rest.len() % 16),
            reason: "truncated binary record".into(),
        });
    }
    let mut events = Vec::with_capacity(rest.len() / 16);
    for rec in rest.chunks_exact(16) {
        let f = |i: usize| u32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap());
        let (t, x, y, p) = (f(0), f(1), f(2), f(3));
        let p = Polarity::from_bit(p as u64).ok_or_else(|| EventError::OutOfRange(format!("polarity {p}")))?;
        if !dims.contains(x, y) {
            return Err(EventError::OutOfRange(format!("({x}, {y})")));
        }
        events.push(DvsEvent::new(t as u64, x, y, p));
    }
    check_monotonic(&events)?;
    Ok((dims, events))
}

pub fn write_events_bin<W: Write>(mut writer: W, dims: SensorDims, events: &[DvsEvent]) -> Result<()> {
    writer.write_all(EVENT_MAGIC)?;
    writer.write_all(&dims.width.to_le_bytes())?;
    writer.write_all(&dims.height.to_le_bytes())?;
    for e in events {
        let t = u32::try_from(e.t).map_err(|_| EventError::TimestampOverflow(e.t))?;
        for v in [t, e.x, e.y, e.p as u32] {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Loads either format, sniffing the magic. CSV files need `dims`.
pub fn load_events(path: &Path, dims: Option<SensorDims>) -> Result<(SensorDims, Vec<DvsEvent>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let head = reader.fill_buf()?;
    if head.starts_with(EVENT_MAGIC) {
        let (file_dims, events) = read_events_bin(reader)?;
        if let Some(d) = dims {
            if d != file_dims {
                return Err(EventError::OutOfRange(format!(
                    "file sensor {}x{} differs from expected {}x{}",
                    file_dims.width, file_dims.height, d.width, d.height
                )));
            }
        }
        Ok((file_dims, events))
    } else {
        let dims = dims.ok_or(EventError::MissingDims)?;
        Ok((dims, read_events_csv(reader, dims)?))
    }
}

/// Writes binary for `.evt`/`.bin` paths and CSV otherwise.
pub fn save_events(path: &Path, dims: SensorDims, events: &[DvsEvent]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("evt") | Some("bin") => write_events_bin(&mut w, dims, events)?,
        _ => write_events_csv(&mut w, events)?,
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_skips_header_and_comments() {
        let text = "# sensor 8x8\nt,x,y,p\n\n0,1,2,1\n# mid comment\n5,3,4,0\n";
        let ev = read_events_csv(text.as_bytes(), SensorDims::new(8, 8)).unwrap();
        assert_eq!(ev, vec![DvsEvent::new(0, 1, 2, Polarity::On), DvsEvent::new(5, 3, 4, Polarity::Off)]);
        let bare = read_events_csv("7,0,0,0\n".as_bytes(), SensorDims::new(1, 1)).unwrap();
        assert_eq!(bare.len(), 1);
    }

    #[test]
    fn csv_rejects_unsorted() {
        let text = "5,0,0,0\n4,0,0,0\n";
        assert!(matches!(
            read_events_csv(text.as_bytes(), SensorDims::new(1, 1)),
            Err(EventError::NonMonotonic { .. })
        ));
    }

    #[test]
    fn binary_rejects_bad_magic_and_overflow() {
        assert!(matches!(read_events_bin(&b"EVT0\0\0\0\0\0\0\0\0"[..]), Err(EventError::BadMagic)));
        let e = [DvsEvent::new(1 << 33, 0, 0, Polarity::On)];
        assert!(matches!(
            write_events_bin(Vec::new(), SensorDims::new(1, 1), &e),
            Err(EventError::TimestampOverflow(_))
        ));
    }

    #[test]
    fn load_sniffs_format() {
        let dir = tempfile::tempdir().unwrap();
        let dims = SensorDims::new(4, 3);
        let events = vec![DvsEvent::new(3, 1, 2, Polarity::On), DvsEvent::new(9, 3, 0, Polarity::Off)];
        for name in ["a.evt", "a.csv"] {
            let p = dir.path().join(name);
            save_events(&p, dims, &events).unwrap();
            assert_eq!(load_events(&p, Some(dims)).unwrap(), (dims, events.clone()));
        }
        assert!(matches!(load_events(&dir.path().join("a.csv"), None), Err(EventError::MissingDims)));
    }

    fn stream() -> impl Strategy<Value = Vec<DvsEvent>> {
        proptest::collection::vec((0u64..1 << 32, 0u32..32, 0u32..24, 0u64..2), 0..100).prop_map(|mut v| {
            v.sort_by_key(|e| e.0);
            v.into_iter()
                .map(|(t, x, y, p)| DvsEvent::new(t, x, y, Polarity::from_bit(p).unwrap()))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(events in stream()) {
            let dims = SensorDims::new(32, 24);
            let mut bin = Vec::new();
            write_events_bin(&mut bin, dims, &events).unwrap();
            prop_assert_eq!(read_events_bin(&bin[..]).unwrap(), (dims, events.clone()));
            let mut csv = Vec::new();
            write_events_csv(&mut csv, &events).unwrap();
            prop_assert_eq!(read_events_csv(&csv[..], dims).unwrap(), events);
        }
    }
}
