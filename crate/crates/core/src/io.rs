//! Dataset files.
//!
//! Waveform file, little-endian throughout:
//!
//! ```text
//! header  magic "SNWF" | version u16 | reserved u16 = 0
//!         sample_rate_hz f64 | record_length u32
//!         event_count u64 | total_slots u64 | main_slots u64
//! record  slot_index u64 | slot_kind u8 | true_photon_count u16
//!         record_length × f32 samples
//! ```
//!
//! Records are in strictly increasing slot order and the file ends exactly
//! after the last one. The ground-truth sidecar is a CSV with columns
//! `slot_index, slot_kind, true_photon_count`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{EventRecord, SlotCounts, SlotKind};

pub const MAGIC: [u8; 4] = *b"SNWF";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 44;
/// Longest record accepted by the decoder.
pub const MAX_RECORD_LENGTH: u32 = 1 << 20;
/// Records preallocated before any are read.
const PREALLOCATED_RECORDS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformHeader {
    pub sample_rate_hz: f64,
    pub record_length: u32,
    pub counts: SlotCounts,
}

impl WaveformHeader {
    fn encode(&self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        b[8..16].copy_from_slice(&self.sample_rate_hz.to_le_bytes());
        b[16..20].copy_from_slice(&self.record_length.to_le_bytes());
        b[20..28].copy_from_slice(&self.counts.events.to_le_bytes());
        b[28..36].copy_from_slice(&self.counts.total_slots.to_le_bytes());
        b[36..44].copy_from_slice(&self.counts.main_slots.to_le_bytes());
        b
    }

    fn decode(b: &[u8; HEADER_BYTES]) -> Result<Self> {
        if b[0..4] != MAGIC {
            return Err(Error::format("not a waveform file (bad magic)"));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::format(format!("unsupported format version {version}")));
        }
        if b[6..8] != [0, 0] {
            return Err(Error::format("reserved header bytes are not zero"));
        }
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        let header = Self {
            sample_rate_hz: f64::from_le_bytes(b[8..16].try_into().expect("8 bytes")),
            record_length: u32::from_le_bytes(b[16..20].try_into().expect("4 bytes")),
            counts: SlotCounts {
                events: u64_at(20),
                total_slots: u64_at(28),
                main_slots: u64_at(36),
            },
        };
        header.validate()?;
        Ok(header)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::format(format!("bad sample rate {}", self.sample_rate_hz)));
        }
        if !(2..=MAX_RECORD_LENGTH).contains(&self.record_length) {
            return Err(Error::format(format!("record length {} out of range", self.record_length)));
        }
        let c = &self.counts;
        if c.events > c.total_slots || c.main_slots > c.total_slots {
            return Err(Error::format("slot counts are inconsistent"));
        }
        Ok(())
    }

    pub fn record_bytes(&self) -> usize {
        11 + 4 * self.record_length as usize
    }
}

/// Streams records to a seekable sink and patches the counts into the header
/// on [`finish`](Self::finish).
#[derive(Debug)]
pub struct WaveformWriter<W: Write + Seek> {
    inner: W,
    header: WaveformHeader,
    written: u64,
    last_slot: Option<u64>,
    buf: Vec<u8>,
}

impl<W: Write + Seek> WaveformWriter<W> {
    pub fn new(mut inner: W, sample_rate_hz: f64, record_length: u32) -> Result<Self> {
        let header = WaveformHeader {
            sample_rate_hz,
            record_length,
            counts: SlotCounts {
                total_slots: 0,
                main_slots: 0,
                events: 0,
            },
        };
        header.validate()?;
        inner.write_all(&header.encode())?;
        Ok(Self {
            inner,
            header,
            written: 0,
            last_slot: None,
            buf: Vec::with_capacity(header.record_bytes()),
        })
    }

    pub fn write_event(&mut self, event: &EventRecord) -> Result<()> {
        let samples = event
            .waveform
            .as_ref()
            .ok_or_else(|| Error::format(format!("event in slot {} has no waveform", event.slot_index)))?;
        if samples.len() != self.header.record_length as usize {
            return Err(Error::format(format!(
                "record of {} samples, file expects {}",
                samples.len(),
                self.header.record_length
            )));
        }
        if self.last_slot.is_some_and(|s| event.slot_index <= s) {
            return Err(Error::format("events must be written in increasing slot order"));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&event.slot_index.to_le_bytes());
        self.buf.push(event.slot_kind.code());
        self.buf.extend_from_slice(&event.true_photon_count.to_le_bytes());
        for s in samples {
            self.buf.extend_from_slice(&s.to_le_bytes());
        }
        self.inner.write_all(&self.buf)?;
        self.written += 1;
        self.last_slot = Some(event.slot_index);
        Ok(())
    }

    /// Writes the final counts and returns the sink.
    pub fn finish(mut self, counts: SlotCounts) -> Result<W> {
        if counts.events != self.written {
            return Err(Error::Inconsistent(format!(
                "{} events written but {} declared",
                self.written, counts.events
            )));
        }
        if self.last_slot.is_some_and(|s| s >= counts.total_slots) {
            return Err(Error::Inconsistent("an event lies beyond the declared slot count".into()));
        }
        self.header.counts = counts;
        self.header.validate()?;
        self.inner.seek(SeekFrom::Start(0))?;
        self.inner.write_all(&self.header.encode())?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Validating record iterator over a waveform file.
#[derive(Debug)]
pub struct WaveformReader<R: Read> {
    inner: R,
    header: WaveformHeader,
    read: u64,
    last_slot: Option<u64>,
    buf: Vec<u8>,
    failed: bool,
}

impl<R: Read> WaveformReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut b = [0u8; HEADER_BYTES];
        read_exact_or_format(&mut inner, &mut b, "header")?;
        let header = WaveformHeader::decode(&b)?;
        Ok(Self {
            inner,
            header,
            read: 0,
            last_slot: None,
            buf: vec![0; header.record_bytes()],
            failed: false,
        })
    }

    pub fn header(&self) -> &WaveformHeader {
        &self.header
    }

    fn next_record(&mut self) -> Result<Option<EventRecord>> {
        if self.read == self.header.counts.events {
            let mut probe = [0u8; 1];
            return match self.inner.read(&mut probe)? {
                0 => Ok(None),
                _ => Err(Error::format("trailing bytes after the last record")),
            };
        }
        read_exact_or_format(&mut self.inner, &mut self.buf, "record")?;
        let b = &self.buf;
        let slot_index = u64::from_le_bytes(b[0..8].try_into().expect("8 bytes"));
        let slot_kind = SlotKind::from_code(b[8])
            .ok_or_else(|| Error::format(format!("unknown slot kind {}", b[8])))?;
        let true_photon_count = u16::from_le_bytes([b[9], b[10]]);
        if true_photon_count == 0 {
            return Err(Error::format(format!("slot {slot_index} stored with zero photons")));
        }
        if self.last_slot.is_some_and(|s| slot_index <= s) {
            return Err(Error::format("slot indices are not strictly increasing"));
        }
        if slot_index >= self.header.counts.total_slots {
            return Err(Error::format(format!("slot {slot_index} beyond the declared slot count")));
        }
        let mut waveform = Vec::with_capacity(self.header.record_length as usize);
        for chunk in b[11..].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(Error::format(format!("non-finite sample in slot {slot_index}")));
            }
            waveform.push(v);
        }
        self.read += 1;
        self.last_slot = Some(slot_index);
        Ok(Some(EventRecord {
            slot_index,
            slot_kind,
            true_photon_count,
            waveform: Some(waveform),
            crossing_times: Vec::new(),
        }))
    }
}

impl<R: Read> Iterator for WaveformReader<R> {
    type Item = Result<EventRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let r = self.next_record().transpose();
        if matches!(r, Some(Err(_))) {
            self.failed = true;
        }
        r
    }
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

/// Reads a whole waveform file.
pub fn read_waveforms<R: Read>(reader: R) -> Result<(WaveformHeader, Vec<EventRecord>)> {
    let reader = WaveformReader::new(reader)?;
    let header = *reader.header();
    let mut events = Vec::with_capacity((header.counts.events as usize).min(PREALLOCATED_RECORDS));
    for e in reader {
        events.push(e?);
    }
    Ok((header, events))
}

/// Decodes an in-memory waveform file.
pub fn decode_waveforms(bytes: &[u8]) -> Result<(WaveformHeader, Vec<EventRecord>)> {
    read_waveforms(bytes)
}

pub fn encode_waveforms(sample_rate_hz: f64, record_length: u32, counts: SlotCounts, events: &[EventRecord]) -> Result<Vec<u8>> {
    let mut w = WaveformWriter::new(std::io::Cursor::new(Vec::new()), sample_rate_hz, record_length)?;
    for e in events {
        w.write_event(e)?;
    }
    Ok(w.finish(counts)?.into_inner())
}

pub fn read_waveform_file(path: &Path) -> Result<(WaveformHeader, Vec<EventRecord>)> {
    read_waveforms(BufReader::new(fs::File::open(path)?))
}

/// One row of the ground-truth sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRow {
    pub slot_index: u64,
    pub slot_kind: SlotKind,
    pub true_photon_count: u16,
}

impl From<&EventRecord> for GroundTruthRow {
    fn from(e: &EventRecord) -> Self {
        Self {
            slot_index: e.slot_index,
            slot_kind: e.slot_kind,
            true_photon_count: e.true_photon_count,
        }
    }
}

const GROUND_TRUTH_HEADER: [&str; 3] = ["slot_index", "slot_kind", "true_photon_count"];

/// Writes the sidecar; the header is present even with no rows.
pub fn write_ground_truth<W: Write, I: IntoIterator<Item = GroundTruthRow>>(writer: W, rows: I) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(GROUND_TRUTH_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sidecar; rows must be in strictly increasing slot order with at
/// least one photon each.
pub fn read_ground_truth<R: Read>(reader: R) -> Result<Vec<GroundTruthRow>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(GROUND_TRUTH_HEADER) {
        return Err(Error::format(format!(
            "ground-truth header must be {}",
            GROUND_TRUTH_HEADER.join(",")
        )));
    }
    let mut rows: Vec<GroundTruthRow> = Vec::new();
    for row in r.deserialize() {
        let row: GroundTruthRow = row?;
        if row.true_photon_count == 0 {
            return Err(Error::format(format!("slot {} listed with zero photons", row.slot_index)));
        }
        if rows.last().is_some_and(|p| row.slot_index <= p.slot_index) {
            return Err(Error::format("ground-truth slots are not strictly increasing"));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// A file written under a temporary name in its final directory and renamed
/// into place on [`commit`](Self::commit), so readers never see a partial
/// file. Dropping it uncommitted removes the temporary.
#[derive(Debug)]
pub struct AtomicFile {
    writer: BufWriter<tempfile::NamedTempFile>,
    path: PathBuf,
}

impl AtomicFile {
    pub fn create(path: &Path) -> Result<Self> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        Ok(Self {
            writer: BufWriter::new(tempfile::NamedTempFile::new_in(dir)?),
            path: path.to_path_buf(),
        })
    }

    pub fn writer(&mut self) -> &mut BufWriter<tempfile::NamedTempFile> {
        &mut self.writer
    }

    pub fn commit(self) -> Result<()> {
        let tmp = self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            // Temporaries are created owner-only.
            tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&self.path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

/// Writes `path` atomically through [`AtomicFile`].
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<tempfile::NamedTempFile>) -> Result<()>,
{
    let mut f = AtomicFile::create(path)?;
    write(f.writer())?;
    f.commit()
}

/// [`write_atomic`] for content already in memory.
pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(bytes)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(slot: u64, n: u16, len: usize) -> EventRecord {
        EventRecord {
            slot_index: slot,
            slot_kind: if slot % 2 == 0 { SlotKind::Main } else { SlotKind::Suppressed },
            true_photon_count: n,
            waveform: Some((0..len).map(|i| i as f32 * 0.5 - n as f32).collect()),
            crossing_times: Vec::new(),
        }
    }

    fn sample() -> (SlotCounts, Vec<EventRecord>) {
        let events = vec![event(0, 1, 4), event(3, 2, 4), event(10, 7, 4)];
        let counts = SlotCounts {
            total_slots: 11,
            main_slots: 6,
            events: 3,
        };
        (counts, events)
    }

    #[test]
    fn round_trip() {
        let (counts, events) = sample();
        let bytes = encode_waveforms(40e9, 4, counts, &events).unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES + 3 * (11 + 16));
        let (h, back) = decode_waveforms(&bytes).unwrap();
        assert_eq!(h.counts, counts);
        assert_eq!(h.record_length, 4);
        assert_eq!(back, events);
    }

    #[test]
    fn rejects_corruption() {
        let (counts, events) = sample();
        let good = encode_waveforms(40e9, 4, counts, &events).unwrap();
        let corrupt = |f: &dyn Fn(&mut Vec<u8>)| {
            let mut b = good.clone();
            f(&mut b);
            decode_waveforms(&b)
        };
        assert!(matches!(corrupt(&|b| b[0] = b'X'), Err(Error::Format(_))));
        assert!(matches!(corrupt(&|b| b[4] = 9), Err(Error::Format(_))));
        assert!(matches!(corrupt(&|b| b.truncate(b.len() - 1)), Err(Error::Format(_))));
        assert!(matches!(corrupt(&|b| b.push(0)), Err(Error::Format(_))));
        // second record's kind byte
        let kind = HEADER_BYTES + 27 + 8;
        assert!(matches!(corrupt(&|b| b[kind] = 7), Err(Error::Format(_))));
        // first record's slot index pushed past the second
        assert!(matches!(corrupt(&|b| b[HEADER_BYTES] = 5), Err(Error::Format(_))));
        // first sample becomes NaN
        let s = HEADER_BYTES + 11;
        assert!(matches!(
            corrupt(&|b| b[s..s + 4].copy_from_slice(&f32::NAN.to_le_bytes())),
            Err(Error::Format(_))
        ));
        // huge declared event count with no records does not allocate it
        assert!(matches!(
            corrupt(&|b| {
                b[20..28].copy_from_slice(&u64::MAX.to_le_bytes());
                b[28..36].copy_from_slice(&u64::MAX.to_le_bytes());
            }),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn writer_checks_order_and_counts() {
        let mut w = WaveformWriter::new(std::io::Cursor::new(Vec::new()), 1e9, 4).unwrap();
        w.write_event(&event(5, 1, 4)).unwrap();
        assert!(w.write_event(&event(5, 1, 4)).is_err());
        assert!(w.write_event(&event(6, 1, 3)).is_err());
        let counts = SlotCounts {
            total_slots: 6,
            main_slots: 3,
            events: 2,
        };
        assert!(w.finish(counts).is_err());
    }

    #[test]
    fn ground_truth_round_trip() {
        let (_, events) = sample();
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, events.iter().map(GroundTruthRow::from)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("slot_index,slot_kind,true_photon_count\n0,main,1\n3,suppressed,2\n"));
        let rows = read_ground_truth(&buf[..]).unwrap();
        assert_eq!(rows, events.iter().map(GroundTruthRow::from).collect::<Vec<_>>());
        assert!(read_ground_truth(&b"slot_index,slot_kind,true_photon_count\n3,main,1\n2,main,1\n"[..]).is_err());
        assert!(read_ground_truth(&b"slot_index,slot_kind,true_photon_count\n3,main,0\n"[..]).is_err());
        assert!(read_ground_truth(&b"slot,kind,n\n3,main,1\n"[..]).is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_bytes_atomic(&p, b"one").unwrap();
        write_bytes_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
