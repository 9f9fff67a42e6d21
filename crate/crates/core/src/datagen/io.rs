//! Dataset CSV format.
//!
//! ```text
//! face,case_id,sample,cx1,cy1,f1,cx2,cy2,f2,cx3,cy3,f3,s1,s2,s3,s4,s5,s6,s7,s8,s9
//! ```
//!
//! Absent contacts leave their three cells empty. Forces (N) and signals
//! (uT) carry six decimals. Rows are sorted by `(case_id, sample)`.

use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, DatasetRecord};
use crate::error::{Error, Result};
use crate::geometry::GridCoord;
use crate::magnetics::{HallFrame, FRAME_LEN};

pub const CSV_HEADER: &str =
    "face,case_id,sample,cx1,cy1,f1,cx2,cy2,f2,cx3,cy3,f3,s1,s2,s3,s4,s5,s6,s7,s8,s9";

const COLUMNS: usize = 3 + 9 + FRAME_LEN;

pub fn write_dataset_string(dataset: &Dataset) -> String {
    let mut out = String::with_capacity(64 + dataset.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    let mut sorted: Vec<&DatasetRecord> = dataset.records.iter().collect();
    sorted.sort_by(|a, b| (&a.case_id, a.sample).cmp(&(&b.case_id, b.sample)));
    for r in sorted {
        let _ = write!(out, "{},{},{}", r.face, r.case_id, r.sample);
        for slot in 0..3 {
            match r.contacts.get(slot) {
                Some((c, f)) => {
                    let _ = write!(out, ",{},{},{:.6}", c.x, c.y, f);
                }
                None => out.push_str(",,,"),
            }
        }
        for v in &r.hall.values {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, write_dataset_string(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_dataset_str(&text, path)
}

/// Parse dataset CSV text; `origin` only labels error messages.
pub fn read_dataset_str(text: &str, origin: &Path) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("unexpected header {h:?}"))),
        None => return Err(err(1, "missing header".into())),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != COLUMNS {
            return Err(err(
                lineno,
                format!("row {} has {} columns, expected {COLUMNS}", lineno - 1, cells.len()),
            ));
        }
        let num = |k: usize, what: &str| -> Result<f64> {
            cells[k]
                .parse::<f64>()
                .map_err(|e| err(lineno, format!("{what} {:?}: {e}", cells[k])))
        };
        let int = |k: usize, what: &str| -> Result<usize> {
            cells[k]
                .parse::<usize>()
                .map_err(|e| err(lineno, format!("{what} {:?}: {e}", cells[k])))
        };
        let face = int(0, "face")? as u8;
        let case_id = cells[1].to_string();
        if case_id.is_empty() {
            return Err(err(lineno, "empty case_id".into()));
        }
        let sample = int(2, "sample")?;
        let mut contacts = Vec::new();
        for slot in 0..3 {
            let base = 3 + 3 * slot;
            let blank = cells[base..base + 3].iter().all(|c| c.is_empty());
            if blank {
                continue;
            }
            if contacts.len() != slot {
                return Err(err(lineno, format!("contact {} present after a blank slot", slot + 1)));
            }
            let x = int(base, "contact x")?;
            let y = int(base + 1, "contact y")?;
            let f = num(base + 2, "contact force")?;
            if !(f >= 0.0) {
                return Err(err(lineno, format!("negative force {f}")));
            }
            contacts.push((GridCoord::new(x as u8, y as u8), f));
        }
        let mut values = [0.0; FRAME_LEN];
        for (k, v) in values.iter_mut().enumerate() {
            *v = num(12 + k, "signal")?;
        }
        records.push(DatasetRecord {
            face,
            case_id,
            sample,
            contacts,
            hall: HallFrame { face, values },
        });
    }
    Ok(Dataset::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_face_dataset, TwinConfig};
    use std::path::PathBuf;

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = generate_face_dataset(1, 0.005, &TwinConfig::default(), 21).unwrap();
        let text = write_dataset_string(&ds);
        let back = read_dataset_str(&text, &PathBuf::from("mem")).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.records.iter().zip(&ds.records) {
            for k in 0..FRAME_LEN {
                assert_eq!(a.hall.values[k].to_bits(), b.hall.values[k].to_bits());
            }
        }
        assert_eq!(write_dataset_string(&back), text);
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let text = write_dataset_string(&Dataset::default());
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert!(read_dataset_str(&text, &PathBuf::from("mem")).unwrap().is_empty());
    }

    #[test]
    fn short_row_names_the_row() {
        let text = format!("{CSV_HEADER}\n1,p1-x01-y01,0,1,1,2.0,,,,,,,1,2,3,4,5,6,7,8\n");
        match read_dataset_str(&text, &PathBuf::from("bad.csv")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("row 1"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_cell_is_reported() {
        let text = format!("{CSV_HEADER}\n1,nc-00,0,,,,,,,,,,1,2,3,4,x,6,7,8,9\n");
        assert!(matches!(
            read_dataset_str(&text, &PathBuf::from("bad.csv")),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
