use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::LabeledEvents;

use super::write_atomic;

/// Reads events from a CSV file with a header row.
///
/// Every column is a marker except one named `label` (any case), which
/// supplies per-event labels. Without it the events are unlabelled.
pub fn load_csv(path: &Path) -> Result<LabeledEvents> {
    let file = std::fs::File::open(path)?;
    read_csv(file).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::invalid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_csv(reader: impl Read) -> Result<LabeledEvents> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::invalid("file is empty"));
    }
    let label_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].eq_ignore_ascii_case("label")).collect();
    if label_cols.len() > 1 {
        return Err(Error::invalid("more than one label column"));
    }
    let label_col = label_cols.first().copied();
    let markers: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_col)
        .map(|(_, h)| h.clone())
        .collect();
    if markers.is_empty() {
        return Err(Error::invalid("no marker columns"));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = r + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_col {
                labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("'{cell}' is not finite"),
                });
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("file has a header but no events"));
    }
    let events = DMatrix::from_row_slice(n, markers.len(), &values);
    LabeledEvents::with_markers(markers, events, label_col.map(|_| labels))
}

/// Writes events, and labels when present, as CSV. Values keep full precision.
pub fn write_csv(events: &LabeledEvents, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(events, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn write_csv_to(events: &LabeledEvents, out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = events.markers().iter().map(String::as_str).collect();
    if events.is_labeled() {
        header.push("label");
    }
    w.write_record(&header)?;
    let x = events.events();
    for i in 0..events.len() {
        let mut record: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(labels) = events.labels() {
            record.push(labels[i].clone());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
