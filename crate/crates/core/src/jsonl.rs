//! Line-delimited JSON records.

use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Iterates the records of a line-delimited stream. Blank lines are skipped;
/// line numbers are 1-based and count blank lines.
pub fn records<T, R>(reader: R) -> impl Iterator<Item = Result<(usize, T), JsonlError>>
where
    T: DeserializeOwned,
    R: BufRead,
{
    reader.lines().enumerate().filter_map(|(idx, line)| {
        let line_no = idx + 1;
        match line {
            Err(e) => Some(Err(JsonlError::Io(e))),
            Ok(text) if text.trim().is_empty() => None,
            Ok(text) => {
                Some(
                    serde_json::from_str::<T>(&text)
                        .map(|rec| (line_no, rec))
                        .map_err(|e| JsonlError::Parse {
                            line: line_no,
                            message: e.to_string(),
                        }),
                )
            }
        }
    })
}

/// Reads every record, stopping at the first error.
pub fn read_all<T, R>(reader: R) -> Result<Vec<(usize, T)>, JsonlError>
where
    T: DeserializeOwned,
    R: BufRead,
{
    records(reader).collect()
}

pub fn write_all<T, W>(mut writer: W, items: impl IntoIterator<Item = T>) -> io::Result<()>
where
    T: Serialize,
    W: Write,
{
    for item in items {
        serde_json::to_writer(&mut writer, &item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
