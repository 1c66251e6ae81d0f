//! Server-sent events framing.
//!
//! Lines are `field: value` pairs (one optional space after the colon is
//! stripped), `:`-prefixed lines are comments, and a blank line dispatches
//! the accumulated event. Multiple `data:` lines join with `\n`. An event
//! still pending at end of input is discarded.

use std::io::BufRead;

use super::ProviderError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SseFrame {
    pub event: Option<String>,
    pub data: String,
}

pub struct SseReader<R> {
    reader: R,
    line: Vec<u8>,
    finished: bool,
}

impl<R: BufRead> SseReader<R> {
    pub fn new(reader: R) -> Self {
        SseReader {
            reader,
            line: Vec::new(),
            finished: false,
        }
    }

    fn next_frame(&mut self) -> Result<Option<SseFrame>, ProviderError> {
        let mut event: Option<String> = None;
        let mut data: Option<String> = None;
        loop {
            self.line.clear();
            let n = self
                .reader
                .read_until(b'\n', &mut self.line)
                .map_err(|e| ProviderError::Transport(e.to_string()))?;
            if n == 0 {
                return Ok(None);
            }
            let mut raw: &[u8] = &self.line;
            if raw.ends_with(b"\n") {
                raw = &raw[..raw.len() - 1];
            }
            if raw.ends_with(b"\r") {
                raw = &raw[..raw.len() - 1];
            }
            let line = std::str::from_utf8(raw)
                .map_err(|_| ProviderError::StreamProtocol("stream is not valid UTF-8".into()))?;

            if line.is_empty() {
                match data.take() {
                    Some(data) => {
                        return Ok(Some(SseFrame {
                            event: event.take(),
                            data,
                        }))
                    }
                    None => {
                        event = None;
                        continue;
                    }
                }
            }
            if line.starts_with(':') {
                continue;
            }
            let (field, value) = match line.split_once(':') {
                Some((f, v)) => (f, v.strip_prefix(' ').unwrap_or(v)),
                None => (line, ""),
            };
            match field {
                "data" => match &mut data {
                    Some(d) => {
                        d.push('\n');
                        d.push_str(value);
                    }
                    None => data = Some(value.to_string()),
                },
                "event" => event = Some(value.to_string()),
                // id, retry and unknown fields carry nothing we use
                _ => {}
            }
        }
    }
}

impl<R: BufRead> Iterator for SseReader<R> {
    type Item = Result<SseFrame, ProviderError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.next_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => {
                self.finished = true;
                None
            }
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}
