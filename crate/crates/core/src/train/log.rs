use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_reward: Option<f64>,
}

pub trait TrainLog {
    fn record(&mut self, record: &LogRecord) -> Result<()>;
}

/// Discards every record.
pub struct NullLog;

impl TrainLog for NullLog {
    fn record(&mut self, _: &LogRecord) -> Result<()> {
        Ok(())
    }
}

/// Keeps records in memory.
#[derive(Default)]
pub struct MemoryLog(pub Vec<LogRecord>);

impl TrainLog for MemoryLog {
    fn record(&mut self, record: &LogRecord) -> Result<()> {
        self.0.push(record.clone());
        Ok(())
    }
}

/// Line-delimited JSON writer.
pub struct JsonlLog<W: Write> {
    out: W,
}

impl<W: Write> JsonlLog<W> {
    pub fn new(out: W) -> Self {
        JsonlLog { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TrainLog for JsonlLog<W> {
    fn record(&mut self, record: &LogRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}
