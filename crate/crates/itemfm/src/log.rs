//! JSON-lines stage records.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Where stage records go: appended to a file, or stderr.
#[derive(Clone, Debug, Default)]
pub struct StageLog {
    path: Option<PathBuf>,
}

impl StageLog {
    pub fn new(path: Option<PathBuf>) -> Self {
        Self { path }
    }

    pub fn start(&self, stage: &'static str, seed: u64) -> Stage<'_> {
        Stage { log: self, stage, seed, started: Instant::now(), inputs: Map::new(), outputs: Map::new(), extra: Map::new() }
    }

    fn emit(&self, record: &Value) -> Result<()> {
        let line = format!("{record}\n");
        match &self.path {
            Some(p) => OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .and_then(|mut f| f.write_all(line.as_bytes()))
                .map_err(|e| Error::io(p, e)),
            None => {
                let _ = std::io::stderr().write_all(line.as_bytes());
                Ok(())
            }
        }
    }
}

/// One running stage; `finish` writes its record.
#[derive(Debug)]
pub struct Stage<'a> {
    log: &'a StageLog,
    stage: &'static str,
    seed: u64,
    started: Instant,
    inputs: Map<String, Value>,
    outputs: Map<String, Value>,
    extra: Map<String, Value>,
}

impl Stage<'_> {
    pub fn input(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.inputs.insert(key.into(), value.into());
        self
    }

    pub fn output(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.outputs.insert(key.into(), value.into());
        self
    }

    pub fn detail(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.extra.insert(key.into(), value.into());
        self
    }

    pub fn finish(self) -> Result<()> {
        let mut record = json!({
            "stage": self.stage,
            "wall_ms": self.started.elapsed().as_secs_f64() * 1e3,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        if !self.extra.is_empty() {
            record["details"] = Value::Object(self.extra);
        }
        self.log.emit(&record)
    }
}
