use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::oracle::{OracleAnswer, OracleRequest, QaOracle};

struct Channel {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// External answerer speaking line-delimited JSON: one request object per
/// line on its stdin, one `{"tokens": [...], "confidence": x}` per line back.
pub struct PipeOracle {
    child: Mutex<Child>,
    channel: Mutex<Channel>,
}

impl PipeOracle {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Oracle(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(PipeOracle {
            child: Mutex::new(child),
            channel: Mutex::new(Channel { stdin, stdout }),
        })
    }
}

impl QaOracle for PipeOracle {
    fn name(&self) -> &str {
        "pipe"
    }

    fn answer(&self, request: &OracleRequest<'_>) -> Result<OracleAnswer> {
        let mut ch = self.channel.lock().map_err(|_| Error::Oracle("pipe poisoned".into()))?;
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        ch.stdin.write_all(line.as_bytes())?;
        ch.stdin.flush()?;
        let mut reply = String::new();
        if ch.stdout.read_line(&mut reply)? == 0 {
            return Err(Error::Oracle("external oracle closed its output".into()));
        }
        Ok(serde_json::from_str(reply.trim_end())?)
    }
}

impl Drop for PipeOracle {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
