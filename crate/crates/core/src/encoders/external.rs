use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use ndarray::Array2;
use serde::Deserialize;

use super::SentenceEncoder;
use crate::{Error, Result};

/// Encoder served by a local process speaking newline-delimited JSON:
/// requests `{"texts": [...]}`, responses `{"embeddings": [[...], ...]}`.
///
/// This is how pretrained transformer encoders are plugged in.
pub struct ExternalEncoder {
    id: String,
    dim: usize,
    io: Mutex<ProcessIo>,
}

struct ProcessIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

#[derive(Deserialize)]
struct Response {
    embeddings: Vec<Vec<f32>>,
}

impl ExternalEncoder {
    /// Starts `program args...`; `id` should name the model checkpoint and
    /// its preprocessing.
    pub fn spawn(program: &str, args: &[String], id: impl Into<String>, dim: usize) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Encoder(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            id: id.into(),
            dim,
            io: Mutex::new(ProcessIo {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Drop for ExternalEncoder {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

impl SentenceEncoder for ExternalEncoder {
    fn encoder_id(&self) -> String {
        format!("external:{}", self.id)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentences: &[&str]) -> Result<Array2<f32>> {
        let mut io = self
            .io
            .lock()
            .map_err(|_| Error::Encoder("encoder process lock poisoned".into()))?;
        let request = serde_json::json!({ "texts": sentences });
        writeln!(io.stdin, "{request}")
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::Encoder(format!("write to encoder: {e}")))?;
        let mut line = String::new();
        let read = io
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Encoder(format!("read from encoder: {e}")))?;
        if read == 0 {
            return Err(Error::Encoder("encoder process closed its output".into()));
        }
        let response: Response = serde_json::from_str(&line)
            .map_err(|e| Error::Encoder(format!("bad encoder response: {e}")))?;
        if response.embeddings.len() != sentences.len() {
            return Err(Error::Encoder(format!(
                "encoder returned {} rows for {} sentences",
                response.embeddings.len(),
                sentences.len()
            )));
        }
        let mut out = Array2::<f32>::zeros((sentences.len(), self.dim));
        for (i, row) in response.embeddings.iter().enumerate() {
            if row.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    context: "external encoder output".into(),
                    expected: self.dim,
                    actual: row.len(),
                });
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("external encoder output".into()));
            }
            out.row_mut(i).assign(&ndarray::ArrayView1::from(row.as_slice()));
        }
        Ok(out)
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn python() -> Option<&'static str> {
        Command::new("python3").arg("--version").output().ok().map(|_| "python3")
    }

    #[test]
    fn speaks_the_line_protocol() {
        let Some(py) = python() else { return };
        let script = r#"
import sys, json
for line in sys.stdin:
    texts = json.loads(line)["texts"]
    print(json.dumps({"embeddings": [[float(len(t)), 1.0] for t in texts]}), flush=True)
"#;
        let enc = ExternalEncoder::spawn(py, &["-c".into(), script.into()], "len", 2).unwrap();
        let m = enc.encode(&["abc", "de"]).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![3.0, 1.0]);
        assert_eq!(m.row(1).to_vec(), vec![2.0, 1.0]);
        let wrong = ExternalEncoder::spawn(py, &["-c".into(), script.into()], "len", 3).unwrap();
        assert!(wrong.encode(&["x"]).is_err());
    }

    #[test]
    fn missing_program_is_an_encoder_error() {
        assert!(matches!(
            ExternalEncoder::spawn("/nonexistent/encoder", &[], "x", 2),
            Err(Error::Encoder(_))
        ));
    }
}
