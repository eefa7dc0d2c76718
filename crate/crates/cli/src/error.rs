use rrseg::ErrorKind;

/// Failures detected by the command line itself rather than the library.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

/// Exit code and category name for an error chain: 2 for invalid
/// configuration, 3 for bad data, 4 for a job that failed while running.
pub fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<rrseg::Error>() {
            return match e.kind() {
                ErrorKind::Config => (2, "config"),
                ErrorKind::Data => (3, "data"),
                ErrorKind::Job => (4, "job"),
            };
        }
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Config(_) => (2, "config"),
                CliError::Data(_) => (3, "data"),
            };
        }
        if cause.is::<toml::de::Error>() {
            return (2, "config");
        }
    }
    (4, "job")
}

/// The single-line JSON diagnostic written to stderr on failure.
pub fn diagnostic(code: u8, kind: &str, message: &str) -> String {
    serde_json::json!({
        "status": "error",
        "kind": kind,
        "exit_code": code,
        "message": message,
    })
    .to_string()
}
