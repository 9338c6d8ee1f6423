//! Reporting helpers for the acceptance run.

/// Verdict of one criterion with its itemised evidence.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub pass: bool,
    pub details: Vec<String>,
}

impl Outcome {
    pub fn new() -> Self {
        Self {
            pass: true,
            details: Vec::new(),
        }
    }

    /// Records a judged item; `None` means informational only.
    pub fn item(&mut self, label: &str, value: f64, ok: Option<bool>, rule: &str) {
        let tag = match ok {
            Some(true) => "ok",
            Some(false) => "FAIL",
            None => "info",
        };
        if ok == Some(false) || (ok.is_some() && !value.is_finite()) {
            self.pass = false;
        }
        self.details
            .push(format!("{tag:>4}  {label}: {value:.6e} ({rule})"));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.details.push(format!("      {}", text.into()));
    }
}
