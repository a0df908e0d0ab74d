//! Structured experiment report: named sections of key = value lines,
//! stable and machine-parseable. Written even when a stage fails, with the
//! failing stage marked.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct Report {
    sections: Vec<(String, Vec<(String, String)>)>,
    pub failed_stage: Option<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn put(&mut self, section: &str, key: &str, value: impl Display) {
        let entry = (key.to_string(), value.to_string());
        if let Some((_, items)) = self.sections.iter_mut().find(|(s, _)| s == section) {
            items.push(entry);
        } else {
            self.sections.push((section.to_string(), vec![entry]));
        }
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(s, _)| s == section)?
            .1
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn mark_failed(&mut self, stage: &str, error: impl Display) {
        self.failed_stage = Some((stage.to_string(), error.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (section, items) in &self.sections {
            out.push_str(&format!("[{section}]\n"));
            for (k, v) in items {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        match &self.failed_stage {
            Some((stage, err)) => {
                out.push_str(&format!("failed_stage = {stage}\n"));
                out.push_str(&format!("failure = {err}\n"));
            }
            None => out.push_str("failed_stage = none\n"),
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.render())
    }

    /// Parse a rendered report back into sections (used by tests and by
    /// tools consuming report files).
    pub fn parse(text: &str) -> Report {
        let mut report = Report::new();
        let mut section = String::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_string();
                continue;
            }
            if let Some((k, v)) = line.split_once(" = ") {
                if k == "failed_stage" {
                    if v != "none" {
                        report.failed_stage = Some((v.to_string(), String::new()));
                    }
                } else if k == "failure" {
                    if let Some((stage, _)) = report.failed_stage.take() {
                        report.failed_stage = Some((stage, v.to_string()));
                    }
                } else {
                    report.put(&section, k, v);
                }
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut r = Report::new();
        r.put("INGEST", "train_images", 40);
        r.put("INGEST", "classes", 5);
        r.put("SELECT", "selected_count", 12);
        let text = r.render();
        assert!(text.contains("[INGEST]\ntrain_images = 40\nclasses = 5\n"));
        assert!(text.ends_with("failed_stage = none\n"));
        let back = Report::parse(&text);
        assert_eq!(back.get("SELECT", "selected_count"), Some("12"));
        assert!(back.failed_stage.is_none());
    }

    #[test]
    fn failure_marking() {
        let mut r = Report::new();
        r.put("INGEST", "train_images", 0);
        r.mark_failed("INGEST", "empty dataset dir");
        let text = r.render();
        assert!(text.contains("failed_stage = INGEST"));
        let back = Report::parse(&text);
        assert_eq!(back.failed_stage.unwrap().0, "INGEST");
    }
}
