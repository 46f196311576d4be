use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

/// One pass/fail line of a run. `value` is compared against `tolerance` as
/// an upper bound unless the check says otherwise.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    pub fn above(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value > tolerance,
        }
    }

    /// `|value − expected| ≤ tolerance`; equal infinities match.
    pub fn near(name: &str, value: f64, expected: f64, tolerance: f64) -> Self {
        let gap = if value == expected {
            0.0
        } else {
            (value - expected).abs()
        };
        Self {
            name: name.into(),
            value: gap,
            tolerance,
            pass: gap <= tolerance,
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            pass: ok,
        }
    }
}

/// Everything a run produced. No wall time, so identical inputs give
/// byte-identical JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub model: String,
    pub model_hash: String,
    pub seed: u64,
    pub options: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Named scalar results shown in the summary.
    pub values: BTreeMap<String, serde_json::Value>,
    /// The full result returned by the library.
    pub details: serde_json::Value,
    #[serde(skip)]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub csv: Option<String>,
}

impl RunReport {
    pub fn new(command: &str, model: &str, model_hash: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            model: model.into(),
            model_hash: model_hash.into(),
            seed,
            options: BTreeMap::new(),
            checks: Vec::new(),
            pass: true,
            values: BTreeMap::new(),
            details: serde_json::Value::Null,
            notes: Vec::new(),
            csv: None,
        }
    }

    pub fn option(&mut self, key: &str, value: impl Serialize) {
        self.options.insert(key.into(), json(value));
    }

    pub fn value(&mut self, key: &str, value: impl Serialize) {
        self.values.insert(key.into(), json(value));
    }

    pub fn check(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    pub fn details(&mut self, value: impl Serialize) {
        self.details = json(value);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fallback CSV when the command has no curve or tensor to dump.
    pub fn checks_csv(&self) -> String {
        let mut out = String::from("name,value,tolerance,pass\n");
        for c in &self.checks {
            out.push_str(&format!("{},{:e},{:e},{}\n", c.name, c.value, c.tolerance, c.pass));
        }
        out
    }
}

fn json(value: impl Serialize) -> serde_json::Value {
    serde_json::to_value(value).expect("value serializes")
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} {} (sha256 {}) seed {}",
            self.command,
            self.model,
            &self.model_hash[..12],
            self.seed
        )?;
        for (k, v) in &self.values {
            writeln!(f, "  {k} = {v}")?;
        }
        for line in &self.notes {
            writeln!(f, "  {line}")?;
        }
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            writeln!(
                f,
                "  {verdict} {}: {:.3e} (tolerance {:.1e})",
                c.name, c.value, c.tolerance
            )?;
        }
        write!(
            f,
            "{}",
            if self.pass {
                "all checks passed"
            } else {
                "some checks failed"
            }
        )
    }
}
