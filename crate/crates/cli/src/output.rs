use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub enum Value {
    Num(f64),
    Int(u64),
    Text(String),
    /// Empty in CSV, `null` in JSON.
    Missing,
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Num(x) => sig9(*x),
            Value::Int(n) => n.to_string(),
            Value::Text(s) => s.clone(),
            Value::Missing => String::new(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            // Parse the rendered text back so JSON carries the same 9 digits.
            Value::Num(x) => sig9(*x)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(serde_json::Value::Null, serde_json::Value::Number),
            Value::Int(n) => serde_json::Value::from(*n),
            Value::Text(s) => serde_json::Value::from(s.as_str()),
            Value::Missing => serde_json::Value::Null,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<u32> for Value {
    fn from(n: u32) -> Self {
        Value::Int(u64::from(n))
    }
}

impl From<u64> for Value {
    fn from(n: u64) -> Self {
        Value::Int(n)
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_owned())
    }
}

/// Nine significant digits in plain decimal, trailing zeros dropped.
/// Very large or small magnitudes fall back to exponent notation.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-6..=15).contains(&exp) {
        return sci;
    }
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = String::new();
    if exp < 0 {
        out.push_str("0.");
        out.push_str(&"0".repeat((-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let split = exp as usize + 1;
        if split >= digits.len() {
            out.push_str(&digits);
            out.push_str(&"0".repeat(split - digits.len()));
        } else {
            out.push_str(&digits[..split]);
            out.push('.');
            out.push_str(&digits[split..]);
        }
    }
    if out.contains('.') {
        let trimmed = out.trim_end_matches('0').trim_end_matches('.').len();
        out.truncate(trimmed);
    }
    if negative {
        out.insert(0, '-');
    }
    out
}

/// Writes records one at a time so partial output survives a later failure.
pub struct Emitter {
    format: Format,
    headers: Vec<&'static str>,
    out: Box<dyn Write>,
    rows: usize,
    csv: Option<csv::Writer<Box<dyn Write>>>,
}

impl Emitter {
    pub fn new(format: Format, dest: Option<&Path>, headers: &[&'static str]) -> io::Result<Self> {
        let open = || -> io::Result<Box<dyn Write>> {
            Ok(match dest {
                Some(path) => Box::new(BufWriter::new(File::create(path)?)),
                None => Box::new(io::stdout()),
            })
        };
        let mut emitter = Emitter {
            format,
            headers: headers.to_vec(),
            out: Box::new(io::sink()),
            rows: 0,
            csv: None,
        };
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(open()?);
                w.write_record(headers)?;
                w.flush()?;
                emitter.csv = Some(w);
            }
            Format::Json => {
                emitter.out = open()?;
                emitter.out.write_all(b"[")?;
            }
            Format::Human => {
                emitter.out = open()?;
                if headers.len() > 1 {
                    let line: Vec<String> = headers.iter().map(|h| format!("{h:>14}")).collect();
                    writeln!(emitter.out, "{}", line.join(" "))?;
                }
            }
        }
        Ok(emitter)
    }

    pub fn row(&mut self, values: Vec<Value>) -> io::Result<()> {
        debug_assert_eq!(values.len(), self.headers.len());
        match self.format {
            Format::Csv => {
                let w = self.csv.as_mut().expect("csv writer");
                w.write_record(values.iter().map(Value::render))?;
                w.flush()?;
            }
            Format::Json => {
                let object: serde_json::Map<String, serde_json::Value> = self
                    .headers
                    .iter()
                    .zip(&values)
                    .map(|(h, v)| ((*h).to_owned(), v.to_json()))
                    .collect();
                let sep = if self.rows == 0 { "\n  " } else { ",\n  " };
                write!(self.out, "{sep}{}", serde_json::Value::Object(object))?;
                self.out.flush()?;
            }
            Format::Human => {
                if self.headers.len() == 1 {
                    writeln!(self.out, "{}", values[0].render())?;
                } else {
                    let line: Vec<String> = values
                        .iter()
                        .map(|v| format!("{:>14}", v.render()))
                        .collect();
                    writeln!(self.out, "{}", line.join(" "))?;
                }
                self.out.flush()?;
            }
        }
        self.rows += 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        match self.format {
            Format::Csv => self.csv.take().expect("csv writer").flush(),
            Format::Json => {
                self.out
                    .write_all(if self.rows == 0 { b"]\n" } else { b"\n]\n" })?;
                self.out.flush()
            }
            Format::Human => self.out.flush(),
        }
    }
}
