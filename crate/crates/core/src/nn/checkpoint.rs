//! Text container of named, shaped `f64` arrays plus string metadata.
//!
//! ```text
//! GRIDSWITCH-CHECKPOINT 1
//! meta <key> <value to end of line>
//! array <name> <rank> <dim>...
//! <values as 16-digit hex of the IEEE-754 bits, up to 8 per line>
//! end
//! ```
//!
//! Values are stored as raw bit patterns, so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::Params;

const MAGIC: &str = "GRIDSWITCH-CHECKPOINT 1";
const PER_LINE: usize = 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("checkpoint has no entry `{0}`")]
    Missing(String),
    #[error("checkpoint entry `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    meta: BTreeMap<String, String>,
    arrays: BTreeMap<String, NamedArray>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        self.meta.insert(key.to_string(), value.into());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn insert_array(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays
            .insert(name.to_string(), NamedArray { shape, data });
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    /// Data of `name`, checked against `shape`.
    pub fn array(&self, name: &str, shape: &[usize]) -> Result<&[f64], CheckpointError> {
        let a = self
            .arrays
            .get(name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if a.shape != shape {
            return Err(CheckpointError::Shape {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: a.shape.clone(),
            });
        }
        Ok(&a.data)
    }

    pub fn insert_params<P: Params>(&mut self, prefix: &str, params: &P) {
        for ((name, shape), data) in params.layout().into_iter().zip(params.tensors()) {
            self.insert_array(&format!("{prefix}.{name}"), shape, data.to_vec());
        }
    }

    /// Overwrites `params` in place; shapes must match exactly.
    pub fn load_params<P: Params>(
        &self,
        prefix: &str,
        params: &mut P,
    ) -> Result<(), CheckpointError> {
        let layout = params.layout();
        for ((name, shape), dst) in layout.into_iter().zip(params.tensors_mut()) {
            let src = self.array(&format!("{prefix}.{name}"), &shape)?;
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, a) in &self.arrays {
            let _ = write!(out, "array {name} {}", a.shape.len());
            for d in &a.shape {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            for chunk in a.data.chunks(PER_LINE) {
                let words: Vec<String> = chunk
                    .iter()
                    .map(|x| format!("{:016x}", x.to_bits()))
                    .collect();
                let _ = writeln!(out, "{}", words.join(" "));
            }
        }
        let _ = writeln!(out, "end");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let err = |line: usize, reason: &str| CheckpointError::Format {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(err(1, "missing header")),
        }
        let mut ckpt = Checkpoint::new();
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            if line == "end" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ckpt.set_meta(k, v);
            } else if let Some(rest) = line.strip_prefix("array ") {
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| err(n, "array without name"))?;
                let rank: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(n, "bad rank"))?;
                let shape = parts
                    .map(|s| s.parse::<usize>().map_err(|_| err(n, "bad dimension")))
                    .collect::<Result<Vec<_>, _>>()?;
                if shape.len() != rank {
                    return Err(err(n, "rank does not match dimensions"));
                }
                let len: usize = shape.iter().product();
                let mut data = Vec::with_capacity(len);
                while data.len() < len {
                    let (m, row) = lines.next().ok_or_else(|| err(n, "truncated array"))?;
                    for w in row.split_whitespace() {
                        let bits = u64::from_str_radix(w, 16).map_err(|_| err(m, "bad value"))?;
                        data.push(f64::from_bits(bits));
                    }
                }
                if data.len() != len {
                    return Err(err(n, "array length mismatch"));
                }
                ckpt.arrays
                    .insert(name.to_string(), NamedArray { shape, data });
            } else {
                return Err(err(n, "unexpected line"));
            }
        }
        if !ended {
            return Err(err(text.lines().count(), "missing end marker"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
