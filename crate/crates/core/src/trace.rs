//! Recorded waveforms and their CSV form.
//!
//! One header row followed by one row per recorded sample, comma separated,
//! `\n` line endings, floats in shortest round-trip form. Readers also accept
//! `\r\n`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 9] = [
    "t_s",
    "v_inv_V",
    "v_mot_V",
    "v_coil_V",
    "i_hf_A",
    "i_branch_A",
    "duty",
    "zeq_ohm",
    "lyap_J",
];

/// One recorded sample.
///
/// `duty` and `zeq_ohm` are zero when the branch is disabled for the whole
/// run; otherwise they carry the controller's duty and `|Z_eq|` at the
/// ringing frequency even while the gate is open.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub v_inv: f64,
    pub v_mot: f64,
    pub v_coil: f64,
    pub i_hf: f64,
    pub i_branch: f64,
    pub duty: f64,
    pub zeq: f64,
    pub lyap: f64,
}

impl Sample {
    fn fields(&self) -> [f64; 9] {
        [
            self.t,
            self.v_inv,
            self.v_mot,
            self.v_coil,
            self.i_hf,
            self.i_branch,
            self.duty,
            self.zeq,
            self.lyap,
        ]
    }

    fn from_fields(f: [f64; 9]) -> Self {
        Self {
            t: f[0],
            v_inv: f[1],
            v_mot: f[2],
            v_coil: f[3],
            i_hf: f[4],
            i_branch: f[5],
            duty: f[6],
            zeq: f[7],
            lyap: f[8],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub samples: Vec<Sample>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, s: Sample) {
        self.samples.push(s);
    }

    pub fn column(&self, f: impl Fn(&Sample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(|s| s.t)
    }

    pub fn v_mot(&self) -> Vec<f64> {
        self.column(|s| s.v_mot)
    }

    /// Sample spacing, or `None` for fewer than two samples.
    pub fn dt(&self) -> Option<f64> {
        match self.samples.as_slice() {
            [a, b, ..] => Some(b.t - a.t),
            _ => None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 160);
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for s in &self.samples {
            for (k, v) in s.fields().iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v:?}").expect("write to String");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((n, l)) => break (n + 1, l.trim_end_matches('\r')),
                None => {
                    return Err(Error::Trace {
                        line: 1,
                        message: "empty trace".into(),
                    })
                }
            }
        };
        let names: Vec<&str> = header.1.split(',').map(str::trim).collect();
        if names != COLUMNS {
            return Err(Error::Trace {
                line: header.0,
                message: format!("unexpected header, want {}", COLUMNS.join(",")),
            });
        }
        let mut trace = Trace::new();
        for (n, raw) in lines {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut f = [0.0; 9];
            let mut count = 0;
            for (k, cell) in line.split(',').enumerate() {
                if k >= 9 {
                    count = k + 1;
                    continue;
                }
                f[k] = cell.trim().parse::<f64>().map_err(|_| Error::Trace {
                    line: n + 1,
                    message: format!("column {}: cannot parse {cell:?}", COLUMNS[k]),
                })?;
                count = k + 1;
            }
            if count != 9 {
                return Err(Error::Trace {
                    line: n + 1,
                    message: format!("expected 9 fields, got {count}"),
                });
            }
            trace.push(Sample::from_fields(f));
        }
        Ok(trace)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_only() {
        let t = Trace::new();
        assert_eq!(t.to_csv(), format!("{}\n", COLUMNS.join(",")));
        assert_eq!(Trace::from_csv(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn crlf_accepted() {
        let mut t = Trace::new();
        t.push(Sample {
            t: 1e-9,
            v_mot: 600.0,
            ..Default::default()
        });
        let crlf = t.to_csv().replace('\n', "\r\n");
        assert_eq!(Trace::from_csv(&crlf).unwrap(), t);
    }

    #[test]
    fn errors_name_the_line() {
        let text = format!("{}\n0,0,0,0,0,0,0,0,0\n0,0,x,0,0,0,0,0,0\n", COLUMNS.join(","));
        match Trace::from_csv(&text) {
            Err(Error::Trace { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = format!("{}\n0,0,0\n", COLUMNS.join(","));
        assert!(matches!(
            Trace::from_csv(&short),
            Err(Error::Trace { line: 2, .. })
        ));
        assert!(matches!(
            Trace::from_csv("a,b\n"),
            Err(Error::Trace { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in prop::collection::vec(prop::array::uniform9(-1e12f64..1e12), 0..20)) {
            let mut t = Trace::new();
            for r in rows {
                t.push(Sample::from_fields(r));
            }
            let back = Trace::from_csv(&t.to_csv()).unwrap();
            for (a, b) in t.samples.iter().zip(&back.samples) {
                for (x, y) in a.fields().iter().zip(b.fields().iter()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            prop_assert_eq!(back.len(), t.len());
        }
    }
}
