//! Published per-setting hardware correlators against the generator.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use super::{csv_writer, mean_correlators, ExperimentError};
use crate::correlations::{setting_index, Correlators};
use crate::evegan::generate;
use crate::format::sig;
use crate::sources::{quantum_correlators, QuantumSourceConfig};
use crate::tinynet::Mlp;

const HEADER: [&str; 3] = ["setting_x", "setting_y", "E"];

fn data_err(line: usize, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Data { line, message: message.into() }
}

/// Reads exactly four `setting_x,setting_y,E` rows, one per setting pair.
pub fn parse_hardware_csv<R: Read>(input: R) -> Result<Correlators, ExperimentError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(data_err(1, "empty file")),
        Some(h) => h.map_err(|e| data_err(1, e.to_string()))?,
    };
    if header.iter().ne(HEADER) {
        return Err(data_err(1, format!("header must be {}", HEADER.join(","))));
    }
    let mut values: [Option<f64>; 4] = [None; 4];
    let mut rows = 0;
    for rec in records {
        let rec = rec.map_err(|e| data_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(data_err(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let setting = |i: usize| match &rec[i] {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(data_err(line, format!("{} must be 0 or 1, found {other:?}", HEADER[i]))),
        };
        let (x, y) = (setting(0)?, setting(1)?);
        let e: f64 = rec[2].parse().map_err(|_| data_err(line, format!("E {:?} is not a number", &rec[2])))?;
        if !(-1.0..=1.0).contains(&e) {
            return Err(data_err(line, format!("E = {e} outside [-1, 1]")));
        }
        let slot = &mut values[setting_index(x, y)];
        if slot.replace(e).is_some() {
            return Err(data_err(line, format!("setting ({x},{y}) appears twice")));
        }
        rows += 1;
    }
    match values {
        [Some(a), Some(b), Some(c), Some(d)] => Ok(Correlators::new(a, b, c, d)),
        _ => Err(data_err(rows + 2, format!("expected 4 settings, found {rows}"))),
    }
}

pub fn load_hardware_csv(path: &Path) -> Result<Correlators, ExperimentError> {
    parse_hardware_csv(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareComparison {
    pub hardware: Correlators,
    /// Mean of `n_samples` generated correlator vectors.
    pub eve: Correlators,
    /// Ideal quantum correlators.
    pub theory: Correlators,
    pub n_samples: usize,
}

impl HardwareComparison {
    /// Eve's mean CHSH minus the hardware CHSH.
    pub fn eve_advantage(&self) -> f64 {
        self.eve.chsh() - self.hardware.chsh()
    }

    pub const CSV_HEADER: [&'static str; 5] = ["quantity", "hardware", "eve", "theory", "eve_minus_hardware"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        let (h, e, t) = (self.hardware.to_array(), self.eve.to_array(), self.theory.to_array());
        let names = ["E00", "E01", "E10", "E11"];
        let mut emit = |name: &str, h: f64, e: f64, t: f64| {
            w.write_record([name.to_string(), sig(h, 6), sig(e, 6), sig(t, 6), sig(e - h, 6)])
        };
        for i in 0..4 {
            emit(names[i], h[i], e[i], t[i])?;
        }
        emit("CHSH", self.hardware.chsh(), self.eve.chsh(), self.theory.chsh())?;
        w.flush()?;
        Ok(())
    }
}

pub fn hardware_compare<R: Rng + ?Sized>(
    csv_path: &Path,
    generator: &Mlp,
    n_samples: usize,
    rng: &mut R,
) -> Result<HardwareComparison, ExperimentError> {
    if n_samples == 0 {
        return Err(ExperimentError::Config("n_samples must be at least 1".into()));
    }
    let hardware = load_hardware_csv(csv_path)?;
    let eve = mean_correlators(&generate(generator, n_samples, rng)?);
    let theory = quantum_correlators(&QuantumSourceConfig::new(1.0)?);
    Ok(HardwareComparison { hardware, eve, theory, n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUNDLED: &str = "setting_x,setting_y,E\n0,0,0.673\n0,1,0.671\n1,0,0.675\n1,1,-0.672\n";

    fn line_of(text: &str) -> usize {
        match parse_hardware_csv(text.as_bytes()) {
            Err(ExperimentError::Data { line, .. }) => line,
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn bundled_values() {
        let c = parse_hardware_csv(BUNDLED.as_bytes()).unwrap();
        assert!((c.chsh() - 2.691).abs() < 1e-12);
        // Row order does not matter.
        let shuffled = "setting_x,setting_y,E\n1,1,-0.672\n0,1,0.671\n0,0,0.673\n1,0,0.675\n";
        assert_eq!(parse_hardware_csv(shuffled.as_bytes()).unwrap(), c);
    }

    #[test]
    fn malformed_files_name_the_line() {
        assert_eq!(line_of(""), 1);
        assert_eq!(line_of("x,y,E\n"), 1);
        assert_eq!(line_of(&BUNDLED.replace("0.671", "1.2")), 3);
        assert_eq!(line_of(&BUNDLED.replace("0.675", "abc")), 4);
        assert_eq!(line_of(&BUNDLED.replace("1,1,", "2,1,")), 5);
        assert_eq!(line_of(&BUNDLED.replace("1,1,", "0,0,")), 5);
        assert_eq!(line_of(&BUNDLED.replace("\n1,1,-0.672", "")), 5);
        assert_eq!(line_of(&BUNDLED.replace("0,1,0.671", "0,1,0.671,9")), 3);
        assert_eq!(line_of("setting_x,setting_y,E\n"), 2);
    }
}
