//! Plain-text weight files.
//!
//! ```text
//! bellforge-mlp v1
//! <layer count>
//! <out> <in> <activation>
//! <out·in weights, row-major, one per line>
//! <out biases, one per line>
//! ...
//! ```
//!
//! Values are written with 17 significant digits, so a save/load round trip
//! reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::{Activation, Layer, Mlp, NetError};

pub const MAGIC: &str = "bellforge-mlp v1";

const MAX_LAYERS: usize = 1024;
const MAX_WIDTH: usize = 1 << 16;

pub fn mlp_to_text(net: &Mlp) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "{}", net.layers.len());
    for l in &net.layers {
        let _ = writeln!(s, "{} {} {}", l.outputs, l.inputs, l.activation);
        for v in l.weights.iter().chain(&l.biases) {
            let _ = writeln!(s, "{v:.16e}");
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, NetError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l.trim_end_matches('\r'))
            }
            None => Err(NetError::Parse { line: self.last + 1, message: format!("unexpected end of file, expected {what}") }),
        }
    }

    fn err(&self, message: impl Into<String>) -> NetError {
        NetError::Parse { line: self.last, message: message.into() }
    }

    fn count(&mut self, what: &str, max: usize) -> Result<usize, NetError> {
        let tok = self.next(what)?;
        let n: usize = tok.trim().parse().map_err(|_| self.err(format!("{what} {tok:?} is not a count")))?;
        if n == 0 || n > max {
            return Err(self.err(format!("{what} {n} outside 1..={max}")));
        }
        Ok(n)
    }

    fn value(&mut self) -> Result<f64, NetError> {
        let tok = self.next("parameter value")?;
        let v: f64 = tok.trim().parse().map_err(|_| self.err(format!("{tok:?} is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite parameter {tok:?}")));
        }
        Ok(v)
    }
}

pub fn mlp_from_text(text: &str) -> Result<Mlp, NetError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let magic = lines.next("header")?;
    if magic != MAGIC {
        return Err(lines.err(format!("expected header {MAGIC:?}, found {magic:?}")));
    }
    let n_layers = lines.count("layer count", MAX_LAYERS)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let spec = lines.next("layer header")?;
        let parts: Vec<&str> = spec.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(lines.err(format!("layer header needs `out in activation`, found {spec:?}")));
        }
        let dim = |tok: &str, what: &str| -> Result<usize, NetError> {
            match tok.parse::<usize>() {
                Ok(n) if (1..=MAX_WIDTH).contains(&n) => Ok(n),
                _ => Err(lines.err(format!("{what} {tok:?} outside 1..={MAX_WIDTH}"))),
            }
        };
        let outputs = dim(parts[0], "output width")?;
        let inputs = dim(parts[1], "input width")?;
        let activation: Activation = parts[2].parse().map_err(|e: NetError| lines.err(e.to_string()))?;
        // Values are read one by one so a lying header cannot force a huge allocation.
        let mut weights = Vec::new();
        for _ in 0..outputs * inputs {
            weights.push(lines.value()?);
        }
        let mut biases = Vec::new();
        for _ in 0..outputs {
            biases.push(lines.value()?);
        }
        layers.push(Layer::new(outputs, inputs, weights, biases, activation)?);
    }
    for (i, rest) in lines.inner.by_ref() {
        if !rest.trim().is_empty() {
            return Err(NetError::Parse { line: i + 1, message: "trailing content after last layer".into() });
        }
    }
    Mlp::new(layers).map_err(|e| match e {
        NetError::Dimension { .. } => NetError::Parse { line: 0, message: e.to_string() },
        other => other,
    })
}

pub fn save_mlp(net: &Mlp, path: &Path) -> Result<(), NetError> {
    std::fs::write(path, mlp_to_text(net))?;
    Ok(())
}

pub fn load_mlp(path: &Path) -> Result<Mlp, NetError> {
    mlp_from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn sample_net() -> Mlp {
        let mut rng = seed::stream(7, "io", 0);
        Mlp::glorot(&[4, 6, 3], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = sample_net();
        net.layers_mut()[0].biases_mut()[0] = -0.0;
        net.layers_mut()[1].biases_mut()[2] = 1e-300;
        net.layers_mut()[1].weights_mut()[0] = 0.1 + 0.2;
        let text = mlp_to_text(&net);
        let back = mlp_from_text(&text).unwrap();
        let bits = |n: &Mlp| n.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&net), bits(&back));
        assert_eq!(mlp_to_text(&back), text);
    }

    #[test]
    fn layout() {
        let net = Mlp::new(vec![Layer::new(1, 2, vec![0.5, -1.0], vec![0.25], Activation::Sigmoid).unwrap()]).unwrap();
        assert_eq!(
            mlp_to_text(&net),
            "bellforge-mlp v1\n1\n1 2 sigmoid\n5.0000000000000000e-1\n-1.0000000000000000e0\n2.5000000000000000e-1\n"
        );
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let net = sample_net();
        save_mlp(&net, &path).unwrap();
        assert_eq!(load_mlp(&path).unwrap(), net);
    }

    #[test]
    fn rejects_malformed_files() {
        let good = mlp_to_text(&sample_net());
        let cases = [
            good.replacen("v1", "v2", 1),
            good.replacen("\n2\n", "\n0\n", 1),
            good.replacen("relu", "swish", 1),
            good.replacen("6 4 relu", "6 4", 1),
            good.replacen("6 4 relu", "5 4 relu", 1),
            format!("{good}1.0\n"),
            good.lines().take(10).collect::<Vec<_>>().join("\n"),
        ];
        for bad in &cases {
            assert!(mlp_from_text(bad).is_err(), "accepted:\n{bad}");
        }
        let nan = good.replacen(&good.lines().nth(3).unwrap().to_string(), "NaN", 1);
        assert!(matches!(mlp_from_text(&nan), Err(NetError::Parse { line: 4, .. })));
    }
}
