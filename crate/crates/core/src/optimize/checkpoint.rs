//! Versioned text checkpoints.
//!
//! ```text
//! flowlab-checkpoint v1
//! dim=<D> layers=<L+1>
//! layer <i> activation=<name>
//! <D rows of D weights>
//! <one row of D biases>
//! ...
//! ```
//!
//! Coupling stacks use `dim=<D> couplings=<K>` on line 2, then per coupling
//! a `coupling <i> d=<d> permutation=<p0,p1,..>` line followed by the scale
//! and shift networks (`net s layers=<n>` / `net t layers=<n>`), each layer
//! written as `dense <j> rows=<r> cols=<c> activation=<relu|identity>`, `r`
//! weight rows and one bias row. Floats carry 17 significant digits.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::datasets::format_float;
use crate::error::{Error, Result};
use crate::flow::{Activation, Bijection, FlowNetwork, Layer};
use crate::numlin::Matrix;
use crate::realnvp::{CouplingLayer, Mlp, MlpLayer, RealNvp};

const MAGIC: &str = "flowlab-checkpoint";
const VERSION: &str = "v1";

/// Any model a checkpoint can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dense(FlowNetwork),
    RealNvp(RealNvp),
}

impl From<FlowNetwork> for Model {
    fn from(n: FlowNetwork) -> Self {
        Model::Dense(n)
    }
}

impl From<RealNvp> for Model {
    fn from(n: RealNvp) -> Self {
        Model::RealNvp(n)
    }
}

impl Model {
    fn as_bijection(&self) -> &dyn Bijection {
        match self {
            Model::Dense(n) => n,
            Model::RealNvp(n) => n,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Dense(_) => "dense",
            Model::RealNvp(_) => "realnvp",
        }
    }
}

impl Bijection for Model {
    fn dim(&self) -> usize {
        self.as_bijection().dim()
    }
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.as_bijection().forward(x)
    }
    fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.as_bijection().inverse(y)
    }
    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.as_bijection().jacobian(x)
    }
    fn log_abs_det_jacobian(&self, x: &[f64]) -> Result<f64> {
        self.as_bijection().log_abs_det_jacobian(x)
    }
    fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        self.as_bijection().forward_with_jacobian(x)
    }
    fn forward_with_logdet(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.as_bijection().forward_with_logdet(x)
    }
}

fn push_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format_float(*v));
    }
    out.push('\n');
}

fn render_dense(net: &FlowNetwork) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "dim={} layers={}", net.dim(), net.layers().len());
    for (i, l) in net.layers().iter().enumerate() {
        let _ = writeln!(s, "layer {i} activation={}", l.activation.name());
        for r in l.weight.row_iter() {
            push_row(&mut s, r);
        }
        push_row(&mut s, &l.bias);
    }
    s
}

fn render_mlp(s: &mut String, tag: &str, mlp: &Mlp) {
    let _ = writeln!(s, "net {tag} layers={}", mlp.layers().len());
    for (j, l) in mlp.layers().iter().enumerate() {
        let act = if l.relu { "relu" } else { "identity" };
        let _ = writeln!(s, "dense {j} rows={} cols={} activation={act}", l.weight.rows(), l.weight.cols());
        for r in l.weight.row_iter() {
            push_row(s, r);
        }
        push_row(s, &l.bias);
    }
}

fn render_realnvp(net: &RealNvp) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "dim={} couplings={}", net.dim(), net.layers().len());
    for (i, l) in net.layers().iter().enumerate() {
        let perm: Vec<String> = l.permutation().iter().map(|p| p.to_string()).collect();
        let _ = writeln!(s, "coupling {i} d={} permutation={}", l.partition(), perm.join(","));
        render_mlp(&mut s, "s", l.s_net());
        render_mlp(&mut s, "t", l.t_net());
    }
    s
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &Model) -> Result<()> {
    let text = match model {
        Model::Dense(n) => render_dense(n),
        Model::RealNvp(n) => render_realnvp(n),
    };
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Writes the whole file in one go; nothing is created if rendering fails.
pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    write_checkpoint(std::fs::File::create(path)?, model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    read_checkpoint(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        let line =
            self.lines.get(self.pos).ok_or_else(|| Error::parse(self.pos + 1, "unexpected end of file"))?;
        self.pos += 1;
        Ok((self.pos, line.trim()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let (no, line) = self.next()?;
        let vals = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(no, format!("'{t}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != n {
            return Err(Error::parse(no, format!("expected {n} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.floats(cols)?);
        }
        Matrix::new(rows, cols, data)
    }

    fn finish(&mut self) -> Result<()> {
        while self.pos < self.lines.len() {
            let (no, line) = self.next()?;
            if !line.is_empty() {
                return Err(Error::parse(no, "unexpected content after the last layer"));
            }
        }
        Ok(())
    }
}

/// `key=value` fields of a header line after its leading words.
fn fields<'a>(no: usize, line: &'a str, words: &[&str]) -> Result<Vec<(&'a str, &'a str)>> {
    let mut parts = line.split_whitespace();
    for w in words {
        if parts.next() != Some(w) {
            return Err(Error::parse(no, format!("expected '{}', found '{line}'", words.join(" "))));
        }
    }
    parts
        .map(|p| p.split_once('=').ok_or_else(|| Error::parse(no, format!("malformed field '{p}'"))))
        .collect()
}

fn field<'a>(no: usize, fs: &[(&str, &'a str)], key: &str) -> Result<&'a str> {
    fs.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(no, format!("missing field '{key}'")))
}

fn count(no: usize, fs: &[(&str, &str)], key: &str) -> Result<usize> {
    let v = field(no, fs, key)?;
    v.parse().map_err(|_| Error::parse(no, format!("{key}={v} is not a count")))
}

pub fn read_checkpoint(text: &str) -> Result<Model> {
    let mut lines = Lines { lines: text.lines().collect(), pos: 0 };
    let (no, head) = lines.next()?;
    match head.split_whitespace().collect::<Vec<_>>()[..] {
        [MAGIC, VERSION] => {}
        [MAGIC, other] => return Err(Error::UnsupportedVersion(other.to_owned())),
        _ => return Err(Error::parse(no, "not a flowlab checkpoint")),
    }
    let (no, shape) = lines.next()?;
    let fs = fields(no, shape, &[])?;
    let dim = count(no, &fs, "dim")?;
    if dim == 0 {
        return Err(Error::parse(no, "dim must be positive"));
    }
    let model = if fs.iter().any(|(k, _)| *k == "couplings") {
        let n = count(no, &fs, "couplings")?;
        Model::RealNvp(read_couplings(&mut lines, dim, n)?)
    } else {
        let n = count(no, &fs, "layers")?;
        Model::Dense(read_dense(&mut lines, dim, n)?)
    };
    lines.finish()?;
    Ok(model)
}

fn read_dense(lines: &mut Lines<'_>, dim: usize, n: usize) -> Result<FlowNetwork> {
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let (no, head) = lines.next()?;
        let idx = i.to_string();
        let fs = fields(no, head, &["layer", &idx])?;
        let act: Activation =
            field(no, &fs, "activation")?.parse().map_err(|e: Error| Error::parse(no, e.to_string()))?;
        let weight = lines.matrix(dim, dim)?;
        let bias = lines.floats(dim)?;
        layers.push(Layer::new(weight, bias, act));
    }
    FlowNetwork::new(layers)
}

fn read_mlp(lines: &mut Lines<'_>, tag: &str) -> Result<Mlp> {
    let (no, head) = lines.next()?;
    let fs = fields(no, head, &["net", tag])?;
    let n = count(no, &fs, "layers")?;
    let mut layers = Vec::with_capacity(n);
    for j in 0..n {
        let (no, head) = lines.next()?;
        let idx = j.to_string();
        let fs = fields(no, head, &["dense", &idx])?;
        let rows = count(no, &fs, "rows")?;
        let cols = count(no, &fs, "cols")?;
        let relu = match field(no, &fs, "activation")? {
            "relu" => true,
            "identity" => false,
            other => return Err(Error::parse(no, format!("unknown activation '{other}'"))),
        };
        let weight = lines.matrix(rows, cols)?;
        let bias = lines.floats(rows)?;
        layers.push(MlpLayer { weight, bias, relu });
    }
    Mlp::new(layers).map_err(|e| Error::parse(no, e.to_string()))
}

fn read_couplings(lines: &mut Lines<'_>, dim: usize, n: usize) -> Result<RealNvp> {
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let (no, head) = lines.next()?;
        let idx = i.to_string();
        let fs = fields(no, head, &["coupling", &idx])?;
        let d = count(no, &fs, "d")?;
        let perm = field(no, &fs, "permutation")?
            .split(',')
            .map(|p| p.parse::<usize>().map_err(|_| Error::parse(no, format!("bad permutation entry '{p}'"))))
            .collect::<Result<Vec<_>>>()?;
        let s = read_mlp(lines, "s")?;
        let t = read_mlp(lines, "t")?;
        layers.push(CouplingLayer::new(dim, d, s, t, perm).map_err(|e| Error::parse(no, e.to_string()))?);
    }
    RealNvp::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::Trainable;
    use crate::rng::GaussianRng;

    fn perturbed_realnvp() -> RealNvp {
        let mut net = RealNvp::stack(3, 2, 1, 4, 1).unwrap();
        let mut rng = GaussianRng::new(2);
        let p: Vec<f64> = net.params().iter().map(|_| rng.normal() / 3.0).collect();
        net.set_params(&p).unwrap();
        net
    }

    fn round_trip(model: &Model) -> Model {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, model).unwrap();
        read_checkpoint(std::str::from_utf8(&buf).unwrap()).unwrap()
    }

    #[test]
    fn dense_round_trip_is_bit_exact() {
        let net = FlowNetwork::random(3, 4, Activation::Asinh, 9).unwrap();
        let mut p = net.params();
        p[0] = 1.0 / 3.0;
        p[1] = -2.5e-308;
        let mut net2 = net.clone();
        net2.set_params(&p).unwrap();
        let back = round_trip(&Model::Dense(net2.clone()));
        match back {
            Model::Dense(b) => {
                let bp = b.params();
                assert!(bp.iter().zip(&p).all(|(a, b)| a.to_bits() == b.to_bits()));
                assert_eq!(b, net2);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn realnvp_round_trip_is_bit_exact() {
        let net = perturbed_realnvp();
        let back = round_trip(&Model::RealNvp(net.clone()));
        assert_eq!(back, Model::RealNvp(net));
    }

    #[test]
    fn header_format() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &Model::Dense(FlowNetwork::identity(2))).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "flowlab-checkpoint v1");
        assert_eq!(lines[1], "dim=2 layers=1");
        assert_eq!(lines[2], "layer 0 activation=identity");
        assert_eq!(lines[3], "1.0000000000000000e0 0.0000000000000000e0");
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let mut buf = Vec::new();
        let net = FlowNetwork::random(2, 2, Activation::Asinh, 1).unwrap();
        write_checkpoint(&mut buf, &Model::Dense(net)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        match read_checkpoint(&cut) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let short_row = text.replacen(" 0.0000000000000000e0\n", "\n", 1);
        assert!(matches!(read_checkpoint(&short_row), Err(Error::Parse { .. })));
    }

    #[test]
    fn version_and_magic() {
        let v2 = "flowlab-checkpoint v2\ndim=1 layers=1\n";
        assert!(matches!(read_checkpoint(v2), Err(Error::UnsupportedVersion(v)) if v == "v2"));
        assert!(matches!(read_checkpoint("hello\n"), Err(Error::Parse { line: 1, .. })));
        assert!(read_checkpoint("").is_err());
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &Model::Dense(FlowNetwork::identity(1))).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("layer 1 activation=asinh\n");
        assert!(read_checkpoint(&text).is_err());
    }

    #[test]
    fn model_delegates() {
        let net = perturbed_realnvp();
        let m = Model::from(net.clone());
        let x = [0.1, 0.2, -0.3];
        assert_eq!(m.forward(&x).unwrap(), net.forward(&x).unwrap());
        assert_eq!(m.kind(), "realnvp");
        assert_eq!(m.dim(), 3);
    }
}
