//! Text checkpoints for [`DenseNet`]s.
//!
//! ```text
//! pivotal-checkpoint 1
//! layers 2 20 20 1
//! activations tanh relu sigmoid
//! head mixture:5            (optional; adversaries only)
//! params 481
//! <one parameter per line, in canonical order>
//! ```
//!
//! Parameters are written with Rust's shortest round-trip formatting, so
//! reading a checkpoint back reproduces every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::adversary::AdversaryKind;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNet};

const MAGIC: &str = "pivotal-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: DenseNet,
    pub head: Option<AdversaryKind>,
}

impl Checkpoint {
    pub fn classifier(net: DenseNet) -> Self {
        Checkpoint { net, head: None }
    }

    pub fn adversary(net: DenseNet, kind: AdversaryKind) -> Self {
        Checkpoint {
            net,
            head: Some(kind),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\nlayers");
        for s in self.net.layer_sizes() {
            write!(out, " {s}").unwrap();
        }
        out.push_str("\nactivations");
        for a in self.net.activations() {
            write!(out, " {a}").unwrap();
        }
        out.push('\n');
        if let Some(kind) = self.head {
            writeln!(out, "head {kind}").unwrap();
        }
        writeln!(out, "params {}", self.net.params().len()).unwrap();
        for p in self.net.params() {
            writeln!(out, "{p:?}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i as u64 + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Schema(format!("checkpoint truncated before {what}")))
        };
        let parse_err = |line: u64, detail: String| Error::Parse { line, detail };

        let (n, header) = next("header")?;
        match header.split_once(' ') {
            Some((MAGIC, v)) if v.parse::<u32>() == Ok(VERSION) => {}
            _ => return Err(parse_err(n, format!("expected `{MAGIC} {VERSION}`"))),
        }

        let (n, line) = next("layers")?;
        let sizes = line
            .strip_prefix("layers")
            .ok_or_else(|| parse_err(n, "expected `layers`".into()))?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(n, e.to_string())))
            .collect::<Result<Vec<_>>>()?;

        let (n, line) = next("activations")?;
        let activations = line
            .strip_prefix("activations")
            .ok_or_else(|| parse_err(n, "expected `activations`".into()))?
            .split_whitespace()
            .map(|t| {
                t.parse::<Activation>()
                    .map_err(|e| parse_err(n, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;

        let (mut n, mut line) = next("params")?;
        let mut head = None;
        if let Some(kind) = line.strip_prefix("head ") {
            head = Some(
                kind.parse::<AdversaryKind>()
                    .map_err(|e| parse_err(n, e.to_string()))?,
            );
            (n, line) = next("params")?;
        }
        let count: usize = line
            .strip_prefix("params ")
            .ok_or_else(|| parse_err(n, "expected `params <count>`".into()))?
            .parse()
            .map_err(|_| parse_err(n, "bad parameter count".into()))?;

        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = next("end of parameters")?;
            params.push(
                line.parse::<f64>()
                    .map_err(|e| parse_err(n, e.to_string()))?,
            );
        }
        let net = DenseNet::new(sizes, activations, params)?;
        if let Some(kind) = head {
            kind.check(&net)?;
        }
        Ok(Checkpoint { net, head })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Activation::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = DenseNet::init(vec![1, 5, 6], vec![Tanh, Linear], 3).unwrap();
        net.params_mut()[0] = 1e-300;
        net.params_mut()[1] = -0.1 - 0.2;
        net.params_mut()[2] = f64::MIN_POSITIVE / 3.0;
        let ck = Checkpoint::adversary(net, AdversaryKind::Mixture { components: 2 });
        let back = Checkpoint::parse(&ck.to_text()).unwrap();
        assert_eq!(back.head, ck.head);
        let bits = |c: &Checkpoint| {
            c.net
                .params()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&ck));
        assert_eq!(back, ck);
    }

    #[test]
    fn classifier_has_no_head_line() {
        let net = DenseNet::zeros(vec![2, 1], vec![Sigmoid]).unwrap();
        let text = Checkpoint::classifier(net).to_text();
        assert!(!text.contains("head"));
        assert!(Checkpoint::parse(&text).unwrap().head.is_none());
    }

    #[test]
    fn malformed_checkpoints() {
        let net = DenseNet::zeros(vec![2, 1], vec![Sigmoid]).unwrap();
        let text = Checkpoint::classifier(net).to_text();
        assert!(matches!(
            Checkpoint::parse(&text.replace("pivotal-checkpoint 1", "pivotal-checkpoint 9")),
            Err(Error::Parse { line: 1, .. })
        ));
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            Checkpoint::parse(&truncated),
            Err(Error::Schema(_))
        ));
        let garbled = text.replacen("0.0", "zero", 1);
        assert!(matches!(
            Checkpoint::parse(&garbled),
            Err(Error::Parse { line: 5, .. })
        ));
    }
}
