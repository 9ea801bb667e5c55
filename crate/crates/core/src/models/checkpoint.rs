//! Binary checkpoints: a short text header followed by little-endian `f64`s.
//!
//! ```text
//! varphys-checkpoint 1
//! key=value
//! ...
//! count=N
//! end
//! <N × 8 bytes>
//! ```

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::models::mlp::{Activation, Mlp, MlpShape};
use crate::scalar::Scalar;

const MAGIC: &str = "varphys-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Vec<(String, String)>,
    pub values: Vec<f64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            header: Vec::new(),
            values,
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut text = format!("{MAGIC}\n");
        for (k, v) in &self.header {
            if k.contains(['=', '\n']) || v.contains('\n') || k == "count" || k == "end" {
                return Err(bad(format!("invalid header entry `{k}`")));
            }
            text.push_str(&format!("{k}={v}\n"));
        }
        text.push_str(&format!("count={}\nend\n", self.values.len()));
        let io = |e: std::io::Error| bad(e.to_string());
        w.write_all(text.as_bytes()).map_err(io)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let io = |e: std::io::Error| bad(e.to_string());
        r.read_line(&mut line).map_err(io)?;
        if line.trim_end() != MAGIC {
            return Err(bad("missing checkpoint header"));
        }
        let mut header = Vec::new();
        let mut count = None;
        loop {
            line.clear();
            if r.read_line(&mut line).map_err(io)? == 0 {
                return Err(bad("truncated header"));
            }
            let l = line.trim_end_matches('\n');
            if l == "end" {
                break;
            }
            let (k, v) = l.split_once('=').ok_or_else(|| bad(format!("malformed header line `{l}`")))?;
            if k == "count" {
                count = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?);
            } else {
                header.push((k.to_string(), v.to_string()));
            }
        }
        let count = count.ok_or_else(|| bad("header lacks count"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(io)?;
        if bytes.len() != count * 8 {
            return Err(bad(format!("expected {} payload bytes, found {}", count * 8, bytes.len())));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { header, values })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}

fn join<I: IntoIterator<Item = S>, S: ToString>(xs: I) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl<T: Scalar> Mlp<T> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.params().iter().map(|v| v.to_f64_lossy()).collect())
            .with("widths", join(self.shape().widths()))
            .with("activations", join(self.shape().activations()))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let widths = ckpt
            .get("widths")
            .ok_or_else(|| bad("missing widths"))?
            .split(',')
            .map(|w| w.parse::<usize>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let acts = ckpt
            .get("activations")
            .ok_or_else(|| bad("missing activations"))?
            .split(',')
            .map(|a| a.parse::<Activation>())
            .collect::<Result<Vec<_>>>()?;
        let shape = MlpShape::new(widths, acts)?;
        Mlp::new(shape, ckpt.values.iter().map(|&v| T::of(v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::rng::RandomStream;

    #[test]
    fn mlp_round_trip_is_bit_exact() {
        let shape = MlpShape::dense(2, &[7, 3], 2, Activation::Softplus).unwrap();
        let net = Mlp::<f64>::init(shape, &RandomStream::new(9, 1));
        let bytes = net.to_checkpoint().to_bytes().unwrap();
        let back = Mlp::<f64>::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, net);
        let x = [0.3, -0.8];
        assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = Checkpoint::new(vec![1.0, 2.0]).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense\n").is_err());
    }
}
