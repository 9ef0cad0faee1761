use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Mode;
use crate::error::{Error, Result};

/// Feature importances for one instance. `e` is zero outside the active set.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub instance_id: usize,
    pub mode: Mode,
    pub class: usize,
    pub k: usize,
    pub sigma: f64,
    pub n_samples: usize,
    pub features: Vec<String>,
    pub e: Vec<f64>,
    pub intercept: f64,
    pub local_r2: f64,
    pub r2_degenerate: bool,
}

impl Explanation {
    pub fn active(&self) -> Vec<usize> {
        (0..self.e.len()).filter(|&j| self.e[j] != 0.0).collect()
    }
}

/// Feature → value map that keeps column order on the wire.
struct Importances(Vec<(String, f64)>);

impl Serialize for Importances {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Importances {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Importances;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of feature names to numbers")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut a: A,
            ) -> std::result::Result<Importances, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = a.next_entry()? {
                    out.push(entry);
                }
                Ok(Importances(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    instance_id: usize,
    mode: Mode,
    class: usize,
    k: usize,
    sigma: f64,
    #[serde(rename = "N")]
    n_samples: usize,
    e: Importances,
    intercept: f64,
    local_r2: f64,
    #[serde(default)]
    r2_degenerate: bool,
}

impl Serialize for Explanation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Record {
            instance_id: self.instance_id,
            mode: self.mode,
            class: self.class,
            k: self.k,
            sigma: self.sigma,
            n_samples: self.n_samples,
            e: Importances(
                self.features
                    .iter()
                    .cloned()
                    .zip(self.e.iter().copied())
                    .collect(),
            ),
            intercept: self.intercept,
            local_r2: self.local_r2,
            r2_degenerate: self.r2_degenerate,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Explanation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = Record::deserialize(d)?;
        let (features, e) = r.e.0.into_iter().unzip();
        Ok(Explanation {
            instance_id: r.instance_id,
            mode: r.mode,
            class: r.class,
            k: r.k,
            sigma: r.sigma,
            n_samples: r.n_samples,
            features,
            e,
            intercept: r.intercept,
            local_r2: r.local_r2,
            r2_degenerate: r.r2_degenerate,
        })
    }
}

pub fn write_jsonl(path: impl AsRef<Path>, explanations: &[Explanation]) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for e in explanations {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Explanation>> {
    let path = path.as_ref();
    let r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keeps_feature_order() {
        let e = Explanation {
            instance_id: 7,
            mode: Mode::Calime,
            class: 1,
            k: 1,
            sigma: 1.5,
            n_samples: 10,
            features: vec!["zeta".into(), "alpha".into()],
            e: vec![0.25, 0.0],
            intercept: 0.5,
            local_r2: 0.9,
            r2_degenerate: false,
        };
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.find("zeta").unwrap() < s.find("alpha").unwrap());
        assert!(s.contains("\"N\":10"));
        let back: Explanation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.active(), vec![0]);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let e = Explanation {
            instance_id: 0,
            mode: Mode::Lime,
            class: 0,
            k: 2,
            sigma: 1.0,
            n_samples: 3,
            features: vec!["a".into(), "b".into()],
            e: vec![0.1, -0.2],
            intercept: 0.0,
            local_r2: 0.5,
            r2_degenerate: false,
        };
        write_jsonl(&p, &[e.clone(), e.clone()]).unwrap();
        assert_eq!(read_jsonl(&p).unwrap(), vec![e.clone(), e]);
    }
}
