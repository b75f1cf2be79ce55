//! Synthetic two-level hierarchy (superclass → class → instance) and its
//! CSV representation.
//!
//! Each sample is `g_s·u_super + g_c·u_class + g_i·v_instance + noise`,
//! where every `u`/`v` is a unit vector drawn once per entity. With the
//! default gains `1.0 / 0.5 / 0.25` the three levels carry strictly
//! decreasing energy, so a learned embedding has a recoverable hierarchy.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HaeError, Result};
use crate::io::fmt_f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierSpec {
    pub n_super: usize,
    pub classes_per_super: usize,
    pub per_class: usize,
    pub dim: usize,
    pub gain_super: f64,
    pub gain_class: f64,
    pub gain_style: f64,
    pub noise: f64,
    pub n_unseen_classes: usize,
    pub seed: u64,
}

impl Default for HierSpec {
    fn default() -> Self {
        HierSpec {
            n_super: 4,
            classes_per_super: 4,
            per_class: 128,
            dim: 64,
            gain_super: 1.0,
            gain_class: 0.5,
            gain_style: 0.25,
            noise: 0.02,
            n_unseen_classes: 4,
            seed: 0,
        }
    }
}

impl HierSpec {
    pub fn n_classes(&self) -> usize {
        self.n_super * self.classes_per_super
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_super", self.n_super),
            ("classes_per_super", self.classes_per_super),
            ("per_class", self.per_class),
            ("dim", self.dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(HaeError::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if self.n_unseen_classes >= self.n_classes() {
            return Err(HaeError::InvalidArgument(format!(
                "n_unseen_classes {} must be below the class count {}",
                self.n_unseen_classes,
                self.n_classes()
            )));
        }
        for (name, g) in [
            ("gain_super", self.gain_super),
            ("gain_class", self.gain_class),
            ("gain_style", self.gain_style),
            ("noise", self.noise),
        ] {
            if !g.is_finite() || g < 0.0 {
                return Err(HaeError::InvalidArgument(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Unseen classes are taken round-robin across superclasses, last class
    /// of each superclass first, so every superclass keeps seen siblings.
    pub fn unseen_classes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.n_unseen_classes)
            .map(|i| {
                let s = i % self.n_super;
                let within = self.classes_per_super - 1 - (i / self.n_super) % self.classes_per_super;
                s * self.classes_per_super + within
            })
            .collect();
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Seen,
    Unseen,
}

impl Split {
    pub fn token(self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "seen" => Some(Split::Seen),
            "unseen" => Some(Split::Unseen),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub superclass: usize,
    pub class: usize,
    pub split: Split,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierDataset {
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl HierDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Sorted class ids appearing in the given split.
    pub fn classes(&self, split: Split) -> Vec<usize> {
        let mut cs: Vec<usize> = self
            .samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.class)
            .collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }

    pub fn all_classes(&self) -> Vec<usize> {
        let mut cs: Vec<usize> = self.samples.iter().map(|s| s.class).collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }

    /// Maps global class id to a contiguous index over seen classes.
    pub fn seen_label_map(&self) -> BTreeMap<usize, usize> {
        self.classes(Split::Seen)
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect()
    }

    /// Per seen class, the first `1 - holdout` fraction of its samples (in
    /// file order) go to training and the rest are held out. Returns
    /// sample indices.
    pub fn holdout_split(&self, holdout: f64) -> (Vec<usize>, Vec<usize>) {
        self.holdout_split_by(holdout, |s| s.split == Split::Seen)
    }

    /// [`holdout_split`](Self::holdout_split) over the samples accepted by
    /// `keep`. Every class keeps at least one training sample.
    pub fn holdout_split_by(&self, holdout: f64, keep: impl Fn(&Sample) -> bool) -> (Vec<usize>, Vec<usize>) {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            if keep(s) {
                by_class.entry(s.class).or_default().push(i);
            }
        }
        let mut train = Vec::new();
        let mut held = Vec::new();
        for idx in by_class.values() {
            let n_held = ((idx.len() as f64) * holdout).round() as usize;
            let n_held = n_held.min(idx.len().saturating_sub(1));
            let cut = idx.len() - n_held;
            train.extend_from_slice(&idx[..cut]);
            held.extend_from_slice(&idx[cut..]);
        }
        train.sort_unstable();
        held.sort_unstable();
        (train, held)
    }

    fn validate(&self) -> Result<()> {
        let mut split_of: BTreeMap<usize, Split> = BTreeMap::new();
        for s in &self.samples {
            if s.features.len() != self.dim {
                return Err(HaeError::DimensionMismatch {
                    expected: self.dim,
                    found: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(HaeError::NonFinite {
                    op: format!("features of sample {}", s.id),
                });
            }
            if let Some(prev) = split_of.insert(s.class, s.split) {
                if prev != s.split {
                    return Err(HaeError::InvalidArgument(format!(
                        "class {} appears in both splits",
                        s.class
                    )));
                }
            }
        }
        Ok(())
    }
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Deterministic in `spec.seed`. Rows are ordered by (class, instance).
pub fn gen_hierarchy(spec: &HierSpec) -> Result<HierDataset> {
    spec.validate()?;
    let mut rng = stream(spec.seed, 0);
    let supers: Vec<Vec<f64>> = (0..spec.n_super).map(|_| unit_vector(spec.dim, &mut rng)).collect();
    let mut rng = stream(spec.seed, 1);
    let classes: Vec<Vec<f64>> = (0..spec.n_classes()).map(|_| unit_vector(spec.dim, &mut rng)).collect();
    let unseen = spec.unseen_classes();
    let noise = if spec.noise > 0.0 {
        Some(Normal::new(0.0, spec.noise).expect("positive sigma"))
    } else {
        None
    };

    let mut samples = Vec::with_capacity(spec.n_classes() * spec.per_class);
    for (k, u_class) in classes.iter().enumerate() {
        let s = k / spec.classes_per_super;
        let split = if unseen.binary_search(&k).is_ok() {
            Split::Unseen
        } else {
            Split::Seen
        };
        let mut rng = stream(spec.seed, 2 + k as u64);
        for _ in 0..spec.per_class {
            let style = unit_vector(spec.dim, &mut rng);
            let features = (0..spec.dim)
                .map(|d| {
                    let eps = noise.map_or(0.0, |n| n.sample(&mut rng));
                    spec.gain_super * supers[s][d] + spec.gain_class * u_class[d] + spec.gain_style * style[d] + eps
                })
                .collect();
            samples.push(Sample {
                id: samples.len(),
                superclass: s,
                class: k,
                split,
                features,
            });
        }
    }
    Ok(HierDataset { dim: spec.dim, samples })
}

pub fn write_dataset(ds: &HierDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset_to(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset_to<W: Write>(ds: &HierDataset, w: &mut W) -> Result<()> {
    let mut header = String::from("id,super,class,split");
    for d in 0..ds.dim {
        header.push_str(&format!(",f{d}"));
    }
    writeln!(w, "{header}")?;
    for s in &ds.samples {
        let mut line = format!("{},{},{},{}", s.id, s.superclass, s.class, s.split.token());
        for v in &s.features {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<HierDataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_dataset_from(file, path)
}

pub fn read_dataset_from<R: std::io::Read>(reader: R, path: &Path) -> Result<HierDataset> {
    let err = |line: usize, msg: String| HaeError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let fixed = ["id", "super", "class", "split"];
    if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h != f) {
        return Err(err(1, format!("header must start with {}", fixed.join(","))));
    }
    let dim = header.len() - fixed.len();
    for (d, h) in header.iter().skip(fixed.len()).enumerate() {
        if h != format!("f{d}") {
            return Err(err(1, format!("expected column f{d}, found `{h}`")));
        }
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| err(line, format!("column `{}`: `{}` is not an integer", fixed[i], &rec[i])))
        };
        let split = Split::parse(&rec[3]).ok_or_else(|| err(line, format!("unknown split token `{}`", &rec[3])))?;
        let features = rec
            .iter()
            .skip(fixed.len())
            .enumerate()
            .map(|(d, f)| {
                f.parse::<f64>()
                    .map_err(|_| err(line, format!("column f{d}: `{f}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample {
            id: int(0)?,
            superclass: int(1)?,
            class: int(2)?,
            split,
            features,
        });
    }
    let ds = HierDataset { dim, samples };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> HierSpec {
        HierSpec {
            per_class: 6,
            dim: 8,
            ..HierSpec::default()
        }
    }

    #[test]
    fn default_counts() {
        let ds = gen_hierarchy(&HierSpec::default()).unwrap();
        assert_eq!(ds.len(), 2048);
        assert_eq!(ds.classes(Split::Unseen).len(), 4);
        assert_eq!(ds.classes(Split::Seen).len(), 12);
        for c in ds.all_classes() {
            assert_eq!(ds.samples.iter().filter(|s| s.class == c).count(), 128);
        }
    }

    #[test]
    fn noiseless_classes_collapse() {
        let spec = HierSpec {
            noise: 0.0,
            gain_style: 0.0,
            ..small()
        };
        let ds = gen_hierarchy(&spec).unwrap();
        for c in ds.all_classes() {
            let rows: Vec<_> = ds.samples.iter().filter(|s| s.class == c).collect();
            assert!(rows.windows(2).all(|w| w[0].features == w[1].features));
        }
    }

    #[test]
    fn seeded_and_deterministic() {
        let a = gen_hierarchy(&small()).unwrap();
        let b = gen_hierarchy(&small()).unwrap();
        assert_eq!(a, b);
        let c = gen_hierarchy(&HierSpec { seed: 9, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unseen_never_in_seen_split() {
        let spec = HierSpec::default();
        let unseen = spec.unseen_classes();
        assert_eq!(unseen, vec![3, 7, 11, 15]);
        let ds = gen_hierarchy(&spec).unwrap();
        for s in &ds.samples {
            assert_eq!(s.split == Split::Unseen, unseen.contains(&s.class));
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(gen_hierarchy(&HierSpec {
            n_unseen_classes: 16,
            ..HierSpec::default()
        })
        .is_err());
        assert!(gen_hierarchy(&HierSpec {
            per_class: 0,
            ..HierSpec::default()
        })
        .is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let ds = gen_hierarchy(&small()).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&ds, &mut buf).unwrap();
        let back = read_dataset_from(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, ds);
    }

    fn parse(text: &str) -> Result<HierDataset> {
        read_dataset_from(text.as_bytes(), Path::new("x.csv"))
    }

    #[test]
    fn csv_errors_name_the_row() {
        let bad_header = "id,super,klass,split,f0\n0,0,0,seen,1.0\n";
        assert!(matches!(parse(bad_header), Err(HaeError::Parse { line: 1, .. })));
        let ragged = "id,super,class,split,f0,f1\n0,0,0,seen,1.0,2.0\n1,0,0,seen,1.0\n";
        match parse(ragged) {
            Err(HaeError::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("fields"));
            }
            other => panic!("{other:?}"),
        }
        let split = "id,super,class,split,f0\n0,0,0,maybe,1.0\n";
        assert!(matches!(parse(split), Err(HaeError::Parse { line: 2, .. })));
        let nan = "id,super,class,split,f0\n0,0,0,seen,abc\n";
        assert!(matches!(parse(nan), Err(HaeError::Parse { line: 2, .. })));
    }

    #[test]
    fn external_csv_loads() {
        let text = "id,super,class,split,f0,f1\n10,1,4,seen,0.5,-1\n11,1,5,unseen,3e-2,7\n";
        let ds = parse(text).unwrap();
        assert_eq!(ds.dim, 2);
        assert_eq!(ds.samples[1].features, vec![0.03, 7.0]);
        assert_eq!(ds.seen_label_map().get(&4), Some(&0));
    }

    #[test]
    fn holdout_keeps_every_class_in_training() {
        let ds = gen_hierarchy(&small()).unwrap();
        let (train, held) = ds.holdout_split(0.2);
        assert_eq!(
            train.len() + held.len(),
            ds.samples.iter().filter(|s| s.split == Split::Seen).count()
        );
        for c in ds.classes(Split::Seen) {
            assert!(train.iter().any(|&i| ds.samples[i].class == c));
        }
    }
}
