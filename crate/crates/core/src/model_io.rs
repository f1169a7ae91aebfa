//! Versioned plain-text model files.
//!
//! Every file starts with `keydetect-model 1` and a `kind` line. The rest is
//! `key value...` lines, one logical record per line, with numbers written in
//! shortest round-trip form so that reading a file back reproduces the model
//! exactly. Layouts per kind:
//!
//! * `stat-detector`: `detector`, `dim`, `count`, `z_threshold`, `mean`,
//!   `std`, `mad`, then `cov_inverse none` or `cov_inverse` followed by the
//!   row-major `dim × dim` inverse.
//! * `ocsvm`: `dim`, `nu`, `gamma`, `rho`, `kkt_residual`, `iterations`, the
//!   standardizer (`scale_mean`, `scale_sd`), `support_vectors m`, then `m`
//!   lines `sv alpha x_1 … x_dim`.
//! * `nn-classifier`: labels, standardizer, `input` shape, `layers n`, then per
//!   layer a `layer` spec line (`dense in out`, `conv1d in out kernel
//!   padding`, `relu`, `flatten`) and a `params count v…` line.
//! * `forest`: labels, `features d`, `trees n`, then per tree `tree m`
//!   followed by `m` node lines (`split feature threshold left right` or
//!   `leaf count_0 … count_k`).
//! * `linear-svm`: labels, standardizer, `lambda`, `objective_trace`, then one
//!   `class bias w_1 … w_d` line per class.
//!
//! Labels are written as `labels k` followed by `k` lines `label name`.

use std::io::{Read, Write};
use std::str::FromStr;

use crate::classifiers::forest::{Node, Tree};
use crate::classifiers::{ForestModel, LinearSvmModel, NnClassifier, TrainedModel};
use crate::detectors::ocsvm::{OcSvmDetector, OcSvmModel};
use crate::detectors::{DetectorKind, StatDetectorModel};
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::nn::{LayerSpec, Network};
use crate::scalar::Scalar;
use crate::stats::{ColumnStats, Standardizer};

pub const MAGIC: &str = "keydetect-model";
pub const VERSION: u32 = 1;

fn join<T: Scalar>(values: &[T]) -> String {
    values.iter().map(|v| v.as_f64().to_string()).collect::<Vec<_>>().join(" ")
}

fn put<W: Write>(w: &mut W, key: &str, rest: impl std::fmt::Display) -> Result<()> {
    writeln!(w, "{key} {rest}")?;
    Ok(())
}

fn header<W: Write>(w: &mut W, kind: &str) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    put(w, "kind", kind)
}

struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Format(format!("line {}: {msg}", self.line))
    }

    /// Returns the remainder of the next line after `key `.
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let (i, line) = self.lines.next().ok_or_else(|| Error::Format(format!("missing {key:?} line")))?;
        self.line = i + 1;
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(self.err(format!("expected {key:?}, found {k:?}")));
        }
        Ok(rest)
    }

    fn parse<V: FromStr>(&self, s: &str) -> Result<V> {
        s.parse().map_err(|_| self.err(format!("bad value {s:?}")))
    }

    fn one<V: FromStr>(&mut self, key: &str) -> Result<V> {
        let rest = self.field(key)?;
        self.parse(rest.trim())
    }

    fn numbers<T: Scalar>(&self, rest: &str) -> Result<Vec<T>> {
        rest.split_whitespace()
            .map(|s| {
                let v: f64 = self.parse(s)?;
                if !v.is_finite() {
                    return Err(self.err("non-finite value"));
                }
                Ok(T::lit(v))
            })
            .collect()
    }

    fn vector<T: Scalar>(&mut self, key: &str, len: usize) -> Result<Vec<T>> {
        let rest = self.field(key)?;
        let v = self.numbers(rest)?;
        if v.len() != len {
            return Err(self.err(format!("{key} has {} values, expected {len}", v.len())));
        }
        Ok(v)
    }

    fn scalar<T: Scalar>(&mut self, key: &str) -> Result<T> {
        Ok(self.vector(key, 1)?[0])
    }

    fn end(&mut self) -> Result<()> {
        match self.lines.find(|(_, l)| !l.trim().is_empty()) {
            None => Ok(()),
            Some((i, _)) => Err(Error::Format(format!("line {}: trailing content", i + 1))),
        }
    }
}

fn open<'a>(text: &'a str, kind: &str) -> Result<Cursor<'a>> {
    let mut c = Cursor::new(text);
    let version: u32 = c.one(MAGIC)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let found: String = c.one("kind")?;
    if found != kind {
        return Err(Error::Format(format!("expected a {kind} model, found {found}")));
    }
    Ok(c)
}

fn read_text<R: Read>(mut r: R) -> Result<String> {
    let mut s = String::new();
    r.read_to_string(&mut s)?;
    Ok(s)
}

/// Reads just the `kind` of a model file.
pub fn peek_kind(text: &str) -> Result<String> {
    let mut c = Cursor::new(text);
    let _: u32 = c.one(MAGIC)?;
    c.one("kind")
}

fn write_labels<W: Write>(w: &mut W, labels: &[String]) -> Result<()> {
    put(w, "labels", labels.len())?;
    for l in labels {
        put(w, "label", l)?;
    }
    Ok(())
}

fn read_labels(c: &mut Cursor<'_>) -> Result<Vec<String>> {
    let n: usize = c.one("labels")?;
    (0..n).map(|_| c.field("label").map(str::to_string)).collect()
}

fn write_standardizer<W: Write, T: Scalar>(w: &mut W, s: &Standardizer<T>) -> Result<()> {
    put(w, "scale_dim", s.dim())?;
    put(w, "scale_mean", join(&s.mean))?;
    put(w, "scale_sd", join(&s.scale))
}

fn read_standardizer<T: Scalar>(c: &mut Cursor<'_>) -> Result<Standardizer<T>> {
    let d: usize = c.one("scale_dim")?;
    Ok(Standardizer {
        mean: c.vector("scale_mean", d)?,
        scale: c.vector("scale_sd", d)?,
    })
}

pub fn write_stat_detector<T: Scalar, W: Write>(m: &StatDetectorModel<T>, mut w: W) -> Result<()> {
    header(&mut w, "stat-detector")?;
    put(&mut w, "detector", m.kind.tag())?;
    put(&mut w, "dim", m.dim())?;
    put(&mut w, "count", m.stats.count)?;
    put(&mut w, "z_threshold", m.z_threshold.as_f64())?;
    put(&mut w, "mean", join(&m.stats.mean))?;
    put(&mut w, "std", join(&m.stats.std))?;
    put(&mut w, "mad", join(&m.stats.mad))?;
    match &m.cov_inverse {
        Some(inv) => put(&mut w, "cov_inverse", join(inv.as_slice()))?,
        None => put(&mut w, "cov_inverse", "none")?,
    }
    Ok(())
}

pub fn read_stat_detector<T: Scalar, R: Read>(r: R) -> Result<StatDetectorModel<T>> {
    let text = read_text(r)?;
    let mut c = open(&text, "stat-detector")?;
    let kind: DetectorKind = c.field("detector")?.parse()?;
    let d: usize = c.one("dim")?;
    let count: usize = c.one("count")?;
    let z_threshold = c.scalar("z_threshold")?;
    let stats = ColumnStats {
        mean: c.vector("mean", d)?,
        std: c.vector("std", d)?,
        mad: c.vector("mad", d)?,
        count,
    };
    let rest = c.field("cov_inverse")?;
    let cov_inverse = if rest.trim() == "none" {
        None
    } else {
        let v = c.numbers(rest)?;
        Some(SquareMatrix::from_row_major(d, v).map_err(|_| c.err("cov_inverse has the wrong size"))?)
    };
    if cov_inverse.is_some() != kind.needs_covariance() {
        return Err(c.err(format!("{kind} model with mismatched cov_inverse")));
    }
    c.end()?;
    Ok(StatDetectorModel {
        kind,
        stats,
        cov_inverse,
        z_threshold,
    })
}

pub fn write_ocsvm<T: Scalar, W: Write>(det: &OcSvmDetector<T>, mut w: W) -> Result<()> {
    let m = &det.model;
    header(&mut w, "ocsvm")?;
    put(&mut w, "dim", m.dim())?;
    put(&mut w, "nu", m.nu.as_f64())?;
    put(&mut w, "gamma", m.gamma.as_f64())?;
    put(&mut w, "rho", m.rho.as_f64())?;
    put(&mut w, "kkt_residual", m.kkt_residual.as_f64())?;
    put(&mut w, "iterations", m.iterations)?;
    write_standardizer(&mut w, &det.standardizer)?;
    put(&mut w, "support_vectors", m.support_vectors.len())?;
    for (sv, a) in m.support_vectors.iter().zip(&m.alphas) {
        put(&mut w, "sv", format!("{} {}", a.as_f64(), join(sv)))?;
    }
    Ok(())
}

pub fn read_ocsvm<T: Scalar, R: Read>(r: R) -> Result<OcSvmDetector<T>> {
    let text = read_text(r)?;
    let mut c = open(&text, "ocsvm")?;
    let d: usize = c.one("dim")?;
    let nu = c.scalar("nu")?;
    let gamma = c.scalar("gamma")?;
    let rho = c.scalar("rho")?;
    let kkt_residual = c.scalar("kkt_residual")?;
    let iterations: usize = c.one("iterations")?;
    let standardizer = read_standardizer(&mut c)?;
    let m: usize = c.one("support_vectors")?;
    let mut support_vectors = Vec::with_capacity(m);
    let mut alphas = Vec::with_capacity(m);
    for _ in 0..m {
        let mut v: Vec<T> = c.vector("sv", d + 1)?;
        alphas.push(v.remove(0));
        support_vectors.push(v);
    }
    c.end()?;
    if standardizer.dim() != d {
        return Err(Error::Format("standardizer and model dimensions differ".into()));
    }
    Ok(OcSvmDetector {
        standardizer,
        model: OcSvmModel {
            support_vectors,
            alphas,
            rho,
            gamma,
            nu,
            kkt_residual,
            iterations,
        },
    })
}

fn write_network<W: Write, T: Scalar>(w: &mut W, net: &Network<T>) -> Result<()> {
    put(w, "input", net.input_shape().iter().map(usize::to_string).collect::<Vec<_>>().join(" "))?;
    put(w, "layers", net.specs().len())?;
    for (spec, p) in net.specs().iter().zip(net.params()) {
        let line = match *spec {
            LayerSpec::Dense { input, output } => format!("dense {input} {output}"),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => format!("conv1d {in_channels} {out_channels} {kernel} {padding}"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::Flatten => "flatten".into(),
        };
        put(w, "layer", line)?;
        if p.is_empty() {
            put(w, "params", 0)?;
        } else {
            put(w, "params", format!("{} {}", p.len(), join(p)))?;
        }
    }
    Ok(())
}

fn read_network<T: Scalar>(c: &mut Cursor<'_>) -> Result<Network<T>> {
    let input_shape = c
        .field("input")?
        .split_whitespace()
        .map(|s| c.parse::<usize>(s))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = c.one("layers")?;
    let mut specs = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let rest = c.field("layer")?;
        let parts: Vec<&str> = rest.split_whitespace().collect();
        let nums = |c: &Cursor<'_>| parts[1..].iter().map(|s| c.parse::<usize>(s)).collect::<Result<Vec<_>>>();
        let spec = match (parts.first().copied(), nums(c)?.as_slice()) {
            (Some("dense"), &[input, output]) => LayerSpec::Dense { input, output },
            (Some("conv1d"), &[in_channels, out_channels, kernel, padding]) => LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                padding,
            },
            (Some("relu"), &[]) => LayerSpec::Relu,
            (Some("flatten"), &[]) => LayerSpec::Flatten,
            _ => return Err(c.err(format!("bad layer spec {rest:?}"))),
        };
        let rest = c.field("params")?;
        let (count, values) = rest.split_once(' ').unwrap_or((rest, ""));
        let count: usize = c.parse(count)?;
        let p: Vec<T> = c.numbers(values)?;
        if p.len() != count {
            return Err(c.err("parameter count mismatch"));
        }
        specs.push(spec);
        params.push(p);
    }
    Network::from_parts(input_shape, specs, params)
}

fn write_forest_body<W: Write, T: Scalar>(w: &mut W, m: &ForestModel<T>) -> Result<()> {
    put(w, "features", m.n_features)?;
    put(w, "trees", m.trees.len())?;
    for t in &m.trees {
        put(w, "tree", t.nodes.len())?;
        for n in &t.nodes {
            match n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => put(w, "split", format!("{feature} {} {left} {right}", threshold.as_f64()))?,
                Node::Leaf { counts } => put(
                    w,
                    "leaf",
                    counts.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
                )?,
            }
        }
    }
    Ok(())
}

fn read_forest_body<T: Scalar>(c: &mut Cursor<'_>, label_map: Vec<String>) -> Result<ForestModel<T>> {
    let n_classes = label_map.len();
    let n_features: usize = c.one("features")?;
    let n_trees: usize = c.one("trees")?;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let m: usize = c.one("tree")?;
        let mut nodes = Vec::with_capacity(m);
        for _ in 0..m {
            let (i, line) = c.lines.next().ok_or_else(|| Error::Format("truncated tree".into()))?;
            c.line = i + 1;
            let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let node = match (k, parts.as_slice()) {
                ("split", &[f, t, l, r]) => {
                    let feature: usize = c.parse(f)?;
                    let (left, right): (usize, usize) = (c.parse(l)?, c.parse(r)?);
                    if feature >= n_features || left >= m || right >= m {
                        return Err(c.err("split references out of range"));
                    }
                    Node::Split {
                        feature,
                        threshold: T::lit(c.parse::<f64>(t)?),
                        left,
                        right,
                    }
                }
                ("leaf", counts) if counts.len() == n_classes => Node::Leaf {
                    counts: counts.iter().map(|s| c.parse(s)).collect::<Result<_>>()?,
                },
                _ => return Err(c.err(format!("bad tree node {line:?}"))),
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    Ok(ForestModel {
        trees,
        n_classes,
        n_features,
        label_map,
    })
}

/// Writes any trained classifier.
pub fn write_classifier<T: Scalar, W: Write>(model: &TrainedModel<T>, mut w: W) -> Result<()> {
    match model {
        TrainedModel::Nn(m) => {
            header(&mut w, "nn-classifier")?;
            write_labels(&mut w, &m.label_map)?;
            write_standardizer(&mut w, &m.standardizer)?;
            write_network(&mut w, &m.network)
        }
        TrainedModel::Forest(m) => {
            header(&mut w, "forest")?;
            write_labels(&mut w, &m.label_map)?;
            write_forest_body(&mut w, m)
        }
        TrainedModel::Svm(m) => {
            header(&mut w, "linear-svm")?;
            write_labels(&mut w, &m.label_map)?;
            write_standardizer(&mut w, &m.standardizer)?;
            put(&mut w, "lambda", m.lambda)?;
            put(&mut w, "objective_trace", format!("{} {}", m.objective_trace.len(), join(&m.objective_trace)))?;
            for (wj, b) in m.weights.iter().zip(&m.biases) {
                put(&mut w, "class", format!("{} {}", b.as_f64(), join(wj)))?;
            }
            Ok(())
        }
    }
}

pub fn read_classifier<T: Scalar, R: Read>(r: R) -> Result<TrainedModel<T>> {
    let text = read_text(r)?;
    let kind = peek_kind(&text)?;
    let mut c = open(&text, &kind)?;
    let labels = read_labels(&mut c)?;
    let model = match kind.as_str() {
        "nn-classifier" => {
            let standardizer = read_standardizer(&mut c)?;
            let network = read_network(&mut c)?;
            if network.output_len() != labels.len() || network.input_len() != standardizer.dim() {
                return Err(Error::Format("network shape disagrees with labels or scaling".into()));
            }
            TrainedModel::Nn(NnClassifier {
                standardizer,
                network,
                label_map: labels,
            })
        }
        "forest" => TrainedModel::Forest(read_forest_body(&mut c, labels)?),
        "linear-svm" => {
            let standardizer: Standardizer<T> = read_standardizer(&mut c)?;
            let lambda: f64 = c.one("lambda")?;
            let rest = c.field("objective_trace")?;
            let (count, values) = rest.split_once(' ').unwrap_or((rest, ""));
            let count: usize = c.parse(count)?;
            let objective_trace: Vec<f64> = c.numbers(values)?;
            if objective_trace.len() != count {
                return Err(c.err("objective trace count mismatch"));
            }
            let d = standardizer.dim();
            let mut weights = Vec::with_capacity(labels.len());
            let mut biases = Vec::with_capacity(labels.len());
            for _ in 0..labels.len() {
                let mut v: Vec<T> = c.vector("class", d + 1)?;
                biases.push(v.remove(0));
                weights.push(v);
            }
            TrainedModel::Svm(LinearSvmModel {
                standardizer,
                weights,
                biases,
                lambda,
                label_map: labels,
                objective_trace,
            })
        }
        other => return Err(Error::Format(format!("unknown classifier kind {other:?}"))),
    };
    c.end()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{train_multiclass_svm, train_random_forest, ForestParams, SvmParams};
    use crate::dataset::make_class_split;
    use crate::detectors::fit_stat_detector;
    use crate::detectors::ocsvm::OcSvmParams;
    use crate::synthetic::{generate, SyntheticConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ds() -> crate::dataset::Dataset<f64> {
        generate(&SyntheticConfig {
            subjects: 3,
            sessions: 1,
            reps_per_session: 30,
            seed: 12,
            ..SyntheticConfig::default()
        })
    }

    fn round_trip<M: PartialEq + std::fmt::Debug>(m: &M, write: impl Fn(&M, &mut Vec<u8>), read: impl Fn(&[u8]) -> M) {
        let mut buf = Vec::new();
        write(m, &mut buf);
        assert_eq!(&read(&buf), m);
    }

    #[test]
    fn stat_detectors_round_trip() {
        let ds = ds();
        let rows: Vec<&[f64]> = ds.samples_at(0).iter().map(|s| s.vector.as_slice()).collect();
        for kind in DetectorKind::ALL {
            let m: StatDetectorModel<f64> = fit_stat_detector(kind, &rows).unwrap();
            round_trip(&m, |m, b| write_stat_detector(m, b).unwrap(), |b| read_stat_detector(b).unwrap());
        }
    }

    #[test]
    fn ocsvm_round_trip() {
        let ds = ds();
        let rows: Vec<&[f64]> = ds.samples_at(1).iter().map(|s| s.vector.as_slice()).collect();
        let det = OcSvmDetector::fit(&rows, OcSvmParams::default()).unwrap();
        round_trip(&det, |m, b| write_ocsvm(m, b).unwrap(), |b| read_ocsvm(b).unwrap());
    }

    #[test]
    fn classifiers_round_trip() {
        let ds = ds();
        let split = make_class_split(&ds, 0);
        let forest = train_random_forest(
            &split,
            ForestParams {
                n_trees: 3,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let svm = train_multiclass_svm(&split, SvmParams { epochs: 3, ..SvmParams::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arch = crate::classifiers::Architecture::Cnn1d;
        let nn = NnClassifier {
            standardizer: Standardizer::fit(&crate::classifiers::rows(&split.train)).unwrap(),
            network: Network::new(arch.input_shape(), arch.layers(3), &mut rng).unwrap(),
            label_map: split.label_map.clone(),
        };
        for m in [TrainedModel::Forest(forest), TrainedModel::Svm(svm), TrainedModel::Nn(nn)] {
            round_trip(&m, |m, b| write_classifier(m, b).unwrap(), |b| read_classifier(b).unwrap());
        }
    }

    #[test]
    fn f32_models_round_trip() {
        let ds = ds().cast::<f32>();
        let rows: Vec<&[f32]> = ds.samples_at(0).iter().map(|s| s.vector.as_slice()).collect();
        let m: StatDetectorModel<f32> = fit_stat_detector(DetectorKind::Mahalanobis, &rows).unwrap();
        round_trip(&m, |m, b| write_stat_detector(m, b).unwrap(), |b| read_stat_detector(b).unwrap());
    }

    #[test]
    fn rejects_wrong_version_and_kind() {
        let bad = format!("{MAGIC} 2\nkind forest\n");
        assert!(matches!(read_classifier::<f64, _>(bad.as_bytes()), Err(Error::Format(_))));
        let ds = ds();
        let rows: Vec<&[f64]> = ds.samples_at(0).iter().map(|s| s.vector.as_slice()).collect();
        let m: StatDetectorModel<f64> = fit_stat_detector(DetectorKind::Euclidean, &rows).unwrap();
        let mut buf = Vec::new();
        write_stat_detector(&m, &mut buf).unwrap();
        assert!(read_ocsvm::<f64, _>(&buf[..]).is_err());
        buf.truncate(buf.len() / 2);
        assert!(read_stat_detector::<f64, _>(&buf[..]).is_err());
    }
}
