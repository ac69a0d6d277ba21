//! Seeded parameters.
//!
//! Every value is drawn i.i.d. from `uniform(−0.1, 0.1)` off one SplitMix64
//! stream, layers in structure order and, inside a layer, each sub-layer's
//! weight before its bias.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EmbeddingSpec, LayerKind, CONVNEXT_EXPANSION, CONVNEXT_KERNEL};
use crate::rng::SeedStream;
use crate::tensor::{Axis, FeatureTensor};
use crate::{sef, Error, Result};

pub const INIT_RANGE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub path: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightStore {
    seed: u64,
    layers: Vec<Vec<Param>>,
}

/// Parameter names and shapes of one layer, in draw order.
pub(crate) fn param_shapes(kind: &LayerKind) -> Vec<(&'static str, Vec<usize>)> {
    match *kind {
        LayerKind::Conv { cin, cout, kernel, .. } => {
            vec![("weight", vec![cout, cin, kernel.0, kernel.1]), ("bias", vec![cout])]
        }
        LayerKind::ConvNext { channels: c } => {
            let k = CONVNEXT_KERNEL;
            let e = CONVNEXT_EXPANSION * c;
            vec![
                ("dw.weight", vec![c, 1, k, k]),
                ("dw.bias", vec![c]),
                ("norm.weight", vec![c]),
                ("norm.bias", vec![c]),
                ("pw1.weight", vec![e, c]),
                ("pw1.bias", vec![e]),
                ("pw2.weight", vec![c, e]),
                ("pw2.bias", vec![c]),
            ]
        }
        LayerKind::Linear { cin, cout } => vec![("weight", vec![cout, cin]), ("bias", vec![cout])],
        LayerKind::Gru { input, hidden } => vec![
            ("weight_ih", vec![3 * hidden, input]),
            ("weight_hh", vec![3 * hidden, hidden]),
            ("bias_ih", vec![3 * hidden]),
            ("bias_hh", vec![3 * hidden]),
        ],
        LayerKind::Tac { channels: c } => vec![
            ("a.weight", vec![c / 2, c]),
            ("a.bias", vec![c / 2]),
            ("b.weight", vec![c / 2, c]),
            ("b.bias", vec![c / 2]),
        ],
        LayerKind::Dac { .. } | LayerKind::Avg { .. } => vec![],
        LayerKind::Project { channels, freq, out } => {
            vec![("weight", vec![out, channels * freq]), ("bias", vec![out])]
        }
    }
}

pub fn init_weights(spec: &EmbeddingSpec, seed: u64) -> Result<WeightStore> {
    let mut stream = SeedStream::new(seed);
    let layers = spec
        .layers()?
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            param_shapes(&layer.kind)
                .into_iter()
                .map(|(name, dims)| {
                    let n = dims.iter().product();
                    let values = (0..n)
                        .map(|_| stream.uniform(-INIT_RANGE, INIT_RANGE) as f32)
                        .collect();
                    Param { path: format!("{i:02}.{}.{name}", layer.tag), dims, values }
                })
                .collect()
        })
        .collect();
    Ok(WeightStore { seed, layers })
}

impl WeightStore {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layer(&self, index: usize) -> &[Param] {
        &self.layers[index]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.layers.iter().flatten()
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.values.len()).sum()
    }

    pub fn bit_eq(&self, other: &WeightStore) -> bool {
        self.layers.len() == other.layers.len()
            && self.params().zip(other.params()).all(|(a, b)| {
                a.path == b.path
                    && a.dims == b.dims
                    && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// Check layer-by-layer shapes against a spec.
    pub fn check_against(&self, spec: &EmbeddingSpec) -> Result<()> {
        let layers = spec.layers()?;
        if layers.len() != self.layers.len() {
            return Err(Error::SpecMismatch(format!(
                "store has {} layers, spec lowers to {}",
                self.layers.len(),
                layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            let want = param_shapes(&layer.kind);
            let have = &self.layers[i];
            if want.len() != have.len() || want.iter().zip(have).any(|((_, d), p)| *d != p.dims) {
                return Err(Error::SpecMismatch(format!("layer {i} ({}) parameter shapes differ", layer.tag)));
            }
        }
        Ok(())
    }

    /// Sidecar manifest: `seed = N`, then one `path = d0xd1x...` line per parameter.
    pub fn manifest(&self) -> String {
        let mut s = format!("seed = {}\n", self.seed);
        for p in self.params() {
            let dims: Vec<String> = p.dims.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "{} = {}", p.path, dims.join("x"));
        }
        s
    }

    /// Write concatenated SEF1 records plus `<path>.manifest`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        for p in self.params() {
            let t = FeatureTensor::new(vec![(Axis::FeatChannel, p.values.len())], p.values.clone())?;
            sef::encode_into(&t, &mut bytes)?;
        }
        fs::write(path, bytes)?;
        fs::write(manifest_path(path), self.manifest())?;
        Ok(())
    }

    /// Load a store written by [`WeightStore::save`], grouped by `spec`'s layers.
    pub fn load(path: impl AsRef<Path>, spec: &EmbeddingSpec) -> Result<WeightStore> {
        let path = path.as_ref();
        let manifest = fs::read_to_string(manifest_path(path))?;
        let bytes = fs::read(path)?;
        Self::from_parts(&manifest, &bytes, spec)
    }

    pub fn from_parts(manifest: &str, bytes: &[u8], spec: &EmbeddingSpec) -> Result<WeightStore> {
        let (seed, entries) = parse_manifest(manifest)?;
        let mut offset = 0;
        let mut flat = Vec::with_capacity(entries.len());
        for (path, dims) in entries {
            let (t, used) = sef::decode_prefix(&bytes[offset..])?;
            offset += used;
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            if t.ndim() != 1 || Some(t.len()) != n {
                return Err(Error::Malformed(format!("record for {path} does not match manifest dims")));
            }
            flat.push(Param { path, dims, values: t.into_data() });
        }
        if offset != bytes.len() {
            return Err(Error::Malformed("weight file has records beyond the manifest".into()));
        }
        let mut flat = flat.into_iter();
        let mut layers = Vec::new();
        for layer in spec.layers()? {
            let n = param_shapes(&layer.kind).len();
            layers.push(flat.by_ref().take(n).collect::<Vec<_>>());
        }
        let store = WeightStore { seed, layers };
        if flat.next().is_some() {
            return Err(Error::SpecMismatch("weight file has more parameters than the spec".into()));
        }
        store.check_against(spec)?;
        Ok(store)
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Parameter paths with their shapes, in file order.
pub type ManifestEntries = Vec<(String, Vec<usize>)>;

/// Parse a weight manifest into its seed and `(path, dims)` entries.
pub fn parse_manifest(text: &str) -> Result<(u64, ManifestEntries)> {
    let mut seed = None;
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Malformed(format!("manifest line {}: expected `key = value`", no + 1)))?;
        if key == "seed" {
            seed = Some(value.parse::<u64>().map_err(|e| Error::Malformed(format!("manifest seed: {e}")))?);
            continue;
        }
        if key.is_empty() {
            return Err(Error::Malformed(format!("manifest line {}: empty parameter path", no + 1)));
        }
        let dims = value
            .split('x')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Malformed(format!("manifest line {}: {e}", no + 1)))?;
        if dims.is_empty() || dims.len() > sef::MAX_NDIM {
            return Err(Error::DimOverflow(format!("manifest line {}: {} dims", no + 1, dims.len())));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::DimOverflow(format!("manifest line {}: element count overflows", no + 1)));
        }
        entries.push((key.to_string(), dims));
    }
    let seed = seed.ok_or_else(|| Error::Malformed("manifest has no seed line".into()))?;
    Ok((seed, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelFusion, Topology, Variant};

    fn spec() -> EmbeddingSpec {
        let mut s = Variant::lookup("conv2d-S").unwrap().spec(40, Topology::Expanded, ChannelFusion::Tac, 4, 8);
        s.out_channels = [4, 6, 8];
        s
    }

    #[test]
    fn same_seed_same_store() {
        let a = init_weights(&spec(), 5).unwrap();
        let b = init_weights(&spec(), 5).unwrap();
        assert!(a.bit_eq(&b));
        let c = init_weights(&spec(), 6).unwrap();
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn draws_follow_layer_order() {
        let w = init_weights(&spec(), 11).unwrap();
        let mut s = SeedStream::new(11);
        for p in w.params() {
            for &v in &p.values {
                assert_eq!(v, s.uniform(-0.1, 0.1) as f32);
            }
        }
        let first: Vec<&str> = w.params().take(4).map(|p| p.path.as_str()).collect();
        assert_eq!(first, ["00.conv.weight", "00.conv.bias", "01.tac.a.weight", "01.tac.a.bias"]);
        assert!(w.params().all(|p| p.values.iter().all(|v| v.abs() <= 0.1)));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.sef");
        let w = init_weights(&spec(), 3).unwrap();
        w.save(&path).unwrap();
        let back = WeightStore::load(&path, &spec()).unwrap();
        assert!(back.bit_eq(&w));
        assert_eq!(back.seed(), 3);
        let manifest = std::fs::read_to_string(manifest_path(&path)).unwrap();
        assert!(manifest.contains("00.conv.weight = 4x2x3x1"));
    }

    #[test]
    fn load_rejects_other_spec() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.sef");
        init_weights(&spec(), 3).unwrap().save(&path).unwrap();
        let mut other = spec();
        other.out_channels = [4, 6, 10];
        assert!(WeightStore::load(&path, &other).is_err());
    }

    #[test]
    fn manifest_parse_errors() {
        assert!(parse_manifest("a = 1x2\n").is_err());
        assert!(parse_manifest("seed = 1\nnot a pair\n").is_err());
        assert!(parse_manifest("seed = 1\na = 1xq\n").is_err());
        let (seed, e) = parse_manifest("# c\nseed = 9\nx.w = 2x3\n").unwrap();
        assert_eq!((seed, e), (9, vec![("x.w".to_string(), vec![2, 3])]));
    }
}
