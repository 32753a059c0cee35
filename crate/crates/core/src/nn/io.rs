//! Versioned JSON container for trained networks.
//!
//! Floats are written with shortest round-trip formatting and parsed with
//! exact round-tripping, so saving and loading is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::NetworkSpec;
use super::store::{ParameterStore, Tensor};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "tsad-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedNetwork {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub tensors: Vec<Tensor>,
}

impl SavedNetwork {
    pub fn from_network(net: &Network) -> Self {
        SavedNetwork {
            spec: net.spec.clone(),
            seed: net.store.seed(),
            tensors: net.store.tensors().to_vec(),
        }
    }

    pub fn into_network(self) -> Result<Network> {
        let store = ParameterStore::from_tensors(self.tensors, self.seed)?;
        Network::from_parts(self.spec, store)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    /// What the container holds, e.g. `q-network` or `vae`.
    pub kind: String,
    pub networks: BTreeMap<String, SavedNetwork>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ModelFile {
    pub fn new(kind: impl Into<String>) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: kind.into(),
            networks: BTreeMap::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_network(mut self, name: &str, net: &Network) -> Self {
        self.networks.insert(name.into(), SavedNetwork::from_network(net));
        self
    }

    pub fn network(&self, name: &str) -> Result<Network> {
        self.networks
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Version(format!("container has no network `{name}`")))?
            .into_network()
    }

    pub fn to_string_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text)
            .map_err(|e| Error::Version(format!("not a model container: {e}")))?;
        if header.format != MODEL_FORMAT {
            return Err(Error::Version(format!("unknown container format `{}`", header.format)));
        }
        if header.version != MODEL_VERSION {
            return Err(Error::Version(format!(
                "container version {} is not supported (expected {MODEL_VERSION})",
                header.version
            )));
        }
        serde_json::from_str(text).map_err(|e| Error::Version(format!("corrupted container: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string_pretty()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelFile::from_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};
    use proptest::prelude::*;

    fn net(seed: u64) -> Network {
        let spec = NetworkSpec::new(vec![
            LayerSpec::recurrent(1, 3, Activation::Tanh),
            LayerSpec::dense(3, 2, Activation::Identity),
        ])
        .unwrap();
        Network::init(spec, seed).unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), scale in -1e6f64..1e6) {
            let mut n = net(seed);
            for t in n.store.tensors_mut() {
                t.value.iter_mut().for_each(|v| *v *= scale);
            }
            let file = ModelFile::new("q-network").with_network("q", &n);
            let back = ModelFile::from_str(&file.to_string_pretty().unwrap()).unwrap();
            let restored = back.network("q").unwrap();
            for (a, b) in restored.store.tensors().iter().zip(n.store.tensors()) {
                prop_assert_eq!(
                    a.value.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    b.value.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
            prop_assert_eq!(restored.spec, n.spec);
        }
    }

    #[test]
    fn rejects_other_versions_and_garbage() {
        let file = ModelFile::new("q-network").with_network("q", &net(1));
        let text = file.to_string_pretty().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(ModelFile::from_str(&text), Err(Error::Version(_))));
        assert!(matches!(ModelFile::from_str("{not json"), Err(Error::Version(_))));
        let truncated = &file.to_string_pretty().unwrap()[..200];
        assert!(matches!(ModelFile::from_str(truncated), Err(Error::Version(_))));
    }
}
