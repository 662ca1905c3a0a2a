//! Model bundle: a directory with one parameter file per channel and a
//! `manifest.json` describing how to rebuild the model.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChannelCnn, FusionMode, McnnModel, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::io::{read_layers, write_layers};
use crate::nn::{ChannelArch, Network};

const FORMAT: &str = "nepsent-mcnn";
const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub kernel_size: usize,
    pub seed: u64,
    pub file: String,
    pub sha256: String,
    pub arch: ChannelArch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub fusion: FusionMode,
    pub channels: Vec<ChannelEntry>,
    pub train_config: Option<TrainConfig>,
    pub feature_model_sha256: Option<String>,
}

impl McnnModel {
    pub fn save(
        &self,
        dir: &Path,
        train_config: Option<&TrainConfig>,
        feature_model_sha256: Option<&str>,
    ) -> Result<BundleManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut channels = Vec::new();
        for c in &self.channels {
            let file = format!("channel_{}.bin", c.kernel_size);
            let mut bytes = Vec::new();
            write_layers(c.net.layers(), &mut bytes).map_err(|e| Error::io(dir.join(&file), e))?;
            let path = dir.join(&file);
            std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            channels.push(ChannelEntry {
                kernel_size: c.kernel_size,
                seed: c.seed,
                file,
                sha256: hex::encode(Sha256::digest(&bytes)),
                arch: c.net.arch().clone(),
            });
        }
        let manifest = BundleManifest {
            format: FORMAT.into(),
            version: VERSION,
            fusion: self.fusion,
            channels,
            train_config: train_config.cloned(),
            feature_model_sha256: feature_model_sha256.map(str::to_owned),
        };
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Self, BundleManifest)> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported bundle {} v{}",
                path.display(),
                manifest.format,
                manifest.version
            )));
        }
        let mut channels = Vec::new();
        for entry in &manifest.channels {
            let file = dir.join(&entry.file);
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
                return Err(Error::Data(format!("{}: checksum mismatch", file.display())));
            }
            let net = Network::from_layers(entry.arch.clone(), read_layers(&bytes[..])?)?;
            channels.push(ChannelCnn {
                kernel_size: entry.kernel_size,
                seed: entry.seed,
                net,
            });
        }
        Ok((McnnModel::new(channels, manifest.fusion)?, manifest))
    }
}
