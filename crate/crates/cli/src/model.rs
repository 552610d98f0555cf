//! On-disk layout of a trained model directory.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cdl::cf::{self, LatentFactors};
use cdl::dataio::{self, RatingsMatrix};
use cdl::sdae::{self, SdaeNetwork};
use cdl::trainer::{HyperParams, TrainedModel};

pub const CONFIG: &str = "config.txt";
pub const NETWORK: &str = "network.txt";
pub const FACTORS: &str = "factors.txt";
pub const TRAIN: &str = "train_ratings.tsv";
pub const REPORT: &str = "report.tsv";

#[derive(Debug, Clone)]
pub struct SavedModel {
    pub hyper: HyperParams,
    pub network: Option<SdaeNetwork>,
    pub factors: LatentFactors,
    pub train: RatingsMatrix,
}

/// Writes the model files into `dir` and returns their names.
pub fn save(dir: &Path, model: &TrainedModel, hyper: &HyperParams, train: &RatingsMatrix) -> Result<Vec<String>> {
    let config = hyper.to_config_string();
    let mut written = Vec::new();
    let path = dir.join(CONFIG);
    fs::write(&path, &config).with_context(|| format!("writing {}", path.display()))?;
    written.push(CONFIG.to_string());
    if let Some(net) = &model.network {
        let meta = format!("variant={}\n{config}", model.variant);
        sdae::save_network(dir.join(NETWORK), net, &meta)?;
        written.push(NETWORK.to_string());
    }
    cf::save_factors(dir.join(FACTORS), &model.factors)?;
    written.push(FACTORS.to_string());
    dataio::save_ratings(dir.join(TRAIN), train)?;
    written.push(TRAIN.to_string());
    let mut report = Vec::new();
    model.report.write_tsv(&mut report)?;
    let path = dir.join(REPORT);
    fs::write(&path, report).with_context(|| format!("writing {}", path.display()))?;
    written.push(REPORT.to_string());
    Ok(written)
}

pub fn load(dir: &Path) -> Result<SavedModel> {
    if !dir.is_dir() {
        bail!("{}: model directory not found", dir.display());
    }
    let path = dir.join(CONFIG);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let hyper = HyperParams::from_config_str(&text).with_context(|| format!("{}", path.display()))?;
    let net_path = dir.join(NETWORK);
    let network = if net_path.exists() {
        Some(sdae::load_network(&net_path)?.0)
    } else {
        None
    };
    let factors = cf::load_factors(dir.join(FACTORS))?;
    let train = dataio::load_ratings(dir.join(TRAIN))?;
    if train.num_users() != factors.num_users() || train.num_items() != factors.num_items() {
        bail!(
            "{}: training ratings are {}x{} but the factors cover {}x{}",
            dir.display(),
            train.num_users(),
            train.num_items(),
            factors.num_users(),
            factors.num_items()
        );
    }
    if let Some(net) = &network {
        if net.code_width() != factors.k() {
            bail!(
                "{}: code width {} differs from factor dimension {}",
                dir.display(),
                net.code_width(),
                factors.k()
            );
        }
    }
    Ok(SavedModel {
        hyper,
        network,
        factors,
        train,
    })
}

/// Brings `ratings` to the model's dimensions, failing if it refers to users
/// or items the model does not know.
pub fn conform(ratings: &RatingsMatrix, model: &SavedModel, what: &Path) -> Result<RatingsMatrix> {
    let (nu, ni) = (model.factors.num_users(), model.factors.num_items());
    if ratings.num_users() > nu || ratings.num_items() > ni {
        bail!(
            "{}: {} users x {} items does not fit the model's {nu} users x {ni} items",
            what.display(),
            ratings.num_users(),
            ratings.num_items()
        );
    }
    Ok(ratings.with_dims(nu, ni)?)
}
