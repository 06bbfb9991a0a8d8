//! Run configuration stored as flat `key = value` text.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::split::SplitFractions;
use crate::augment::{AffinePolicy, ConditionName, RoiSpec};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, ScalingConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub condition: ConditionName,
    pub roi: RoiSpec,
    pub policy: AffinePolicy,
    pub scaling: ScalingConfig,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: u32,
    /// 0 disables early termination; the best-validation checkpoint is
    /// returned either way.
    pub patience: u32,
    pub fractions: SplitFractions,
    pub init_seed: u64,
    pub split_seed: u64,
    pub augment_seed: u64,
    pub order_seed: u64,
    /// Apply the base condition to validation and test images too. When
    /// false they are evaluated clean.
    pub augment_eval: bool,
    /// Grad-CAM overlays per predicted class.
    pub gradcam_top_n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.csv"),
            output_dir: PathBuf::from("runs"),
            condition: ConditionName::Baseline,
            roi: RoiSpec::default(),
            policy: AffinePolicy::default(),
            scaling: ScalingConfig::default(),
            optimizer: AdamConfig::default(),
            batch_size: 16,
            epochs: 15,
            patience: 0,
            fractions: SplitFractions::default(),
            init_seed: 1,
            split_seed: 2,
            augment_seed: 3,
            order_seed: 4,
            augment_eval: true,
            gradcam_top_n: 20,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        macro_rules! p {
            () => {
                parse_value(key, v)?
            };
        }
        match key.trim() {
            "manifest" => self.manifest = PathBuf::from(v),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "condition" => self.condition = v.parse()?,
            "roi_fraction" => self.roi = RoiSpec::new(p!())?,
            "rotation_deg" => self.policy.max_rotation_deg = p!(),
            "shift_px" => self.policy.max_shift_px = p!(),
            "shear" => self.policy.max_shear = p!(),
            "zoom" => self.policy.max_zoom = p!(),
            "hflip" => self.policy.allow_hflip = p!(),
            "alpha" => self.scaling.alpha = p!(),
            "beta" => self.scaling.beta = p!(),
            "gamma" => self.scaling.gamma = p!(),
            "phi" => self.scaling.phi = p!(),
            "base_depth" => self.scaling.base_depth = p!(),
            "base_width" => self.scaling.base_width = p!(),
            "base_resolution" => self.scaling.base_resolution = p!(),
            "learning_rate" => self.optimizer.learning_rate = p!(),
            "beta1" => self.optimizer.beta1 = p!(),
            "beta2" => self.optimizer.beta2 = p!(),
            "epsilon" => self.optimizer.epsilon = p!(),
            "batch_size" => self.batch_size = p!(),
            "epochs" => self.epochs = p!(),
            "patience" => self.patience = p!(),
            "train_fraction" => self.fractions.train = p!(),
            "val_fraction" => self.fractions.val = p!(),
            "test_fraction" => self.fractions.test = p!(),
            "init_seed" => self.init_seed = p!(),
            "split_seed" => self.split_seed = p!(),
            "augment_seed" => self.augment_seed = p!(),
            "order_seed" => self.order_seed = p!(),
            "augment_eval" => self.augment_eval = p!(),
            "gradcam_top_n" => self.gradcam_top_n = p!(),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config_string()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.scaling.validate()?;
        self.fractions.validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2)
            && o.epsilon > 0.0)
        {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }

    /// Every field in a fixed order; `parse` of this text returns `self`.
    pub fn to_config_string(&self) -> String {
        let p = &self.policy;
        let s = &self.scaling;
        let o = &self.optimizer;
        let f = &self.fractions;
        let entries: [(&str, String); 32] = [
            ("manifest", self.manifest.display().to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("condition", self.condition.to_string()),
            ("roi_fraction", self.roi.center_fraction.to_string()),
            ("rotation_deg", p.max_rotation_deg.to_string()),
            ("shift_px", p.max_shift_px.to_string()),
            ("shear", p.max_shear.to_string()),
            ("zoom", p.max_zoom.to_string()),
            ("hflip", p.allow_hflip.to_string()),
            ("alpha", s.alpha.to_string()),
            ("beta", s.beta.to_string()),
            ("gamma", s.gamma.to_string()),
            ("phi", s.phi.to_string()),
            ("base_depth", s.base_depth.to_string()),
            ("base_width", s.base_width.to_string()),
            ("base_resolution", s.base_resolution.to_string()),
            ("learning_rate", o.learning_rate.to_string()),
            ("beta1", o.beta1.to_string()),
            ("beta2", o.beta2.to_string()),
            ("epsilon", o.epsilon.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("train_fraction", f.train.to_string()),
            ("val_fraction", f.val.to_string()),
            ("test_fraction", f.test.to_string()),
            ("init_seed", self.init_seed.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("augment_seed", self.augment_seed.to_string()),
            ("order_seed", self.order_seed.to_string()),
            ("augment_eval", self.augment_eval.to_string()),
            ("gradcam_top_n", self.gradcam_top_n.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut cfg = RunConfig {
            condition: ConditionName::Noise20,
            epochs: 3,
            augment_eval: false,
            ..Default::default()
        };
        cfg.optimizer.learning_rate = 0.0031;
        cfg.policy.max_shear = 0.1 + 0.2;
        let text = cfg.to_config_string();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert!(text.contains("condition = noise20\n"));
    }

    #[test]
    fn comments_and_errors() {
        let cfg = RunConfig::parse("# note\n\nepochs = 2\n").unwrap();
        assert_eq!(cfg.epochs, 2);
        assert!(matches!(
            RunConfig::parse("colour = red"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::parse("epochs"), Err(Error::Config(_))));
        assert!(RunConfig::parse("condition = sideways").is_err());
        assert!(RunConfig::parse("train_fraction = 0.75").is_err());
    }
}
