use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightstage::LayoutConfig;

/// Hidden widths of the first eight dense layers of a branch; the ninth
/// layer outputs the branch feature.
pub const DEFAULT_HIDDEN: [usize; 8] = [32, 32, 64, 64, 64, 64, 32, 32];

/// Input length in point-light mode.
pub const POINTLIGHT_INPUTS: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lightstage,
    Pointlight,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lightstage => "lightstage",
            Mode::Pointlight => "pointlight",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    /// Number of measurements entering the dense stack.
    pub measurements: usize,
    /// Output widths of all dense layers but the last.
    pub hidden: Vec<usize>,
    pub feature_len: usize,
    /// Index of the dense layer whose input is extended by the view encoding.
    pub view_injection: usize,
    /// Normalize measurements before the dense stack.
    pub normalize_measurements: bool,
}

impl BranchConfig {
    /// Intensity-sensitive branch: view enters with the measurements.
    pub fn sensitive(measurements: usize) -> Self {
        Self {
            measurements,
            hidden: DEFAULT_HIDDEN.to_vec(),
            feature_len: 2 * measurements,
            view_injection: 0,
            normalize_measurements: false,
        }
    }

    /// Intensity-insensitive branch: normalized measurements, view enters at
    /// the sixth dense layer.
    pub fn insensitive(measurements: usize) -> Self {
        Self {
            measurements,
            hidden: DEFAULT_HIDDEN.to_vec(),
            feature_len: 2 * measurements,
            view_injection: 5,
            normalize_measurements: true,
        }
    }

    pub fn layer_count(&self) -> usize {
        self.hidden.len() + 1
    }

    /// `(inputs, outputs)` of every dense layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.layer_count());
        let mut width = self.measurements;
        let outs = self.hidden.iter().copied().chain(std::iter::once(self.feature_len));
        for (j, out) in outs.enumerate() {
            let inputs = width + if j == self.view_injection { 2 } else { 0 };
            shapes.push((inputs, out));
            width = out;
        }
        shapes
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.measurements == 0 || self.feature_len == 0 {
            return Err(Error::Config(format!(
                "{name} branch needs at least one measurement and one feature"
            )));
        }
        if self.view_injection >= self.layer_count() {
            return Err(Error::Config(format!(
                "{name} branch injects the view at layer {} but has {} layers",
                self.view_injection,
                self.layer_count()
            )));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("{name} branch has a zero-width layer")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub mode: Mode,
    /// Lumitexel length L (light-stage) or number of point lights.
    pub input_len: usize,
    pub sensitive: BranchConfig,
    pub insensitive: BranchConfig,
    /// Length of the combined feature per color channel.
    pub feature_len: usize,
    pub activation_slope: f64,
    /// Emitter layout that defines the lumitexel parameterization.
    pub layout: Option<LayoutConfig>,
}

impl NetworkConfig {
    /// Light-stage network with `ms` sensitive and `mi` insensitive patterns.
    pub fn lightstage(layout: LayoutConfig, ms: usize, mi: usize) -> Self {
        Self {
            mode: Mode::Lightstage,
            input_len: 6 * layout.per_face(),
            sensitive: BranchConfig::sensitive(ms),
            insensitive: BranchConfig::insensitive(mi),
            feature_len: 16,
            activation_slope: 0.2,
            layout: Some(layout),
        }
    }

    /// Point-light network over `POINTLIGHT_INPUTS` measurements.
    pub fn pointlight() -> Self {
        let n = POINTLIGHT_INPUTS;
        let mut sensitive = BranchConfig::sensitive(n);
        let mut insensitive = BranchConfig::insensitive(n);
        sensitive.feature_len = 16;
        insensitive.feature_len = 16;
        Self {
            mode: Mode::Pointlight,
            input_len: n,
            sensitive,
            insensitive,
            feature_len: 16,
            activation_slope: 0.2,
            layout: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sensitive.validate("sensitive")?;
        self.insensitive.validate("insensitive")?;
        if self.input_len == 0 || self.feature_len == 0 {
            return Err(Error::Config("input and feature lengths must be positive".into()));
        }
        if self.mode == Mode::Pointlight
            && (self.sensitive.measurements != self.input_len || self.insensitive.measurements != self.input_len)
        {
            return Err(Error::Config(
                "point-light branches must consume the full input vector".into(),
            ));
        }
        if let (Mode::Lightstage, Some(layout)) = (self.mode, &self.layout) {
            if 6 * layout.per_face() != self.input_len {
                return Err(Error::Config("input length disagrees with the layout".into()));
            }
        }
        Ok(())
    }

    /// Total number of physical measurements per color channel.
    pub fn measurement_budget(&self) -> usize {
        match self.mode {
            Mode::Lightstage => self.sensitive.measurements + self.insensitive.measurements,
            Mode::Pointlight => self.input_len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let cfg = NetworkConfig::lightstage(LayoutConfig::desk(), 3, 5);
        cfg.validate().unwrap();
        assert_eq!(cfg.input_len, 384);
        let s = cfg.sensitive.layer_shapes();
        assert_eq!(s.len(), 9);
        assert_eq!(s[0], (5, 32));
        assert_eq!(s[8], (32, 6));
        let i = cfg.insensitive.layer_shapes();
        assert_eq!(i[0], (5, 32));
        assert_eq!(i[5], (66, 64));
        assert_eq!(i[8], (32, 10));
    }

    #[test]
    fn rejects_bad_injection() {
        let mut cfg = NetworkConfig::lightstage(LayoutConfig::desk(), 3, 5);
        cfg.insensitive.view_injection = 9;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pointlight_consumes_everything() {
        let cfg = NetworkConfig::pointlight();
        cfg.validate().unwrap();
        assert_eq!(cfg.sensitive.layer_shapes()[0], (98, 32));
        assert_eq!(cfg.insensitive.layer_shapes()[0], (96, 32));
    }
}
