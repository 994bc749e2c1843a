//! JSON display profiles: display constants, lenticular calibration and rig
//! defaults in one file.

use std::path::Path;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::calib::{DisplayProfile, RigConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigSection {
    cam_size: f64,
    /// Column-major world-to-camera matrix.
    base_view: [f64; 16],
    viewer_distance_m: f64,
    z_near: f64,
    z_far: f64,
}

impl From<&RigConfig> for RigSection {
    fn from(r: &RigConfig) -> Self {
        let mut base_view = [0.0; 16];
        base_view.copy_from_slice(r.base_view.as_slice());
        Self {
            cam_size: r.cam_size,
            base_view,
            viewer_distance_m: r.viewer_distance_m,
            z_near: r.z_near,
            z_far: r.z_far,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLayout {
    display: DisplayProfile,
    rig: RigSection,
}

/// A validated profile file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileFile {
    pub display: DisplayProfile,
    pub rig: RigConfig,
}

impl ProfileFile {
    pub fn to_json(&self) -> String {
        let layout = FileLayout {
            display: self.display.clone(),
            rig: RigSection::from(&self.rig),
        };
        serde_json::to_string_pretty(&layout).expect("profile serializes")
    }
}

pub fn load_profile(bytes: &[u8]) -> Result<ProfileFile, FormatError> {
    let layout: FileLayout = serde_json::from_slice(bytes).map_err(|e| FormatError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let profile = ProfileFile {
        display: layout.display,
        rig: RigConfig {
            cam_size: layout.rig.cam_size,
            base_view: Matrix4::from_column_slice(&layout.rig.base_view),
            viewer_distance_m: layout.rig.viewer_distance_m,
            z_near: layout.rig.z_near,
            z_far: layout.rig.z_far,
        },
    };
    profile
        .display
        .validate()
        .map_err(|e| FormatError::schema("display", e.to_string()))?;
    profile
        .rig
        .validate()
        .map_err(|e| FormatError::schema("rig", e.to_string()))?;
    Ok(profile)
}

pub fn load_profile_file(path: impl AsRef<Path>) -> Result<ProfileFile, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    load_profile(&bytes)
}
