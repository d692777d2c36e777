//! Service configuration: a JSON file plus `PRIMSCENE_*` environment
//! overrides, one variable per leaf field (`PRIMSCENE_GRID_ROWS`,
//! `PRIMSCENE_BACKENDS_STYLIZE`, ...).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{
    Backends, HttpBackend, MockGridEditor, MockMeshGenerator, MockSceneRenderer, MockStylizer, RetryPolicy,
};
use crate::error::{Error, Result};
use crate::integration::PipelineParams;
use crate::refgrid::{GridShape, RingParams};

pub const ENV_PREFIX: &str = "PRIMSCENE_";
pub const MOCK: &str = "mock";

/// Endpoint per backend: a base URL or `"mock"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendEndpoints {
    pub stylize: String,
    pub generate_mesh: String,
    pub edit_grid: String,
    pub render_scene: String,
}

impl Default for BackendEndpoints {
    fn default() -> Self {
        BackendEndpoints {
            stylize: MOCK.into(),
            generate_mesh: MOCK.into(),
            edit_grid: MOCK.into(),
            render_scene: MOCK.into(),
        }
    }
}

impl BackendEndpoints {
    pub fn all(url: &str) -> Self {
        BackendEndpoints {
            stylize: url.into(),
            generate_mesh: url.into(),
            edit_grid: url.into(),
            render_scene: url.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Directory holding one subdirectory per scene.
    pub scenes_root: PathBuf,
    pub bind: String,
    pub backends: BackendEndpoints,
    pub grid: GridShape,
    pub tile_width: u32,
    pub tile_height: u32,
    pub ring: RingParams,
    pub near: f64,
    pub far: f64,
    pub tessellation_level: u32,
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineParams::default();
        Config {
            scenes_root: PathBuf::from("scenes"),
            bind: "127.0.0.1:8080".into(),
            backends: BackendEndpoints::default(),
            grid: p.grid,
            tile_width: p.tile_width,
            tile_height: p.tile_height,
            ring: p.ring,
            near: p.near,
            far: p.far,
            tessellation_level: p.tessellation_level,
            concurrency: p.concurrency,
            retry: RetryPolicy::default(),
        }
    }
}

impl Config {
    /// Reads `path` (if given), then applies overrides from the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(Config::default()).expect("config serializes"),
        };
        Config::from_value_with_env(base, std::env::vars())
    }

    /// Overlays `PRIMSCENE_*` entries from `env` onto `base` and validates.
    pub fn from_value_with_env(base: Value, env: impl IntoIterator<Item = (String, String)>) -> Result<Config> {
        let mut merged = serde_json::to_value(Config::default()).expect("config serializes");
        merge(&mut merged, base);
        let overrides: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v)))
            .collect();
        for (key, raw) in overrides {
            if !apply_override(&mut merged, &key, &raw) {
                return Err(Error::InvalidConfig(format!(
                    "unknown override {ENV_PREFIX}{}",
                    key.to_ascii_uppercase()
                )));
            }
        }
        let cfg: Config = serde_json::from_value(merged).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        self.grid.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if self.tile_width == 0 || self.tile_height == 0 {
            return bad("tile size must be positive");
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return bad("need 0 < near < far");
        }
        if !(self.ring.radius_multiplier > 0.0) || !(-90.0..=90.0).contains(&self.ring.elevation_deg) {
            return bad("ring radius multiplier must be positive and elevation within [-90, 90]");
        }
        if self.tessellation_level == 0 || self.concurrency == 0 || self.retry.attempts == 0 {
            return bad("tessellation level, concurrency and retry attempts must be positive");
        }
        Ok(())
    }

    pub fn pipeline_params(&self) -> PipelineParams {
        PipelineParams {
            grid: self.grid,
            tile_width: self.tile_width,
            tile_height: self.tile_height,
            ring: self.ring,
            near: self.near,
            far: self.far,
            tessellation_level: self.tessellation_level,
            concurrency: self.concurrency,
        }
    }

    /// Backend set for the configured endpoints. Remote endpoints get HTTP
    /// clients; `"mock"` gets the in-process stand-in.
    pub fn backends(&self) -> Result<Backends> {
        let http = |url: &str| HttpBackend::new(url, self.retry).map(Arc::new).map_err(Error::from);
        let e = &self.backends;
        Ok(Backends {
            stylizer: if e.stylize == MOCK {
                Arc::new(MockStylizer)
            } else {
                http(&e.stylize)?
            },
            mesh_generator: if e.generate_mesh == MOCK {
                Arc::new(MockMeshGenerator)
            } else {
                http(&e.generate_mesh)?
            },
            grid_editor: if e.edit_grid == MOCK {
                Arc::new(MockGridEditor)
            } else {
                http(&e.edit_grid)?
            },
            scene_renderer: if e.render_scene == MOCK {
                Arc::new(MockSceneRenderer::default())
            } else {
                http(&e.render_scene)?
            },
        })
    }
}

fn merge(into: &mut Value, from: Value) {
    match (into, from) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                match a.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        a.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Finds the leaf whose underscore-joined path equals `key` and replaces it,
/// parsing `raw` to the leaf's current JSON type.
fn apply_override(value: &mut Value, key: &str, raw: &str) -> bool {
    let Value::Object(map) = value else { return false };
    for (name, child) in map.iter_mut() {
        if name == key {
            *child = match child {
                Value::String(_) => Value::String(raw.into()),
                Value::Object(_) => return false,
                _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into())),
            };
            return true;
        }
        if let Some(rest) = key.strip_prefix(name.as_str()).and_then(|r| r.strip_prefix('_')) {
            if child.is_object() && apply_override(child, rest, raw) {
                return true;
            }
        }
    }
    false
}
