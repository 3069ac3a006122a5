//! Run manifests: the JSON files handed to `nestsim run`.
//!
//! A manifest is a run configuration whose link scenario may either be
//! written inline or referenced by path (resolved relative to the manifest
//! file). Top-level field names are checked strictly, so a typo fails with
//! a message naming the offending field instead of silently running with a
//! default.
//!
//! Every run derives a 64-bit identifier by hashing the fully resolved
//! configuration; all artifacts of the run carry it, and tools refuse to
//! compare artifacts whose identifiers disagree.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nestsim_core::{LinkScenario, MetricsConfig, RunConfig, SessionSpec};
use serde::{Deserialize, Serialize};

/// A link scenario given inline or as a path to a JSON file containing one.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Path(String),
    Inline(LinkScenario),
}

/// One simulation run as described on disk.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Omitted: an unimpaired link.
    #[serde(default)]
    pub scenario: Option<ScenarioSource>,
    pub duration_s: f64,
    pub sessions: Vec<SessionSpec>,
    /// Omitted: default receiver-side metric settings.
    #[serde(default)]
    pub metrics: Option<MetricsConfig>,
}

impl RunManifest {
    /// Parses a manifest file. Unknown or missing fields are reported with
    /// the field name and position.
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .with_context(|| format!("manifest {} does not match the schema", path.display()))?;
        Ok(manifest)
    }

    /// Produces the executable configuration, loading a referenced scenario
    /// file relative to `base_dir` (normally the manifest's directory).
    pub fn resolve(&self, base_dir: &Path) -> Result<RunConfig> {
        let scenario = match &self.scenario {
            None => LinkScenario::default(),
            Some(ScenarioSource::Inline(s)) => s.clone(),
            Some(ScenarioSource::Path(rel)) => {
                let path = resolve_path(base_dir, rel);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading scenario {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| {
                    format!("scenario {} does not match the schema", path.display())
                })?
            }
        };
        Ok(RunConfig {
            scenario,
            duration_s: self.duration_s,
            sessions: self.sessions.clone(),
            metrics: self.metrics.clone().unwrap_or_default(),
        })
    }
}

fn resolve_path(base_dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// 64-bit FNV-1a over the canonical JSON form of the resolved configuration.
/// Deterministic across runs and platforms, so identical configurations get
/// identical run identifiers.
pub fn run_id(config: &RunConfig) -> u64 {
    let canonical = serde_json::to_string(config).expect("run config serializes");
    fnv1a64(canonical.as_bytes())
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use nestsim_core::ControllerConfig;

    fn minimal_manifest_json() -> &'static str {
        r#"{
            "duration_s": 2.0,
            "sessions": [
                {"controller": {"type": "cbr", "bitrate_bps": 30e6}}
            ]
        }"#
    }

    #[test]
    fn minimal_manifest_resolves_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, minimal_manifest_json()).unwrap();
        let manifest = RunManifest::load(&path).unwrap();
        let config = manifest.resolve(dir.path()).unwrap();
        assert_eq!(config.duration_s, 2.0);
        assert_eq!(config.scenario, LinkScenario::default());
        assert_eq!(config.metrics, MetricsConfig::default());
        assert!(matches!(
            config.sessions[0].controller,
            ControllerConfig::Cbr { .. }
        ));
    }

    #[test]
    fn unknown_top_level_field_is_named_in_the_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"duration_s": 1.0, "sessions": [], "durration": 5}"#,
        )
        .unwrap();
        let err = RunManifest::load(&path).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("durration"), "{msg}");
    }

    #[test]
    fn missing_required_field_is_named_in_the_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"duration_s": 1.0}"#).unwrap();
        let err = RunManifest::load(&path).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("sessions"), "{msg}");
    }

    #[test]
    fn scenario_can_be_referenced_by_relative_path() {
        let dir = tempfile::tempdir().unwrap();
        let scenario_path = dir.path().join("link.json");
        fs::write(
            &scenario_path,
            r#"{"base_propagation_s": 0.004, "phases": [
                {"start_s": 0.0, "duration_s": 5.0, "capacity_bps": 50e6}
            ]}"#,
        )
        .unwrap();
        let manifest_path = dir.path().join("run.json");
        fs::write(
            &manifest_path,
            r#"{
                "scenario": "link.json",
                "duration_s": 5.0,
                "sessions": [
                    {"controller": {"type": "cbr", "bitrate_bps": 20e6}}
                ]
            }"#,
        )
        .unwrap();
        let config = RunManifest::load(&manifest_path)
            .unwrap()
            .resolve(dir.path())
            .unwrap();
        assert_eq!(config.scenario.base_propagation_s, 0.004);
        assert_eq!(config.scenario.phases.len(), 1);
        assert_eq!(config.scenario.phases[0].capacity_bps, Some(50e6));
    }

    #[test]
    fn inline_scenarios_and_controller_profiles_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{
                "scenario": {"uplink_delay_s": 0.001},
                "duration_s": 3.0,
                "sessions": [
                    {"controller": {"type": "nest_vr", "profile": "speedy"}}
                ]
            }"#,
        )
        .unwrap();
        let config = RunManifest::load(&path).unwrap().resolve(dir.path()).unwrap();
        assert_eq!(config.scenario.uplink_delay_s, 0.001);
        match &config.sessions[0].controller {
            ControllerConfig::NestVr(cfg) => assert_eq!(cfg.effective_n_dw(), 2),
            other => panic!("unexpected controller {other:?}"),
        }
    }

    #[test]
    fn run_ids_are_stable_and_configuration_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, minimal_manifest_json()).unwrap();
        let config = RunManifest::load(&path).unwrap().resolve(dir.path()).unwrap();
        let a = run_id(&config);
        let b = run_id(&config);
        assert_eq!(a, b);

        let mut other = config.clone();
        other.duration_s = 3.0;
        assert_ne!(a, run_id(&other));
    }
}
