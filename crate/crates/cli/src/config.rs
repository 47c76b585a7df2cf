use std::path::{Path, PathBuf};

use serde::Deserialize;

use isetk_core::enhance::EnhancementConfig;

use crate::commands::CliError;

/// Optional TOML defaults. Every key may be omitted.
///
/// ```toml
/// seed = 7
/// jobs = 2
/// profile = "gtf_f0"
/// pesq_command = "/usr/local/bin/pesq-wrapper"
///
/// [enhancement.pitch.eemd]
/// ensemble_size = 20
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub profile: Option<String>,
    pub pesq_command: Option<PathBuf>,
    #[serde(default)]
    pub enhancement: Option<EnhancementConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Merges with command-line values, which win.
    pub fn resolve(self, seed: Option<u64>, jobs: Option<usize>) -> Settings {
        let mut enhancement = self.enhancement.unwrap_or_default();
        let seed = seed.or(self.seed).unwrap_or(0);
        enhancement.pitch.seed = seed;
        Settings {
            seed,
            jobs: jobs.or(self.jobs),
            profile: self.profile,
            pesq_command: self.pesq_command,
            enhancement,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub profile: Option<String>,
    pub pesq_command: Option<PathBuf>,
    pub enhancement: EnhancementConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: FileConfig = toml::from_str("seed = 3\njobs = 2\n[enhancement.pitch.eemd]\nensemble_size = 9\n").unwrap();
        let s = file.resolve(Some(11), None);
        assert_eq!((s.seed, s.jobs), (11, Some(2)));
        assert_eq!(s.enhancement.pitch.seed, 11);
        assert_eq!(s.enhancement.pitch.eemd.ensemble_size, 9);
        assert_eq!(s.enhancement.pitch.eemd.noise_std_ratio, 0.2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("sede = 3\n").is_err());
    }
}
