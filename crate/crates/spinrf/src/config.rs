//! Flat run configuration: `[section]` headers with `key = value` lines,
//! overridable from the command line as dotted `section.key=value` pairs.
//! Readers consume keys as they go and reject anything left over, so a
//! typo in a config file fails loudly instead of being ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = FlatConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let row = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                    row,
                    msg: format!("unterminated section header '{line}'"),
                })?;
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(Error::Parse {
                        row,
                        msg: "empty section name".into(),
                    });
                }
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                row,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    row,
                    msg: "empty key".into(),
                });
            }
            if section.is_empty() {
                return Err(Error::Parse {
                    row,
                    msg: format!("key '{key}' appears before any [section]"),
                });
            }
            cfg.sections
                .get_mut(&section)
                .unwrap()
                .insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Apply one `section.key=value` command-line override.
    pub fn apply_override(&mut self, dotted: &str) -> Result<()> {
        let (path, value) = dotted.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "override '{dotted}' must look like section.key=value"
            ))
        })?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override key '{path}' must be section.key")))?;
        if section.is_empty() || key.is_empty() {
            return Err(Error::Config(format!("malformed override '{dotted}'")));
        }
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    /// Canonical text form, suitable as a reproducible config echo.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, kv) in &self.sections {
            s.push_str(&format!("[{name}]\n"));
            for (k, v) in kv {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    pub fn reader(&self) -> ConfigReader<'_> {
        ConfigReader {
            cfg: self,
            consumed: BTreeSet::new(),
        }
    }
}

/// Typed accessor that remembers which keys were read; `finish` rejects
/// any key nobody asked for.
pub struct ConfigReader<'a> {
    cfg: &'a FlatConfig,
    consumed: BTreeSet<(String, String)>,
}

impl<'a> ConfigReader<'a> {
    fn raw(&mut self, section: &str, key: &str) -> Option<&'a str> {
        self.consumed.insert((section.to_string(), key.to_string()));
        self.cfg
            .sections
            .get(section)
            .and_then(|kv| kv.get(key))
            .map(|s| s.as_str())
    }

    pub fn get_str(&mut self, section: &str, key: &str, default: &str) -> String {
        self.raw(section, key).unwrap_or(default).to_string()
    }

    pub fn get_opt_str(&mut self, section: &str, key: &str) -> Option<String> {
        self.raw(section, key).map(|s| s.to_string())
    }

    pub fn get_f64(&mut self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{section}.{key}: bad number '{s}': {e}"))),
        }
    }

    /// Like [`get_f64`](Self::get_f64) but with no default; returns `None`
    /// when the key is absent.
    pub fn get_opt_f64(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Config(format!("{section}.{key}: bad number '{s}': {e}"))),
        }
    }

    pub fn get_usize(&mut self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("{section}.{key}: bad count '{s}': {e}"))),
        }
    }

    pub fn get_u64(&mut self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse::<u64>()
                .map_err(|e| Error::Config(format!("{section}.{key}: bad integer '{s}': {e}"))),
        }
    }

    /// Comma-separated list of numbers.
    pub fn get_f64_list(&mut self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(section, key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split(',')
                .map(|p| {
                    p.trim().parse::<f64>().map_err(|e| {
                        Error::Config(format!("{section}.{key}: bad number '{p}': {e}"))
                    })
                })
                .collect(),
        }
    }

    pub fn get_usize_list(
        &mut self,
        section: &str,
        key: &str,
        default: &[usize],
    ) -> Result<Vec<usize>> {
        match self.raw(section, key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split(',')
                .map(|p| {
                    p.trim().parse::<usize>().map_err(|e| {
                        Error::Config(format!("{section}.{key}: bad count '{p}': {e}"))
                    })
                })
                .collect(),
        }
    }

    /// Error out if the config holds keys no command consumed.
    pub fn finish(self) -> Result<()> {
        let mut unknown = Vec::new();
        for (section, kv) in &self.cfg.sections {
            for key in kv.keys() {
                if !self.consumed.contains(&(section.clone(), key.clone())) {
                    unknown.push(format!("{section}.{key}"));
                }
            }
        }
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown config key(s): {}",
                unknown.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sections_comments_and_values() {
        let cfg = FlatConfig::parse(
            "# run settings\n[train]\nepochs = 50\nmodel = physical\n\n[run]\nseed = 7\n",
        )
        .unwrap();
        let mut r = cfg.reader();
        assert_eq!(r.get_usize("train", "epochs", 1).unwrap(), 50);
        assert_eq!(r.get_str("train", "model", "software"), "physical");
        assert_eq!(r.get_u64("run", "seed", 0).unwrap(), 7);
        r.finish().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = FlatConfig::parse("[train]\nepochs = 5\ntypo_key = 1\n").unwrap();
        let mut r = cfg.reader();
        let _ = r.get_usize("train", "epochs", 1);
        let err = r.finish().unwrap_err();
        assert!(err.to_string().contains("train.typo_key"), "{err}");
    }

    #[test]
    fn overrides_win_and_are_validated() {
        let mut cfg = FlatConfig::parse("[train]\nepochs = 5\n").unwrap();
        cfg.apply_override("train.epochs=9").unwrap();
        cfg.apply_override("run.seed = 3").unwrap();
        let mut r = cfg.reader();
        assert_eq!(r.get_usize("train", "epochs", 0).unwrap(), 9);
        assert_eq!(r.get_u64("run", "seed", 0).unwrap(), 3);
        assert!(cfg.apply_override("no_dot=1").is_err());
        assert!(cfg.apply_override("a.b").is_err());
    }

    #[test]
    fn parse_errors_carry_row_numbers() {
        match FlatConfig::parse("[train]\nnot a pair\n") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        assert!(FlatConfig::parse("orphan = 1\n").is_err());
        assert!(FlatConfig::parse("[broken\n").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = FlatConfig::parse("[b]\nx = 1\n[a]\ny = 2.5\n").unwrap();
        let echoed = FlatConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, echoed);
    }

    #[test]
    fn list_values() {
        let cfg = FlatConfig::parse("[energy]\nlayers = 256, 128, 10\n[sweep]\nf_max = 1e8,5e8\n")
            .unwrap();
        let mut r = cfg.reader();
        assert_eq!(
            r.get_usize_list("energy", "layers", &[]).unwrap(),
            vec![256, 128, 10]
        );
        assert_eq!(
            r.get_f64_list("sweep", "f_max", &[]).unwrap(),
            vec![1e8, 5e8]
        );
    }
}
