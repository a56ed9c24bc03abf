//! A directory of `.tsrk` method files and `.lmm` multistep files.

use std::path::{Path, PathBuf};

use crate::methodfile::{load_lmm, load_method, save_method, LmmFile, MethodFile};
use crate::{Error, Result};

/// Lowercase with everything but ASCII letters and digits removed, so that
/// `eSSPRK+(3,3)`, `essprk-plus-3-3` and `essprkplus33` differ only where
/// they should.
pub fn normalize(name: &str) -> String {
    name.chars()
        .map(|c| if c == '+' { 'p' } else { c })
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect::<String>()
        .replace("plus", "p")
}

#[derive(Debug, Clone)]
pub struct Registry {
    dir: PathBuf,
    methods: Vec<(PathBuf, MethodFile)>,
    lmms: Vec<(PathBuf, LmmFile)>,
}

impl Registry {
    /// Directory shipped next to this crate's manifest.
    pub fn default_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("registry")
    }

    /// Load every method file in `dir`, sorted by file name.
    pub fn open(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            paths.push(entry.path());
        }
        paths.sort();
        let mut reg = Self {
            dir: dir.to_path_buf(),
            methods: Vec::new(),
            lmms: Vec::new(),
        };
        for path in paths {
            match path.extension().and_then(|e| e.to_str()) {
                Some("tsrk") => {
                    let file = load_method(&path)?;
                    reg.methods.push((path, file));
                }
                Some("lmm") => {
                    let file = load_lmm(&path)?;
                    reg.lmms.push((path, file));
                }
                _ => {}
            }
        }
        for (i, (path, f)) in reg.methods.iter().enumerate() {
            let key = normalize(&f.name);
            if let Some((other, _)) = reg.methods[..i].iter().find(|(_, g)| normalize(&g.name) == key) {
                return Err(Error::Usage(format!(
                    "method name {:?} appears in both {} and {}",
                    f.name,
                    other.display(),
                    path.display()
                )));
            }
        }
        Ok(reg)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn methods(&self) -> impl Iterator<Item = &MethodFile> {
        self.methods.iter().map(|(_, f)| f)
    }

    pub fn lmms(&self) -> impl Iterator<Item = &LmmFile> {
        self.lmms.iter().map(|(_, f)| f)
    }

    pub fn find(&self, name: &str) -> Option<&MethodFile> {
        let key = normalize(name);
        self.methods().find(|f| normalize(&f.name) == key)
    }

    /// Look `name` up by normalized name, falling back to a path on disk.
    pub fn resolve(&self, name: &str) -> Result<MethodFile> {
        if let Some(f) = self.find(name) {
            return Ok(f.clone());
        }
        let path = Path::new(name);
        if path.is_file() {
            return load_method(path);
        }
        let known: Vec<&str> = self.methods().map(|f| f.name.as_str()).collect();
        Err(Error::Usage(format!(
            "unknown method {name:?}; registry {} has: {}",
            self.dir.display(),
            known.join(", ")
        )))
    }

    pub fn lmm(&self, name: &str) -> Result<&LmmFile> {
        let key = normalize(name);
        self.lmms()
            .find(|f| normalize(&f.name) == key)
            .ok_or_else(|| Error::Usage(format!("unknown multistep method {name:?}")))
    }

    /// Write `file` as `<name>.tsrk`, replacing any method of the same name.
    pub fn insert(&mut self, file: MethodFile) -> Result<PathBuf> {
        let key = normalize(&file.name);
        if let Some(i) = self.methods.iter().position(|(_, f)| normalize(&f.name) == key) {
            let (old, _) = self.methods.remove(i);
            std::fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
        }
        let path = self.dir.join(format!("{}.tsrk", file_stem(&file.name)));
        save_method(&file, &path)?;
        self.methods.push((path.clone(), file));
        self.methods.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(path)
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize("eSSPRK+(3,3)"), "essprkp33");
        assert_eq!(normalize("essprk-plus-3-3"), "essprkp33");
        assert_eq!(normalize("essprk-plus33"), "essprkp33");
        assert_ne!(normalize("essprk33"), normalize("essprk+33"));
    }
}
