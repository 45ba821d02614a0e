//! Flat `dotted.key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Every key a run may set, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("potential.kind", "free | square | double-barrier | gaussian | hard-core | table"),
    ("potential.geometry", "line | radial"),
    ("potential.l", "angular momentum of a radial potential"),
    ("potential.height", "barrier height or well depth (negative)"),
    ("potential.a", "left edge of a square potential"),
    ("potential.b", "right edge of a square potential"),
    ("potential.width", "barrier width of a double barrier, or Gaussian width"),
    ("potential.gap", "gap between the two barriers"),
    ("potential.center", "Gaussian centre"),
    ("potential.radius", "hard-core radius"),
    ("potential.file", "two-column x, V table"),
    ("drive.omega", "drive frequency"),
    ("drive.amplitude", "amplitude of the drive harmonic"),
    ("drive.phase", "phase of the drive harmonic"),
    ("drive.harmonic", "harmonic index n > 0"),
    ("drive.a", "inner edge of the drive profile"),
    ("drive.b", "outer edge of the drive profile"),
    ("energy", "incoming energy"),
    ("emin", "lower end of an energy sweep or window"),
    ("emax", "upper end of an energy sweep or window"),
    ("n", "number of energies"),
    ("direction", "left | right (incidence from the left or from the right)"),
    ("region.r", "region radius"),
    ("region.rho", "fuzzy width; 0 or absent for a sharp region"),
    ("region.shape", "cos2 | halfcos"),
    ("region.center", "region centre"),
    ("scan.rmin", "smallest radius of a scan"),
    ("scan.rmax", "largest radius of a scan"),
    ("scan.steps", "number of radii"),
    ("scan.ratio", "rho / r of fuzzy schedules"),
    ("fuzzy.rho", "fixed fuzzy width of a sojourn scan"),
    ("sweep.rho_min", "smallest rho of a fuzzy sweep"),
    ("sweep.rho_max", "largest rho of a fuzzy sweep"),
    ("sweep.steps", "number of rho values"),
    ("reference", "in | out | symmetric | free-flight"),
    ("condition", "none | transmit | reflect-left | reflect-right | sideband:n"),
    ("ff.points", "radii in the free-flight decade"),
    ("packet.k0", "central wavenumber"),
    ("packet.sigma_k", "momentum width"),
    ("packet.dx", "grid spacing"),
    ("clock.couplings", "comma-separated clock couplings"),
    ("response.couplings", "comma-separated couplings of the linear-response check"),
    ("floquet.n_max", "sideband truncation"),
    ("output", "output file; standard output when absent"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    value: String,
    origin: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub command: String,
    entries: BTreeMap<String, Entry>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl RunConfig {
    pub fn new(command: &str) -> RunConfig {
        RunConfig { command: command.to_string(), entries: BTreeMap::new() }
    }

    /// Reads `path`.  With `prefix`, keys without a section get it
    /// prepended (potential files may say `kind = square`).
    pub fn load(&mut self, path: &Path, prefix: Option<&str>) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        self.load_str(&text, &path.display().to_string(), prefix)
    }

    pub fn load_str(&mut self, text: &str, name: &str, prefix: Option<&str>) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let origin = format!("{name}:{}", i + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError(format!("{origin}: expected `key = value`")))?;
            let mut key = k.trim().to_string();
            if let Some(p) = prefix {
                if !key.contains('.') {
                    key = format!("{p}.{key}");
                }
            }
            self.set(&key, v.trim(), &origin)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        if !known(key) {
            return Err(ConfigError(format!("{origin}: unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(ConfigError(format!("{origin}: empty value for `{key}`")));
        }
        self.entries.insert(key.to_string(), Entry { value: value.to_string(), origin: origin.to_string() });
        Ok(())
    }

    /// `key=value` from `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError(format!("--set {pair}: expected key=value")))?;
        self.set(k.trim(), v.trim(), "--set")
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn bad(&self, key: &str, what: &str) -> ConfigError {
        let e = &self.entries[key];
        ConfigError(format!("{}: `{key}` = `{}`: {what}", e.origin, e.value))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).map(Some).ok_or_else(|| self.bad(key, "expected a number")),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn need_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key)?.ok_or_else(|| missing(key))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => v.parse::<usize>().map_err(|_| self.bad(key, "expected a non-negative integer")),
        }
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>().ok().filter(|y| y.is_finite()))
                .collect::<Option<Vec<_>>>()
                .map(Some)
                .ok_or_else(|| self.bad(key, "expected comma-separated numbers")),
        }
    }

    /// Parses a keyword with `parse`, naming the accepted values on failure.
    pub fn choice<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>, accepted: &str) -> Result<Option<T>, ConfigError> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => parse(v).map(Some).ok_or_else(|| self.bad(key, &format!("expected one of {accepted}"))),
        }
    }

    pub fn invalid(&self, key: &str, what: &str) -> ConfigError {
        if self.has(key) {
            self.bad(key, what)
        } else {
            ConfigError(format!("`{key}`: {what}"))
        }
    }

    /// Resolved `key = value` lines in key order.
    pub fn resolved(&self) -> Vec<(String, String)> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }
}

pub fn missing(key: &str) -> ConfigError {
    let flag = key.rsplit('.').next().unwrap_or(key).replace('_', "-");
    ConfigError(format!("missing required key `{key}` (set it in a config file, with --set {key}=..., or with --{flag} where available)"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_prefixes() {
        let mut c = RunConfig::new("delay");
        c.load_str("# barrier\nkind = square  # inline\nheight = 1.5\n\npotential.a = -1\n", "b.cfg", Some("potential")).unwrap();
        assert_eq!(c.str("potential.kind"), Some("square"));
        assert_eq!(c.f64("potential.height").unwrap(), Some(1.5));
        assert_eq!(c.f64("potential.a").unwrap(), Some(-1.0));
    }

    #[test]
    fn unknown_key_names_line() {
        let mut c = RunConfig::new("delay");
        let e = c.load_str("energy = 1\npotental.kind = square\n", "x.cfg", None).unwrap_err();
        assert!(e.0.contains("x.cfg:2") && e.0.contains("potental"), "{}", e.0);
    }

    #[test]
    fn bad_values_are_reported() {
        let mut c = RunConfig::new("delay");
        c.load_str("energy = fast\n", "x.cfg", None).unwrap();
        assert!(c.f64("energy").unwrap_err().0.contains("x.cfg:1"));
        assert!(c.load_str("energy\n", "y.cfg", None).unwrap_err().0.contains("y.cfg:1"));
        c.set_pair("clock.couplings=1e-3, 2e-3").unwrap();
        assert_eq!(c.list("clock.couplings").unwrap(), Some(vec![1e-3, 2e-3]));
    }
}
