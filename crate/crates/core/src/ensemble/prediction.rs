use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::GeoPoint;
use crate::error::{GeoError, Result};

/// Per-post `(id, lat, lon)` predictions of one named model.
///
/// On disk: a `#model=<name>` header line, then `id<TAB>lat<TAB>lon` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    model_name: String,
    entries: Vec<(u64, GeoPoint)>,
}

/// Model names are non-empty and limited to ASCII letters, digits, `_` and `-`.
pub fn validate_model_name(name: &str) -> Result<()> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(GeoError::InvalidArgument(format!(
            "invalid model name '{name}' (use letters, digits, '_' or '-')"
        )));
    }
    Ok(())
}

impl PredictionSet {
    pub fn new(model_name: impl Into<String>, entries: Vec<(u64, GeoPoint)>) -> Result<Self> {
        let model_name = model_name.into();
        validate_model_name(&model_name)?;
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, _) in &entries {
            if !seen.insert(*id) {
                return Err(GeoError::InvalidData(format!(
                    "model '{model_name}' has duplicate predictions for id {id}"
                )));
            }
        }
        Ok(Self {
            model_name,
            entries,
        })
    }

    pub fn from_points(
        model_name: impl Into<String>,
        ids: &[u64],
        points: Vec<GeoPoint>,
    ) -> Result<Self> {
        if ids.len() != points.len() {
            return Err(GeoError::DimensionMismatch(format!(
                "{} ids for {} predictions",
                ids.len(),
                points.len()
            )));
        }
        Self::new(model_name, ids.iter().copied().zip(points).collect())
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn entries(&self) -> &[(u64, GeoPoint)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        validate_model_name(&name)?;
        self.model_name = name;
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("#model={}\n", self.model_name);
        for (id, p) in &self.entries {
            let _ = writeln!(s, "{id}\t{}\t{}", p.lat(), p.lon());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let name = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("#model=")
                .ok_or_else(|| GeoError::parse(1, "expected '#model=<name>' header"))?,
            None => return Err(GeoError::parse(1, "empty prediction file")),
        };
        let mut entries = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let no = idx + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(GeoError::parse(no, "expected id<TAB>lat<TAB>lon"));
            }
            let id: u64 = fields[0]
                .parse()
                .map_err(|_| GeoError::parse(no, format!("bad id '{}'", fields[0])))?;
            let lat: f64 = fields[1].parse().map_err(|_| {
                GeoError::parse(no, format!("non-numeric latitude '{}'", fields[1]))
            })?;
            let lon: f64 = fields[2].parse().map_err(|_| {
                GeoError::parse(no, format!("non-numeric longitude '{}'", fields[2]))
            })?;
            let point = GeoPoint::new(lat, lon).map_err(|e| GeoError::parse(no, e.to_string()))?;
            entries.push((id, point));
        }
        Self::new(name, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| GeoError::from(e).in_file(path))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| GeoError::from(e).in_file(path))
    }
}
