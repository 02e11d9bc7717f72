//! Site manifests.
//!
//! One `id<TAB>label<TAB>path` line per slide, paths relative to the
//! manifest's directory. Lines starting with `#` are comments; comments of
//! the form `# key = value` are kept as the generation spec echo, and
//! `site` and `seed` among them fix the site id and split seed when the site
//! is read back.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::{slide_io, DataError, SiteData, SiteSpec};
use crate::geometry::Label;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Label,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub echo: Vec<(String, String)>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut m = Manifest::default();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: String| DataError::Manifest { line: line_no, reason };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    m.echo.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, label, path] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            if id.is_empty() || path.is_empty() {
                return Err(err("empty id or path".into()));
            }
            let label = match label {
                "0" => Label::Negative,
                "1" => Label::Positive,
                other => return Err(err(format!("label `{other}` is not 0 or 1"))),
            };
            if !seen.insert(id.to_string()) {
                return Err(err(format!("duplicate id `{id}`")));
            }
            m.entries.push(ManifestEntry { id: id.to_string(), label, path: PathBuf::from(path) });
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.echo {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.id, e.label.index(), e.path.display()));
        }
        out
    }

    pub fn echo_value(&self, key: &str) -> Option<&str> {
        self.echo.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Reads a manifest and checks that every path resolves to a file.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), crate::Error> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let m = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for e in &m.entries {
            if !base.join(&e.path).is_file() {
                return Err(DataError::InvalidSlide { id: e.id.clone(), reason: format!("`{}` does not resolve", e.path.display()) }.into());
            }
        }
        Ok((m, base))
    }
}

fn echo_of(spec: &SiteSpec) -> Vec<(String, String)> {
    [
        ("site", spec.site_id.to_string()),
        ("seed", spec.seed.to_string()),
        ("signal_seed", spec.signal_seed.to_string()),
        ("n_slides", spec.n_slides.to_string()),
        ("positive_fraction", spec.positive_fraction.to_string()),
        ("points_per_slide", spec.points_per_slide.to_string()),
        ("feature_dim", spec.feature_dim.to_string()),
        ("signal_fraction", spec.signal_fraction.to_string()),
        ("cluster_spread", spec.cluster_spread.to_string()),
        ("noise_scale", spec.noise_scale.to_string()),
        ("signal_shift", spec.signal_shift.to_string()),
        ("site_shift", spec.site_shift.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Writes every slide of `site` under `dir/slides/` and the manifest to
/// `dir/manifest.tsv`, returning the manifest path.
pub fn write_site(site: &SiteData, spec: &SiteSpec, dir: &Path) -> Result<PathBuf, crate::Error> {
    let slides_dir = dir.join("slides");
    std::fs::create_dir_all(&slides_dir).map_err(|e| crate::Error::io(&slides_dir, e))?;
    let mut manifest = Manifest { echo: echo_of(spec), entries: Vec::new() };
    for s in &site.slides {
        let rel = PathBuf::from("slides").join(format!("{}.ptws", s.id()));
        slide_io::save(s, &dir.join(&rel))?;
        manifest.entries.push(ManifestEntry { id: s.id().to_string(), label: s.label(), path: rel });
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest.to_text()).map_err(|e| crate::Error::io(&path, e))?;
    Ok(path)
}

/// Reads a site back. Site id and split seed come from the echo when
/// present, else from the arguments.
pub fn read_site(path: &Path, site_id: u32, seed: u64) -> Result<SiteData, crate::Error> {
    let (m, base) = Manifest::load(path)?;
    let parse = |key: &str| -> Result<Option<u64>, DataError> {
        m.echo_value(key)
            .map(|v| v.parse::<u64>().map_err(|_| DataError::Manifest { line: 0, reason: format!("echo `{key}` is not an integer") }))
            .transpose()
    };
    let site_id = parse("site")?.map_or(site_id, |v| v as u32);
    let seed = parse("seed")?.unwrap_or(seed);
    let mut slides = Vec::with_capacity(m.entries.len());
    for e in &m.entries {
        let s = slide_io::load(&base.join(&e.path), &e.id)?;
        if s.label() != e.label {
            return Err(DataError::InvalidSlide { id: e.id.clone(), reason: "label differs from manifest".into() }.into());
        }
        slides.push(s);
    }
    if slides.is_empty() {
        return Err(DataError::Manifest { line: 0, reason: "no slides listed".into() }.into());
    }
    Ok(SiteData::from_slides(site_id, seed, slides))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_site;

    #[test]
    fn parses_comments_and_rejects_bad_lines() {
        let m = Manifest::parse("# site = 2\n# free comment\na\t0\tx.ptws\nb\t1\ty.ptws\n").unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.echo_value("site"), Some("2"));
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
        for bad in ["a\t2\tx", "a\t0", "a\t0\tx\na\t1\ty", "\t0\tx"] {
            assert!(matches!(Manifest::parse(bad), Err(DataError::Manifest { .. })), "{bad:?}");
        }
    }

    #[test]
    fn site_round_trip_keeps_splits() {
        let spec = SiteSpec { site_id: 3, seed: 11, n_slides: 20, points_per_slide: 40, feature_dim: 4, signal_fraction: 0.1, ..SiteSpec::default() };
        let site = generate_site(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_site(&site, &spec, dir.path()).unwrap();
        let back = read_site(&path, 0, 0).unwrap();
        assert_eq!(back.site_id, 3);
        assert_eq!(back.slides, site.slides);
        assert_eq!((back.train, back.val, back.test), (site.train, site.val, site.test));
    }

    #[test]
    fn unresolved_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        std::fs::write(&path, "a\t0\tmissing.ptws\n").unwrap();
        assert!(Manifest::load(&path).is_err());
    }
}
