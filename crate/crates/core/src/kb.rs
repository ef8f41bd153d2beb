//! Target knowledge bases: concepts with typed multilingual aliases.
//!
//! A KB is stored as JSONL, one concept per line, sorted by concept id:
//!
//! ```json
//! {"concept_id":"C0024131","canonical_name":"Lupus Vulgaris","semantic_types":["T047"],
//!  "aliases":[{"value":"Lupus Vulgaris","lang":"en"},{"value":"Lupus vulgaire","lang":"fr"}]}
//! ```
//!
//! KBs are built from a UMLS release (`MRCONSO.RRF` + `MRSTY.RRF`) or from a
//! custom JSONL dictionary, restricted by language, semantic group and source
//! vocabulary as configured in YAML:
//!
//! ```yaml
//! name: quaero
//! dict:
//!   umls:
//!     lang: [fr, en]
//!     meta_path: ../2014AB/META
//!     semantic_groups: [ANAT, CHEM, DEVI, DISO, GEOG, LIVB, OBJC, PHEN, PHYS, PROC]
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::sha256_hex;

const DEFAULT_GROUP_TABLE: &str = include_str!("../data/semantic_groups.tsv");

/// UMLS `SUPPRESS` values that mark obsolete or suppressible rows.
const SUPPRESSED: [&str; 3] = ["O", "E", "Y"];

/// Two-letter language code to UMLS `LAT` value.
const LANGUAGES: [(&str, &str); 24] = [
    ("ar", "ARA"),
    ("cs", "CZE"),
    ("da", "DAN"),
    ("de", "GER"),
    ("el", "GRE"),
    ("en", "ENG"),
    ("es", "SPA"),
    ("et", "EST"),
    ("eu", "BAQ"),
    ("fi", "FIN"),
    ("fr", "FRE"),
    ("he", "HEB"),
    ("hr", "HRV"),
    ("hu", "HUN"),
    ("it", "ITA"),
    ("ja", "JPN"),
    ("ko", "KOR"),
    ("lv", "LAV"),
    ("nl", "DUT"),
    ("no", "NOR"),
    ("pl", "POL"),
    ("pt", "POR"),
    ("ru", "RUS"),
    ("sv", "SWE"),
];

pub fn umls_language(code: &str) -> Option<&'static str> {
    LANGUAGES.iter().find(|(c, _)| *c == code).map(|(_, l)| *l)
}

fn language_from_umls(lat: &str) -> Option<&'static str> {
    LANGUAGES.iter().find(|(_, l)| *l == lat).map(|(c, _)| *c)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Alias {
    pub value: String,
    pub lang: String,
}

impl Alias {
    pub fn new(value: impl Into<String>, lang: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            lang: lang.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub concept_id: String,
    pub canonical_name: String,
    #[serde(default)]
    pub semantic_types: Vec<String>,
    pub aliases: Vec<Alias>,
}

impl Concept {
    fn validate(&self) -> Result<()> {
        let invalid = |message: &str| Error::InvalidConcept {
            id: self.concept_id.clone(),
            message: message.to_string(),
        };
        if self.concept_id.is_empty() {
            return Err(invalid("empty concept_id"));
        }
        if self.aliases.is_empty() {
            return Err(invalid("no aliases"));
        }
        if self.aliases.iter().any(|a| a.value.is_empty()) {
            return Err(invalid("empty alias value"));
        }
        if !self.aliases.iter().any(|a| a.value == self.canonical_name) {
            return Err(invalid("canonical_name is not among the aliases"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    pub name: String,
    pub concepts: BTreeMap<String, Concept>,
    pub group_map: BTreeMap<String, String>,
}

impl KnowledgeBase {
    pub fn new(name: impl Into<String>, concepts: Vec<Concept>, group_map: BTreeMap<String, String>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for c in concepts {
            c.validate()?;
            if map.contains_key(&c.concept_id) {
                return Err(Error::DuplicateConcept(c.concept_id));
            }
            map.insert(c.concept_id.clone(), c);
        }
        Ok(Self {
            name: name.into(),
            concepts: map,
            group_map,
        })
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Concept> {
        self.concepts.get(id)
    }

    /// Every (concept id, alias value) pair, ordered by concept id then alias order.
    pub fn alias_rows(&self) -> impl Iterator<Item = (&str, &str)> {
        self.concepts
            .values()
            .flat_map(|c| c.aliases.iter().map(move |a| (c.concept_id.as_str(), a.value.as_str())))
    }

    pub fn alias_count(&self) -> usize {
        self.concepts.values().map(|c| c.aliases.len()).sum()
    }

    /// Semantic groups of a concept's types; unmapped types are skipped.
    pub fn groups_of(&self, concept: &Concept) -> BTreeSet<&str> {
        concept
            .semantic_types
            .iter()
            .filter_map(|t| self.group_map.get(t).map(String::as_str))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in self.concepts.values() {
            out.push_str(&serde_json::to_string(c).expect("concept serializes"));
            out.push('\n');
        }
        out
    }

    /// Content digest of the serialized concepts; indices and stages record it.
    pub fn kb_hash(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

pub fn default_group_map() -> BTreeMap<String, String> {
    parse_group_table(DEFAULT_GROUP_TABLE)
}

/// Reads a semantic type → group table: tab-separated `type<TAB>group[...]`
/// or the UMLS `SemGroups.txt` layout `GROUP|Group name|TUI|Type name`.
pub fn load_group_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_group_table(&raw))
}

fn parse_group_table(raw: &str) -> BTreeMap<String, String> {
    raw.lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            if l.contains('|') {
                let f: Vec<&str> = l.split('|').collect();
                (f.len() >= 3).then(|| (f[2].to_string(), f[0].to_string()))
            } else {
                let mut f = l.split('\t');
                Some((f.next()?.to_string(), f.next()?.to_string()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KbSource {
    UmlsRrf,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbConfig {
    pub name: String,
    pub source: KbSource,
    /// UMLS `META` directory for `umls_rrf`, dictionary file for `jsonl`.
    pub meta_path: Option<PathBuf>,
    /// Two-letter codes; empty keeps every language (jsonl source only).
    pub languages: Vec<String>,
    pub semantic_groups: Option<Vec<String>>,
    pub source_vocabularies: Option<Vec<String>>,
    pub include_suppressed: bool,
    pub group_table: Option<PathBuf>,
}

impl KbConfig {
    pub fn umls(name: impl Into<String>, meta_path: impl Into<PathBuf>, languages: &[&str]) -> Self {
        Self {
            name: name.into(),
            source: KbSource::UmlsRrf,
            meta_path: Some(meta_path.into()),
            languages: languages.iter().map(|s| s.to_string()).collect(),
            semantic_groups: None,
            source_vocabularies: None,
            include_suppressed: false,
            group_table: None,
        }
    }

    pub fn jsonl(name: impl Into<String>, path: impl Into<PathBuf>, languages: &[&str]) -> Self {
        Self {
            source: KbSource::Jsonl,
            ..Self::umls(name, path, languages)
        }
    }

    /// Parses the YAML config. Relative paths resolve against `base_dir`.
    pub fn from_yaml(raw: &str, base_dir: &Path) -> Result<Self> {
        let file: ConfigFile = serde_yaml::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let cfg = match (file.dict.umls, file.dict.jsonl) {
            (Some(u), None) => KbConfig {
                name: file.name,
                source: KbSource::UmlsRrf,
                meta_path: Some(resolve(u.meta_path)),
                languages: u.lang,
                semantic_groups: u.semantic_groups,
                source_vocabularies: u.source_vocabularies,
                include_suppressed: u.include_suppressed,
                group_table: u.semantic_group_table.map(resolve),
            },
            (None, Some(j)) => KbConfig {
                name: file.name,
                source: KbSource::Jsonl,
                meta_path: Some(resolve(j.path)),
                languages: j.lang,
                semantic_groups: j.semantic_groups,
                source_vocabularies: None,
                include_suppressed: false,
                group_table: j.semantic_group_table.map(resolve),
            },
            (Some(_), Some(_)) => return Err(Error::Config("dict must have exactly one of `umls`, `jsonl`".into())),
            (None, None) => return Err(Error::Config("dict needs a `umls` or `jsonl` section".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_yaml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml(&raw, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<()> {
        if self.meta_path.is_none() {
            return Err(Error::Config(format!("{:?} source requires meta_path", self.source)));
        }
        if self.source == KbSource::UmlsRrf {
            if self.languages.is_empty() {
                return Err(Error::Config("umls source needs at least one language".into()));
            }
            for l in &self.languages {
                if umls_language(l).is_none() {
                    return Err(Error::Config(format!("unsupported language code {l:?}")));
                }
            }
        }
        Ok(())
    }

    fn group_map(&self) -> Result<BTreeMap<String, String>> {
        match &self.group_table {
            Some(p) => load_group_map(p),
            None => Ok(default_group_map()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: String,
    dict: DictSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictSection {
    umls: Option<UmlsSection>,
    jsonl: Option<JsonlSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UmlsSection {
    lang: Vec<String>,
    meta_path: PathBuf,
    semantic_groups: Option<Vec<String>>,
    source_vocabularies: Option<Vec<String>>,
    #[serde(default)]
    include_suppressed: bool,
    semantic_group_table: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlSection {
    path: PathBuf,
    #[serde(default)]
    lang: Vec<String>,
    semantic_groups: Option<Vec<String>>,
    semantic_group_table: Option<PathBuf>,
}

pub fn build_kb(config: &KbConfig) -> Result<KnowledgeBase> {
    config.validate()?;
    let group_map = config.group_map()?;
    let path = config.meta_path.as_deref().expect("validated");
    let concepts = match config.source {
        KbSource::UmlsRrf => build_from_rrf(config, path, &group_map)?,
        KbSource::Jsonl => build_from_jsonl(config, path, &group_map)?,
    };
    if concepts.is_empty() {
        return Err(Error::EmptyKb(format!(
            "no concepts in {} matched languages {:?} and groups {:?}",
            path.display(),
            config.languages,
            config.semantic_groups
        )));
    }
    KnowledgeBase::new(config.name.clone(), concepts, group_map)
}

fn in_groups(types: &[String], groups: Option<&Vec<String>>, group_map: &BTreeMap<String, String>) -> bool {
    match groups {
        None => true,
        Some(gs) => types
            .iter()
            .filter_map(|t| group_map.get(t))
            .any(|g| gs.iter().any(|x| x == g)),
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

fn build_from_rrf(config: &KbConfig, dir: &Path, group_map: &BTreeMap<String, String>) -> Result<Vec<Concept>> {
    let sty_path = dir.join("MRSTY.RRF");
    let mut types: HashMap<String, Vec<String>> = HashMap::new();
    for (row, line) in open_lines(&sty_path)? {
        let line = line.map_err(|e| Error::io(&sty_path, e))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('|').collect();
        if f.len() < 4 || f[0].is_empty() || f[1].is_empty() {
            return Err(Error::MalformedRow {
                file: sty_path.display().to_string(),
                row,
                message: format!("expected CUI|TUI|STN|STY|..., got {} fields", f.len()),
            });
        }
        let entry = types.entry(f[0].to_string()).or_default();
        if !entry.iter().any(|t| t == f[1]) {
            entry.push(f[1].to_string());
        }
    }

    let langs: HashSet<&str> = config.languages.iter().filter_map(|l| umls_language(l)).collect();
    let conso_path = dir.join("MRCONSO.RRF");
    struct Acc {
        aliases: Vec<Alias>,
        seen: HashSet<Alias>,
        preferred: Option<String>,
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for (row, line) in open_lines(&conso_path)? {
        let line = line.map_err(|e| Error::io(&conso_path, e))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('|').collect();
        if f.len() < 17 || f[0].is_empty() {
            return Err(Error::MalformedRow {
                file: conso_path.display().to_string(),
                row,
                message: format!("expected at least 17 fields, got {}", f.len()),
            });
        }
        let (cui, lat, ts, stt, ispref, sab, value, suppress) = (f[0], f[1], f[2], f[4], f[6], f[11], f[14], f[16]);
        if !langs.contains(lat) || value.is_empty() {
            continue;
        }
        if !config.include_suppressed && SUPPRESSED.contains(&suppress) {
            continue;
        }
        if let Some(v) = &config.source_vocabularies {
            if !v.iter().any(|s| s == sab) {
                continue;
            }
        }
        let cui_types = types.get(cui).map(Vec::as_slice).unwrap_or_default();
        if !in_groups(cui_types, config.semantic_groups.as_ref(), group_map) {
            continue;
        }
        let lang = language_from_umls(lat).expect("filtered by configured languages");
        let a = acc.entry(cui.to_string()).or_insert_with(|| Acc {
            aliases: Vec::new(),
            seen: HashSet::new(),
            preferred: None,
        });
        let alias = Alias::new(value, lang);
        if a.seen.insert(alias.clone()) {
            a.aliases.push(alias);
        }
        if a.preferred.is_none() && ts == "P" && stt == "PF" && ispref == "Y" {
            a.preferred = Some(value.to_string());
        }
    }

    Ok(acc
        .into_iter()
        .map(|(cui, a)| {
            let canonical = a.preferred.unwrap_or_else(|| a.aliases[0].value.clone());
            let mut aliases = a.aliases;
            aliases.sort_by(|x, y| (&x.lang, &x.value).cmp(&(&y.lang, &y.value)));
            Concept {
                semantic_types: types.get(&cui).cloned().unwrap_or_default(),
                concept_id: cui,
                canonical_name: canonical,
                aliases,
            }
        })
        .collect())
}

#[derive(Deserialize)]
struct DictionaryEntry {
    concept_id: String,
    canonical_name: Option<String>,
    #[serde(default)]
    semantic_types: Vec<String>,
    aliases: Vec<Alias>,
}

fn build_from_jsonl(config: &KbConfig, path: &Path, group_map: &BTreeMap<String, String>) -> Result<Vec<Concept>> {
    let mut out: BTreeMap<String, Concept> = BTreeMap::new();
    for (row, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: DictionaryEntry = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            file: path.display().to_string(),
            row,
            message: e.to_string(),
        })?;
        if out.contains_key(&entry.concept_id) {
            return Err(Error::DuplicateConcept(entry.concept_id));
        }
        if !in_groups(&entry.semantic_types, config.semantic_groups.as_ref(), group_map) {
            continue;
        }
        let mut seen = HashSet::new();
        let kept: Vec<Alias> = entry
            .aliases
            .into_iter()
            .filter(|a| !a.value.is_empty())
            .filter(|a| config.languages.is_empty() || config.languages.contains(&a.lang))
            .filter(|a| seen.insert(a.clone()))
            .collect();
        if kept.is_empty() {
            continue;
        }
        // Non-UMLS sources have no preferred-term flag: the first kept alias
        // stands in unless the given canonical name survived the filters.
        let canonical = entry
            .canonical_name
            .filter(|c| kept.iter().any(|a| &a.value == c))
            .unwrap_or_else(|| kept[0].value.clone());
        let mut aliases = kept;
        aliases.sort_by(|x, y| (&x.lang, &x.value).cmp(&(&y.lang, &y.value)));
        out.insert(
            entry.concept_id.clone(),
            Concept {
                concept_id: entry.concept_id,
                canonical_name: canonical,
                semantic_types: entry.semantic_types,
                aliases,
            },
        );
    }
    Ok(out.into_values().collect())
}

/// Loads a KB JSONL file, keeping alias order as written.
pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    load_kb_with_groups(path, default_group_map())
}

pub fn load_kb_with_groups(path: impl AsRef<Path>, group_map: BTreeMap<String, String>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let mut concepts = Vec::new();
    let mut ids = HashSet::new();
    for (row, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Concept = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: format!("{} line {row}", path.display()),
            message: e.to_string(),
        })?;
        if !ids.insert(c.concept_id.clone()) {
            return Err(Error::DuplicateConcept(c.concept_id));
        }
        concepts.push(c);
    }
    if concepts.is_empty() {
        return Err(Error::EmptyKb(format!("{} has no concepts", path.display())));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    KnowledgeBase::new(name, concepts, group_map)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AliasReport {
    pub added: usize,
    pub skipped: usize,
    pub unknown_ids: Vec<String>,
    pub malformed_rows: Vec<usize>,
}

/// Extends alias lists from a `concept_id<TAB>value<TAB>lang` file.
///
/// Aliases already present (compared case-insensitively within the concept)
/// are skipped; rows for ids missing from the KB are reported, not fatal.
pub fn add_alias_source(kb: &KnowledgeBase, aliases: impl AsRef<Path>) -> Result<(KnowledgeBase, AliasReport)> {
    let path = aliases.as_ref();
    let mut out = kb.clone();
    let mut report = AliasReport::default();
    let mut lowered: HashMap<String, HashSet<String>> = HashMap::new();
    for (row, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 || f[1].is_empty() {
            report.malformed_rows.push(row);
            continue;
        }
        let (id, value, lang) = (f[0], f[1], f[2]);
        let Some(concept) = out.concepts.get_mut(id) else {
            if !report.unknown_ids.iter().any(|u| u == id) {
                report.unknown_ids.push(id.to_string());
            }
            continue;
        };
        let seen = lowered
            .entry(id.to_string())
            .or_insert_with(|| concept.aliases.iter().map(|a| a.value.to_lowercase()).collect());
        if seen.insert(value.to_lowercase()) {
            concept.aliases.push(Alias::new(value, lang));
            report.added += 1;
        } else {
            report.skipped += 1;
        }
    }
    Ok((out, report))
}
