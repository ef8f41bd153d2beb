//! Dense-vector candidate generation over a pluggable embedding provider.
//!
//! Stored rows and queries are both L2-normalized, so the dot product is the
//! cosine similarity. Rows are kept as `f32`; dot products accumulate in `f64`
//! in dimension order.
//!
//! Index directory: `manifest.json`, `rows.json` (`[concept_id, alias]` per
//! row) and `matrix.f32` (row-major, little-endian, `n_rows * dim` values).

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::candidates::{Candidate, CandidateList, Source};
use crate::error::{Error, Result};
use crate::http::{self, RetryPolicy};
use crate::kb::KnowledgeBase;
use crate::manifest::{binio, read_json, write_json, IndexManifest, RunManifest};
use crate::sparse::RowLabel;
use crate::text::{padded_char_ngrams, sha256_hex};

pub const FORMAT_VERSION: u32 = 1;
pub const KIND: &str = "dense";
pub const DEFAULT_DIM: usize = 256;
/// Environment variable holding the remote embedding endpoint URL.
pub const ENDPOINT_ENV: &str = "MENORM_EMBED_ENDPOINT";

pub trait EmbeddingProvider: Send + Sync {
    /// Provider name plus version; an index only accepts queries from the same identity.
    fn identity(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of character 2- to 4-grams (lowercased, space padded).
#[derive(Debug, Clone)]
pub struct HashNgramProvider {
    dim: usize,
}

impl HashNgramProvider {
    pub const MIN_N: usize = 2;
    pub const MAX_N: usize = 4;

    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("hash provider dimension must be positive".into()));
        }
        Ok(Self { dim })
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for n in Self::MIN_N..=Self::MAX_N {
            for g in padded_char_ngrams(text, n) {
                let h = fnv1a64(g.as_bytes());
                let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
                v[(h % self.dim as u64) as usize] += sign;
            }
        }
        // All n-grams can cancel out; fall back to one bucket for the whole text.
        if v.iter().all(|x| *x == 0.0) {
            v[(fnv1a64(text.to_lowercase().as_bytes()) % self.dim as u64) as usize] = 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl Default for HashNgramProvider {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl EmbeddingProvider for HashNgramProvider {
    fn identity(&self) -> String {
        format!("hash-ngram-v1:d={}:n={}-{}", self.dim, Self::MIN_N, Self::MAX_N)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Deserialize)]
struct VectorRecord {
    text: String,
    vector: Vec<f64>,
}

/// Vectors looked up from a JSONL file of `{"text": ..., "vector": [...]}` records.
#[derive(Debug, Clone)]
pub struct PrecomputedProvider {
    vectors: HashMap<String, Vec<f64>>,
    dim: usize,
    digest: String,
}

impl PrecomputedProvider {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in raw.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let ctx = || format!("{} line {}", path.display(), i + 1);
            let rec: VectorRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                context: ctx(),
                message: e.to_string(),
            })?;
            if rec.vector.is_empty() || rec.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::Embedding(format!("{}: empty or non-finite vector", ctx())));
            }
            match dim {
                None => dim = Some(rec.vector.len()),
                Some(d) if d != rec.vector.len() => {
                    return Err(Error::Embedding(format!(
                        "{}: vector length {} differs from {d}",
                        ctx(),
                        rec.vector.len()
                    )))
                }
                _ => {}
            }
            vectors.insert(rec.text, rec.vector);
        }
        let dim = dim.ok_or_else(|| Error::Embedding(format!("{}: no vectors", path.display())))?;
        Ok(Self {
            vectors,
            dim,
            digest: sha256_hex(&raw)[..16].to_string(),
        })
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn identity(&self) -> String {
        format!("precomputed:{}:d={}", self.digest, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| self.vectors.get(t).cloned().ok_or_else(|| Error::MissingVector(t.clone())))
            .collect()
    }
}

/// JSON-over-HTTP provider: POST `{"texts": [...]}` → `{"vectors": [[...]]}`.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    endpoint: String,
    dim: usize,
    identity: Option<String>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteProvider {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            dim,
            identity: None,
            batch_size: 64,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_env(dim: usize) -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| Error::Config(format!("remote provider needs {ENDPOINT_ENV} to be set")))?;
        Ok(Self::new(endpoint, dim))
    }

    /// Pin the identity, e.g. to the model checkpoint served behind the endpoint.
    pub fn with_identity(mut self, identity: impl Into<String>) -> Self {
        self.identity = Some(identity.into());
        self
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn identity(&self) -> String {
        self.identity
            .clone()
            .unwrap_or_else(|| format!("remote:{}:d={}", self.endpoint, self.dim))
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let agent = http::agent(&self.retry);
        let batches: Vec<&[String]> = texts.chunks(self.batch_size.max(1)).collect();
        let results = http::bounded_map(&batches, self.max_in_flight, |batch| {
            let r: EmbedResponse = http::post_json(&agent, &self.endpoint, &EmbedRequest { texts: batch }, &self.retry)?;
            if r.vectors.len() != batch.len() {
                return Err(Error::Embedding(format!(
                    "endpoint returned {} vectors for {} texts",
                    r.vectors.len(),
                    batch.len()
                )));
            }
            Ok(r.vectors)
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

/// Parse a provider spec: `hash`, `hash:<dim>`, `precomputed:<path>` or `remote:<dim>`
/// (endpoint from the environment).
pub fn provider_from_spec(spec: &str) -> Result<Box<dyn EmbeddingProvider>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let dim = |a: &str| -> Result<usize> {
        a.parse()
            .map_err(|_| Error::Config(format!("invalid dimension {a:?} in provider spec {spec:?}")))
    };
    match kind {
        "hash" if arg.is_empty() => Ok(Box::new(HashNgramProvider::default())),
        "hash" => Ok(Box::new(HashNgramProvider::new(dim(arg)?)?)),
        "precomputed" if !arg.is_empty() => Ok(Box::new(PrecomputedProvider::load(arg)?)),
        "remote" => Ok(Box::new(RemoteProvider::from_env(if arg.is_empty() {
            768
        } else {
            dim(arg)?
        })?)),
        _ => Err(Error::Config(format!("unknown embedding provider spec {spec:?}"))),
    }
}

/// Embed non-empty texts, checking count, dimension and finiteness of the output.
pub fn embed_texts(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<Vec<f64>>> {
    if let Some(i) = texts.iter().position(|t| t.is_empty()) {
        return Err(Error::Embedding(format!("text {i} is empty")));
    }
    let out = provider.embed(texts)?;
    if out.len() != texts.len() {
        return Err(Error::Embedding(format!("{} vectors for {} texts", out.len(), texts.len())));
    }
    for (t, v) in texts.iter().zip(&out) {
        if v.len() != provider.dim() {
            return Err(Error::Embedding(format!(
                "vector for {t:?} has length {}, expected {}",
                v.len(),
                provider.dim()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of {t:?}")));
        }
    }
    Ok(out)
}

/// Normalize in `f64`, then narrow to `f32`.
pub fn normalize_to_f32(v: &[f64]) -> Result<Vec<f32>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Embedding("zero vector cannot be normalized".into()));
    }
    Ok(v.iter().map(|x| (x / norm) as f32).collect())
}

/// Dot product of two `f32` vectors accumulated in `f64`, in index order.
pub fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + *x as f64 * *y as f64)
}

#[derive(Debug, Clone)]
pub struct DenseIndex {
    provider_identity: String,
    dim: usize,
    rows: Vec<RowLabel>,
    matrix: Vec<f32>,
    kb_hash: String,
}

pub fn build_dense_index(kb: &KnowledgeBase, provider: &dyn EmbeddingProvider) -> Result<DenseIndex> {
    if kb.is_empty() {
        return Err(Error::EmptyKb("cannot index an empty knowledge base".into()));
    }
    let rows: Vec<RowLabel> = kb
        .alias_rows()
        .map(|(c, a)| RowLabel {
            concept_id: c.to_string(),
            alias: a.to_string(),
        })
        .collect();
    let texts: Vec<String> = rows.iter().map(|r| r.alias.clone()).collect();
    let mut matrix = Vec::with_capacity(rows.len() * provider.dim());
    for v in embed_texts(provider, &texts)? {
        matrix.extend(normalize_to_f32(&v)?);
    }
    Ok(DenseIndex {
        provider_identity: provider.identity(),
        dim: provider.dim(),
        rows,
        matrix,
        kb_hash: kb.kb_hash(),
    })
}

impl DenseIndex {
    pub fn provider_identity(&self) -> &str {
        &self.provider_identity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kb_hash(&self) -> &str {
        &self.kb_hash
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[RowLabel] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn check_provider(&self, provider: &dyn EmbeddingProvider) -> Result<()> {
        let query = provider.identity();
        if query != self.provider_identity {
            return Err(Error::IdentityMismatch {
                index: self.provider_identity.clone(),
                query,
            });
        }
        Ok(())
    }

    /// Top-k concepts for an already normalized query vector.
    pub fn search(&self, q: &[f32], k: usize) -> Vec<Candidate> {
        let mut best: HashMap<&str, f64> = HashMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            let s = dot_f32(q, self.row(i)).clamp(-1.0, 1.0);
            let e = best.entry(r.concept_id.as_str()).or_insert(s);
            if s > *e {
                *e = s;
            }
        }
        let mut l = CandidateList::new(
            "",
            "",
            best.into_iter().map(|(c, s)| Candidate::new(c, s, Source::Dense)).collect(),
        );
        l.truncate(k);
        l.candidates
    }

    pub fn save(&self, dir: impl AsRef<Path>, run: Option<RunManifest>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        IndexManifest {
            format_version: FORMAT_VERSION,
            kind: KIND.into(),
            kb_hash: self.kb_hash.clone(),
            n_rows: self.rows.len(),
            params: json!({
                "provider_identity": self.provider_identity,
                "dim": self.dim,
                "dtype": "f32le",
                "normalization": "rows and queries L2-normalized; dot product equals cosine",
            }),
            run,
        }
        .write(dir)?;
        let rows: Vec<[&str; 2]> = self.rows.iter().map(|r| [r.concept_id.as_str(), r.alias.as_str()]).collect();
        write_json(&dir.join("rows.json"), &rows)?;
        binio::write_f32(&dir.join("matrix.f32"), &self.matrix)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m = IndexManifest::read(dir)?;
        if m.kind != KIND || m.format_version != FORMAT_VERSION {
            return Err(Error::IndexFormat(format!(
                "expected {KIND} v{FORMAT_VERSION}, found {} v{}",
                m.kind, m.format_version
            )));
        }
        let provider_identity = m.params["provider_identity"]
            .as_str()
            .ok_or_else(|| Error::IndexFormat("manifest lacks provider_identity".into()))?
            .to_string();
        let dim = m.params["dim"]
            .as_u64()
            .ok_or_else(|| Error::IndexFormat("manifest lacks dim".into()))? as usize;
        let rows: Vec<[String; 2]> = read_json(&dir.join("rows.json"))?;
        let matrix = binio::read_f32(&dir.join("matrix.f32"))?;
        if rows.len() != m.n_rows || matrix.len() != rows.len() * dim {
            return Err(Error::IndexFormat(format!("{}: inconsistent array lengths", dir.display())));
        }
        Ok(Self {
            provider_identity,
            dim,
            rows: rows
                .into_iter()
                .map(|[concept_id, alias]| RowLabel { concept_id, alias })
                .collect(),
            matrix,
            kb_hash: m.kb_hash,
        })
    }
}

/// Cosine top-k per mention using the raw mention strings.
pub fn query_dense(
    index: &DenseIndex,
    provider: &dyn EmbeddingProvider,
    mentions: &[&str],
    k: usize,
) -> Result<Vec<Vec<Candidate>>> {
    index.check_provider(provider)?;
    if k < 1 {
        return Err(Error::InvalidK { k, min: 1 });
    }
    if mentions.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = mentions.iter().map(|m| m.to_string()).collect();
    embed_texts(provider, &texts)?
        .iter()
        .map(|v| Ok(index.search(&normalize_to_f32(v)?, k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Alias, Concept};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn kb(entries: &[(&str, &[&str])]) -> KnowledgeBase {
        KnowledgeBase::new(
            "t",
            entries
                .iter()
                .map(|(id, aliases)| Concept {
                    concept_id: id.to_string(),
                    canonical_name: aliases[0].to_string(),
                    semantic_types: vec!["T047".into()],
                    aliases: aliases.iter().map(|a| Alias::new(*a, "en")).collect(),
                })
                .collect(),
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn hash_provider_contract() {
        let p = HashNgramProvider::default();
        let a = p.embed_one("insuffisance cardiaque");
        assert_eq!(a.len(), 256);
        assert!((a.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(a, p.embed_one("insuffisance cardiaque"));
        assert_eq!(a, p.embed_one("Insuffisance Cardiaque"));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn three_alias_kb_has_three_rows() {
        let idx = build_dense_index(&kb(&[("A", &["x ray", "xray"]), ("B", &["fever"])]), &HashNgramProvider::default())
            .unwrap();
        assert_eq!(idx.n_rows(), 3);
        for i in 0..3 {
            let n: f64 = idx.row(i).iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn alias_query_scores_one() {
        let p = HashNgramProvider::default();
        let idx = build_dense_index(&kb(&[("A", &["heart failure"]), ("B", &["kidney failure"])]), &p).unwrap();
        let hits = query_dense(&idx, &p, &["heart failure"], 5).unwrap().remove(0);
        assert_eq!(hits[0].concept_id, "A");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert!(hits.iter().all(|c| (-1.0..=1.0).contains(&c.score)));
    }

    #[test]
    fn english_only_kb_still_answers_foreign_queries() {
        let p = HashNgramProvider::default();
        let idx = build_dense_index(&kb(&[("A", &["cardiac insufficiency"]), ("B", &["diabetes"])]), &p).unwrap();
        let hits = query_dense(&idx, &p, &["insuffisance cardiaque"], 5).unwrap().remove(0);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].concept_id, "A");
    }

    #[test]
    fn identity_mismatch_detected() {
        let idx = build_dense_index(&kb(&[("A", &["fever"])]), &HashNgramProvider::default()).unwrap();
        let other = HashNgramProvider::new(128).unwrap();
        assert!(matches!(
            query_dense(&idx, &other, &["fever"], 1),
            Err(Error::IdentityMismatch { .. })
        ));
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let base = kb(&[("A", &["fever", "pyrexia"]), ("B", &["cough"])]);
        let p = HashNgramProvider::default();
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        build_dense_index(&base, &p).unwrap().save(d1.path(), None).unwrap();
        build_dense_index(&base, &p).unwrap().save(d2.path(), None).unwrap();
        for f in ["manifest.json", "rows.json", "matrix.f32"] {
            assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap());
        }
        let loaded = DenseIndex::load(d1.path()).unwrap();
        assert_eq!(
            query_dense(&loaded, &p, &["fevers"], 2).unwrap(),
            query_dense(&build_dense_index(&base, &p).unwrap(), &p, &["fevers"], 2).unwrap()
        );
    }

    #[test]
    fn precomputed_lookup() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"text":"fever","vector":[1.0,0.0]}}"#).unwrap();
        writeln!(f, r#"{{"text":"cough","vector":[0.0,2.0]}}"#).unwrap();
        let p = PrecomputedProvider::load(f.path()).unwrap();
        assert_eq!(p.dim(), 2);
        assert!(p.identity().starts_with("precomputed:"));
        match embed_texts(&p, &["rash".to_string()]) {
            Err(Error::MissingVector(t)) => assert_eq!(t, "rash"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(embed_texts(&p, &["cough".to_string()]).unwrap(), [vec![0.0, 2.0]]);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(embed_texts(&HashNgramProvider::default(), &[String::new()]).is_err());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(provider_from_spec("hash").unwrap().dim(), 256);
        assert_eq!(provider_from_spec("hash:64").unwrap().dim(), 64);
        assert!(provider_from_spec("hash:x").is_err());
        assert!(provider_from_spec("bogus").is_err());
    }

    /// Serve `n` HTTP requests, answering each with 2-d vectors `[len(text), i]`.
    fn mock_server(n: usize, fail_first: usize) -> (String, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        let h = std::thread::spawn(move || {
            for i in 0..n {
                let (mut s, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                let body = loop {
                    let r = s.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..r]);
                    let text = String::from_utf8_lossy(&buf).to_string();
                    if let Some(p) = text.find("\r\n\r\n") {
                        let len: usize = text[..p]
                            .lines()
                            .find_map(|l| {
                                let (k, v) = l.split_once(':')?;
                                k.eq_ignore_ascii_case("content-length").then(|| v.trim().parse().ok())?
                            })
                            .unwrap_or(0);
                        if buf.len() >= p + 4 + len {
                            break text[p + 4..p + 4 + len].to_string();
                        }
                    }
                };
                let resp = if i < fail_first {
                    "HTTP/1.1 503 Service Unavailable\r\ncontent-length: 0\r\nconnection: close\r\n\r\n".to_string()
                } else {
                    let req: serde_json::Value = serde_json::from_str(&body).unwrap();
                    let vectors: Vec<Vec<f64>> = req["texts"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|t| vec![t.as_str().unwrap().chars().count() as f64, 1.0])
                        .collect();
                    let payload = json!({ "vectors": vectors }).to_string();
                    format!(
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                        payload.len()
                    )
                };
                s.write_all(resp.as_bytes()).unwrap();
            }
        });
        (url, h)
    }

    #[test]
    fn remote_provider_preserves_order_across_batches() {
        let (url, h) = mock_server(3, 0);
        let mut p = RemoteProvider::new(url, 2);
        p.batch_size = 2;
        p.max_in_flight = 2;
        let texts: Vec<String> = ["a", "bb", "ccc", "dddd", "eeeee"].iter().map(|s| s.to_string()).collect();
        let out = embed_texts(&p, &texts).unwrap();
        h.join().unwrap();
        let firsts: Vec<f64> = out.iter().map(|v| v[0]).collect();
        assert_eq!(firsts, [1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn remote_provider_retries_then_gives_up() {
        let (url, h) = mock_server(2, 1);
        let mut p = RemoteProvider::new(url.clone(), 2);
        p.retry.backoff = std::time::Duration::from_millis(1);
        assert_eq!(embed_texts(&p, &["x".to_string()]).unwrap(), [vec![1.0, 1.0]]);
        h.join().unwrap();

        let (url, h) = mock_server(2, 2);
        let mut p = RemoteProvider::new(url, 2);
        p.retry.attempts = 2;
        p.retry.backoff = std::time::Duration::from_millis(1);
        assert!(matches!(
            embed_texts(&p, &["x".to_string()]),
            Err(Error::Transport { attempts: 2, .. })
        ));
        h.join().unwrap();
    }
}
