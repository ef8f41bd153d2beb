use std::collections::{BTreeSet, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use menorm::abbrev::expand_abbreviations;
use menorm::candidates::{read_candidates, write_candidates};
use menorm::datamodel::{load_dataset, parse_dataset, DatasetFormat};
use menorm::dense::{provider_from_spec, EmbeddingProvider};
use menorm::eval::{evaluate, predictions_from_dataset, predictions_from_lists};
use menorm::manifest::{IndexManifest, RunManifest};
use menorm::pipeline::{
    filter_by_semantic_group, identity_type_map, link_dataset, parse_type_map, CandidateGenerator, DenseGenerator,
    FilterStats, LinkOptions, TypeGroupMap,
};
use menorm::projection::{project_dataset, FnTranslator, ProjectionOptions, RemoteTranslator, Translator};
use menorm::reranker::{encode_batch, rerank_dataset, train_reranker, FeatureContext, RerankerConfig, RerankerModel};
use menorm::text::sha256_hex;
use menorm::{build_dense_index, build_kb, build_sparse_index, load_kb, CandidateList, Dataset, DenseIndex, Error, KbConfig, KnowledgeBase, SparseIndex};

use crate::{
    Command, DictArgs, EvalArgs, FilterArgs, IndexArgs, IndexKind, LinkArgs, ProjectArgs, ReportFormat, RerankArgs,
    TrainArgs, TranslatorKind,
};

pub(crate) fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Dict(a) => dict(a),
        Command::Index(a) => index(a),
        Command::Link(a) => link(a),
        Command::Filter(a) => filter(a),
        Command::TrainReranker(a) => train(a),
        Command::Rerank(a) => rerank(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Project(a) => project(a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e).into())
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e).into())
}

fn dataset(path: &Path) -> Result<Dataset> {
    Ok(load_dataset(path, DatasetFormat::BigbioJson)?)
}

fn kb(path: &Path) -> Result<KnowledgeBase> {
    load_kb(path).with_context(|| format!("loading knowledge base {}", path.display()))
}

fn type_map(path: Option<&PathBuf>, kb: &KnowledgeBase) -> Result<TypeGroupMap> {
    match path {
        Some(p) => Ok(parse_type_map(&String::from_utf8_lossy(&read(p)?))?),
        None => Ok(identity_type_map(kb)),
    }
}

fn split_of(ds: &Dataset, name: &str) -> Result<Dataset> {
    let docs = ds.split(name).ok_or_else(|| {
        let have: Vec<&String> = ds.splits.keys().collect();
        Error::Config(format!("dataset has no split {name:?} (splits: {have:?})"))
    })?;
    Ok(Dataset::single(name, docs.to_vec()))
}

/// Refuse an artifact whose sidecar manifest names a different KB. Artifacts
/// without a sidecar (hand-made files) are accepted unchecked.
fn check_kb_hash(artifact: &Path, expected: &str) -> Result<()> {
    let sidecar = RunManifest::sidecar_path(artifact);
    if !sidecar.exists() {
        return Ok(());
    }
    match RunManifest::read(&sidecar)?.kb_hash {
        Some(found) if found != expected => Err(Error::KbHashMismatch {
            expected: expected.to_string(),
            found,
        }
        .into()),
        _ => Ok(()),
    }
}

fn dict(a: DictArgs) -> Result<()> {
    let raw = read(&a.config)?;
    let cfg = KbConfig::from_yaml_file(&a.config)?;
    let kb = build_kb(&cfg)?;
    kb.save(&a.out)?;
    RunManifest::new(
        "dict",
        json!({ "config": a.config, "concepts": kb.len(), "aliases": kb.alias_count() }),
    )
    .with_config_digest(sha256_hex(&raw))
    .with_kb_hash(kb.kb_hash())
    .write_sidecar(&a.out)?;
    eprintln!("{}: {} concepts, {} aliases", a.out.display(), kb.len(), kb.alias_count());
    Ok(())
}

fn index(a: IndexArgs) -> Result<()> {
    let kb = kb(&a.kb)?;
    let params = |extra: serde_json::Value| json!({ "kb": a.kb, "kind": format!("{:?}", a.kind).to_lowercase(), "extra": extra });
    match a.kind {
        IndexKind::Tfidf => {
            let idx = build_sparse_index(&kb)?;
            let run = RunManifest::new("index", params(json!({}))).with_kb_hash(kb.kb_hash());
            idx.save(&a.out, Some(run))?;
            eprintln!("{}: {} rows, {} terms", a.out.display(), idx.n_rows(), idx.n_terms());
        }
        IndexKind::Dense => {
            let provider = provider_from_spec(&a.provider)?;
            let idx = build_dense_index(&kb, provider.as_ref())?;
            let run = RunManifest::new("index", params(json!({ "provider": a.provider }))).with_kb_hash(kb.kb_hash());
            idx.save(&a.out, Some(run))?;
            eprintln!("{}: {} rows, dim {}", a.out.display(), idx.n_rows(), idx.dim());
        }
    }
    Ok(())
}

enum Loaded {
    Sparse(SparseIndex),
    Dense(DenseIndex),
}

fn load_index(dir: &Path) -> Result<Loaded> {
    let m = IndexManifest::read(dir)?;
    match m.kind.as_str() {
        menorm::sparse::KIND => Ok(Loaded::Sparse(SparseIndex::load(dir)?)),
        menorm::dense::KIND => Ok(Loaded::Dense(DenseIndex::load(dir)?)),
        other => Err(Error::IndexFormat(format!("{}: unknown index kind {other:?}", dir.display())).into()),
    }
}

fn link(a: LinkArgs) -> Result<()> {
    let mut ds = dataset(&a.dataset)?;
    if a.expand_abbreviations {
        ds = expand_abbreviations(&ds);
    }
    let expected = a.kb.as_deref().map(kb).transpose()?.map(|kb| kb.kb_hash());
    let loaded: Vec<Loaded> = a.indices.iter().map(|d| load_index(d)).collect::<Result<_>>()?;
    let provider: Option<Box<dyn EmbeddingProvider>> = if loaded.iter().any(|l| matches!(l, Loaded::Dense(_))) {
        Some(provider_from_spec(&a.provider)?)
    } else {
        None
    };
    let dense: Vec<DenseGenerator> = loaded
        .iter()
        .filter_map(|l| match l {
            Loaded::Dense(index) => Some(DenseGenerator {
                index,
                provider: provider.as_deref().expect("provider loaded for dense indices"),
            }),
            Loaded::Sparse(_) => None,
        })
        .collect();
    let mut dense_iter = dense.iter();
    let generators: Vec<&dyn CandidateGenerator> = loaded
        .iter()
        .map(|l| match l {
            Loaded::Sparse(s) => s as &dyn CandidateGenerator,
            Loaded::Dense(_) => dense_iter.next().expect("one generator per dense index") as &dyn CandidateGenerator,
        })
        .collect();
    let opts = LinkOptions { k: a.k, filter: None };
    let (lists, _) = link_dataset(&ds, &generators, &opts, expected.as_deref())?;
    write_candidates(&a.out, &lists)?;
    let kb_hash = generators[0].kb_hash().to_string();
    RunManifest::new(
        "link",
        json!({
            "indices": a.indices,
            "generators": generators.iter().map(|g| g.name()).collect::<Vec<_>>(),
            "dataset": a.dataset,
            "k": a.k,
            "provider": provider.map(|p| p.identity()),
            "expand_abbreviations": a.expand_abbreviations,
        }),
    )
    .with_kb_hash(kb_hash)
    .write_sidecar(&a.out)?;
    eprintln!("{}: {} candidate lists", a.out.display(), lists.len());
    Ok(())
}

fn filter(a: FilterArgs) -> Result<()> {
    let kb = kb(&a.kb)?;
    check_kb_hash(&a.candidates, &kb.kb_hash())?;
    let ds = dataset(&a.dataset)?;
    let map = type_map(a.type_map.as_ref(), &kb)?;
    let types: HashMap<(&str, &str), Option<&str>> = ds
        .documents()
        .flat_map(|d| d.mentions.iter().map(move |m| ((d.id.as_str(), m.id.as_str()), m.entity_type.as_deref())))
        .collect();
    let lists = read_candidates(&a.candidates)?;
    let mut stats = FilterStats::default();
    let mut out = Vec::with_capacity(lists.len());
    for l in &lists {
        let ty = types.get(&l.key()).ok_or_else(|| {
            Error::DocumentMismatch(format!("candidate list {}/{} has no mention in the dataset", l.document_id, l.mention_id))
        })?;
        out.push(filter_by_semantic_group(l, *ty, &kb, &map, &mut stats));
    }
    write_candidates(&a.out, &out)?;
    RunManifest::new("filter", json!({ "candidates": a.candidates, "type_map": a.type_map, "stats": stats }))
        .with_kb_hash(kb.kb_hash())
        .write_sidecar(&a.out)?;
    eprintln!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

fn reranker_config(a: &TrainArgs) -> Result<RerankerConfig> {
    let mut cfg = match &a.config {
        Some(p) => load_reranker_config(p)?,
        None => RerankerConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_reranker_config(path: &Path) -> Result<RerankerConfig> {
    let raw = read(path)?;
    RerankerConfig::from_yaml(&String::from_utf8_lossy(&raw))
        .with_context(|| format!("reading re-ranker config {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = reranker_config(&a)?;
    let kb = kb(&a.kb)?;
    check_kb_hash(&a.candidates, &kb.kb_hash())?;
    let ds = dataset(&a.dataset)?;
    let map = type_map(a.type_map.as_ref(), &kb)?;
    let lists = read_candidates(&a.candidates)?;
    let train_ds = split_of(&ds, &a.train_split)?;
    let val_name = a
        .val_split
        .clone()
        .or_else(|| ds.split("validation").map(|_| "validation".to_string()));
    let val_ds = val_name.as_deref().map(|n| split_of(&ds, n)).transpose()?;

    let ctx = FeatureContext { kb: &kb, type_map: &map };
    let (model, report) = train_reranker(
        (&train_ds, &lists),
        val_ds.as_ref().map(|v| (v, lists.as_slice())),
        &ctx,
        &cfg,
    )?;
    model.save(&a.out)?;
    let report_json = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(p) = &a.report {
        write(p, &report_json)?;
    }
    if let Some(p) = &a.export_batches {
        export_batches(p, &train_ds, &lists, &kb, &cfg)?;
    }
    RunManifest::new(
        "train-reranker",
        json!({
            "dataset": a.dataset,
            "candidates": a.candidates,
            "train_split": a.train_split,
            "val_split": val_name,
            "best_epoch": report.best_epoch,
            "best_val_f1": report.best_val_f1,
        }),
    )
    .with_config_digest(sha256_hex(serde_json::to_string(&cfg)?.as_bytes()))
    .with_kb_hash(kb.kb_hash())
    .write_sidecar(&a.out)?;
    print!("{report_json}");
    Ok(())
}

fn export_batches(path: &Path, ds: &Dataset, lists: &[CandidateList], kb: &KnowledgeBase, cfg: &RerankerConfig) -> Result<()> {
    let by_key: HashMap<(&str, &str), &CandidateList> = lists.iter().map(|l| (l.key(), l)).collect();
    let mut out = Vec::new();
    for doc in ds.documents() {
        for m in &doc.mentions {
            let empty = CandidateList::empty(doc.id.clone(), m.id.clone());
            let cl = by_key.get(&(doc.id.as_str(), m.id.as_str())).copied().unwrap_or(&empty);
            let b = encode_batch(doc, m, cl, kb, cfg.k, cfg.ctx_len)?;
            serde_json::to_writer(&mut out, &b)?;
            out.push(b'\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn rerank(a: RerankArgs) -> Result<()> {
    let kb = kb(&a.kb)?;
    let hash = kb.kb_hash();
    check_kb_hash(&a.candidates, &hash)?;
    check_kb_hash(&a.model, &hash)?;
    let model = RerankerModel::load(&a.model)?;
    let ds = dataset(&a.dataset)?;
    let ds = match &a.split {
        Some(s) => split_of(&ds, s)?,
        None => ds,
    };
    let map = type_map(a.type_map.as_ref(), &kb)?;
    let lists = read_candidates(&a.candidates)?;
    let ctx = FeatureContext { kb: &kb, type_map: &map };
    let out = rerank_dataset(&model, &ctx, &ds, &lists)?;
    write_candidates(&a.out, &out)?;
    RunManifest::new(
        "rerank",
        json!({ "model": a.model, "candidates": a.candidates, "split": a.split, "abstentions": out.iter().filter(|l| l.abstain).count() }),
    )
    .with_kb_hash(hash)
    .write_sidecar(&a.out)?;
    eprintln!("{}: {} re-ranked lists", a.out.display(), out.len());
    Ok(())
}

fn evaluate_cmd(a: EvalArgs) -> Result<()> {
    let gold = dataset(&a.gold)?;
    let gold = match &a.split {
        Some(s) => split_of(&gold, s)?,
        None => gold,
    };
    let kb = a.kb.as_deref().map(kb).transpose()?;
    if let Some(kb) = &kb {
        check_kb_hash(&a.pred, &kb.kb_hash())?;
    }
    let mut preds = match read_candidates(&a.pred) {
        Ok(lists) => predictions_from_lists(&gold_with_all_mentions(&a, &gold)?, &lists)?,
        Err(Error::Parse { .. }) => {
            let raw = read(&a.pred)?;
            let ds = parse_dataset(&String::from_utf8_lossy(&raw), &a.pred.display().to_string())?;
            predictions_from_dataset(&ds)
        }
        Err(e) => return Err(e.into()),
    };
    if a.split.is_some() {
        let docs: BTreeSet<&str> = gold.documents().map(|d| d.id.as_str()).collect();
        preds.retain(|p| docs.contains(p.document_id.as_str()));
    }
    let report = evaluate(&gold, &preds, &a.k, kb.as_ref())?;
    let body = match a.format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Table => report.to_table(),
    };
    std::io::stdout().write_all(body.as_bytes())?;
    Ok(())
}

/// Span lookup for candidate dumps: with `--split`, lists of other splits are
/// still resolved against the full dataset and dropped afterwards.
fn gold_with_all_mentions(a: &EvalArgs, gold: &Dataset) -> Result<Dataset> {
    match a.split {
        Some(_) => dataset(&a.gold),
        None => Ok(gold.clone()),
    }
}

fn project(a: ProjectArgs) -> Result<()> {
    let ds = dataset(&a.dataset)?;
    let opts = ProjectionOptions {
        salvage_partial: a.salvage_partial,
        max_in_flight: a.max_in_flight,
    };
    let identity = FnTranslator(|t: &str| Ok(t.to_string()));
    let remote;
    let translator: &dyn Translator = match a.translator {
        TranslatorKind::Identity => &identity,
        TranslatorKind::Remote => {
            remote = RemoteTranslator::from_env()?;
            &remote
        }
    };
    let (out, report) = project_dataset(&ds, translator, &opts)?;
    out.save(&a.out)?;
    let report_json = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(p) = &a.report {
        write(p, &report_json)?;
    }
    RunManifest::new(
        "project",
        json!({
            "dataset": a.dataset,
            "translator": format!("{:?}", a.translator).to_lowercase(),
            "salvage_partial": a.salvage_partial,
            "loss_percent": report.loss_percent,
        }),
    )
    .write_sidecar(&a.out)?;
    print!("{report_json}");
    Ok(())
}
