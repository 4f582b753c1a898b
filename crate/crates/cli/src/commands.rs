//! Subcommand implementations. Each writes its files through an
//! [`OutputSet`] and finishes with a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use log::{info, warn};
use termshift::cluster::{build_profiles, kmeans, profile_report, KMeansConfig, ZeroChangeDefinition};
use termshift::dictionary::ExclusionList;
use termshift::frequency::{aggregate_notes, corpus_deltas, section_table, summarize_deltas, SideSummary};
use termshift::synthgen::{generate, SynthSpec};
use termshift::transform::{
    detect_from_delta, section_distribution, summarize_pairs, summarize_run, TransformationEvent,
};
use termshift::{
    BuildReport, Corpus, DictionaryConfig, FilterConfig, IngestReport, Parallelism, SectionDelta, SectionLabel,
    TermDictionary,
};

use crate::analysis;
use crate::config::AnalysisConfig;
use crate::output::{fmt1, fmt2, fmt_p, sha256_hex, Manifest, OutputSet};
use crate::Failure;

#[derive(Debug)]
pub struct Run {
    pub cfg: AnalysisConfig,
    pub out_dir: PathBuf,
}

impl Run {
    fn parallelism(&self) -> Parallelism {
        if self.cfg.parallel {
            Parallelism::Rayon
        } else {
            Parallelism::Sequential
        }
    }

    fn manifest(&self, command: &str) -> Manifest {
        let config = self.cfg.canonical().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Manifest::new(command, config, self.cfg.sha256(), self.cfg.seed)
    }

    fn filter(&self) -> Result<FilterConfig> {
        let mut f = FilterConfig {
            min_term_chars: self.cfg.min_term_chars,
            min_length_both_sides: self.cfg.min_length_both_sides,
            ..FilterConfig::default()
        };
        if let Some(path) = &self.cfg.stop_list {
            f = f
                .with_stop_list(path)
                .map_err(|e| Failure::Input(format!("cannot read stop list {}: {e}", path.display())))?;
        }
        Ok(f)
    }
}

fn exclusions(paths: &[PathBuf]) -> Result<ExclusionList> {
    let mut out = ExclusionList::default();
    for p in paths {
        let list = ExclusionList::load(p).map_err(|e| Failure::Input(e.to_string()))?;
        out.concept_ids.extend(list.concept_ids);
        out.terms.extend(list.terms);
    }
    Ok(out)
}

/// Builds from sources or loads the cache, whichever the config names.
fn dictionary(cfg: &AnalysisConfig, corpus: Option<&Corpus>) -> Result<(TermDictionary, Option<BuildReport>)> {
    if let Some(path) = &cfg.dictionary {
        let dict = TermDictionary::load_jsonl(path).map_err(|e| Failure::Input(e.to_string()))?;
        return Ok((dict, None));
    }
    if cfg.sources.is_empty() {
        return Err(Failure::Input("no dictionary: set `dictionary` or `sources`".into()).into());
    }
    let vocab = match (cfg.vocabulary_filter, corpus) {
        (true, Some(c)) => Some(c.vocabulary()),
        (true, None) => return Err(Failure::Input("vocabulary_filter needs a corpus".into()).into()),
        (false, _) => None,
    };
    let dcfg = DictionaryConfig { min_tokens: cfg.min_tokens, max_tokens: cfg.max_tokens };
    let (dict, report) = TermDictionary::build(&cfg.sources, &exclusions(&cfg.exclude)?, vocab.as_ref(), &dcfg)
        .map_err(|e| Failure::Input(e.to_string()))?;
    Ok((dict, Some(report)))
}

fn read_corpus(path: &Path) -> Result<(Corpus, IngestReport, String)> {
    let bytes = fs::read(path).map_err(|e| Failure::Input(format!("cannot read corpus {}: {e}", path.display())))?;
    let (corpus, report) =
        Corpus::ingest(&bytes[..]).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    for w in &report.warnings {
        warn!("{w}");
    }
    Ok((corpus, report, sha256_hex(&bytes)))
}

/// Corpus plus dictionary, ready for counting.
pub struct Inputs {
    pub corpus: Corpus,
    pub ingest: IngestReport,
    pub corpus_sha256: String,
    pub dict: TermDictionary,
    pub dictionary_sha256: String,
}

pub fn load_inputs(cfg: &AnalysisConfig) -> Result<Inputs> {
    let path = cfg.corpus.as_ref().ok_or_else(|| Failure::Input("no corpus: set `corpus` or pass --corpus".into()))?;
    let (corpus, ingest, corpus_sha256) = read_corpus(path)?;
    if corpus.is_empty() {
        return Err(Failure::EmptyCorpus(format!("{}: no paired note-sections", path.display())).into());
    }
    let (dict, _) = dictionary(cfg, Some(&corpus))?;
    if dict.is_empty() {
        warn!("dictionary is empty; every count will be zero");
    }
    let dictionary_sha256 = sha256_hex(&dict.to_jsonl_bytes());
    let dict = dict.with_token_frequencies(&corpus.token_frequencies());
    info!("{} sections, {} dictionary entries", corpus.len(), dict.len());
    Ok(Inputs { corpus, ingest, corpus_sha256, dict, dictionary_sha256 })
}

pub fn build_dict(run: &Run, out_file: Option<&Path>) -> Result<()> {
    let corpus = match (&run.cfg.corpus, run.cfg.vocabulary_filter) {
        (Some(p), true) => Some(read_corpus(p)?),
        _ => None,
    };
    let (dict, report) = dictionary(&run.cfg, corpus.as_ref().map(|c| &c.0))?;
    if dict.is_empty() {
        warn!("dictionary is empty");
    }
    let bytes = dict.to_jsonl_bytes();
    let mut out = OutputSet::create(&run.out_dir)?;
    match out_file {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, &bytes).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
        }
        None => out.write("dictionary.jsonl", &bytes)?,
    }
    if let Some(report) = &report {
        out.json("build_report.json", report)?;
        info!("{} rows read, {} retained", report.rows_read, report.retained);
    }
    let mut m = run.manifest("build-dict");
    m.corpus_sha256 = corpus.map(|c| c.2);
    m.dictionary_sha256 = Some(sha256_hex(&bytes));
    m.finish(&mut out, "manifest-build-dict.json")
}

pub fn synth(out_dir: &Path, preset: &str, seed: Option<u64>, sections: Option<usize>) -> Result<()> {
    let mut spec = SynthSpec::preset(preset).ok_or_else(|| Failure::Input(format!("unknown preset {preset:?}")))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(n) = sections {
        spec.sections = n;
    }
    let output = generate(&spec).map_err(|e| Failure::Input(e.to_string()))?;
    output.write_to_dir(out_dir)?;
    let mut out = OutputSet::create(out_dir)?;
    for name in ["corpus.jsonl", "dictionary.csv", "ground_truth.json", "synth_spec.json"] {
        let bytes = fs::read(out_dir.join(name))?;
        out.write(name, &bytes)?;
    }
    let spec_json = serde_json::to_string(&spec)?;
    let config = BTreeMap::from([("preset".to_string(), preset.to_string()), ("spec".to_string(), spec_json.clone())]);
    let mut m = Manifest::new("synth", config, sha256_hex(spec_json.as_bytes()), spec.seed);
    m.corpus_sha256 = out.files().get("corpus.jsonl").cloned();
    info!("{} sections, {} dictionary rows", output.truth.sections.len(), output.dictionary.len());
    m.finish(&mut out, "manifest-synth.json")
}

fn side_rows(label: &str, s: &SideSummary) -> [Vec<String>; 2] {
    [
        vec![
            format!("{label} (total)"),
            s.draft_total.to_string(),
            s.final_total.to_string(),
            s.total_change().to_string(),
            fmt1(s.total_change_pct()),
        ],
        vec![
            format!("{label} (unique)"),
            s.draft_unique.to_string(),
            s.final_unique.to_string(),
            s.unique_change().to_string(),
            fmt1(s.unique_change_pct()),
        ],
    ]
}

fn write_analysis(run: &Run, inputs: &Inputs, deltas: &[SectionDelta], out: &mut OutputSet) -> Result<()> {
    let summary = summarize_deltas(deltas);
    let rows: Vec<Vec<String>> = side_rows("Consumer terms", &summary.consumer)
        .into_iter()
        .chain(side_rows("Clinical terms", &summary.clinical))
        .collect();
    out.csv("corpus_summary.csv", &["terminology_type", "draft", "final", "change", "change_pct"], &rows)?;

    let notes = aggregate_notes(deltas);
    let rows: Vec<Vec<String>> = notes
        .iter()
        .map(|n| {
            let (c, k) = (&n.consumer, &n.clinical);
            vec![
                n.note_id.clone(),
                n.clinician_id.clone(),
                n.sections.to_string(),
                c.draft_total.to_string(),
                c.final_total.to_string(),
                c.change.to_string(),
                c.draft_unique.to_string(),
                c.final_unique.to_string(),
                c.unique_change.to_string(),
                k.draft_total.to_string(),
                k.final_total.to_string(),
                k.change.to_string(),
                k.draft_unique.to_string(),
                k.final_unique.to_string(),
                k.unique_change.to_string(),
            ]
        })
        .collect();
    out.csv(
        "note_deltas.csv",
        &[
            "note_id",
            "clinician_id",
            "sections",
            "consumer_draft",
            "consumer_final",
            "consumer_change",
            "consumer_unique_draft",
            "consumer_unique_final",
            "consumer_unique_change",
            "clinical_draft",
            "clinical_final",
            "clinical_change",
            "clinical_unique_draft",
            "clinical_unique_final",
            "clinical_unique_change",
        ],
        &rows,
    )?;

    let stats = analysis::build(&inputs.corpus, deltas, &notes, run.cfg.eligibility_threshold, run.cfg.zero_method);
    let (table, warnings) = section_table(deltas);
    for w in warnings {
        warn!("{w}");
    }
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|m| {
            vec![
                m.section.display_name().to_string(),
                m.totals.sections.to_string(),
                fmt2(m.consumer_deleted_mean),
                fmt2(m.consumer_added_mean),
                fmt2(m.clinical_added_mean),
                fmt1(Some(m.consumer_deletion_pct)),
                fmt2(m.net_consumer_change_mean),
                fmt_p(stats.section_p(m.section)),
            ]
        })
        .collect();
    out.csv(
        "section_table.csv",
        &[
            "section",
            "sections",
            "consumer_deleted_mean",
            "consumer_added_mean",
            "clinical_added_mean",
            "consumer_deletion_pct",
            "net_consumer_change_mean",
            "p_value",
        ],
        &rows,
    )?;
    out.json("stats.json", &stats)?;
    out.json("ingest_report.json", &inputs.ingest)?;
    Ok(())
}

fn write_transforms(run: &Run, inputs: &Inputs, deltas: &[SectionDelta], out: &mut OutputSet) -> Result<()> {
    let filter = run.filter()?;
    if inputs.dict.is_empty() {
        warn!("empty dictionary: no transformation events can be detected");
    }
    let mut events: Vec<TransformationEvent> =
        deltas.iter().flat_map(|d| detect_from_delta(d, &inputs.dict, &filter)).collect();
    events.sort();
    out.jsonl("events.jsonl", &events)?;

    let pairs = summarize_pairs(&events, run.cfg.relevance_threshold, &filter);
    let header =
        ["consumer_term", "clinical_term", "event_count", "distinct_sections", "survived_filter", "meets_threshold"];
    let row = |p: &termshift::PairSummary| {
        vec![
            p.consumer_term.clone(),
            p.clinical_term.clone(),
            p.event_count.to_string(),
            p.distinct_sections.to_string(),
            p.survived_linguistic_filter.to_string(),
            p.meets_relevance_threshold.to_string(),
        ]
    };
    out.csv("pairs.csv", &header, &pairs.iter().map(row).collect::<Vec<_>>())?;
    out.csv("pairs_reportable.csv", &header, &pairs.iter().filter(|p| p.is_reportable()).map(row).collect::<Vec<_>>())?;

    let rows: Vec<Vec<String>> = section_distribution(&events)
        .iter()
        .map(|s| {
            vec![
                s.section.display_name().to_string(),
                s.events.to_string(),
                fmt1(s.pct_of_events),
                s.sections_with_events.to_string(),
            ]
        })
        .collect();
    out.csv("section_distribution.csv", &["section", "events", "pct_of_events", "sections_with_events"], &rows)?;
    out.json("transform_summary.json", &summarize_run(&events, &pairs, deltas))?;
    info!("{} transformation events, {} pairs", events.len(), pairs.len());
    Ok(())
}

#[derive(serde::Serialize)]
struct ClusterDetails {
    eligible_clinicians: usize,
    zero_change: ZeroChangeDefinition,
    result: Option<termshift::cluster::KMeansResult>,
    degenerate: bool,
    warnings: Vec<String>,
}

fn write_clusters(run: &Run, deltas: &[SectionDelta], out: &mut OutputSet) -> Result<()> {
    let cfg = &run.cfg;
    let def = cfg.zero_change;
    let mut profiles = build_profiles(deltas, cfg.eligibility_threshold);
    let mut details = ClusterDetails {
        eligible_clinicians: profiles.len(),
        zero_change: def,
        result: None,
        degenerate: true,
        warnings: Vec::new(),
    };
    let mut table = Vec::new();
    if profiles.len() < cfg.k {
        let msg = format!("{} eligible clinicians cannot form {} clusters", profiles.len(), cfg.k);
        warn!("{msg}");
        details.warnings.push(msg);
    } else {
        let points: Vec<Vec<f64>> = profiles.iter().map(|p| p.features(def)).collect();
        let kcfg = KMeansConfig {
            k: cfg.k,
            seed: cfg.seed,
            restarts: cfg.restarts,
            parallelism: run.parallelism(),
            ..KMeansConfig::default()
        };
        let result = kmeans(&points, &kcfg).map_err(|e| Failure::Input(e.to_string()))?;
        for w in &result.warnings {
            warn!("{w}");
        }
        for (p, &l) in profiles.iter_mut().zip(&result.labels) {
            p.cluster_label = Some(l);
        }
        let report = profile_report(&profiles, def, cfg.k).map_err(|e| Failure::Input(e.to_string()))?;
        details.degenerate = report.degenerate || result.is_degenerate();
        details.warnings.extend(result.warnings.iter().cloned());
        details.result = Some(result);
        table = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.profile.clone(),
                    r.label.to_string(),
                    r.n.to_string(),
                    fmt1(Some(r.pct)),
                    fmt1(Some(r.mean_consumer_change)),
                    fmt1(Some(r.mean_clinical_change)),
                    fmt1(Some(r.mean_zero_change_rate * 100.0)),
                ]
            })
            .collect();
    }
    let rows: Vec<Vec<String>> = profiles
        .iter()
        .map(|p| {
            vec![
                p.clinician_id.clone(),
                p.section_volume.to_string(),
                format!("{:.4}", p.mean_consumer_change),
                format!("{:.4}", p.mean_clinical_change),
                format!("{:.4}", p.zero_change_rate),
                format!("{:.4}", p.zero_change_rate_consumer_only),
                p.cluster_label.map(|l| l.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    out.csv(
        "clinician_profiles.csv",
        &[
            "clinician_id",
            "sections",
            "mean_consumer_change",
            "mean_clinical_change",
            "zero_change_rate",
            "zero_change_rate_consumer_only",
            "cluster",
        ],
        &rows,
    )?;
    out.csv(
        "clusters.csv",
        &["profile", "cluster", "n", "pct", "mean_consumer_change", "mean_clinical_change", "zero_change_rate_pct"],
        &table,
    )?;
    out.json("clusters.json", &details)?;
    Ok(())
}

/// Which analysis stages a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Analyze,
    Transforms,
    Cluster,
    All,
}

impl Stage {
    fn command(self) -> &'static str {
        match self {
            Stage::Analyze => "analyze",
            Stage::Transforms => "transforms",
            Stage::Cluster => "cluster",
            Stage::All => "report-all",
        }
    }

    fn manifest_name(self) -> String {
        match self {
            Stage::All => "manifest.json".to_string(),
            s => format!("manifest-{}.json", s.command()),
        }
    }
}

pub fn analyze(run: &Run, stage: Stage) -> Result<()> {
    let inputs = load_inputs(&run.cfg)?;
    let deltas = corpus_deltas(&inputs.corpus, &inputs.dict, run.parallelism());
    let mut out = OutputSet::create(&run.out_dir)?;
    if matches!(stage, Stage::Analyze | Stage::All) {
        write_analysis(run, &inputs, &deltas, &mut out)?;
    }
    if matches!(stage, Stage::Transforms | Stage::All) {
        write_transforms(run, &inputs, &deltas, &mut out)?;
    }
    if matches!(stage, Stage::Cluster | Stage::All) {
        write_clusters(run, &deltas, &mut out)?;
    }
    let mut m = run.manifest(stage.command());
    m.corpus_sha256 = Some(inputs.corpus_sha256.clone());
    m.dictionary_sha256 = Some(inputs.dictionary_sha256.clone());
    m.finish(&mut out, &stage.manifest_name())?;
    info!("wrote {}", out.dir().display());
    Ok(())
}

/// Renders one section as HTML and returns the header line.
pub fn diff(run: &Run, note_id: &str, section: &str, spans: bool) -> Result<String> {
    let inputs = load_inputs(&run.cfg)?;
    let label = SectionLabel::parse(section);
    let found = inputs
        .corpus
        .find_section(note_id, label)
        .ok_or_else(|| Failure::NotFound(format!("no section {section:?} in note {note_id:?}")))?;
    let d = termshift::diff::annotate(found, &inputs.dict);
    let stem: String = format!("diff_{}_{}", note_id, label.code())
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let mut out = OutputSet::create(&run.out_dir)?;
    out.write(&format!("{stem}.html"), termshift::diff::render_html(&d).as_bytes())?;
    if spans {
        out.json(&format!("{stem}.json"), &d)?;
    }
    let mut m = run.manifest("diff");
    m.corpus_sha256 = Some(inputs.corpus_sha256.clone());
    m.dictionary_sha256 = Some(inputs.dictionary_sha256.clone());
    m.finish(&mut out, &format!("manifest-{stem}.json"))?;
    Ok(termshift::diff::header_line(&d.counts))
}
