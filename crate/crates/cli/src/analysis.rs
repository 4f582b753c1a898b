//! Assembles the named statistical comparisons and the clinician-level
//! tables written to `stats.json`.

use std::collections::BTreeMap;

use serde::Serialize;
use termshift::frequency::NoteChange;
use termshift::stats::{
    self, holm_correction, kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank_with, StatResult, ZeroMethod,
};
use termshift::{Corpus, SectionDelta, SectionLabel, SpecialtyGroup};

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub family: &'static str,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<StatResult>,
    pub p_holm: Option<f64>,
    /// Median of the tested quantity (change or group medians), when useful.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl Comparison {
    fn new(
        family: &'static str,
        name: impl Into<String>,
        result: Result<StatResult, String>,
        median: Option<f64>,
    ) -> Self {
        let (result, skipped) = match result {
            Ok(r) => (Some(r), None),
            Err(why) => (None, Some(why)),
        };
        Comparison { family, name: name.into(), result, p_holm: None, median, skipped }
    }
}

/// Holm adjustment within one family; skipped entries stay `None`.
fn adjust(family: &mut [Comparison]) {
    let idx: Vec<usize> = (0..family.len()).filter(|&i| family[i].result.is_some()).collect();
    let raw: Vec<f64> = idx.iter().map(|&i| family[i].result.as_ref().map_or(1.0, |r| r.p_value)).collect();
    if let Ok(adj) = holm_correction(&raw) {
        for (&i, p) in idx.iter().zip(adj) {
            family[i].p_holm = Some(p);
        }
    }
}

fn wilcoxon(pairs: &[(f64, f64)], zero: ZeroMethod) -> Result<StatResult, String> {
    wilcoxon_signed_rank_with(pairs, zero).map_err(|e| e.to_string())
}

fn changes(pairs: &[(f64, f64)]) -> Vec<f64> {
    pairs.iter().map(|(d, f)| f - d).collect()
}

fn kw(groups: &[(String, Vec<f64>)]) -> Result<StatResult, String> {
    let nonempty: Vec<Vec<f64>> = groups.iter().filter(|(_, g)| !g.is_empty()).map(|(_, g)| g.clone()).collect();
    kruskal_wallis(&nonempty).map_err(|e| e.to_string())
}

fn pairwise(family: &'static str, what: &str, groups: &[(String, Vec<f64>)]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, b) = (&groups[i], &groups[j]);
            let result = mann_whitney_u(&a.1, &b.1).map_err(|e| e.to_string());
            out.push(Comparison::new(family, format!("{what}: {} vs {}", a.0, b.0), result, None));
        }
    }
    adjust(&mut out);
    out
}

/// One row of the clinician-by-section heterogeneity table.
#[derive(Debug, Clone, Serialize)]
pub struct ClinicianSectionRow {
    pub section: SectionLabel,
    pub clinicians: usize,
    pub median_consumer_change: Option<f64>,
    pub iqr_consumer_change: Option<f64>,
    pub median_clinical_change: Option<f64>,
    pub iqr_clinical_change: Option<f64>,
    pub median_consumer_removed_pct: Option<f64>,
}

/// One row of the specialty-stratified table.
#[derive(Debug, Clone, Serialize)]
pub struct SpecialtyRow {
    pub specialty_group: SpecialtyGroup,
    pub clinicians: usize,
    pub sections: usize,
    pub median_consumer_change: Option<f64>,
    pub median_clinical_change: Option<f64>,
    pub mean_consumer_change: Option<f64>,
    pub mean_clinical_change: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub zero_method: ZeroMethod,
    pub eligibility_threshold: usize,
    pub comparisons: Vec<Comparison>,
    pub clinician_sections: Vec<ClinicianSectionRow>,
    pub specialty_groups: Vec<SpecialtyRow>,
}

impl StatsReport {
    /// Holm-adjusted Wilcoxon p for a section row, if computed.
    pub fn section_p(&self, label: SectionLabel) -> Option<f64> {
        let name = label.display_name();
        self.comparisons
            .iter()
            .find(|c| c.family == "section_wilcoxon" && c.name == name)
            .and_then(|c| c.result.as_ref().map(|r| r.p_value))
    }
}

struct ClinicianSection {
    consumer: Vec<f64>,
    clinical: Vec<f64>,
    deleted: u64,
    kept: u64,
}

pub fn build(
    corpus: &Corpus,
    deltas: &[SectionDelta],
    notes: &[NoteChange],
    eligibility_threshold: usize,
    zero: ZeroMethod,
) -> StatsReport {
    let mut comparisons = Vec::new();

    // Note level: totals and unique counts on both sides.
    let note_pairs: [(&str, Vec<(f64, f64)>); 4] = [
        (
            "consumer total",
            notes.iter().map(|n| (n.consumer.draft_total as f64, n.consumer.final_total as f64)).collect(),
        ),
        (
            "clinical total",
            notes.iter().map(|n| (n.clinical.draft_total as f64, n.clinical.final_total as f64)).collect(),
        ),
        (
            "consumer unique",
            notes.iter().map(|n| (n.consumer.draft_unique as f64, n.consumer.final_unique as f64)).collect(),
        ),
        (
            "clinical unique",
            notes.iter().map(|n| (n.clinical.draft_unique as f64, n.clinical.final_unique as f64)).collect(),
        ),
    ];
    let mut family: Vec<Comparison> = note_pairs
        .iter()
        .map(|(name, pairs)| {
            Comparison::new("note_wilcoxon", *name, wilcoxon(pairs, zero), stats::median(&changes(pairs)))
        })
        .collect();
    adjust(&mut family);
    comparisons.extend(family);

    // Section level.
    let mut by_label: BTreeMap<SectionLabel, Vec<&SectionDelta>> = BTreeMap::new();
    for d in deltas.iter().filter(|d| d.section.is_analyzed()) {
        by_label.entry(d.section).or_default().push(d);
    }
    let mut family = Vec::new();
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for label in SectionLabel::ANALYZED {
        let ds = by_label.get(&label).map(Vec::as_slice).unwrap_or(&[]);
        let pairs: Vec<(f64, f64)> =
            ds.iter().map(|d| (d.consumer.draft.total as f64, d.consumer.final_.total as f64)).collect();
        let result = if pairs.is_empty() { Err("no sections".to_string()) } else { wilcoxon(&pairs, zero) };
        family.push(Comparison::new("section_wilcoxon", label.display_name(), result, stats::median(&changes(&pairs))));
        if !ds.is_empty() {
            groups.push((label.display_name().to_string(), ds.iter().map(|d| d.consumer.change as f64).collect()));
        }
    }
    adjust(&mut family);
    comparisons.extend(family);
    comparisons.push(Comparison::new("section_kruskal_wallis", "consumer change by section", kw(&groups), None));
    comparisons.extend(pairwise("section_mann_whitney", "consumer change", &groups));

    // Clinician level within each section type.
    let mut per_clinician: BTreeMap<&str, usize> = BTreeMap::new();
    for d in deltas {
        *per_clinician.entry(d.clinician_id.as_str()).or_default() += 1;
    }
    let eligible = |id: &str| per_clinician.get(id).is_some_and(|&n| n > eligibility_threshold);
    let mut cs: BTreeMap<(SectionLabel, &str), ClinicianSection> = BTreeMap::new();
    for d in deltas.iter().filter(|d| d.section.is_analyzed() && eligible(&d.clinician_id)) {
        let e = cs.entry((d.section, d.clinician_id.as_str())).or_insert_with(|| ClinicianSection {
            consumer: Vec::new(),
            clinical: Vec::new(),
            deleted: 0,
            kept: 0,
        });
        e.consumer.push(d.consumer.change as f64);
        e.clinical.push(d.clinical.change as f64);
        e.deleted += d.consumer.deleted;
        e.kept += d.consumer.kept;
    }
    let mut clinician_sections = Vec::new();
    let mut consumer_groups = Vec::new();
    let mut clinical_groups = Vec::new();
    for label in SectionLabel::ANALYZED {
        let rows: Vec<&ClinicianSection> =
            cs.range((label, "")..).take_while(|((l, _), _)| *l == label).map(|(_, v)| v).collect();
        let consumer: Vec<f64> = rows.iter().filter_map(|c| stats::median(&c.consumer)).collect();
        let clinical: Vec<f64> = rows.iter().filter_map(|c| stats::median(&c.clinical)).collect();
        let removed: Vec<f64> = rows
            .iter()
            .filter(|c| c.deleted + c.kept > 0)
            .map(|c| c.deleted as f64 / (c.deleted + c.kept) as f64 * 100.0)
            .collect();
        clinician_sections.push(ClinicianSectionRow {
            section: label,
            clinicians: rows.len(),
            median_consumer_change: stats::median(&consumer),
            iqr_consumer_change: stats::iqr(&consumer),
            median_clinical_change: stats::median(&clinical),
            iqr_clinical_change: stats::iqr(&clinical),
            median_consumer_removed_pct: stats::median(&removed),
        });
        if !consumer.is_empty() {
            consumer_groups.push((label.display_name().to_string(), consumer));
            clinical_groups.push((label.display_name().to_string(), clinical));
        }
    }
    let mut family = vec![
        Comparison::new(
            "clinician_section_kruskal_wallis",
            "clinician median consumer change by section",
            kw(&consumer_groups),
            None,
        ),
        Comparison::new(
            "clinician_section_kruskal_wallis",
            "clinician median clinical change by section",
            kw(&clinical_groups),
            None,
        ),
    ];
    adjust(&mut family);
    comparisons.extend(family);
    comparisons.extend(pairwise(
        "clinician_section_mann_whitney",
        "clinician median consumer change",
        &consumer_groups,
    ));

    // Specialty groups.
    let specialty_of = |id: &str| corpus.clinician(id).map_or(SpecialtyGroup::Unknown, |c| c.specialty_group);
    let mut by_group: BTreeMap<SpecialtyGroup, Vec<&SectionDelta>> = BTreeMap::new();
    for d in deltas {
        by_group.entry(specialty_of(&d.clinician_id)).or_default().push(d);
    }
    let mut specialty_groups = Vec::new();
    for group in SpecialtyGroup::KNOWN.into_iter().chain([SpecialtyGroup::Unknown]) {
        let ds = by_group.get(&group).map(Vec::as_slice).unwrap_or(&[]);
        let consumer: Vec<f64> = ds.iter().map(|d| d.consumer.change as f64).collect();
        let clinical: Vec<f64> = ds.iter().map(|d| d.clinical.change as f64).collect();
        let clinicians: std::collections::BTreeSet<&str> = ds.iter().map(|d| d.clinician_id.as_str()).collect();
        specialty_groups.push(SpecialtyRow {
            specialty_group: group,
            clinicians: clinicians.len(),
            sections: ds.len(),
            median_consumer_change: stats::median(&consumer),
            median_clinical_change: stats::median(&clinical),
            mean_consumer_change: stats::mean(&consumer),
            mean_clinical_change: stats::mean(&clinical),
        });
    }
    let mut clinician_changes: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for d in deltas.iter().filter(|d| eligible(&d.clinician_id)) {
        clinician_changes.entry(d.clinician_id.as_str()).or_default().push(d.consumer.change as f64);
    }
    let specialty_samples: Vec<(String, Vec<f64>)> = SpecialtyGroup::KNOWN
        .into_iter()
        .map(|g| {
            let medians = clinician_changes
                .iter()
                .filter(|(id, _)| specialty_of(id) == g)
                .filter_map(|(_, v)| stats::median(v))
                .collect();
            (g.display_name().to_string(), medians)
        })
        .collect();
    comparisons.push(Comparison::new(
        "specialty_kruskal_wallis",
        "clinician median consumer change by specialty group",
        kw(&specialty_samples),
        None,
    ));

    StatsReport { zero_method: zero, eligibility_threshold, comparisons, clinician_sections, specialty_groups }
}
