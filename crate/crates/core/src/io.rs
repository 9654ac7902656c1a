//! File formats: performance CSVs, parameter files, fit documents, result
//! bundles, distance matrices, clustering output and plot exports.
//!
//! Every writer goes through [`write_atomic`], and every float is printed in
//! shortest round-trip form, so re-serializing a loaded document reproduces
//! it byte for byte.

use crate::cluster::{Dendrogram, DistanceMatrix, Linkage, Merge, OutlierScreen};
use crate::error::{Error, Result};
use crate::estimate::{FitConfig, FitDiagnostics, FittedPerformance, Inference, RestartSummary};
use crate::tempo_model::{BehaviorState, ExpandedNode, ScoreEvent, ThetaTempo, SIGMA2_ACC, SIGMA2_STRESS};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const FIT_FORMAT: &str = "rubato-fit/1";
pub const MANIFEST_FORMAT: &str = "rubato-bundle/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_BEATS_PER_MEASURE: f64 = 3.0;

/// Input CSV layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// `note_index, measure, beat, l, onset_s`: one row per note attack; the
    /// last attack only closes the previous note.
    Onsets,
    /// `note_index, measure, beat, l, tempo_bpm`.
    Tempos,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onsets" => Ok(InputFormat::Onsets),
            "tempos" => Ok(InputFormat::Tempos),
            other => Err(Error::InvalidInput(format!("unknown input format '{other}'"))),
        }
    }
}

/// One recording: the score it follows and the observed note-by-note tempo.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRecord {
    pub id: String,
    pub score: Vec<ScoreEvent>,
    pub tempos: Vec<f64>,
    pub onsets: Option<Vec<f64>>,
    /// Carried through untouched; the model ignores it.
    pub loudness: Option<Vec<f64>>,
}

/// Recording id from a file name: the stem without `.tempos` / `.onsets`.
pub fn id_from_path(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(".csv").unwrap_or(&name);
    for suffix in [".tempos", ".onsets"] {
        if let Some(s) = stem.strip_suffix(suffix) {
            return s.to_string();
        }
    }
    stem.to_string()
}

/// Parse a decimal or a fraction such as `1/3`.
pub fn parse_rational(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            (b != 0.0).then_some(a / b)
        }
        None => s.parse().ok(),
    }
}

struct Table {
    path: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(&display, e))?;
        let headers = rdr
            .headers()
            .map_err(|e| csv_error(&display, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_error(&display, e))?;
        Ok(Self {
            path: display,
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            row: None,
            msg: format!("missing column '{name}'"),
        })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn err(&self, row: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            row: Some(row + 1),
            msg: msg.into(),
        }
    }

    fn number(&self, row: usize, col: usize, name: &str) -> Result<f64> {
        let raw = self.rows[row].get(col).unwrap_or("");
        let v = parse_rational(raw).ok_or_else(|| self.err(row, format!("bad {name} '{raw}'")))?;
        if !v.is_finite() {
            return Err(self.err(row, format!("non-finite {name}")));
        }
        Ok(v)
    }

    fn text(&self, row: usize, col: usize) -> String {
        self.rows[row].get(col).unwrap_or("").to_string()
    }
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_string(),
            source,
        },
        other => Error::Parse {
            path: path.to_string(),
            row: None,
            msg: format!("{other:?}"),
        },
    }
}

/// Read a performance CSV.
///
/// For onset files the tempo of note `i` is
/// `60 · (beats_per_measure · lᵢ) / (onset_{i+1} − onset_i)` b.p.m.; the
/// record has one note fewer than the file has rows.
pub fn ingest(path: &Path, format: InputFormat, beats_per_measure: f64) -> Result<PerformanceRecord> {
    if !(beats_per_measure > 0.0) {
        return Err(Error::InvalidInput("beats per measure must be positive".into()));
    }
    let t = Table::read(path)?;
    let mut score = score_rows(&t)?;
    let loudness = match t.optional("loudness") {
        Some(c) => Some(
            (0..t.rows.len())
                .map(|r| t.number(r, c, "loudness"))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };

    let id = id_from_path(path);
    match format {
        InputFormat::Tempos => {
            let c_tempo = t.column("tempo_bpm")?;
            let mut tempos = Vec::with_capacity(t.rows.len());
            for r in 0..t.rows.len() {
                let y = t.number(r, c_tempo, "tempo_bpm")?;
                if y <= 0.0 {
                    return Err(t.err(r, format!("tempo must be positive, got {y}")));
                }
                tempos.push(y);
            }
            Ok(PerformanceRecord {
                id,
                score,
                tempos,
                onsets: None,
                loudness,
            })
        }
        InputFormat::Onsets => {
            let c_onset = t.column("onset_s")?;
            let onsets = (0..t.rows.len())
                .map(|r| t.number(r, c_onset, "onset_s"))
                .collect::<Result<Vec<_>>>()?;
            let tempos = tempos_from_onsets(&t, &score, &onsets, beats_per_measure)?;
            score.truncate(tempos.len());
            Ok(PerformanceRecord {
                id,
                score,
                tempos,
                onsets: Some(onsets),
                loudness,
            })
        }
    }
}

fn score_rows(t: &Table) -> Result<Vec<ScoreEvent>> {
    let c_index = t.column("note_index")?;
    let c_measure = t.column("measure")?;
    let c_beat = t.column("beat")?;
    let c_l = t.column("l")?;
    (0..t.rows.len())
        .map(|r| {
            let index_raw = t.text(r, c_index);
            let index = index_raw
                .parse::<usize>()
                .map_err(|_| t.err(r, format!("bad note_index '{index_raw}'")))?;
            let measure_raw = t.text(r, c_measure);
            let measure = measure_raw
                .parse::<i64>()
                .map_err(|_| t.err(r, format!("bad measure '{measure_raw}'")))?;
            let l = t.number(r, c_l, "l")?;
            if l <= 0.0 {
                return Err(t.err(r, format!("note length must be positive, got {l}")));
            }
            Ok(ScoreEvent {
                index,
                measure,
                beat: t.text(r, c_beat),
                l,
            })
        })
        .collect()
}

/// Read a score: `note_index, measure, beat, l`.
pub fn read_score(path: &Path) -> Result<Vec<ScoreEvent>> {
    score_rows(&Table::read(path)?)
}

pub fn score_csv(score: &[ScoreEvent]) -> String {
    let mut s = String::from("note_index,measure,beat,l\n");
    for ev in score {
        let _ = writeln!(s, "{},{},{},{}", ev.index, ev.measure, csv_field(&ev.beat), ev.l);
    }
    s
}

/// Convert a wide onset table with one column per recording.
///
/// The first four columns are the score (`note_index, measure, beat, l`);
/// every further column holds one recording's attack times in seconds and
/// its header becomes the recording id. This matches the beat-level tables
/// distributed for the Chopin mazurka corpus once the performer columns
/// are placed after the score columns and empty cells removed.
pub fn convert_wide_onsets(path: &Path, beats_per_measure: f64) -> Result<Vec<PerformanceRecord>> {
    let t = Table::read(path)?;
    let score = score_rows(&t)?;
    let fixed = ["note_index", "measure", "beat", "l"];
    let mut out = Vec::new();
    for (c, name) in t.headers.iter().enumerate() {
        if fixed.contains(&name.as_str()) {
            continue;
        }
        let onsets = (0..t.rows.len())
            .map(|r| t.number(r, c, name))
            .collect::<Result<Vec<_>>>()?;
        let tempos = tempos_from_onsets(&t, &score, &onsets, beats_per_measure)?;
        out.push(PerformanceRecord {
            id: name.clone(),
            score: score[..tempos.len()].to_vec(),
            tempos,
            onsets: Some(onsets),
            loudness: None,
        });
    }
    Ok(out)
}

fn tempos_from_onsets(t: &Table, score: &[ScoreEvent], onsets: &[f64], beats_per_measure: f64) -> Result<Vec<f64>> {
    if onsets.len() < 2 {
        return Err(Error::InvalidInput(format!("{}: need at least two onsets", t.path)));
    }
    let mut tempos = Vec::with_capacity(onsets.len() - 1);
    for i in 0..onsets.len() - 1 {
        let gap = onsets[i + 1] - onsets[i];
        if !(gap > 0.0) {
            return Err(t.err(i + 1, "onsets must be strictly increasing"));
        }
        tempos.push(60.0 * (beats_per_measure * score[i].l) / gap);
    }
    Ok(tempos)
}

/// CSV in the `tempos` input layout.
pub fn tempos_csv(record: &PerformanceRecord) -> String {
    let mut s = String::from("note_index,measure,beat,l,tempo_bpm");
    let loud = record.loudness.as_ref().filter(|v| v.len() >= record.score.len());
    if loud.is_some() {
        s.push_str(",loudness");
    }
    s.push('\n');
    for (i, (ev, y)) in record.score.iter().zip(&record.tempos).enumerate() {
        let _ = write!(s, "{},{},{},{},{}", ev.index, ev.measure, csv_field(&ev.beat), ev.l, y);
        if let Some(v) = loud {
            let _ = write!(s, ",{}", v[i]);
        }
        s.push('\n');
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row: (e.line() > 0).then(|| e.line()),
        msg: e.to_string(),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document types serialize");
    s.push('\n');
    s
}

/// θ in the published column order. The complements `p14`, `p23`, `p33`
/// are optional on input and always written on output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaRecord {
    pub sigma2_eps: f64,
    pub mu_tempo: f64,
    pub mu_acc: f64,
    pub mu_stress: f64,
    pub sigma2_tempo: f64,
    pub p11: f64,
    pub p12: f64,
    pub p22: f64,
    pub p31: f64,
    pub p13: f64,
    pub p21: f64,
    pub p32: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p14: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p23: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p33: Option<f64>,
}

impl From<&ThetaTempo> for ThetaRecord {
    fn from(t: &ThetaTempo) -> Self {
        Self {
            sigma2_eps: t.sigma2_eps,
            mu_tempo: t.mu_tempo,
            mu_acc: t.mu_acc,
            mu_stress: t.mu_stress,
            sigma2_tempo: t.sigma2_tempo,
            p11: t.row_const[0],
            p12: t.row_const[1],
            p22: t.row_decel[1],
            p31: t.row_accel[0],
            p13: t.row_const[2],
            p21: t.row_decel[0],
            p32: t.row_accel[1],
            p14: Some(t.row_const[3]),
            p23: Some(t.row_decel[2]),
            p33: Some(t.row_accel[2]),
        }
    }
}

impl ThetaRecord {
    pub fn to_theta(&self) -> Result<ThetaTempo> {
        let th = ThetaTempo {
            sigma2_eps: self.sigma2_eps,
            mu_tempo: self.mu_tempo,
            mu_acc: self.mu_acc,
            mu_stress: self.mu_stress,
            sigma2_tempo: self.sigma2_tempo,
            sigma2_acc: SIGMA2_ACC,
            sigma2_stress: SIGMA2_STRESS,
            row_const: [
                self.p11,
                self.p12,
                self.p13,
                self.p14.unwrap_or(1.0 - self.p11 - self.p12 - self.p13),
            ],
            row_decel: [self.p21, self.p22, self.p23.unwrap_or(1.0 - self.p21 - self.p22)],
            row_accel: [self.p31, self.p32, self.p33.unwrap_or(1.0 - self.p31 - self.p32)],
        };
        th.validate()?;
        Ok(th)
    }
}

/// Read θ from a parameter file or from the `theta` of a fit document.
pub fn read_theta(path: &Path) -> Result<ThetaTempo> {
    let text = read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    if value.get("format").is_some() {
        return FitDocument::read(path)?.theta();
    }
    let rec: ThetaRecord = serde_json::from_value(value).map_err(|e| json_error(path, e))?;
    rec.to_theta()
}

pub fn theta_json(theta: &ThetaTempo) -> String {
    to_json(&ThetaRecord::from(theta))
}

/// Per-note row of a fit document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note_index: usize,
    pub measure: i64,
    pub beat: String,
    pub l: f64,
    pub observed: f64,
    pub smoothed: f64,
    pub node: ExpandedNode,
    pub behavior: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loudness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    /// `null` when the restart never reached a finite objective.
    pub objective: Option<f64>,
    pub evals: usize,
    pub converged: bool,
}

/// One fitted recording, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDocument {
    pub format: String,
    pub id: String,
    pub theta: ThetaRecord,
    pub objective: f64,
    pub loglik: f64,
    pub log_prior: f64,
    pub best_restart: usize,
    pub total_evals: usize,
    pub restarts: Vec<RestartRecord>,
    pub notes: Vec<NoteRecord>,
}

impl FitDocument {
    pub fn new(record: &PerformanceRecord, fit: &FittedPerformance) -> Self {
        let inf = &fit.inference;
        let notes = record
            .score
            .iter()
            .enumerate()
            .map(|(i, ev)| NoteRecord {
                note_index: ev.index,
                measure: ev.measure,
                beat: ev.beat.clone(),
                l: ev.l,
                observed: record.tempos[i],
                smoothed: inf.smoothed[i],
                node: inf.path[i],
                behavior: inf.behaviors[i].label(),
                loudness: record.loudness.as_ref().and_then(|v| v.get(i).copied()),
            })
            .collect();
        Self {
            format: FIT_FORMAT.to_string(),
            id: record.id.clone(),
            theta: ThetaRecord::from(&fit.theta),
            objective: inf.objective,
            loglik: inf.loglik,
            log_prior: inf.log_prior,
            best_restart: fit.diagnostics.best_restart,
            total_evals: fit.diagnostics.total_evals,
            restarts: fit
                .diagnostics
                .restarts
                .iter()
                .map(|r| RestartRecord {
                    objective: r.objective.is_finite().then_some(r.objective),
                    evals: r.evals,
                    converged: r.converged,
                })
                .collect(),
            notes,
        }
    }

    pub fn theta(&self) -> Result<ThetaTempo> {
        self.theta.to_theta()
    }

    pub fn path(&self) -> Vec<ExpandedNode> {
        self.notes.iter().map(|n| n.node).collect()
    }

    pub fn record(&self) -> PerformanceRecord {
        let loud: Option<Vec<f64>> = self.notes.iter().map(|n| n.loudness).collect();
        PerformanceRecord {
            id: self.id.clone(),
            score: self
                .notes
                .iter()
                .map(|n| ScoreEvent {
                    index: n.note_index,
                    measure: n.measure,
                    beat: n.beat.clone(),
                    l: n.l,
                })
                .collect(),
            tempos: self.notes.iter().map(|n| n.observed).collect(),
            onsets: None,
            loudness: loud,
        }
    }

    pub fn diagnostics(&self) -> FitDiagnostics {
        FitDiagnostics {
            restarts: self
                .restarts
                .iter()
                .map(|r| RestartSummary {
                    objective: r.objective.unwrap_or(f64::NEG_INFINITY),
                    evals: r.evals,
                    converged: r.converged,
                })
                .collect(),
            best_restart: self.best_restart,
            total_evals: self.total_evals,
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let doc: Self = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
        if doc.format != FIT_FORMAT {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row: None,
                msg: format!("unsupported format '{}'", doc.format),
            });
        }
        Ok(doc)
    }
}

/// Run metadata shared by every recording of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub seed: u64,
    pub config: FitConfig,
    pub recordings: Vec<String>,
}

/// A directory holding `manifest.json` plus one `<id>.fit.json` per
/// recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub manifest: Manifest,
    pub fits: Vec<FitDocument>,
}

pub fn fit_file_name(id: &str) -> String {
    format!("{id}.fit.json")
}

impl ResultBundle {
    pub fn new(config: FitConfig, mut fits: Vec<FitDocument>) -> Self {
        fits.sort_by(|a, b| a.id.cmp(&b.id));
        Self {
            manifest: Manifest {
                format: MANIFEST_FORMAT.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.seed,
                config,
                recordings: fits.iter().map(|f| f.id.clone()).collect(),
            },
            fits,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for f in &self.fits {
            write_atomic(&dir.join(fit_file_name(&f.id)), f.to_json().as_bytes())?;
        }
        write_atomic(&dir.join(MANIFEST_FILE), to_json(&self.manifest).as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = read_to_string(&mpath)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| json_error(&mpath, e))?;
        let fits = manifest
            .recordings
            .iter()
            .map(|id| FitDocument::read(&dir.join(fit_file_name(id))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, fits })
    }

    pub fn labels(&self) -> Vec<String> {
        self.fits.iter().map(|f| f.id.clone()).collect()
    }

    pub fn thetas(&self) -> Result<Vec<ThetaTempo>> {
        self.fits.iter().map(|f| f.theta()).collect()
    }
}

/// Square CSV with a `label` header column.
pub fn distance_csv(d: &DistanceMatrix) -> String {
    let mut s = String::from("label");
    for l in &d.labels {
        let _ = write!(s, ",{}", csv_field(l));
    }
    s.push('\n');
    for (l, row) in d.labels.iter().zip(&d.values) {
        s.push_str(&csv_field(l));
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn read_distance_csv(path: &Path) -> Result<DistanceMatrix> {
    let t = Table::read(path)?;
    if t.headers.first().map(String::as_str) != Some("label") {
        return Err(Error::Parse {
            path: t.path.clone(),
            row: None,
            msg: "first column must be 'label'".into(),
        });
    }
    let labels: Vec<String> = t.headers[1..].to_vec();
    let n = labels.len();
    if t.rows.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}: {} rows for {n} columns",
            t.path,
            t.rows.len()
        )));
    }
    let mut values = vec![vec![0.0; n]; n];
    for r in 0..n {
        if t.rows[r].len() != n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {} has {} fields",
                t.path,
                r + 1,
                t.rows[r].len()
            )));
        }
        if t.text(r, 0) != labels[r] {
            return Err(t.err(
                r,
                format!("row label '{}' does not match column '{}'", t.text(r, 0), labels[r]),
            ));
        }
        for c in 0..n {
            values[r][c] = t.number(r, c + 1, "distance")?;
        }
    }
    DistanceMatrix::new(labels, values)
}

/// Clustering output: each label with its 1-based cluster or `other`.
pub fn clusters_csv(labels: &[String], assignment: &[Option<usize>]) -> String {
    let mut s = String::from("label,cluster\n");
    for (l, a) in labels.iter().zip(assignment) {
        match a {
            Some(c) => {
                let _ = writeln!(s, "{},{}", csv_field(l), c + 1);
            }
            None => {
                let _ = writeln!(s, "{},other", csv_field(l));
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramDocument {
    pub linkage: Linkage,
    pub screen: OutlierScreen,
    pub labels: Vec<String>,
    pub other: Vec<String>,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<String>,
}

impl DendrogramDocument {
    pub fn new(
        linkage: Linkage,
        screen: OutlierScreen,
        labels: Vec<String>,
        other: Vec<String>,
        den: &Dendrogram,
    ) -> Self {
        let leaf_order = den.leaf_order().into_iter().map(|i| labels[i].clone()).collect();
        Self {
            linkage,
            screen,
            labels,
            other,
            merges: den.merges.clone(),
            leaf_order,
        }
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

/// Plot-ready CSV: note index, measure, observed and smoothed tempo,
/// behavior label.
pub fn plot_csv(doc: &FitDocument) -> String {
    let mut s = String::from("note_index,measure,observed_tempo,smoothed_tempo,behavior\n");
    for n in &doc.notes {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            n.note_index, n.measure, n.observed, n.smoothed, n.behavior
        );
    }
    s
}

/// Path and smoothed curve for one recording at a given θ.
pub fn inference_csv(record: &PerformanceRecord, inf: &Inference) -> String {
    let mut s = String::from("note_index,measure,observed_tempo,smoothed_tempo,node,behavior\n");
    for (i, ev) in record.score.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            ev.index,
            ev.measure,
            record.tempos[i],
            inf.smoothed[i],
            inf.path[i],
            inf.behaviors[i].label()
        );
    }
    s
}

/// Simulated ground truth: node, behavior and hidden state per note.
pub fn truth_csv(score: &[ScoreEvent], nodes: &[ExpandedNode], states: &[[f64; 2]]) -> String {
    let mut s = String::from("note_index,node,behavior,tempo_state,accel_state\n");
    for ((ev, n), x) in score.iter().zip(nodes).zip(states) {
        let _ = writeln!(s, "{},{},{},{},{}", ev.index, n, n.behavior().label(), x[0], x[1]);
    }
    s
}

/// Read the `node` column of a truth or inference CSV.
pub fn read_nodes(path: &Path) -> Result<Vec<ExpandedNode>> {
    let t = Table::read(path)?;
    let c = t.column("node")?;
    (0..t.rows.len())
        .map(|r| {
            let raw = t.text(r, c);
            ExpandedNode::from_name(&raw).ok_or_else(|| t.err(r, format!("unknown node '{raw}'")))
        })
        .collect()
}

pub fn behavior_from_label(label: u8) -> Option<BehaviorState> {
    match label {
        1 => Some(BehaviorState::Constant),
        2 => Some(BehaviorState::Deceleration),
        3 => Some(BehaviorState::Acceleration),
        4 => Some(BehaviorState::Stress),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn rationals() {
        assert_eq!(parse_rational("1/3"), Some(1.0 / 3.0));
        assert_eq!(parse_rational(" 0.25 "), Some(0.25));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
    }

    #[test]
    fn footnote_conversion() {
        let dir = tempfile::tempdir().unwrap();
        // 0.25 beats in 3/4 time is a twelfth of a measure
        let p = write_tmp(
            dir.path(),
            "a.onsets.csv",
            "note_index,measure,beat,l,onset_s\n1,1,1,1/12,0\n2,1,1.25,1/12,0.1\n",
        );
        let rec = ingest(&p, InputFormat::Onsets, 3.0).unwrap();
        assert_eq!(rec.id, "a");
        assert_eq!(rec.tempos, vec![150.0]);
        assert_eq!(rec.score.len(), 1);
    }

    #[test]
    fn quarter_note_half_second() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "q.csv",
            "note_index,measure,beat,l,onset_s\n1,1,1,1/3,10\n2,1,2,1/3,10.5\n3,1,3,1/3,11\n",
        );
        let rec = ingest(&p, InputFormat::Onsets, 3.0).unwrap();
        assert_eq!(rec.tempos.len(), 2);
        assert!((rec.tempos[0] - 120.0).abs() < 1e-9);
        assert_eq!(rec.tempos[0], rec.tempos[1]);
    }

    #[test]
    fn non_monotone_onsets() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "bad.csv",
            "note_index,measure,beat,l,onset_s\n1,1,1,1/3,1.0\n2,1,2,1/3,0.9\n",
        );
        let err = ingest(&p, InputFormat::Onsets, 3.0).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn non_positive_length() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            dir.path(),
            "z.csv",
            "note_index,measure,beat,l,tempo_bpm\n1,1,1,0,120\n",
        );
        assert!(ingest(&p, InputFormat::Tempos, 3.0).is_err());
    }

    #[test]
    fn tempos_round_trip_with_loudness() {
        let dir = tempfile::tempdir().unwrap();
        let body = "note_index,measure,beat,l,tempo_bpm,loudness\n1,1,1,0.3333333333333333,131.71234567890124,0.5\n2,1,2,0.25,99.1,0.7\n";
        let p = write_tmp(dir.path(), "r.tempos.csv", body);
        let rec = ingest(&p, InputFormat::Tempos, 3.0).unwrap();
        assert_eq!(tempos_csv(&rec), body);
    }

    #[test]
    fn theta_file_complements() {
        let json = r#"{"sigma2_eps":426.7,"mu_tempo":136.33,"mu_acc":-11.84,"mu_stress":-34.82,
            "sigma2_tempo":439.38,"p11":0.85,"p12":0.05,"p22":0.74,"p31":0.44,"p13":0.02,"p21":0.25,"p32":0.17}"#;
        let rec: ThetaRecord = serde_json::from_str(json).unwrap();
        let th = rec.to_theta().unwrap();
        assert!((th.row_const[3] - 0.08).abs() < 1e-12);
        assert!((th.row_accel[2] - 0.39).abs() < 1e-12);
        let again: ThetaRecord = serde_json::from_str(&theta_json(&th)).unwrap();
        assert_eq!(again.to_theta().unwrap(), th);
    }

    #[test]
    fn distance_csv_round_trip() {
        let d = DistanceMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.2345678901234567], vec![1.2345678901234567, 0.0]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_atomic(&p, distance_csv(&d).as_bytes()).unwrap();
        assert_eq!(read_distance_csv(&p).unwrap(), d);
    }
}
