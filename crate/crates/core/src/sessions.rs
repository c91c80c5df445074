//! Session metadata and the three stress-change regression targets.
//!
//! A session row carries eight saliva cortisol samples (two before the
//! stressor, six after), pre/post stress-index scores and pre/post negative
//! affect scores. Targets are changes with respect to the pre-stress state
//! and are min-max scaled with statistics fitted on the train split.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CORTISOL_SAMPLES: usize = 8;

/// Column order of the sessions CSV.
pub const SESSION_COLUMNS: [&str; 15] = [
    "speaker_id",
    "audio_path",
    "cortisol_t1",
    "cortisol_t2",
    "cortisol_t3",
    "cortisol_t4",
    "cortisol_t5",
    "cortisol_t6",
    "cortisol_t7",
    "cortisol_t8",
    "si_pre",
    "si_post",
    "na_pre",
    "na_post",
    "split",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split label `{other}` (expected train, dev or test)")),
        }
    }
}

/// The three stress indicators, in head-output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Cortisol,
    Appraisal,
    Affect,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Cortisol, Target::Appraisal, Target::Affect];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Cortisol => "cortisol",
            Target::Appraisal => "appraisal",
            Target::Affect => "affect",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "cortisol" => Ok(Target::Cortisol),
            "appraisal" => Ok(Target::Appraisal),
            "affect" => Ok(Target::Affect),
            other => Err(format!("unknown target `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub speaker_id: String,
    pub audio_path: String,
    /// Cortisol in nmol/l at T1..T8.
    pub cortisol: [f64; CORTISOL_SAMPLES],
    pub si_pre: f64,
    pub si_post: f64,
    pub na_pre: f64,
    pub na_post: f64,
    pub split: Split,
}

impl SessionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.speaker_id.trim().is_empty() {
            return Err(Error::Invalid("empty speaker_id".into()));
        }
        for (i, c) in self.cortisol.iter().enumerate() {
            if !c.is_finite() || *c < 0.0 {
                return Err(Error::Invalid(format!(
                    "speaker {}: cortisol_t{} = {c} must be finite and non-negative",
                    self.speaker_id,
                    i + 1
                )));
            }
        }
        for (name, v) in [
            ("si_pre", self.si_pre),
            ("si_post", self.si_post),
            ("na_pre", self.na_pre),
            ("na_post", self.na_post),
        ] {
            if !v.is_finite() {
                return Err(Error::Invalid(format!(
                    "speaker {}: {name} is not finite",
                    self.speaker_id
                )));
            }
        }
        Ok(())
    }

    pub fn raw_targets(&self) -> [f64; 3] {
        [
            cortisol_delta(self),
            appraisal_delta(self),
            affect_delta(self),
        ]
    }
}

/// Peak post-stress cortisol (T3..T8) minus the mean of the two baseline samples.
pub fn cortisol_delta(record: &SessionRecord) -> f64 {
    let c = &record.cortisol;
    let baseline = (c[0] + c[1]) / 2.0;
    let peak = c[2..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    peak - baseline
}

pub fn appraisal_delta(record: &SessionRecord) -> f64 {
    record.si_post - record.si_pre
}

pub fn affect_delta(record: &SessionRecord) -> f64 {
    record.na_post - record.na_pre
}

/// Per-target `[min, max]` of the raw train-split deltas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub cortisol: [f64; 2],
    pub appraisal: [f64; 2],
    pub affect: [f64; 2],
}

impl ScalingParams {
    /// Fits min/max per target over raw delta triples.
    pub fn fit(deltas: &[[f64; 3]]) -> Result<Self> {
        if deltas.len() < 2 {
            return Err(Error::Invalid(format!(
                "target scaling needs at least 2 train records, got {}",
                deltas.len()
            )));
        }
        let mut ranges = [[f64::INFINITY, f64::NEG_INFINITY]; 3];
        for d in deltas {
            for (range, &v) in ranges.iter_mut().zip(d) {
                range[0] = range[0].min(v);
                range[1] = range[1].max(v);
            }
        }
        for (t, range) in Target::ALL.iter().zip(&ranges) {
            if !(range[1] > range[0]) {
                return Err(Error::Invalid(format!(
                    "degenerate spread for target {t}: min = max = {}",
                    range[0]
                )));
            }
        }
        Ok(ScalingParams {
            cortisol: ranges[0],
            appraisal: ranges[1],
            affect: ranges[2],
        })
    }

    pub fn range(&self, target: Target) -> [f64; 2] {
        match target {
            Target::Cortisol => self.cortisol,
            Target::Appraisal => self.appraisal,
            Target::Affect => self.affect,
        }
    }

    /// Affine map to the train range; dev/test values are not clipped.
    pub fn scale(&self, raw: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for t in Target::ALL {
            let [lo, hi] = self.range(t);
            out[t.index()] = (raw[t.index()] - lo) / (hi - lo);
        }
        out
    }

    pub fn unscale(&self, scaled: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for t in Target::ALL {
            let [lo, hi] = self.range(t);
            out[t.index()] = lo + scaled[t.index()] * (hi - lo);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fits target scaling on the train-split records of `records`.
pub fn fit_scaling(records: &[SessionRecord]) -> Result<ScalingParams> {
    let deltas: Vec<[f64; 3]> = records
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(SessionRecord::raw_targets)
        .collect();
    ScalingParams::fit(&deltas)
}

pub fn scale_targets(delta: [f64; 3], params: &ScalingParams) -> [f64; 3] {
    params.scale(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetVector {
    pub cortisol_delta: f64,
    pub appraisal_delta: f64,
    pub affect_delta: f64,
    pub scaled: [f64; 3],
}

impl TargetVector {
    pub fn new(raw: [f64; 3], params: &ScalingParams) -> Self {
        TargetVector {
            cortisol_delta: raw[0],
            appraisal_delta: raw[1],
            affect_delta: raw[2],
            scaled: params.scale(raw),
        }
    }

    pub fn raw(&self) -> [f64; 3] {
        [self.cortisol_delta, self.appraisal_delta, self.affect_delta]
    }
}

/// Builds scaled targets for every record, fitting the scaling on the train split.
pub fn build_targets(records: &[SessionRecord]) -> Result<(ScalingParams, Vec<TargetVector>)> {
    let params = fit_scaling(records)?;
    let targets = records
        .iter()
        .map(|r| TargetVector::new(r.raw_targets(), &params))
        .collect();
    Ok((params, targets))
}

pub fn load_sessions(path: &Path) -> Result<Vec<SessionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sessions(&text, &path.display().to_string())
}

/// Parses sessions CSV text. `origin` names the source in error messages.
pub fn parse_sessions(text: &str, origin: &str) -> Result<Vec<SessionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut index = [0usize; SESSION_COLUMNS.len()];
    for (slot, name) in index.iter_mut().zip(SESSION_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            row: 0,
            column: name.to_string(),
            message: "missing column in header".into(),
        })?;
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let field = |col: usize| -> Result<&str> {
            row.get(index[col]).ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                row: row_no,
                column: SESSION_COLUMNS[col].to_string(),
                message: "missing value".into(),
            })
        };
        let number = |col: usize| -> Result<f64> {
            let s = field(col)?;
            s.parse::<f64>().map_err(|_| Error::Parse {
                path: origin.to_string(),
                row: row_no,
                column: SESSION_COLUMNS[col].to_string(),
                message: format!("`{s}` is not a decimal number"),
            })
        };

        let speaker_id = field(0)?.to_string();
        let audio_path = field(1)?.to_string();
        let mut cortisol = [0.0; CORTISOL_SAMPLES];
        for (k, c) in cortisol.iter_mut().enumerate() {
            *c = number(2 + k)?;
        }
        let split_raw = field(14)?;
        let split = split_raw.parse::<Split>().map_err(|message| Error::Parse {
            path: origin.to_string(),
            row: row_no,
            column: "split".into(),
            message,
        })?;
        let record = SessionRecord {
            speaker_id,
            audio_path,
            cortisol,
            si_pre: number(10)?,
            si_post: number(11)?,
            na_pre: number(12)?,
            na_post: number(13)?,
            split,
        };
        record.validate().map_err(|e| Error::Parse {
            path: origin.to_string(),
            row: row_no,
            column: "*".into(),
            message: e.to_string(),
        })?;
        if !seen.insert(record.speaker_id.clone()) {
            return Err(Error::Parse {
                path: origin.to_string(),
                row: row_no,
                column: "speaker_id".into(),
                message: format!("duplicate speaker_id `{}`", record.speaker_id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn sessions_to_csv(records: &[SessionRecord]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(SESSION_COLUMNS)?;
    for r in records {
        let mut row: Vec<String> = Vec::with_capacity(SESSION_COLUMNS.len());
        row.push(r.speaker_id.clone());
        row.push(r.audio_path.clone());
        row.extend(r.cortisol.iter().map(|c| c.to_string()));
        for v in [r.si_pre, r.si_post, r.na_pre, r.na_post] {
            row.push(v.to_string());
        }
        row.push(r.split.to_string());
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Format(format!("csv flush: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

pub fn write_sessions(path: &Path, records: &[SessionRecord]) -> Result<()> {
    let text = sessions_to_csv(records)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(cortisol: [f64; 8]) -> SessionRecord {
        SessionRecord {
            speaker_id: "s01".into(),
            audio_path: "s01.wav".into(),
            cortisol,
            si_pre: 2.0,
            si_post: 1.5,
            na_pre: 1.1,
            na_post: 2.0,
            split: Split::Train,
        }
    }

    const HEADER: &str = "speaker_id,audio_path,cortisol_t1,cortisol_t2,cortisol_t3,cortisol_t4,cortisol_t5,cortisol_t6,cortisol_t7,cortisol_t8,si_pre,si_post,na_pre,na_post,split";

    #[test]
    fn cortisol_delta_fixtures() {
        assert_eq!(cortisol_delta(&record([3.3; 8])), 0.0);
        assert_eq!(
            cortisol_delta(&record([10.0, 10.0, 12.0, 15.0, 14.0, 13.0, 11.0, 10.0])),
            5.0
        );
        assert_eq!(cortisol_delta(&record([8.0, 12.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0])), -1.0);
    }

    #[test]
    fn questionnaire_deltas() {
        let mut r = record([1.0; 8]);
        assert_eq!(appraisal_delta(&r), -0.5);
        assert!((affect_delta(&r) - 0.9).abs() < 1e-15);
        r.si_post = r.si_pre;
        assert_eq!(appraisal_delta(&r), 0.0);
    }

    #[test]
    fn scaling_fit_and_apply() {
        let p = ScalingParams::fit(&[[0.0, -3.5, 0.0], [10.0, -0.4, 1.0], [5.0, 1.5, 0.5]]).unwrap();
        assert_eq!(p.cortisol, [0.0, 10.0]);
        assert_eq!(p.appraisal, [-3.5, 1.5]);
        let s = p.scale([0.0, 1.5, 0.5]);
        assert_eq!(s, [0.0, 1.0, 0.5]);
        // dev values above the train maximum extrapolate
        assert!((p.scale([12.0, -3.5, 1.0])[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_spread_is_rejected() {
        let err = ScalingParams::fit(&[[4.2, 0.0, 0.0], [4.2, 1.0, 1.0]]).unwrap_err();
        assert!(err.to_string().contains("cortisol"));
        assert!(ScalingParams::fit(&[[0.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn parses_single_row() {
        let text = format!("{HEADER}\ns01,a.wav,1,2,3,4,5,6,7,8,2.0,1.5,1.1,2.0,dev\n");
        let recs = parse_sessions(&text, "mem").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].cortisol, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(recs[0].split, Split::Dev);
        assert_eq!(recs[0].audio_path, "a.wav");
    }

    #[test]
    fn missing_cortisol_column_is_named() {
        let header = HEADER.replace("cortisol_t8,", "");
        let text = format!("{header}\ns01,a.wav,1,2,3,4,5,6,7,2.0,1.5,1.1,2.0,dev\n");
        let err = parse_sessions(&text, "mem").unwrap_err().to_string();
        assert!(err.contains("cortisol_t8"), "{err}");
    }

    #[test]
    fn bad_cells_are_reported_with_row() {
        let text = format!("{HEADER}\ns01,a.wav,1,2,x,4,5,6,7,8,2.0,1.5,1.1,2.0,dev\n");
        let err = parse_sessions(&text, "mem").unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("cortisol_t3"), "{err}");

        let text = format!("{HEADER}\ns01,a.wav,1,2,3,4,5,6,7,8,2.0,1.5,1.1,2.0,holdout\n");
        assert!(parse_sessions(&text, "mem").unwrap_err().to_string().contains("holdout"));

        let text = format!(
            "{HEADER}\ns01,a.wav,1,2,3,4,5,6,7,8,2,1,1,2,dev\ns01,b.wav,1,2,3,4,5,6,7,8,2,1,1,2,test\n"
        );
        let err = parse_sessions(&text, "mem").unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("duplicate"), "{err}");

        let text = format!("{HEADER}\ns01,a.wav,1,2,-3,4,5,6,7,8,2,1,1,2,dev\n");
        assert!(parse_sessions(&text, "mem").is_err());
    }

    #[test]
    fn fixture_with_27_sessions() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sessions27.csv");
        let recs = load_sessions(&path).unwrap();
        assert_eq!(recs.len(), 27);
        let count = |s| recs.iter().filter(|r| r.split == s).count();
        assert_eq!((count(Split::Train), count(Split::Dev), count(Split::Test)), (17, 5, 5));
        let (_, targets) = build_targets(&recs).unwrap();
        for (r, t) in recs.iter().zip(&targets) {
            if r.split == Split::Train {
                assert!(t.scaled.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    proptest! {
        #[test]
        fn cortisol_delta_symmetries(c in prop::array::uniform8(0.0f64..40.0), rot in 0usize..6) {
            let base = cortisol_delta(&record(c));
            let mut swapped = c;
            swapped.swap(0, 1);
            prop_assert_eq!(cortisol_delta(&record(swapped)), base);
            let mut permuted = c;
            permuted[2..].rotate_left(rot);
            prop_assert_eq!(cortisol_delta(&record(permuted)), base);
        }

        #[test]
        fn csv_round_trip(c in prop::array::uniform8(0.0f64..100.0), q in prop::array::uniform4(-10.0f64..10.0)) {
            let mut r = record(c);
            r.si_pre = q[0]; r.si_post = q[1]; r.na_pre = q[2]; r.na_post = q[3];
            let text = sessions_to_csv(std::slice::from_ref(&r)).unwrap();
            let back = parse_sessions(&text, "mem").unwrap();
            prop_assert_eq!(&back[0], &r);
        }

        #[test]
        fn scaling_maps_train_extremes_exactly(xs in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..20)) {
            if let Ok(p) = ScalingParams::fit(&xs) {
                for t in Target::ALL {
                    let [lo, hi] = p.range(t);
                    let mut lo_v = [0.0; 3]; lo_v[t.index()] = lo;
                    let mut hi_v = [0.0; 3]; hi_v[t.index()] = hi;
                    prop_assert_eq!(p.scale(lo_v)[t.index()], 0.0);
                    prop_assert_eq!(p.scale(hi_v)[t.index()], 1.0);
                }
                for x in &xs {
                    prop_assert!(p.scale(*x).iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }
    }
}
