use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::IngestError;

/// Header line expected at the top of a speaker table.
pub const TABLE_HEADER: &str = "mep_id\tname\tgender\tdate_of_birth\tcountry";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn is_known(self) -> bool {
        !matches!(self, Gender::Unknown)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "MALE",
            Gender::Female => "FEMALE",
            Gender::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = IngestError;

    /// Accepts the table codes (`M`, `F`, `?`) as well as the long names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" | "m" | "MALE" | "male" => Ok(Gender::Male),
            "F" | "f" | "FEMALE" | "female" => Ok(Gender::Female),
            "?" | "" | "UNKNOWN" | "unknown" => Ok(Gender::Unknown),
            other => Err(IngestError::BadGender(other.to_string())),
        }
    }
}

/// One MEP identity from the metadata table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub mep_id: String,
    pub name: String,
    pub name_key: String,
    pub gender: Gender,
    pub date_of_birth: Option<NaiveDate>,
    pub country: Option<String>,
}

impl SpeakerRecord {
    pub fn new(
        mep_id: impl Into<String>,
        name: impl Into<String>,
        gender: Gender,
        date_of_birth: Option<NaiveDate>,
        country: Option<String>,
    ) -> Self {
        let name = name.into();
        SpeakerRecord {
            mep_id: mep_id.into(),
            name_key: normalize_name(&name),
            name,
            gender,
            date_of_birth,
            country,
        }
    }
}

/// Canonical matching key for a speaker name.
///
/// Lowercases, strips diacritics, collapses whitespace runs to a single
/// space and removes spaces that touch a period or precede a comma, so that
/// `"EVANS, Robert J. E."` and `"Evans, Robert J.E."` share a key. The
/// function is idempotent.
pub fn normalize_name(name: &str) -> String {
    let folded: String = name
        .chars()
        .flat_map(char::to_lowercase)
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .collect();
    let collapsed: Vec<char> = folded
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .collect();

    let mut out = String::with_capacity(collapsed.len());
    for (i, &c) in collapsed.iter().enumerate() {
        if c == ' ' {
            let prev = if i > 0 { collapsed[i - 1] } else { ' ' };
            let next = collapsed.get(i + 1).copied().unwrap_or(' ');
            if prev == '.' || next == '.' || next == ',' {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Speaker metadata keyed by normalized name.
#[derive(Clone, Debug, Default)]
pub struct SpeakerTable {
    records: Vec<SpeakerRecord>,
    by_key: HashMap<String, usize>,
}

impl SpeakerTable {
    /// Builds a table, rejecting records whose normalized names collide.
    pub fn new(records: Vec<SpeakerRecord>) -> Result<Self, IngestError> {
        let mut by_key = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if let Some(prev) = by_key.insert(r.name_key.clone(), i) {
                return Err(IngestError::DuplicateNameKey {
                    key: r.name_key.clone(),
                    first: records[prev].mep_id.clone(),
                    second: r.mep_id.clone(),
                });
            }
        }
        Ok(SpeakerTable { records, by_key })
    }

    /// Reads the tab-separated table format described by [`TABLE_HEADER`].
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, IngestError> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim_end_matches('\r') != TABLE_HEADER {
            return Err(IngestError::BadTableHeader(header));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(IngestError::BadTableRow {
                    line: lineno + 2,
                    reason: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            let gender = fields[2].parse::<Gender>().map_err(|e| IngestError::BadTableRow {
                line: lineno + 2,
                reason: e.to_string(),
            })?;
            let dob = match fields[3].trim() {
                "" => None,
                s => Some(NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| {
                    IngestError::BadTableRow {
                        line: lineno + 2,
                        reason: format!("date_of_birth {s:?}: {e}"),
                    }
                })?),
            };
            let country = match fields[4].trim() {
                "" => None,
                s => Some(s.to_string()),
            };
            records.push(SpeakerRecord::new(fields[0], fields[1], gender, dob, country));
        }
        SpeakerTable::new(records)
    }

    pub fn records(&self) -> &[SpeakerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Looks up a raw speaker name.
    ///
    /// Exact normalized-key matches win. With `fuzzy` set, a name without an
    /// exact match resolves only when exactly one key lies within edit
    /// distance 2; several candidates count as ambiguous and resolve to
    /// nothing.
    pub fn resolve(&self, speaker_name_raw: &str, fuzzy: bool) -> Option<&SpeakerRecord> {
        let key = normalize_name(speaker_name_raw);
        if key.is_empty() {
            return None;
        }
        if let Some(&i) = self.by_key.get(&key) {
            return Some(&self.records[i]);
        }
        if !fuzzy {
            return None;
        }
        let mut found = None;
        for r in &self.records {
            if strsim::levenshtein(&key, &r.name_key) <= 2 {
                if found.is_some() {
                    return None;
                }
                found = Some(r);
            }
        }
        found
    }
}

/// Free-function form of [`SpeakerTable::resolve`] over a plain record list.
pub fn resolve_speaker<'a>(
    speaker_name_raw: &str,
    table: &'a SpeakerTable,
    fuzzy: bool,
) -> Option<&'a SpeakerRecord> {
    table.resolve(speaker_name_raw, fuzzy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, name: &str) -> SpeakerRecord {
        SpeakerRecord::new(id, name, Gender::Male, None, None)
    }

    #[test]
    fn normalization_collapses_case_and_spacing() {
        assert_eq!(normalize_name("EVANS, Robert J. E."), "evans, robert j.e.");
        assert_eq!(normalize_name("Evans, Robert J.E."), "evans, robert j.e.");
        assert_eq!(normalize_name("  Pöttering ,  Hans-Gert "), "pottering, hans-gert");
    }

    #[test]
    fn normalization_is_idempotent_on_awkward_inputs() {
        for s in ["a . b", "X ,, y", " É  è .", ".", " ", "Ø. ,O"] {
            let once = normalize_name(s);
            assert_eq!(normalize_name(&once), once, "input {s:?}");
        }
    }

    #[test]
    fn exact_resolution_uses_normalized_key() {
        let t = SpeakerTable::new(vec![rec("1", "Evans, Robert J.E."), rec("2", "Other, A.")]).unwrap();
        assert_eq!(t.resolve("EVANS, Robert J. E.", false).unwrap().mep_id, "1");
        assert!(t.resolve("Nobody", false).is_none());
        assert!(t.resolve("", true).is_none());
    }

    #[test]
    fn fuzzy_resolution_requires_unique_candidate() {
        let t = SpeakerTable::new(vec![rec("1", "Martin, Hans"), rec("2", "Martin, Hanz")]).unwrap();
        // "martin, hant" is one edit from both keys
        assert!(t.resolve("Martin, Hant", true).is_none());
        let t = SpeakerTable::new(vec![rec("1", "Martin, Hans"), rec("2", "Lopez, Maria")]).unwrap();
        assert_eq!(t.resolve("Martin, Hant", true).unwrap().mep_id, "1");
        assert!(t.resolve("Martin, Hant", false).is_none());
        assert!(t.resolve("Martin, Xxxx", true).is_none());
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = SpeakerTable::new(vec![rec("1", "Evans, R."), rec("2", "EVANS,  R.")]).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateNameKey { .. }));
    }

    #[test]
    fn tsv_loading() {
        let tsv = "mep_id\tname\tgender\tdate_of_birth\tcountry\n\
                   1\tEvans, Robert J.E.\tM\t1943-10-23\tUnited Kingdom\n\
                   2\tMartin, Anne\tF\t\t\n\
                   3\tX, Y\t?\t\tFrance\n";
        let t = SpeakerTable::from_tsv(tsv.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.records()[0].date_of_birth, NaiveDate::from_ymd_opt(1943, 10, 23));
        assert_eq!(t.records()[1].gender, Gender::Female);
        assert_eq!(t.records()[1].country, None);
        assert_eq!(t.records()[2].gender, Gender::Unknown);

        let bad = "id\tname\n";
        assert!(matches!(SpeakerTable::from_tsv(bad.as_bytes()), Err(IngestError::BadTableHeader(_))));
        let bad = format!("{TABLE_HEADER}\n1\tA\tQ\t\t\n");
        assert!(matches!(SpeakerTable::from_tsv(bad.as_bytes()), Err(IngestError::BadTableRow { line: 2, .. })));
    }
}
