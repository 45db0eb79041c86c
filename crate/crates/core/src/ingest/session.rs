//! Europarl v7 session files.
//!
//! A session file is plain text interleaved with markup lines:
//!
//! ```text
//! <CHAPTER ID="1">
//! Resumption of the session
//! <SPEAKER ID="1" NAME="President">
//! I declare resumed the session of the European Parliament.
//! <P>
//! Please rise, then, for this minute's silence.
//! ```
//!
//! Text following a `SPEAKER` line belongs to that speaker until the next
//! `SPEAKER` or `CHAPTER` line. A paragraph is a maximal run of text lines
//! between two markup lines; each of its lines is one sentence.

use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;

use super::IngestError;

/// Paragraphs attributed to one speaker turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpeakerBlock {
    /// Speaker name as written in the `NAME` attribute; empty for text that
    /// precedes any speaker marker in its chapter.
    pub speaker_name_raw: String,
    pub paragraphs: Vec<String>,
}

impl SpeakerBlock {
    /// Sentences of the block in order (one per paragraph line).
    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.paragraphs.iter().flat_map(|p| p.lines())
    }
}

enum Markup {
    Chapter,
    Paragraph,
    Speaker(String),
}

fn attr_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"^([A-Za-z_]+)=(?:"([^"]*)"|([^\s"]+))$"#).unwrap())
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^<([A-Z]+)(?:\s|>|$)").unwrap())
}

/// Splits an attribute list into `KEY=value` chunks, keeping quoted values whole.
fn split_attrs(body: &str) -> Option<Vec<&str>> {
    let mut out = Vec::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            break;
        }
        let start = i;
        let mut in_quote = false;
        while i < bytes.len() && (in_quote || !bytes[i].is_ascii_whitespace()) {
            if bytes[i] == b'"' {
                in_quote = !in_quote;
            }
            i += 1;
        }
        if in_quote {
            return None;
        }
        out.push(&body[start..i]);
    }
    Some(out)
}

fn parse_markup(line: &str, lineno: usize, filename: &str) -> Result<Option<Markup>, IngestError> {
    let Some(caps) = tag_re().captures(line) else {
        return Ok(None);
    };
    let malformed = |reason: &str| IngestError::MalformedMarkup {
        file: filename.to_string(),
        line: lineno,
        reason: reason.to_string(),
    };
    let trimmed = line.trim_end();
    if !trimmed.ends_with('>') {
        return Err(malformed("unclosed markup line"));
    }
    let name = &caps[1];
    let body = &trimmed[1 + name.len()..trimmed.len() - 1];
    let attrs = split_attrs(body).ok_or_else(|| malformed("unbalanced quote in attribute list"))?;
    let mut speaker_name = None;
    for a in attrs {
        let c = attr_re()
            .captures(a)
            .ok_or_else(|| malformed(&format!("unparseable attribute {a:?}")))?;
        if &c[1] == "NAME" {
            let v = c.get(2).or_else(|| c.get(3)).map_or("", |m| m.as_str());
            speaker_name = Some(v.trim().to_string());
        }
    }
    match name {
        "CHAPTER" => Ok(Some(Markup::Chapter)),
        "P" => Ok(Some(Markup::Paragraph)),
        "SPEAKER" => speaker_name
            .map(|n| Some(Markup::Speaker(n)))
            .ok_or_else(|| malformed("SPEAKER without NAME attribute")),
        other => Err(malformed(&format!("unknown markup <{other}>"))),
    }
}

/// Splits a session file into speaker-scoped paragraph blocks in document order.
///
/// Blocks without any paragraph are omitted. Text before the first speaker of
/// a chapter is returned with an empty speaker name.
pub fn parse_session_file(raw_text: &str, filename: &str) -> Result<Vec<SpeakerBlock>, IngestError> {
    let mut blocks: Vec<SpeakerBlock> = Vec::new();
    let mut current = SpeakerBlock { speaker_name_raw: String::new(), paragraphs: Vec::new() };
    let mut para: Vec<&str> = Vec::new();

    fn close_para(para: &mut Vec<&str>, block: &mut SpeakerBlock) {
        if !para.is_empty() {
            block.paragraphs.push(para.join("\n"));
            para.clear();
        }
    }
    fn close_block(block: &mut SpeakerBlock, blocks: &mut Vec<SpeakerBlock>, next_name: String) {
        let done = std::mem::replace(block, SpeakerBlock { speaker_name_raw: next_name, paragraphs: Vec::new() });
        if !done.paragraphs.is_empty() {
            blocks.push(done);
        }
    }

    for (i, line) in raw_text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        match parse_markup(line, i + 1, filename)? {
            Some(Markup::Paragraph) => close_para(&mut para, &mut current),
            Some(Markup::Chapter) => {
                close_para(&mut para, &mut current);
                close_block(&mut current, &mut blocks, String::new());
            }
            Some(Markup::Speaker(name)) => {
                close_para(&mut para, &mut current);
                close_block(&mut current, &mut blocks, name);
            }
            None => {
                if !line.trim().is_empty() {
                    para.push(line.trim());
                }
            }
        }
    }
    close_para(&mut para, &mut current);
    close_block(&mut current, &mut blocks, String::new());
    Ok(blocks)
}

/// Session date from a release filename such as `ep-00-01-17.txt`.
///
/// Two-digit years 96–99 are 1996–1999 and 00–11 are 2000–2011.
pub fn parse_session_date(filename: &str) -> Result<NaiveDate, IngestError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^ep-(\d{2})-(\d{2})-(\d{2})(?:[-_.].*)?$").unwrap());
    let base = filename.rsplit(['/', '\\']).next().unwrap_or(filename);
    let bad = || IngestError::UnparseableFilename(filename.to_string());
    let caps = re.captures(base).ok_or_else(bad)?;
    let yy: i32 = caps[1].parse().map_err(|_| bad())?;
    let year = match yy {
        96..=99 => 1900 + yy,
        0..=11 => 2000 + yy,
        _ => return Err(bad()),
    };
    let month: u32 = caps[2].parse().map_err(|_| bad())?;
    let day: u32 = caps[3].parse().map_err(|_| bad())?;
    NaiveDate::from_ymd_opt(year, month, day).ok_or_else(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_speaker_two_paragraphs() {
        let text = "<SPEAKER ID=\"1\" NAME=\"Evans, Robert J.E.\" LANGUAGE=\"EN\">\nFirst para.\n<P>\nSecond para.\n";
        let blocks = parse_session_file(text, "ep-00-01-17.txt").unwrap();
        assert_eq!(
            blocks,
            vec![SpeakerBlock {
                speaker_name_raw: "Evans, Robert J.E.".into(),
                paragraphs: vec!["First para.".into(), "Second para.".into()],
            }]
        );
    }

    #[test]
    fn empty_file() {
        assert!(parse_session_file("", "x").unwrap().is_empty());
    }

    #[test]
    fn second_speaker_partitions_paragraphs() {
        let text = "<SPEAKER ID=1 NAME=\"A\">\na1\n<P>\na2\n<SPEAKER ID=2 NAME=\"B\">\nb1\n";
        let blocks = parse_session_file(text, "x").unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].paragraphs, vec!["a1", "a2"]);
        assert_eq!(blocks[1].speaker_name_raw, "B");
        assert_eq!(blocks[1].paragraphs, vec!["b1"]);
    }

    #[test]
    fn chapter_resets_speaker_and_preamble_is_anonymous() {
        let text = "<CHAPTER ID=1>\nTitle\n<SPEAKER ID=1 NAME=\"A\">\nx\n<CHAPTER ID=2>\nSecond title\n";
        let blocks = parse_session_file(text, "x").unwrap();
        let names: Vec<_> = blocks.iter().map(|b| b.speaker_name_raw.as_str()).collect();
        assert_eq!(names, vec!["", "A", ""]);
    }

    #[test]
    fn multi_line_paragraph_sentences() {
        let text = "<SPEAKER ID=1 NAME=\"A\">\ns1\ns2\n<P>\ns3\n";
        let blocks = parse_session_file(text, "x").unwrap();
        assert_eq!(blocks[0].paragraphs, vec!["s1\ns2", "s3"]);
        assert_eq!(blocks[0].sentences().collect::<Vec<_>>(), vec!["s1", "s2", "s3"]);
    }

    #[test]
    fn malformed_markup_is_reported() {
        for text in [
            "<SPEAKER ID=1 NAME=\"Evans\n",
            "<SPEAKER ID=1 NAME=\"Evans>\n",
            "<SPEAKER ID=1>\n",
            "<SPEAKER ID=1 NAME=\"A\" junk>\n",
            "<TABLE>\n",
        ] {
            let err = parse_session_file(text, "f.txt").unwrap_err();
            assert!(matches!(err, IngestError::MalformedMarkup { line: 1, .. }), "{text:?} -> {err:?}");
        }
    }

    #[test]
    fn inline_angle_brackets_in_text_are_text() {
        let text = "<SPEAKER ID=1 NAME=\"A\">\n<a lowercase thing> is text\n3 < 4\n";
        let blocks = parse_session_file(text, "x").unwrap();
        assert_eq!(blocks[0].paragraphs.len(), 1);
    }

    #[test]
    fn session_dates() {
        assert_eq!(parse_session_date("ep-00-01-17.txt").unwrap(), NaiveDate::from_ymd_opt(2000, 1, 17).unwrap());
        assert_eq!(parse_session_date("ep-96-04-15.txt").unwrap(), NaiveDate::from_ymd_opt(1996, 4, 15).unwrap());
        assert_eq!(parse_session_date("txt/en/ep-11-11-17").unwrap(), NaiveDate::from_ymd_opt(2011, 11, 17).unwrap());
        assert_eq!(parse_session_date("ep-07-01-15-009.txt").unwrap(), NaiveDate::from_ymd_opt(2007, 1, 15).unwrap());
        assert!(matches!(parse_session_date("notes.txt"), Err(IngestError::UnparseableFilename(_))));
        assert!(parse_session_date("ep-50-01-01.txt").is_err());
        assert!(parse_session_date("ep-00-02-30.txt").is_err());
    }
}
