//! Rule-based utterance parser: keyword intent detection plus slot filling.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{token_spans, tokenize};
use crate::dashboard::{Color, SourceRef, WidgetKind};
use crate::time::{Duration, DurationUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    AddWidget,
    RemoveWidget,
    Move,
    Resize,
    Retitle,
    Recolor,
    ShowValue,
}

/// A widget named by 1-based position on the dashboard or by title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WidgetRef {
    Index(u32),
    Title(String),
}

impl fmt::Display for WidgetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WidgetRef::Index(n) => write!(f, "widget {n}"),
            WidgetRef::Title(t) => write!(f, "\"{t}\""),
        }
    }
}

/// A parsed command. Only the slots relevant to `intent` are filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentCommand {
    pub intent: Intent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<WidgetKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Duration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widget_ref: Option<WidgetRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
}

impl AgentCommand {
    pub fn new(intent: Intent) -> Self {
        Self {
            intent,
            kind: None,
            source: None,
            window: None,
            group_by: None,
            widget_ref: None,
            x: None,
            y: None,
            w: None,
            h: None,
            title: None,
            color: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoMatchReason {
    Empty,
    NoIntent,
    NoSource,
    AmbiguousSource,
    NotAKpi,
    MissingWidget,
    MissingPosition,
    MissingSize,
    MissingTitle,
    MissingColor,
    InvalidWindow,
    InvalidNumber,
}

/// Why an utterance could not be understood, with hints for the user.
#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[error("{message}")]
pub struct NoMatch {
    pub reason: NoMatchReason,
    pub message: String,
    pub suggestions: Vec<String>,
}

impl NoMatch {
    fn new(reason: NoMatchReason, message: impl Into<String>) -> Self {
        Self {
            reason,
            message: message.into(),
            suggestions: Vec::new(),
        }
    }

    fn suggest(mut self, suggestions: Vec<String>) -> Self {
        self.suggestions = suggestions;
        self
    }
}

const EXAMPLES: [&str; 7] = [
    "add a line chart of <source> for the last 7 days",
    "what is <kpi>",
    "remove widget 2",
    "move widget 1 to 0 4",
    "resize widget 1 to 6x4",
    "rename widget 1 to \"Air quality\"",
    "color widget 1 blue",
];

fn examples() -> Vec<String> {
    EXAMPLES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verb {
    Add,
    Show,
    Query,
    Remove,
    Move,
    Resize,
    Retitle,
    Recolor,
}

fn verb(word: &str) -> Option<Verb> {
    Some(match word {
        "add" | "create" | "insert" | "new" | "plot" | "visualize" | "visualise" | "build" => {
            Verb::Add
        }
        "show" | "display" | "view" => Verb::Show,
        "what" | "whats" | "value" | "tell" | "how" | "current" | "status" => Verb::Query,
        "remove" | "delete" | "drop" | "discard" | "hide" => Verb::Remove,
        "move" | "drag" | "reposition" | "shift" => Verb::Move,
        "resize" | "size" | "shrink" | "grow" | "enlarge" => Verb::Resize,
        "rename" | "retitle" | "title" | "relabel" => Verb::Retitle,
        "recolor" | "recolour" | "color" | "colour" | "paint" => Verb::Recolor,
        _ => return None,
    })
}

fn kind_word(word: &str) -> Option<WidgetKind> {
    Some(match word {
        "line" | "trend" | "timeseries" => WidgetKind::Line,
        "bar" | "bars" | "histogram" => WidgetKind::Bar,
        "gauge" | "dial" => WidgetKind::Gauge,
        "number" | "stat" | "stats" | "statistic" => WidgetKind::Stat,
        "table" => WidgetKind::Table,
        _ => return None,
    })
}

fn unit_word(word: &str) -> Option<DurationUnit> {
    Some(match word {
        "minute" | "minutes" | "min" | "mins" => DurationUnit::Minute,
        "hour" | "hours" | "hr" | "hrs" | "h" => DurationUnit::Hour,
        "day" | "days" | "d" => DurationUnit::Day,
        "week" | "weeks" | "wk" | "wks" | "w" => DurationUnit::Week,
        _ => return None,
    })
}

/// `Some(Ok(n))` for an all-digit word that fits `u32`, `Some(Err)` when it
/// overflows, `None` when the word is not a number.
fn digits(word: &str) -> Option<Result<u32, NoMatch>> {
    if word.is_empty() || !word.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(
        word.parse()
            .map_err(|_| NoMatch::new(NoMatchReason::InvalidNumber, format!("{word} is too large"))),
    )
}

struct Tok {
    text: String,
    start: usize,
    end: usize,
    quoted: bool,
}

/// Tokenized utterance with per-token "already consumed" flags, so each
/// word fills at most one slot.
struct Utterance<'a> {
    raw: &'a str,
    toks: Vec<Tok>,
    used: Vec<bool>,
    quotes: Vec<String>,
    next_quote: usize,
}

impl<'a> Utterance<'a> {
    fn new(raw: &'a str) -> Self {
        let mut spans = Vec::new();
        let mut quotes = Vec::new();
        let mut open = None;
        for (i, c) in raw.char_indices() {
            if matches!(c, '"' | '“' | '”') {
                match open {
                    None => open = Some(i + c.len_utf8()),
                    Some(s) => {
                        spans.push((s, i));
                        quotes.push(raw[s..i].trim().to_string());
                        open = None;
                    }
                }
            }
        }
        let toks: Vec<Tok> = token_spans(raw)
            .into_iter()
            .map(|(start, end)| Tok {
                text: raw[start..end].to_lowercase(),
                start,
                end,
                quoted: spans.iter().any(|&(qs, qe)| start >= qs && end <= qe),
            })
            .collect();
        Self {
            raw,
            used: vec![false; toks.len()],
            toks,
            quotes,
            next_quote: 0,
        }
    }

    fn len(&self) -> usize {
        self.toks.len()
    }

    /// The lowercased word at `i` if it is unquoted and not yet consumed.
    fn word(&self, i: usize) -> Option<&str> {
        (i < self.len() && !self.used[i] && !self.toks[i].quoted).then(|| self.toks[i].text.as_str())
    }

    fn take(&mut self, i: usize) {
        self.used[i] = true;
    }

    fn take_quote(&mut self) -> Option<String> {
        let q = self.quotes.get(self.next_quote).cloned()?;
        self.next_quote += 1;
        Some(q)
    }

    fn quotes_left(&self) -> usize {
        self.quotes.len() - self.next_quote
    }

    fn number_at(&self, i: usize) -> Option<Result<u32, NoMatch>> {
        self.word(i).and_then(digits)
    }

    fn first(&self, pred: impl Fn(&str) -> bool) -> Option<usize> {
        (0..self.len()).find(|&i| self.word(i).is_some_and(&pred))
    }

    /// Start of a contiguous run of free words equal to `words`, searched
    /// below `limit`.
    fn find_seq(&self, words: &[String], limit: usize) -> Option<usize> {
        if words.is_empty() || words.len() > limit {
            return None;
        }
        (0..=limit - words.len())
            .find(|&s| words.iter().enumerate().all(|(k, w)| self.word(s + k) == Some(w.as_str())))
    }
}

/// Parses one utterance against the names a model and dashboard offer.
pub fn parse_utterance(
    text: &str,
    sources: &[SourceRef],
    widget_titles: &[String],
) -> Result<AgentCommand, NoMatch> {
    let mut u = Utterance::new(text);
    if u.len() == 0 {
        return Err(NoMatch::new(NoMatchReason::Empty, "say what to do").suggest(examples()));
    }
    let verb = match u.first(|w| verb(w).is_some()) {
        Some(i) => {
            u.take(i);
            verb(&u.toks[i].text).expect("matched above")
        }
        None if u.first(|w| Color::from_name(w).is_some()).is_some() => Verb::Recolor,
        None => {
            return Err(NoMatch::new(
                NoMatchReason::NoIntent,
                "I did not recognise a command; try one of these",
            )
            .suggest(examples()))
        }
    };
    match verb {
        Verb::Add | Verb::Show | Verb::Query => source_command(&mut u, verb, sources),
        Verb::Remove => {
            let mut cmd = AgentCommand::new(Intent::RemoveWidget);
            cmd.widget_ref = Some(require_widget(&mut u, widget_titles)?);
            Ok(cmd)
        }
        Verb::Move => {
            let mut cmd = AgentCommand::new(Intent::Move);
            cmd.widget_ref = Some(require_widget(&mut u, widget_titles)?);
            match pair(&mut u, &["x", "column", "col"], &["y", "row"])? {
                (Some(x), Some(y)) => {
                    cmd.x = Some(x);
                    cmd.y = Some(y);
                    Ok(cmd)
                }
                _ => Err(NoMatch::new(
                    NoMatchReason::MissingPosition,
                    "say where to move it, as a column and a row",
                )
                .suggest(vec!["move widget 1 to 0 4".into()])),
            }
        }
        Verb::Resize => {
            let mut cmd = AgentCommand::new(Intent::Resize);
            cmd.widget_ref = Some(require_widget(&mut u, widget_titles)?);
            let size = match compact_size(&mut u)? {
                Some(size) => size,
                None => match pair(&mut u, &["width", "w"], &["height", "h"])? {
                    (Some(w), Some(h)) => (w, h),
                    _ => {
                        return Err(NoMatch::new(
                            NoMatchReason::MissingSize,
                            "say the new size as width x height",
                        )
                        .suggest(vec!["resize widget 1 to 6x4".into()]))
                    }
                },
            };
            cmd.w = Some(size.0);
            cmd.h = Some(size.1);
            Ok(cmd)
        }
        Verb::Retitle => retitle(&mut u, widget_titles),
        Verb::Recolor => {
            let mut cmd = AgentCommand::new(Intent::Recolor);
            cmd.widget_ref = Some(require_widget(&mut u, widget_titles)?);
            cmd.color = Some(take_color(&mut u).ok_or_else(|| {
                NoMatch::new(NoMatchReason::MissingColor, "say which color to use")
                    .suggest(Color::ALL.iter().map(|c| c.name().to_string()).collect())
            })?);
            Ok(cmd)
        }
    }
}

fn source_command(
    u: &mut Utterance<'_>,
    verb: Verb,
    sources: &[SourceRef],
) -> Result<AgentCommand, NoMatch> {
    let window = take_window(u)?;
    let group_by = take_group_by(u);
    let source = take_source(u, sources)?;
    let kind = take_kind(u);
    let show_value = match verb {
        Verb::Query => true,
        Verb::Show => kind.is_none() && matches!(source, SourceRef::Kpi(_)),
        _ => false,
    };
    if show_value {
        if let SourceRef::Datasource(name) = &source {
            return Err(NoMatch::new(
                NoMatchReason::NotAKpi,
                format!("`{name}` is a datasource; ask about a KPI instead"),
            )
            .suggest(kpi_names(sources)));
        }
        let mut cmd = AgentCommand::new(Intent::ShowValue);
        cmd.source = Some(source);
        cmd.window = window;
        cmd.group_by = group_by;
        return Ok(cmd);
    }
    let mut cmd = AgentCommand::new(Intent::AddWidget);
    cmd.kind = kind;
    cmd.source = Some(source);
    cmd.window = window;
    cmd.group_by = group_by;
    cmd.color = take_color(u);
    cmd.title = u.take_quote();
    Ok(cmd)
}

fn kpi_names(sources: &[SourceRef]) -> Vec<String> {
    sources
        .iter()
        .filter(|s| matches!(s, SourceRef::Kpi(_)))
        .map(|s| s.name().to_string())
        .collect()
}

/// "last 7 days", "past 24h", "last week".
fn take_window(u: &mut Utterance<'_>) -> Result<Option<Duration>, NoMatch> {
    let invalid = |what: &str| {
        NoMatch::new(
            NoMatchReason::InvalidWindow,
            format!("`{what}` is not a usable time window"),
        )
        .suggest(vec!["for the last 7 days".into(), "over the last 24 hours".into()])
    };
    for i in 0..u.len() {
        if !matches!(u.word(i), Some("last" | "past" | "previous")) {
            continue;
        }
        let next = u.word(i + 1).map(str::to_owned);
        let Some(next) = next else { continue };
        // "last 7d"
        let split = next.find(|c: char| !c.is_ascii_digit()).unwrap_or(next.len());
        let (num, suffix) = next.split_at(split);
        let parsed = if !num.is_empty() && !suffix.is_empty() {
            unit_word(suffix).map(|unit| (num.to_string(), unit, vec![i, i + 1]))
        } else if let Some(unit) = unit_word(&next) {
            Some(("1".to_string(), unit, vec![i, i + 1]))
        } else if !num.is_empty() {
            u.word(i + 2)
                .and_then(unit_word)
                .map(|unit| (num.to_string(), unit, vec![i, i + 1, i + 2]))
        } else {
            None
        };
        let Some((num, unit, consumed)) = parsed else { continue };
        let magnitude: u32 = num.parse().map_err(|_| invalid(&num))?;
        let window = Duration::new(magnitude, unit).map_err(|_| invalid(&format!("{num} {}s", unit.noun())))?;
        for c in consumed {
            u.take(c);
        }
        return Ok(Some(window));
    }
    Ok(None)
}

/// "grouped by station", "group by x", "broken down by x", "per x".
fn take_group_by(u: &mut Utterance<'_>) -> Option<String> {
    for i in 0..u.len() {
        let lead = match u.word(i) {
            Some("per") => vec![i],
            Some("by") if i > 0 => match u.word(i - 1) {
                Some("grouped" | "group" | "split") => vec![i - 1, i],
                Some("down") if i > 1 && u.word(i - 2) == Some("broken") => vec![i - 2, i - 1, i],
                _ => continue,
            },
            _ => continue,
        };
        if u.word(i + 1).is_none() {
            continue;
        }
        // Field names may contain underscores, which split tokens.
        let start = u.toks[i + 1].start;
        let end = u.raw[start..]
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .map_or(u.raw.len(), |n| start + n);
        let field = u.raw[start..end].trim_end_matches('_').to_lowercase();
        for j in lead {
            u.take(j);
        }
        let mut j = i + 1;
        while j < u.len() && u.toks[j].start < end {
            u.take(j);
            j += 1;
        }
        return Some(field);
    }
    None
}

/// Longest mention of a known source; names match with `_` and spaces
/// interchangeable, case-insensitively.
fn take_source(u: &mut Utterance<'_>, sources: &[SourceRef]) -> Result<SourceRef, NoMatch> {
    let mut hits: Vec<(usize, usize, &SourceRef)> = Vec::new();
    for s in sources {
        let words = tokenize(s.name());
        if words.is_empty() {
            continue;
        }
        for start in 0..u.len() {
            if words
                .iter()
                .enumerate()
                .all(|(k, w)| u.word(start + k) == Some(w.as_str()))
            {
                hits.push((start, words.len(), s));
            }
        }
    }
    let kept: Vec<(usize, usize, &SourceRef)> = hits
        .iter()
        .copied()
        .filter(|&(s, len, _)| {
            !hits
                .iter()
                .any(|&(os, olen, _)| olen > len && os <= s && s + len <= os + olen)
        })
        .collect();
    let mut distinct: Vec<&SourceRef> = kept.iter().map(|h| h.2).collect();
    distinct.sort();
    distinct.dedup();
    match distinct.as_slice() {
        [] => {
            let words: Vec<String> = (0..u.len()).filter_map(|i| u.word(i).map(str::to_owned)).collect();
            let mut related: Vec<String> = sources
                .iter()
                .filter(|s| tokenize(s.name()).iter().any(|t| words.contains(t)))
                .map(|s| s.name().to_string())
                .collect();
            if related.is_empty() {
                related = sources.iter().map(|s| s.name().to_string()).collect();
            }
            related.dedup();
            Err(NoMatch::new(NoMatchReason::NoSource, "I could not tell which data you mean")
                .suggest(related))
        }
        [one] => {
            let one = (*one).clone();
            for (start, len, _) in kept {
                for i in start..start + len {
                    u.take(i);
                }
            }
            Ok(one)
        }
        many => Err(NoMatch::new(
            NoMatchReason::AmbiguousSource,
            "that matches more than one source; name exactly one",
        )
        .suggest(many.iter().map(|s| s.to_string()).collect())),
    }
}

fn take_kind(u: &mut Utterance<'_>) -> Option<WidgetKind> {
    let i = u.first(|w| kind_word(w).is_some())?;
    let kind = kind_word(&u.toks[i].text);
    u.take(i);
    if matches!(u.word(i + 1), Some("chart" | "graph" | "plot" | "widget")) {
        u.take(i + 1);
    }
    kind
}

fn take_color(u: &mut Utterance<'_>) -> Option<Color> {
    let i = u.first(|w| Color::from_name(w).is_some())?;
    u.take(i);
    Color::from_name(&u.toks[i].text)
}

/// "widget 3", "widget number 3", a known title, or (if allowed) a quoted
/// title. Only words before `limit` are considered.
fn take_widget(
    u: &mut Utterance<'_>,
    titles: &[String],
    limit: usize,
    allow_quote: bool,
) -> Result<Option<WidgetRef>, NoMatch> {
    for i in 0..limit {
        if u.word(i) != Some("widget") {
            continue;
        }
        let mut j = i + 1;
        if matches!(u.word(j), Some("number" | "no" | "nr")) {
            j += 1;
        }
        if j >= limit {
            continue;
        }
        if let Some(n) = u.number_at(j) {
            let n = n?;
            for k in i..=j {
                u.take(k);
            }
            return Ok(Some(WidgetRef::Index(n)));
        }
    }
    let mut best: Option<(usize, usize, &String)> = None;
    for title in titles {
        let words = tokenize(title);
        if let Some(start) = u.find_seq(&words, limit) {
            if best.is_none_or(|(len, _, _)| words.len() > len) {
                best = Some((words.len(), start, title));
            }
        }
    }
    if let Some((len, start, title)) = best {
        for i in start..start + len {
            u.take(i);
        }
        return Ok(Some(WidgetRef::Title(title.clone())));
    }
    if allow_quote {
        return Ok(u.take_quote().map(WidgetRef::Title));
    }
    Ok(None)
}

fn missing_widget() -> NoMatch {
    NoMatch::new(
        NoMatchReason::MissingWidget,
        "say which widget, by number or by its title",
    )
    .suggest(vec!["widget 1".into(), "\"<title>\"".into()])
}

fn require_widget(u: &mut Utterance<'_>, titles: &[String]) -> Result<WidgetRef, NoMatch> {
    let limit = u.len();
    take_widget(u, titles, limit, true)?.ok_or_else(missing_widget)
}

/// Two numbers, each either labelled ("column 3", "row 2") or positional.
fn pair(
    u: &mut Utterance<'_>,
    first_labels: &[&str],
    second_labels: &[&str],
) -> Result<(Option<u32>, Option<u32>), NoMatch> {
    let mut out = [None, None];
    for i in 0..u.len() {
        let Some(word) = u.word(i) else { continue };
        let slot = if first_labels.contains(&word) {
            0
        } else if second_labels.contains(&word) {
            1
        } else {
            continue;
        };
        if out[slot].is_some() {
            continue;
        }
        if let Some(n) = u.number_at(i + 1) {
            out[slot] = Some(n?);
            u.take(i);
            u.take(i + 1);
        }
    }
    for i in 0..u.len() {
        let Some(n) = u.number_at(i) else { continue };
        let Some(slot) = out.iter().position(Option::is_none) else { break };
        out[slot] = Some(n?);
        u.take(i);
    }
    Ok((out[0], out[1]))
}

/// "4x3".
fn compact_size(u: &mut Utterance<'_>) -> Result<Option<(u32, u32)>, NoMatch> {
    for i in 0..u.len() {
        let Some(word) = u.word(i) else { continue };
        let Some((a, b)) = word.split_once('x') else { continue };
        if let (Some(w), Some(h)) = (digits(a), digits(b)) {
            let size = (w?, h?);
            u.take(i);
            return Ok(Some(size));
        }
    }
    Ok(None)
}

fn clean_title(text: &str) -> String {
    text.trim()
        .trim_matches(|c| matches!(c, '"' | '“' | '”'))
        .trim_end_matches(['.', '!', '?'])
        .trim()
        .to_string()
}

/// "rename widget 2 to Air quality", `rename "Old" to "New"`.
fn retitle(u: &mut Utterance<'_>, titles: &[String]) -> Result<AgentCommand, NoMatch> {
    let to_at = (0..u.len())
        .rev()
        .find(|&i| matches!(u.word(i), Some("to" | "as")));
    let limit = to_at.unwrap_or(u.len());
    let tail = to_at
        .map(|i| clean_title(&u.raw[u.toks[i].end..]))
        .filter(|t| !t.is_empty());
    let mut widget = take_widget(u, titles, limit, false)?;
    if widget.is_none() && (u.quotes_left() >= 2 || (u.quotes_left() == 1 && tail.is_some())) {
        let quote_start = u.raw.find(['"', '“']).unwrap_or(0);
        // A lone quote after "to" is the new title, not the widget.
        let quote_is_tail = to_at.is_some_and(|i| u.toks[i].end <= quote_start);
        if u.quotes_left() >= 2 || !quote_is_tail {
            widget = u.take_quote().map(WidgetRef::Title);
        }
    }
    let widget = widget.ok_or_else(missing_widget)?;
    let title = u
        .take_quote()
        .or(tail)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| {
            NoMatch::new(NoMatchReason::MissingTitle, "say the new title after \"to\"")
                .suggest(vec!["rename widget 1 to \"Air quality\"".into()])
        })?;
    let mut cmd = AgentCommand::new(Intent::Retitle);
    cmd.widget_ref = Some(widget);
    cmd.title = Some(title);
    Ok(cmd)
}
