//! Rule grammar for synthetic trainer utterances.
//!
//! A grammar file is a sequence of rule blocks:
//!
//! ```text
//! rule dodge_forward priority 90
//! when advance & (car_left | car_right) & !car_ahead
//! template "i am {dodging} the {obstacle} that is coming up beside me"
//! slot dodging: dodging | avoiding | evading
//! slot obstacle: obstacle | car | vehicle
//! ```
//!
//! Lines starting with `#` are comments. Larger priorities win. Exactly one
//! rule must have the condition `always`; it is the catch-all.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, Cell, LocalView};

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("grammar line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("grammar: {0}")]
    Config(String),
}

/// Minimum number of distinct sentences every rule must be able to produce.
pub const MIN_SURFACE_FORMS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    ClearAhead,
    CarAhead,
    CarLeft,
    CarRight,
    WaterAhead,
    LogAhead,
    AtLeftWall,
    AtRightWall,
    OnLog,
    GoalVisible,
    Advance,
    Retreat,
    MoveLeft,
    MoveRight,
    Dodge,
    Wait,
    Always,
}

impl Predicate {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "clear_ahead" => Predicate::ClearAhead,
            "car_ahead" => Predicate::CarAhead,
            "car_left" => Predicate::CarLeft,
            "car_right" => Predicate::CarRight,
            "water_ahead" => Predicate::WaterAhead,
            "log_ahead" => Predicate::LogAhead,
            "at_left_wall" => Predicate::AtLeftWall,
            "at_right_wall" => Predicate::AtRightWall,
            "on_log" => Predicate::OnLog,
            "goal_visible" => Predicate::GoalVisible,
            "advance" => Predicate::Advance,
            "retreat" => Predicate::Retreat,
            "left" => Predicate::MoveLeft,
            "right" => Predicate::MoveRight,
            "dodge" => Predicate::Dodge,
            "wait" => Predicate::Wait,
            "always" => Predicate::Always,
            _ => return None,
        })
    }

    pub fn holds(self, view: &LocalView, action: Action) -> bool {
        let c = view.cells();
        match self {
            Predicate::ClearAhead => matches!(c[LocalView::AHEAD], Cell::Grass | Cell::Road | Cell::Goal),
            Predicate::CarAhead => c[LocalView::AHEAD] == Cell::Car,
            Predicate::CarLeft => c[LocalView::AHEAD_LEFT] == Cell::Car || c[LocalView::LEFT] == Cell::Car,
            Predicate::CarRight => {
                c[LocalView::AHEAD_RIGHT] == Cell::Car || c[LocalView::RIGHT] == Cell::Car
            }
            Predicate::WaterAhead => c[LocalView::AHEAD] == Cell::Water,
            Predicate::LogAhead => c[LocalView::AHEAD] == Cell::Log,
            Predicate::AtLeftWall => c[LocalView::LEFT] == Cell::Wall,
            Predicate::AtRightWall => c[LocalView::RIGHT] == Cell::Wall,
            Predicate::OnLog => c[LocalView::CENTER] == Cell::Log,
            Predicate::GoalVisible => c[..3].contains(&Cell::Goal),
            Predicate::Advance => action == Action::Up,
            Predicate::Retreat => action == Action::Down,
            Predicate::MoveLeft => action == Action::Left,
            Predicate::MoveRight => action == Action::Right,
            Predicate::Dodge => matches!(action, Action::Left | Action::Right),
            Predicate::Wait => action == Action::Stay,
            Predicate::Always => true,
        }
    }
}

/// Boolean condition over (view, action).
#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Pred(Predicate),
    Not(Box<Condition>),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
}

impl Condition {
    pub fn eval(&self, view: &LocalView, action: Action) -> bool {
        match self {
            Condition::Pred(p) => p.holds(view, action),
            Condition::Not(c) => !c.eval(view, action),
            Condition::And(a, b) => a.eval(view, action) && b.eval(view, action),
            Condition::Or(a, b) => a.eval(view, action) || b.eval(view, action),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let tokens = lex_condition(text)?;
        let mut parser = CondParser { tokens, pos: 0 };
        let cond = parser.or_expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(format!("unexpected `{}`", parser.tokens[parser.pos]));
        }
        Ok(cond)
    }
}

fn lex_condition(text: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&ch) = chars.peek() {
        if ch.is_whitespace() {
            chars.next();
        } else if "!&|()".contains(ch) {
            tokens.push(ch.to_string());
            chars.next();
        } else if ch.is_ascii_alphanumeric() || ch == '_' {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            tokens.push(word);
        } else {
            return Err(format!("unexpected character `{ch}` in condition"));
        }
    }
    Ok(tokens)
}

struct CondParser {
    tokens: Vec<String>,
    pos: usize,
}

impl CondParser {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(String::as_str)
    }

    fn or_expr(&mut self) -> Result<Condition, String> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some("|") {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = Condition::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Condition, String> {
        let mut lhs = self.unary()?;
        while self.peek() == Some("&") {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Condition::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Condition, String> {
        match self.peek() {
            Some("!") => {
                self.pos += 1;
                Ok(Condition::Not(Box::new(self.unary()?)))
            }
            Some("(") => {
                self.pos += 1;
                let inner = self.or_expr()?;
                if self.peek() != Some(")") {
                    return Err("missing `)`".into());
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(name) => {
                let pred = Predicate::parse(name).ok_or_else(|| format!("unknown predicate `{name}`"))?;
                self.pos += 1;
                Ok(Condition::Pred(pred))
            }
            None => Err("condition ends unexpectedly".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pieces: Vec<Piece>,
}

impl Template {
    fn parse(text: &str) -> Result<Self, String> {
        let mut pieces = Vec::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| "unclosed `{` in template".to_string())?
                + open;
            let name = rest[open + 1..close].trim();
            if name.is_empty() {
                return Err("empty slot name".into());
            }
            pieces.push(Piece::Slot(name.to_string()));
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(Template { pieces })
    }

    fn slots(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(s.as_str()),
            Piece::Text(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrammarRule {
    pub id: String,
    pub priority: i64,
    pub condition: Condition,
    pub templates: Vec<Template>,
    pub slots: BTreeMap<String, Vec<String>>,
}

impl GrammarRule {
    pub fn matches(&self, view: &LocalView, action: Action) -> bool {
        self.condition.eval(view, action)
    }

    /// Draws a template and slot fills uniformly and returns the tokenized
    /// sentence.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<String> {
        let template = &self.templates[rng.gen_range(0..self.templates.len())];
        let mut text = String::new();
        for piece in &template.pieces {
            match piece {
                Piece::Text(t) => text.push_str(t),
                Piece::Slot(name) => {
                    let fills = &self.slots[name];
                    text.push_str(&fills[rng.gen_range(0..fills.len())]);
                }
            }
        }
        tokenize(&text)
    }

    /// All sentences this rule can produce, up to `limit`.
    pub fn surface_forms(&self, limit: usize) -> HashSet<String> {
        let mut out = HashSet::new();
        for template in &self.templates {
            let mut partial = vec![String::new()];
            for piece in &template.pieces {
                partial = match piece {
                    Piece::Text(t) => partial.into_iter().map(|p| p + t).collect(),
                    Piece::Slot(name) => partial
                        .iter()
                        .flat_map(|p| self.slots[name].iter().map(move |f| format!("{p}{f}")))
                        .take(limit)
                        .collect(),
                };
            }
            out.extend(partial.into_iter().map(|s| tokenize(&s).join(" ")));
            if out.len() >= limit {
                break;
            }
        }
        out
    }
}

/// Lowercase, drop punctuation, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    /// Sorted by descending priority.
    rules: Vec<GrammarRule>,
}

/// The grammar shipped with the crate.
pub const DEFAULT_GRAMMAR: &str = include_str!("../../data/grammar.txt");

impl Grammar {
    pub fn default_grammar() -> Self {
        Self::parse(DEFAULT_GRAMMAR).expect("bundled grammar is valid")
    }

    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        struct Partial {
            line: usize,
            id: String,
            priority: i64,
            condition: Option<Condition>,
            templates: Vec<Template>,
            slots: BTreeMap<String, Vec<String>>,
        }
        let perr = |line: usize, message: String| GrammarError::Parse { line, message };
        let mut partials: Vec<Partial> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            if keyword == "rule" {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 || parts[1] != "priority" {
                    return Err(perr(line_no, "expected `rule <id> priority <n>`".into()));
                }
                let priority = parts[2]
                    .parse()
                    .map_err(|_| perr(line_no, format!("bad priority `{}`", parts[2])))?;
                partials.push(Partial {
                    line: line_no,
                    id: parts[0].to_string(),
                    priority,
                    condition: None,
                    templates: Vec::new(),
                    slots: BTreeMap::new(),
                });
                continue;
            }
            let current = partials
                .last_mut()
                .ok_or_else(|| perr(line_no, format!("`{keyword}` outside a rule block")))?;
            match keyword {
                "when" => {
                    if current.condition.is_some() {
                        return Err(perr(line_no, "rule already has a condition".into()));
                    }
                    current.condition = Some(Condition::parse(rest).map_err(|m| perr(line_no, m))?);
                }
                "template" => {
                    let body = rest
                        .strip_prefix('"')
                        .and_then(|r| r.strip_suffix('"'))
                        .ok_or_else(|| perr(line_no, "template must be double-quoted".into()))?;
                    current
                        .templates
                        .push(Template::parse(body).map_err(|m| perr(line_no, m))?);
                }
                "slot" => {
                    let (name, fills) = rest
                        .split_once(':')
                        .ok_or_else(|| perr(line_no, "expected `slot <name>: a | b`".into()))?;
                    let fills: Vec<String> = fills
                        .split('|')
                        .map(|f| f.trim().to_string())
                        .filter(|f| !f.is_empty())
                        .collect();
                    if fills.is_empty() {
                        return Err(perr(line_no, "slot has no fills".into()));
                    }
                    current.slots.insert(name.trim().to_string(), fills);
                }
                other => return Err(perr(line_no, format!("unknown keyword `{other}`"))),
            }
        }

        let mut rules = Vec::with_capacity(partials.len());
        for p in partials {
            let condition = p
                .condition
                .ok_or_else(|| perr(p.line, format!("rule `{}` has no `when` line", p.id)))?;
            if p.templates.is_empty() {
                return Err(perr(p.line, format!("rule `{}` has no templates", p.id)));
            }
            for t in &p.templates {
                if let Some(missing) = t.slots().find(|s| !p.slots.contains_key(*s)) {
                    return Err(perr(
                        p.line,
                        format!("rule `{}` uses undefined slot `{missing}`", p.id),
                    ));
                }
            }
            rules.push(GrammarRule {
                id: p.id,
                priority: p.priority,
                condition,
                templates: p.templates,
                slots: p.slots,
            });
        }
        let grammar = Self::from_rules(rules)?;
        Ok(grammar)
    }

    pub fn from_rules(mut rules: Vec<GrammarRule>) -> Result<Self, GrammarError> {
        let cfg = |m: String| Err(GrammarError::Config(m));
        if rules.is_empty() {
            return cfg("grammar has no rules".into());
        }
        rules.sort_by(|a, b| b.priority.cmp(&a.priority));
        for pair in rules.windows(2) {
            if pair[0].priority == pair[1].priority {
                return cfg(format!(
                    "rules `{}` and `{}` share priority {}",
                    pair[0].id, pair[1].id, pair[0].priority
                ));
            }
        }
        let mut ids = HashSet::new();
        for rule in &rules {
            if !ids.insert(rule.id.as_str()) {
                return cfg(format!("duplicate rule id `{}`", rule.id));
            }
            let forms = rule.surface_forms(MIN_SURFACE_FORMS).len();
            if forms < MIN_SURFACE_FORMS {
                return cfg(format!(
                    "rule `{}` produces only {forms} distinct sentences (need {MIN_SURFACE_FORMS})",
                    rule.id
                ));
            }
        }
        if !rules
            .iter()
            .any(|r| r.condition == Condition::Pred(Predicate::Always))
        {
            return cfg("no catch-all rule (`when always`)".into());
        }
        Ok(Grammar { rules })
    }

    pub fn rules(&self) -> &[GrammarRule] {
        &self.rules
    }

    pub fn rule_index(&self, id: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.id == id)
    }

    /// Index of the highest-priority rule matching (view, action).
    pub fn correct_rule(&self, view: &LocalView, action: Action) -> usize {
        self.rules
            .iter()
            .position(|r| r.matches(view, action))
            .expect("the catch-all rule matches everything")
    }

    /// Picks the correct rule with probability `accuracy`, otherwise a rule
    /// drawn uniformly from the whole grammar. Returns the rule index.
    pub fn choose_rule<R: Rng + ?Sized>(
        &self,
        view: &LocalView,
        action: Action,
        accuracy: f64,
        rng: &mut R,
    ) -> usize {
        // Both draws are always consumed so that datasets built at different
        // accuracies from one seed share their template and slot draws.
        let use_correct = rng.gen::<f64>() < accuracy;
        let random_rule = rng.gen_range(0..self.rules.len());
        if use_correct {
            self.correct_rule(view, action)
        } else {
            random_rule
        }
    }

    pub fn describe<R: Rng + ?Sized>(
        &self,
        view: &LocalView,
        action: Action,
        accuracy: f64,
        rng: &mut R,
    ) -> Vec<String> {
        let rule = self.choose_rule(view, action, accuracy, rng);
        self.rules[rule].realize(rng)
    }

    /// Every word the grammar can emit.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut words: Vec<String> = self
            .rules
            .iter()
            .flat_map(|r| {
                let template_words = r.templates.iter().flat_map(|t| {
                    t.pieces.iter().filter_map(|p| match p {
                        Piece::Text(s) => Some(tokenize(s)),
                        Piece::Slot(_) => None,
                    })
                });
                let slot_words = r.slots.values().flatten().map(|f| tokenize(f));
                template_words.chain(slot_words).flatten().collect::<Vec<_>>()
            })
            .collect();
        words.sort();
        words.dedup();
        words
    }
}
