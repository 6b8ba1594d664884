use std::collections::BTreeMap;
use std::path::Path;

use super::{Message, Role};
use crate::error::{Error, Result};

pub const TEMPLATE_IDS: [&str; 7] = [
    "cap_abstraction",
    "cap_direction",
    "reflection_direction",
    "crossover",
    "elitist_mutation",
    "population_init",
    "ppp_predict",
];

const DEFAULTS: [(&str, &str); 7] = [
    ("cap_abstraction", include_str!("../../templates/cap_abstraction.txt")),
    ("cap_direction", include_str!("../../templates/cap_direction.txt")),
    ("reflection_direction", include_str!("../../templates/reflection_direction.txt")),
    ("crossover", include_str!("../../templates/crossover.txt")),
    ("elitist_mutation", include_str!("../../templates/elitist_mutation.txt")),
    ("population_init", include_str!("../../templates/population_init.txt")),
    ("ppp_predict", include_str!("../../templates/ppp_predict.txt")),
];

pub type Bindings<'a> = BTreeMap<&'a str, String>;

/// Plain-text prompt templates with `{placeholder}` slots.
///
/// A template may split into messages with lines reading exactly `[system]`
/// or `[user]`; without such markers the whole text is one user message.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateStore {
    fn default() -> Self {
        TemplateStore {
            templates: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl TemplateStore {
    pub fn empty() -> Self {
        TemplateStore {
            templates: BTreeMap::new(),
        }
    }

    /// Builtin templates overridden by every `<id>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut store = Self::default();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            store.insert(id, text);
        }
        Ok(store)
    }

    pub fn insert(&mut self, id: &str, text: impl Into<String>) {
        self.templates.insert(id.to_string(), text.into());
    }

    pub fn render(&self, template_id: &str, bindings: &Bindings<'_>) -> Result<Vec<Message>> {
        let text = self
            .templates
            .get(template_id)
            .ok_or_else(|| Error::TemplateNotFound(template_id.to_string()))?;
        let filled = substitute(template_id, text, bindings)?;
        Ok(split_messages(&filled))
    }
}

fn placeholder_at(text: &str, open: usize) -> Option<&str> {
    let rest = &text[open + 1..];
    let close = rest.find('}')?;
    let name = &rest[..close];
    let valid = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && !name.starts_with(|c: char| c.is_ascii_digit());
    valid.then_some(name)
}

/// Single pass; bound values are inserted verbatim and never rescanned.
fn substitute(template_id: &str, text: &str, bindings: &Bindings<'_>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let open = i + off;
        out.push_str(&text[i..open]);
        match placeholder_at(text, open) {
            Some(name) => {
                let value = bindings.get(name).ok_or_else(|| Error::MissingBinding {
                    template: template_id.to_string(),
                    placeholder: name.to_string(),
                })?;
                out.push_str(value);
                i = open + name.len() + 2;
            }
            None => {
                out.push('{');
                i = open + 1;
            }
        }
    }
    out.push_str(&text[i..]);
    Ok(out)
}

fn split_messages(text: &str) -> Vec<Message> {
    let has_markers = text
        .lines()
        .any(|l| l.trim_end() == "[system]" || l.trim_end() == "[user]");
    if !has_markers {
        return vec![Message::user(text)];
    }
    let mut messages = Vec::new();
    let mut current: Option<(Role, String)> = None;
    for line in text.lines() {
        let role = match line.trim_end() {
            "[system]" => Some(Role::System),
            "[user]" => Some(Role::User),
            _ => None,
        };
        match (role, current.as_mut()) {
            (Some(r), _) => {
                if let Some((role, body)) = current.take() {
                    messages.push(Message {
                        role,
                        text: body.trim_matches('\n').to_string(),
                    });
                }
                current = Some((r, String::new()));
            }
            (None, Some((_, body))) => {
                body.push_str(line);
                body.push('\n');
            }
            (None, None) => {}
        }
    }
    if let Some((role, body)) = current {
        messages.push(Message {
            role,
            text: body.trim_matches('\n').to_string(),
        });
    }
    messages
}

#[cfg(test)]
mod tests {
    use super::*;

    fn common<'a>() -> Bindings<'a> {
        let mut b = Bindings::new();
        b.insert("task_description", "TSP".into());
        b.insert("function_name", "heuristics".into());
        b.insert("candidate_signature", "def heuristics(d)".into());
        b
    }

    #[test]
    fn every_default_template_is_present() {
        let store = TemplateStore::default();
        for id in TEMPLATE_IDS {
            assert!(store.templates.contains_key(id), "{id}");
        }
    }

    #[test]
    fn abstraction_contains_all_sources_verbatim() {
        let sources: Vec<String> = (0..5)
            .map(|i| format!("def heuristics(d):\n    return d * {i} + {{'k': {i}}}"))
            .collect();
        let mut b = common();
        b.insert("count", "5".into());
        b.insert("source_kind", "elite".into());
        b.insert("heuristics", sources.join("\n\n"));
        let msgs = TemplateStore::default().render("cap_abstraction", &b).unwrap();
        let users: Vec<_> = msgs.iter().filter(|m| m.role == Role::User).collect();
        assert_eq!(users.len(), 1);
        for s in &sources {
            assert!(users[0].text.contains(s.as_str()));
        }
        assert!(users[0].text.contains("abstract the core components"));
    }

    #[test]
    fn missing_binding_is_named() {
        let err = TemplateStore::default()
            .render("cap_abstraction", &Bindings::new())
            .unwrap_err();
        assert!(
            matches!(&err, Error::MissingBinding { placeholder, .. } if placeholder == "task_description"),
            "{err}"
        );
    }

    #[test]
    fn no_placeholders_is_identity() {
        let mut store = TemplateStore::empty();
        let text = "plain text with a dict {1: 2} and braces { }\n";
        store.insert("plain", text);
        let msgs = store.render("plain", &Bindings::new()).unwrap();
        assert_eq!(msgs, vec![Message::user(text)]);
    }

    #[test]
    fn unknown_template() {
        assert!(matches!(
            TemplateStore::default().render("nope", &Bindings::new()),
            Err(Error::TemplateNotFound(_))
        ));
    }

    #[test]
    fn bound_values_are_not_rescanned() {
        let mut store = TemplateStore::empty();
        store.insert("t", "a {x} b");
        let mut b = Bindings::new();
        b.insert("x", "{y}".into());
        assert_eq!(store.render("t", &b).unwrap()[0].text, "a {y} b");
    }

    #[test]
    fn sections_split_into_messages() {
        let mut store = TemplateStore::empty();
        store.insert("t", "[system]\nsys\n[user]\nhello {n}\n");
        let mut b = Bindings::new();
        b.insert("n", "7".into());
        let msgs = store.render("t", &b).unwrap();
        assert_eq!(msgs, vec![Message::system("sys"), Message::user("hello 7")]);
    }
}
