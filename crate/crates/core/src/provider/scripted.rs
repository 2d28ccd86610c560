use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use super::{ProviderError, TemplateId, TextGenRequest, TextGenerator};

type Reply = Result<String, ProviderError>;

/// Text generator that replays canned replies, falling through to an inner
/// generator for anything not scripted. Seed-keyed replies win over
/// sequences; sequences are consumed in call order per template and the last
/// entry repeats once exhausted.
#[derive(Default)]
pub struct ScriptedTextGen {
    fallback: Option<Arc<dyn TextGenerator>>,
    by_seed: BTreeMap<(TemplateId, u64), Reply>,
    sequences: BTreeMap<TemplateId, (Vec<Reply>, AtomicUsize)>,
    calls: BTreeMap<TemplateId, AtomicUsize>,
}

impl ScriptedTextGen {
    pub fn new(fallback: Option<Arc<dyn TextGenerator>>) -> Self {
        let calls = TemplateId::ALL.iter().map(|t| (*t, AtomicUsize::new(0))).collect();
        Self { fallback, calls, ..Default::default() }
    }

    pub fn on_seed(mut self, template: TemplateId, seed: u64, reply: Reply) -> Self {
        self.by_seed.insert((template, seed), reply);
        self
    }

    pub fn sequence(mut self, template: TemplateId, replies: Vec<Reply>) -> Self {
        self.sequences.insert(template, (replies, AtomicUsize::new(0)));
        self
    }

    pub fn always(self, template: TemplateId, reply: Reply) -> Self {
        self.sequence(template, alloc::vec![reply])
    }

    /// Calls received for `template` so far.
    pub fn calls(&self, template: TemplateId) -> usize {
        self.calls.get(&template).map_or(0, |c| c.load(Ordering::SeqCst))
    }
}

impl TextGenerator for ScriptedTextGen {
    fn generate_text(&self, req: &TextGenRequest) -> Result<String, ProviderError> {
        if let Some(c) = self.calls.get(&req.template_id) {
            c.fetch_add(1, Ordering::SeqCst);
        }
        if let Some(reply) = self.by_seed.get(&(req.template_id, req.seed)) {
            return reply.clone();
        }
        if let Some((replies, cursor)) = self.sequences.get(&req.template_id) {
            if !replies.is_empty() {
                let i = cursor.fetch_add(1, Ordering::SeqCst).min(replies.len() - 1);
                return replies[i].clone();
            }
        }
        match &self.fallback {
            Some(f) => f.generate_text(req),
            None => Err(ProviderError::Unavailable(alloc::format!("no scripted reply for {:?}", req.template_id))),
        }
    }
}
