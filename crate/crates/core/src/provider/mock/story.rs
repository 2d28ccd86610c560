//! Story and question authoring mocks.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{glossary, MockTextGen};
use crate::domain::{mentions_name, normalize_token, split_sentences, word_count, ArcMarkers, QuestionKind};
use crate::provider::wire::{self, var, QuestionDraft, ScriptDraft, StoryDraft};
use crate::provider::{ProviderError, TextGenRequest};
use crate::util::{capitalize, derive_seed, fill, rng, unit};

const HEROES: &[&str] = &["Pip", "Luna", "Milo", "Tilly", "Bobo", "Rosie", "Ziggy", "Poppy", "Benny", "Nora", "Kiko", "Wren"];
const CREATURES: &[&str] =
    &["little pony", "brave bunny", "tiny dragon", "friendly robot", "curious kitten", "happy puppy", "small owl", "gentle bear"];

/// (event, struggle) pairs for the conflict section.
const EVENTS: &[(&str, &str)] = &[
    ("{hero} wanted to climb a tall, rocky cliff to reach a shiny star", "The cliff was steep and the rocks were slippery."),
    ("a big wind blew {hero}'s favorite kite into a tall tree", "The branches were high and the kite was stuck."),
    ("{hero} had to cross a wide, splashy river to bring apples to a friend", "The water was cold and the stones were wobbly."),
    ("{hero} lost a special map on the way to the big {theme} party", "The path split in two and {hero} did not know which way to go."),
    ("the little bridge to the {theme} fair was broken in the middle", "Nobody knew how to fix it, and everyone felt stuck."),
    ("{hero} wanted to build the tallest tower of blocks in town", "Every time it got tall, the tower wobbled and fell down."),
];

const EXPOSITION_FILLERS: &[&str] = &[
    "{hero} lived in a cozy little house near a sunny hill.",
    "Every morning, {hero} ate warm oatmeal with berries.",
    "{hero} had a best friend named {friend}.",
    "They loved to play games about {theme} all day long.",
    "The sky was bright and blue, and the birds sang sweet songs.",
    "{friend} liked to tell funny jokes that made everyone giggle.",
    "On sunny days, they ran through the green grass together.",
    "{hero} had a red scarf that fluttered in the breeze.",
    "Everything about {theme} made {hero} smile.",
    "At night, {hero} looked up at the twinkly stars.",
    "There were flowers everywhere, pink and yellow and purple.",
    "{hero} always said hello to the ducks by the pond.",
];

const CONFLICT_FILLERS: &[&str] = &[
    "It was very hard.",
    "{hero} felt a little scared.",
    "The wind went whoosh, whoosh!",
    "{friend} held {hero}'s hand tight.",
    "{hero} took a deep breath and looked up.",
    "Step by step, {hero} kept going.",
    "It was a big, big problem.",
    "\"Can we do it?\" asked {friend}.",
    "{hero} slipped once, but got back up.",
    "The sun was hiding behind gray clouds.",
    "They tried one way, and then another way.",
    "{hero} counted, one, two, three, and tried again.",
    "Their tummies rumbled, but they did not stop.",
];

const RESOLUTION_FILLERS: &[&str] = &[
    "At last, {hero} made it!",
    "{friend} gave {hero} a big, warm hug.",
    "They laughed and danced together in a circle.",
    "The sun came back out, soft and golden.",
    "{hero} felt proud and happy inside.",
    "Everyone clapped and cheered.",
    "They shared yummy snacks to celebrate.",
    "That night, {hero} dreamed about {theme}.",
    "{friend} said, \"You did it, {hero}!\"",
    "The birds sang a happy song just for them.",
    "{hero} waved goodbye to the day with a big smile.",
];

const TARGET_SENTENCES: &[&str] = &[
    "{hero} knew a special word for this: {word}.",
    "\"I can show {word} today,\" said {hero}.",
    "{hero} thought about the word {word} again.",
    "That was a moment for {word}.",
    "{friend} smiled and said, \"That is {word}!\"",
    "Everyone cheered for {word}.",
    "Now {hero} understood the word {word} even better.",
    "\"Remember {word},\" whispered {friend}.",
    "{hero} said the word {word} out loud.",
    "It felt good to learn about {word}.",
];

struct Cast<'a> {
    hero: &'a str,
    friend: &'a str,
    theme: &'a str,
    word: &'a str,
}

impl Cast<'_> {
    fn fill(&self, t: &str) -> String {
        capitalize_first(&fill(t, &[("hero", self.hero), ("friend", self.friend), ("theme", self.theme), ("word", self.word)]))
    }
}

fn capitalize_first(s: &str) -> String {
    if let Some(rest) = s.strip_prefix('"') {
        let mut out = String::from("\"");
        out.push_str(&capitalize(rest));
        out
    } else {
        capitalize(s)
    }
}

fn pick_name<'a>(pool: &[&'a str], start: usize, avoid: &[&str]) -> &'a str {
    (0..pool.len())
        .map(|i| pool[(start + i) % pool.len()])
        .find(|n| avoid.iter().all(|a| !mentions_name(n, a) && !n.eq_ignore_ascii_case(a)))
        .unwrap_or(pool[start % pool.len()])
}

struct Section {
    sentences: Vec<String>,
}

impl Section {
    fn words(&self) -> usize {
        self.sentences.iter().map(|s| word_count(s)).sum()
    }
}

fn build_section<R: Rng>(
    rng: &mut R,
    cast: &Cast<'_>,
    opening: Vec<String>,
    closing: Option<String>,
    fillers: &[&str],
    targets: Vec<String>,
    budget: usize,
) -> Section {
    let mut body = opening;
    let fixed = closing.as_ref().map_or(0, |c| word_count(c));
    let mut pool: Vec<&str> = fillers.to_vec();
    pool.shuffle(rng);
    let target_words: usize = targets.iter().map(|s| word_count(s)).sum();
    let mut used = body.iter().map(|s| word_count(s)).sum::<usize>() + target_words + fixed;
    let mut middle: Vec<String> = Vec::new();
    for f in pool {
        if used >= budget {
            break;
        }
        let s = cast.fill(f);
        used += word_count(&s);
        middle.push(s);
    }
    for t in targets {
        let at = rng.random_range(0..=middle.len());
        middle.insert(at, t);
    }
    body.extend(middle);
    body.extend(closing);
    Section { sentences: body }
}

pub(super) fn author(mock: &MockTextGen, req: &TextGenRequest) -> Result<String, ProviderError> {
    let theme = req.get(var::THEME).trim();
    let word = req.get(var::WORD).trim();
    if theme.is_empty() {
        return Err(ProviderError::MalformedOutput("story prompt has an empty theme".to_string()));
    }
    if normalize_token(word).is_empty() {
        return Err(ProviderError::MalformedOutput("story prompt has an empty target word".to_string()));
    }
    let child = req.get(var::CHILD_NAME).trim();
    let target_len: usize = req.get(var::WORD_TARGET).trim().parse().unwrap_or(200).clamp(60, 1000);
    let min_occ: usize = req.get(var::MIN_OCCURRENCES).trim().parse().unwrap_or(3);
    let definition = match req.get(var::DEFINITION).trim() {
        "" => glossary::glossary_definition(word).unwrap_or(glossary::fallback_definition()),
        d => d,
    };
    let salt = alloc::format!("story|{theme}|{word}");
    let mut r = rng(req.seed, &salt);

    let avoid = [child];
    let hero = pick_name(HEROES, r.random_range(0..HEROES.len()), &avoid);
    let friend = pick_name(HEROES, r.random_range(0..HEROES.len()), &[child, hero]);
    let creature = CREATURES[r.random_range(0..CREATURES.len())];
    let cast = Cast { hero, friend, theme, word };

    let total = r.random_range(5..=8).max(min_occ);
    let rest = total - 1;
    let expo_extra = usize::from(rest >= 3);
    let conflict_n = (rest - expo_extra).div_ceil(2);
    let resolution_n = rest - expo_extra - conflict_n;
    let mut target_pool: Vec<&str> = TARGET_SENTENCES.to_vec();
    target_pool.shuffle(&mut r);
    let mut targets = target_pool.into_iter().cycle().map(|t| cast.fill(t));
    let mut take = |n: usize| -> Vec<String> { (0..n).filter_map(|_| targets.next()).collect() };

    let (event, struggle) = EVENTS[r.random_range(0..EVENTS.len())];
    let definition_sentence = alloc::format!("{} means {}.", capitalize(word), definition.trim_end_matches('.'));

    let expo = build_section(
        &mut r,
        &cast,
        alloc::vec![
            cast.fill(&alloc::format!("Once upon a time, there was a {creature} named {{hero}}.")),
            cast.fill("{hero} loved {theme} more than anything."),
            definition_sentence.clone(),
        ],
        None,
        EXPOSITION_FILLERS,
        take(expo_extra),
        target_len * 3 / 10,
    );
    let conflict = build_section(
        &mut r,
        &cast,
        alloc::vec![cast.fill(&alloc::format!("One day, {event}.")), cast.fill(struggle)],
        None,
        CONFLICT_FILLERS,
        take(conflict_n),
        target_len * 4 / 10,
    );
    let remaining = target_len.saturating_sub(expo.words() + conflict.words());
    let resolution = build_section(
        &mut r,
        &cast,
        alloc::vec![cast.fill("{hero} did not give up.")],
        Some(String::from("The end.")),
        RESOLUTION_FILLERS,
        take(resolution_n),
        remaining.max(20),
    );

    let mut paragraphs: Vec<String> = [expo, conflict, resolution].into_iter().map(|s| s.sentences.join(" ")).collect();
    let unsafe_draw = unit(derive_seed(req.seed, &alloc::format!("story-unsafe|{theme}|{word}")));
    if unsafe_draw < mock.config.story_unsafe_rate {
        if let Some(p) = mock.unsafe_phrase(req.seed) {
            paragraphs[1].push(' ');
            paragraphs[1].push_str(p);
        }
    }
    let conflict_at = paragraphs[0].len() + 2;
    let resolution_at = conflict_at + paragraphs[1].len() + 2;
    let body = paragraphs.join("\n\n");
    Ok(wire::render(&StoryDraft {
        body,
        definition: Some(definition_sentence),
        arc: Some(ArcMarkers { conflict: conflict_at, resolution: resolution_at }),
    }))
}

fn hero_of(story: &str) -> Option<String> {
    let idx = story.find("named ")?;
    let name: String = story[idx + 6..].chars().take_while(|c| c.is_alphanumeric()).collect();
    (!name.is_empty()).then_some(name)
}

/// The first sentence of the conflict paragraph, as a clause.
fn conflict_clause(story: &str, word: &str) -> Option<String> {
    let paragraphs: Vec<&str> = story.split("\n\n").filter(|p| !p.trim().is_empty()).collect();
    let source = if paragraphs.len() >= 2 {
        split_sentences(paragraphs[1]).first().copied()
    } else {
        let target = crate::domain::WordTarget::new(word);
        split_sentences(story).into_iter().find(|s| crate::domain::count_matches(s, &target) > 0)
    }?;
    let mut clause = source.trim_end_matches(['.', '!', '?', '"']).trim();
    if let Some(rest) = clause.strip_prefix("One day, ") {
        clause = rest;
    }
    if clause.is_empty() {
        return None;
    }
    let first_word = clause.split_whitespace().next().unwrap_or("");
    let keep_case = first_word.chars().next().is_some_and(char::is_uppercase)
        && first_word.chars().skip(1).all(|c| !c.is_uppercase())
        && hero_of(story).is_some_and(|h| normalize_token(first_word).starts_with(&h.to_lowercase()));
    Some(if keep_case {
        clause.to_string()
    } else {
        let mut c = clause.chars();
        c.next().map(|f| f.to_lowercase().chain(c).collect()).unwrap_or_default()
    })
}

pub(super) fn interactions(req: &TextGenRequest) -> Result<String, ProviderError> {
    let story = req.get(var::STORY);
    let word = req.get(var::WORD).trim();
    if story.trim().is_empty() || word.is_empty() {
        return Err(ProviderError::MalformedOutput("interaction prompt needs a story and a word".to_string()));
    }
    let hero = hero_of(story).unwrap_or_else(|| "our friend".to_string());
    let clause = conflict_clause(story, word).unwrap_or_else(|| "something hard happened".to_string());
    let mut r = rng(req.seed, &alloc::format!("script|{word}"));
    let recall =
        ["Remember when {clause}? How did {hero} show {word} then?", "In the story, {clause}. What did {hero} do that showed {word}?"];
    let practice = [
        "When did you show {word}?",
        "Can you tell me about a time when you saw {word}?",
        "Can you think of a time you could use the word {word}?",
    ];
    let pairs = [("clause", clause.as_str()), ("hero", hero.as_str()), ("word", word)];
    let questions = alloc::vec![
        QuestionDraft { kind: QuestionKind::Perception, text: "Did you like the story?".to_string() },
        QuestionDraft { kind: QuestionKind::Recall, text: fill(recall[r.random_range(0..recall.len())], &pairs) },
        QuestionDraft { kind: QuestionKind::Practice, text: fill(practice[r.random_range(0..practice.len())], &pairs) },
    ];
    Ok(wire::render(&ScriptDraft { questions }))
}
