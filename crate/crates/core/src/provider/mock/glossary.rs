/// (word, child-friendly definition, picture that shows it)
const ENTRIES: &[(&str, &str, &str)] = &[
    ("massive", "very, very big", "an enormous whale swimming next to a tiny boat"),
    ("ordinary", "normal and not special", "a plain white cup on a kitchen table"),
    ("clumsy", "bumping into things and dropping things by accident", "a boy tripping over his own shoelaces"),
    ("imitate", "to copy what someone else does", "a girl copying her dad's funny face"),
    ("permission", "when someone says it is okay for you to do something", "a child raising a hand and a teacher nodding yes"),
    ("self-control", "stopping yourself and waiting, even when it is hard", "a child waiting calmly in front of a cookie jar"),
    ("imagine", "to make a picture in your mind", "a girl dreaming about a castle in a thought bubble"),
    ("confident", "feeling sure that you can do it", "a boy standing tall on a stage and smiling"),
    ("compassion", "caring about someone who feels sad or hurt", "a child hugging a friend who is crying"),
    ("awestruck", "so amazed that you can only say wow", "a family staring up at giant fireworks"),
    ("perseverance", "to keep trying even when something is hard", "a girl trying again and again to ride her bike"),
    ("gumption", "being brave and trying hard to get something done", "a small pony climbing a steep hill"),
    ("chirp", "a short, high sound a little bird makes", "a tiny bird singing on a branch"),
    ("consequences", "what happens because of something you did", "a spilled glass of milk after a bump"),
    ("orbit", "to go around and around something in space", "the moon going around the earth"),
    ("somersault", "rolling your body head over heels", "a child rolling forward on a soft mat"),
    ("frisky", "playful and full of energy", "a puppy jumping around with a ball"),
    ("advocate", "someone who speaks up for another person", "a girl speaking up for her friend in class"),
    ("bait", "food used to catch an animal", "a worm on a fishing hook"),
    ("justice", "making things fair for everyone", "a judge sharing cake in equal pieces"),
    ("apartment", "a home inside a big building with many homes", "a tall building with many windows and doors"),
    ("wonder", "to think about something and ask questions", "a boy looking at the stars and asking why"),
    ("sympathy", "feeling sorry when someone is sad", "a child patting a sad friend on the back"),
    ("achieve", "to do something you worked hard for", "a girl holding a trophy after a race"),
    ("attempt", "to try to do something", "a boy trying to catch a ball"),
    ("persistent", "not giving up, and trying again and again", "an ant carrying a crumb up a hill"),
    ("considerate", "thinking about what other people need", "a child holding the door for a grandma"),
    ("legal", "allowed by the rules everyone follows", "a car stopping at a red light"),
    ("empathy", "feeling what someone else feels", "two friends sad together about a broken toy"),
    ("usual", "what happens most of the time", "a family eating breakfast like every morning"),
    ("sheriff", "a person whose job is to keep a town safe", "a sheriff with a star badge and a cowboy hat"),
    ("adventure", "an exciting trip where new things happen", "children exploring a jungle with a map"),
];

/// Built-in child-friendly definition for a known word.
pub fn glossary_definition(word: &str) -> Option<&'static str> {
    lookup(word).map(|e| e.1)
}

pub(super) fn picture(word: &str) -> Option<&'static str> {
    lookup(word).map(|e| e.2)
}

fn lookup(word: &str) -> Option<&'static (&'static str, &'static str, &'static str)> {
    let w = crate::domain::normalize_token(word);
    ENTRIES.iter().find(|e| e.0 == w)
}

pub(super) fn fallback_definition() -> &'static str {
    "a special word that we are learning together today"
}
