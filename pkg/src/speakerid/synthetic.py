"""Synthetic novels whose speakers are fully determined by surface cues.

Three patterns, one per quote type:

* explicit: the right context opens with ``said <speaker>``;
* anaphoric: the left context is ``<speaker> turned to <other> .`` and the
  right context opens with a pronoun plus ``said``;
* implicit: the left context holds the previous turn, ``"..." said <other>
  to <speaker> .``, so the addressee of that turn replies.

Mentions use the canonical name or an alias at random.
"""

from __future__ import annotations

import random

from .corpus import CharacterEntry, CharacterRoster, Gender, Novel, NovelCorpus, QuotationInstance, QuoteType

CAST = [
    ("Emma Woodhouse", ("Emma", "Miss Woodhouse"), Gender.FEMALE),
    ("Mr Knightley", ("Knightley",), Gender.MALE),
    ("Harriet Smith", ("Harriet",), Gender.FEMALE),
    ("Mrs Elton", ("Augusta",), Gender.FEMALE),
    ("Frank Churchill", ("Frank",), Gender.MALE),
    ("Jane Fairfax", ("Jane",), Gender.FEMALE),
    ("Mr Weston", ("Weston",), Gender.MALE),
    ("Miss Bates", ("Hetty",), Gender.FEMALE),
]

WORDS = ("I think we shall see the weather is fine today you must come to dinner "
         "how very kind of her nothing could be better indeed my dear it was a ball").split()

FILLERS = [
    "The fire crackled in the grate .",
    "Rain tapped against the window .",
    "A clock struck somewhere in the house .",
    "The carriage had not yet arrived .",
]

DISTRACTORS = [
    "{name} was sitting by the window .",
    "{name} had left the room .",
    "Everyone waited for {name} .",
]


def synthetic_roster(novel_id: str) -> CharacterRoster:
    return CharacterRoster(novel_id, tuple(
        CharacterEntry(f"c{i}", name, aliases, gender) for i, (name, aliases, gender) in enumerate(CAST)
    ))


def _mention(rng: random.Random, e: CharacterEntry) -> str:
    return rng.choice(e.names)


def _utterance(rng: random.Random) -> str:
    return '" ' + " ".join(rng.choice(WORDS) for _ in range(rng.randint(3, 7))) + ' "'


def make_synthetic_corpus(n_quotes: int = 600, seed: int = 0, n_novels: int = 1) -> NovelCorpus:
    """`n_quotes` quotations per novel, cycling explicit / anaphoric / implicit."""
    rng = random.Random(seed)
    novels = {}
    for n in range(n_novels):
        novel_id = f"synth{n:02d}"
        roster = synthetic_roster(novel_id)
        cast = list(roster)
        quotes = []
        for i in range(n_quotes):
            speaker, other = rng.sample(cast, 2)
            kind = (QuoteType.EXPLICIT, QuoteType.ANAPHORIC, QuoteType.IMPLICIT)[i % 3]
            if kind is QuoteType.EXPLICIT:
                distractor = rng.choice([e for e in cast if e is not speaker])
                left = rng.choice(DISTRACTORS).format(name=_mention(rng, distractor))
                right = f"said {_mention(rng, speaker)} to {_mention(rng, other)} . {rng.choice(FILLERS)}"
            elif kind is QuoteType.ANAPHORIC:
                pronoun = "she" if speaker.gender is Gender.FEMALE else "he"
                left = f"{_mention(rng, speaker)} turned to {_mention(rng, other)} ."
                right = f"{pronoun} said . {rng.choice(FILLERS)}"
            else:
                left = f"{_utterance(rng)} said {_mention(rng, other)} to {_mention(rng, speaker)} ."
                right = rng.choice(FILLERS)
            quotes.append(QuotationInstance(novel_id, f"q{i:05d}", _utterance(rng), left, right, kind,
                                            speaker.character_id, (other.character_id,)))
        novels[novel_id] = Novel(roster, tuple(quotes))
    return NovelCorpus(novels)


def vocabulary_texts(corpus: NovelCorpus, templates=()) -> list[str]:
    """Every text a word-level backend must be able to spell for `corpus`."""
    texts = []
    for novel_id, novel in corpus.novels.items():
        texts.append(novel_id)
        texts += [n for e in novel.roster for n in e.names]
        texts += [e.gender.value for e in novel.roster]
        for q in novel.quotations:
            texts += [q.text, q.left_context, q.right_context]
    for t in templates:
        texts += [t.source_infix, t.target_prefix, t.aux_source_infix, t.aux_target_prefix]
    texts.append("none")
    return texts
