"""Caption corpus ingestion, keyword extraction, and prompt templating.

Captions come from COCO-style annotation JSON or a two-column TSV. Keywords
(single-token nouns) are pulled out of each caption by a pluggable tagger and
rendered into the fine-tuning prompt template used for text-to-text training
records.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .errors import ConfigError

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

PROMPT_PREFIX = "Write an image description with keywords including"

_PUNCT = ",.!?;:\"'()[]{}"


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    text = text.lower()
    for ch in _PUNCT:
        text = text.replace(ch, "")
    return text.split()


@dataclass(frozen=True)
class Caption:
    """One caption sentence attached to an image."""

    image_id: str
    text: str
    split: str = "train"

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if not self.text.strip():
            raise ValueError("caption text must be non-empty after trim")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass(frozen=True)
class EntitySet:
    """Keywords of a caption: lowercase, deduplicated, in first-occurrence order."""

    entities: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.entities)) != len(self.entities):
            raise ValueError("entities must be deduplicated")
        for e in self.entities:
            if not e or e != e.lower() or " " in e:
                raise ValueError(f"entity must be a non-empty lowercase token: {e!r}")

    def __len__(self):
        return len(self.entities)

    def __iter__(self):
        return iter(self.entities)

    def __bool__(self):
        return bool(self.entities)


@dataclass(frozen=True)
class PromptedCaption:
    """A rendered fine-tuning record: templated prompt plus the original caption."""

    prompt: str
    target: str

    def __post_init__(self):
        if not self.prompt.startswith(PROMPT_PREFIX) or not self.prompt.endswith(":"):
            raise ValueError("prompt does not match the fine-tuning template")
        if not self.target:
            raise ValueError("target must be non-empty")


class EntityTagger(Protocol):
    """Part-of-speech tagger interface: one coarse tag per token."""

    def tag(self, tokens: Sequence[str]) -> list[str]:  # pragma: no cover - interface
        ...


# Closed word lists for the dependency-free fallback tagger. Deliberately small:
# nouns are the default open class, so these lists only need to cover the
# function words and frequent non-nouns seen in caption text.
_DETERMINERS = {
    "a", "an", "the", "this", "that", "these", "those", "some", "any",
    "no", "every", "each", "both", "all", "another", "other", "its",
    "his", "her", "their", "my", "your", "our",
}
_PRONOUNS = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "them",
    "us", "who", "whom", "whose", "which", "what", "someone", "something",
    "anything", "nothing", "everything", "anyone", "everyone",
}
_ADPOSITIONS = {
    "near", "with", "without", "on", "in", "at", "by", "of", "to", "from",
    "under", "over", "above", "below", "behind", "beside", "between",
    "through", "across", "around", "against", "during", "before", "after",
    "inside", "outside", "onto", "into", "upon", "within", "along", "past",
    "toward", "towards", "up", "down", "off", "out", "next",
}
_CONJUNCTIONS = {
    "and", "or", "but", "nor", "so", "yet", "while", "although", "because",
    "if", "when", "as", "than", "then",
}
_AUXILIARIES = {
    "is", "are", "was", "were", "be", "been", "being", "am", "has", "have",
    "had", "do", "does", "did", "will", "would", "shall", "should", "can",
    "could", "may", "might", "must", "not",
}
_NUMBER_WORDS = {
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "eleven", "twelve", "dozen", "couple",
}
_ADJECTIVES = {
    "white", "black", "red", "green", "blue", "yellow", "brown", "gray",
    "grey", "orange", "purple", "pink", "golden", "silver", "dark", "light",
    "bright", "colorful", "big", "small", "large", "little", "tall", "short",
    "long", "wide", "narrow", "tiny", "huge", "giant", "old", "young", "new",
    "beautiful", "cute", "happy", "sad", "dirty", "clean", "wet", "dry",
    "furry", "fluffy", "shiny", "wooden", "metal", "plastic", "empty",
    "full", "busy", "crowded", "quiet", "fresh", "delicious", "several",
    "many", "few",
}
# Verb lemmas that caption text rarely uses as nouns; inflected forms
# (-s/-es/-ed/-ing) are reduced before lookup.
_VERB_LEMMAS = {
    "chase", "say", "tell", "go", "come", "want", "try", "seem", "appear",
    "take", "give", "bring", "put", "carry", "throw", "catch", "pull",
    "push", "lean", "graze", "wave", "sleep", "swim", "climb", "stand",
    "sit", "hold", "wear", "eat", "fly", "hang", "lie", "grab", "reach",
    "stare", "gaze", "perch",
}


class RuleBasedTagger:
    """Dependency-free fallback tagger: closed stop-lists plus suffix heuristics.

    Nouns are the default class; everything the lists and suffix rules do not
    claim is tagged NOUN. Good enough to pull object keywords out of caption
    sentences, not a general-purpose tagger.
    """

    def tag(self, tokens: Sequence[str]) -> list[str]:
        return [self._tag_one(t) for t in tokens]

    @staticmethod
    def _tag_one(token: str) -> str:
        t = token.lower()
        if t in _DETERMINERS:
            return "DET"
        if t in _PRONOUNS:
            return "PRON"
        if t in _ADPOSITIONS:
            return "ADP"
        if t in _CONJUNCTIONS:
            return "CONJ"
        if t in _AUXILIARIES:
            return "AUX"
        if t in _ADJECTIVES:
            return "ADJ"
        if t in _NUMBER_WORDS or t.replace(".", "").replace(",", "").isdigit():
            return "NUM"
        if RuleBasedTagger._is_verb_form(t):
            return "VERB"
        if t.endswith("ly"):
            return "ADV"
        if t.endswith("ing") or (t.endswith("ed") and len(t) > 3):
            return "VERB"
        return "NOUN"

    @staticmethod
    def _is_verb_form(t: str) -> bool:
        if t in _VERB_LEMMAS:
            return True
        for suffix in ("s", "es", "ed", "ing"):
            if t.endswith(suffix) and t[: -len(suffix)] in _VERB_LEMMAS:
                return True
        return False


def _split_from_filename(path: Path) -> str:
    stem = path.name.lower()
    for split in ("val", "test", "train"):
        if split in stem:
            return split
    return "train"


def load_captions(path: str | Path, format: str, split: str | None = None) -> list[Caption]:
    """Load captions from a file.

    Args:
        path: annotation file.
        format: "coco_json" (top-level "annotations" array with "image_id" and
            "caption" fields) or "tsv" (image_id <TAB> caption per line).
        split: dataset split for every loaded caption; when None it is inferred
            from the file name ("val"/"test"/"train" substring, default train).

    Returns:
        One Caption per annotation record, in file order. Records whose caption
        is empty after whitespace trim are skipped (counted in a log warning).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"caption file not found: {path}")
    if format not in ("coco_json", "tsv"):
        raise ConfigError(f"unknown caption format: {format!r}")
    split = split or _split_from_filename(path)

    if format == "coco_json":
        rows = _parse_coco_json(path)
    else:
        rows = _parse_tsv(path)

    captions = []
    skipped = 0
    for index, (image_id, text) in enumerate(rows):
        text = text.strip()
        if not text:
            skipped += 1
            continue
        if not image_id:
            raise ConfigError(f"{path}: record {index} has an empty image_id")
        captions.append(Caption(image_id=image_id, text=text, split=split))
    if skipped:
        logger.warning("%s: skipped %d blank caption(s)", path, skipped)
    return captions


def _parse_coco_json(path: Path) -> list[tuple[str, str]]:
    raw = path.read_text(encoding="utf-8")
    if not raw.strip():
        return []
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: JSON parse failure at byte offset {e.pos}: {e.msg}") from e
    annotations = doc.get("annotations")
    if annotations is None:
        raise ConfigError(f"{path}: missing top-level 'annotations' array")
    rows = []
    for index, record in enumerate(annotations):
        if "image_id" not in record or "caption" not in record:
            raise ConfigError(f"{path}: annotation record {index} lacks image_id/caption")
        rows.append((str(record["image_id"]), str(record["caption"])))
    return rows


def _parse_tsv(path: Path) -> list[tuple[str, str]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}: line {lineno} is not image_id<TAB>caption")
            rows.append((parts[0], parts[1]))
    return rows


def extract_entities(caption: Caption, tagger: EntityTagger | None = None) -> EntitySet:
    """Extract keyword nouns from a caption.

    Returns nouns in first-occurrence order, lowercased and deduplicated.
    May be empty when the caption has no nouns under the tagger.
    """
    tagger = tagger or RuleBasedTagger()
    tokens = tokenize(caption.text)
    tags = tagger.tag(tokens)
    seen = set()
    entities = []
    for token, tag in zip(tokens, tags):
        if tag == "NOUN" and token not in seen:
            seen.add(token)
            entities.append(token)
    return EntitySet(tuple(entities))


def render_prompt(entities: EntitySet | Sequence[str]) -> str:
    """Render the keyword prompt template.

    Three or more keywords use an Oxford-comma list ("a, b, and c"), two use
    "a and b", one is rendered bare. Rendering is byte-deterministic.
    """
    items = list(entities)
    if not items:
        raise ValueError("no entities")
    if len(items) == 1:
        listing = items[0]
    elif len(items) == 2:
        listing = f"{items[0]} and {items[1]}"
    else:
        listing = ", ".join(items[:-1]) + f", and {items[-1]}"
    return f"{PROMPT_PREFIX} {listing}:"


def build_finetune_records(
    captions: Iterable[Caption], tagger: EntityTagger | None = None
) -> list[PromptedCaption]:
    """Build fine-tuning records from captions (callers pass the train split).

    Captions with no extractable keywords are excluded; targets are the
    caption text unmodified; input order is preserved.
    """
    tagger = tagger or RuleBasedTagger()
    records = []
    for caption in captions:
        entities = extract_entities(caption, tagger)
        if not entities:
            continue
        records.append(PromptedCaption(prompt=render_prompt(entities), target=caption.text))
    return records


def write_finetune_records(records: Iterable[PromptedCaption], path: str | Path) -> None:
    """Write records as newline-delimited JSON objects {prompt, target}."""
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({"prompt": r.prompt, "target": r.target}, sort_keys=True))
            f.write("\n")


def read_finetune_records(path: str | Path) -> list[PromptedCaption]:
    """Read records written by write_finetune_records."""
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(PromptedCaption(prompt=obj["prompt"], target=obj["target"]))
            except (json.JSONDecodeError, KeyError) as e:
                raise ConfigError(f"{path}: bad record at line {lineno}: {e}") from e
    return records
