"""Captioning metrics (corpus BLEU4, sentence-level ROUGE-L, CIDEr-D) and
accuracy delta tables.

Conventions are pinned for byte-level determinism: tokenization is lowercase,
punctuation-stripped, whitespace split; BLEU uses the closest-reference
brevity length with ties toward the shorter reference and no smoothing;
ROUGE-L is an LCS F-measure with beta = 1.2; CIDEr-D clips hypothesis counts,
applies a Gaussian length penalty with sigma = 6 and scales by 10.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import tokenize
from .errors import ConfigError

ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
CIDER_SCALE = 10.0
MAX_NGRAM = 4


@dataclass(frozen=True)
class CaptionPair:
    """One hypothesis and its reference captions, tokenized."""

    image_id: str
    hypothesis: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.references:
            raise ValueError("references must be non-empty")


def make_pair(image_id: str, hypothesis: str, references: Sequence[str]) -> CaptionPair:
    """Tokenize raw sentences into a CaptionPair."""
    return CaptionPair(
        image_id=image_id,
        hypothesis=tuple(tokenize(hypothesis)),
        references=tuple(tuple(tokenize(r)) for r in references),
    )


@dataclass(frozen=True)
class MetricReport:
    bleu4: float
    rouge_l: float
    cider_d: float
    n: int

    CSV_HEADER = "n,bleu4,rouge_l,cider_d"

    def __post_init__(self):
        if not (0 <= self.bleu4 <= 1 and 0 <= self.rouge_l <= 1 and 0 <= self.cider_d <= 10):
            raise ValueError("metric values out of range")

    def to_csv_row(self) -> str:
        return f"{self.n},{self.bleu4:.6f},{self.rouge_l:.6f},{self.cider_d:.6f}"

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "bleu4": self.bleu4, "rouge_l": self.rouge_l, "cider_d": self.cider_d},
            sort_keys=True,
        )


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(corpus: Sequence[CaptionPair]) -> float:
    """Corpus BLEU4.

    Geometric mean of modified 1..4-gram precisions times the brevity penalty
    exp(min(0, 1 - r/c)). No smoothing: any zero total precision zeroes the
    score. Per pair, the reference length r comes from the reference whose
    length is closest to the hypothesis, ties toward the shorter one.
    """
    if not corpus:
        raise ValueError("empty corpus")
    correct = [0] * MAX_NGRAM
    guess = [0] * MAX_NGRAM
    c = 0
    r = 0
    for pair in corpus:
        h = pair.hypothesis
        c += len(h)
        r += len(min(pair.references, key=lambda ref: (abs(len(ref) - len(h)), len(ref))))
        for n in range(1, MAX_NGRAM + 1):
            hyp_counts = _ngrams(h, n)
            max_ref = Counter()
            for ref in pair.references:
                for gram, count in _ngrams(ref, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            guess[n - 1] += max(0, len(h) - n + 1)
            correct[n - 1] += sum(min(count, max_ref[gram]) for gram, count in hyp_counts.items())
    if c == 0 or any(g == 0 or k == 0 for g, k in zip(guess, correct)):
        return 0.0
    log_precision = sum(math.log(k / g) for k, g in zip(correct, guess)) / MAX_NGRAM
    brevity = math.exp(min(0.0, 1.0 - r / c))
    return brevity * math.exp(log_precision)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(pair: CaptionPair) -> float:
    """Sentence-level ROUGE-L: LCS F-measure, max over the references.

    F = (1 + beta^2) P R / (R + beta^2 P) with P = LCS/len(hyp),
    R = LCS/len(ref); zero whenever the LCS is empty.
    """
    best = 0.0
    h = pair.hypothesis
    for ref in pair.references:
        lcs = _lcs_length(h, ref)
        if lcs == 0 or not h or not ref:
            continue
        p = lcs / len(h)
        r = lcs / len(ref)
        f = (1 + ROUGE_BETA**2) * p * r / (r + ROUGE_BETA**2 * p)
        best = max(best, f)
    return best


def corpus_rouge_l(corpus: Sequence[CaptionPair]) -> float:
    """Mean sentence-level ROUGE-L over the corpus."""
    if not corpus:
        raise ValueError("empty corpus")
    return sum(rouge_l(p) for p in corpus) / len(corpus)


def cider_d(corpus: Sequence[CaptionPair]) -> float:
    """CIDEr-D over a corpus of at least two images.

    TF-IDF n-gram vectors (n = 1..4) with document frequency counted over
    each image's reference set; similarity is the clipped cosine
    min(h_g, r_g) * r_g / (|h||r|), scaled by the Gaussian length penalty
    exp(-(len(hyp)-len(ref))^2 / (2 sigma^2)), averaged over references and
    n, times 10. The corpus score is the mean over images.
    """
    if len(corpus) < 2:
        raise ValueError("IDF undefined at corpus size 1")
    num_images = len(corpus)
    doc_freq: Counter = Counter()
    for pair in corpus:
        seen = set()
        for ref in pair.references:
            for n in range(1, MAX_NGRAM + 1):
                seen.update(_ngrams(ref, n))
        doc_freq.update(seen)
    log_images = math.log(num_images)

    def tfidf(tokens):
        vecs = []
        norms = []
        for n in range(1, MAX_NGRAM + 1):
            vec = {
                gram: count * (log_images - math.log(max(1.0, doc_freq[gram])))
                for gram, count in _ngrams(tokens, n).items()
            }
            vecs.append(vec)
            norms.append(math.sqrt(sum(w * w for w in vec.values())))
        return vecs, norms

    total = 0.0
    for pair in corpus:
        h_vecs, h_norms = tfidf(pair.hypothesis)
        pair_score = 0.0
        for ref in pair.references:
            r_vecs, r_norms = tfidf(ref)
            penalty = math.exp(
                -((len(pair.hypothesis) - len(ref)) ** 2) / (2 * CIDER_SIGMA**2)
            )
            for n in range(MAX_NGRAM):
                if h_norms[n] == 0 or r_norms[n] == 0:
                    continue
                dot = sum(
                    min(w, r_vecs[n].get(gram, 0.0)) * r_vecs[n].get(gram, 0.0)
                    for gram, w in h_vecs[n].items()
                )
                pair_score += penalty * dot / (h_norms[n] * r_norms[n]) / MAX_NGRAM
        total += CIDER_SCALE * pair_score / len(pair.references)
    return total / num_images


def score_corpus(corpus: Sequence[CaptionPair]) -> MetricReport:
    """All three metrics over one corpus."""
    return MetricReport(
        bleu4=bleu4(corpus),
        rouge_l=corpus_rouge_l(corpus),
        cider_d=cider_d(corpus),
        n=len(corpus),
    )


def read_caption_file(path: str | Path) -> dict[str, list[str]]:
    """Read newline-delimited {image_id, sentence} records, grouped by image."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"caption file not found: {path}")
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.setdefault(str(obj["image_id"]), []).append(str(obj["sentence"]))
            except (json.JSONDecodeError, KeyError) as e:
                raise ConfigError(f"{path}: bad record at line {lineno}: {e}") from e
    return out


def corpus_from_files(hyp_path: str | Path, ref_path: str | Path) -> list[CaptionPair]:
    """Pair hypothesis and reference files by image_id (one hypothesis each)."""
    hyps = read_caption_file(hyp_path)
    refs = read_caption_file(ref_path)
    missing = sorted(set(hyps) - set(refs))
    if missing:
        raise ConfigError(f"images with no references: {', '.join(missing)}")
    pairs = []
    for image_id in sorted(hyps):
        sentences = hyps[image_id]
        if len(sentences) != 1:
            raise ConfigError(f"image {image_id} has {len(sentences)} hypotheses, expected 1")
        pairs.append(make_pair(image_id, sentences[0], refs[image_id]))
    return pairs


def delta_percent(baseline: float, variant: float) -> str:
    """Signed percentage-point delta rendered to one decimal, e.g. "+1.3%"."""
    return f"{(variant - baseline) * 100:+.1f}%"


@dataclass(frozen=True)
class MeasuredResult:
    """A named score tied to a dataset and metric, for delta tables."""

    name: str
    dataset: str
    metric: str
    value: float


def delta_table(baseline: MeasuredResult, variants: Sequence[MeasuredResult]) -> list[dict]:
    """Rows of signed deltas (percentage points) of variants over the baseline."""
    rows = []
    for v in variants:
        if v.dataset != baseline.dataset or v.metric != baseline.metric:
            raise ConfigError(
                f"cannot compare {v.name!r} ({v.dataset}/{v.metric}) against "
                f"baseline ({baseline.dataset}/{baseline.metric})"
            )
        rows.append(
            {"name": v.name, "value": v.value, "delta": delta_percent(baseline.value, v.value)}
        )
    return rows
