"""Text-to-text generation: label -> caption-like description.

The generation and fine-tuning contracts are backend-agnostic; backends are
either the in-process deterministic stub or an out-of-process model spoken to
over the wire protocol (see genaug.wire). Decoding internals such as beam
search live inside the backend; this module only transports the settings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

from .corpus import PROMPT_PREFIX, PromptedCaption, render_prompt
from .errors import BackendError

DEFAULT_FINETUNE_EPOCHS = 5

STUB_T2T_ID = "t2t-stub-v1"
STUB_VARIANT_COUNT = 8


@dataclass(frozen=True)
class LabelSpec:
    """A class label: numeric id plus its label text."""

    class_id: int
    label_text: str

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be >= 0")
        if not self.label_text:
            raise ValueError("label_text must be non-empty")


@dataclass(frozen=True)
class DecodeConfig:
    """Decoding settings passed through to the backend."""

    max_length: int = 20
    beam_size: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")


@dataclass(frozen=True)
class Description:
    """A generated description sentence with its provenance."""

    text: str
    source_label: LabelSpec
    backend_id: str
    decode_config: DecodeConfig

    def __post_init__(self):
        if not self.text:
            raise ValueError("description text must be non-empty")
        if len(self.text.split()) > self.decode_config.max_length:
            raise ValueError("description exceeds max_length tokens")


@dataclass(frozen=True)
class TrainingSummary:
    """Result of one fine-tuning call."""

    backend_id: str
    records_seen: int
    epochs: int
    epoch_nll: tuple[float, ...]

    @property
    def final_nll(self) -> float:
        return self.epoch_nll[-1]


class T2TBackend(Protocol):
    """Text-to-text backend contract.

    generate must be deterministic given the backend state, prompt and config:
    the same inputs after the same fine-tune history yield identical text.
    max_parallelism declares how many generate calls may run concurrently
    (None = unlimited); batch helpers may fan out up to it but must reassemble
    results in input order.
    """

    backend_id: str
    max_parallelism: int | None

    def generate(self, prompt: str, config: DecodeConfig) -> str:  # pragma: no cover
        ...

    def finetune(self, records: Sequence[PromptedCaption], epochs: int) -> TrainingSummary:  # pragma: no cover
        ...


class StubT2TBackend:
    """Deterministic template backend so the whole pipeline runs hermetically.

    Output is "a photo of a {keywords} in a realistic scene, variant {v}" with
    v = seed mod STUB_VARIANT_COUNT; keywords are parsed back out of the prompt
    template. Fine-tuning records a synthetic, strictly decreasing NLL.
    """

    backend_id = STUB_T2T_ID
    max_parallelism = None  # pure function, safe to call from anywhere

    def __init__(self):
        self._epochs_done = 0

    def generate(self, prompt: str, config: DecodeConfig) -> str:
        keywords = _parse_prompt_keywords(prompt)
        variant = config.seed % STUB_VARIANT_COUNT
        text = f"a photo of a {' and '.join(keywords)} in a realistic scene, variant {variant}"
        return _truncate_tokens(text, config.max_length)

    def finetune(self, records: Sequence[PromptedCaption], epochs: int) -> TrainingSummary:
        nll = []
        for _ in range(epochs):
            self._epochs_done += 1
            nll.append(6.0 * 0.8 ** self._epochs_done)
        return TrainingSummary(
            backend_id=self.backend_id,
            records_seen=len(records) * epochs,
            epochs=epochs,
            epoch_nll=tuple(nll),
        )


def _parse_prompt_keywords(prompt: str) -> list[str]:
    """Invert render_prompt: recover the keyword list from a prompt string."""
    body = prompt
    if body.startswith(PROMPT_PREFIX):
        body = body[len(PROMPT_PREFIX):]
    body = body.strip().rstrip(":")
    if not body:
        return ["thing"]
    if ", " in body:
        parts = [p[4:] if p.startswith("and ") else p for p in body.split(", ")]
    elif " and " in body:
        parts = body.split(" and ")
    else:
        parts = [body]
    return [p for p in (part.strip() for part in parts) if p]


def _truncate_tokens(text: str, max_tokens: int) -> str:
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


def finetune(
    backend: T2TBackend, records: Sequence[PromptedCaption], epochs: int = DEFAULT_FINETUNE_EPOCHS
) -> TrainingSummary:
    """Fine-tune a backend on prompted caption records.

    Raises ValueError on empty records or epochs < 1; transport failures
    surface as BackendError from the backend itself.
    """
    if not records:
        raise ValueError("no fine-tuning records")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    summary = backend.finetune(records, epochs)
    expected = len(records) * epochs
    if summary.records_seen != expected:
        raise BackendError(
            f"backend reported {summary.records_seen} records seen, expected {expected}"
        )
    return summary


def gen_description(backend: T2TBackend, label: LabelSpec, config: DecodeConfig) -> Description:
    """Generate a description sentence for a label.

    The prompt is the keyword template rendered with the label text as its
    single keyword. The output is bounded to config.max_length whitespace
    tokens regardless of backend behaviour.
    """
    prompt = render_prompt([label.label_text])
    text = backend.generate(prompt, config)
    if not text or not text.strip():
        raise BackendError(f"empty generation for label {label.label_text!r}")
    text = _truncate_tokens(text.strip(), config.max_length)
    return Description(
        text=text, source_label=label, backend_id=backend.backend_id, decode_config=config
    )


def gen_description_batch(
    backend: T2TBackend,
    labels: Sequence[LabelSpec],
    config: DecodeConfig,
    variants_per_label: int = 1,
) -> list[Description]:
    """Generate variants_per_label descriptions per label.

    Variant v uses config.seed + v; output order is label-major,
    variant-minor. Errors are re-raised with the offending label attached.
    """
    if variants_per_label < 1:
        raise ValueError("variants_per_label must be >= 1")
    out = []
    for label in labels:
        for v in range(variants_per_label):
            vconfig = DecodeConfig(
                max_length=config.max_length, beam_size=config.beam_size, seed=config.seed + v
            )
            try:
                out.append(gen_description(backend, label, vconfig))
            except BackendError as e:
                raise BackendError(
                    f"generation failed for label {label.label_text!r} (variant {v}): {e}"
                ) from e
    return out
