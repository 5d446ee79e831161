"""Wire protocol for out-of-process generation backends.

Newline-delimited JSON over a child process's stdio. One request per line,
one response per line.

Text-to-text:
    {"prompt": ..., "max_length": ..., "beam_size": ..., "seed": ...}
        -> {"text": ...}
    {"finetune": true, "epochs": E, "count": N} then N record lines
    {"prompt": ..., "target": ...}
        -> {"records_seen": ..., "epochs": ..., "epoch_nll": [...]}

Text-to-image (pixels are base64 raw uint8, C order, with dims alongside):
    {"stage": "base", "prompt": ..., "seed": ..., "dims": [64, 64]}
        -> {"dims": [64, 64, 3], "pixels_b64": ...}
    {"stage": "upsample", "prompt": ..., "seed": ..., "dims": [256, 256],
     "image": {"dims": [64, 64, 3], "pixels_b64": ...}}
        -> {"dims": [256, 256, 3], "pixels_b64": ...}

Errors come back as {"error": ...}. Run the reference stub servers with
``python -m genaug.wire t2t-stub`` or ``python -m genaug.wire t2i-stub``.
"""

from __future__ import annotations

import base64
import json
import subprocess
import sys
from typing import Sequence

import numpy as np

from .corpus import PromptedCaption
from .errors import BackendError
from .textgen import DecodeConfig, StubT2TBackend, TrainingSummary
from .imagegen import BASE_SIZE, UPSAMPLE_SIZE, StubT2IBackend


def encode_pixels(pixels: np.ndarray) -> dict:
    return {
        "dims": list(pixels.shape),
        "pixels_b64": base64.b64encode(np.ascontiguousarray(pixels).tobytes()).decode("ascii"),
    }


def decode_pixels(obj: dict) -> np.ndarray:
    dims = tuple(obj["dims"])
    raw = base64.b64decode(obj["pixels_b64"])
    return np.frombuffer(raw, dtype=np.uint8).reshape(dims).copy()


class _SubprocessClient:
    """Shared lifecycle for line-oriented JSON subprocess backends."""

    max_parallelism = 1  # one request in flight per pipe

    def __init__(self, command: Sequence[str], backend_id: str):
        self.command = list(command)
        self.backend_id = backend_id
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as e:
                raise BackendError(
                    f"could not start backend {self.command!r}: {e}; "
                    "check the command and retry"
                ) from e
        return self._proc

    def _roundtrip(self, *requests: dict) -> dict:
        proc = self._ensure()
        try:
            for request in requests:
                proc.stdin.write(json.dumps(request) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as e:
            raise BackendError(f"backend transport failure: {e}; retry the request") from e
        if not line:
            raise BackendError("backend closed its stream; restart and retry")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as e:
            raise BackendError(f"malformed backend response: {e.msg}") from e
        if "error" in response:
            raise BackendError(f"backend error: {response['error']}")
        return response

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SubprocessT2TBackend(_SubprocessClient):
    """T2TBackend implementation speaking the wire protocol to a child process."""

    def generate(self, prompt: str, config: DecodeConfig) -> str:
        response = self._roundtrip(
            {
                "prompt": prompt,
                "max_length": config.max_length,
                "beam_size": config.beam_size,
                "seed": config.seed,
            }
        )
        if "text" not in response:
            raise BackendError("backend response lacks 'text'")
        return str(response["text"])

    def finetune(self, records: Sequence[PromptedCaption], epochs: int) -> TrainingSummary:
        header = {"finetune": True, "epochs": epochs, "count": len(records)}
        lines = [{"prompt": r.prompt, "target": r.target} for r in records]
        response = self._roundtrip(header, *lines)
        return TrainingSummary(
            backend_id=self.backend_id,
            records_seen=int(response["records_seen"]),
            epochs=int(response["epochs"]),
            epoch_nll=tuple(float(x) for x in response["epoch_nll"]),
        )


class SubprocessT2IBackend(_SubprocessClient):
    """T2IBackend implementation speaking the wire protocol to a child process."""

    def generate_base(self, prompt: str, seed: int) -> np.ndarray:
        response = self._roundtrip(
            {"stage": "base", "prompt": prompt, "seed": seed, "dims": [BASE_SIZE, BASE_SIZE]}
        )
        return decode_pixels(response)

    def upsample(self, image: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        request = {
            "stage": "upsample",
            "prompt": prompt,
            "seed": seed,
            "dims": [UPSAMPLE_SIZE, UPSAMPLE_SIZE],
            "image": encode_pixels(image),
        }
        response = self._roundtrip(request)
        return decode_pixels(response)

    def finetune(self, dataset) -> None:
        self._roundtrip({"finetune": True})


def serve_t2t(backend, in_stream=None, out_stream=None) -> None:
    """Serve a T2T backend over stdio until EOF."""
    in_stream = in_stream or sys.stdin
    out_stream = out_stream or sys.stdout
    for line in in_stream:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            if request.get("finetune"):
                count = int(request["count"])
                records = []
                for _ in range(count):
                    record = json.loads(in_stream.readline())
                    records.append(
                        PromptedCaption(prompt=record["prompt"], target=record["target"])
                    )
                summary = backend.finetune(records, int(request["epochs"]))
                response = {
                    "records_seen": summary.records_seen,
                    "epochs": summary.epochs,
                    "epoch_nll": list(summary.epoch_nll),
                }
            else:
                config = DecodeConfig(
                    max_length=int(request["max_length"]),
                    beam_size=int(request["beam_size"]),
                    seed=int(request["seed"]),
                )
                response = {"text": backend.generate(request["prompt"], config)}
        except Exception as e:  # report and keep serving
            response = {"error": str(e)}
        out_stream.write(json.dumps(response) + "\n")
        out_stream.flush()


def serve_t2i(backend, in_stream=None, out_stream=None) -> None:
    """Serve a T2I backend over stdio until EOF."""
    in_stream = in_stream or sys.stdin
    out_stream = out_stream or sys.stdout
    for line in in_stream:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            if request.get("finetune"):
                backend.finetune(None)
                response = {"ok": True}
            elif request["stage"] == "base":
                pixels = backend.generate_base(request["prompt"], int(request["seed"]))
                response = encode_pixels(pixels)
            elif request["stage"] == "upsample":
                image = decode_pixels(request["image"])
                pixels = backend.upsample(image, request["prompt"], int(request["seed"]))
                response = encode_pixels(pixels)
            else:
                response = {"error": f"unknown stage {request.get('stage')!r}"}
        except Exception as e:
            response = {"error": str(e)}
        out_stream.write(json.dumps(response) + "\n")
        out_stream.flush()


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv == ["t2t-stub"]:
        serve_t2t(StubT2TBackend())
        return 0
    if argv == ["t2i-stub"]:
        serve_t2i(StubT2IBackend())
        return 0
    sys.stderr.write("usage: python -m genaug.wire {t2t-stub|t2i-stub}\n")
    return 2


if __name__ == "__main__":
    sys.exit(main())
