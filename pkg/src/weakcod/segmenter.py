"""Promptable segmenter clients.

Every client takes an RGB image plus a :class:`PromptSet` and returns one to
three candidate masks with confidences. The wire format, used both over a
subprocess's stdin/stdout (one JSON object per line) and as an HTTP POST
body, is::

    request:  {"width": W, "height": H, "image_png": <base64 PNG>,
               "prompt": {"positive_points": [[x, y], ...],
                          "negative_points": [...], "box": [x0, y0, x1, y1] | null}}
    response: {"candidates": [{"mask_png": <base64 8-bit PNG>, "confidence": c}, ...]}
              or {"error": "message"}

Run ``python -m weakcod.segmenter`` to serve the builtin stub over stdio.
"""
from __future__ import annotations

import base64
import io
import json
import shlex
import subprocess
import sys
import threading
import urllib.error
import urllib.request
import zlib
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from PIL import Image

from .candidate_select import MaskCandidate
from .core import RgbImage, WeakCodError
from .prompt_adapter import PromptSet


class SegmenterUnavailable(WeakCodError, RuntimeError):
    pass


class MalformedResponse(WeakCodError, ValueError):
    pass


@dataclass(frozen=True)
class SegmenterRequest:
    image: RgbImage
    prompt: PromptSet

    @property
    def dims(self) -> tuple[int, int]:
        h, w = self.image.shape[:2]
        return w, h


class Segmenter(Protocol):
    def segment(self, request: SegmenterRequest) -> list[MaskCandidate]: ...


def _png_b64(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _from_png_b64(data: str) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(base64.b64decode(data))))


def encode_request(request: SegmenterRequest) -> dict:
    w, h = request.dims
    return {
        "width": w,
        "height": h,
        "image_png": _png_b64(np.asarray(request.image, dtype=np.uint8)),
        "prompt": request.prompt.to_dict(),
    }


def decode_request(data: dict) -> SegmenterRequest:
    image = _from_png_b64(data["image_png"])
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    return SegmenterRequest(image[..., :3].astype(np.uint8), PromptSet.from_dict(data["prompt"]))


def encode_response(candidates: list[MaskCandidate]) -> dict:
    return {
        "candidates": [
            {
                "mask_png": _png_b64(np.clip(np.rint(c.mask * 255), 0, 255).astype(np.uint8)),
                "confidence": float(c.confidence),
            }
            for c in candidates
        ]
    }


def decode_response(data: object, dims: tuple[int, int]) -> list[MaskCandidate]:
    """Validate a response object against the request's ``(W, H)``."""
    if not isinstance(data, dict):
        raise MalformedResponse("response is not a JSON object")
    if "error" in data:
        raise SegmenterUnavailable(f"segmenter reported: {data['error']}")
    items = data.get("candidates")
    if not isinstance(items, list) or not 1 <= len(items) <= 3:
        raise MalformedResponse("response must carry 1-3 candidates")
    w, h = dims
    out = []
    for item in items:
        try:
            mask = _from_png_b64(item["mask_png"])
            conf = float(item["confidence"])
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise MalformedResponse(f"bad candidate entry: {exc}") from exc
        if mask.shape != (h, w):
            raise MalformedResponse(f"candidate mask {mask.shape} does not match image {(h, w)}")
        if conf < 0:
            raise MalformedResponse("negative confidence")
        out.append(MaskCandidate(mask.astype(np.float64) / 255.0, conf))
    return out


class StubSegmenter:
    """Deterministic stand-in for a real segmenter.

    Candidate 1 is the union of discs (radius 8% of the shorter side) around
    the positive points and the filled box. Candidate 2 grows both by half:
    disc radius times 1.5 and box sides times 1.5 about the centre. Candidate
    3 is the whole image, a deliberately extreme response. With ``noise > 0``
    the masks become soft maps perturbed by a generator seeded from ``seed``
    and the request content.
    """

    confidences = (0.9, 0.7, 0.95)

    def __init__(self, seed: int = 0, noise: float = 0.0):
        self.seed = seed
        self.noise = noise

    def _region(self, w: int, h: int, prompt: PromptSet, grow: float) -> np.ndarray:
        yy, xx = np.mgrid[0:h, 0:w]
        out = np.zeros((h, w), dtype=bool)
        r = 0.08 * min(w, h) * grow
        for x, y in prompt.positive_points:
            out |= (xx - x) ** 2 + (yy - y) ** 2 <= r * r
        if prompt.box is not None:
            x0, y0, x1, y1 = prompt.box
            if grow != 1.0:
                cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
                hw, hh = (x1 - x0) * grow / 2, (y1 - y0) * grow / 2
                x0, x1 = max(0, round(cx - hw)), min(w, round(cx + hw))
                y0, y1 = max(0, round(cy - hh)), min(h, round(cy + hh))
            out[y0:y1, x0:x1] = True
        return out

    def segment(self, request: SegmenterRequest) -> list[MaskCandidate]:
        w, h = request.dims
        masks = [
            self._region(w, h, request.prompt, 1.0).astype(np.float64),
            self._region(w, h, request.prompt, 1.5).astype(np.float64),
            np.ones((h, w)),
        ]
        if self.noise > 0:
            key = json.dumps([w, h, request.prompt.to_dict()], sort_keys=True).encode()
            rng = np.random.default_rng([self.seed, zlib.crc32(key)])
            masks = [np.clip(m + self.noise * (rng.random(m.shape) - 0.5), 0.0, 1.0) for m in masks]
        return [MaskCandidate(m, c) for m, c in zip(masks, self.confidences)]


class SubprocessSegmenter:
    """Talk JSON lines to a long-running worker process."""

    def __init__(self, command: list[str]):
        self.command = command
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

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
            except OSError as exc:
                raise SegmenterUnavailable(f"cannot start {self.command!r}: {exc}") from exc
        return self._proc

    def segment(self, request: SegmenterRequest) -> list[MaskCandidate]:
        with self._lock:
            proc = self._ensure()
            try:
                proc.stdin.write(json.dumps(encode_request(request)) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise SegmenterUnavailable(f"worker pipe failed: {exc}") from exc
        if not line:
            raise SegmenterUnavailable("worker closed its output")
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"worker sent invalid JSON: {exc}") from exc
        return decode_response(data, request.dims)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None

    def __enter__(self) -> SubprocessSegmenter:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class HttpSegmenter:
    """POST the request JSON to an endpoint and read the response JSON."""

    def __init__(self, url: str, timeout: float = 120.0):
        self.url = url
        self.timeout = timeout

    def segment(self, request: SegmenterRequest) -> list[MaskCandidate]:
        body = json.dumps(encode_request(request)).encode()
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = resp.read()
        except (urllib.error.URLError, OSError) as exc:
            raise SegmenterUnavailable(f"{self.url}: {exc}") from exc
        try:
            data = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"endpoint sent invalid JSON: {exc}") from exc
        return decode_response(data, request.dims)


def query_segmenter(client: Segmenter, request: SegmenterRequest) -> list[MaskCandidate]:
    """Call ``client`` and check the 1-3 candidate contract."""
    candidates = client.segment(request)
    w, h = request.dims
    if not 1 <= len(candidates) <= 3:
        raise MalformedResponse(f"expected 1-3 candidates, got {len(candidates)}")
    for c in candidates:
        if c.mask.shape != (h, w):
            raise MalformedResponse(f"candidate mask {c.mask.shape} does not match image {(h, w)}")
    return candidates


def handle_message(segmenter: Segmenter, line: str) -> dict:
    try:
        request = decode_request(json.loads(line))
        return encode_response(segmenter.segment(request))
    except Exception as exc:  # reported over the wire, worker keeps serving
        return {"error": f"{type(exc).__name__}: {exc}"}


def serve_stdio(segmenter: Segmenter | None = None, stdin=None, stdout=None) -> None:
    segmenter = segmenter or StubSegmenter()
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(handle_message(segmenter, line)) + "\n")
        stdout.flush()


def make_segmenter(spec: str, seed: int = 0) -> Segmenter:
    """``stub``, ``http://...`` / ``https://...``, or ``cmd:<shell-split command>``."""
    if spec == "stub":
        return StubSegmenter(seed=seed)
    if spec.startswith(("http://", "https://")):
        return HttpSegmenter(spec)
    if spec.startswith("cmd:"):
        return SubprocessSegmenter(shlex.split(spec[4:]))
    raise ValueError(f"unknown segmenter {spec!r} (use stub, cmd:..., or http(s)://...)")


if __name__ == "__main__":
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    serve_stdio(StubSegmenter(seed=seed))
