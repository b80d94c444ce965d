"""Captioner backends: the HTTP wire client and a scriptable in-process mock.

Wire format (any chat-completion-style inference endpoint can adapt):

    request:  POST <endpoint>  {"prompt": str, "image_ref": str, "model_id": str}
    response: 200              {"caption": str}
"""

from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.request
from typing import Callable, Protocol

from .model import AnnotationError


class CaptionerError(AnnotationError):
    """The backend answered but the reply is unusable for this sample."""


class CaptionerUnreachableError(CaptionerError):
    """The backend could not be reached at the transport level."""


class CaptionerClient(Protocol):
    endpoint: str
    model_id: str
    timeout: float

    def generate(self, prompt: str, image_ref: str) -> str: ...


class HttpCaptionerClient:
    def __init__(self, endpoint: str, model_id: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.model_id = model_id
        self.timeout = timeout

    def generate(self, prompt: str, image_ref: str) -> str:
        payload = json.dumps(
            {"prompt": prompt, "image_ref": image_ref, "model_id": self.model_id}
        ).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise CaptionerUnreachableError(f"captioner endpoint unreachable: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CaptionerError(f"captioner returned non-JSON body: {exc}") from exc
        caption = body.get("caption")
        if not caption:
            raise CaptionerError(f"captioner returned no caption: {body!r}")
        return caption


class MockCaptionerClient:
    """Deterministic captioner for tests and dry runs.

    ``fail_times`` maps an image_ref to how many calls for it should fail
    before succeeding; use a large count for a permanent failure. ``latency``
    sleeps per call to emulate inference time.
    """

    def __init__(
        self,
        model_id: str = "mock-captioner",
        latency: float = 0.0,
        fail_times: dict[str, int] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = "mock:"
        self.model_id = model_id
        self.timeout = 0.0
        self.latency = latency
        self.fail_times = dict(fail_times or {})
        self.calls: dict[str, int] = {}
        self._sleep = sleep
        self._lock = threading.Lock()

    def generate(self, prompt: str, image_ref: str) -> str:
        with self._lock:
            self.calls[image_ref] = self.calls.get(image_ref, 0) + 1
            n_call = self.calls[image_ref]
        if self.latency:
            self._sleep(self.latency)
        if n_call <= self.fail_times.get(image_ref, 0):
            raise CaptionerError(f"scripted failure {n_call} for {image_ref}")
        return f"A detailed synthetic caption of {image_ref}."
