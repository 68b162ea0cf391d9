"""Request/response transports shared by the predictor, attacker and auditor.

A transport is anything with ``send(request_bytes) -> response_bytes``. The
in-process flavor drives a responder directly while simulating network
latency on a shared manual clock, which is what makes timing experiments
deterministic. The HTTP flavor speaks the RFC 6960 POST convention.
"""

from __future__ import annotations

import http.client
import random
import urllib.parse
from datetime import timedelta
from typing import Protocol


class TransportError(Exception):
    pass


class Unreachable(TransportError):
    """The endpoint could not be contacted at all."""


class ConnectionClosed(TransportError):
    """The peer dropped the connection without sending a response."""


class Transport(Protocol):
    def send(self, request_bytes: bytes) -> bytes: ...


class InProcessTransport:
    """Direct calls into a responder with simulated one-way latencies.

    Each ``send`` advances the responder's clock by a random latency drawn
    from ``latency_range`` (microsecond resolution) before the request is
    handled and again before the response is returned, so arrival times have
    the sub-millisecond spread a real network would impose.
    """

    def __init__(
        self,
        responder,
        *,
        latency_range: tuple[timedelta, timedelta] = (
            timedelta(milliseconds=2),
            timedelta(milliseconds=20),
        ),
        rng: random.Random | None = None,
    ):
        self.responder = responder
        self._lo, self._hi = latency_range
        self._rng = rng if rng is not None else random.Random(0)

    def _one_way(self) -> timedelta:
        lo = int(self._lo.total_seconds() * 1e6)
        hi = int(self._hi.total_seconds() * 1e6)
        return timedelta(microseconds=self._rng.randint(lo, hi))

    def send(self, request_bytes: bytes) -> bytes:
        clock = self.responder.clock
        clock.advance(self._one_way())
        response = self.responder.handle_request(request_bytes)
        clock.advance(self._one_way())
        return response


class HttpTransport:
    """application/ocsp-request POST against a live endpoint."""

    def __init__(self, url: str, timeout: float = 10.0):
        parsed = urllib.parse.urlsplit(url)
        if parsed.scheme != "http":
            raise ValueError("only plain http:// endpoints are supported")
        self._host = parsed.hostname or "127.0.0.1"
        self._port = parsed.port or 80
        self._path = parsed.path or "/"
        self._timeout = timeout

    def send(self, request_bytes: bytes) -> bytes:
        conn = http.client.HTTPConnection(self._host, self._port, timeout=self._timeout)
        try:
            try:
                conn.request(
                    "POST",
                    self._path,
                    body=request_bytes,
                    headers={"Content-Type": "application/ocsp-request"},
                )
            except (ConnectionRefusedError, OSError) as exc:
                raise Unreachable(str(exc)) from exc
            try:
                response = conn.getresponse()
                body = response.read()
            except (http.client.BadStatusLine, http.client.RemoteDisconnected) as exc:
                raise ConnectionClosed(str(exc)) from exc
            except ConnectionResetError as exc:
                raise ConnectionClosed(str(exc)) from exc
            if response.status != 200:
                raise TransportError(f"HTTP {response.status}")
            return body
        finally:
            conn.close()
