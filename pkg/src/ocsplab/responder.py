"""Configurable mock OCSP responder, in-process and over HTTP.

The responder is the laboratory's attack target and its countermeasure
testbed. Every behavior the attack depends on (time granularity, clock
bias, nonce handling, treatment of never-issued serials, caching) and every
studied countermeasure (random time biases, millisecond granularity,
responder-side nonces, randomized times for unknown serials, rate limiting)
is a configuration knob.
"""

from __future__ import annotations

import hashlib
import logging
import random
import secrets
import threading
from collections import deque
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from enum import Enum
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .clock import Clock
from .der import DerError, GeneralizedTimeValue, TimeGranularity
from .messages import (
    OID_OCSP_NONCE,
    AlgorithmIdentifier,
    BasicOcspResponse,
    CertStatus,
    OcspResponseStatus,
    SingleResponse,
    TbsResponseData,
    decode_ocsp_request,
    encode_ocsp_response,
    encode_tbs_response_data,
    nonce_extension,
    responder_id_for,
)
from .pki import HashSpec, SignerIdentity, digest, sign
from .transport import ConnectionClosed

log = logging.getLogger(__name__)

DEFAULT_REALTIME_WINDOW = timedelta(hours=1)
DEFAULT_LIGHTWEIGHT_WINDOW = timedelta(days=7)
RANDOMIZED_TIME_SPAN = timedelta(hours=1)
RESPONDER_NONCE_LENGTH = 16


class Mode(str, Enum):
    REALTIME = "realtime"
    LIGHTWEIGHT = "lightweight"


class NoncePolicy(str, Enum):
    MIRROR = "mirror"
    IGNORE = "ignore"
    RESPONDER_SIDE = "responder_side"


class NonexistentPolicy(str, Enum):
    UNKNOWN = "unknown"
    GOOD = "good"
    CLOSE_CONNECTION = "close_connection"
    UNAUTHORIZED = "unauthorized"
    RANDOMIZED_TIMES = "randomized_times"


class DuplicateSerial(ValueError):
    pass


class _Unauthorized(Exception):
    pass


@dataclass(frozen=True)
class RateLimit:
    """Cap on identical requests inside a sliding window."""

    max_requests: int
    window: timedelta


@dataclass
class ResponderConfig:
    signer: SignerIdentity
    mode: Mode = Mode.REALTIME
    granularity: TimeGranularity = TimeGranularity.SECOND
    random_bias_max: timedelta = timedelta(0)
    validity_window: timedelta | None = None
    lightweight_cache_period: timedelta = timedelta(days=7)
    nonce_policy: NoncePolicy = NoncePolicy.MIRROR
    nonexistent_serial_policy: NonexistentPolicy = NonexistentPolicy.UNKNOWN
    hash_spec: HashSpec | None = None
    clock_bias: timedelta = timedelta(0)
    rate_limit: RateLimit | None = None
    # None selects a cryptographically strong RNG (live mode); an integer
    # seeds a reproducible PRNG for tests and demos.
    rng_seed: int | None = None
    include_signer_certificate: bool = True

    @property
    def resolved_window(self) -> timedelta:
        if self.validity_window is not None:
            return self.validity_window
        if self.mode is Mode.LIGHTWEIGHT:
            return DEFAULT_LIGHTWEIGHT_WINDOW
        return DEFAULT_REALTIME_WINDOW

    @property
    def resolved_hash_spec(self) -> HashSpec:
        return self.hash_spec if self.hash_spec is not None else self.signer.hash_spec

    def with_overrides(self, **kwargs) -> "ResponderConfig":
        return replace(self, **kwargs)


class StatusDatabase:
    """serial -> certificate status, with registrations serialized by a lock."""

    def __init__(self):
        self._entries: dict[int, CertStatus] = {}
        self._lock = threading.Lock()

    def register(self, serial: int, status: CertStatus) -> None:
        with self._lock:
            if serial in self._entries:
                raise DuplicateSerial(f"serial {serial} already registered")
            self._entries[serial] = status

    def lookup(self, serial: int) -> CertStatus | None:
        with self._lock:
            return self._entries.get(serial)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    @classmethod
    def with_serial_range(
        cls, count: int, revoked: dict[int, GeneralizedTimeValue] | None = None
    ) -> "StatusDatabase":
        db = cls()
        revoked = revoked or {}
        for serial in range(count):
            if serial in revoked:
                db.register(serial, CertStatus.revoked(revoked[serial]))
            else:
                db.register(serial, CertStatus.good())
        return db


@dataclass(frozen=True)
class TimeFields:
    produced_at: GeneralizedTimeValue
    this_update: GeneralizedTimeValue
    next_update: GeneralizedTimeValue


def _truncate(instant: datetime, granularity: TimeGranularity) -> datetime:
    if granularity is TimeGranularity.SECOND:
        return instant.replace(microsecond=0)
    return instant.replace(microsecond=instant.microsecond // 1000 * 1000)


def _uniform_ms(rng: random.Random, span: timedelta) -> timedelta:
    ms = int(span.total_seconds() * 1000)
    if ms <= 0:
        return timedelta(0)
    return timedelta(milliseconds=rng.randint(0, ms))


@dataclass
class LightweightCache:
    fields: TimeFields | None = None


def compute_time_fields(
    config: ResponderConfig,
    now: datetime,
    *,
    rng: random.Random | None = None,
    cache: LightweightCache | None = None,
) -> TimeFields:
    """The producedAt/thisUpdate/nextUpdate triple for a request at ``now``.

    Realtime mode derives all three from the biased, granularity-truncated
    clock, then shifts each by an independent fresh bias when
    ``random_bias_max`` is set (producedAt/thisUpdate backwards, nextUpdate
    forwards; producedAt is clamped so thisUpdate <= producedAt survives the
    independent draws). Lightweight mode freezes the triple until its
    producedAt is older than the cache period.
    """
    base = _truncate(now + config.clock_bias, config.granularity)
    window = config.resolved_window
    if config.mode is Mode.LIGHTWEIGHT:
        if cache is None:
            raise ValueError("lightweight mode needs a cache")
        if (
            cache.fields is None
            or (now + config.clock_bias) - cache.fields.produced_at.instant
            > config.lightweight_cache_period
        ):
            stamp = GeneralizedTimeValue(base, config.granularity)
            cache.fields = TimeFields(
                produced_at=stamp,
                this_update=stamp,
                next_update=GeneralizedTimeValue(base + window, config.granularity),
            )
        return cache.fields

    this_update = base
    produced_at = base
    next_update = base + window
    if config.random_bias_max > timedelta(0):
        if rng is None:
            raise ValueError("random bias needs an RNG")
        this_update = base - _uniform_ms(rng, config.random_bias_max)
        produced_at = base - _uniform_ms(rng, config.random_bias_max)
        next_update = next_update + _uniform_ms(rng, config.random_bias_max)
        produced_at = max(produced_at, this_update)
    return TimeFields(
        produced_at=GeneralizedTimeValue(produced_at, config.granularity),
        this_update=GeneralizedTimeValue(this_update, config.granularity),
        next_update=GeneralizedTimeValue(next_update, config.granularity),
    )


@dataclass(frozen=True)
class LogRecord:
    arrival: datetime
    request_bytes: bytes


class Responder:
    """Serves OCSP requests per its configuration and logs everything it sees."""

    def __init__(self, config: ResponderConfig, db: StatusDatabase, clock: Clock):
        if config.mode is Mode.LIGHTWEIGHT and config.random_bias_max > timedelta(0):
            raise ValueError("cached lightweight responses cannot carry random biases")
        self.config = config
        self.db = db
        self.clock = clock
        self.responder_id = responder_id_for(config.signer)
        self._rng: random.Random = (
            random.Random(config.rng_seed)
            if config.rng_seed is not None
            else secrets.SystemRandom()
        )
        self._log: list[LogRecord] = []
        self._log_lock = threading.Lock()
        self._cache = LightweightCache()
        self._cache_lock = threading.Lock()
        self._rate: dict[bytes, deque[datetime]] = {}
        self._rate_lock = threading.Lock()

    @property
    def request_log(self) -> tuple[LogRecord, ...]:
        with self._log_lock:
            return tuple(self._log)

    def _throttled(self, request_bytes: bytes, now: datetime) -> bool:
        limit = self.config.rate_limit
        if limit is None:
            return False
        key = hashlib.sha256(request_bytes).digest()
        with self._rate_lock:
            seen = self._rate.setdefault(key, deque())
            while seen and now - seen[0] > limit.window:
                seen.popleft()
            if len(seen) >= limit.max_requests:
                return True
            seen.append(now)
            return False

    def _status_for(self, serial: int) -> CertStatus | None:
        """Status from the database, or per-policy for never-issued serials.

        Returns None when the policy is to randomize time fields (the caller
        builds those) -- the status reported alongside is 'unknown'.
        """
        found = self.db.lookup(serial)
        if found is not None:
            return found
        policy = self.config.nonexistent_serial_policy
        if policy is NonexistentPolicy.UNKNOWN:
            return CertStatus.unknown()
        if policy is NonexistentPolicy.GOOD:
            return CertStatus.good()
        if policy is NonexistentPolicy.CLOSE_CONNECTION:
            raise ConnectionClosed("policy: drop requests for unknown serials")
        if policy is NonexistentPolicy.UNAUTHORIZED:
            raise _Unauthorized()
        return None  # RANDOMIZED_TIMES

    def _randomized_fields(self, now: datetime) -> TimeFields:
        base = _truncate(now + self.config.clock_bias, self.config.granularity)
        shifts = sorted(
            (_uniform_ms(self._rng, RANDOMIZED_TIME_SPAN) for _ in range(2)), reverse=True
        )
        gran = self.config.granularity
        return TimeFields(
            produced_at=GeneralizedTimeValue(base - shifts[1], gran),
            this_update=GeneralizedTimeValue(base - shifts[0], gran),
            next_update=GeneralizedTimeValue(
                base + self.config.resolved_window + _uniform_ms(self._rng, RANDOMIZED_TIME_SPAN),
                gran,
            ),
        )

    def handle_request(self, request_bytes: bytes) -> bytes:
        """Decode, resolve, build, sign and frame. Raises ConnectionClosed
        when the non-existent-serial policy says to drop the connection."""
        now = self.clock.now()
        with self._log_lock:
            self._log.append(LogRecord(arrival=now, request_bytes=bytes(request_bytes)))
        if self._throttled(request_bytes, now):
            return encode_ocsp_response(OcspResponseStatus.TRY_LATER)
        try:
            request = decode_ocsp_request(request_bytes)
        except DerError:
            return encode_ocsp_response(OcspResponseStatus.MALFORMED_REQUEST)

        with self._cache_lock:
            fields = compute_time_fields(
                self.config, now, rng=self._rng, cache=self._cache
            )
        singles: list[SingleResponse] = []
        produced_at = fields.produced_at
        try:
            for cert_id in request.cert_ids:
                status = self._status_for(cert_id.serial_number)
                entry_fields = fields
                if status is None:
                    status = CertStatus.unknown()
                    entry_fields = self._randomized_fields(now)
                    produced_at = entry_fields.produced_at
                singles.append(
                    SingleResponse(
                        cert_id=cert_id,
                        status=status,
                        this_update=entry_fields.this_update,
                        next_update=entry_fields.next_update,
                    )
                )
        except _Unauthorized:
            return encode_ocsp_response(OcspResponseStatus.UNAUTHORIZED)

        extensions = ()
        if self.config.nonce_policy is NoncePolicy.RESPONDER_SIDE:
            fresh = self._rng.getrandbits(RESPONDER_NONCE_LENGTH * 8)
            extensions = (nonce_extension(fresh.to_bytes(RESPONDER_NONCE_LENGTH, "big")),)
        elif self.config.nonce_policy is NoncePolicy.MIRROR:
            extensions = tuple(
                ext for ext in request.extensions if ext.oid == OID_OCSP_NONCE
            )

        tbs = TbsResponseData(
            responder_id=self.responder_id,
            produced_at=produced_at,
            responses=tuple(singles),
            extensions=extensions,
        )
        tbs_bytes = encode_tbs_response_data(tbs)
        spec = self.config.resolved_hash_spec
        signature = sign(self.config.signer, digest(spec, tbs_bytes))
        certs = ()
        if self.config.include_signer_certificate and self.config.signer.signed_certificate:
            certs = (self.config.signer.signed_certificate,)
        basic = BasicOcspResponse(
            tbs=tbs,
            signature_algorithm=AlgorithmIdentifier.for_signature(spec),
            signature=signature,
            certs=certs,
        )
        return encode_ocsp_response(OcspResponseStatus.SUCCESSFUL, basic)


# -- HTTP service ------------------------------------------------------------


class _OcspHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    responder: Responder  # set on the subclass built in serve_http

    def log_message(self, fmt, *args):  # noqa: D102 - quiet server
        log.debug("http: " + fmt, *args)

    def do_GET(self):
        self.send_error(405, "OCSP requests are POSTed")

    def do_POST(self):
        if self.headers.get("Content-Type") != "application/ocsp-request":
            self.send_error(415, "expected application/ocsp-request")
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        try:
            response = self.responder.handle_request(body)
        except ConnectionClosed:
            # Drop the TCP connection without an HTTP response.
            self.close_connection = True
            self.connection.close()
            return
        self.send_response(200)
        self.send_header("Content-Type", "application/ocsp-response")
        self.send_header("Content-Length", str(len(response)))
        self.end_headers()
        self.wfile.write(response)


class OcspHttpServer:
    """A running HTTP responder; stop() shuts it down cleanly."""

    def __init__(self, responder: Responder, httpd: ThreadingHTTPServer, thread: threading.Thread):
        self.responder = responder
        self._httpd = httpd
        self._thread = thread

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/"

    def stop(self) -> None:
        self._httpd.shutdown()
        self._thread.join(timeout=5)
        self._httpd.server_close()

    def __enter__(self) -> "OcspHttpServer":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_http(
    config: ResponderConfig,
    db: StatusDatabase,
    clock: Clock,
    bind_address: tuple[str, int] = ("127.0.0.1", 0),
) -> OcspHttpServer:
    responder = Responder(config, db, clock)
    handler = type("BoundOcspHandler", (_OcspHandler,), {"responder": responder})
    httpd = ThreadingHTTPServer(bind_address, handler)
    httpd.daemon_threads = True
    thread = threading.Thread(target=httpd.serve_forever, name="ocsplab-http", daemon=True)
    thread.start()
    return OcspHttpServer(responder, httpd, thread)
