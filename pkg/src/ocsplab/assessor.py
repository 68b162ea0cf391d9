"""Black-box exposure audit of an OCSP endpoint, plus survey aggregation.

The audit sends only legitimate protocol traffic: repeated status requests
to separate realtime from cached operation, a nonce probe, a pair of
never-issued-serial probes, and a look at the signature algorithm and the
signer's identity. Every reported field cites the probe transcript(s) it
was derived from. Reports serialize to a text record format; a shipped
70-record fixture reproduces the published survey percentages.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, replace
from datetime import timedelta
from importlib import resources
from pathlib import Path

from .clock import Clock
from .der import GeneralizedTimeValue
from .messages import (
    OcspResponseStatus,
    TbsCertificate,
    build_request,
    cert_id_for_issuer,
    decode_ocsp_response,
    encode_ocsp_request,
    encode_tbs_certificate,
)
from .pki import HashSpec, hash_spec_from_signature_oid
from .transport import ConnectionClosed, Transport, TransportError, Unreachable

PROBE_SPACING = timedelta(seconds=2.2)
FULL_AUDIT_PROBES = 5

# Hash classes whose collision resistance is considered broken or out of
# scope for real-world strength: SHA-1 itself, and the lab's truncated
# stand-ins for it.
_SHA1_CLASS_KINDS = ("sha1", "toy")


class EmptyInput(ValueError):
    pass


class PartialReport(RuntimeError):
    """Probe budget ran out; ``report`` carries what was determined."""

    def __init__(self, report: "AuditReport"):
        super().__init__("probe budget exhausted before all fields were determined")
        self.report = report


@dataclass(frozen=True)
class ProbeTranscript:
    label: str
    request_hex: str
    response_hex: str  # "closed" when the peer dropped the connection


@dataclass(frozen=True)
class AuditReport:
    """Per-endpoint exposure findings; None marks an undetermined field."""

    endpoint: str
    realtime: bool | None = None
    nonce_mirrored: bool | None = None
    nonexistent_behavior: str | None = None
    hash_algorithm: str | None = None          # from signatureAlgorithm
    certid_hash_algorithm: str | None = None   # echoed CertID algorithm
    ca_signed: bool | None = None
    granularity: str | None = None
    good_for_nonexistent: bool | None = None
    transcripts: tuple[ProbeTranscript, ...] = ()
    evidence: tuple[tuple[str, str], ...] = ()  # (field, transcript label)

    @property
    def sha1_in_use(self) -> bool | None:
        if self.hash_algorithm is None:
            return None
        return HashSpec.parse(self.hash_algorithm).kind in _SHA1_CLASS_KINDS

    @property
    def scaling_exposed(self) -> bool | None:
        """Derived, never stored: nonce echo or predictable unknown-serial answers."""
        if self.nonce_mirrored:
            return True
        if self.nonexistent_behavior in ("unknown", "good"):
            return True
        if self.nonce_mirrored is None or self.nonexistent_behavior is None:
            return None
        return False

    @property
    def hash_disagreement(self) -> bool | None:
        if self.hash_algorithm is None or self.certid_hash_algorithm is None:
            return None
        return self.hash_algorithm != self.certid_hash_algorithm

    @property
    def complete(self) -> bool:
        return None not in (
            self.realtime,
            self.nonce_mirrored,
            self.nonexistent_behavior,
            self.hash_algorithm,
            self.ca_signed,
            self.granularity,
            self.good_for_nonexistent,
        )


def audit(
    transport: Transport,
    issuer: TbsCertificate,
    known_serial: int,
    probe_budget: int = 10,
    *,
    clock: Clock,
    endpoint: str = "endpoint",
    cert_id_hash: HashSpec | None = None,
    rng: random.Random | None = None,
) -> AuditReport:
    """Run the probe battery and populate every report field with evidence.

    Needs five probes for a complete report; with a smaller budget the
    remaining fields stay undetermined and a PartialReport carrying the
    partial result is raised instead.
    """
    rng = rng if rng is not None else random.Random(19600)
    cert_hash = cert_id_hash if cert_id_hash is not None else HashSpec.sha1()
    cid = cert_id_for_issuer(cert_hash, issuer, known_serial)
    missing_serial = known_serial + 2**48 + rng.randrange(2**32)
    missing_cid = cert_id_for_issuer(cert_hash, issuer, missing_serial)

    transcripts: list[ProbeTranscript] = []
    evidence: list[tuple[str, str]] = []
    spent = 0

    def probe(label, cert_id, nonce=None):
        nonlocal spent
        spent += 1
        request = encode_ocsp_request(build_request([cert_id], nonce))
        try:
            raw = transport.send(request)
        except ConnectionClosed:
            transcripts.append(ProbeTranscript(label, request.hex(), "closed"))
            return None, None
        except TransportError as exc:
            raise Unreachable(str(exc)) from exc
        transcripts.append(ProbeTranscript(label, request.hex(), raw.hex()))
        return decode_ocsp_response(raw)

    def cite(field_name: str, *labels: str) -> None:
        evidence.extend((field_name, label) for label in labels)

    report = AuditReport(endpoint=endpoint)

    def finish() -> AuditReport:
        return replace(report, transcripts=tuple(transcripts), evidence=tuple(evidence))

    if probe_budget < 2:
        raise PartialReport(finish())

    # Realtime vs cached: two spaced status probes for the same serial.
    _, first = probe("status-0", cid)
    clock.sleep(PROBE_SPACING)
    _, second = probe("status-1", cid)
    if first is None or second is None:
        raise Unreachable("endpoint dropped status probes for a known serial")
    realtime = (
        first.tbs.responses[0].this_update != second.tbs.responses[0].this_update
    )
    cite("realtime", "status-0", "status-1")

    time_values: list[GeneralizedTimeValue] = []
    for basic in (first, second):
        time_values.append(basic.tbs.produced_at)
        for single in basic.tbs.responses:
            time_values.append(single.this_update)
            if single.next_update is not None:
                time_values.append(single.next_update)
    granularity = (
        "millisecond" if any(v.millisecond for v in time_values) else "second"
    )
    cite("granularity", "status-0", "status-1")

    try:
        hash_algorithm = hash_spec_from_signature_oid(first.signature_algorithm.oid).label
    except Exception:
        hash_algorithm = None
    certid_hash = first.tbs.responses[0].cert_id.hash_spec.label
    cite("hash_algorithm", "status-0")

    # CA-signed: the certs field when present, else the byKey responder ID
    # against the issuer's key hash.
    if first.certs:
        ca_signed = (
            encode_tbs_certificate(first.certs[0].tbs) == encode_tbs_certificate(issuer)
        )
    else:
        rid = first.tbs.responder_id
        ca_signed = (
            rid.key_hash is not None
            and rid.key_hash == hashlib.sha1(issuer.public_key).digest()
        )
    cite("ca_signed", "status-0")

    report = replace(
        report,
        realtime=realtime,
        granularity=granularity,
        hash_algorithm=hash_algorithm,
        certid_hash_algorithm=certid_hash,
        ca_signed=ca_signed,
    )
    if spent >= probe_budget:
        raise PartialReport(finish())

    # Nonce echo.
    nonce = rng.randrange(2**128).to_bytes(16, "big")
    _, echoed = probe("nonce", cid, nonce)
    nonce_mirrored = echoed is not None and echoed.tbs.nonce == nonce
    cite("nonce_mirrored", "nonce")
    report = replace(report, nonce_mirrored=nonce_mirrored)
    if spent + 2 > probe_budget:  # the never-issued check needs two probes
        raise PartialReport(finish())

    # Never-issued serial, twice back to back.
    status_a, missing_a = probe("nonexistent-0", missing_cid)
    status_b, missing_b = probe("nonexistent-1", missing_cid)
    behavior = _classify(status_a, missing_a, status_b, missing_b)
    cite("nonexistent_behavior", "nonexistent-0", "nonexistent-1")
    cite("good_for_nonexistent", "nonexistent-0")
    report = replace(
        report,
        nonexistent_behavior=behavior,
        good_for_nonexistent=behavior == "good",
    )
    return finish()


def _classify(status_a, a, status_b, b) -> str:
    if a is None and b is None and status_a is None and status_b is None:
        return "close_connection"
    if status_a is OcspResponseStatus.UNAUTHORIZED or status_b is OcspResponseStatus.UNAUTHORIZED:
        return "unauthorized"
    if a is None or b is None:
        return "close_connection"
    a_times = [a.tbs.produced_at.render()] + [
        s.this_update.render() for s in a.tbs.responses
    ]
    b_times = [b.tbs.produced_at.render()] + [
        s.this_update.render() for s in b.tbs.responses
    ]
    if a_times != b_times:
        return "randomized"
    state = a.tbs.responses[0].status.state
    return "good" if state == "good" else "unknown"


# -- risk grading -------------------------------------------------------------


@dataclass(frozen=True)
class RiskGrade:
    level: str  # "low" | "elevated" | "high" | "critical"
    facts: tuple[str, ...]
    uncertain: bool = False


def risk_grade(report: AuditReport) -> RiskGrade:
    """Grade per the survey's emphasis: CA key exposure tops truncated-hash risk.

    critical: the CA key signs responses and the hash input is scalable.
    high:     a SHA-1-class hash plus scalability (the cheap-collision case).
    elevated: scalable and realtime (predictable but costlier hash).
    low:      everything else.
    """
    scaling = report.scaling_exposed
    fields = (report.ca_signed, scaling, report.sha1_in_use, report.realtime)
    uncertain = any(value is None for value in fields)
    facts: list[str] = []
    if report.ca_signed and scaling:
        level = "critical"
        facts = ["CA certificate signs responses", "response content is scalable"]
    elif report.sha1_in_use and scaling:
        level = "high"
        facts = [f"SHA-1-class hash in use ({report.hash_algorithm})", "response content is scalable"]
    elif scaling and report.realtime:
        level = "elevated"
        facts = ["realtime responses", "response content is scalable"]
    else:
        level = "low"
        facts = ["no scalable prediction channel observed"]
    return RiskGrade(level=level, facts=tuple(facts), uncertain=uncertain)


# -- aggregation --------------------------------------------------------------

_BOOL_FIELDS = (
    "realtime",
    "nonce_mirrored",
    "scaling_exposed",
    "sha1_in_use",
    "ca_signed",
    "good_for_nonexistent",
)
_COMBO_FIELDS = {
    "sha1_and_scaling": lambda r: bool(r.sha1_in_use) and bool(r.scaling_exposed),
    "ca_signed_and_scaling": lambda r: bool(r.ca_signed) and bool(r.scaling_exposed),
}


@dataclass(frozen=True)
class SurveySummary:
    total: int
    counts: dict[str, int]
    percentages: dict[str, float]

    def line(self, key: str) -> str:
        return f"{key}: {self.counts[key]} ({self.percentages[key]}%)"


def _percentage(count: int, total: int) -> float:
    return round(count / total * 1000) / 10


def aggregate(reports: list[AuditReport]) -> SurveySummary:
    """Exact counts and one-decimal percentages across the report fields."""
    if not reports:
        raise EmptyInput("no reports to aggregate")
    total = len(reports)
    counts: dict[str, int] = {}
    for name in _BOOL_FIELDS:
        counts[name] = sum(1 for r in reports if getattr(r, name))
    for name, predicate in _COMBO_FIELDS.items():
        counts[name] = sum(1 for r in reports if predicate(r))
    counts["second_granularity"] = sum(1 for r in reports if r.granularity == "second")
    percentages = {name: _percentage(c, total) for name, c in counts.items()}
    return SurveySummary(total=total, counts=counts, percentages=percentages)


# -- report persistence --------------------------------------------------------

_TEXT_FIELDS = (
    "realtime",
    "nonce_mirrored",
    "nonexistent_behavior",
    "hash_algorithm",
    "certid_hash_algorithm",
    "ca_signed",
    "granularity",
    "good_for_nonexistent",
)


def report_to_text(report: AuditReport) -> str:
    lines = [f"endpoint={report.endpoint}"]
    for name in _TEXT_FIELDS:
        value = getattr(report, name)
        if value is None:
            rendered = "undetermined"
        elif isinstance(value, bool):
            rendered = str(value).lower()
        else:
            rendered = str(value)
        lines.append(f"{name}={rendered}")
    for t in report.transcripts:
        lines.append(f"transcript={t.label}|{t.request_hex}|{t.response_hex}")
    for field_name, label in report.evidence:
        lines.append(f"evidence={field_name}|{label}")
    return "\n".join(lines) + "\n"


def report_from_text(block: str) -> AuditReport:
    fields: dict[str, str] = {}
    transcripts: list[ProbeTranscript] = []
    evidence: list[tuple[str, str]] = []
    for raw in block.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"bad report line {raw!r}")
        if key == "transcript":
            label, req, resp = value.split("|")
            transcripts.append(ProbeTranscript(label, req, resp))
        elif key == "evidence":
            field_name, label = value.split("|")
            evidence.append((field_name, label))
        else:
            fields[key] = value

    def parse(name: str):
        value = fields.get(name, "undetermined")
        if value == "undetermined":
            return None
        if name in ("realtime", "nonce_mirrored", "ca_signed", "good_for_nonexistent"):
            return value == "true"
        return value

    return AuditReport(
        endpoint=fields.get("endpoint", "endpoint"),
        realtime=parse("realtime"),
        nonce_mirrored=parse("nonce_mirrored"),
        nonexistent_behavior=parse("nonexistent_behavior"),
        hash_algorithm=parse("hash_algorithm"),
        certid_hash_algorithm=parse("certid_hash_algorithm"),
        ca_signed=parse("ca_signed"),
        granularity=parse("granularity"),
        good_for_nonexistent=parse("good_for_nonexistent"),
        transcripts=tuple(transcripts),
        evidence=tuple(evidence),
    )


def reports_to_text(reports: list[AuditReport]) -> str:
    return "\n".join(report_to_text(r) for r in reports)


def reports_from_text(text: str) -> list[AuditReport]:
    blocks = [b for b in text.split("\n\n") if b.strip()]
    return [report_from_text(b) for b in blocks]


def load_reports(path: Path) -> list[AuditReport]:
    """Reports from one record file or a directory of them."""
    if path.is_dir():
        reports: list[AuditReport] = []
        for child in sorted(path.glob("*.txt")):
            reports.extend(reports_from_text(child.read_text()))
        return reports
    return reports_from_text(path.read_text())


def load_survey_fixture() -> list[AuditReport]:
    """The shipped 70-endpoint synthetic survey."""
    text = resources.files("ocsplab.data").joinpath("survey_fixture.txt").read_text()
    return reports_from_text(text)
