"""Hash and signature primitives, signer identities, and CertID.

The laboratory's hash menu is SHA-1, SHA-256 and the TOY(n) family: the
first n bits of SHA-256, n in {8,16,24,32,40,48}. TOY hashes make birthday
collisions reachable on a desk without inheriting any real SHA-1 weakness.

Signatures use a deterministic mock scheme, sig = SHA-256(secret || digest).
It keeps the one property every backend must have and that the collision
attack exploits: the signature depends only on the signer's secret and the
digest of the signed bytes, so two inputs with equal digests share one
signature.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .messages import Certificate, TbsCertificate

_TOY_WIDTHS = (8, 16, 24, 32, 40, 48)

# Private enterprise arc reserved for the laboratory's own identifiers.
LAB_ARC = "1.3.6.1.4.1.55555"

OID_SHA1 = "1.3.14.3.2.26"
OID_SHA256 = "2.16.840.1.101.3.4.2.1"
OID_TOY_PREFIX = LAB_ARC + ".1."          # + bit width
OID_MOCK_SIG_SHA1 = LAB_ARC + ".2.1"
OID_MOCK_SIG_SHA256 = LAB_ARC + ".2.2"
OID_MOCK_SIG_TOY_PREFIX = LAB_ARC + ".2.3."  # + bit width
OID_SALT_EXTENSION = LAB_ARC + ".3.1"

OID_KP_OCSP_SIGNING = "1.3.6.1.5.5.7.3.9"
OID_KP_TIME_STAMPING = "1.3.6.1.5.5.7.3.8"


class PkiError(ValueError):
    pass


@dataclass(frozen=True)
class HashSpec:
    """A hash algorithm selection: kind plus output width in bits."""

    kind: str  # "sha1" | "sha256" | "toy"
    bits: int

    def __post_init__(self) -> None:
        if self.kind == "sha1" and self.bits == 160:
            return
        if self.kind == "sha256" and self.bits == 256:
            return
        if self.kind == "toy" and self.bits in _TOY_WIDTHS:
            return
        raise PkiError(f"unsupported hash spec {self.kind}/{self.bits}")

    @classmethod
    def sha1(cls) -> "HashSpec":
        return cls("sha1", 160)

    @classmethod
    def sha256(cls) -> "HashSpec":
        return cls("sha256", 256)

    @classmethod
    def toy(cls, bits: int) -> "HashSpec":
        return cls("toy", bits)

    @classmethod
    def parse(cls, label: str) -> "HashSpec":
        label = label.strip().lower()
        if label == "sha1":
            return cls.sha1()
        if label == "sha256":
            return cls.sha256()
        if label.startswith("toy"):
            try:
                return cls.toy(int(label[3:]))
            except ValueError as exc:
                raise PkiError(f"bad hash label {label!r}") from exc
        raise PkiError(f"bad hash label {label!r}")

    @property
    def label(self) -> str:
        return self.kind if self.kind != "toy" else f"toy{self.bits}"

    @property
    def byte_length(self) -> int:
        return self.bits // 8

    @property
    def oid(self) -> str:
        if self.kind == "sha1":
            return OID_SHA1
        if self.kind == "sha256":
            return OID_SHA256
        return OID_TOY_PREFIX + str(self.bits)

    @property
    def signature_oid(self) -> str:
        """OID of the mock signature scheme computed over this digest."""
        if self.kind == "sha1":
            return OID_MOCK_SIG_SHA1
        if self.kind == "sha256":
            return OID_MOCK_SIG_SHA256
        return OID_MOCK_SIG_TOY_PREFIX + str(self.bits)


def hash_spec_from_oid(oid: str) -> HashSpec:
    if oid == OID_SHA1:
        return HashSpec.sha1()
    if oid == OID_SHA256:
        return HashSpec.sha256()
    if oid.startswith(OID_TOY_PREFIX):
        return HashSpec.toy(int(oid[len(OID_TOY_PREFIX) :]))
    raise PkiError(f"unknown hash algorithm OID {oid}")


def hash_spec_from_signature_oid(oid: str) -> HashSpec:
    if oid == OID_MOCK_SIG_SHA1:
        return HashSpec.sha1()
    if oid == OID_MOCK_SIG_SHA256:
        return HashSpec.sha256()
    if oid.startswith(OID_MOCK_SIG_TOY_PREFIX):
        return HashSpec.toy(int(oid[len(OID_MOCK_SIG_TOY_PREFIX) :]))
    raise PkiError(f"unknown signature algorithm OID {oid}")


def digest(spec: HashSpec, data: bytes) -> bytes:
    if spec.kind == "sha1":
        return hashlib.sha1(data).digest()
    full = hashlib.sha256(data).digest()
    if spec.kind == "sha256":
        return full
    return full[: spec.byte_length]


@dataclass(frozen=True)
class CertID:
    """The four-field tuple OCSP uses to identify a certificate."""

    hash_spec: HashSpec
    issuer_name_hash: bytes
    issuer_key_hash: bytes
    serial_number: int

    def __post_init__(self) -> None:
        expected = self.hash_spec.byte_length
        if len(self.issuer_name_hash) != expected or len(self.issuer_key_hash) != expected:
            raise PkiError("CertID hash length does not match its algorithm")
        if self.serial_number < 0:
            raise PkiError("serial numbers are non-negative")


class SignerRole(str, Enum):
    CA = "ca"
    DEDICATED_OCSP = "dedicated-ocsp"


class ContentKind(str, Enum):
    OCSP_RESPONSE = "ocsp_response"
    CERTIFICATE = "certificate"


@dataclass(frozen=True)
class SignerIdentity:
    """A signing principal: role, certificate fixture, EKU set, and secret.

    ``signed_certificate`` is the framed (signed) form of ``certificate``,
    present when the fixture built one; it is what a responder sends in the
    optional certs field.
    """

    role: SignerRole
    certificate: "TbsCertificate"
    eku: frozenset[str]
    secret: bytes
    hash_spec: HashSpec
    signed_certificate: "Certificate | None" = None

    @property
    def key_id(self) -> bytes:
        """SHA-1 hash of the public key bits; the byKey responder ID."""
        return hashlib.sha1(self.certificate.public_key).digest()


@dataclass(frozen=True)
class VerifyResult:
    """Signature check outcome plus the signer-eligibility policy flag."""

    valid: bool
    policy_eligible: bool

    def __bool__(self) -> bool:
        return self.valid


def sign(identity: SignerIdentity, tbs_digest: bytes) -> bytes:
    """Mock signature over an already-computed digest.

    Depends only on (identity.secret, tbs_digest): any two messages with
    equal digests receive the identical signature.
    """
    if len(tbs_digest) != identity.hash_spec.byte_length:
        raise PkiError(
            f"digest length {len(tbs_digest)} does not match "
            f"signer hash {identity.hash_spec.label}"
        )
    return hashlib.sha256(identity.secret + tbs_digest).digest()


def policy_eligible(identity: SignerIdentity, kind: ContentKind) -> bool:
    """Whether ``identity`` may sign content of ``kind`` under a strict policy.

    A CA key signs anything in its subtree. A dedicated responder key signs
    OCSP responses only, and only when its certificate actually carries
    id-kp-OCSPSigning; it never signs certificates, whatever else its EKU
    was polluted with.
    """
    if identity.role is SignerRole.CA:
        return True
    if kind is ContentKind.OCSP_RESPONSE:
        return OID_KP_OCSP_SIGNING in identity.eku
    return False


def verify(
    identity: SignerIdentity,
    tbs_bytes: bytes,
    signature: bytes,
    spec: HashSpec,
    kind: ContentKind = ContentKind.OCSP_RESPONSE,
) -> VerifyResult:
    expected = sign(identity, digest(spec, tbs_bytes))
    valid = hmac.compare_digest(expected, signature)
    return VerifyResult(valid=valid, policy_eligible=policy_eligible(identity, kind))
