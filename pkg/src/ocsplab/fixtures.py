"""Deterministic CA and OCSP-responder fixtures, plus their text file format.

All key material is derived from fixed labels, so every test and demo run
sees the same certificates byte for byte. Identities round-trip through a
hex-based key=value text format (one field per line, ``#`` comments), which
is also what the CLI reads and writes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from datetime import datetime, timezone

from .der import GeneralizedTimeValue
from .messages import (
    AlgorithmIdentifier,
    Certificate,
    Extension,
    TbsCertificate,
    authority_key_identifier_extension,
    basic_constraints_extension,
    common_name,
    decode_tbs_certificate,
    encode_certificate,
    encode_tbs_certificate,
    extended_key_usage_extension,
    subject_key_identifier_extension,
)
from .pki import (
    OID_KP_OCSP_SIGNING,
    HashSpec,
    SignerIdentity,
    SignerRole,
    digest,
    sign,
)

FIXTURE_NOT_BEFORE = GeneralizedTimeValue(datetime(2016, 1, 1, tzinfo=timezone.utc))
FIXTURE_NOT_AFTER = GeneralizedTimeValue(datetime(2026, 1, 1, tzinfo=timezone.utc))


def _fixture_secret(label: str) -> bytes:
    return hashlib.sha256(b"ocsplab fixture secret: " + label.encode()).digest()


def _fixture_public_key(secret: bytes) -> bytes:
    # The mock scheme has no real key pair; the "public key" is just a
    # distinct, secret-derived byte string for hashing and identification.
    return hashlib.sha256(b"public: " + secret).digest()


@dataclass(frozen=True)
class LabPki:
    """The standard fixture set: one CA and one dedicated responder under it."""

    ca: SignerIdentity
    dedicated: SignerIdentity
    hash_spec: HashSpec

    @property
    def issuer(self) -> TbsCertificate:
        return self.ca.certificate

    def signer(self, role: SignerRole) -> SignerIdentity:
        return self.ca if role is SignerRole.CA else self.dedicated


def _frame(tbs: TbsCertificate, signer_secret_identity: SignerIdentity) -> Certificate:
    tbs_bytes = encode_tbs_certificate(tbs)
    spec = signer_secret_identity.hash_spec
    signature = sign(signer_secret_identity, digest(spec, tbs_bytes))
    return Certificate(tbs, AlgorithmIdentifier.for_signature(spec), signature)


def make_ca_identity(hash_spec: HashSpec, name: str = "OCSP Lab Root CA") -> SignerIdentity:
    secret = _fixture_secret("ca:" + name)
    public_key = _fixture_public_key(secret)
    subject = common_name(name)
    tbs = TbsCertificate(
        serial_number=1,
        signature_algorithm=AlgorithmIdentifier.for_signature(hash_spec),
        issuer=subject,
        not_before=FIXTURE_NOT_BEFORE,
        not_after=FIXTURE_NOT_AFTER,
        subject=subject,
        spki_algorithm=AlgorithmIdentifier.for_hash(hash_spec),
        public_key=public_key,
        extensions=(
            basic_constraints_extension(ca=True),
            subject_key_identifier_extension(hashlib.sha1(public_key).digest()),
        ),
    )
    identity = SignerIdentity(
        role=SignerRole.CA,
        certificate=tbs,
        eku=frozenset(),
        secret=secret,
        hash_spec=hash_spec,
    )
    return SignerIdentity(
        role=identity.role,
        certificate=tbs,
        eku=identity.eku,
        secret=secret,
        hash_spec=hash_spec,
        signed_certificate=_frame(tbs, identity),
    )


def make_dedicated_identity(
    ca: SignerIdentity,
    hash_spec: HashSpec,
    name: str = "OCSP Lab Responder",
    eku: tuple[str, ...] = (OID_KP_OCSP_SIGNING,),
) -> SignerIdentity:
    """A responder certificate issued by ``ca``.

    ``eku`` defaults to the properly formed profile (id-kp-OCSPSigning only);
    pass something else to model polluted or missing EKU sets.
    """
    secret = _fixture_secret("ocsp:" + name)
    public_key = _fixture_public_key(secret)
    extensions: tuple[Extension, ...] = (
        basic_constraints_extension(ca=False),
        subject_key_identifier_extension(hashlib.sha1(public_key).digest()),
        authority_key_identifier_extension(hashlib.sha1(ca.certificate.public_key).digest()),
    )
    if eku:
        extensions += (extended_key_usage_extension(eku),)
    tbs = TbsCertificate(
        serial_number=2,
        signature_algorithm=AlgorithmIdentifier.for_signature(hash_spec),
        issuer=ca.certificate.subject,
        not_before=FIXTURE_NOT_BEFORE,
        not_after=FIXTURE_NOT_AFTER,
        subject=common_name(name),
        spki_algorithm=AlgorithmIdentifier.for_hash(hash_spec),
        public_key=public_key,
        extensions=extensions,
    )
    return SignerIdentity(
        role=SignerRole.DEDICATED_OCSP,
        certificate=tbs,
        eku=frozenset(eku),
        secret=secret,
        hash_spec=hash_spec,
        signed_certificate=_frame(tbs, ca),
    )


def make_lab_pki(hash_spec: HashSpec) -> LabPki:
    ca = make_ca_identity(hash_spec)
    return LabPki(ca=ca, dedicated=make_dedicated_identity(ca, hash_spec), hash_spec=hash_spec)


# -- identity text format ---------------------------------------------------


def identity_to_text(identity: SignerIdentity) -> str:
    lines = [
        "# ocsplab signer identity v1",
        f"role={identity.role.value}",
        f"hash_spec={identity.hash_spec.label}",
        f"secret={identity.secret.hex()}",
        f"eku={','.join(sorted(identity.eku))}",
        f"certificate={encode_tbs_certificate(identity.certificate).hex()}",
    ]
    if identity.signed_certificate is not None:
        lines.append(f"signed_certificate={encode_certificate(identity.signed_certificate).hex()}")
    return "\n".join(lines) + "\n"


def parse_kv_text(text: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("["):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"bad key=value line: {raw!r}")
        fields[key.strip()] = value.strip()
    return fields


def identity_from_text(text: str) -> SignerIdentity:
    fields = parse_kv_text(text)
    try:
        signed = None
        if "signed_certificate" in fields:
            from .messages import decode_certificate

            signed = decode_certificate(bytes.fromhex(fields["signed_certificate"]))
        return SignerIdentity(
            role=SignerRole(fields["role"]),
            certificate=decode_tbs_certificate(bytes.fromhex(fields["certificate"])),
            eku=frozenset(v for v in fields["eku"].split(",") if v),
            secret=bytes.fromhex(fields["secret"]),
            hash_spec=HashSpec.parse(fields["hash_spec"]),
            signed_certificate=signed,
        )
    except KeyError as exc:
        raise ValueError(f"identity file is missing field {exc}") from exc
