"""OCSP and X.509 message structures mapped onto the DER codec.

Covers OCSPRequest, BasicOCSPResponse plus its OCSPResponse transport
wrapper, and TBSCertificate/Certificate. Every optional field that a
structure does not carry is absent from the encoding (no empty containers),
and decoding enforces the same canonical shape, so decode(encode(x)) == x
and encode(decode(b)) == b within the supported subset.

Decoded responses keep the exact byte span of tbsResponseData (and of each
embedded tbsCertificate); signatures are always checked against those raw
spans, never against re-encoded bytes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import IntEnum

from . import der
from .der import (
    CLASS_CONTEXT,
    CLASS_UNIVERSAL,
    TAG_OCTET_STRING,
    TAG_SEQUENCE,
    DerValue,
    GeneralizedTimeValue,
    MalformedEncoding,
    UnsupportedFeature,
)
from .pki import CertID, HashSpec, PkiError, SignerIdentity, hash_spec_from_oid

OID_OCSP_BASIC = "1.3.6.1.5.5.7.48.1.1"
OID_OCSP_NONCE = "1.3.6.1.5.5.7.48.1.2"

OID_AT_COMMON_NAME = "2.5.4.3"
OID_AT_ORGANIZATION = "2.5.4.10"
OID_AT_UNIQUE_IDENTIFIER = "2.5.4.45"

OID_EXT_SUBJECT_KEY_ID = "2.5.29.14"
OID_EXT_BASIC_CONSTRAINTS = "2.5.29.19"
OID_EXT_CRL_DISTRIBUTION = "2.5.29.31"
OID_EXT_AUTHORITY_KEY_ID = "2.5.29.35"
OID_EXT_EXTENDED_KEY_USAGE = "2.5.29.37"
OID_EXT_AUTHORITY_INFO_ACCESS = "1.3.6.1.5.5.7.1.1"


class MissingMandatoryField(der.DerError):
    """A structure lacks a field its schema requires."""


# A Name is a sequence of single-attribute RDNs: (attribute OID, value).
# str values render as UTF8String, bytes values as OCTET STRING.
NameEntry = tuple[str, "str | bytes"]
Name = tuple[NameEntry, ...]


def common_name(text: str) -> Name:
    return ((OID_AT_COMMON_NAME, text),)


@dataclass(frozen=True)
class AlgorithmIdentifier:
    oid: str
    parameters: DerValue | None = der.null()

    def to_der(self) -> DerValue:
        fields = [der.object_identifier(self.oid)]
        if self.parameters is not None:
            fields.append(self.parameters)
        return der.sequence(*fields)

    @classmethod
    def from_der(cls, value: DerValue) -> "AlgorithmIdentifier":
        kids = value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
        if not 1 <= len(kids) <= 2:
            raise MalformedEncoding("AlgorithmIdentifier must have 1 or 2 fields")
        params = kids[1] if len(kids) == 2 else None
        return cls(oid=kids[0].as_oid(), parameters=params)

    @classmethod
    def for_hash(cls, spec: HashSpec) -> "AlgorithmIdentifier":
        return cls(spec.oid)

    @classmethod
    def for_signature(cls, spec: HashSpec) -> "AlgorithmIdentifier":
        return cls(spec.signature_oid)


@dataclass(frozen=True)
class Extension:
    """An X.509v3 extension; ``value`` is the extnValue OCTET STRING content."""

    oid: str
    value: bytes
    critical: bool = False

    def to_der(self) -> DerValue:
        fields = [der.object_identifier(self.oid)]
        if self.critical:
            fields.append(der.boolean(True))
        fields.append(der.octet_string(self.value))
        return der.sequence(*fields)

    @classmethod
    def from_der(cls, value: DerValue) -> "Extension":
        kids = value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
        if len(kids) == 2:
            return cls(oid=kids[0].as_oid(), value=kids[1].as_octet_string())
        if len(kids) == 3:
            if not kids[1].as_bool():
                raise MalformedEncoding("DEFAULT FALSE critical flag must be omitted")
            return cls(oid=kids[0].as_oid(), value=kids[2].as_octet_string(), critical=True)
        raise MalformedEncoding("Extension must have 2 or 3 fields")


def nonce_extension(nonce: bytes) -> Extension:
    return Extension(OID_OCSP_NONCE, der.encode(der.octet_string(nonce)))


def nonce_from_extensions(extensions: tuple[Extension, ...]) -> bytes | None:
    for ext in extensions:
        if ext.oid == OID_OCSP_NONCE:
            return der.decode(ext.value).as_octet_string()
    return None


def basic_constraints_extension(ca: bool) -> Extension:
    body = der.sequence(der.boolean(True)) if ca else der.sequence()
    return Extension(OID_EXT_BASIC_CONSTRAINTS, der.encode(body), critical=True)


def authority_key_identifier_extension(key_id: bytes) -> Extension:
    body = der.sequence(der.context_primitive(0, key_id))
    return Extension(OID_EXT_AUTHORITY_KEY_ID, der.encode(body))


def subject_key_identifier_extension(key_id: bytes) -> Extension:
    return Extension(OID_EXT_SUBJECT_KEY_ID, der.encode(der.octet_string(key_id)))


def extended_key_usage_extension(oids: tuple[str, ...]) -> Extension:
    body = der.sequence(*(der.object_identifier(o) for o in oids))
    return Extension(OID_EXT_EXTENDED_KEY_USAGE, der.encode(body))


def _extensions_to_der(extensions: tuple[Extension, ...]) -> DerValue:
    return der.sequence(*(ext.to_der() for ext in extensions))


def _extensions_from_der(value: DerValue) -> tuple[Extension, ...]:
    kids = value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    return tuple(Extension.from_der(kid) for kid in kids)


# -- Name ----------------------------------------------------------------


def _name_to_der(name: Name) -> DerValue:
    rdns = []
    for oid, value in name:
        if isinstance(value, str):
            encoded = der.utf8_string(value)
        else:
            encoded = der.octet_string(value)
        rdns.append(der.set_value(der.sequence(der.object_identifier(oid), encoded)))
    return der.sequence(*rdns)


def _name_from_der(value: DerValue) -> Name:
    entries: list[NameEntry] = []
    for rdn in value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children:
        atvs = rdn.expect(CLASS_UNIVERSAL, der.TAG_SET).children
        if len(atvs) != 1:
            raise UnsupportedFeature("multi-attribute RDNs are not supported")
        kids = atvs[0].expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
        if len(kids) != 2:
            raise MalformedEncoding("AttributeTypeAndValue must have 2 fields")
        oid = kids[0].as_oid()
        val = kids[1]
        if val.tag_class == CLASS_UNIVERSAL and val.tag == der.TAG_UTF8_STRING:
            entries.append((oid, val.as_text()))
        elif val.tag_class == CLASS_UNIVERSAL and val.tag == TAG_OCTET_STRING:
            entries.append((oid, val.as_octet_string()))
        else:
            raise UnsupportedFeature("unsupported name attribute value type")
    return tuple(entries)


# -- CertID ---------------------------------------------------------------


def cert_id_to_der(cert_id: CertID) -> DerValue:
    return der.sequence(
        AlgorithmIdentifier.for_hash(cert_id.hash_spec).to_der(),
        der.octet_string(cert_id.issuer_name_hash),
        der.octet_string(cert_id.issuer_key_hash),
        der.integer(cert_id.serial_number),
    )


def cert_id_from_der(value: DerValue) -> CertID:
    kids = value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    if len(kids) != 4:
        raise MalformedEncoding("CertID must have 4 fields")
    alg = AlgorithmIdentifier.from_der(kids[0])
    try:
        spec = hash_spec_from_oid(alg.oid)
        return CertID(
            hash_spec=spec,
            issuer_name_hash=kids[1].as_octet_string(),
            issuer_key_hash=kids[2].as_octet_string(),
            serial_number=kids[3].as_int(),
        )
    except PkiError as exc:
        raise MalformedEncoding(str(exc)) from exc


def cert_id_for_issuer(spec: HashSpec, issuer: "TbsCertificate", serial: int) -> CertID:
    """CertID built the RFC way: hash of the issuer's DN and of its key bits."""
    from .pki import digest

    name_hash = digest(spec, der.encode(_name_to_der(issuer.subject)))
    key_hash = digest(spec, issuer.public_key)
    return CertID(spec, name_hash, key_hash, serial)


# -- OCSP request ---------------------------------------------------------


@dataclass(frozen=True)
class OcspRequest:
    cert_ids: tuple[CertID, ...]
    extensions: tuple[Extension, ...] = ()

    @property
    def nonce(self) -> bytes | None:
        return nonce_from_extensions(self.extensions)


def build_request(
    cert_ids: tuple[CertID, ...] | list[CertID],
    nonce: bytes | None = None,
) -> OcspRequest:
    extensions = (nonce_extension(nonce),) if nonce is not None else ()
    return OcspRequest(cert_ids=tuple(cert_ids), extensions=extensions)


def encode_ocsp_request(request: OcspRequest) -> bytes:
    if not request.cert_ids:
        raise MissingMandatoryField("a request needs at least one CertID")
    request_list = der.sequence(
        *(der.sequence(cert_id_to_der(cid)) for cid in request.cert_ids)
    )
    tbs_fields = [request_list]
    if request.extensions:
        tbs_fields.append(der.context(2, _extensions_to_der(request.extensions)))
    return der.encode(der.sequence(der.sequence(*tbs_fields)))


def decode_ocsp_request(data: bytes) -> OcspRequest:
    root = der.decode(data).expect(CLASS_UNIVERSAL, TAG_SEQUENCE)
    kids = root.children
    if len(kids) == 0:
        raise MalformedEncoding("empty OCSPRequest")
    if len(kids) > 1:
        raise UnsupportedFeature("signed requests are not supported")
    tbs = kids[0].expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    cursor = 0
    if cursor < len(tbs) and tbs[cursor].is_context(0):
        raise MalformedEncoding("explicit DEFAULT version is not canonical")
    if cursor < len(tbs) and tbs[cursor].is_context(1):
        raise UnsupportedFeature("requestorName is not supported")
    if cursor >= len(tbs):
        raise MalformedEncoding("missing requestList")
    cert_ids: list[CertID] = []
    for entry in tbs[cursor].expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children:
        fields = entry.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
        if len(fields) == 0:
            raise MalformedEncoding("empty Request entry")
        if len(fields) > 1:
            raise UnsupportedFeature("singleRequestExtensions are not supported")
        cert_ids.append(cert_id_from_der(fields[0]))
    if not cert_ids:
        raise MalformedEncoding("requestList must not be empty")
    cursor += 1
    extensions: tuple[Extension, ...] = ()
    if cursor < len(tbs):
        wrapper = tbs[cursor]
        if not wrapper.is_context(2):
            raise MalformedEncoding("unexpected field in tbsRequest")
        if len(wrapper.children) != 1:
            raise MalformedEncoding("requestExtensions wrapper must hold one value")
        extensions = _extensions_from_der(wrapper.child(0))
        if not extensions:
            raise MalformedEncoding("empty extension list must be omitted")
        cursor += 1
    if cursor != len(tbs):
        raise MalformedEncoding("trailing fields in tbsRequest")
    return OcspRequest(cert_ids=tuple(cert_ids), extensions=extensions)


# -- OCSP response --------------------------------------------------------


@dataclass(frozen=True)
class CertStatus:
    state: str  # "good" | "revoked" | "unknown"
    revoked_at: GeneralizedTimeValue | None = None

    def __post_init__(self) -> None:
        if self.state not in ("good", "revoked", "unknown"):
            raise PkiError(f"bad certificate status {self.state!r}")
        if (self.state == "revoked") != (self.revoked_at is not None):
            raise PkiError("revoked status carries a revocation time, others do not")

    @classmethod
    def good(cls) -> "CertStatus":
        return cls("good")

    @classmethod
    def revoked(cls, at: GeneralizedTimeValue) -> "CertStatus":
        return cls("revoked", at)

    @classmethod
    def unknown(cls) -> "CertStatus":
        return cls("unknown")


def _cert_status_to_der(status: CertStatus) -> DerValue:
    if status.state == "good":
        return der.context_primitive(0, b"")
    if status.state == "revoked":
        assert status.revoked_at is not None
        return der.context(1, der.generalized_time(status.revoked_at))
    return der.context_primitive(2, b"")


def _cert_status_from_der(value: DerValue) -> CertStatus:
    if value.tag_class != CLASS_CONTEXT:
        raise MalformedEncoding("certStatus must be a context-tagged CHOICE")
    if value.tag == 0 and not value.constructed:
        if value.octets != b"":
            raise MalformedEncoding("good status carries no content")
        return CertStatus.good()
    if value.tag == 1 and value.constructed:
        kids = value.children
        if len(kids) != 1:
            raise UnsupportedFeature("revocationReason is not supported")
        return CertStatus.revoked(kids[0].as_time())
    if value.tag == 2 and not value.constructed:
        if value.octets != b"":
            raise MalformedEncoding("unknown status carries no content")
        return CertStatus.unknown()
    raise MalformedEncoding(f"bad certStatus tag [{value.tag}]")


@dataclass(frozen=True)
class SingleResponse:
    cert_id: CertID
    status: CertStatus
    this_update: GeneralizedTimeValue
    next_update: GeneralizedTimeValue | None = None


def _single_response_to_der(single: SingleResponse) -> DerValue:
    fields = [
        cert_id_to_der(single.cert_id),
        _cert_status_to_der(single.status),
        der.generalized_time(single.this_update),
    ]
    if single.next_update is not None:
        fields.append(der.context(0, der.generalized_time(single.next_update)))
    return der.sequence(*fields)


def _single_response_from_der(value: DerValue) -> SingleResponse:
    kids = value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    if len(kids) < 3:
        raise MalformedEncoding("SingleResponse needs certID, certStatus, thisUpdate")
    cert_id = cert_id_from_der(kids[0])
    status = _cert_status_from_der(kids[1])
    this_update = kids[2].as_time()
    next_update = None
    cursor = 3
    if cursor < len(kids) and kids[cursor].is_context(0):
        if len(kids[cursor].children) != 1:
            raise MalformedEncoding("nextUpdate wrapper must hold one value")
        next_update = kids[cursor].child(0).as_time()
        cursor += 1
    if cursor < len(kids):
        raise UnsupportedFeature("singleExtensions are not supported")
    return SingleResponse(cert_id, status, this_update, next_update)


@dataclass(frozen=True)
class ResponderId:
    """CHOICE between a Name ([1]) and a key hash ([2]); exactly one is set."""

    key_hash: bytes | None = None
    name: Name | None = None

    def __post_init__(self) -> None:
        if (self.key_hash is None) == (self.name is None):
            raise PkiError("responder ID is either byName or byKey")

    def to_der(self) -> DerValue:
        if self.key_hash is not None:
            return der.context(2, der.octet_string(self.key_hash))
        assert self.name is not None
        return der.context(1, _name_to_der(self.name))

    @classmethod
    def from_der(cls, value: DerValue) -> "ResponderId":
        if value.is_context(1) and value.constructed:
            return cls(name=_name_from_der(value.child(0)))
        if value.is_context(2) and value.constructed:
            return cls(key_hash=value.child(0).as_octet_string())
        raise MalformedEncoding("bad responderID tag")


@dataclass(frozen=True)
class TbsResponseData:
    responder_id: ResponderId
    produced_at: GeneralizedTimeValue
    responses: tuple[SingleResponse, ...]
    extensions: tuple[Extension, ...] = ()

    @property
    def nonce(self) -> bytes | None:
        return nonce_from_extensions(self.extensions)


def encode_tbs_response_data(tbs: TbsResponseData) -> bytes:
    fields = [
        tbs.responder_id.to_der(),
        der.generalized_time(tbs.produced_at),
        der.sequence(*(_single_response_to_der(s) for s in tbs.responses)),
    ]
    if tbs.extensions:
        fields.append(der.context(1, _extensions_to_der(tbs.extensions)))
    return der.encode(der.sequence(*fields))


def _tbs_response_data_from_der(value: DerValue) -> TbsResponseData:
    kids = value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    cursor = 0
    if cursor < len(kids) and kids[cursor].is_context(0):
        raise MalformedEncoding("explicit DEFAULT version is not canonical")
    if cursor >= len(kids):
        raise MalformedEncoding("missing responderID")
    responder_id = ResponderId.from_der(kids[cursor])
    cursor += 1
    if cursor >= len(kids):
        raise MalformedEncoding("missing producedAt")
    produced_at = kids[cursor].as_time()
    cursor += 1
    if cursor >= len(kids):
        raise MalformedEncoding("missing responses")
    responses = tuple(
        _single_response_from_der(entry)
        for entry in kids[cursor].expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    )
    cursor += 1
    extensions: tuple[Extension, ...] = ()
    if cursor < len(kids):
        wrapper = kids[cursor]
        if not wrapper.is_context(1):
            raise MalformedEncoding("unexpected field in tbsResponseData")
        if len(wrapper.children) != 1:
            raise MalformedEncoding("responseExtensions wrapper must hold one value")
        extensions = _extensions_from_der(wrapper.child(0))
        if not extensions:
            raise MalformedEncoding("empty extension list must be omitted")
        cursor += 1
    if cursor != len(kids):
        raise MalformedEncoding("trailing fields in tbsResponseData")
    return TbsResponseData(responder_id, produced_at, responses, extensions)


def decode_tbs_response_data(data: bytes) -> TbsResponseData:
    return _tbs_response_data_from_der(der.decode(data))


@dataclass(frozen=True)
class BasicOcspResponse:
    tbs: TbsResponseData
    signature_algorithm: AlgorithmIdentifier
    signature: bytes
    certs: tuple["Certificate", ...] = ()

    @property
    def tbs_raw(self) -> bytes:
        """The exact tbsResponseData byte span signatures are computed over.

        For decoded responses this is the original wire span; for locally
        built responses it is the canonical encoding (identical by DER
        canonicity).
        """
        raw = getattr(self, "_tbs_raw", None)
        if raw is not None:
            return raw
        return encode_tbs_response_data(self.tbs)

    def _attach_raw(self, raw: bytes) -> "BasicOcspResponse":
        object.__setattr__(self, "_tbs_raw", raw)
        return self


def encode_basic_ocsp_response(response: BasicOcspResponse) -> bytes:
    fields = [
        der.decode(response.tbs_raw),
        response.signature_algorithm.to_der(),
        der.bit_string(response.signature),
    ]
    if response.certs:
        fields.append(
            der.context(0, der.sequence(*(der.decode(encode_certificate(c)) for c in response.certs)))
        )
    return der.encode(der.sequence(*fields))


def decode_basic_ocsp_response(data: bytes) -> BasicOcspResponse:
    kids = der.decode(data).expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    if len(kids) < 3:
        raise MalformedEncoding("BasicOCSPResponse needs tbs, algorithm, signature")
    tbs_value = kids[0]
    tbs = _tbs_response_data_from_der(tbs_value)
    algorithm = AlgorithmIdentifier.from_der(kids[1])
    signature = kids[2].as_bit_string()
    certs: tuple[Certificate, ...] = ()
    cursor = 3
    if cursor < len(kids):
        wrapper = kids[cursor]
        if not wrapper.is_context(0):
            raise MalformedEncoding("unexpected field in BasicOCSPResponse")
        if len(wrapper.children) != 1:
            raise MalformedEncoding("certs wrapper must hold one value")
        certs = tuple(
            _certificate_from_der(c)
            for c in wrapper.child(0).expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
        )
        cursor += 1
    if cursor != len(kids):
        raise MalformedEncoding("trailing fields in BasicOCSPResponse")
    assert tbs_value.raw is not None
    response = BasicOcspResponse(tbs, algorithm, signature, certs)
    return response._attach_raw(tbs_value.raw)


class OcspResponseStatus(IntEnum):
    SUCCESSFUL = 0
    MALFORMED_REQUEST = 1
    INTERNAL_ERROR = 2
    TRY_LATER = 3
    SIG_REQUIRED = 5
    UNAUTHORIZED = 6


def encode_ocsp_response(
    status: OcspResponseStatus, basic: BasicOcspResponse | None = None
) -> bytes:
    """The RFC 6960 transport wrapper: responseStatus + optional responseBytes."""
    fields = [der.enumerated(int(status))]
    if basic is not None:
        fields.append(
            der.context(
                0,
                der.sequence(
                    der.object_identifier(OID_OCSP_BASIC),
                    der.octet_string(encode_basic_ocsp_response(basic)),
                ),
            )
        )
    return der.encode(der.sequence(*fields))


def decode_ocsp_response(data: bytes) -> tuple[OcspResponseStatus, BasicOcspResponse | None]:
    kids = der.decode(data).expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    if len(kids) == 0:
        raise MalformedEncoding("empty OCSPResponse")
    try:
        status = OcspResponseStatus(kids[0].as_enumerated())
    except ValueError as exc:
        raise MalformedEncoding("unknown responseStatus") from exc
    if len(kids) == 1:
        return status, None
    if len(kids) > 2:
        raise MalformedEncoding("trailing fields in OCSPResponse")
    wrapper = kids[1]
    if not wrapper.is_context(0) or len(wrapper.children) != 1:
        raise MalformedEncoding("bad responseBytes wrapper")
    inner = wrapper.child(0).expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    if len(inner) != 2:
        raise MalformedEncoding("responseBytes must have type and body")
    if inner[0].as_oid() != OID_OCSP_BASIC:
        raise UnsupportedFeature("only id-pkix-ocsp-basic responses are supported")
    return status, decode_basic_ocsp_response(inner[1].as_octet_string())


# -- certificates ----------------------------------------------------------


@dataclass(frozen=True)
class TbsCertificate:
    serial_number: int
    signature_algorithm: AlgorithmIdentifier
    issuer: Name
    not_before: GeneralizedTimeValue
    not_after: GeneralizedTimeValue
    subject: Name
    spki_algorithm: AlgorithmIdentifier
    public_key: bytes
    extensions: tuple[Extension, ...] = ()
    version: int = 2  # v3


def encode_tbs_certificate(tbs: TbsCertificate) -> bytes:
    if not tbs.issuer:
        raise MissingMandatoryField("issuer name is mandatory")
    if not tbs.subject:
        raise MissingMandatoryField("subject name is mandatory")
    if not tbs.public_key:
        raise MissingMandatoryField("subject public key is mandatory")
    if tbs.serial_number < 0:
        raise MissingMandatoryField("serial number must be non-negative")
    fields = []
    if tbs.version != 0:
        fields.append(der.context(0, der.integer(tbs.version)))
    fields.extend(
        [
            der.integer(tbs.serial_number),
            tbs.signature_algorithm.to_der(),
            _name_to_der(tbs.issuer),
            der.sequence(
                der.generalized_time(tbs.not_before),
                der.generalized_time(tbs.not_after),
            ),
            _name_to_der(tbs.subject),
            der.sequence(tbs.spki_algorithm.to_der(), der.bit_string(tbs.public_key)),
        ]
    )
    if tbs.extensions:
        fields.append(der.context(3, _extensions_to_der(tbs.extensions)))
    return der.encode(der.sequence(*fields))


def _tbs_certificate_from_der(value: DerValue) -> TbsCertificate:
    kids = value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    cursor = 0
    version = 0
    if cursor < len(kids) and kids[cursor].is_context(0):
        version = kids[cursor].child(0).as_int()
        if version == 0:
            raise MalformedEncoding("explicit DEFAULT version is not canonical")
        cursor += 1
    if len(kids) - cursor < 6:
        raise MalformedEncoding("TBSCertificate is missing mandatory fields")
    serial = kids[cursor].as_int()
    signature_algorithm = AlgorithmIdentifier.from_der(kids[cursor + 1])
    issuer = _name_from_der(kids[cursor + 2])
    validity = kids[cursor + 3].expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    if len(validity) != 2:
        raise MalformedEncoding("Validity must have exactly two times")
    subject = _name_from_der(kids[cursor + 4])
    spki = kids[cursor + 5].expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    if len(spki) != 2:
        raise MalformedEncoding("SubjectPublicKeyInfo must have two fields")
    cursor += 6
    extensions: tuple[Extension, ...] = ()
    if cursor < len(kids):
        wrapper = kids[cursor]
        if wrapper.is_context(1) or wrapper.is_context(2):
            raise UnsupportedFeature("uniqueID BIT STRING fields are not supported")
        if not wrapper.is_context(3) or len(wrapper.children) != 1:
            raise MalformedEncoding("unexpected field in TBSCertificate")
        extensions = _extensions_from_der(wrapper.child(0))
        if not extensions:
            raise MalformedEncoding("empty extension list must be omitted")
        cursor += 1
    if cursor != len(kids):
        raise MalformedEncoding("trailing fields in TBSCertificate")
    return TbsCertificate(
        serial_number=serial,
        signature_algorithm=signature_algorithm,
        issuer=issuer,
        not_before=validity[0].as_time(),
        not_after=validity[1].as_time(),
        subject=subject,
        spki_algorithm=AlgorithmIdentifier.from_der(spki[0]),
        public_key=spki[1].as_bit_string(),
        extensions=extensions,
        version=version,
    )


def decode_tbs_certificate(data: bytes) -> TbsCertificate:
    return _tbs_certificate_from_der(der.decode(data))


@dataclass(frozen=True)
class Certificate:
    """A framed certificate: to-be-signed body plus algorithm and signature."""

    tbs: TbsCertificate
    signature_algorithm: AlgorithmIdentifier
    signature: bytes

    @property
    def tbs_raw(self) -> bytes:
        raw = getattr(self, "_tbs_raw", None)
        if raw is not None:
            return raw
        return encode_tbs_certificate(self.tbs)

    def _attach_raw(self, raw: bytes) -> "Certificate":
        object.__setattr__(self, "_tbs_raw", raw)
        return self


def encode_certificate(certificate: Certificate) -> bytes:
    return der.encode(
        der.sequence(
            der.decode(certificate.tbs_raw),
            certificate.signature_algorithm.to_der(),
            der.bit_string(certificate.signature),
        )
    )


def _certificate_from_der(value: DerValue) -> Certificate:
    kids = value.expect(CLASS_UNIVERSAL, TAG_SEQUENCE).children
    if len(kids) != 3:
        raise MalformedEncoding("Certificate must have 3 fields")
    tbs_value = kids[0]
    certificate = Certificate(
        tbs=_tbs_certificate_from_der(tbs_value),
        signature_algorithm=AlgorithmIdentifier.from_der(kids[1]),
        signature=kids[2].as_bit_string(),
    )
    assert tbs_value.raw is not None
    return certificate._attach_raw(tbs_value.raw)


def decode_certificate(data: bytes) -> Certificate:
    return _certificate_from_der(der.decode(data))


def subject_name_der(tbs: TbsCertificate) -> bytes:
    """Encoded subject Name; what issuerNameHash is computed over."""
    return der.encode(_name_to_der(tbs.subject))


def responder_id_for(identity: SignerIdentity) -> ResponderId:
    return ResponderId(key_hash=hashlib.sha1(identity.certificate.public_key).digest())
