"""File-backed record store: credentials, policy instances, content.

Three line-delimited families live under the data directory as
credentials.db, policy.db and content.db.  Plaintext tuple instances
stay here while only their hashes go to the ledger.  Writes append or
atomically replace a family file (write temp, then rename); an
in-memory index is rebuilt on open and the files are the source of
truth.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .policy import AccessorProfile
from .tuples import (
    AttributeCategory,
    AttributeMeta,
    HashRecord,
    PrivacyTuple,
    Sensitivity,
    hash_tuple,
    verify_hash,
)


class StoreError(Exception):
    """Base error for store operations."""


class UnknownAttribute(StoreError):
    pass


class UnknownProvider(StoreError):
    pass


class UnknownAccessor(StoreError):
    pass


class StaleVersion(StoreError):
    pass


class DuplicateLogin(StoreError):
    pass


class AuthenticationFailed(StoreError):
    """Single authentication error; carries no user-existence signal."""


_AUTH_FAILED_MESSAGE = "invalid credentials"


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


class Catalog:
    """The closed set of attributes records may carry."""

    def __init__(self, attributes):
        self._by_id: dict[int, AttributeMeta] = {}
        self._by_name: dict[str, AttributeMeta] = {}
        for meta in attributes:
            if meta.attribute_id in self._by_id:
                raise StoreError(f"duplicate attribute id: {meta.attribute_id}")
            if meta.name in self._by_name:
                raise StoreError(f"duplicate attribute name: {meta.name}")
            self._by_id[meta.attribute_id] = meta
            self._by_name[meta.name] = meta

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(self._by_id.values())

    def by_id(self, attribute_id: int) -> AttributeMeta:
        try:
            return self._by_id[attribute_id]
        except KeyError:
            raise UnknownAttribute(f"no attribute with id {attribute_id}") from None

    def by_name(self, name: str) -> AttributeMeta:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownAttribute(f"no attribute named {name!r}") from None

    def has_name(self, name: str) -> bool:
        return name in self._by_name


_CATALOG_SPEC = (
    # (name, category, sensitivity hint)
    ("first_name", AttributeCategory.BIOGRAPHICAL, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("last_name", AttributeCategory.BIOGRAPHICAL, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("date_of_birth", AttributeCategory.BIOGRAPHICAL, Sensitivity.LEVEL4_RESTRICTED),
    ("gender", AttributeCategory.BIOGRAPHICAL, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("street_name", AttributeCategory.DEMOGRAPHIC, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("city", AttributeCategory.DEMOGRAPHIC, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("province", AttributeCategory.DEMOGRAPHIC, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("postal_code", AttributeCategory.DEMOGRAPHIC, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("original_province", AttributeCategory.DEMOGRAPHIC, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("phone_number", AttributeCategory.DEMOGRAPHIC, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("personal_health_number", AttributeCategory.HEALTHCARE, Sensitivity.LEVEL4_RESTRICTED),
    ("medical_record_number", AttributeCategory.HEALTHCARE, Sensitivity.LEVEL4_RESTRICTED),
    ("chart_number", AttributeCategory.HEALTHCARE, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("personal_care_physician_name", AttributeCategory.HEALTHCARE, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("dentist_physician_name", AttributeCategory.HEALTHCARE, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("witness_last_name", AttributeCategory.CONSENT, Sensitivity.LEVEL2_INTERNAL_USE),
    ("witness_first_name", AttributeCategory.CONSENT, Sensitivity.LEVEL2_INTERNAL_USE),
    ("witness_phone_number", AttributeCategory.CONSENT, Sensitivity.LEVEL2_INTERNAL_USE),
    ("witness_street", AttributeCategory.CONSENT, Sensitivity.LEVEL2_INTERNAL_USE),
    ("witness_city", AttributeCategory.CONSENT, Sensitivity.LEVEL2_INTERNAL_USE),
    ("witness_province", AttributeCategory.CONSENT, Sensitivity.LEVEL2_INTERNAL_USE),
    ("witness_postal_code", AttributeCategory.CONSENT, Sensitivity.LEVEL2_INTERNAL_USE),
    ("carrier_name", AttributeCategory.HEALTH_INSURANCE, Sensitivity.LEVEL2_INTERNAL_USE),
    ("policy_number", AttributeCategory.HEALTH_INSURANCE, Sensitivity.LEVEL3_CONFIDENTIAL),
    ("group_number", AttributeCategory.HEALTH_INSURANCE, Sensitivity.LEVEL3_CONFIDENTIAL),
)


def default_catalog() -> Catalog:
    return Catalog(
        AttributeMeta(
            attribute_id=index,
            name=name,
            category=category,
            sensitivity_hint=hint,
        )
        for index, (name, category, hint) in enumerate(_CATALOG_SPEC, start=1)
    )


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProviderRecord:
    provider_id: int
    attributes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"provider_id": self.provider_id, "attributes": dict(self.attributes)}

    @classmethod
    def from_dict(cls, data: dict) -> ProviderRecord:
        return cls(provider_id=data["provider_id"], attributes=data["attributes"])


@dataclass(frozen=True)
class TupleInstance:
    """One stored tuple version with its published hash location."""

    privacy_tuple: PrivacyTuple
    hash_record: HashRecord
    stream: str
    seq: int

    @property
    def lineage(self) -> tuple[int, int, int]:
        return self.privacy_tuple.lineage

    @property
    def version(self) -> int:
        return self.privacy_tuple.version

    def to_dict(self) -> dict:
        return {
            "tuple": self.privacy_tuple.to_dict(),
            "hash": self.hash_record.to_string(),
            "stream": self.stream,
            "seq": self.seq,
        }

    @classmethod
    def from_dict(cls, data: dict) -> TupleInstance:
        return cls(
            privacy_tuple=PrivacyTuple.from_dict(data["tuple"]),
            hash_record=HashRecord.from_string(data["hash"]),
            stream=data["stream"],
            seq=data["seq"],
        )


@dataclass(frozen=True)
class Credential:
    login: str
    password_hash: HashRecord
    profile: AccessorProfile

    def to_dict(self) -> dict:
        return {
            "login": self.login,
            "password_hash": self.password_hash.to_string(),
            "profile": self.profile.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Credential:
        return cls(
            login=data["login"],
            password_hash=HashRecord.from_string(data["password_hash"]),
            profile=AccessorProfile.from_dict(data["profile"]),
        )


# ---------------------------------------------------------------------------
# The store
# ---------------------------------------------------------------------------

CREDENTIALS_FILE = "credentials.db"
POLICY_FILE = "policy.db"
CONTENT_FILE = "content.db"
FAMILY_FILES = (CREDENTIALS_FILE, POLICY_FILE, CONTENT_FILE)


class Store:
    """Single-writer store over the three family files."""

    def __init__(self, data_dir, catalog: Catalog | None = None, hash_cost: int = 1024, create: bool = False):
        self._dir = Path(data_dir)
        self._catalog = catalog or default_catalog()
        self._hash_cost = hash_cost
        self._providers: dict[int, ProviderRecord] = {}
        self._tuples: dict[tuple[int, int, int], list[TupleInstance]] = {}
        self._credentials: dict[str, Credential] = {}
        self._accessors: dict[int, Credential] = {}
        if create:
            for name in FAMILY_FILES:
                target = self._dir / name
                if target.exists():
                    raise StoreError(f"store file already exists: {target}")
                target.touch()
        else:
            for name in FAMILY_FILES:
                if not (self._dir / name).exists():
                    raise StoreError(f"missing store file: {self._dir / name}")
            self._load()
        # Burned at init so unknown logins cost a real verification below.
        self._decoy = hash_tuple(b"\x00decoy", min(self._hash_cost, 1024))

    @property
    def catalog(self) -> Catalog:
        return self._catalog

    # -- persistence --------------------------------------------------------

    def _load(self):
        for line in self._read_lines(CONTENT_FILE):
            record = ProviderRecord.from_dict(json.loads(line))
            self._providers[record.provider_id] = record
        for line in self._read_lines(POLICY_FILE):
            instance = TupleInstance.from_dict(json.loads(line))
            self._tuples.setdefault(instance.lineage, []).append(instance)
        for line in self._read_lines(CREDENTIALS_FILE):
            cred = Credential.from_dict(json.loads(line))
            self._credentials[cred.login] = cred
            self._accessors[cred.profile.accessor_id] = cred

    def _read_lines(self, name: str):
        with open(self._dir / name, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield line

    def _append_record(self, name: str, record: dict):
        with open(self._dir / name, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _rewrite_records(self, name: str, records):
        # Write the whole family to a temp file, then rename over the old one
        # so readers never observe a half-written family.
        target = self._dir / name
        fd, temp_path = tempfile.mkstemp(dir=self._dir, prefix=name + ".")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                for record in records:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            os.replace(temp_path, target)
        except BaseException:
            if os.path.exists(temp_path):
                os.unlink(temp_path)
            raise

    # -- content ------------------------------------------------------------

    def put_provider_record(self, record: ProviderRecord) -> int:
        """Insert or atomically replace one provider's attribute values."""
        for name in record.attributes:
            if not self._catalog.has_name(name):
                raise UnknownAttribute(f"no attribute named {name!r}")
        replacing = record.provider_id in self._providers
        self._providers[record.provider_id] = record
        if replacing:
            self._rewrite_records(
                CONTENT_FILE,
                (self._providers[pid].to_dict() for pid in sorted(self._providers)),
            )
        else:
            self._append_record(CONTENT_FILE, record.to_dict())
        return record.provider_id

    def get_provider_record(self, provider_id: int) -> ProviderRecord:
        try:
            return self._providers[provider_id]
        except KeyError:
            raise UnknownProvider(f"no provider with id {provider_id}") from None

    def has_provider(self, provider_id: int) -> bool:
        return provider_id in self._providers

    def provider_ids(self) -> list[int]:
        return sorted(self._providers)

    # -- tuple instances ----------------------------------------------------

    def put_tuple_instance(self, instance: TupleInstance) -> tuple[int, int, int]:
        """Record a new tuple version.  Old versions are retained."""
        lineage = instance.lineage
        if lineage[0] not in self._providers:
            raise UnknownProvider(f"no provider with id {lineage[0]}")
        held = self._tuples.get(lineage, [])
        if held and instance.version <= held[-1].version:
            raise StaleVersion(
                f"lineage {lineage} already at version {held[-1].version}, "
                f"got {instance.version}"
            )
        self._tuples.setdefault(lineage, []).append(instance)
        self._append_record(POLICY_FILE, instance.to_dict())
        return lineage

    def latest_tuple_instance(self, lineage: tuple[int, int, int]) -> TupleInstance | None:
        held = self._tuples.get(tuple(lineage))
        return held[-1] if held else None

    def lineage_version(self, lineage: tuple[int, int, int]) -> int:
        held = self._tuples.get(tuple(lineage))
        return held[-1].version if held else 0

    def tuple_versions(self, lineage: tuple[int, int, int]) -> list[TupleInstance]:
        return list(self._tuples.get(tuple(lineage), []))

    # -- selection ----------------------------------------------------------

    def _match(self, record: ProviderRecord, predicate: dict) -> bool:
        for field_name, wanted in predicate.items():
            if field_name == "provider_id":
                if record.provider_id != wanted:
                    return False
            else:
                if not self._catalog.has_name(field_name):
                    raise UnknownAttribute(f"no attribute named {field_name!r}")
                if record.attributes.get(field_name) != wanted:
                    return False
        return True

    def select_rows(self, attributes, predicate: dict | None = None):
        """Raw projection: (provider_id, values) per matching record."""
        for name in attributes:
            if not self._catalog.has_name(name):
                raise UnknownAttribute(f"no attribute named {name!r}")
        predicate = predicate or {}
        rows = []
        for provider_id in sorted(self._providers):
            record = self._providers[provider_id]
            if self._match(record, predicate):
                rows.append(
                    (provider_id, [record.attributes.get(a) for a in attributes])
                )
        return rows

    def select(self, attributes, predicate: dict | None = None) -> list[list]:
        """Unmediated projection.  No policy applies here; callers are the
        benchmark harness and the mediator's post-rewrite execution."""
        return [values for _, values in self.select_rows(attributes, predicate)]

    # -- accessors ----------------------------------------------------------

    def add_accessor(self, login: str, password: str, profile: AccessorProfile) -> Credential:
        if not login:
            raise StoreError("login must be non-empty")
        if login in self._credentials:
            raise DuplicateLogin(f"login already registered: {login}")
        if profile.accessor_id in self._accessors:
            raise StoreError(f"accessor id already registered: {profile.accessor_id}")
        cred = Credential(
            login=login,
            password_hash=hash_tuple(password.encode("utf-8"), self._hash_cost),
            profile=profile,
        )
        self._credentials[login] = cred
        self._accessors[profile.accessor_id] = cred
        self._append_record(CREDENTIALS_FILE, cred.to_dict())
        return cred

    def authenticate(self, login: str, password: str) -> AccessorProfile:
        """Verify a login and return its profile.

        Wrong user and wrong password raise the identical error, so the
        response never reveals whether an account exists.
        """
        cred = self._credentials.get(login)
        if cred is None:
            verify_hash(password.encode("utf-8"), self._decoy)
            raise AuthenticationFailed(_AUTH_FAILED_MESSAGE)
        if not verify_hash(password.encode("utf-8"), cred.password_hash):
            raise AuthenticationFailed(_AUTH_FAILED_MESSAGE)
        return cred.profile

    def get_accessor(self, accessor_id: int) -> AccessorProfile:
        try:
            return self._accessors[accessor_id].profile
        except KeyError:
            raise UnknownAccessor(f"no accessor with id {accessor_id}") from None

    def accessor_ids(self) -> list[int]:
        return sorted(self._accessors)
