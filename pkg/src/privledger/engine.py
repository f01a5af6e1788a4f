"""Engine wiring: configuration, initialization and the policy-set flow.

The engine owns one store, one ledger and one mediator over a data
directory.  Publishing a policy binds the tuple at the next lineage
version, hashes the canonical encoding, appends the hash to the
lineage's stream and only then records the plaintext instance in the
store, so the ledger is never behind the store.
"""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .ledger import Ledger, TickingClock, stream_name_for, system_clock
from .mediator import MediationResult, Mediator, NativeResult, QueryRequest
from .policy import AccessorProfile, PreferenceSet
from .store import Catalog, ProviderRecord, Store, TupleInstance, default_catalog
from .tuples import (
    DEFAULT_COST,
    MAX_COST,
    MIN_COST,
    bind_tuple,
    canonical_encode,
    hash_tuple,
)


class EngineError(Exception):
    pass


class AlreadyInitialized(EngineError):
    pass


class NotInitialized(EngineError):
    pass


class ConfigError(EngineError):
    pass


DATA_DIR_ENV = "PRIVLEDGER_DATA_DIR"
LEDGER_FILE = "ledger.db"

CLOCK_SYSTEM = "system"
CLOCK_FIXED = "fixed-for-test"

_CONFIG_KEYS = {
    "data_dir",
    "ledger_path",
    "hash_cost",
    "clock_mode",
    "default_trials",
    "bench_mode",
}


@dataclass(frozen=True)
class EngineConfig:
    data_dir: Path
    ledger_path: Path | None = None
    hash_cost: int = DEFAULT_COST
    clock_mode: str = CLOCK_SYSTEM
    default_trials: int = 100
    bench_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "data_dir", Path(self.data_dir))
        if self.ledger_path is not None:
            object.__setattr__(self, "ledger_path", Path(self.ledger_path))
        if not MIN_COST <= self.hash_cost <= MAX_COST:
            raise ConfigError(f"hash_cost out of range: {self.hash_cost}")
        if self.clock_mode not in (CLOCK_SYSTEM, CLOCK_FIXED):
            raise ConfigError(f"unknown clock_mode: {self.clock_mode!r}")
        if self.default_trials < 1:
            raise ConfigError("default_trials must be positive")

    @property
    def resolved_ledger_path(self) -> Path:
        return self.ledger_path or self.data_dir / LEDGER_FILE

    def make_clock(self):
        return TickingClock() if self.clock_mode == CLOCK_FIXED else system_clock

    @classmethod
    def from_file(cls, path) -> EngineConfig:
        """Load 'key = value' configuration text."""
        values: dict[str, str] = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = value.strip()
        if "data_dir" not in values:
            raise ConfigError("config must set data_dir")
        kwargs: dict = {"data_dir": Path(values["data_dir"])}
        if "ledger_path" in values:
            kwargs["ledger_path"] = Path(values["ledger_path"])
        if "hash_cost" in values:
            kwargs["hash_cost"] = _parse_config_int(values, "hash_cost")
        if "clock_mode" in values:
            kwargs["clock_mode"] = values["clock_mode"]
        if "default_trials" in values:
            kwargs["default_trials"] = _parse_config_int(values, "default_trials")
        if "bench_mode" in values:
            kwargs["bench_mode"] = _parse_config_bool(values, "bench_mode")
        return cls(**kwargs)

    def with_data_dir(self, data_dir) -> EngineConfig:
        return replace(self, data_dir=Path(data_dir), ledger_path=None)


def _parse_config_int(values: dict, key: str) -> int:
    try:
        return int(values[key], 10)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {values[key]!r}") from None


def _parse_config_bool(values: dict, key: str) -> bool:
    text = values[key].lower()
    if text in ("true", "yes", "1", "on"):
        return True
    if text in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {values[key]!r}")


def apply_env_overrides(config: EngineConfig, environ=None) -> EngineConfig:
    environ = environ if environ is not None else os.environ
    override = environ.get(DATA_DIR_ENV)
    if override:
        return config.with_data_dir(override)
    return config


# ---------------------------------------------------------------------------
# Publish keys
# ---------------------------------------------------------------------------


def publish_key(version: int) -> str:
    """Ledger key for a published tuple version.

    The first version of a lineage is labeled key17 and every later
    version key18, so a stream's key listing shows one creation label
    followed by update labels.
    """
    if version < 1:
        raise EngineError("version must be positive")
    return f"key{16 + min(version, 2)}"


@dataclass(frozen=True)
class PolicyPublication:
    stream: str
    seq: int
    version: int
    key: str


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class Engine:
    def __init__(self, config: EngineConfig, store: Store, ledger: Ledger):
        self.config = config
        self.store = store
        self.ledger = ledger
        self.mediator = Mediator(store, ledger)

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def initialize(cls, config: EngineConfig, catalog: Catalog | None = None) -> Engine:
        """Create engine state in a fresh data directory."""
        data_dir = config.data_dir
        ledger_path = config.resolved_ledger_path
        if (data_dir / "content.db").exists() or ledger_path.exists():
            raise AlreadyInitialized(f"engine already initialized in {data_dir}")
        data_dir.mkdir(parents=True, exist_ok=True)
        store = Store(
            data_dir,
            catalog=catalog or default_catalog(),
            hash_cost=config.hash_cost,
            create=True,
        )
        ledger = Ledger(ledger_path, clock=config.make_clock(), create=True)
        return cls(config, store, ledger)

    @classmethod
    def open(cls, config: EngineConfig, catalog: Catalog | None = None) -> Engine:
        """Open previously initialized engine state."""
        data_dir = config.data_dir
        ledger_path = config.resolved_ledger_path
        if not (data_dir / "content.db").exists() or not ledger_path.exists():
            raise NotInitialized(f"no engine state in {data_dir}")
        store = Store(
            data_dir,
            catalog=catalog or default_catalog(),
            hash_cost=config.hash_cost,
        )
        ledger = Ledger(ledger_path, clock=config.make_clock())
        for stream in ledger.streams():
            stream.subscribed = True
        return cls(config, store, ledger)

    def close(self):
        self.ledger.close()

    # -- administration -----------------------------------------------------

    def add_provider(self, provider_id: int, attributes: dict) -> ProviderRecord:
        record = ProviderRecord(provider_id=provider_id, attributes=dict(attributes))
        self.store.put_provider_record(record)
        return record

    def add_accessor(self, login: str, password: str, profile: AccessorProfile):
        return self.store.add_accessor(login, password, profile)

    # -- policy publication -------------------------------------------------

    def set_policy(
        self,
        provider_id: int,
        accessor_id: int,
        prefs: PreferenceSet,
        attribute_id: int | None = None,
    ) -> PolicyPublication:
        """Bind, hash, publish and store one policy version.

        The target attribute defaults to the one the preference record
        names; passing attribute_id pins it, and binding rejects a
        preference record that targets a different attribute.
        """
        attribute = self.store.catalog.by_id(
            prefs.attribute_id if attribute_id is None else attribute_id
        )
        profile = self.store.get_accessor(accessor_id)
        self.store.get_provider_record(provider_id)
        lineage = (provider_id, attribute.attribute_id, accessor_id)
        prior = self.store.lineage_version(lineage)
        bound = bind_tuple(provider_id, attribute, prefs, profile, prior)
        record = hash_tuple(canonical_encode(bound), self.config.hash_cost)
        stream = stream_name_for(*lineage)
        if not self.ledger.has_stream(stream):
            self.ledger.create_stream(stream)
            self.ledger.subscribe(stream)
        key = publish_key(bound.version)
        item = self.ledger.publish(stream, key, record.to_string().encode("ascii"))
        self.store.put_tuple_instance(
            TupleInstance(
                privacy_tuple=bound,
                hash_record=record,
                stream=stream,
                seq=item.seq,
            )
        )
        return PolicyPublication(
            stream=stream, seq=item.seq, version=bound.version, key=key
        )

    # -- queries ------------------------------------------------------------

    def mediate(self, request: QueryRequest, now: dt.date | None = None) -> MediationResult:
        return self.mediator.mediate(request, now=now)

    def native_query(self, request: QueryRequest) -> NativeResult:
        return self.mediator.native_query(request)
