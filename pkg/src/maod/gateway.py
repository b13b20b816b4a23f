"""Vendor-agnostic model access.

A registry of vendor metadata maps standard parameter names onto each
provider's own key names, a factory builds adapter instances from those
translated parameters, and an instance cache hands back the same handle
for repeated requests with equal parameters. Core logic addresses vendors
only through the registry; deterministic mock providers ship in-repo so
the whole loop runs with zero network access.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from . import model as component_model
from .errors import (
    DuplicateVendor,
    FileProcessingError,
    InvalidMetadata,
    ModelInitializationError,
    ProviderFailure,
    UnknownComponent,
)

logger = logging.getLogger(__name__)

MOCK_ADAPTER_PATH = "maod.adapters.mock"
FAILING_ADAPTER_PATH = "maod.adapters.failing"

TEMPERATURE_MIN = 0.0
TEMPERATURE_MAX = 2.0

Context = Iterable[tuple[str, str]]


@dataclass(frozen=True)
class VendorMetadata:
    """Provider-specific naming: how a vendor spells the standard params.

    ``extra_keys`` maps standard extra-parameter names to the vendor's own
    key names; only declared extras are ever forwarded.
    """

    vendor_id: str
    model_name_key: str
    temperature_key: str
    module_path: str = MOCK_ADAPTER_PATH
    extra_keys: Mapping[str, str] = field(default_factory=dict)

    def check(self) -> None:
        for name, value in (
            ("vendor_id", self.vendor_id),
            ("model_name_key", self.model_name_key),
            ("temperature_key", self.temperature_key),
            ("module_path", self.module_path),
        ):
            if not value:
                raise InvalidMetadata(f"{name} must be non-empty")
        for standard, vendor_key in self.extra_keys.items():
            if not standard or not vendor_key:
                raise InvalidMetadata("extra_keys names must be non-empty")


@dataclass(frozen=True)
class ModelParams:
    """Standard-form model parameters (the session's theta)."""

    vendor_id: str
    model_name: str
    temperature: float = 0.0
    extras: Mapping[str, str] = field(default_factory=dict)

    def cache_key(self) -> tuple:
        return (
            self.vendor_id,
            self.model_name,
            repr(float(self.temperature)),
            tuple(sorted(self.extras.items())),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "vendor_id": self.vendor_id,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "extras": dict(self.extras),
        }


@dataclass(frozen=True)
class ModelHandle:
    """Opaque handle onto a constructed adapter instance."""

    vendor_id: str
    model_name: str
    cache_key: tuple
    adapter: Any


class MockAdapter:
    """Deterministic in-repo provider.

    Model names starting with ``echo`` return the final user text verbatim;
    ``rewrite`` models return ``"[rewritten] "`` prepended to it; ``fail``
    models raise :class:`ProviderFailure` on every call.
    """

    def __init__(self, **kwargs: Any):
        self.kwargs = kwargs
        names = [v for v in kwargs.values() if isinstance(v, str)]
        self.model = next((n for n in names if n.split("-")[0] in ("echo", "rewrite", "fail")), None)
        if self.model is None:
            raise ModelInitializationError(
                f"mock adapter knows echo-*/rewrite-*/fail-* models, got {kwargs!r}"
            )

    def generate(self, prompt: str, context: Context = ()) -> str:
        if self.model.startswith("fail"):
            raise ProviderFailure(f"mock model {self.model} is configured to fail")
        if self.model.startswith("rewrite"):
            return "[rewritten] " + prompt
        return prompt


class FailingAdapter:
    """Fault-injection adapter: every generate call fails."""

    def __init__(self, **kwargs: Any):
        self.kwargs = kwargs

    def generate(self, prompt: str, context: Context = ()) -> str:
        raise ProviderFailure("failing adapter always fails")


MOCK_VENDOR = VendorMetadata(
    vendor_id="mock",
    model_name_key="model",
    temperature_key="temperature",
    module_path=MOCK_ADAPTER_PATH,
)


class ModelGateway:
    """Registry + factory + instance cache over provider adapters."""

    def __init__(self, install_default_vendors: bool = True):
        self._vendors: dict[str, VendorMetadata] = {}
        self._adapters: dict[str, Callable[..., Any]] = {
            MOCK_ADAPTER_PATH: MockAdapter,
            FAILING_ADAPTER_PATH: FailingAdapter,
        }
        self._cache: dict[tuple, ModelHandle] = {}
        self._lock = threading.RLock()
        self.stats = {"constructor_calls": 0, "cache_hits": 0}
        if install_default_vendors:
            self.register_vendor(MOCK_VENDOR)

    # -- registry --------------------------------------------------------

    def register_adapter(self, module_path: str, factory: Callable[..., Any]) -> None:
        """Register the adapter constructor living at a module path."""
        if not module_path:
            raise InvalidMetadata("module_path must be non-empty")
        with self._lock:
            self._adapters[module_path] = factory

    def register_vendor(self, meta: VendorMetadata) -> None:
        meta.check()
        with self._lock:
            if meta.vendor_id in self._vendors:
                raise DuplicateVendor(f"vendor {meta.vendor_id!r} already registered")
            self._vendors[meta.vendor_id] = meta

    def unregister_vendor(self, vendor_id: str) -> None:
        with self._lock:
            self._vendors.pop(vendor_id, None)
            for key in [k for k in self._cache if k[0] == vendor_id]:
                del self._cache[key]

    def vendors(self) -> list[str]:
        with self._lock:
            return sorted(self._vendors)

    def load_vendors_file(self, path: str | Path) -> int:
        """Load additional vendor metadata from a JSON list; returns count."""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise FileProcessingError(f"cannot read vendors file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FileProcessingError(f"vendors file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, list):
            raise FileProcessingError(f"vendors file {path} must hold a JSON list")
        count = 0
        for entry in data:
            if not isinstance(entry, dict):
                raise InvalidMetadata("vendor entries must be objects")
            meta = VendorMetadata(
                vendor_id=entry.get("vendor_id", ""),
                model_name_key=entry.get("model_name_key", ""),
                temperature_key=entry.get("temperature_key", ""),
                module_path=entry.get("module_path", MOCK_ADAPTER_PATH),
                extra_keys=entry.get("extra_keys", {}) or {},
            )
            self.register_vendor(meta)
            count += 1
        logger.info("loaded %d vendor(s) from %s", count, path)
        return count

    # -- factory and cache -------------------------------------------------

    def _translate(self, meta: VendorMetadata, params: ModelParams) -> dict[str, Any]:
        kwargs: dict[str, Any] = {
            meta.model_name_key: params.model_name,
            meta.temperature_key: params.temperature,
        }
        for standard, value in params.extras.items():
            vendor_key = meta.extra_keys.get(standard)
            if vendor_key is None:
                raise ModelInitializationError(
                    f"vendor {meta.vendor_id!r} declares no key for extra {standard!r}"
                )
            kwargs[vendor_key] = value
        return kwargs

    def create_model(self, params: ModelParams) -> ModelHandle:
        """Build (or fetch from cache) a handle for the given parameters."""
        if not TEMPERATURE_MIN <= params.temperature <= TEMPERATURE_MAX:
            raise ModelInitializationError(
                f"temperature {params.temperature} outside [{TEMPERATURE_MIN}, {TEMPERATURE_MAX}]"
            )
        key = params.cache_key()
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self.stats["cache_hits"] += 1
                return cached
            meta = self._vendors.get(params.vendor_id)
            if meta is None:
                raise ModelInitializationError(f"vendor {params.vendor_id!r} is not registered")
            factory = self._adapters.get(meta.module_path)
            if factory is None:
                raise ModelInitializationError(
                    f"no adapter registered at {meta.module_path!r} for vendor {meta.vendor_id!r}"
                )
            kwargs = self._translate(meta, params)
            try:
                adapter = factory(**kwargs)
            except ModelInitializationError:
                raise
            except Exception as exc:
                raise ModelInitializationError(f"adapter construction failed: {exc}") from exc
            self.stats["constructor_calls"] += 1
            handle = ModelHandle(
                vendor_id=params.vendor_id,
                model_name=params.model_name,
                cache_key=key,
                adapter=adapter,
            )
            self._cache[key] = handle
            return handle

    # -- generation ---------------------------------------------------------

    def generate(self, handle: ModelHandle, prompt: str, context: Context = ()) -> str:
        """Run one generation; adapter faults surface as ProviderFailure."""
        try:
            return handle.adapter.generate(prompt, list(context))
        except ProviderFailure:
            raise
        except Exception as exc:
            raise ProviderFailure(f"adapter raised {type(exc).__name__}: {exc}") from exc

    def reprompt_component(
        self,
        handle: ModelHandle,
        response: component_model.DecomposedResponse,
        component_id: str,
        instruction: str,
    ) -> str:
        """Generate replacement content for one component.

        The prompt is the component's current content; linked components'
        content (targets of its links, in topological order) and the
        instruction ride along as context. Only the replacement text is
        returned; no other component is involved.
        """
        component = response.get(component_id)
        if component is None:
            raise UnknownComponent(f"no component {component_id!r} in response")
        targets = {link.target for link in component.links}
        context: list[tuple[str, str]] = []
        if targets:
            for cid in component_model.topological_order(response):
                if cid in targets:
                    linked = response.get(cid)
                    if linked is not None:
                        context.append(("context", linked.content))
        if instruction:
            context.append(("system", instruction))
        return self.generate(handle, component.content, context)
