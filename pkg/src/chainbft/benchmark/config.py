"""Run configuration. JSON field names match the published configuration table
(``byzNo``, ``bsize``, ...); everything else is an extension with a default."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core import max_faulty
from ..runtime.replica import ReplicaConfig
from ..runtime.simulation import NetworkConfig


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` lists every offending field."""


class BenchConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    # table defaults
    address: dict[str, str] = Field(default_factory=dict)
    master: int = 0
    strategy: Literal["silence", "forking"] = "silence"
    byz_no: int = Field(0, alias="byzNo", ge=0)
    bsize: int = Field(400, ge=1)
    memsize: int = Field(1000, ge=1)
    psize: int = Field(0, ge=0)
    delay: float = Field(0.0, ge=0)
    timeout: float = Field(100.0, gt=0)
    runtime: float = Field(30.0, gt=0)
    concurrency: int = Field(10, ge=1)

    # extensions
    protocol: Literal["hotstuff", "2chs", "streamlet"] = "hotstuff"
    transport: Literal["simulation", "sockets"] = "simulation"
    seed: int = 0
    rate: float = Field(0.0, ge=0, description="client arrival rate in tx/s; 0 disables the workload")
    n: int | None = Field(None, ge=1)
    views: int | None = Field(None, ge=1)
    leader_policy: Literal["round-robin", "random"] = Field("round-robin", alias="leaderPolicy")
    responsive: bool = False
    view_change_wait: float | None = Field(None, alias="viewChangeWait", ge=0)
    backoff: bool = False
    scheme: Literal["null", "secp256k1"] = "null"
    # simulated network
    net_mean: float = Field(0.5, alias="netMean", ge=0, description="one-way link delay mean (ms)")
    net_std: float = Field(0.0, alias="netStd", ge=0)
    bandwidth: float | None = Field(None, gt=0, description="NIC bandwidth in bytes/s")
    t_cpu: float = Field(0.0, alias="tCpu", ge=0, description="ms per signing/aggregation step")
    loss_rate: float = Field(0.0, alias="lossRate", ge=0, lt=1)
    stall_views: int = Field(0, alias="stallViews", ge=0,
                             description="fail with a liveness stall when no commit happens for this many views")

    @field_validator("address")
    @classmethod
    def _ids_are_ints(cls, v: dict[str, str]) -> dict[str, str]:
        for k in v:
            if not k.isdigit():
                raise ValueError(f"address key {k!r} is not a replica id")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        n = self.num_replicas
        if n < 1:
            raise ValueError("need at least one replica (set n or address)")
        if self.address and self.n is not None and len(self.address) != self.n:
            raise ValueError(f"n={self.n} disagrees with {len(self.address)} addresses")
        if self.byz_no > max_faulty(n):
            raise ValueError(f"byzNo={self.byz_no} exceeds f={max_faulty(n)} for n={n}")
        if not 0 <= self.master < n:
            raise ValueError(f"master={self.master} is not a replica id")
        return self

    @property
    def num_replicas(self) -> int:
        if self.n is not None:
            return self.n
        return len(self.address) if self.address else 4

    def replica_config(self) -> ReplicaConfig:
        return ReplicaConfig(
            n=self.num_replicas, protocol=self.protocol, bsize=self.bsize, memsize=self.memsize,
            timeout_ms=self.timeout, backoff=self.backoff, master=self.master,
            leader_policy=self.leader_policy, seed=self.seed, responsive=self.responsive,
            view_change_wait_ms=self.view_change_wait,
        )

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(mean_ms=self.net_mean, std_ms=self.net_std, extra_delay_ms=self.delay,
                             bandwidth=self.bandwidth, t_cpu_ms=self.t_cpu, loss_rate=self.loss_rate,
                             dedup=self.loss_rate == 0)

    def effective(self) -> dict[str, Any]:
        """Every field with its table name, as echoed into reports."""
        return self.model_dump(by_alias=True)

    def peers(self) -> dict[int, tuple[str, int]]:
        out = {}
        for k, addr in self.address.items():
            host, _, port = addr.rpartition(":")
            if not host or not port.isdigit():
                raise ConfigError(f"address[{k}]={addr!r} is not host:port")
            out[int(k)] = (host, int(port))
        return out


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<config>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def build_config(data: dict[str, Any] | None = None, **overrides) -> BenchConfig:
    """Merge ``overrides`` (skipping None) over ``data`` and validate."""
    merged = dict(data or {})
    fields = BenchConfig.model_fields
    for key, value in overrides.items():
        if value is None:
            continue
        alias = fields[key].alias if key in fields and fields[key].alias else key
        merged.pop(key, None)
        merged[alias] = value
    try:
        return BenchConfig.model_validate(merged)
    except ValidationError as err:
        raise ConfigError(_format(err)) from None


def load_config(path: str | Path | None = None, **overrides) -> BenchConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"{path}: {err}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    return build_config(data, **overrides)
