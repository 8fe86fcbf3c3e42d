"""Named experiment presets: happy path, forking, silence and responsiveness."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..runtime.simulation import Simulation
from .config import BenchConfig, build_config
from .runner import RunResult, build_simulation, simulate

PRESETS = ("happy-path", "forking", "silence", "responsiveness")


def happy_path(protocol: str, n: int = 4, views: int = 10_000, seed: int = 1, **overrides) -> BenchConfig:
    return build_config(protocol=protocol, n=n, views=views, seed=seed, **overrides)


def forking(protocol: str, byz_no: int, n: int = 32, views: int = 400, seed: int = 1, **overrides) -> BenchConfig:
    return build_config(protocol=protocol, n=n, views=views, seed=seed, strategy="forking",
                        byz_no=byz_no, **overrides)


def silence(protocol: str, byz_no: int, n: int = 32, views: int = 400, seed: int = 1,
            timeout: float = 50.0, **overrides) -> BenchConfig:
    """Timeout is far above the happy-path view time, so only silent leaders trigger it."""
    return build_config(protocol=protocol, n=n, views=views, seed=seed, strategy="silence",
                        byz_no=byz_no, timeout=timeout, **overrides)


def run_preset(name: str, protocol: str, **kwargs) -> RunResult:
    makers = {"happy-path": happy_path, "forking": forking, "silence": silence}
    if name == "responsiveness":
        raise ValueError("use run_responsiveness for the responsiveness preset")
    return simulate(makers[name](protocol, **kwargs))


# ----------------------------------------------------------------------------- responsiveness

@dataclass
class ResponsivenessRun:
    protocol: str
    setting: str
    fluctuation: tuple[float, float]
    crash_node: int
    view_time_ms: float           # peak link delay during the fluctuation
    commit_times: list[float] = field(default_factory=list)   # observer commit times, ms
    qc_entries_after: int = 0      # views entered on a QC after the fluctuation ended
    tc_entries_after: int = 0
    sim: Simulation | None = None

    @property
    def first_commit_after(self) -> float | None:
        end = self.fluctuation[1]
        later = [t for t in self.commit_times if t >= end]
        return later[0] - end if later else None

    def commits_within(self, view_times: float) -> int:
        end = self.fluctuation[1]
        return sum(end <= t <= end + view_times * self.view_time_ms for t in self.commit_times)

    def throughput_series(self, bucket_ms: float = 100.0) -> list[tuple[float, int]]:
        """Committed blocks per time bucket, for plotting."""
        if not self.commit_times:
            return []
        last = max(self.commit_times)
        counts = [0] * (int(last // bucket_ms) + 1)
        for t in self.commit_times:
            counts[int(t // bucket_ms)] += 1
        return [(i * bucket_ms, c) for i, c in enumerate(counts)]


def responsiveness_config(protocol: str, setting: str = "t10", seed: int = 1, **overrides) -> BenchConfig:
    """``t10``: 10 ms timeouts, every protocol proposes as soon as it holds a certificate.
    ``t100``: 100 ms timeouts, every protocol waits out the timeout after a view change."""
    if setting == "t10":
        return build_config(protocol=protocol, n=4, seed=seed, timeout=10.0, responsive=True,
                            runtime=14, leader_policy="random", **overrides)
    if setting == "t100":
        return build_config(protocol=protocol, n=4, seed=seed, timeout=100.0, responsive=False,
                            view_change_wait=100.0, runtime=14, leader_policy="random", **overrides)
    raise ValueError(f"unknown setting {setting!r}")


def run_responsiveness(protocol: str, setting: str = "t10", seed: int = 1, start_ms: float = 1000.0,
                       length_ms: float = 10_000.0, tail_ms: float = 2000.0, crash_node: int = 3,
                       low_ms: float = 10.0, high_ms: float = 100.0, **overrides) -> ResponsivenessRun:
    """Inject a delay fluctuation, crash one replica right after it, and record the observer's commits."""
    cfg = responsiveness_config(protocol, setting, seed, **overrides)
    sim = build_simulation(cfg)
    end = start_ms + length_ms
    sim.add_fluctuation(start_ms, end, low_ms, high_ms)
    sim.schedule_admin(end, "crash", crash_node)
    sim.run(until_ms=end + tail_ms, observer=0)
    obs_id = min(i for i in sim.honest_ids if i != crash_node)
    obs = sim.replicas[obs_id]
    times = sorted(rec.time for rec in obs.commit_log)
    after = [(v, t, tc) for v, t, tc in obs.view_entries if t >= end]
    return ResponsivenessRun(
        protocol=protocol, setting=setting, fluctuation=(start_ms, end), crash_node=crash_node,
        view_time_ms=high_ms, commit_times=times,
        qc_entries_after=sum(not tc for _, _, tc in after),
        tc_entries_after=sum(tc for _, _, tc in after), sim=sim,
    )
