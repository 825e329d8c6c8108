"""Channel provisioning strategies and a deterministic cost simulator.

Notarized channels are provisioned with a fixed byte capacity per
direction, and setup cost grows linearly with that capacity. A naive
session opens one channel big enough for the whole dialogue, paying the
full setup up front and hitting the per-session capacity ceiling after
a few rounds of history retransmission. The optimized strategy opens a
fresh short-lived channel per round, sized in multiples of a base
capacity M, and provisions round k+1's channel while round k is in
flight, so only the uncovered remainder of each setup is visible.

Everything here runs on a virtual clock: results are exact functions of
the plan and the cost model, never of wall time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .canonical import canonical_bytes, canonical_loads
from .errors import ValidationError

SESSION_CAP = 1 << 16  # per-direction ceiling per notarized session
DEFAULT_M = 16384

# Fixed per-request envelope: headers, auth material and JSON scaffolding
# that accompany every request regardless of dialogue length.
REQUEST_ENVELOPE = 5000

STRATEGY_NAIVE = "naive"
STRATEGY_OPTIMIZED = "optimized"

POLICY_FULL = "full-retransmit"
POLICY_SUMMARIZED = "summarized"


@dataclass(frozen=True)
class CostModel:
    setup_base: float = 0.0
    setup_per_byte: float = 0.0
    transfer_per_byte: float = 0.0
    rtt: float = 0.0
    api_latency: float = 0.0
    # Constant added per request in TEE-proxy mode; keeps the proxy in
    # the observed 1-20% overhead band relative to a direct call.
    proxy_overhead: float = 0.16

    def __post_init__(self):
        for name in (
            "setup_base",
            "setup_per_byte",
            "transfer_per_byte",
            "rtt",
            "api_latency",
            "proxy_overhead",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")

    def setup_delay(self, cap_up: int, cap_down: int) -> float:
        return self.setup_base + self.setup_per_byte * (cap_up + cap_down)

    def transfer_delay(self, n_bytes: int) -> float:
        return self.rtt + self.transfer_per_byte * n_bytes

    def to_obj(self) -> dict:
        return {
            "setup_base": f"{self.setup_base:.12g}",
            "setup_per_byte": f"{self.setup_per_byte:.12g}",
            "transfer_per_byte": f"{self.transfer_per_byte:.12g}",
            "rtt": f"{self.rtt:.12g}",
            "api_latency": f"{self.api_latency:.12g}",
            "proxy_overhead": f"{self.proxy_overhead:.12g}",
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "CostModel":
        return cls(**{k: float(v) for k, v in obj.items()})

    def save(self, path) -> None:
        import pathlib

        pathlib.Path(path).write_bytes(canonical_bytes(self.to_obj()))

    @classmethod
    def load(cls, path) -> "CostModel":
        import pathlib

        return cls.from_obj(canonical_loads(pathlib.Path(path).read_bytes()))


@dataclass(frozen=True)
class SessionWorkload:
    rounds: int
    message_bytes: int = 500
    response_bytes: int = 1000
    envelope_bytes: int = REQUEST_ENVELOPE
    history_policy: str = POLICY_FULL
    summary_cap: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValidationError("rounds must be positive")
        if self.message_bytes <= 0 or self.response_bytes <= 0:
            raise ValidationError("sizes must be positive")
        if self.history_policy == POLICY_SUMMARIZED and self.summary_cap <= 0:
            raise ValidationError("summarized policy requires a positive summary_cap")

    def up_bytes(self, round_index: int) -> int:
        """Request size for 1-based round k: history plus the new message."""
        k = round_index
        history = k * self.message_bytes + (k - 1) * self.response_bytes
        if self.history_policy == POLICY_SUMMARIZED:
            history = min(history, self.summary_cap)
        return history + self.envelope_bytes

    def down_bytes(self, round_index: int) -> int:
        return self.response_bytes

    def round_bytes(self, round_index: int) -> int:
        return self.up_bytes(round_index) + self.down_bytes(round_index)


@dataclass(frozen=True)
class Channel:
    cap_up: int
    cap_down: int


@dataclass(frozen=True)
class ChannelPlan:
    strategy: str
    workload: SessionWorkload
    channels: tuple[Channel, ...]
    feasible: bool
    failing_round: int | None = None

    def require_feasible(self) -> "ChannelPlan":
        if not self.feasible:
            raise ValidationError(
                f"{self.strategy} plan infeasible at round {self.failing_round}"
            )
        return self


def plan(
    strategy: str,
    workload: SessionWorkload,
    base_capacity: int = DEFAULT_M,
    session_cap: int = SESSION_CAP,
) -> ChannelPlan:
    """Size channels for the workload; marks infeasibility instead of raising."""
    rounds = range(1, workload.rounds + 1)
    if strategy == STRATEGY_NAIVE:
        cap_up = 0
        cap_down = 0
        for k in rounds:
            cap_up += workload.up_bytes(k)
            cap_down += workload.down_bytes(k)
            if cap_up > session_cap or cap_down > session_cap:
                return ChannelPlan(strategy, workload, (), False, failing_round=k)
        return ChannelPlan(strategy, workload, (Channel(cap_up, cap_down),), True)
    if strategy == STRATEGY_OPTIMIZED:
        if base_capacity < 1:
            raise ValidationError("base capacity must be positive")
        channels = []
        for k in rounds:
            cap_up = math.ceil(workload.up_bytes(k) / base_capacity) * base_capacity
            cap_down = math.ceil(workload.down_bytes(k) / base_capacity) * base_capacity
            if cap_up > session_cap or cap_down > session_cap:
                return ChannelPlan(strategy, workload, (), False, failing_round=k)
            channels.append(Channel(cap_up, cap_down))
        return ChannelPlan(strategy, workload, tuple(channels), True)
    raise ValidationError(f"unknown strategy {strategy!r}")


@dataclass(frozen=True)
class SimulationResult:
    strategy: str
    # Visible setup time: what the caller actually waits for channels.
    setup_total: float
    # Resources burned on provisioning, visible or hidden.
    setup_cost_total: float
    per_round: tuple[float, ...]
    per_round_setup_delay: tuple[float, ...]
    cumulative: tuple[float, ...]

    @property
    def total(self) -> float:
        return self.cumulative[-1]

    @property
    def per_message_overhead(self) -> float:
        """Mean notarization cost added per message, API time excluded.

        Counts all setup work (hidden provisioning still costs) plus
        transfer overhead; this is the quantity that differs between
        strategies and against a direct un-notarized call.
        """
        rounds = len(self.per_round)
        transfer = (
            sum(self.per_round)
            - rounds * self._api
            - sum(self.per_round_setup_delay)
        )
        return (self.setup_cost_total + transfer) / rounds

    _api: float = 0.0


def simulate(channel_plan: ChannelPlan, model: CostModel) -> SimulationResult:
    """Deterministic per-round latency accounting for a feasible plan."""
    channel_plan.require_feasible()
    workload = channel_plan.workload
    rounds = workload.rounds
    round_times = [
        model.transfer_delay(workload.round_bytes(k)) + model.api_latency
        for k in range(1, rounds + 1)
    ]

    if channel_plan.strategy == STRATEGY_NAIVE:
        setup = model.setup_delay(
            channel_plan.channels[0].cap_up, channel_plan.channels[0].cap_down
        )
        delays = [0.0] * rounds
        per_round = list(round_times)
        cumulative = []
        clock = setup
        for value in per_round:
            clock += value
            cumulative.append(clock)
        return SimulationResult(
            strategy=STRATEGY_NAIVE,
            setup_total=setup,
            setup_cost_total=setup,
            per_round=tuple(per_round),
            per_round_setup_delay=tuple(delays),
            cumulative=tuple(cumulative),
            _api=model.api_latency,
        )

    setups = [model.setup_delay(c.cap_up, c.cap_down) for c in channel_plan.channels]
    delays = [setups[0]]
    for k in range(1, rounds):
        # Channel k+1 is provisioned while round k is in flight; only the
        # remainder that outlives the round shows up as latency.
        delays.append(max(0.0, setups[k] - round_times[k - 1]))
    per_round = [delays[k] + round_times[k] for k in range(rounds)]
    cumulative = []
    clock = 0.0
    for value in per_round:
        clock += value
        cumulative.append(clock)
    return SimulationResult(
        strategy=STRATEGY_OPTIMIZED,
        setup_total=sum(delays),
        setup_cost_total=sum(setups),
        per_round=tuple(per_round),
        per_round_setup_delay=tuple(delays),
        cumulative=tuple(cumulative),
        _api=model.api_latency,
    )


def first_round_latency(workload: SessionWorkload, model: CostModel) -> float:
    """Steady-state notarized latency of the first message, setup excluded.

    This is the per-message quantity reported by latency tables: the
    channel already exists (or its setup is amortized), so the cost over
    a direct call is the relayed-transfer overhead.
    """
    return model.api_latency + model.transfer_delay(workload.round_bytes(1))


def direct_latency(workload: SessionWorkload, model: CostModel) -> float:
    return model.api_latency


def proxied_latency(workload: SessionWorkload, model: CostModel) -> float:
    return model.api_latency + model.proxy_overhead


@dataclass(frozen=True)
class CalibrationPoint:
    """One observed number to fit: kind selects the predicted quantity.

    kinds: naive-setup, optimized-setup, naive-per-message,
    optimized-per-message, first-round.
    """

    kind: str
    rounds: int
    observed: float


def calibrate(
    points: list[CalibrationPoint],
    api_latency: float,
    workload: SessionWorkload | None = None,
    base_capacity: int = DEFAULT_M,
    session_cap: int = SESSION_CAP,
    proxy_overhead: float = 0.16,
) -> CostModel:
    """Fit (setup_base, setup_per_byte, transfer_per_byte) to observations.

    Solves a relative (observation-weighted) nonnegative least squares
    over the linear predictions, so large and small observations pull
    with equal strength. rtt is folded into the per-byte terms (0).
    """
    import numpy
    from scipy.optimize import nnls

    if len(points) < 3:
        raise ValidationError("need at least 3 calibration points")
    proto = workload or SessionWorkload(rounds=1)

    rows = []
    targets = []
    for point in points:
        w = SessionWorkload(
            rounds=point.rounds,
            message_bytes=proto.message_bytes,
            response_bytes=proto.response_bytes,
            envelope_bytes=proto.envelope_bytes,
            history_policy=proto.history_policy,
            summary_cap=proto.summary_cap,
        )
        rounds = point.rounds
        total_bytes = sum(w.round_bytes(k) for k in range(1, rounds + 1))
        naive = plan(STRATEGY_NAIVE, w, base_capacity, session_cap)
        optimized = plan(STRATEGY_OPTIMIZED, w, base_capacity, session_cap)
        if point.kind == "naive-setup":
            c = naive.require_feasible().channels[0]
            rows.append([1.0, c.cap_up + c.cap_down, 0.0])
            targets.append(point.observed)
        elif point.kind == "optimized-setup":
            c = optimized.require_feasible().channels[0]
            rows.append([1.0, c.cap_up + c.cap_down, 0.0])
            targets.append(point.observed)
        elif point.kind == "naive-per-message":
            c = naive.require_feasible().channels[0]
            rows.append(
                [1.0 / rounds, (c.cap_up + c.cap_down) / rounds, total_bytes / rounds]
            )
            targets.append(point.observed)
        elif point.kind == "optimized-per-message":
            caps = sum(
                c.cap_up + c.cap_down for c in optimized.require_feasible().channels
            )
            rows.append([1.0, caps / rounds, total_bytes / rounds])
            targets.append(point.observed)
        elif point.kind == "first-round":
            rows.append([0.0, 0.0, w.round_bytes(1)])
            targets.append(point.observed - api_latency)
        else:
            raise ValidationError(f"unknown calibration point kind {point.kind!r}")

    matrix = numpy.array(rows, dtype=float)
    vector = numpy.array(targets, dtype=float)
    weights = numpy.array([1.0 / abs(p.observed) for p in points])
    solution, _ = nnls(matrix * weights[:, None], vector * weights)
    if numpy.linalg.matrix_rank(matrix) < 3 and not numpy.allclose(
        matrix @ solution, vector
    ):
        raise ValidationError("calibration system is degenerate (collinear points)")
    setup_base, setup_per_byte, transfer_per_byte = solution
    return CostModel(
        setup_base=float(setup_base),
        setup_per_byte=float(setup_per_byte),
        transfer_per_byte=float(transfer_per_byte),
        rtt=0.0,
        api_latency=api_latency,
        proxy_overhead=proxy_overhead,
    )


def paper_calibration(
    base_capacity: int = 4096,
    session_cap: int = SESSION_CAP,
) -> tuple[CostModel, SessionWorkload]:
    """The reference fit against the published scaling numbers.

    Observations: 6-round naive setup 9.8 s, optimized visible setup
    1.5 s, short-horizon per-message 2.1 s naive vs 2.5 s optimized,
    first-round notarized 2.46 s against a 1.80 s direct call, all for
    the 500 B message / 1 KB response workload.
    """
    workload = SessionWorkload(rounds=6)
    points = [
        CalibrationPoint("naive-setup", 6, 9.8),
        CalibrationPoint("optimized-setup", 6, 1.5),
        CalibrationPoint("naive-per-message", 6, 2.1),
        CalibrationPoint("optimized-per-message", 6, 2.5),
        CalibrationPoint("first-round", 1, 2.46),
    ]
    model = calibrate(
        points,
        api_latency=1.80,
        workload=workload,
        base_capacity=base_capacity,
        session_cap=session_cap,
    )
    return model, workload
