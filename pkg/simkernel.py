"""
Discrete-time AUV simulation kernel.

Kinematics with constant drift, a deadbeat movement control unit (MCU) that
activates at ``t_i`` and a threshold target classification unit (TCU) whose
background noise rises once the MCU is running. Every run is scored by its
false positives and false negatives.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import structlog

from diagnostics import ForgeError

logger = structlog.get_logger(__name__)

Number = Union[int, float]


def format_number(value: Number) -> str:
    """Integral floats print without a fractional part so reports stay stable"""
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class Vec3:
    """Vector (x, y, z): x is width, y is height, z is depth

    Components stay plain Python numbers; arithmetic goes through numpy and
    comes back with ``tolist()``, so integer inputs give integer results.
    """
    x: Number = 0
    y: Number = 0
    z: Number = 0

    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_array(cls, values: np.ndarray) -> 'Vec3':
        return cls.of(np.asarray(values).tolist())

    def __add__(self, other: 'Vec3') -> 'Vec3':
        return Vec3.from_array(self.array() + other.array())

    def __sub__(self, other: 'Vec3') -> 'Vec3':
        return Vec3.from_array(self.array() - other.array())

    def __mul__(self, k: Number) -> 'Vec3':
        return Vec3.from_array(self.array() * k)

    __rmul__ = __mul__

    def __truediv__(self, k: Number) -> 'Vec3':
        # integer components stay integers for the unit step
        if k == 1:
            return self
        return Vec3.from_array(self.array() / k)

    def __neg__(self) -> 'Vec3':
        return Vec3.from_array(-self.array())

    def __iter__(self) -> Iterator[Number]:
        return iter((self.x, self.y, self.z))

    def is_zero(self) -> bool:
        return not self.array().any()

    def as_list(self) -> List[Number]:
        return [self.x, self.y, self.z]

    @classmethod
    def of(cls, values) -> 'Vec3':
        x, y, z = values
        return cls(x, y, z)

    def __str__(self) -> str:
        return '(' + ', '.join(format_number(c) for c in self) + ')'


ZERO = Vec3(0, 0, 0)


class NoiseOnset(str, Enum):
    AT_ACTIVATION = 'at'        # literal reading: noise from t_i on
    AFTER_ACTIVATION = 'after'  # noise from t_i + 1 on, matches the reported run


class Decision(str, Enum):
    WANTED = 'wanted'
    OTHER = 'other'


class ErrorKind(str, Enum):
    NONE = 'none'
    FALSE_POSITIVE = 'false_positive'
    FALSE_NEGATIVE = 'false_negative'


@dataclass(frozen=True)
class TargetSpec:
    j: int
    s: Number
    wanted: bool


@dataclass(frozen=True)
class SimParams:
    t_i: int
    t_n: int
    h: Number
    N0: Number
    dN: Number
    targets: Tuple[TargetSpec, ...]
    p_desired0: Vec3 = ZERO
    v_desired: Vec3 = ZERO
    v_passive: Vec3 = ZERO
    t0: int = 0
    dt: Number = 1
    noise_onset: NoiseOnset = NoiseOnset.AFTER_ACTIVATION

    def __post_init__(self):
        object.__setattr__(self, 'targets', tuple(sorted(self.targets, key=lambda target: target.j)))
        object.__setattr__(self, 'noise_onset', NoiseOnset(self.noise_onset))
        if not (0 <= self.t0 <= self.t_i <= self.t_n):
            raise ForgeError('E-SIM-PARAMS', f"require 0 <= t0 <= t_i <= t_n, got t0={self.t0} t_i={self.t_i} t_n={self.t_n}")
        if not self.dt > 0:
            raise ForgeError('E-SIM-PARAMS', f"dt must be positive, got {self.dt}")
        if not self.targets:
            raise ForgeError('E-SIM-PARAMS', "at least one target is required")
        indices = [target.j for target in self.targets]
        if indices != list(range(len(indices))):
            raise ForgeError('E-SIM-PARAMS', f"target indices must be 0..m without gaps, got {indices}")

    @property
    def times(self) -> range:
        return range(self.t0, self.t_n + 1)


@dataclass(frozen=True)
class SimState:
    t: int
    p_desired: Vec3
    p_actual: Vec3
    p_deviation: Vec3
    v_active: Vec3
    v_actual: Vec3


@dataclass(frozen=True)
class Classification:
    t: int
    j: int
    s: Number
    noise: Number
    decision: Decision
    truth: bool
    error: ErrorKind


@dataclass(frozen=True)
class StepRecord:
    """Snapshot at t plus the velocities commanded for [t, t+1) and the classifications at t"""
    t: int
    state: SimState
    v_active: Vec3
    v_actual: Vec3
    classifications: Tuple[Classification, ...]


@dataclass(frozen=True)
class ScoreReport:
    fp_count: int = 0
    fn_count: int = 0
    first_fp_t: Optional[int] = None
    first_fn_t: Optional[int] = None

    def render(self) -> List[str]:
        fp_line = f"false positives: {self.fp_count}"
        if self.first_fp_t is not None:
            fp_line += f" (first at t={self.first_fp_t})"
        return [fp_line, f"false negatives: {self.fn_count}"]


@dataclass(frozen=True)
class SimResult:
    steps: Tuple[StepRecord, ...]
    report: ScoreReport = field(default_factory=ScoreReport)


Classifier = Callable[[SimParams, int, TargetSpec], Classification]
Controller = Callable[[SimParams, int, Vec3], Vec3]
Plant = Callable[[SimParams, SimState, Controller], SimState]
Sink = Callable[[str, Any], None]


def _check_time(params: SimParams, t: int) -> None:
    if not params.t0 <= t <= params.t_n:
        raise ForgeError('E-RANGE', f"t={t} outside {params.t0}..{params.t_n}")


def desired_position(params: SimParams, t: int) -> Vec3:
    _check_time(params, t)
    return params.p_desired0 + params.v_desired * ((t - params.t0) * params.dt)


def active_velocity(params: SimParams, t: int, p_deviation: Vec3) -> Vec3:
    _check_time(params, t)
    if t < params.t_i:
        return params.v_desired
    return params.v_desired - params.v_passive - p_deviation / params.dt


def initial_state(params: SimParams) -> SimState:
    v_active = params.v_desired
    return SimState(
        t=params.t0,
        p_desired=params.p_desired0,
        p_actual=params.p_desired0,
        p_deviation=ZERO,
        v_active=v_active,
        v_actual=v_active + params.v_passive,
    )


def step(params: SimParams, state: SimState, controller: Optional[Controller] = None) -> SimState:
    """Advance one time step; the returned state records the velocities applied on [t, t+1)"""
    if state.t >= params.t_n:
        raise ForgeError('E-RANGE', f"cannot step past t_n={params.t_n}")
    v_active = (controller or active_velocity)(params, state.t, state.p_deviation)
    v_actual = v_active + params.v_passive
    p_actual = state.p_actual + v_actual * params.dt
    p_desired = desired_position(params, state.t + 1)
    return SimState(
        t=state.t + 1,
        p_desired=p_desired,
        p_actual=p_actual,
        p_deviation=p_actual - p_desired,
        v_active=v_active,
        v_actual=v_actual,
    )


def iterate_states(params: SimParams) -> Iterator[SimState]:
    state = initial_state(params)
    yield state
    while state.t < params.t_n:
        state = step(params, state)
        yield state


def noise_at(params: SimParams, t: int) -> Number:
    _check_time(params, t)
    if params.noise_onset is NoiseOnset.AT_ACTIVATION:
        active = t >= params.t_i
    else:
        active = t > params.t_i
    return params.N0 + params.dN if active else params.N0


def make_classification(t: int, target: TargetSpec, noise: Number, decision: Decision) -> Classification:
    """Attach ground truth and the resulting error kind to a decision"""
    if decision is Decision.WANTED and not target.wanted:
        error = ErrorKind.FALSE_POSITIVE
    elif decision is Decision.OTHER and target.wanted:
        error = ErrorKind.FALSE_NEGATIVE
    else:
        error = ErrorKind.NONE
    return Classification(t=t, j=target.j, s=target.s, noise=noise, decision=decision,
                          truth=target.wanted, error=error)


def classify(params: SimParams, t: int, target: TargetSpec) -> Classification:
    noise = noise_at(params, t)
    decision = Decision.WANTED if target.s + noise >= params.h else Decision.OTHER
    return make_classification(t, target, noise, decision)


def score(steps) -> ScoreReport:
    fp_times = []
    fn_times = []
    for record in steps:
        for c in record.classifications:
            if c.error is ErrorKind.FALSE_POSITIVE:
                fp_times.append(c.t)
            elif c.error is ErrorKind.FALSE_NEGATIVE:
                fn_times.append(c.t)
    return ScoreReport(
        fp_count=len(fp_times),
        fn_count=len(fn_times),
        first_fp_t=min(fp_times) if fp_times else None,
        first_fn_t=min(fn_times) if fn_times else None,
    )


def run_simulation(params: SimParams, sink: Optional[Sink] = None, classifier: Optional[Classifier] = None,
                   controller: Optional[Controller] = None, plant: Optional[Plant] = None) -> SimResult:
    """Run t0..t_n; one StepRecord per t is emitted to the sink before the final report

    ``plant`` is called as ``plant(params, state, controller)`` and must return the next state.
    """
    classifier = classifier or classify
    controller = controller or active_velocity
    plant = plant or step
    records: List[StepRecord] = []
    state = initial_state(params)
    logger.debug("Simulation started", t0=params.t0, t_n=params.t_n, targets=len(params.targets),
                 noise_onset=params.noise_onset.value)

    while True:
        v_active = controller(params, state.t, state.p_deviation)
        classifications = tuple(classifier(params, state.t, target) for target in params.targets)
        record = StepRecord(
            t=state.t,
            state=state,
            v_active=v_active,
            v_actual=v_active + params.v_passive,
            classifications=classifications,
        )
        records.append(record)
        if sink:
            sink('step', record)
        if state.t >= params.t_n:
            break
        state = plant(params, state, controller)

    report = score(records)
    if sink:
        sink('report', report)
    logger.debug("Simulation finished", fp=report.fp_count, fn=report.fn_count)
    return SimResult(steps=tuple(records), report=report)


def result_to_dict(result: SimResult) -> Dict[str, Any]:
    """JSON-ready view of a SimResult"""
    def vec(v: Vec3) -> List[Number]:
        return v.as_list()

    return {
        'steps': [
            {
                't': r.t,
                'p_desired': vec(r.state.p_desired),
                'p_actual': vec(r.state.p_actual),
                'p_deviation': vec(r.state.p_deviation),
                'v_active': vec(r.v_active),
                'v_actual': vec(r.v_actual),
                'classifications': [
                    {
                        'j': c.j, 's': c.s, 'noise': c.noise,
                        'decision': c.decision.value, 'truth': c.truth, 'error': c.error.value
                    }
                    for c in r.classifications
                ],
            }
            for r in result.steps
        ],
        'report': {
            'fp_count': result.report.fp_count,
            'fn_count': result.report.fn_count,
            'first_fp_t': result.report.first_fp_t,
            'first_fn_t': result.report.first_fn_t,
        },
    }
