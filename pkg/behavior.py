"""
Executable behavior.

Concrete System blocks are bound to builtin kernels or to external hooks.
``assemble_artifact`` turns a validated specific model into an
``ExecutableArtifact`` (members plus parameter schema) and ``run_artifact``
interprets it on the builtin runtime.
"""

from contextlib import nullcontext
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import structlog

from diagnostics import Diagnostic, ForgeError, has_errors
from hook_utils import ExecClassifierHook, HttpClassifierHook
from metamodel import (
    REF_PARAM, BehaviorBinding, BindingKind, BlockKind, Model, Role, Scalar, param_declarations,
    scalar_matches,
)
from metrics import classifications_counter, runs_counter
from simkernel import (
    NoiseOnset, SimParams, SimResult, Sink, TargetSpec, Vec3, active_velocity, classify,
    run_simulation, step,
)
from validation import validate_specific

logger = structlog.get_logger(__name__)


class Runtime(str, Enum):
    BUILTIN = 'Builtin'


@dataclass(frozen=True)
class BuiltinKernel:
    name: str
    role: Role
    func: Callable


KERNELS: Dict[str, BuiltinKernel] = {}


def register_kernel(name: str, role: Role, func: Callable) -> BuiltinKernel:
    kernel = BuiltinKernel(name=name, role=role, func=func)
    KERNELS[name] = kernel
    return kernel


def _static_targets(values: Mapping[str, Scalar]) -> List[TargetSpec]:
    targets = []
    for name, value in values.items():
        if name.startswith('s_') and name[2:].isdigit():
            j = int(name[2:])
            truth = values.get(f'truth_{j}')
            if truth not in ('wanted', 'other'):
                raise ForgeError('E-PARAM-TYPE', f"truth_{j} must be 'wanted' or 'other', got {truth!r}",
                                 subject=f'truth_{j}')
            targets.append(TargetSpec(j=j, s=value, wanted=truth == 'wanted'))
    return targets


register_kernel('auv.kinematics', Role.PLANT, step)
register_kernel('mcu.deadbeat', Role.CONTROLLER, active_velocity)
register_kernel('tcu.threshold', Role.CLASSIFIER, classify)
register_kernel('targets.static', Role.TARGET, _static_targets)

# Only classification is delegated to external code
_HOOK_CAPABLE_ROLES = frozenset({Role.CLASSIFIER})


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    tunable: bool
    default: Optional[Scalar]
    block_id: str


@dataclass(frozen=True)
class ArtifactMember:
    block_id: str
    binding: BehaviorBinding


@dataclass(frozen=True)
class ExecutableArtifact:
    id: str
    model_id: str
    runtime: Runtime
    members: Tuple[ArtifactMember, ...]
    param_schema: Tuple[ParamSpec, ...]

    def member_for(self, role: Role) -> List[ArtifactMember]:
        return [m for m in self.members if m.binding.role is role]

    def param(self, name: str) -> Optional[ParamSpec]:
        for spec in self.param_schema:
            if spec.name == name:
                return spec
        return None

    @property
    def tunables(self) -> List[ParamSpec]:
        return [p for p in self.param_schema if p.tunable]

    @property
    def constants(self) -> List[ParamSpec]:
        return [p for p in self.param_schema if not p.tunable]


def attach_behavior(model: Model, binding: BehaviorBinding) -> Tuple[Model, List[Diagnostic]]:
    """Record a binding; replacing an existing one is reported as W-REBIND"""
    block = model.block(binding.block_id)
    if block is None:
        raise ForgeError('E-UNKNOWN-BLOCK', f"no block {binding.block_id!r} in {model.id}", subject=binding.block_id)
    if block.kind is not BlockKind.SYSTEM:
        raise ForgeError('E-NOT-SYSTEM', f"{block.kind.value} blocks carry no behavior", subject=block.id)
    if block.abstract:
        raise ForgeError('E-ABSTRACT-BEHAVIOR', "abstract blocks carry no behavior", subject=block.id)

    notes: List[Diagnostic] = []
    previous = model.binding_for(block.id)
    if previous is not None:
        notes.append(Diagnostic.warning('W-REBIND', block.id,
                                        f"replaced {previous.kind.value} {previous.target} with {binding.kind.value} {binding.target}"))
        logger.warning("Behavior rebound", block_id=block.id, previous=previous.target, target=binding.target)
    logger.info("Behavior attached", block_id=block.id, kind=binding.kind.value, target=binding.target)
    return model.with_binding(binding), notes


def _check_runtime(binding: BehaviorBinding) -> Optional[Diagnostic]:
    if binding.kind is BindingKind.BUILTIN:
        kernel = KERNELS.get(binding.target)
        if kernel is None:
            return Diagnostic.error('E-UNKNOWN-KERNEL', binding.block_id, f"no builtin kernel {binding.target!r}")
        if kernel.role is not binding.role:
            return Diagnostic.error('E-RUNTIME-MISMATCH', binding.block_id,
                                    f"kernel {kernel.name} implements {kernel.role.value}, bound as {binding.role.value}")
        return None
    if binding.role not in _HOOK_CAPABLE_ROLES:
        return Diagnostic.error('E-RUNTIME-MISMATCH', binding.block_id,
                                f"{binding.kind.value} hooks can only serve the Classifier role")
    return None


def _abort(found: List[Diagnostic]) -> None:
    first = found[0]
    raise ForgeError(first.code, first.message, subject=first.subject, diagnostics=found)


def assemble_artifact(specific: Model, reference: Model) -> ExecutableArtifact:
    problems = [d for d in validate_specific(specific, reference) if d.is_error]
    if problems:
        _abort(problems)

    found: List[Diagnostic] = []
    members: List[ArtifactMember] = []
    for block in specific.blocks:
        binding = specific.binding_for(block.id)
        if binding is None:
            found.append(Diagnostic.error('E-LEAF-NO-BEHAVIOR', block.id, "concrete System has no behavior binding"))
            continue
        mismatch = _check_runtime(binding)
        if mismatch:
            found.append(mismatch)
        members.append(ArtifactMember(block_id=block.id, binding=binding))

    counts = {role: sum(1 for m in members if m.binding.role is role) for role in Role}
    for role in (Role.PLANT, Role.CONTROLLER, Role.CLASSIFIER):
        if counts[role] != 1:
            found.append(Diagnostic.error('E-ROLE-CARDINALITY', specific.id,
                                          f"expected exactly one {role.value}, found {counts[role]}"))
    if counts[Role.TARGET] < 1:
        found.append(Diagnostic.error('E-ROLE-CARDINALITY', specific.id, "expected at least one Target"))

    schema: Dict[str, ParamSpec] = {}
    for member in members:
        block = specific.block(member.block_id)
        for name, decl in sorted(param_declarations(reference, block.params[REF_PARAM]).items()):
            if name in schema:
                found.append(Diagnostic.error('E-PARAM-CONFLICT', member.block_id,
                                              f"parameter {name} is also declared by {schema[name].block_id}"))
                continue
            schema[name] = ParamSpec(name=name, type=decl.type, tunable=decl.tunable,
                                     default=block.params.get(name), block_id=member.block_id)

    if has_errors(found):
        _abort([d for d in found if d.is_error])

    artifact = ExecutableArtifact(
        id=f"{specific.id}.artifact",
        model_id=specific.id,
        runtime=Runtime.BUILTIN,
        members=tuple(members),
        param_schema=tuple(schema[name] for name in sorted(schema)),
    )
    logger.info("Artifact assembled", artifact_id=artifact.id, members=[m.block_id for m in members],
                params=len(artifact.param_schema))
    return artifact


def coerce_value(spec: ParamSpec, value: Any) -> Scalar:
    """Type-check a supplied value against its schema entry"""
    if spec.type == 'vec3' and isinstance(value, (list, tuple)) and len(value) == 3 \
            and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value):
        value = Vec3.of(value)
    if not scalar_matches(value, spec.type):
        raise ForgeError('E-PARAM-TYPE', f"{spec.name} expects {spec.type}, got {value!r}", subject=spec.name)
    return value


def resolve_params(artifact: ExecutableArtifact, params: Mapping[str, Any]) -> Dict[str, Scalar]:
    unknown = sorted(set(params) - {p.name for p in artifact.param_schema})
    if unknown:
        raise ForgeError('E-PARAM-UNKNOWN', f"not in the artifact schema: {', '.join(unknown)}", subject=unknown[0])
    values: Dict[str, Scalar] = {}
    for spec in artifact.param_schema:
        value = params.get(spec.name, spec.default)
        if value is None:
            raise ForgeError('E-PARAM-MISSING', f"no value for {spec.name}", subject=spec.name)
        values[spec.name] = coerce_value(spec, value)
    return values


def build_sim_params(values: Mapping[str, Scalar]) -> SimParams:
    for required in ('t_i', 't_n', 'h', 'N0', 'dN'):
        if required not in values:
            raise ForgeError('E-PARAM-MISSING', f"the simulation needs {required}", subject=required)
    onset = values.get('noise_onset', NoiseOnset.AFTER_ACTIVATION.value)
    try:
        onset = NoiseOnset(onset)
    except ValueError:
        raise ForgeError('E-PARAM-TYPE', f"noise_onset must be 'at' or 'after', got {onset!r}", subject='noise_onset')

    optional = {name: values[name] for name in ('t0', 'dt', 'p_desired0', 'v_desired', 'v_passive') if name in values}
    return SimParams(
        t_i=values['t_i'],
        t_n=values['t_n'],
        h=values['h'],
        N0=values['N0'],
        dN=values['dN'],
        targets=tuple(_static_targets(values)),
        noise_onset=onset,
        **optional,
    )


def _kernel_func(artifact: ExecutableArtifact, role: Role) -> Callable:
    return KERNELS[artifact.member_for(role)[0].binding.target].func


def _classifier_for(artifact: ExecutableArtifact):
    binding = artifact.member_for(Role.CLASSIFIER)[0].binding
    if binding.kind is BindingKind.EXEC:
        return ExecClassifierHook(binding.target)
    if binding.kind is BindingKind.HTTP:
        return HttpClassifierHook(binding.target)
    return nullcontext(KERNELS[binding.target].func)


class RecordingSink:
    """Collects (event, payload) pairs in emission order"""

    def __init__(self):
        self.events: List[Tuple[str, Any]] = []

    def __call__(self, event: str, payload: Any) -> None:
        self.events.append((event, payload))


def run_artifact(artifact: ExecutableArtifact, params: Mapping[str, Any], sink: Optional[Sink] = None,
                 policy: Optional[NoiseOnset] = None) -> SimResult:
    """Resolve parameters, then interpret the artifact; ``policy`` overrides the noise_onset value"""
    values = resolve_params(artifact, params)
    if policy is not None:
        values['noise_onset'] = NoiseOnset(policy).value
    sim_params = build_sim_params(values)
    runs_counter.labels(runtime=artifact.runtime.value).inc()
    logger.info("Artifact run started", artifact_id=artifact.id, t_i=sim_params.t_i, h=sim_params.h,
                noise_onset=sim_params.noise_onset.value)

    with _classifier_for(artifact) as classifier:
        result = run_simulation(sim_params, sink=sink, classifier=classifier,
                                controller=_kernel_func(artifact, Role.CONTROLLER),
                                plant=_kernel_func(artifact, Role.PLANT))

    for record in result.steps:
        for c in record.classifications:
            classifications_counter.labels(error=c.error.value).inc()
    logger.info("Artifact run finished", artifact_id=artifact.id, fp=result.report.fp_count,
                fn=result.report.fn_count)
    return result
