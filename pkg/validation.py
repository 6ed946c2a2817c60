"""
Alignment checks.

``validate_reference`` enforces that every block is justified upward to a
capability, that inheritance trees are well formed and that executable
behavior sits only on concrete systems. ``validate_specific`` checks that a
scenario model is a faithful instantiation of its reference model.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Set, Tuple

import structlog

from derivation import choices_by_service
from diagnostics import Diagnostic, ForgeError, Severity
from metamodel import (
    REF_PARAM, Block, BlockKind, Model, ModelKind, RelationKind, check_relation,
    param_declarations, scalar_matches,
)
from metrics import diagnostics_counter

logger = structlog.get_logger(__name__)

_UNJUSTIFIED_OK = frozenset({BlockKind.CAPABILITY, BlockKind.OPERATIONAL_PERFORMER})


def _sorted(found: Iterable[Diagnostic]) -> List[Diagnostic]:
    result = sorted(set(found), key=lambda d: (d.severity is not Severity.ERROR, d.code, d.subject, d.message))
    for d in result:
        diagnostics_counter.labels(code=d.code).inc()
    return result


def _cycles(model: Model, kind: RelationKind) -> List[List[str]]:
    """Strongly connected components with more than one block (Tarjan)"""
    graph: Dict[str, List[str]] = {b.id: model.outgoing(b.id, kind) for b in model.blocks}
    index: Dict[str, int] = {}
    low: Dict[str, int] = {}
    on_stack: Set[str] = set()
    stack: List[str] = []
    components: List[List[str]] = []
    counter = [0]

    def visit(node: str) -> None:
        index[node] = low[node] = counter[0]
        counter[0] += 1
        stack.append(node)
        on_stack.add(node)
        for nxt in graph.get(node, []):
            if nxt not in graph:
                continue
            if nxt not in index:
                visit(nxt)
                low[node] = min(low[node], low[nxt])
            elif nxt in on_stack:
                low[node] = min(low[node], index[nxt])
        if low[node] == index[node]:
            component = []
            while True:
                member = stack.pop()
                on_stack.discard(member)
                component.append(member)
                if member == node:
                    break
            if len(component) > 1:
                components.append(sorted(component))

    for node in sorted(graph):
        if node not in index:
            visit(node)
    return sorted(components)


def validate_reference(model: Model) -> List[Diagnostic]:
    if model.kind is not ModelKind.REFERENCE:
        logger.warning("Validating a non-reference model as reference", model_id=model.id)
    found: List[Diagnostic] = []

    # edge legality: trace kinds, inheritance kinds, layer rules
    for rel in model.relations:
        found.extend(check_relation(model, rel))

    for block in model.blocks:
        if block.kind not in _UNJUSTIFIED_OK and not model.outgoing(block.id, RelationKind.TRACE):
            found.append(Diagnostic.error('E-TRACE-MISSING', block.id,
                                          f"{block.kind.value} has no trace to an upper-layer block"))
        if block.kind is BlockKind.SYSTEM and len(model.parents_of(block.id)) > 1:
            found.append(Diagnostic.error('E-INHERIT-KIND', block.id,
                                          f"inherits from {', '.join(model.parents_of(block.id))}; a tree allows one parent"))

    for kind in (RelationKind.TRACE, RelationKind.INHERITANCE):
        for component in _cycles(model, kind):
            found.append(Diagnostic.error('E-CYCLE', component[0],
                                          f"{kind.value} cycle through {', '.join(component)}"))

    for binding in model.behaviors:
        block = model.block(binding.block_id)
        if block is None:
            continue
        if block.kind is not BlockKind.SYSTEM:
            found.append(Diagnostic.error('E-NOT-SYSTEM', block.id,
                                          f"behavior bound to a {block.kind.value} block"))
        elif block.abstract:
            found.append(Diagnostic.error('E-ABSTRACT-BEHAVIOR', block.id, "abstract blocks carry no behavior"))

    for block in model.blocks_of_kind(BlockKind.SYSTEM):
        if not block.abstract and model.binding_for(block.id) is None:
            found.append(Diagnostic.warning('W-NO-BEHAVIOR', block.id, "concrete System has no behavior binding"))

    for block in model.blocks:
        if not any(v.layer is block.layer and block.id in v.members for v in model.views):
            found.append(Diagnostic.warning('W-UNPRESENTED', block.id,
                                            f"not shown in any {block.layer.value} view"))

    result = _sorted(found)
    logger.info("Reference model validated", model_id=model.id, diagnostics=len(result),
                errors=sum(1 for d in result if d.is_error))
    return result


def _ref_of(block: Block, reference: Model) -> Block:
    ref = block.params.get(REF_PARAM)
    if not isinstance(ref, str):
        return None
    target = reference.block(ref)
    if target is None or target.kind is not block.kind:
        return None
    return target


def validate_specific(specific: Model, reference: Model) -> List[Diagnostic]:
    found: List[Diagnostic] = []
    if specific.kind is not ModelKind.SPECIFIC or specific.parent_ref != reference.id:
        found.append(Diagnostic.error('E-DANGLING-REF', specific.id,
                                      f"parent_ref {specific.parent_ref!r} does not name reference {reference.id!r}"))

    linked: Dict[str, str] = {}
    for block in specific.blocks:
        source = _ref_of(block, reference)
        if source is None:
            found.append(Diagnostic.error('E-DANGLING-REF', block.id,
                                          f"ref {block.params.get(REF_PARAM)!r} is not a {block.kind.value} of {reference.id}"))
            continue
        linked[block.id] = source.id
        if block.abstract or source.abstract:
            found.append(Diagnostic.error('E-ABSTRACT-IN-SPECIFIC', block.id, "abstract blocks cannot be instantiated"))
        for name, decl in sorted(param_declarations(reference, source.id).items()):
            if name not in block.params:
                found.append(Diagnostic.error('E-PARAM-MISSING', block.id, f"required parameter {name} has no value"))
            elif not scalar_matches(block.params[name], decl.type):
                found.append(Diagnostic.error('E-PARAM-TYPE', block.id,
                                              f"parameter {name} is not of type {decl.type}"))

    refs = list(linked.values())
    for service_id, leaves in sorted(choices_by_service(reference).items()):
        present = sorted(block_id for block_id, ref in linked.items() if ref in leaves)
        if not present:
            found.append(Diagnostic.error('E-SELECTION-MISSING', service_id,
                                          f"no block realizes {service_id} (choices: {', '.join(leaves) or 'none'})"))
        elif len(present) > 1:
            found.append(Diagnostic.error('E-SELECTION-AMBIGUOUS', service_id,
                                          f"{', '.join(present)} all realize {service_id}"))

    result = _sorted(found)
    logger.info("Specific model validated", model_id=specific.id, reference_id=reference.id,
                blocks=len(refs), diagnostics=len(result))
    return result


@dataclass(frozen=True)
class TraceChain:
    blocks: Tuple[Block, ...]
    complete: bool

    @property
    def ids(self) -> List[str]:
        return [b.id for b in self.blocks]

    def __len__(self) -> int:
        return len(self.blocks)


def trace_chain(model: Model, block_id: str) -> TraceChain:
    """Walk Trace edges upward to a Capability, taking the smallest target id at each step"""
    block = model.block(block_id)
    if block is None:
        raise ForgeError('E-UNKNOWN-BLOCK', f"no block {block_id!r} in {model.id}", subject=block_id)

    chain = [block]
    seen = {block.id}
    while chain[-1].kind is not BlockKind.CAPABILITY:
        targets = [t for t in model.outgoing(chain[-1].id, RelationKind.TRACE) if model.has_block(t)]
        if not targets or targets[0] in seen:
            return TraceChain(blocks=tuple(chain), complete=False)
        seen.add(targets[0])
        chain.append(model.block(targets[0]))
    return TraceChain(blocks=tuple(chain), complete=True)
