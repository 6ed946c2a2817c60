"""
Scenario derivation.

Inheritance trees of System blocks under a service are alternative groups;
a selection picks one concrete leaf per service and ``derive_specific``
instantiates those leaves as linked copies in a new specific model.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import structlog
from jsonschema import Draft7Validator

from diagnostics import ForgeError
from metamodel import (
    REF_PARAM, SERVICE_KINDS, Block, BlockKind, Layer, Model, ModelKind, Relation, RelationKind,
    Scalar, View, Viewpoint, inherited_values, param_declarations, scalar_matches,
)
from simkernel import Vec3
from store import loads_strict

logger = structlog.get_logger(__name__)

CONFIGURATION_VIEW = 'configuration'

SELECTION_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["select"],
    "properties": {
        "select": {"type": "object", "additionalProperties": {"type": "string", "minLength": 1}},
        "params": {
            "type": "object",
            "propertyNames": {"pattern": "^[^.]+\\.[^.]+$"},
            "additionalProperties": {
                "oneOf": [
                    {"type": "number"},
                    {"type": "string"},
                    {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}}
                ]
            }
        }
    }
}


@dataclass(frozen=True)
class AlternativeGroup:
    service_id: str
    root_id: str
    leaves: Tuple[str, ...]

    @property
    def usable(self) -> bool:
        return bool(self.leaves)


@dataclass(frozen=True)
class Selection:
    choices: Mapping[str, str] = field(default_factory=dict)
    overrides: Mapping[Tuple[str, str], Scalar] = field(default_factory=dict)


def alternative_groups(reference: Model) -> List[AlternativeGroup]:
    groups: List[AlternativeGroup] = []
    for system in reference.blocks_of_kind(BlockKind.SYSTEM):
        ancestors = reference.ancestors(system.id)
        for service_id in reference.outgoing(system.id, RelationKind.TRACE):
            service = reference.block(service_id)
            if service is None or service.kind not in SERVICE_KINDS:
                continue
            # a System below an ancestor serving the same service belongs to that ancestor's group
            if any(service_id in reference.outgoing(a, RelationKind.TRACE) for a in ancestors):
                continue
            tree = {system.id} | reference.descendants(system.id)
            leaves = tuple(sorted(
                b for b in tree
                if reference.has_block(b) and reference.block(b).kind is BlockKind.SYSTEM
                and not reference.block(b).abstract
            ))
            groups.append(AlternativeGroup(service_id=service_id, root_id=system.id, leaves=leaves))
    return sorted(groups, key=lambda g: (g.service_id, g.root_id))


def choices_by_service(reference: Model) -> Dict[str, Tuple[str, ...]]:
    """Union of group leaves per served service"""
    merged: Dict[str, set] = {}
    for group in alternative_groups(reference):
        merged.setdefault(group.service_id, set()).update(group.leaves)
    return {service_id: tuple(sorted(leaves)) for service_id, leaves in merged.items()}


def _resolve_choices(reference: Model, sel: Selection) -> Dict[str, str]:
    available = choices_by_service(reference)
    resolved: Dict[str, str] = {}

    for service_id, chosen in sorted(sel.choices.items()):
        if service_id not in available:
            raise ForgeError('E-SELECTION-FOREIGN', f"{service_id} is not served by any System group",
                             subject=service_id)
        block = reference.block(chosen)
        if block is not None and block.kind is BlockKind.SYSTEM and block.abstract:
            raise ForgeError('E-SELECTION-ABSTRACT', f"{chosen} is abstract and cannot be instantiated",
                             subject=service_id)
        if chosen not in available[service_id]:
            raise ForgeError('E-SELECTION-FOREIGN',
                             f"{chosen} is not one of {', '.join(available[service_id]) or 'no options'}",
                             subject=service_id)
        resolved[service_id] = chosen

    for service_id, leaves in sorted(available.items()):
        if service_id in resolved:
            continue
        if len(leaves) != 1:
            raise ForgeError('E-SELECTION-MISSING',
                             f"choose one of {', '.join(leaves) or 'no concrete System (group unusable)'}",
                             subject=service_id)
        resolved[service_id] = leaves[0]

    chosen_ids = set(resolved.values())
    for service_id, leaves in sorted(available.items()):
        realizing = sorted(chosen_ids.intersection(leaves))
        if len(realizing) > 1:
            raise ForgeError('E-SELECTION-AMBIGUOUS', f"{', '.join(realizing)} all realize {service_id}",
                             subject=service_id)
    return resolved


def derive_specific(reference: Model, sel: Selection, model_id: str) -> Model:
    resolved = _resolve_choices(reference, sel)
    chosen = sorted(set(resolved.values()))

    for (block_id, name), value in sorted(sel.overrides.items()):
        if block_id not in chosen:
            raise ForgeError('E-SELECTION-FOREIGN', f"override for unselected block {block_id}",
                             subject=f"{block_id}.{name}")
        decl = param_declarations(reference, block_id).get(name)
        if decl is None:
            raise ForgeError('E-SELECTION-FOREIGN', f"{block_id} declares no parameter {name}",
                             subject=f"{block_id}.{name}")
        if not scalar_matches(value, decl.type):
            raise ForgeError('E-PARAM-TYPE', f"{name} expects {decl.type}, got {value!r}",
                             subject=f"{block_id}.{name}")

    blocks: List[Block] = []
    for block_id in chosen:
        source = reference.block(block_id)
        params: Dict[str, Scalar] = inherited_values(reference, block_id)
        params.update({name: value for (owner, name), value in sel.overrides.items() if owner == block_id})
        for name in sorted(param_declarations(reference, block_id)):
            if name not in params:
                raise ForgeError('E-PARAM-MISSING', f"{name} has neither a default nor an override",
                                 subject=block_id)
        params[REF_PARAM] = block_id
        blocks.append(Block(id=block_id, name=source.name, kind=source.kind, abstract=False,
                            params=params, doc=source.doc))

    selected = set(chosen)
    relations = [
        Relation(kind=r.kind, source=r.source, target=r.target)
        for r in reference.relations
        if r.kind is RelationKind.CONNECTIVITY and r.source in selected and r.target in selected
    ]
    behaviors = [reference.binding_for(b) for b in chosen if reference.binding_for(b) is not None]
    view = View(name=CONFIGURATION_VIEW, viewpoint=Viewpoint.CONNECTIVITY, layer=Layer.RESOURCES,
                members=tuple(chosen))

    specific = Model(
        id=model_id,
        kind=ModelKind.SPECIFIC,
        parent_ref=reference.id,
        blocks=tuple(blocks),
        relations=tuple(relations),
        views=(view,),
        behaviors=tuple(behaviors),
    )
    logger.info("Specific model derived", model_id=model_id, reference_id=reference.id,
                selected=chosen, overrides=len(sel.overrides))
    return specific


class CoverageStatus:
    RESOLVED = 'resolved'
    MISSING = 'missing'
    AMBIGUOUS = 'ambiguous'


@dataclass(frozen=True)
class CoverageEntry:
    service_id: str
    status: str
    resolved_id: Optional[str] = None
    via: Tuple[str, ...] = ()


@dataclass(frozen=True)
class CoverageReport:
    entries: Tuple[CoverageEntry, ...]

    @property
    def complete(self) -> bool:
        return all(e.status == CoverageStatus.RESOLVED for e in self.entries)

    def entry(self, service_id: str) -> Optional[CoverageEntry]:
        for e in self.entries:
            if e.service_id == service_id:
                return e
        return None

    def render(self) -> List[str]:
        rows = [('service', 'status', 'realized by')]
        for e in self.entries:
            if e.resolved_id:
                realized = e.resolved_id
            elif e.via:
                realized = 'via ' + ', '.join(e.via)
            else:
                realized = '-'
            rows.append((e.service_id, e.status, realized))
        widths = [max(len(row[i]) for row in rows) for i in range(2)]
        lines = [f"{row[0]:<{widths[0]}}  {row[1]:<{widths[1]}}  {row[2]}" for row in rows]
        lines.append(f"complete: {'yes' if self.complete else 'no'}")
        return lines


def completeness(specific: Model, reference: Model) -> CoverageReport:
    """Resolution status of every service of the reference model"""
    available = choices_by_service(reference)
    linked = {b.id: b.params.get(REF_PARAM) for b in specific.blocks}
    services = reference.blocks_of_kind(*SERVICE_KINDS)
    direct: Dict[str, CoverageEntry] = {}

    for service in services:
        if service.id not in available:
            continue
        present = sorted(block_id for block_id, ref in linked.items() if ref in available[service.id])
        if len(present) == 1:
            direct[service.id] = CoverageEntry(service.id, CoverageStatus.RESOLVED, resolved_id=present[0])
        elif present:
            direct[service.id] = CoverageEntry(service.id, CoverageStatus.AMBIGUOUS, via=tuple(present))
        else:
            direct[service.id] = CoverageEntry(service.id, CoverageStatus.MISSING)

    entries: List[CoverageEntry] = []
    for service in services:
        if service.id in direct:
            entries.append(direct[service.id])
            continue
        # realized only through the service functions refining it
        refinements = [f for f in reference.incoming(service.id, RelationKind.TRACE)
                       if reference.block(f).kind is BlockKind.SERVICE_FUNCTION]
        statuses = [direct[f].status for f in refinements if f in direct]
        if refinements and len(statuses) == len(refinements) and all(s == CoverageStatus.RESOLVED for s in statuses):
            entries.append(CoverageEntry(service.id, CoverageStatus.RESOLVED, via=tuple(refinements)))
        else:
            entries.append(CoverageEntry(service.id, CoverageStatus.MISSING, via=tuple(refinements)))
    return CoverageReport(entries=tuple(entries))


def load_selection(path: Union[str, Path]) -> Selection:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        raise ForgeError('E-IO', f"cannot read {path}: {e}", subject=str(path))
    document = loads_strict(text, source=str(path))

    errors = sorted(Draft7Validator(SELECTION_SCHEMA).iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        raise ForgeError('E-PARSE', errors[0].message, subject=str(path))

    overrides: Dict[Tuple[str, str], Scalar] = {}
    for key, value in document.get('params', {}).items():
        block_id, _, name = key.partition('.')
        overrides[(block_id, name)] = Vec3.of(value) if isinstance(value, list) else value
    return Selection(choices=dict(document['select']), overrides=overrides)
