"""
Layered metamodel: four architecture layers, six block kinds, typed relations
and presentation views, together with the legality rules for derivation
traces between layers.

All model types are frozen dataclasses. ``Model`` keeps its collections in
canonical order so two models with the same content compare equal whatever
order they were built in.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, List, Mapping, Optional, Set, Tuple, Union

from diagnostics import Diagnostic
from simkernel import Vec3

Scalar = Union[int, float, str, Vec3]


class Layer(str, Enum):
    STRATEGIC = 'Strategic'
    OPERATIONAL = 'Operational'
    SERVICES = 'Services'
    RESOURCES = 'Resources'

    @property
    def rank(self) -> int:
        """0 for Strategic down to 3 for Resources"""
        return list(Layer).index(self)


class BlockKind(str, Enum):
    CAPABILITY = 'Capability'
    OPERATIONAL_ACTIVITY = 'OperationalActivity'
    OPERATIONAL_PERFORMER = 'OperationalPerformer'
    SERVICE_SPECIFICATION = 'ServiceSpecification'
    SERVICE_FUNCTION = 'ServiceFunction'
    SYSTEM = 'System'


class RelationKind(str, Enum):
    TRACE = 'Trace'
    INHERITANCE = 'Inheritance'
    COMPOSITION = 'Composition'
    CONNECTIVITY = 'Connectivity'


class Viewpoint(str, Enum):
    TAXONOMY = 'Taxonomy'
    STRUCTURE = 'Structure'
    CONNECTIVITY = 'Connectivity'


class ModelKind(str, Enum):
    REFERENCE = 'Reference'
    SPECIFIC = 'Specific'


class BindingKind(str, Enum):
    BUILTIN = 'Builtin'
    EXEC = 'Exec'
    HTTP = 'Http'


class Role(str, Enum):
    PLANT = 'Plant'
    CONTROLLER = 'Controller'
    CLASSIFIER = 'Classifier'
    TARGET = 'Target'


_LAYERS: Dict[BlockKind, Layer] = {
    BlockKind.CAPABILITY: Layer.STRATEGIC,
    BlockKind.OPERATIONAL_ACTIVITY: Layer.OPERATIONAL,
    BlockKind.OPERATIONAL_PERFORMER: Layer.OPERATIONAL,
    BlockKind.SERVICE_SPECIFICATION: Layer.SERVICES,
    BlockKind.SERVICE_FUNCTION: Layer.SERVICES,
    BlockKind.SYSTEM: Layer.RESOURCES,
}

# (derived kind, source kind), matching the direction of Trace edges
_ALLOWED_TRACES: FrozenSet[Tuple[BlockKind, BlockKind]] = frozenset({
    (BlockKind.OPERATIONAL_ACTIVITY, BlockKind.CAPABILITY),
    (BlockKind.SERVICE_SPECIFICATION, BlockKind.OPERATIONAL_ACTIVITY),
    (BlockKind.SERVICE_FUNCTION, BlockKind.SERVICE_SPECIFICATION),
    (BlockKind.SYSTEM, BlockKind.SERVICE_SPECIFICATION),
    (BlockKind.SYSTEM, BlockKind.SERVICE_FUNCTION),
})

SERVICE_KINDS = frozenset({BlockKind.SERVICE_SPECIFICATION, BlockKind.SERVICE_FUNCTION})

PARAM_DECL_PREFIX = 'param:'
PARAM_TYPES = ('int', 'real', 'text', 'vec3')
REF_PARAM = 'ref'


def layer_of(kind: BlockKind) -> Layer:
    return _LAYERS[BlockKind(kind)]


def allowed_trace(source_kind: BlockKind, target_kind: BlockKind) -> bool:
    return (BlockKind(source_kind), BlockKind(target_kind)) in _ALLOWED_TRACES


@dataclass(frozen=True)
class Block:
    id: str
    name: str
    kind: BlockKind
    abstract: bool = False
    params: Mapping[str, Scalar] = field(default_factory=dict)
    doc: Optional[str] = None

    @property
    def layer(self) -> Layer:
        return layer_of(self.kind)


@dataclass(frozen=True)
class Relation:
    kind: RelationKind
    source: str
    target: str

    @property
    def ident(self) -> str:
        return f"{self.source}->{self.target}"

    def sort_key(self) -> Tuple[str, str, str]:
        return (self.kind.value, self.source, self.target)


@dataclass(frozen=True)
class View:
    name: str
    viewpoint: Viewpoint
    layer: Layer
    members: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'members', tuple(sorted(self.members)))


@dataclass(frozen=True)
class BehaviorBinding:
    block_id: str
    kind: BindingKind
    target: str
    role: Role


@dataclass(frozen=True)
class ParamDecl:
    name: str
    type: str
    tunable: bool = False


@dataclass(frozen=True)
class Model:
    id: str
    kind: ModelKind
    blocks: Tuple[Block, ...] = ()
    relations: Tuple[Relation, ...] = ()
    views: Tuple[View, ...] = ()
    behaviors: Tuple[BehaviorBinding, ...] = ()
    parent_ref: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'blocks', tuple(sorted(self.blocks, key=lambda b: b.id)))
        object.__setattr__(self, 'relations', tuple(sorted(self.relations, key=Relation.sort_key)))
        object.__setattr__(self, 'views', tuple(sorted(self.views, key=lambda v: v.name)))
        object.__setattr__(self, 'behaviors', tuple(sorted(self.behaviors, key=lambda b: b.block_id)))

    @cached_property
    def _index(self) -> Dict[str, Block]:
        return {b.id: b for b in self.blocks}

    def block(self, block_id: str) -> Optional[Block]:
        return self._index.get(block_id)

    def has_block(self, block_id: str) -> bool:
        return block_id in self._index

    def blocks_of_kind(self, *kinds: BlockKind) -> List[Block]:
        return [b for b in self.blocks if b.kind in kinds]

    def outgoing(self, block_id: str, kind: RelationKind) -> List[str]:
        return sorted(r.target for r in self.relations if r.kind is kind and r.source == block_id)

    def incoming(self, block_id: str, kind: RelationKind) -> List[str]:
        return sorted(r.source for r in self.relations if r.kind is kind and r.target == block_id)

    def parents_of(self, block_id: str) -> List[str]:
        return self.outgoing(block_id, RelationKind.INHERITANCE)

    def children_of(self, block_id: str) -> List[str]:
        return self.incoming(block_id, RelationKind.INHERITANCE)

    def ancestors(self, block_id: str) -> List[str]:
        """Inheritance ancestors, root first; follows the smallest parent id and stops on cycles"""
        chain: List[str] = []
        seen = {block_id}
        current = block_id
        while True:
            parents = [p for p in self.parents_of(current) if p not in seen]
            if not parents:
                break
            current = parents[0]
            seen.add(current)
            chain.append(current)
        return list(reversed(chain))

    def descendants(self, block_id: str) -> Set[str]:
        found: Set[str] = set()
        stack = [block_id]
        while stack:
            for child in self.children_of(stack.pop()):
                if child not in found and child != block_id:
                    found.add(child)
                    stack.append(child)
        return found

    def binding_for(self, block_id: str) -> Optional[BehaviorBinding]:
        for binding in self.behaviors:
            if binding.block_id == block_id:
                return binding
        return None

    def with_binding(self, binding: BehaviorBinding) -> 'Model':
        others = [b for b in self.behaviors if b.block_id != binding.block_id]
        return replace(self, behaviors=tuple(others) + (binding,))

    def without_binding(self, block_id: str) -> 'Model':
        return replace(self, behaviors=tuple(b for b in self.behaviors if b.block_id != block_id))


def check_relation(model: Model, rel: Relation) -> List[Diagnostic]:
    """Legality of a single edge; returns one diagnostic per violated rule"""
    missing = [end for end in (rel.source, rel.target) if not model.has_block(end)]
    if missing:
        return [Diagnostic.error('E-DANGLING-LINK', rel.ident,
                                 f"{rel.kind.value} endpoint {', '.join(missing)} does not exist")]
    if rel.source == rel.target:
        return [Diagnostic.error('E-SELF-LINK', rel.ident, f"{rel.kind.value} edge joins a block to itself")]

    source = model.block(rel.source)
    target = model.block(rel.target)
    found: List[Diagnostic] = []
    if rel.kind is RelationKind.TRACE:
        if not allowed_trace(source.kind, target.kind):
            found.append(Diagnostic.error(
                'E-TRACE-KIND', rel.ident,
                f"{source.kind.value} may not trace to {target.kind.value}"))
    elif rel.kind is RelationKind.INHERITANCE:
        if source.kind is not BlockKind.SYSTEM or target.kind is not BlockKind.SYSTEM:
            found.append(Diagnostic.error(
                'E-INHERIT-KIND', rel.ident,
                f"inheritance joins {source.kind.value} to {target.kind.value}; only System blocks inherit"))
    elif rel.kind is RelationKind.CONNECTIVITY:
        if source.layer is not target.layer:
            found.append(Diagnostic.error(
                'E-CONNECT-LAYER', rel.ident,
                f"connectivity crosses layers {source.layer.value} and {target.layer.value}"))
    elif rel.kind is RelationKind.COMPOSITION:
        if source.layer is not target.layer:
            found.append(Diagnostic.error(
                'E-COMPOSE-LAYER', rel.ident,
                f"composition crosses layers {source.layer.value} and {target.layer.value}"))
    return found


def parse_param_decl(name: str, spec: Scalar) -> ParamDecl:
    """Parse a ``param:<name>`` declaration value such as ``"real"`` or ``"int;tunable"``"""
    if not isinstance(spec, str):
        raise ValueError(f"declaration of {name!r} must be text")
    type_name, _, flag = spec.partition(';')
    type_name = type_name.strip()
    if type_name not in PARAM_TYPES:
        raise ValueError(f"declaration of {name!r} has unknown type {type_name!r}")
    if flag.strip() not in ('', 'tunable'):
        raise ValueError(f"declaration of {name!r} has unknown flag {flag.strip()!r}")
    return ParamDecl(name=name, type=type_name, tunable=flag.strip() == 'tunable')


def own_declarations(block: Block) -> Dict[str, ParamDecl]:
    return {
        key[len(PARAM_DECL_PREFIX):]: parse_param_decl(key[len(PARAM_DECL_PREFIX):], value)
        for key, value in block.params.items()
        if key.startswith(PARAM_DECL_PREFIX)
    }


def own_values(block: Block) -> Dict[str, Scalar]:
    return {k: v for k, v in block.params.items() if not k.startswith(PARAM_DECL_PREFIX)}


def _lineage(model: Model, block_id: str) -> List[Block]:
    return [model.block(b) for b in model.ancestors(block_id) + [block_id] if model.has_block(b)]


def param_declarations(model: Model, block_id: str) -> Dict[str, ParamDecl]:
    """Declarations inherited root to leaf; nearer blocks shadow farther ones"""
    merged: Dict[str, ParamDecl] = {}
    for block in _lineage(model, block_id):
        merged.update(own_declarations(block))
    return merged


def inherited_values(model: Model, block_id: str) -> Dict[str, Scalar]:
    """Parameter values inherited root to leaf, leaf wins; the ``ref`` link is not inherited"""
    merged: Dict[str, Scalar] = {}
    for block in _lineage(model, block_id):
        merged.update(own_values(block))
    merged.pop(REF_PARAM, None)
    return merged


def _finite_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def scalar_matches(value: Scalar, type_name: str) -> bool:
    if type_name == 'int':
        return isinstance(value, int) and not isinstance(value, bool)
    if type_name == 'real':
        return _finite_number(value)
    if type_name == 'text':
        return isinstance(value, str)
    if type_name == 'vec3':
        return isinstance(value, Vec3) and all(_finite_number(c) for c in value)
    return False
