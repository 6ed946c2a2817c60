"""
Model persistence.

One model per UTF-8 JSON file: ``{"format_version": 1, "model": {...}}``.
Parsing is strict (unknown keys and unknown enumeration strings are errors)
and rendering is canonical, so ``render(parse(render(m))) == render(m)``.
"""

import json
from collections import Counter
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import structlog
from jsonschema import Draft7Validator

from config import Config
from diagnostics import Diagnostic, ForgeError
from metamodel import (
    PARAM_DECL_PREFIX, REF_PARAM, BehaviorBinding, BindingKind, Block, BlockKind, Layer, Model,
    ModelKind, Relation, RelationKind, Role, Scalar, View, Viewpoint, parse_param_decl,
)
from simkernel import Vec3

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]

_SCALAR_SCHEMA = {
    "oneOf": [
        {"type": "number"},
        {"type": "string"},
        {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}}
    ]
}

_IDENT = {"type": "string", "minLength": 1}

MODEL_DOCUMENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["format_version", "model"],
    "properties": {
        "format_version": {"const": Config.FORMAT_VERSION},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["id", "kind", "parent_ref", "blocks", "relations", "views", "behaviors"],
            "properties": {
                "id": _IDENT,
                "kind": {"type": "string"},
                "parent_ref": {"oneOf": [_IDENT, {"type": "null"}]},
                "blocks": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["id", "name", "kind", "abstract", "params"],
                        "properties": {
                            "id": _IDENT,
                            "name": {"type": "string"},
                            "kind": {"type": "string"},
                            "abstract": {"type": "boolean"},
                            "params": {"type": "object", "additionalProperties": _SCALAR_SCHEMA},
                            "doc": {"type": "string"}
                        }
                    }
                },
                "relations": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind", "source", "target"],
                        "properties": {"kind": {"type": "string"}, "source": _IDENT, "target": _IDENT}
                    }
                },
                "views": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["name", "viewpoint", "layer", "members"],
                        "properties": {
                            "name": _IDENT,
                            "viewpoint": {"type": "string"},
                            "layer": {"type": "string"},
                            "members": {"type": "array", "items": _IDENT}
                        }
                    }
                },
                "behaviors": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["block_id", "kind", "target", "role"],
                        "properties": {
                            "block_id": _IDENT,
                            "kind": {"type": "string"},
                            "target": {"type": "string", "minLength": 1},
                            "role": {"type": "string"}
                        }
                    }
                }
            }
        }
    }
}

_validator = Draft7Validator(MODEL_DOCUMENT_SCHEMA)


def _enum(enum_cls, value: str, where: str):
    try:
        return enum_cls(value)
    except ValueError:
        raise ForgeError('E-KIND', f"unknown {enum_cls.__name__} {value!r}", subject=where)


def _scalar_from_json(value: Any) -> Scalar:
    if isinstance(value, list):
        return Vec3.of(value)
    return value


def _scalar_to_json(value: Scalar) -> Any:
    if isinstance(value, Vec3):
        return value.as_list()
    return value


def check_model(model: Model) -> List[Diagnostic]:
    """Structural invariants every stored model must satisfy"""
    found: List[Diagnostic] = []

    if model.kind is ModelKind.REFERENCE and model.parent_ref is not None:
        found.append(Diagnostic.error('E-PARSE', model.id, "reference models carry no parent_ref"))
    if model.kind is ModelKind.SPECIFIC and not model.parent_ref:
        found.append(Diagnostic.error('E-PARSE', model.id, "specific models require parent_ref"))

    for block_id, count in sorted(Counter(b.id for b in model.blocks).items()):
        if count > 1:
            found.append(Diagnostic.error('E-DUP-ID', block_id, f"block id used {count} times"))

    for block in model.blocks:
        if block.abstract and block.kind is not BlockKind.SYSTEM:
            found.append(Diagnostic.error('E-KIND', block.id, f"{block.kind.value} blocks cannot be abstract"))
        for key, value in block.params.items():
            if key.startswith(PARAM_DECL_PREFIX):
                try:
                    parse_param_decl(key[len(PARAM_DECL_PREFIX):], value)
                except ValueError as e:
                    found.append(Diagnostic.error('E-PARSE', block.id, str(e)))
            elif key == REF_PARAM and not isinstance(value, str):
                found.append(Diagnostic.error('E-PARSE', block.id, "ref must be a block id"))

    for rel, count in sorted(Counter(model.relations).items(), key=lambda item: item[0].sort_key()):
        if count > 1:
            found.append(Diagnostic.error('E-PARSE', rel.ident, f"duplicate {rel.kind.value} relation"))
    for rel in model.relations:
        missing = [end for end in (rel.source, rel.target) if not model.has_block(end)]
        if missing:
            found.append(Diagnostic.error('E-DANGLING-LINK', rel.ident,
                                          f"{rel.kind.value} endpoint {', '.join(missing)} does not exist"))
        elif rel.source == rel.target:
            found.append(Diagnostic.error('E-SELF-LINK', rel.ident, "relation joins a block to itself"))

    for name, count in sorted(Counter(v.name for v in model.views).items()):
        if count > 1:
            found.append(Diagnostic.error('E-PARSE', name, f"view name used {count} times"))
    for view in model.views:
        for member in view.members:
            block = model.block(member)
            if block is None:
                found.append(Diagnostic.error('E-DANGLING-LINK', view.name, f"view member {member} does not exist"))
            elif block.layer is not view.layer:
                found.append(Diagnostic.error('E-KIND', view.name,
                                              f"member {member} lies on {block.layer.value}, not {view.layer.value}"))

    for block_id, count in sorted(Counter(b.block_id for b in model.behaviors).items()):
        if count > 1:
            found.append(Diagnostic.error('E-PARSE', block_id, "more than one behavior binding"))
        if not model.has_block(block_id):
            found.append(Diagnostic.error('E-DANGLING-LINK', block_id, "behavior bound to a missing block"))

    return found


def _raise_first(model_id: str, problems: List[Diagnostic]) -> None:
    if problems:
        first = problems[0]
        logger.error("Model invariants violated", model_id=model_id, code=first.code, count=len(problems))
        raise ForgeError(first.code, first.message, subject=first.subject, diagnostics=problems)


def model_to_document(model: Model) -> Dict[str, Any]:
    def block_doc(b: Block) -> Dict[str, Any]:
        doc = {
            'id': b.id,
            'name': b.name,
            'kind': b.kind.value,
            'abstract': b.abstract,
            'params': {k: _scalar_to_json(v) for k, v in b.params.items()},
        }
        if b.doc is not None:
            doc['doc'] = b.doc
        return doc

    return {
        'format_version': Config.FORMAT_VERSION,
        'model': {
            'id': model.id,
            'kind': model.kind.value,
            'parent_ref': model.parent_ref,
            'blocks': [block_doc(b) for b in model.blocks],
            'relations': [{'kind': r.kind.value, 'source': r.source, 'target': r.target} for r in model.relations],
            'views': [
                {'name': v.name, 'viewpoint': v.viewpoint.value, 'layer': v.layer.value, 'members': list(v.members)}
                for v in model.views
            ],
            'behaviors': [
                {'block_id': b.block_id, 'kind': b.kind.value, 'target': b.target, 'role': b.role.value}
                for b in model.behaviors
            ],
        }
    }


def render_model(model: Model) -> str:
    """Canonical text: sorted keys, 2-space indent, LF, trailing newline"""
    return json.dumps(model_to_document(model), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + '\n'


def model_from_document(document: Any) -> Model:
    errors = sorted(_validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        path = '/'.join(str(p) for p in first.absolute_path) or '<root>'
        raise ForgeError('E-PARSE', first.message, subject=path)

    data = document['model']
    blocks = [
        Block(
            id=b['id'],
            name=b['name'],
            kind=_enum(BlockKind, b['kind'], b['id']),
            abstract=b['abstract'],
            params={k: _scalar_from_json(v) for k, v in b['params'].items()},
            doc=b.get('doc'),
        )
        for b in data['blocks']
    ]
    relations = [
        Relation(kind=_enum(RelationKind, r['kind'], f"{r['source']}->{r['target']}"),
                 source=r['source'], target=r['target'])
        for r in data['relations']
    ]
    views = [
        View(name=v['name'], viewpoint=_enum(Viewpoint, v['viewpoint'], v['name']),
             layer=_enum(Layer, v['layer'], v['name']), members=tuple(v['members']))
        for v in data['views']
    ]
    behaviors = [
        BehaviorBinding(block_id=b['block_id'], kind=_enum(BindingKind, b['kind'], b['block_id']),
                        target=b['target'], role=_enum(Role, b['role'], b['block_id']))
        for b in data['behaviors']
    ]
    model = Model(
        id=data['id'],
        kind=_enum(ModelKind, data['kind'], data['id']),
        parent_ref=data['parent_ref'],
        blocks=tuple(blocks),
        relations=tuple(relations),
        views=tuple(views),
        behaviors=tuple(behaviors),
    )
    _raise_first(model.id, check_model(model))
    return model


def _reject_constant(token: str) -> Any:
    raise ForgeError('E-PARSE', f"{token} is not a JSON number")


def _unique_keys(pairs: List[Tuple[str, Any]]) -> Dict[str, Any]:
    document: Dict[str, Any] = {}
    for key, value in pairs:
        if key in document:
            raise ForgeError('E-PARSE', f"duplicate key {key!r}", subject=key)
        document[key] = value
    return document


def loads_strict(text: str, source: Optional[str] = None) -> Any:
    """``json.loads`` that rejects NaN/Infinity and duplicate object keys"""
    try:
        return json.loads(text, parse_constant=_reject_constant, object_pairs_hook=_unique_keys)
    except json.JSONDecodeError as e:
        raise ForgeError('E-PARSE', f"malformed JSON: {e.msg} at line {e.lineno} column {e.colno}", subject=source)
    except ForgeError as e:
        raise ForgeError(e.code, e.message, subject=source or e.subject)


def parse_model(text: str) -> Model:
    return model_from_document(loads_strict(text))


def load_model(path: PathLike) -> Model:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        logger.error("Failed to read model file", path=str(path), error=str(e))
        raise ForgeError('E-IO', f"cannot read {path}: {e}", subject=str(path))
    model = parse_model(text)
    logger.info("Model loaded", path=str(path), model_id=model.id, kind=model.kind.value,
                blocks=len(model.blocks), relations=len(model.relations))
    return model


def save_model(model: Model, path: PathLike) -> None:
    _raise_first(model.id, check_model(model))
    path = Path(path)
    text = render_model(model)
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
    except OSError as e:
        logger.error("Failed to write model file", path=str(path), error=str(e))
        raise ForgeError('E-IO', f"cannot write {path}: {e}", subject=str(path))
    logger.info("Model saved", path=str(path), model_id=model.id, bytes=len(text.encode('utf-8')))
