"""DOT rendering of model views with the graphviz package (source text only, no layout engine needed)."""

from typing import Dict, List, Sequence

import structlog
from graphviz import Digraph

from diagnostics import ForgeError
from metamodel import Model, RelationKind, View, Viewpoint

logger = structlog.get_logger(__name__)

_EDGE_KINDS: Dict[Viewpoint, Sequence[RelationKind]] = {
    Viewpoint.TAXONOMY: (RelationKind.INHERITANCE, RelationKind.TRACE),
    Viewpoint.STRUCTURE: (RelationKind.COMPOSITION,),
    Viewpoint.CONNECTIVITY: (RelationKind.CONNECTIVITY,),
}

_EDGE_STYLE = {
    RelationKind.INHERITANCE: {'arrowhead': 'empty'},
    RelationKind.TRACE: {'style': 'dashed', 'label': 'trace'},
    RelationKind.COMPOSITION: {'arrowtail': 'diamond', 'dir': 'back'},
    RelationKind.CONNECTIVITY: {},
}


def render_view(model: Model, view: View) -> str:
    graph = Digraph(name=view.name, comment=f"{view.layer.value} {view.viewpoint.value} of {model.id}")
    graph.attr(rankdir='BT')
    graph.attr('node', shape='box')

    members = set(view.members)
    for block_id in view.members:
        block = model.block(block_id)
        attrs = {'style': 'dashed'} if block.abstract else {}
        graph.node(block.id, label=f"{block.name}\\n{block.kind.value}", **attrs)

    for rel in model.relations:
        if rel.kind in _EDGE_KINDS[view.viewpoint] and rel.source in members and rel.target in members:
            graph.edge(rel.source, rel.target, **_EDGE_STYLE[rel.kind])
    return graph.source


def select_views(model: Model, names: Sequence[str] = (), all_views: bool = False) -> List[View]:
    if all_views:
        return list(model.views)
    by_name = {v.name: v for v in model.views}
    missing = [n for n in names if n not in by_name]
    if missing:
        raise ForgeError('E-UNKNOWN-VIEW', f"{model.id} has no view {missing[0]!r}", subject=missing[0])
    return [by_name[n] for n in names]


def export_views(model: Model, views: Sequence[View]) -> str:
    rendered = [render_view(model, v) for v in views]
    logger.info("Views rendered", model_id=model.id, views=[v.name for v in views])
    return '\n'.join(rendered)
