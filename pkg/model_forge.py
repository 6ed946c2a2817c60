#!/usr/bin/env python3
"""
model-forge command line.

    model-forge validate MODEL [REFERENCE] [--strict]
    model-forge derive REFERENCE SELECTION OUT [--id MODEL_ID]
    model-forge run SPECIFIC REFERENCE [--params FILE] [--set NAME=VALUE ...]
                    [--interactive] [--policy at|after] [--out FILE]
    model-forge export MODEL (--view NAME ... | --all) [--out FILE]
    model-forge trace MODEL BLOCK_ID
    model-forge groups REFERENCE

Reports go to stdout, logs to stderr. Exit status is 0 on success, 1 for
diagnostics with errors or a failed run, 2 for usage and IO errors.
"""

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Sequence

import click
import structlog

from behavior import ExecutableArtifact, ParamSpec, assemble_artifact, resolve_params, run_artifact
from derivation import alternative_groups, completeness, derive_specific, load_selection
from diagnostics import Diagnostic, ForgeError, Severity, render_diagnostics
from logging_config import configure_logging
from metamodel import Model, ModelKind, Scalar
from simkernel import NoiseOnset, ScoreReport, StepRecord, Vec3, format_number, result_to_dict
from store import load_model, loads_strict, save_model
from validation import trace_chain, validate_reference, validate_specific
from view_export import export_views, select_views

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _fail(error: ForgeError) -> NoReturn:
    """Print an aborted operation and exit with the status its code maps to"""
    lines = render_diagnostics(error.diagnostics) if error.diagnostics else [error.render()]
    for line in lines:
        click.echo(line)
    sys.exit(EXIT_USAGE if error.code == 'E-IO' else EXIT_FAILED)


def _load(path: str) -> Model:
    try:
        return load_model(path)
    except ForgeError as e:
        _fail(e)


def _print_diagnostics(found: Sequence[Diagnostic], strict: bool) -> int:
    for line in render_diagnostics(found):
        click.echo(line)
    if any(d.is_error for d in found):
        return EXIT_FAILED
    if strict and any(d.severity is Severity.WARNING for d in found):
        return EXIT_FAILED
    return EXIT_OK


def format_scalar(value: Scalar) -> str:
    if isinstance(value, Vec3):
        return str(value)
    if isinstance(value, (int, float)):
        return format_number(value)
    return str(value)


def parse_value(text: str) -> Any:
    """Command-line values: JSON when it parses (numbers, [x, y, z]), plain text otherwise"""
    try:
        return loads_strict(text)
    except ForgeError:
        return text


def parse_assignments(assignments: Sequence[str]) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for item in assignments:
        name, sep, raw = item.partition('=')
        if not sep or not name.strip():
            raise click.BadParameter(f"expected NAME=VALUE, got {item!r}", param_hint='--set')
        values[name.strip()] = parse_value(raw.strip())
    return values


def read_params_file(path: str) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        raise ForgeError('E-IO', f"cannot read {path}: {e}", subject=path)
    document = loads_strict(text, source=path)
    if not isinstance(document, dict):
        raise ForgeError('E-PARSE', "params file must hold a JSON object", subject=path)
    return document


def _prompt_default(spec: ParamSpec, supplied: Dict[str, Any]) -> Any:
    value = supplied.get(spec.name, spec.default)
    if value is None:
        return None
    if isinstance(value, Vec3):
        return json.dumps(value.as_list())
    if isinstance(value, list):
        return json.dumps(value)
    return format_scalar(value)


def prompt_tunables(artifact: ExecutableArtifact, supplied: Dict[str, Any]) -> Dict[str, Any]:
    values = dict(supplied)
    for spec in artifact.tunables:
        answer = click.prompt(f"{spec.name} ({spec.type})", default=_prompt_default(spec, supplied), type=str)
        values[spec.name] = parse_value(answer)
    return values


def progress_lines(record: StepRecord) -> List[str]:
    state = record.state
    lines = [
        f"t={record.t} p_desired={state.p_desired} p_actual={state.p_actual} "
        f"p_deviation={state.p_deviation} v_active={record.v_active} v_actual={record.v_actual}"
    ]
    for c in record.classifications:
        line = f"  target {c.j} s={format_number(c.s)} N={format_number(c.noise)} -> {c.decision.value}"
        if c.error.value != 'none':
            line += f" [{c.error.value}]"
        lines.append(line)
    return lines


def _progress_sink(event: str, payload: Any) -> None:
    if event == 'step':
        for line in progress_lines(payload):
            click.echo(line)


@click.group()
@click.option('-v', '--verbose', is_flag=True, help='Log at DEBUG level (logs go to stderr)')
def cli(verbose):
    """Validate, derive, run and export layered architecture models."""
    configure_logging(level='DEBUG' if verbose else None)


@cli.command()
@click.argument('model_path', type=click.Path())
@click.argument('reference_path', type=click.Path(), required=False)
@click.option('--strict', is_flag=True, help='Treat warnings as failures')
def validate(model_path, reference_path, strict):
    """Check a reference model, or a specific model against its reference."""
    model = _load(model_path)
    if reference_path:
        found = validate_specific(model, _load(reference_path))
    else:
        if model.kind is ModelKind.SPECIFIC:
            click.echo("note: specific model checked with reference rules; pass REFERENCE to check alignment", err=True)
        found = validate_reference(model)
    sys.exit(_print_diagnostics(found, strict))


@cli.command()
@click.argument('reference_path', type=click.Path())
@click.argument('selection_path', type=click.Path())
@click.argument('out_path', type=click.Path())
@click.option('--id', 'model_id', default=None, help='Id of the derived model (default: OUT file stem)')
def derive(reference_path, selection_path, out_path, model_id):
    """Instantiate the selected alternatives of REFERENCE into OUT."""
    reference = _load(reference_path)
    problems = [d for d in validate_reference(reference) if d.is_error]
    if problems:
        sys.exit(_print_diagnostics(problems, strict=False))

    try:
        selection = load_selection(selection_path)
        specific = derive_specific(reference, selection, model_id or Path(out_path).stem)
        save_model(specific, out_path)
    except ForgeError as e:
        _fail(e)

    for line in completeness(specific, reference).render():
        click.echo(line)
    sys.exit(EXIT_OK)


@cli.command()
@click.argument('specific_path', type=click.Path())
@click.argument('reference_path', type=click.Path())
@click.option('--params', 'params_path', type=click.Path(), help='JSON object of parameter values')
@click.option('--set', 'assignments', multiple=True, metavar='NAME=VALUE', help='Override one parameter')
@click.option('--interactive', is_flag=True, help='Prompt for every tunable parameter')
@click.option('--policy', type=click.Choice([p.value for p in NoiseOnset]), default=None,
              help='When the MCU starts adding noise: at t_i or after it')
@click.option('--out', 'out_path', type=click.Path(), help='Also write the result as JSON')
def run(specific_path, reference_path, params_path, assignments, interactive, policy, out_path):
    """Assemble the artifact of SPECIFIC and run the simulation."""
    specific = _load(specific_path)
    reference = _load(reference_path)
    overrides = parse_assignments(assignments)

    try:
        artifact = assemble_artifact(specific, reference)
        supplied = read_params_file(params_path) if params_path else {}
        supplied.update(overrides)
        if interactive:
            supplied = prompt_tunables(artifact, supplied)

        values = resolve_params(artifact, supplied)
        click.echo("constants:")
        for spec in artifact.constants:
            click.echo(f"  {spec.name} = {format_scalar(values[spec.name])}")

        result = run_artifact(artifact, supplied, sink=_progress_sink,
                              policy=NoiseOnset(policy) if policy else None)
    except ForgeError as e:
        _fail(e)

    report: ScoreReport = result.report
    for line in report.render():
        click.echo(line)

    if out_path:
        text = json.dumps(result_to_dict(result), indent=2, sort_keys=True) + '\n'
        try:
            Path(out_path).write_text(text, encoding='utf-8')
        except OSError as e:
            _fail(ForgeError('E-IO', f"cannot write {out_path}: {e}", subject=out_path))
    sys.exit(EXIT_OK)


@cli.command()
@click.argument('model_path', type=click.Path())
@click.option('--view', 'view_names', multiple=True, help='View to export (repeatable)')
@click.option('--all', 'all_views', is_flag=True, help='Export every view of the model')
@click.option('--out', 'out_path', type=click.Path(), help='Write DOT here instead of stdout')
def export(model_path, view_names, all_views, out_path):
    """Render views as DOT digraphs."""
    if not view_names and not all_views:
        raise click.UsageError("give --view NAME or --all")
    model = _load(model_path)
    try:
        dot = export_views(model, select_views(model, view_names, all_views))
    except ForgeError as e:
        _fail(e)

    if not out_path:
        click.echo(dot, nl=False)
        sys.exit(EXIT_OK)
    try:
        with open(out_path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(dot)
    except OSError as e:
        _fail(ForgeError('E-IO', f"cannot write {out_path}: {e}", subject=out_path))
    sys.exit(EXIT_OK)


@cli.command()
@click.argument('model_path', type=click.Path())
@click.argument('block_id')
def trace(model_path, block_id):
    """Print the trace chain from BLOCK_ID up to a Capability."""
    model = _load(model_path)
    try:
        chain = trace_chain(model, block_id)
    except ForgeError as e:
        _fail(e)
    click.echo(' -> '.join(f"{b.id} ({b.kind.value})" for b in chain.blocks))
    if not chain.complete:
        click.echo(f"incomplete: {chain.blocks[-1].id} does not reach a Capability")
        sys.exit(EXIT_FAILED)
    sys.exit(EXIT_OK)


@cli.command()
@click.argument('reference_path', type=click.Path())
def groups(reference_path):
    """List the alternative groups a selection chooses from."""
    reference = _load(reference_path)
    for group in alternative_groups(reference):
        leaves = ', '.join(group.leaves) if group.usable else '(no concrete leaf)'
        click.echo(f"{group.service_id}: {group.root_id} -> {leaves}")
    sys.exit(EXIT_OK)


if __name__ == '__main__':
    cli()
