import json
from dataclasses import replace

import pytest

from config import Config
from derivation import (
    CONFIGURATION_VIEW, AlternativeGroup, CoverageStatus, Selection, alternative_groups, choices_by_service,
    completeness, derive_specific, load_selection,
)
from diagnostics import ForgeError
from metamodel import Block, BlockKind, Model, ModelKind, Relation, RelationKind, REF_PARAM
from store import render_model
from validation import validate_specific


def _derive_error(reference, selection):
    with pytest.raises(ForgeError) as err:
        derive_specific(reference, selection, 'scenario')
    return err.value


def with_tuned_tcu(reference):
    """Third inheritance level below threshold_tcu"""
    tuned = Block('tuned_tcu', 'Tuned TCU', BlockKind.SYSTEM, params={'h': 5})
    return replace(
        reference,
        blocks=reference.blocks + (tuned,),
        relations=reference.relations + (
            Relation(RelationKind.INHERITANCE, 'tuned_tcu', 'threshold_tcu'),
            Relation(RelationKind.TRACE, 'tuned_tcu', 'target_classification'),
        ),
    )


class TestAlternativeGroups:
    def test_fixture_groups(self, reference):
        assert alternative_groups(reference) == [
            AlternativeGroup('movement_control', 'mcu', ('deadbeat_mcu',)),
            AlternativeGroup('target_classification', 'classifier', ('remote_tcu', 'threshold_tcu')),
            AlternativeGroup('target_signals', 'targets', ('targets',)),
            AlternativeGroup('vehicle_kinematics', 'auv_plant', ('auv_plant',)),
        ]

    def test_abstract_without_children_is_unusable(self, reference):
        spare = Block('spare', 'Spare', BlockKind.SYSTEM, abstract=True)
        mutated = replace(reference, blocks=reference.blocks + (spare,),
                          relations=reference.relations + (Relation(RelationKind.TRACE, 'spare', 'target_signals'),))
        groups = [g for g in alternative_groups(mutated) if g.root_id == 'spare']
        assert groups == [AlternativeGroup('target_signals', 'spare', ())]
        assert not groups[0].usable
        assert choices_by_service(mutated)['target_signals'] == ('targets',)

    def test_intermediate_leaf_counts(self, reference):
        assert choices_by_service(with_tuned_tcu(reference))['target_classification'] == (
            'remote_tcu', 'threshold_tcu', 'tuned_tcu')


class TestDeriveSpecific:
    def test_matches_bundled_fixture(self, reference, selection, specific):
        derived = derive_specific(reference, selection, 'maritime_specific')
        assert derived == specific
        assert render_model(derived) == Config.fixture_path('maritime_specific.json').read_text(encoding='utf-8')

    def test_deterministic(self, reference, selection):
        first = render_model(derive_specific(reference, selection, 'scenario'))
        second = render_model(derive_specific(reference, selection, 'scenario'))
        assert first == second

    @pytest.mark.parametrize('leaf', ['remote_tcu', 'threshold_tcu'])
    def test_every_choice_validates(self, reference, leaf):
        derived = derive_specific(reference, Selection(choices={'target_classification': leaf}), 'scenario')
        assert validate_specific(derived, reference) == []
        assert derived.block(leaf).params[REF_PARAM] == leaf

    def test_explicit_singletons_accepted(self, reference, specific):
        sel = Selection(choices={
            'target_classification': 'threshold_tcu',
            'movement_control': 'deadbeat_mcu',
            'vehicle_kinematics': 'auv_plant',
        })
        assert derive_specific(reference, sel, 'maritime_specific') == specific

    def test_structure(self, reference, selection):
        derived = derive_specific(reference, selection, 'scenario')
        assert derived.kind is ModelKind.SPECIFIC
        assert derived.parent_ref == 'atr_reference'
        assert {r.kind for r in derived.relations} == {RelationKind.CONNECTIVITY}
        assert [v.name for v in derived.views] == [CONFIGURATION_VIEW]
        assert 'param:h' not in derived.block('threshold_tcu').params
        assert derived.block('threshold_tcu').params['N0'] == 0, "parent default copied"

    def test_missing_choice(self, reference):
        err = _derive_error(reference, Selection())
        assert err.code == 'E-SELECTION-MISSING'
        assert err.subject == 'target_classification'

    def test_abstract_choice(self, reference):
        assert _derive_error(reference, Selection(choices={'target_classification': 'classifier'})).code == \
            'E-SELECTION-ABSTRACT'

    def test_foreign_choice(self, reference):
        assert _derive_error(reference, Selection(choices={'target_classification': 'auv_plant'})).code == \
            'E-SELECTION-FOREIGN'
        assert _derive_error(reference, Selection(choices={'vehicle_services': 'auv_plant'})).code == \
            'E-SELECTION-FOREIGN'

    def test_override(self, reference):
        sel = Selection(choices={'target_classification': 'threshold_tcu'}, overrides={('threshold_tcu', 'h'): 4})
        derived = derive_specific(reference, sel, 'scenario')
        assert derived.block('threshold_tcu').params['h'] == 4
        assert validate_specific(derived, reference) == []

    def test_bad_overrides(self, reference):
        choices = {'target_classification': 'threshold_tcu'}
        assert _derive_error(reference, Selection(choices, {('remote_tcu', 'h'): 4})).code == 'E-SELECTION-FOREIGN'
        assert _derive_error(reference, Selection(choices, {('threshold_tcu', 'speed'): 4})).code == \
            'E-SELECTION-FOREIGN'
        assert _derive_error(reference, Selection(choices, {('threshold_tcu', 'h'): 'high'})).code == 'E-PARAM-TYPE'

    def test_missing_default(self, reference):
        mutated = replace(reference, blocks=tuple(
            replace(b, params={}) if b.id == 'threshold_tcu' else b for b in reference.blocks))
        err = _derive_error(mutated, Selection(choices={'target_classification': 'threshold_tcu'}))
        assert err.code == 'E-PARAM-MISSING'

    def test_three_level_shadowing(self, reference):
        tuned = with_tuned_tcu(reference)
        derived = derive_specific(tuned, Selection(choices={'target_classification': 'tuned_tcu'}), 'scenario')
        params = derived.block('tuned_tcu').params
        assert (params['h'], params['N0'], params['noise_onset']) == (5, 0, 'after')

        overridden = derive_specific(
            tuned, Selection({'target_classification': 'tuned_tcu'}, {('tuned_tcu', 'h'): 6}), 'scenario')
        assert overridden.block('tuned_tcu').params['h'] == 6

    def test_chain_of_two_choices_is_ambiguous(self, reference):
        # deadbeat_mcu would also serve target_classification next to the chosen classifier
        mutated = replace(reference, relations=reference.relations + (
            Relation(RelationKind.TRACE, 'deadbeat_mcu', 'target_classification'),))
        err = _derive_error(mutated, Selection(choices={'target_classification': 'threshold_tcu'}))
        assert err.code == 'E-SELECTION-AMBIGUOUS'


class TestCompleteness:
    def test_bundled_pair(self, specific, reference):
        report = completeness(specific, reference)
        assert report.complete
        assert report.entry('target_classification').resolved_id == 'threshold_tcu'
        assert report.entry('recognition_services').via == ('target_classification', 'target_signals')
        assert report.render()[-1] == 'complete: yes'

    def test_missing_classifier(self, specific, reference):
        reduced = replace(specific, blocks=tuple(b for b in specific.blocks if b.id != 'threshold_tcu'))
        report = completeness(reduced, reference)
        assert not report.complete
        assert report.entry('target_classification').status == CoverageStatus.MISSING
        assert report.entry('recognition_services').status == CoverageStatus.MISSING
        assert report.render()[-1] == 'complete: no'

    def test_no_services(self, specific):
        empty = Model(id='empty', kind=ModelKind.REFERENCE)
        report = completeness(specific, empty)
        assert report.entries == ()
        assert report.complete


class TestSelectionFile:
    def test_bundled(self):
        sel = load_selection(Config.fixture_path('maritime_selection.json'))
        assert sel.choices == {'target_classification': 'threshold_tcu'}
        assert sel.overrides == {}

    def test_params(self, tmp_path):
        path = tmp_path / 'sel.json'
        path.write_text(json.dumps({'select': {}, 'params': {'auv_plant.v_passive': [0, 2, 0], 'threshold_tcu.h': 4}}))
        sel = load_selection(path)
        assert sel.overrides[('threshold_tcu', 'h')] == 4
        assert sel.overrides[('auv_plant', 'v_passive')].as_list() == [0, 2, 0]

    @pytest.mark.parametrize('document', [
        {'choose': {}},
        {'select': {}, 'params': {'h': 4}},
        {'select': {'target_classification': 3}},
    ])
    def test_rejects_malformed(self, tmp_path, document):
        path = tmp_path / 'sel.json'
        path.write_text(json.dumps(document))
        with pytest.raises(ForgeError) as err:
            load_selection(path)
        assert err.value.code == 'E-PARSE'

    @pytest.mark.parametrize('text', [
        '{"select": {"target_classification": "threshold_tcu", "target_classification": "remote_tcu"}}',
        '{"select": {}, "params": {"threshold_tcu.h": NaN}}',
    ])
    def test_rejects_lossy_json(self, tmp_path, text):
        path = tmp_path / 'sel.json'
        path.write_text(text)
        with pytest.raises(ForgeError) as err:
            load_selection(path)
        assert err.value.code == 'E-PARSE'
        assert err.value.subject == str(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ForgeError) as err:
            load_selection(tmp_path / 'nope.json')
        assert err.value.code == 'E-IO'
