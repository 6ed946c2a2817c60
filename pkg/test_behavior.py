from dataclasses import replace

import pytest
from prometheus_client import REGISTRY

from behavior import (
    KERNELS, BuiltinKernel, RecordingSink, Runtime, assemble_artifact, attach_behavior, build_sim_params,
    resolve_params, run_artifact,
)
from diagnostics import ForgeError
from metamodel import BehaviorBinding, BindingKind, Role
from simkernel import NoiseOnset, Vec3, step

ALWAYS_WANTED = '''
import json, sys
for line in sys.stdin:
    sys.stdout.write(json.dumps({"decision": "wanted"}) + "\\n")
    sys.stdout.flush()
'''

CRASHING = '''
import sys
sys.exit(3)
'''


def _assemble_error(specific, reference):
    with pytest.raises(ForgeError) as err:
        assemble_artifact(specific, reference)
    return err.value


def _run_error(artifact, params):
    with pytest.raises(ForgeError) as err:
        run_artifact(artifact, params)
    return err.value


class TestKernels:
    def test_registry(self):
        assert {name: k.role for name, k in KERNELS.items()} == {
            'auv.kinematics': Role.PLANT,
            'mcu.deadbeat': Role.CONTROLLER,
            'tcu.threshold': Role.CLASSIFIER,
            'targets.static': Role.TARGET,
        }


class TestAttachBehavior:
    def test_rebind_warns(self, reference):
        binding = BehaviorBinding('remote_tcu', BindingKind.BUILTIN, 'tcu.threshold', Role.CLASSIFIER)
        model, notes = attach_behavior(reference, binding)
        assert [n.code for n in notes] == ['W-REBIND']
        assert model.binding_for('remote_tcu') == binding
        assert len(model.behaviors) == len(reference.behaviors)

    def test_new_binding(self, reference):
        stripped = reference.without_binding('targets')
        binding = BehaviorBinding('targets', BindingKind.BUILTIN, 'targets.static', Role.TARGET)
        model, notes = attach_behavior(stripped, binding)
        assert notes == []
        assert model == reference

    @pytest.mark.parametrize('block_id, code', [
        ('ghost', 'E-UNKNOWN-BLOCK'),
        ('movement_control', 'E-NOT-SYSTEM'),
        ('classifier', 'E-ABSTRACT-BEHAVIOR'),
    ])
    def test_rejected(self, reference, block_id, code):
        with pytest.raises(ForgeError) as err:
            attach_behavior(reference, BehaviorBinding(block_id, BindingKind.BUILTIN, 'tcu.threshold', Role.CLASSIFIER))
        assert err.value.code == code


class TestAssembleArtifact:
    def test_bundled(self, specific, reference):
        artifact = assemble_artifact(specific, reference)
        assert artifact.id == 'maritime_specific.artifact'
        assert artifact.runtime is Runtime.BUILTIN
        assert [m.block_id for m in artifact.members] == ['auv_plant', 'deadbeat_mcu', 'targets', 'threshold_tcu']
        assert [p.name for p in artifact.tunables] == ['h', 't_i']
        assert artifact.param('h').default == 3
        assert artifact.param('h').block_id == 'threshold_tcu'
        assert artifact.param('t_i').block_id == 'deadbeat_mcu'
        assert artifact.param('v_passive').default == Vec3(0, 1, 0)

    def test_invalid_specific(self, specific, reference):
        broken = replace(specific, parent_ref='other_reference')
        assert _assemble_error(broken, reference).code == 'E-DANGLING-REF'

    def test_leaf_without_behavior(self, specific, reference):
        err = _assemble_error(specific.without_binding('deadbeat_mcu'), reference)
        assert err.code == 'E-LEAF-NO-BEHAVIOR'
        assert err.subject == 'deadbeat_mcu'

    def test_unknown_kernel(self, specific, reference):
        model = specific.with_binding(BehaviorBinding('threshold_tcu', BindingKind.BUILTIN, 'tcu.magic', Role.CLASSIFIER))
        assert _assemble_error(model, reference).code == 'E-UNKNOWN-KERNEL'

    def test_role_mismatch(self, specific, reference):
        model = specific.with_binding(
            BehaviorBinding('threshold_tcu', BindingKind.BUILTIN, 'auv.kinematics', Role.CLASSIFIER))
        assert _assemble_error(model, reference).code == 'E-RUNTIME-MISMATCH'

    def test_hooks_only_classify(self, specific, reference):
        model = specific.with_binding(BehaviorBinding('targets', BindingKind.EXEC, 'targets-hook', Role.TARGET))
        assert _assemble_error(model, reference).code == 'E-RUNTIME-MISMATCH'

    def test_role_cardinality(self, specific, reference):
        model = specific.with_binding(
            BehaviorBinding('deadbeat_mcu', BindingKind.BUILTIN, 'tcu.threshold', Role.CLASSIFIER))
        err = _assemble_error(model, reference)
        assert err.code == 'E-ROLE-CARDINALITY'
        assert len(err.diagnostics) == 2, "missing Controller and duplicate Classifier"


class TestRunArtifact:
    def setup_method(self):
        self.sink = RecordingSink()

    def test_reported_run(self, specific, reference):
        result = run_artifact(assemble_artifact(specific, reference), {}, sink=self.sink)
        assert (result.report.fp_count, result.report.first_fp_t, result.report.fn_count) == (3, 3, 0)
        assert [e for e, _ in self.sink.events] == ['step'] * 6 + ['report']
        assert result.steps[-1].state.p_actual == Vec3(10, 0, 0)

    def test_params_file_values(self, specific, reference, survey_values):
        artifact = assemble_artifact(specific, reference)
        assert run_artifact(artifact, survey_values) == run_artifact(artifact, {})

    def test_policy_override(self, specific, reference):
        artifact = assemble_artifact(specific, reference)
        report = run_artifact(artifact, {}, policy=NoiseOnset.AT_ACTIVATION).report
        assert (report.fp_count, report.first_fp_t) == (4, 2)
        assert run_artifact(artifact, {'noise_onset': 'at'}).report == report

    def test_threshold_override(self, specific, reference):
        report = run_artifact(assemble_artifact(specific, reference), {'h': 4}).report
        assert (report.fp_count, report.fn_count) == (0, 3)

    def test_vector_from_list(self, specific, reference):
        artifact = assemble_artifact(specific, reference)
        values = resolve_params(artifact, {'v_passive': [0, 2, 0]})
        assert values['v_passive'] == Vec3(0, 2, 0)

    @pytest.mark.parametrize('params, code', [
        ({'speed': 3}, 'E-PARAM-UNKNOWN'),
        ({'h': 'high'}, 'E-PARAM-TYPE'),
        ({'t_i': 2.5}, 'E-PARAM-TYPE'),
        ({'h': float('nan')}, 'E-PARAM-TYPE'),
        ({'v_passive': [0, float('inf'), 0]}, 'E-PARAM-TYPE'),
        ({'v_passive': [0, 1]}, 'E-PARAM-TYPE'),
        ({'noise_onset': 'sometimes'}, 'E-PARAM-TYPE'),
        ({'truth_0': 'maybe'}, 'E-PARAM-TYPE'),
        ({'t_i': 9}, 'E-SIM-PARAMS'),
    ])
    def test_bad_params(self, specific, reference, params, code):
        assert _run_error(assemble_artifact(specific, reference), params).code == code

    def test_missing_value(self, specific, reference):
        artifact = assemble_artifact(specific, reference)
        schema = tuple(replace(p, default=None) if p.name == 'h' else p for p in artifact.param_schema)
        err = _run_error(replace(artifact, param_schema=schema), {})
        assert err.code == 'E-PARAM-MISSING'
        assert err.subject == 'h'

    def test_build_sim_params_needs_core_values(self):
        with pytest.raises(ForgeError) as err:
            build_sim_params({'t_i': 2, 't_n': 5})
        assert err.value.code == 'E-PARAM-MISSING'

    def test_plant_and_controller_from_registry(self, specific, reference, mocker):
        def idle(params, t, p_deviation):
            return params.v_desired

        mocker.patch.dict(KERNELS, {'mcu.deadbeat': BuiltinKernel('mcu.deadbeat', Role.CONTROLLER, idle)})
        result = run_artifact(assemble_artifact(specific, reference), {})
        assert result.steps[-1].state.p_actual == Vec3(10, 5, 0), "drift left uncorrected"
        assert all(record.v_active == Vec3(2, 0, 0) for record in result.steps)

        plant = mocker.Mock(wraps=step)
        mocker.patch.dict(KERNELS, {'auv.kinematics': BuiltinKernel('auv.kinematics', Role.PLANT, plant)})
        run_artifact(assemble_artifact(specific, reference), {})
        assert plant.call_count == 5

    def test_counts_runs(self, specific, reference):
        before = REGISTRY.get_sample_value('model_forge_runs_total', {'runtime': 'Builtin'}) or 0
        run_artifact(assemble_artifact(specific, reference), {})
        assert REGISTRY.get_sample_value('model_forge_runs_total', {'runtime': 'Builtin'}) == before + 1


class TestExecHooks:
    def _with_hook(self, specific, command):
        return specific.with_binding(BehaviorBinding('threshold_tcu', BindingKind.EXEC, command, Role.CLASSIFIER))

    def test_bundled_hook_matches_builtin(self, specific, reference, threshold_hook_command):
        builtin = run_artifact(assemble_artifact(specific, reference), {})
        hooked = run_artifact(assemble_artifact(self._with_hook(specific, threshold_hook_command), reference), {})
        assert hooked.report == builtin.report
        assert hooked.steps == builtin.steps

    def test_always_wanted(self, specific, reference, script_hook):
        command = script_hook('always_wanted.py', ALWAYS_WANTED)
        report = run_artifact(assemble_artifact(self._with_hook(specific, command), reference), {}).report
        assert (report.fp_count, report.first_fp_t, report.fn_count) == (6, 0, 0)

    def test_crashing_hook(self, specific, reference, script_hook):
        command = script_hook('crash.py', CRASHING)
        err = _run_error(assemble_artifact(self._with_hook(specific, command), reference), {})
        assert err.code == 'E-HOOK-FAILURE'
        assert err.step == 0
