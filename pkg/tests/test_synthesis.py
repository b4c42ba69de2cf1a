import pytest
from hypothesis import given, settings, strategies as st

from rehabloop.constraints import ClinicalNote, Constraint, ConstraintSet, parse_note
from rehabloop.providers import ProviderUnavailable
from rehabloop.synthesis import (
    FlakySynthesis,
    MockSynthesis,
    NoRenderableConstraint,
    build_prompt,
    synthesize,
)

SHOULDER_NOTE = ClinicalNote(
    "Patient recovering from rotator cuff tear. Max 90 deg shoulder abduction.",
    "t1")
KNEE_NOTE = ClinicalNote(
    "Ensure knee does not track past the toes during squats. Go slow.", "t2")


class TestBuildPrompt:
    def test_shoulder_cap_stops_one_degree_short(self):
        prompt = build_prompt(parse_note(SHOULDER_NOTE))
        assert prompt.stop_angle_deg == 89
        assert "stops at 89 degrees" in prompt.text
        assert "shoulder abduction" in prompt.text
        assert prompt.constraint_ids == ("t1:shoulder:abduction",)

    def test_knee_prompt_has_tracking_cue_and_tempo(self):
        prompt = build_prompt(parse_note(KNEE_NOTE))
        assert "behind the toes" in prompt.text
        assert "slow, controlled tempo" in prompt.text
        assert prompt.stop_angle_deg is None

    def test_empty_set_rejected(self):
        with pytest.raises(NoRenderableConstraint):
            build_prompt(ConstraintSet(source_note_id="e"))

    def test_velocity_only_set_rejected(self):
        cset = ConstraintSet(constraints=(
            Constraint(constraint_id="v", joint="shoulder", axis="abduction",
                       max_velocity=0.5),))
        with pytest.raises(NoRenderableConstraint):
            build_prompt(cset)

    def test_pure_function(self):
        cset = parse_note(SHOULDER_NOTE)
        assert build_prompt(cset) == build_prompt(cset)

    def test_margin_configurable(self):
        prompt = build_prompt(parse_note(SHOULDER_NOTE), safety_margin_deg=5)
        assert prompt.stop_angle_deg == 85
        with pytest.raises(ValueError):
            build_prompt(parse_note(SHOULDER_NOTE), safety_margin_deg=0)

    @given(st.lists(st.tuples(
        st.sampled_from(["shoulder", "elbow", "knee"]),
        st.sampled_from(["abduction", "flexion"]),
        st.integers(min_value=10, max_value=180)), min_size=1, max_size=4))
    @settings(max_examples=100)
    def test_stop_angle_strictly_below_every_cap(self, rows):
        constraints = []
        seen = set()
        for i, (joint, axis, angle) in enumerate(rows):
            if (joint, axis) in seen:
                continue
            seen.add((joint, axis))
            constraints.append(Constraint(
                constraint_id=f"p:{joint}:{axis}", joint=joint, axis=axis,
                max_angle=angle))
        prompt = build_prompt(ConstraintSet(constraints=tuple(constraints),
                                            source_note_id="p"))
        for c in constraints:
            assert prompt.stop_angle_deg < c.max_angle


class TestProviders:
    def test_mock_is_deterministic(self):
        prompt = build_prompt(parse_note(SHOULDER_NOTE))
        first = synthesize(prompt, MockSynthesis())
        second = synthesize(prompt, MockSynthesis())
        assert first == second
        assert first.startswith("mock://physio-twin/")

    def test_different_prompts_different_references(self):
        a = synthesize(build_prompt(parse_note(SHOULDER_NOTE)), MockSynthesis())
        b = synthesize(build_prompt(parse_note(KNEE_NOTE)), MockSynthesis())
        assert a != b

    def test_timeout_surfaces_provider_unavailable(self):
        prompt = build_prompt(parse_note(SHOULDER_NOTE))
        flaky = FlakySynthesis(failures=1)
        with pytest.raises(ProviderUnavailable):
            synthesize(prompt, flaky)
        # recovers afterwards
        assert synthesize(prompt, flaky).startswith("mock://")
