import pytest
from hypothesis import given, strategies as st

from crossmig.model import (EMPTY_ID, FOOTPRINT_OVERFLOW, ContainerSpec,
                            Endpoint, IllegalTransition, MigrationApproach,
                            MigrationReport, MigrationSession, ModelError,
                            Phase, ProcessRole, ProcessTemplate, Structure,
                            SpecValidationError, memhog_spec, spec_violations,
                            validate_spec)


def plain_spec(**kw):
    base = dict(container_id="a", name="svc", image_ref="img:1",
                memory_limit_mib=256,
                process_template=(ProcessTemplate(ProcessRole.SERVICE, 128),))
    base.update(kw)
    return ContainerSpec(**base)


def test_valid_spec_returned_unchanged():
    spec = plain_spec()
    assert validate_spec(spec) is spec


def test_empty_id_rejected():
    errs = spec_violations(plain_spec(container_id=""))
    assert [e.code for e in errs] == [EMPTY_ID]


def test_footprint_overflow():
    spec = plain_spec(memory_limit_mib=64)
    errs = spec_violations(spec)
    assert [e.code for e in errs] == [FOOTPRINT_OVERFLOW]
    with pytest.raises(SpecValidationError):
        validate_spec(spec)


def test_all_violations_reported_together():
    spec = plain_spec(container_id="", memory_limit_mib=64)
    assert len(spec_violations(spec)) == 2


def test_two_service_templates_rejected():
    spec = plain_spec(process_template=(
        ProcessTemplate(ProcessRole.SERVICE, 1),
        ProcessTemplate(ProcessRole.SERVICE, 1)))
    assert any(e.code == "duplicate_process_role" for e in spec_violations(spec))


def test_child_template_cannot_nest():
    with pytest.raises(ModelError):
        ProcessTemplate(ProcessRole.CHILD, 0, child_count=2)


def test_endpoint_parse_and_validation():
    ep = Endpoint.parse("10.0.0.1:7001")
    assert (ep.host, ep.port) == ("10.0.0.1", 7001)
    assert str(ep) == "10.0.0.1:7001"
    with pytest.raises(ModelError):
        Endpoint("h", 0)
    with pytest.raises(ModelError):
        Endpoint("", 1)
    with pytest.raises(ModelError):
        Endpoint.parse("no-port")


def test_flavor_native_cr():
    from crossmig.model import OrchestratorFlavor
    assert OrchestratorFlavor.KUBE_MOD_SIM.native_cr
    assert not any(f.native_cr for f in OrchestratorFlavor
                   if f is not OrchestratorFlavor.KUBE_MOD_SIM)


templates = st.lists(
    st.builds(ProcessTemplate,
              role=st.sampled_from([ProcessRole.SERVICE, ProcessRole.HELPER]),
              footprint_mib=st.integers(0, 64),
              emits_counter=st.booleans(),
              child_count=st.integers(0, 4)),
    max_size=3).map(tuple)

specs = st.builds(
    ContainerSpec,
    container_id=st.text(min_size=1, max_size=12,
                         alphabet=st.characters(min_codepoint=48, max_codepoint=122)),
    name=st.text(min_size=1, max_size=8),
    image_ref=st.just("img:1"),
    memory_limit_mib=st.integers(0, 512),
    cpu_millicores=st.integers(0, 4000),
    structure=st.sampled_from(Structure),
    process_template=templates,
    data_paths=st.lists(st.sampled_from(["/data", "/var/lib"]), max_size=2).map(tuple),
    labels=st.dictionaries(st.sampled_from(["app", "tier"]),
                           st.text(max_size=6), max_size=2),
)


@given(specs)
def test_spec_serialization_round_trip(spec):
    assert ContainerSpec.from_json(spec.to_json()) == spec


def sample_report(**kw):
    base = dict(spec_fetch_s=0.1, dest_create_s=1.0, control_block_s=0.4,
                checkpoint_s=1.2, transfer_s=1.1, restore_s=1.5, cleanup_s=1.0,
                total_s=5.4, downtime_s=3.0, bytes_transferred=1024)
    base.update(kw)
    return MigrationReport(**base)


def test_report_round_trip_and_bounds():
    r = sample_report()
    assert MigrationReport.from_dict(r.to_dict()) == r
    with pytest.raises(ModelError):
        sample_report(downtime_s=-0.1)
    with pytest.raises(ModelError):
        sample_report(restore_s=9.0)  # component above total
    # overlap means total does not have to equal the component sum
    assert r.total_s < (r.spec_fetch_s + r.dest_create_s + r.control_block_s
                        + r.checkpoint_s + r.transfer_s + r.restore_s)


def make_session():
    return MigrationSession(
        session_id="s1", container_id="a",
        approach=MigrationApproach.SERVICE_LEVEL,
        source=Endpoint("src", 7000), destination=Endpoint("dst", 7000))


def test_session_happy_path_steps():
    s = make_session()
    for step in range(1, 16):
        s.record_step(step, step * 1000)
    assert s.phase is Phase.POST_MIGRATION
    s.set_phase(Phase.COMPLETED)
    assert not s.source_retained


def test_session_source_retained_window():
    s = make_session()
    for step in range(1, 9):
        s.record_step(step, step)
    assert s.source_retained
    s.record_step(12, 12)
    assert s.source_retained
    s.record_step(13, 13)
    assert not s.source_retained


def test_session_rejects_backward_step():
    s = make_session()
    s.record_step(5, 10)
    with pytest.raises(IllegalTransition):
        s.record_step(4, 11)
    with pytest.raises(IllegalTransition):
        s.record_step(5, 9)  # timestamp going backward


def test_session_phase_rules():
    s = make_session()
    with pytest.raises(IllegalTransition):
        s.set_phase(Phase.POST_MIGRATION)  # skips MIGRATION
    s.fail("boom")
    assert s.phase is Phase.FAILED
    with pytest.raises(IllegalTransition):
        s.set_phase(Phase.COMPLETED)
    s.set_phase(Phase.ROLLED_BACK)
    with pytest.raises(IllegalTransition):
        s.record_step(9, 99)


@given(st.lists(st.one_of(
    st.tuples(st.just("step"), st.integers(1, 15)),
    st.tuples(st.just("phase"), st.sampled_from(Phase))), max_size=30))
def test_session_state_machine_never_goes_illegal(moves):
    """Random transition sequences: either the move is accepted and the
    invariants still hold, or it raises IllegalTransition."""
    s = make_session()
    t = 0
    for kind, value in moves:
        t += 1
        try:
            if kind == "step":
                s.record_step(value, t)
            else:
                s.set_phase(value)
        except IllegalTransition:
            continue
        # invariants after every accepted move
        times = [s.step_timestamps_ns[k] for k in sorted(s.step_timestamps_ns)]
        assert times == sorted(times)
        if s.phase is Phase.ROLLED_BACK:
            assert not s.source_retained


def test_session_serialization_round_trip():
    s = make_session()
    s.record_step(1, 5)
    s.record_step(8, 10)
    s.notes.append("note")
    again = MigrationSession.from_dict(s.to_dict())
    assert again.to_dict() == s.to_dict()


def test_memhog_spec_shape():
    spec = memhog_spec("m", 128, child_count=3)
    validate_spec(spec)
    assert spec.process_template[0].child_count == 3
    assert spec.total_template_footprint_mib() == 128
