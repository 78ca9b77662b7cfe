import pytest

from mfawb.adversary import (AdversaryModel, ChannelTap, LeakOrderError, ReplayChannel, SelectorError,
                             compromise, historical_records, mitm_session, observe)
from mfawb.protocols.model import load_model
from mfawb.protocols.runtime import as_symbolic, register, run_session, seeded


def _deploy(pid, label="adv"):
    rng = seeded(label)
    return register(load_model(pid), rng), rng


def test_unknown_channel_mode():
    with pytest.raises(SelectorError):
        AdversaryModel("telepathy")
    with pytest.raises(SelectorError):
        AdversaryModel(historical_fraction=1.5)


def test_selector_must_name_existing_items():
    m = load_model("P2")
    with pytest.raises(SelectorError):
        AdversaryModel(factors=("NOPE",)).validate(m)
    with pytest.raises(SelectorError):
        AdversaryModel(stores=("X.db",)).validate(m)
    with pytest.raises(SelectorError):
        AdversaryModel(device_read=("Z",)).validate(m)


def test_all_factors_of_a_role_need_a_device_read():
    m = load_model("P2")
    every = tuple(f.id for f in m.factors)
    with pytest.raises(SelectorError, match="device read"):
        AdversaryModel(factors=every).validate(m)
    AdversaryModel(factors=every, device_read=("U",)).validate(m)


def test_compromise_returns_factor_material_only():
    dep, _ = _deploy("P2")
    leaked = compromise(dep, AdversaryModel(factors=("PW",)))
    assert set(leaked) == {"ID_i", "PW_i"}
    assert leaked["ID_i"] == dep.values["ID_i"]


def test_longterm_leak_waits_for_the_session():
    dep, rng = _deploy("P2")
    adv = AdversaryModel(longterm_leak=True)
    with pytest.raises(LeakOrderError):
        compromise(dep, adv)
    tr = run_session(dep, rng=rng)
    leaked = compromise(dep, adv, after=tr)
    assert "X_sc" in leaked and "V_1" not in leaked


def test_eavesdropper_sees_plain_payloads_only():
    dep, rng = _deploy("P2")
    tr = run_session(dep, ChannelTap("eavesdrop"), rng)
    seen = {str(t) for t, _ in observe(tr)}
    assert seen == {"GID_i", "A_U", "M_2", "A_S"}


def test_eavesdropper_cannot_inject():
    with pytest.raises(SelectorError):
        ChannelTap("eavesdrop").inject(0, [b""])


def test_injection_changes_delivered_message():
    dep, rng = _deploy("P2")
    tap = ChannelTap("intercept-inject")
    tap.inject(0, [bytes(16), bytes(32)])
    tr = run_session(dep, tap, rng)
    assert not tr.agreed
    assert tap.captured[0].values != (bytes(16), bytes(32))


def test_replay_channel_substitutes_recorded_message():
    dep, rng = _deploy("P2")
    old = run_session(dep, ChannelTap(), rng)
    ch = ReplayChannel(old.messages[0])
    run_session(dep, ch, rng)
    assert ch.captured[0].values != old.messages[0].values


def test_symbolic_view_contains_wire_and_compromised_atoms():
    m = load_model("P2")
    kb, goal = as_symbolic(m, AdversaryModel(factors=("PW",)))
    names = {str(f) for f in kb.facts}
    assert {"GID_i", "M_2", "ID_i", "PW_i"} <= names
    assert "B_i" not in names
    assert str(goal) == "SK"
    blind, _ = as_symbolic(m, AdversaryModel("none"))
    assert "GID_i" not in {str(f) for f in blind.facts}


def test_bounded_retrieval_fraction():
    dep, _ = _deploy("P1woFS")
    full = historical_records(dep, AdversaryModel(factors=("HD",)))
    part = historical_records(dep, AdversaryModel(factors=("HD",), historical_fraction=0.25))
    assert full and len(part) == round(len(full) * 0.25)
    assert part == full[:len(part)]


def test_mitm_requires_full_control_and_p10():
    dep, rng = _deploy("P10")
    with pytest.raises(SelectorError):
        mitm_session(dep, AdversaryModel("eavesdrop"), rng)
    dep2, rng2 = _deploy("P2")
    with pytest.raises(SelectorError):
        mitm_session(dep2, AdversaryModel("full-mitm"), rng2)


def test_mitm_without_device_identity_fails():
    dep, rng = _deploy("P10")
    dual = mitm_session(dep, AdversaryModel("full-mitm"), rng, id_candidates=())
    assert not dual.established
    assert dual.identified is None
