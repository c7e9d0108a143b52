import numpy as np
import pytest

from pauselab.instance import (SpinConfig, IsingInstance, all_config_energies,
                               brute_force_spectrum, bundled_instance,
                               ising_energy, load_instance)

# Exhaustively verified reference values for the bundled 12-qubit problem.
GROUND_ENERGY = -9.631935489225
FIRST_EXCITED = -9.076419202697
SECOND_EXCITED = -8.998284383601
GROUND_STRINGS = {"000110110000", "111001001111"}
FIRST_PAIR = {655, 3440}
SECOND_PAIR = {911, 3184}


def test_spin_config_round_trip():
    c = SpinConfig("0110")
    assert c.value == 6
    assert SpinConfig.from_int(6, 4) == c
    # rightmost label character is qubit 0
    assert [c.bit(i) for i in range(4)] == [0, 1, 1, 0]
    assert np.array_equal(c.spins(), [1, -1, -1, 1])


def test_complement_and_hamming():
    c = SpinConfig("0011")
    assert c.complement().label == "1100"
    assert c.hamming(c.complement()) == 4
    assert c.hamming(c) == 0


def test_config_rejects_junk():
    with pytest.raises(ValueError):
        SpinConfig("01x0")
    with pytest.raises(ValueError):
        SpinConfig("")


def test_load_instance_normalizes_pairs():
    inst = load_instance("n 3\nJ 2 0 0.5\nJ 0 1 -1.0\nh 2 0.25\n")
    assert inst.n == 3
    assert (0, 2, 0.5) in inst.couplings
    assert inst.has_fields
    J = inst.coupling_matrix()
    assert J[0, 2] == J[2, 0] == 0.5


def test_load_instance_rejects_duplicate_pair():
    with pytest.raises(ValueError):
        load_instance("J 0 1 1.0\nJ 1 0 0.5\n")


def test_energy_matches_hand_sum():
    inst = load_instance("J 0 1 -0.7\nh 0 0.2\nh 1 -0.4\n")
    for value in range(4):
        c = SpinConfig.from_int(value, 2)
        s = c.spins()
        want = -0.7 * s[0] * s[1] + 0.2 * s[0] - 0.4 * s[1]
        assert ising_energy(inst, c) == pytest.approx(want, abs=1e-12)


def test_all_config_energies_agrees_pointwise():
    inst = bundled_instance()
    table = all_config_energies(inst)
    rng = np.random.default_rng(7)
    for value in rng.integers(0, table.size, size=25):
        c = SpinConfig.from_int(int(value), inst.n)
        assert table[value] == pytest.approx(ising_energy(inst, c), abs=1e-9)


def test_bundled_ground_doublet():
    spec = brute_force_spectrum(bundled_instance())
    assert spec.energy(0) == pytest.approx(GROUND_ENERGY, abs=1e-9)
    assert {c.label for c in spec.configs(0)} == GROUND_STRINGS
    labels = list(GROUND_STRINGS)
    assert SpinConfig(labels[0]).complement().label == labels[1]


def test_bundled_low_excitations():
    spec = brute_force_spectrum(bundled_instance())
    assert spec.energy(1) == pytest.approx(FIRST_EXCITED, abs=1e-9)
    assert spec.energy(2) == pytest.approx(SECOND_EXCITED, abs=1e-9)
    assert {c.value for c in spec.configs(1)} == FIRST_PAIR
    assert {c.value for c in spec.configs(2)} == SECOND_PAIR
    assert spec.gap(2, 1) == pytest.approx(0.078134819096, abs=1e-9)


def test_excited_partners_differ_at_one_qubit():
    spec = brute_force_spectrum(bundled_instance())
    a = spec.configs(1)[0]
    pairs = [(a, b) for b in spec.configs(2) if a.hamming(b) == 1]
    assert pairs
    a, b = pairs[0]
    flipped = [q for q in range(a.n) if a.bit(q) != b.bit(q)]
    assert flipped == [8]


def test_field_free_spectrum_is_doubled():
    # every level of a zero-field instance pairs with its global flip
    spec = brute_force_spectrum(bundled_instance())
    for k in range(4):
        values = {c.value for c in spec.configs(k)}
        mask = (1 << 12) - 1
        assert values == {v ^ mask for v in values}
