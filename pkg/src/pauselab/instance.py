"""Ising problem instances and an exact brute-force spectrum oracle.

An instance is a collection of pair couplings J_ij and local fields h_i on n
qubits, defining the diagonal problem Hamiltonian

    H_p = sum_{i<j} J_ij sigma_i^z sigma_j^z + sum_i h_i sigma_i^z

in dimensionless Ising units (the J scale). Conversion to GHz happens only
where H_p is multiplied by the annealing envelope B(s).

Configurations are labelled by bit strings read as ordinary binary numbers:
the rightmost character is the least significant bit and is qubit 0. Bit
value 0 maps to sigma_z = +1, bit value 1 to sigma_z = -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

__all__ = [
    "IsingInstance",
    "SpinConfig",
    "ClassicalSpectrum",
    "load_instance",
    "bundled_instance",
    "ising_energy",
    "brute_force_spectrum",
]


@dataclass(frozen=True)
class SpinConfig:
    """A classical spin configuration as a bit-string label.

    label[-1] is qubit 0 (least significant bit); '0' means sigma_z = +1.
    """

    label: str

    def __post_init__(self):
        if not self.label or any(c not in "01" for c in self.label):
            raise ValueError(f"label must be a nonempty bit string, got {self.label!r}")

    @property
    def n(self) -> int:
        return len(self.label)

    @property
    def value(self) -> int:
        return int(self.label, 2)

    @classmethod
    def from_int(cls, value: int, n: int) -> "SpinConfig":
        if not 0 <= value < (1 << n):
            raise ValueError(f"value {value} out of range for {n} bits")
        return cls(format(value, f"0{n}b"))

    def bit(self, qubit: int) -> int:
        """Bit value of one qubit (0-based, qubit 0 is the rightmost char)."""
        return int(self.label[self.n - 1 - qubit])

    def spins(self) -> np.ndarray:
        """sigma_z eigenvalues indexed by qubit: +1 for bit 0, -1 for bit 1."""
        bits = np.frombuffer(self.label.encode(), dtype=np.uint8) - ord("0")
        return (1 - 2 * bits[::-1].astype(np.int8)).astype(np.int8)

    def complement(self) -> "SpinConfig":
        return SpinConfig("".join("1" if c == "0" else "0" for c in self.label))

    def hamming(self, other: "SpinConfig") -> int:
        if other.n != self.n:
            raise ValueError("length mismatch")
        return bin(self.value ^ other.value).count("1")


@dataclass(frozen=True)
class IsingInstance:
    """n qubits with couplings [(i, j, J_ij)] (i < j) and fields [(i, h_i)]."""

    n: int
    couplings: tuple
    fields: tuple = ()

    def __post_init__(self):
        seen = set()
        for i, j, J in self.couplings:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"coupling index out of range: ({i}, {j})")
            if i >= j:
                raise ValueError(f"couplings must have i < j, got ({i}, {j})")
            if (i, j) in seen:
                raise ValueError(f"duplicate coupling ({i}, {j})")
            seen.add((i, j))
            float(J)
        seen_h = set()
        for i, h in self.fields:
            if not 0 <= i < self.n:
                raise ValueError(f"field index out of range: {i}")
            if i in seen_h:
                raise ValueError(f"duplicate field for qubit {i}")
            seen_h.add(i)
            float(h)

    @property
    def has_fields(self) -> bool:
        return any(h != 0.0 for _, h in self.fields)

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric n x n matrix with J_ij in both (i,j) and (j,i)."""
        J = np.zeros((self.n, self.n))
        for i, j, val in self.couplings:
            J[i, j] = J[j, i] = val
        return J

    def field_vector(self) -> np.ndarray:
        h = np.zeros(self.n)
        for i, val in self.fields:
            h[i] = val
        return h


@dataclass(frozen=True)
class ClassicalSpectrum:
    """Sorted distinct energy levels of H_p with their degenerate configs."""

    levels: tuple  # of (energy: float, configs: tuple[SpinConfig, ...])

    def energy(self, k: int) -> float:
        return self.levels[k][0]

    def configs(self, k: int) -> tuple:
        return self.levels[k][1]

    def gap(self, k: int, j: int = 0) -> float:
        return self.levels[k][0] - self.levels[j][0]


def load_instance(text: str) -> IsingInstance:
    """Parse an instance from structured text.

    Records, one per line: ``J i j value`` couplings, ``h i value`` fields,
    an optional ``n count`` header, comments starting with ``#``. Bare
    ``i j value`` / ``i value`` lines are accepted as untagged couplings and
    fields. Coupling pairs given as (i, j) with i > j are normalized to
    (j, i); a pair seen twice after normalization is an error.
    """
    n_decl = None
    couplings = {}
    fields = {}
    max_idx = -1
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0].lower()
        try:
            if tag == "n" and len(parts) == 2:
                n_decl = int(parts[1])
                continue
            if tag == "j" and len(parts) == 4:
                i, j, val = int(parts[1]), int(parts[2]), float(parts[3])
            elif tag == "h" and len(parts) == 3:
                i, val = int(parts[1]), float(parts[2])
                j = None
            elif len(parts) == 3:
                i, j, val = int(parts[0]), int(parts[1]), float(parts[2])
            elif len(parts) == 2:
                i, val = int(parts[0]), float(parts[1])
                j = None
            else:
                raise ValueError("unrecognized record")
        except ValueError as exc:
            raise ValueError(f"line {ln}: cannot parse {raw!r} ({exc})") from None
        if j is None:
            if i in fields:
                raise ValueError(f"line {ln}: duplicate field for qubit {i}")
            fields[i] = val
            max_idx = max(max_idx, i)
        else:
            if i == j:
                raise ValueError(f"line {ln}: self-coupling ({i}, {j})")
            if i > j:
                i, j = j, i
            if (i, j) in couplings:
                raise ValueError(f"line {ln}: duplicate coupling ({i}, {j})")
            couplings[(i, j)] = val
            max_idx = max(max_idx, j)
    n = n_decl if n_decl is not None else max_idx + 1
    if n < 1:
        raise ValueError("instance declares no qubits")
    return IsingInstance(
        n=n,
        couplings=tuple((i, j, v) for (i, j), v in sorted(couplings.items())),
        fields=tuple(sorted(fields.items())),
    )


def bundled_instance(name: str = "I12_0") -> IsingInstance:
    """Load one of the instance files shipped with the package."""
    path = resources.files("pauselab").joinpath("instances", name)
    return load_instance(path.read_text())


def ising_energy(instance: IsingInstance, config: SpinConfig) -> float:
    """Energy of one configuration in Ising units."""
    if config.n != instance.n:
        raise ValueError(f"config has {config.n} bits, instance has {instance.n}")
    s = config.spins().astype(float)
    e = 0.0
    for i, j, J in instance.couplings:
        e += J * s[i] * s[j]
    for i, h in instance.fields:
        e += h * s[i]
    return e


def all_config_energies(instance: IsingInstance) -> np.ndarray:
    """Vector of H_p diagonal entries for all 2^n configurations.

    Index order is the integer value of the bit-string label, so entry k is
    the energy of SpinConfig.from_int(k, n). Chunked so n up to 24 stays
    within a modest memory budget.
    """
    n = instance.n
    if n > 24:
        raise ValueError(f"n = {n} exceeds the exhaustive enumeration budget (24)")
    J = instance.coupling_matrix()
    h = instance.field_vector()
    total = 1 << n
    energies = np.empty(total)
    chunk = min(total, 1 << 20)
    qubits = np.arange(n)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.uint32)
        bits = (idx[:, None] >> qubits[None, :]) & 1
        s = 1.0 - 2.0 * bits
        energies[start : start + len(idx)] = (
            0.5 * np.einsum("ki,ij,kj->k", s, J, s) + s @ h
        )
    return energies


def brute_force_spectrum(instance: IsingInstance, max_levels: int | None = None) -> ClassicalSpectrum:
    """Exact sorted spectrum of H_p by exhaustive enumeration (n <= 24).

    Levels are grouped with an absolute tolerance of 1e-9 so that exactly
    symmetric degeneracies (identical floating-point sums) land together
    without merging genuinely distinct levels.
    """
    energies = all_config_energies(instance)
    order = np.argsort(energies, kind="stable")
    sorted_e = energies[order]
    breaks = np.nonzero(np.diff(sorted_e) > 1e-9)[0]
    bounds = np.concatenate(([0], breaks + 1, [len(sorted_e)]))
    n = instance.n
    levels = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if max_levels is not None and len(levels) >= max_levels:
            break
        members = sorted(int(v) for v in order[a:b])
        configs = tuple(SpinConfig.from_int(v, n) for v in members)
        levels.append((float(np.mean(sorted_e[a:b])), configs))
    return ClassicalSpectrum(levels=tuple(levels))
