"""Low-lying spectra of the annealing Hamiltonian and open-system dynamics.

The interpolating Hamiltonian is H(s) = A(s) H_x + B(s) H_p with the driver
H_x = -sum_i sigma_i^x and the diagonal problem term H_p from an Ising
instance. Energies are tracked in GHz (h = 1); the dissipator works with
angular frequencies omega = 2*pi*f in rad/ns and reports rates in 1/us.

Dynamics follow the weak-coupling master equation truncated to the lowest m
instantaneous eigenstates: the density matrix is expressed in the
instantaneous eigenbasis, the coherent part is a diagonal phase factor, and
population moves between levels only through the thermal dissipator built
from sigma_z coupling to independent Ohmic baths. Level identification
across grid slices is by energy order; overlap matrices between consecutive
eigenbases fix eigenvector phases and degenerate-pair rotations, drive grid
refinement where the basis turns quickly, and feed a leakage diagnostic for
the neglected nonadiabatic weight.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import eigsh

from .instance import IsingInstance, all_config_energies
from .schedule import AnnealPlan, AnnealSchedule, eval_schedule
from .units import NS_PER_US, TWO_PI, beta_angular, beta_energy, temperature_to_ghz

__all__ = [
    "BathParams",
    "SpectrumSlice",
    "TruncatedDensityMatrix",
    "LindbladSpec",
    "RelaxationRate",
    "GapResult",
    "ScalingResult",
    "AmeResult",
    "EigenbasisPath",
    "AmePauseScanner",
    "build_hamiltonian",
    "lowest_eigs",
    "min_gap",
    "spectral_density",
    "lindblad_generator",
    "gibbs_populations",
    "relaxation_rate",
    "matrix_element_scaling",
    "ame_evolve",
]


@dataclass(frozen=True)
class BathParams:
    """Ohmic bath: temperature, squared coupling, angular cutoff (rad/ns)."""

    temperature: float = 12.0
    temperature_unit: str = "mK"
    coupling_sq: float = 1e-3
    cutoff: float = 8.0 * math.pi

    def __post_init__(self):
        temperature_to_ghz(self.temperature, self.temperature_unit)
        if self.coupling_sq < 0:
            raise ValueError("coupling_sq must be nonnegative")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")

    @property
    def t_ghz(self) -> float:
        return temperature_to_ghz(self.temperature, self.temperature_unit)

    @property
    def beta(self) -> float:
        """Inverse temperature against GHz energies (1/GHz)."""
        return beta_energy(self.temperature, self.temperature_unit)

    @property
    def beta_ang(self) -> float:
        """Inverse temperature against angular frequencies (ns)."""
        return beta_angular(self.temperature, self.temperature_unit)


class NumericalFailure(RuntimeError):
    """Raised when a propagation or eigensolve leaves its validity domain."""


# ---------------------------------------------------------------------------
# Hamiltonian assembly


def _instance_parts(instance: IsingInstance):
    """Cached (H_x sparse, H_p diagonal, per-qubit sigma_z vectors)."""
    cached = _PARTS_CACHE.get(instance)
    if cached is not None:
        return cached
    n = instance.n
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    rows = np.concatenate([idx] * n)
    cols = np.concatenate([idx ^ (1 << i) for i in range(n)])
    data = np.full(n * dim, -1.0)
    hx = sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))
    ediag = all_config_energies(instance)
    zvec = np.empty((n, dim), dtype=np.int8)
    for i in range(n):
        zvec[i] = 1 - 2 * ((idx >> i) & 1)
    _PARTS_CACHE[instance] = (hx, ediag, zvec)
    if len(_PARTS_CACHE) > 8:
        _PARTS_CACHE.pop(next(iter(_PARTS_CACHE)))
    return hx, ediag, zvec


_PARTS_CACHE: dict = {}


def build_hamiltonian(instance: IsingInstance, schedule: AnnealSchedule, s: float):
    """Sparse H(s) = A(s) H_x + B(s) H_p in GHz over the 2^n bit basis."""
    if instance.n > 16:
        raise ValueError(f"n = {instance.n} too large for dense state vectors")
    hx, ediag, _ = _instance_parts(instance)
    a, b = eval_schedule(schedule, s)
    dim = ediag.size
    return (a * hx + sp.dia_matrix((b * ediag, 0), shape=(dim, dim))).tocsr()


# ---------------------------------------------------------------------------
# Spectra


@dataclass(eq=False)
class SpectrumSlice:
    """Lowest-m eigensystem at one s, phase-aligned to a previous slice."""

    s: float
    energies: np.ndarray            # (m,) GHz, nondecreasing
    vectors: np.ndarray             # (dim, m) real orthonormal
    overlap: np.ndarray | None = None   # (m, m) with the previous slice
    residual: float = 0.0

    @property
    def m(self) -> int:
        return self.energies.size

    @property
    def overlap_deviation(self) -> float:
        """How far the kept-subspace overlap is from orthogonal (0 = exact)."""
        if self.overlap is None:
            return 0.0
        g = self.overlap.T @ self.overlap
        return float(np.abs(g - np.eye(g.shape[0])).max())


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    v = vectors.copy()
    for a in range(v.shape[1]):
        lead = np.argmax(np.abs(v[:, a]))
        if v[lead, a] < 0:
            v[:, a] = -v[:, a]
    return v


def _degenerate_blocks(energies: np.ndarray, tol: float = 1e-9):
    blocks = []
    start = 0
    for a in range(1, energies.size + 1):
        if a == energies.size or energies[a] - energies[a - 1] > tol:
            blocks.append((start, a))
            start = a
    return blocks


def _align_to(prev_vectors: np.ndarray, vectors: np.ndarray, energies: np.ndarray):
    """Rotate degenerate blocks and fix signs for continuity with prev.

    Returns (aligned vectors, overlap matrix of the aligned vectors).
    """
    overlap = prev_vectors.T @ vectors
    aligned = vectors.copy()
    for a, b in _degenerate_blocks(energies):
        block = overlap[a:b, a:b]
        if b - a == 1:
            if block[0, 0] < 0:
                aligned[:, a] = -aligned[:, a]
                overlap[:, a] = -overlap[:, a]
            continue
        u, _, vt = np.linalg.svd(block)
        rot = vt.T @ u.T
        aligned[:, a:b] = aligned[:, a:b] @ rot
        overlap[:, a:b] = overlap[:, a:b] @ rot
    return aligned, overlap


def lowest_eigs(H, m: int, prev: SpectrumSlice | None = None, s: float = 0.0) -> SpectrumSlice:
    """Lowest m eigenpairs of a sparse symmetric H as a SpectrumSlice.

    Small problems fall back to dense diagonalization. Eigenvectors are
    sign-canonical; when a previous slice is given they are instead aligned
    to it (positive overlap diagonal, degenerate pairs rotated to match).
    """
    dim = H.shape[0]
    if m < 1:
        raise ValueError("m must be at least 1")
    m_eff = min(m, dim)
    if dim <= 64 or m_eff > dim - 2:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        vals, vecs = np.linalg.eigh(dense)
        vals, vecs = vals[:m_eff], vecs[:, :m_eff]
        residual = 0.0
    else:
        v0 = np.full(dim, 1.0 / math.sqrt(dim))
        vals, vecs = eigsh(H, k=m_eff, which="SA", v0=v0, tol=0)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        r = H @ vecs - vecs * vals
        residual = float(np.linalg.norm(r, axis=0).max())
        hnorm = float(np.abs(H).sum(axis=1).max())  # bounds the spectral norm
        if residual > 1e-8 * hnorm:
            raise NumericalFailure(
                f"eigensolve residual {residual:.2e} exceeds 1e-8*|H| at s={s}"
            )
    if prev is not None:
        vecs, overlap = _align_to(prev.vectors, vecs, vals)
    else:
        vecs = _canonical_signs(vecs)
        overlap = None
    return SpectrumSlice(s=s, energies=vals, vectors=vecs, overlap=overlap,
                         residual=residual)


# ---------------------------------------------------------------------------
# Symmetry-sector gap


def _flip_sector_matrices(instance: IsingInstance):
    """Driver and problem terms restricted to the even global-flip sector.

    Valid only for field-free instances, where H commutes with the product
    of all sigma_x. Basis states are (|x> + |x_flipped>)/sqrt(2) indexed by
    the representative min(x, x_flipped).
    """
    hx, ediag, _ = _instance_parts(instance)
    n = instance.n
    dim = 1 << n
    mask = dim - 1
    half = dim // 2          # representatives are exactly x < 2^(n-1)
    idx = np.arange(half, dtype=np.int64)
    rows = np.concatenate([idx] * n)
    flipped = np.concatenate([idx ^ (1 << i) for i in range(n)])
    cols = np.minimum(flipped, mask ^ flipped)
    data = np.full(n * half, -1.0)
    hx_plus = sp.csr_matrix((data, (rows, cols)), shape=(half, half))
    hp_plus = ediag[:half]
    return hx_plus, hp_plus


@dataclass(frozen=True)
class GapResult:
    s: float
    gap: float
    flagged: bool = False


def min_gap(instance: IsingInstance, schedule: AnnealSchedule,
            coarse: int = 101, tol: float = 1e-4) -> GapResult:
    """Location and size of the minimum gap above the tracked ground state.

    For field-free instances the gap is resolved inside the even global-flip
    sector (the sector holding the uniform-superposition start state); the
    full-spectrum gap collapses to the trivial late-anneal degeneracy there
    and has no interior minimum. A flat degenerate plateau is flagged and
    the interval midpoint returned.
    """
    if instance.has_fields:
        def gap_at(s):
            H = build_hamiltonian(instance, schedule, s)
            sl = lowest_eigs(H, 2, s=s)
            return sl.energies[1] - sl.energies[0]
    else:
        hx_plus, hp_plus = _flip_sector_matrices(instance)
        half = hp_plus.size
        if half < 2:
            raise ValueError("instance too small for a sector-resolved gap")
        diag_p = sp.dia_matrix((hp_plus, 0), shape=(half, half))
        v0 = np.full(half, 1.0 / math.sqrt(half))

        def gap_at(s):
            a, b = eval_schedule(schedule, s)
            H = (a * hx_plus + b * diag_p).tocsr()
            if half <= 64:
                vals = np.linalg.eigvalsh(H.toarray())[:2]
            else:
                vals = np.sort(eigsh(H, k=2, which="SA", v0=v0, tol=0,
                                     return_eigenvectors=False))
            return vals[1] - vals[0]

    grid = np.linspace(0.0, 1.0, coarse)
    gaps = np.array([gap_at(s) for s in grid])
    k = int(np.argmin(gaps))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, coarse - 1)]
    span = np.abs(gaps - gaps[k]) < 1e-12
    if span.sum() > coarse // 4:
        mid = float(grid[span].mean())
        return GapResult(s=mid, gap=float(gaps[k]), flagged=True)

    # golden-section refinement on the bracketing interval
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = gap_at(c), gap_at(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = gap_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = gap_at(d)
    s_min = (a + b) / 2.0
    return GapResult(s=float(s_min), gap=float(gap_at(s_min)), flagged=False)


# ---------------------------------------------------------------------------
# Bath spectral density and Lindblad structure


def spectral_density(omega, bath: BathParams):
    """Ohmic emission/absorption rate at Bohr frequency omega (GHz) in 1/us.

    gamma(omega) = 2*pi*kappa^2 * w * exp(-|w|/w_c) / (1 - exp(-beta*w))
    with w = 2*pi*omega angular; the omega -> 0 limit is 2*pi*kappa^2 / beta.
    Detailed balance gamma(-omega) = exp(-beta*omega) * gamma(omega) holds at
    the floating-point level.
    """
    w = TWO_PI * np.asarray(omega, dtype=float)
    x = bath.beta_ang * w
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        pos = w / (-np.expm1(-x))
        neg = w * np.exp(x) / np.expm1(x)
    f = np.where(x > 0, pos, np.where(x < 0, neg, 1.0 / bath.beta_ang))
    rate = TWO_PI * bath.coupling_sq * np.exp(-np.abs(w) / bath.cutoff) * f
    rate = rate * NS_PER_US
    if np.ndim(omega) == 0:
        return float(rate)
    return rate


def _bohr_bins(energies: np.ndarray, tol: float = 1e-6):
    """Cluster Bohr frequencies E_b - E_a into mirrored bins.

    Returns (sid, centers): sid[a, b] is a signed bin id (0 is the zero
    bin), centers[|sid|] the nonnegative bin centers in GHz, so the signed
    center for a pair is sign(sid) * centers[|sid|]. Mirroring guarantees
    that -omega accompanies every omega.
    """
    f = energies[None, :] - energies[:, None]
    absf = np.abs(f).ravel()
    order = np.argsort(absf)
    sorted_f = absf[order]
    cluster = np.zeros(absf.size, dtype=np.int64)
    cid = 0
    for k in range(1, absf.size):
        if sorted_f[k] - sorted_f[k - 1] > tol:
            cid += 1
        cluster[order[k]] = cid
    n_clusters = cid + 1
    centers = np.zeros(n_clusters)
    counts = np.zeros(n_clusters)
    np.add.at(centers, cluster, absf)
    np.add.at(counts, cluster, 1.0)
    centers /= counts
    centers[centers < tol] = 0.0
    m = energies.size
    cmat = cluster.reshape(m, m)
    sid = np.where(centers[cmat] == 0.0, 0,
                   np.sign(f).astype(np.int64) * (cmat + 1))
    return sid, centers


@dataclass(eq=False)
class LindbladSpec:
    """Jump structure at one s: one block per Bohr-frequency bin per qubit."""

    omegas: np.ndarray          # (n_bins,) signed bin centers, GHz
    rates: np.ndarray           # (n_bins,) gamma(omega) in 1/us
    jumps: list                 # n_bins entries, each (n, m, m) ndarray

    def reassembled_coupling(self, qubit: int) -> np.ndarray:
        """Sum of this qubit's jump matrices over all bins.

        Equals the kept-subspace projection of that qubit's sigma_z; the
        deviation from it is bounded by the truncation leakage.
        """
        return sum(j[qubit] for j in self.jumps)


def _z_elements(vectors: np.ndarray, zvec: np.ndarray) -> np.ndarray:
    """Per-qubit sigma_z matrix elements in the kept eigenbasis: (n, m, m)."""
    return np.einsum("xa,ix,xb->iab", vectors, zvec.astype(float), vectors,
                     optimize=True)


def lindblad_generator(slice_: SpectrumSlice, bath: BathParams,
                       instance: IsingInstance, bin_tol: float = 1e-6) -> LindbladSpec:
    """Davies jump operators and rates for one spectrum slice."""
    _, _, zvec = _instance_parts(instance)
    Z = _z_elements(slice_.vectors, zvec)
    sid, centers = _bohr_bins(slice_.energies, bin_tol)
    present = np.unique(sid)
    omegas = np.array([np.sign(b) * centers[abs(b) - 1] if b != 0 else 0.0
                       for b in present])
    rates = spectral_density(omegas, bath)
    jumps = []
    for b in present:
        mask = (sid == b).astype(float)
        jumps.append(Z * mask[None, :, :])
    return LindbladSpec(omegas=omegas, rates=np.atleast_1d(rates), jumps=jumps)


def _davies_ops(energies: np.ndarray, Z: np.ndarray, bath: BathParams,
                bin_tol: float = 1e-6):
    """Dense dissipator tensors for one slice.

    Returns (T, K): the action on rho is
        D(rho)[a, c] = sum_{b,d} T[a,b,c,d] rho[b,d] - (K rho + rho K)[a,c]/2
    with T real (eigenvectors are real) and K symmetric positive.
    """
    sid, centers = _bohr_bins(energies, bin_tol)
    signed = np.where(sid == 0, 0.0,
                      np.sign(sid) * centers[np.abs(sid) - 1])
    gm = spectral_density(signed, bath)
    eq = sid[:, :, None, None] == sid[None, None, :, :]
    T = np.einsum("iab,icd->abcd", Z, Z, optimize=True) * eq * gm[:, :, None, None]
    eq3 = sid[:, :, None] == sid[:, None, :]
    K = np.einsum("iab,iac,ab,abc->bc", Z, Z, gm, eq3.astype(float), optimize=True)
    return T, K


def gibbs_populations(slice_or_energies, bath: BathParams) -> np.ndarray:
    """Normalized e^(-beta E) populations over the kept levels."""
    energies = getattr(slice_or_energies, "energies", slice_or_energies)
    energies = np.asarray(energies, dtype=float)
    w = np.exp(-bath.beta * (energies - energies.min()))
    return w / w.sum()


@dataclass(frozen=True)
class RelaxationRate:
    """Decay rate from the first level above the ground cluster, 1/us."""

    total: float
    per_qubit: np.ndarray
    omega: float                # Bohr frequency of the channel, GHz
    degenerate: bool            # ground cluster holds more than one level
    cluster_size: int


def relaxation_rate(slice_: SpectrumSlice, bath: BathParams,
                    instance: IsingInstance, cluster_tol: float = 1e-2) -> RelaxationRate:
    """Rate of relaxation into the ground cluster from the level above it.

    Levels within cluster_tol (GHz) of the lowest energy form the target
    cluster; the reported rate sums gamma(E_j - E_a) |<a|sigma_i^z|j>|^2
    over cluster members a and qubits i, where j is the first level above
    the cluster. The proportionality constant is fixed to one.
    """
    E = slice_.energies
    if E.size < 2:
        raise ValueError("need at least two kept levels")
    cluster = np.nonzero(E - E[0] <= cluster_tol)[0]
    if cluster.size == E.size:
        raise NumericalFailure(
            "all kept levels degenerate within the cluster tolerance")
    j = int(cluster.size)
    _, _, zvec = _instance_parts(instance)
    vj = slice_.vectors[:, j]
    per_qubit = np.zeros(instance.n)
    for a in cluster:
        va = slice_.vectors[:, a]
        elems = (zvec.astype(float) * vj).dot(va)      # <a|Z_i|j> per qubit
        per_qubit += spectral_density(E[j] - E[a], bath) * elems**2
    return RelaxationRate(
        total=float(per_qubit.sum()),
        per_qubit=per_qubit,
        omega=float(E[j] - E[0]),
        degenerate=cluster.size > 1,
        cluster_size=int(cluster.size),
    )


# ---------------------------------------------------------------------------
# Perturbative scaling of the inter-doublet coupling element


@dataclass(frozen=True)
class ScalingResult:
    slope: float
    intercept: float
    residual_rms: float
    lambdas: np.ndarray
    values: np.ndarray
    dropped: tuple
    parity_ok: bool


def matrix_element_scaling(instance: IsingInstance, lambdas) -> ScalingResult:
    """Log-log slope of the total-sigma_z element between the two lowest
    doublets of H_p + lambda * H_x.

    For a field-free instance the global-flip symmetry makes single matrix
    elements between same-parity states vanish identically, so the reported
    value is the Frobenius norm of the 2x2 block between the ground-doublet
    span and the first-excited-doublet span, divided by sqrt(2); this equals
    the element magnitude between the symmetry-broken basin states and is
    invariant under rotations inside each doublet. Points where the excited
    doublet is not cleanly separated are dropped and reported.
    """
    lambdas = np.sort(np.asarray(lambdas, dtype=float))
    if lambdas.size < 3:
        raise ValueError("need at least three lambda values")
    hx, ediag, zvec = _instance_parts(instance)
    dim = ediag.size
    diag_p = sp.dia_matrix((ediag, 0), shape=(dim, dim))
    zsum = zvec.sum(axis=0).astype(float)
    v0 = np.full(dim, 1.0 / math.sqrt(dim))
    values, kept, dropped = [], [], []
    parity_ok = True
    for lam in lambdas:
        H = (lam * hx + diag_p).tocsr()
        vals, vecs = eigsh(H, k=6, which="SA", v0=v0, tol=0)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        if vals[4] - vals[3] < 1e-6:
            dropped.append(float(lam))
            continue
        vg = vecs[:, 0:2]
        ve = vecs[:, 2:4]
        block = ve.T @ (zsum[:, None] * vg)
        values.append(float(np.linalg.norm(block) / math.sqrt(2.0)))
        kept.append(float(lam))
        if not instance.has_fields:
            for pair in (vg, ve):
                pblock = pair.T @ pair[::-1, :]
                ev = np.sort(np.linalg.eigvalsh((pblock + pblock.T) / 2))
                if abs(ev[0] + 1) > 1e-8 or abs(ev[1] - 1) > 1e-8:
                    parity_ok = False
    kept = np.array(kept)
    values = np.array(values)
    if kept.size < 3:
        raise NumericalFailure("too few usable lambda points for a fit")
    coeffs, res = np.polyfit(np.log(kept), np.log(values), 1, full=True)[:2]
    rms = math.sqrt(res[0] / kept.size) if res.size else 0.0
    return ScalingResult(
        slope=float(coeffs[0]),
        intercept=float(coeffs[1]),
        residual_rms=rms,
        lambdas=kept,
        values=values,
        dropped=tuple(dropped),
        parity_ok=parity_ok,
    )


# ---------------------------------------------------------------------------
# Eigenbasis path: the per-slice data the propagator consumes


@dataclass(eq=False)
class _PathNode:
    s: float
    energies: np.ndarray       # (m,)
    Z: np.ndarray              # (n, m, m)
    ov_diag: np.ndarray        # (m,) overlap diagonal with previous node
    row_norms: np.ndarray      # (m,) kept-weight of each previous level
    residual: float


@dataclass(eq=False)
class EigenbasisPath:
    """Aligned lowest-m eigensystem data along an s grid.

    Built once per (instance, schedule, m, slices) and shared by every
    bath/temperature: the dissipator tensors are assembled per use from the
    stored energies and sigma_z elements.
    """

    instance: IsingInstance
    schedule: AnnealSchedule
    m: int
    s: np.ndarray
    energies: np.ndarray       # (N, m)
    Z: np.ndarray              # (N, n, m, m)
    ov_diag: np.ndarray        # (N, m), first row ones
    row_norms: np.ndarray      # (N, m), first row ones
    residuals: np.ndarray
    refined: int               # nodes inserted by refinement
    final_vectors: np.ndarray  # (dim, m) at s = 1 for readout checks

    @property
    def n_nodes(self) -> int:
        return self.s.size

    def ground_cluster(self, tol: float = 1e-6) -> np.ndarray:
        """Indices of the degenerate ground set at the final node."""
        E = self.energies[-1]
        return np.nonzero(E - E[0] <= tol)[0]

    @classmethod
    def build(cls, instance: IsingInstance, schedule: AnnealSchedule,
              m: int = 16, slices: int = 1024, refine_threshold: float = 0.99,
              refine_depth: int = 2) -> "EigenbasisPath":
        _, _, zvec = _instance_parts(instance)
        base = np.linspace(0.0, 1.0, slices + 1)
        nodes: list[_PathNode] = []
        state = {"prev": None, "inserted": 0}

        def make_node(s_val):
            H = build_hamiltonian(instance, schedule, s_val)
            sl = lowest_eigs(H, m, prev=state["prev"], s=s_val)
            if sl.overlap is None:
                ov_diag = np.ones(m)
                row_norms = np.ones(m)
            else:
                ov_diag = np.abs(np.diag(sl.overlap))
                row_norms = np.linalg.norm(sl.overlap, axis=1)
            node = _PathNode(
                s=s_val,
                energies=sl.energies,
                Z=_z_elements(sl.vectors, zvec),
                ov_diag=ov_diag,
                row_norms=row_norms,
                residual=sl.residual,
            )
            return node, sl

        def advance(s_val, depth):
            node, sl = make_node(s_val)
            if depth < refine_depth and node.ov_diag.min() < refine_threshold \
                    and state["prev"] is not None:
                mid = (state["prev"].s + s_val) / 2.0
                state["inserted"] += 1
                advance(mid, depth + 1)
                advance(s_val, depth + 1)
                return
            nodes.append(node)
            state["prev"] = sl

        for s_val in base:
            advance(float(s_val), 0)

        return cls(
            instance=instance,
            schedule=schedule,
            m=m,
            s=np.array([nd.s for nd in nodes]),
            energies=np.stack([nd.energies for nd in nodes]),
            Z=np.stack([nd.Z for nd in nodes]),
            ov_diag=np.stack([nd.ov_diag for nd in nodes]),
            row_norms=np.stack([nd.row_norms for nd in nodes]),
            residuals=np.array([nd.residual for nd in nodes]),
            refined=state["inserted"],
            final_vectors=state["prev"].vectors,
        )


_PATH_CACHE: dict = {}


def _schedule_digest(schedule: AnnealSchedule) -> str:
    h = hashlib.sha256()
    for arr in (schedule.s, schedule.A, schedule.B):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def get_path(instance: IsingInstance, schedule: AnnealSchedule,
             m: int = 16, slices: int = 1024) -> EigenbasisPath:
    """Build or fetch the cached eigenbasis path for these settings."""
    key = (instance, _schedule_digest(schedule), m, slices)
    path = _PATH_CACHE.get(key)
    if path is None:
        path = EigenbasisPath.build(instance, schedule, m=m, slices=slices)
        _PATH_CACHE[key] = path
        if len(_PATH_CACHE) > 4:
            _PATH_CACHE.pop(next(iter(_PATH_CACHE)))
    return path


# ---------------------------------------------------------------------------
# Propagation


@dataclass(eq=False)
class TruncatedDensityMatrix:
    """m x m density matrix in the instantaneous eigenbasis at one s."""

    rho: np.ndarray
    s: float

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho))

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def validate(self, trace_tol: float = 1e-3, herm_tol: float = 1e-10,
                 eig_floor: float = -1e-8) -> None:
        if np.abs(self.rho - self.rho.conj().T).max() > herm_tol:
            raise NumericalFailure(f"state not Hermitian at s={self.s}")
        if abs(self.trace - 1.0) > trace_tol:
            raise NumericalFailure(f"trace drift {self.trace - 1.0:.2e} at s={self.s}")
        if np.linalg.eigvalsh(self.rho).min() < eig_floor:
            raise NumericalFailure(f"negative population at s={self.s}")


def _phase_factor(energies: np.ndarray, t_us: float) -> np.ndarray:
    """Coherent phase multiplier for a duration t (us) at fixed energies."""
    w = TWO_PI * (energies[:, None] - energies[None, :])  # rad/ns
    return np.exp(-1j * w * (t_us * NS_PER_US))


def _dissipator_substeps(kmax: float, t: float) -> int:
    return max(1, int(math.ceil(kmax * t / 0.02)))


def _apply_dissipator(T, K, rho, t: float, n_steps: int):
    """Action of exp(t D) on rho via an n_steps-fold 4th-order expansion."""
    h = t / n_steps
    for _ in range(n_steps):
        term = rho
        acc = rho.copy()
        for j in range(1, 5):
            term = (np.einsum("abcd,bd->ac", T, term, optimize=True)
                    - 0.5 * (K @ term + term @ K)) * (h / j)
            acc = acc + term
        rho = acc
    return rho


def _apply_dissipator_adjoint(T, K, w, t: float, n_steps: int):
    h = t / n_steps
    for _ in range(n_steps):
        term = w
        acc = w.copy()
        for j in range(1, 5):
            term = (np.einsum("abcd,ac->bd", T, term, optimize=True)
                    - 0.5 * (K @ term + term @ K)) * (h / j)
            acc = acc + term
        w = acc
    return w


def _superoperator(T, K) -> np.ndarray:
    m = K.shape[0]
    eye = np.eye(m)
    return (T.transpose(0, 2, 1, 3).reshape(m * m, m * m)
            - 0.5 * (np.kron(K, eye) + np.kron(eye, K.T)))


@dataclass(eq=False)
class AmeResult:
    """Outcome of one master-equation anneal."""

    p0: float
    trajectory: list            # of TruncatedDensityMatrix
    times: np.ndarray           # us, aligned with trajectory
    leak: float                 # accumulated neglected nonadiabatic weight
    trace_drift: float
    pause_s: float | None
    final_populations: np.ndarray


def ame_evolve(instance: IsingInstance, schedule: AnnealSchedule,
               plan: AnnealPlan, bath: BathParams, m: int = 16,
               slices: int = 1024, path: EigenbasisPath | None = None,
               record_every: int = 8, leak_abort: float = 1e-2,
               check_local_error: bool = True) -> AmeResult:
    """Propagate the truncated master equation along the anneal.

    The state starts as the instantaneous ground state at s = 0 and is
    reported as the summed population of the degenerate ground set at
    s = 1. Pauses are applied at the grid node nearest s_p using the exact
    matrix exponential of the frozen generator. The accumulated
    population-weighted nonadiabatic weight (what the adiabatic frame
    neglects) aborts the run above leak_abort, the cue to increase m.
    """
    if path is None:
        path = get_path(instance, schedule, m=m, slices=slices)
    m = path.m
    N = path.n_nodes
    s_grid = path.s
    t_a = plan.t_a
    pause_node = None
    if plan.has_pause:
        pause_node = int(np.argmin(np.abs(s_grid - plan.s_p)))

    halves_before = np.empty(N)
    halves_after = np.empty(N)
    halves_before[0] = 0.0
    halves_after[-1] = 0.0
    halves_before[1:] = np.diff(s_grid) / 2.0 * t_a
    halves_after[:-1] = np.diff(s_grid) / 2.0 * t_a

    dissipative = bath.coupling_sq > 0
    rho = np.zeros((m, m), dtype=complex)
    rho[0, 0] = 1.0
    leak = 0.0
    trace_drift = 0.0
    trajectory, times = [], []
    t_now = 0.0
    checked_error = False

    for k in range(N):
        E = path.energies[k]
        if dissipative:
            T, K = _davies_ops(E, path.Z[k], bath)
            kmax = float(np.max(np.diag(K).real))
        if k > 0:
            pops = np.real(np.diag(rho))
            leak += float(pops @ (1.0 - path.row_norms[k] ** 2))
            if leak > leak_abort:
                raise NumericalFailure(
                    f"nonadiabatic leakage {leak:.3e} beyond {leak_abort:.0e} "
                    f"at s={s_grid[k]:.4f}; increase the kept-level count m")

        def ramp(state, dt):
            if dt == 0.0:
                return state
            if dissipative:
                n_steps = _dissipator_substeps(kmax, dt)
                state = _apply_dissipator(T, K, state, dt, n_steps)
            return _phase_factor(E, dt) * state

        if check_local_error and not checked_error and dissipative \
                and halves_before[k] > 0 and kmax * halves_before[k] > 0.05:
            n_steps = _dissipator_substeps(kmax, halves_before[k])
            once = _apply_dissipator(T, K, rho, halves_before[k], n_steps)
            twice = _apply_dissipator(T, K, rho, halves_before[k], 2 * n_steps)
            if np.abs(once - twice).max() > 1e-8:
                raise NumericalFailure("dissipator sub-step error above 1e-8")
            checked_error = True
            rho = _phase_factor(E, halves_before[k]) * once
        else:
            rho = ramp(rho, halves_before[k])
        t_now += halves_before[k]

        if pause_node == k and plan.t_p > 0:
            if dissipative:
                prop = expm(_superoperator(T, K) * plan.t_p)
                rho = (prop @ rho.reshape(-1)).reshape(m, m)
            rho = _phase_factor(E, plan.t_p) * rho
            t_now += plan.t_p

        if k % record_every == 0 or k == N - 1 or pause_node == k:
            trajectory.append(TruncatedDensityMatrix(rho=rho.copy(), s=float(s_grid[k])))
            times.append(t_now)

        rho = ramp(rho, halves_after[k])
        t_now += halves_after[k]
        trace_drift = max(trace_drift, abs(float(np.trace(rho).real) - 1.0))

    cluster = path.ground_cluster()
    pops = np.real(np.diag(rho))
    return AmeResult(
        p0=float(pops[cluster].sum()),
        trajectory=trajectory,
        times=np.array(times),
        leak=leak,
        trace_drift=trace_drift,
        pause_s=(float(s_grid[pause_node]) if pause_node is not None else None),
        final_populations=pops,
    )


# ---------------------------------------------------------------------------
# Factorized pause scans


class AmePauseScanner:
    """Shared-work scans of P0 over pause location and duration.

    One forward pass stores the state reaching every grid node; one adjoint
    pass stores the functional that maps a state at that node to the final
    ground-set population. A pause inserted at node k for time t_p then
    costs a single frozen-generator exponential, so full (s_p, t_p) grids
    reuse all ramp work. Contracting functional with state at any node
    reproduces the no-pause baseline; that identity is exposed for tests.
    """

    def __init__(self, path: EigenbasisPath, bath: BathParams, t_a: float = 1.0):
        self.path = path
        self.bath = bath
        self.t_a = t_a
        m = path.m
        N = path.n_nodes
        s_grid = path.s
        halves_before = np.empty(N)
        halves_after = np.empty(N)
        halves_before[0] = 0.0
        halves_after[-1] = 0.0
        halves_before[1:] = np.diff(s_grid) / 2.0 * t_a
        halves_after[:-1] = np.diff(s_grid) / 2.0 * t_a
        self._halves = (halves_before, halves_after)
        dissipative = bath.coupling_sq > 0

        kmaxs = np.zeros(N)
        self.prefixes = np.empty((N, m, m), dtype=complex)
        rho = np.zeros((m, m), dtype=complex)
        rho[0, 0] = 1.0
        leak = 0.0
        for k in range(N):
            E = path.energies[k]
            if dissipative:
                T, K = _davies_ops(E, path.Z[k], bath)
                kmaxs[k] = float(np.max(np.diag(K).real))
            if k > 0:
                pops = np.real(np.diag(rho))
                leak += float(pops @ (1.0 - path.row_norms[k] ** 2))
            if halves_before[k] > 0:
                if dissipative:
                    rho = _apply_dissipator(
                        T, K, rho, halves_before[k],
                        _dissipator_substeps(kmaxs[k], halves_before[k]))
                rho = _phase_factor(E, halves_before[k]) * rho
            self.prefixes[k] = rho
            if halves_after[k] > 0:
                if dissipative:
                    rho = _apply_dissipator(
                        T, K, rho, halves_after[k],
                        _dissipator_substeps(kmaxs[k], halves_after[k]))
                rho = _phase_factor(E, halves_after[k]) * rho
        self.leak = leak
        self._kmaxs = kmaxs

        cluster = path.ground_cluster()
        w = np.zeros((m, m), dtype=complex)
        for a in cluster:
            w[a, a] = 1.0
        self.functionals = np.empty((N, m, m), dtype=complex)
        for k in range(N - 1, -1, -1):
            E = path.energies[k]
            if dissipative:
                T, K = _davies_ops(E, path.Z[k], bath)
            if halves_after[k] > 0:
                w = np.conj(_phase_factor(E, halves_after[k])) * w
                if dissipative:
                    w = _apply_dissipator_adjoint(
                        T, K, w, halves_after[k],
                        _dissipator_substeps(kmaxs[k], halves_after[k]))
            self.functionals[k] = w
            if halves_before[k] > 0:
                w = np.conj(_phase_factor(E, halves_before[k])) * w
                if dissipative:
                    w = _apply_dissipator_adjoint(
                        T, K, w, halves_before[k],
                        _dissipator_substeps(kmaxs[k], halves_before[k]))

        final_pops = np.real(np.diag(self.prefixes[-1]))
        self.baseline_p0 = float(final_pops[cluster].sum())

    def node_for(self, s_p: float) -> int:
        return int(np.argmin(np.abs(self.path.s - s_p)))

    def contract(self, k: int) -> float:
        """Functional-state contraction at node k (baseline identity)."""
        return float(np.real(np.sum(np.conj(self.functionals[k]) * self.prefixes[k])))

    def p0_with_pause(self, s_p: float, t_p: float) -> float:
        """Final ground-set population with a pause of t_p at s_p."""
        k = self.node_for(s_p)
        if t_p == 0:
            return self.contract(k)
        E = self.path.energies[k]
        rho = self.prefixes[k]
        if self.bath.coupling_sq > 0:
            T, K = _davies_ops(E, self.path.Z[k], self.bath)
            prop = expm(_superoperator(T, K) * t_p)
            rho = (prop @ rho.reshape(-1)).reshape(*rho.shape)
        rho = _phase_factor(E, t_p) * rho
        return float(np.real(np.sum(np.conj(self.functionals[k]) * rho)))

    def scan(self, s_values, t_values) -> np.ndarray:
        """P0 grid with pauses at each (s_p, t_p); rows follow s_values."""
        out = np.empty((len(s_values), len(t_values)))
        for i, s_p in enumerate(s_values):
            k = self.node_for(s_p)
            E = self.path.energies[k]
            if self.bath.coupling_sq > 0:
                T, K = _davies_ops(E, self.path.Z[k], self.bath)
                D = _superoperator(T, K)
            for j, t_p in enumerate(t_values):
                if t_p == 0:
                    out[i, j] = self.contract(k)
                    continue
                rho = self.prefixes[k]
                if self.bath.coupling_sq > 0:
                    rho = (expm(D * t_p) @ rho.reshape(-1)).reshape(*rho.shape)
                rho = _phase_factor(E, t_p) * rho
                out[i, j] = float(np.real(
                    np.sum(np.conj(self.functionals[k]) * rho)))
        return out
