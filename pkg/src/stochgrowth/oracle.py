"""Brute-force ground truth at tiny scale.

Two independent referees for the production step engine:

* path enumeration: the unnormalized population N_t is rebuilt as an
  explicit sum over every step sequence through the kernel support,
  multiplying the same matrix entries the simulator reads from the
  identical keyed stream. For the 0/1-entry models the result is an exact
  integer count of open oriented paths, so agreement can be required
  bit for bit rather than within a tolerance;

* exhaustive disorder enumeration: for the site-percolation models with a
  small number of relevant disorder bits, the full finite law of the
  normalized mass and of the overlap is computed in rational arithmetic,
  and the martingale identity E|mass| = 1 is checked as an exact equality
  of fractions.

The oracle regenerates disorder from (seed, replica) through the scalar
stream twin instead of accepting sampled matrices; a slot-layout bug in
either lane shows up as a divergence here.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .disorder import DisorderStream
from .lattice import BudgetError, SitePoint, WeightField, initial_state
from .models import LatticeModel

_PATH_BUDGET = 2_000_000
_BIT_BUDGET = 24

_INTEGER_KINDS = ("osp", "gosp", "gobp")


@dataclass
class PathEnumeration:
    """Exact unnormalized population from explicit path summation."""

    dim: int
    t: int
    integer_valued: bool
    counts: dict[SitePoint, object]  # int for 0/1-entry models, float otherwise

    def total(self):
        return sum(self.counts[s] for s in sorted(self.counts))

    def as_weight_field(self) -> WeightField:
        return WeightField.from_dict(
            {s: float(v) for s, v in self.counts.items()}, self.dim
        )


def enumerate_exact(
    model: LatticeModel,
    stream: DisorderStream,
    t: int,
    *,
    budget: int = _PATH_BUDGET,
) -> PathEnumeration:
    """N_t by explicit sum over all step sequences in the kernel support.

    Entries are read one scalar at a time from the stream twin and memoized
    per (step, source, target), so each disorder variable is derived exactly
    once no matter how many paths cross the edge.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    kern = model.mean_kernel()
    offsets = [tuple(int(v) for v in c) for c in kern.field.coords]
    if len(offsets) ** t > budget:
        raise BudgetError(
            f"{len(offsets)}^{t} paths exceed the enumeration budget {budget}"
        )
    integer = model.kind in _INTEGER_KINDS
    origin: SitePoint = (0,) * model.dim
    one = 1 if integer else 1.0
    entry_cache: dict[tuple[int, SitePoint, SitePoint], float] = {}

    def entry(s: int, x: SitePoint, y: SitePoint) -> float:
        key = (s, x, y)
        if key not in entry_cache:
            entry_cache[key] = model.matrix_entry(stream, s, x, y)
        return entry_cache[key]

    counts: dict[SitePoint, object] = {}

    def walk(s: int, site: SitePoint, weight) -> None:
        if s == t:
            counts[site] = counts.get(site, 0 if integer else 0.0) + weight
            return
        for off in offsets:
            target = tuple(a + b for a, b in zip(site, off))
            e = entry(s + 1, site, target)
            if e != 0.0:
                walk(s + 1, target, weight * (int(e) if integer else e))

    walk(0, origin, one)
    return PathEnumeration(model.dim, t, integer, counts)


@dataclass
class OracleComparison:
    """Verdict of production step engine against the path oracle."""

    ok: bool
    t: int
    support_match: bool
    counts_match: bool | None   # integer models only
    max_density_error: float    # relative to the largest oracle density
    log_mass_error: float
    first_divergence: SitePoint | None
    detail: str = ""


def oracle_equivalence(
    model: LatticeModel,
    seed: int,
    replica: int,
    t: int,
    *,
    rel_tol: float | None = None,
    budget: int = _PATH_BUDGET,
) -> OracleComparison:
    """Drive the simulator and the path oracle from one stream and compare.

    Support must agree exactly. For the 0/1-entry models the per-site counts
    reconstructed from the simulator state must equal the oracle integers;
    densities and log mass are compared within rel_tol (1e-12 for integer
    models, 1e-10 otherwise).
    """
    integer = model.kind in _INTEGER_KINDS
    if rel_tol is None:
        rel_tol = 1e-12 if integer else 1e-10
    oracle = enumerate_exact(model, DisorderStream(seed, replica), t, budget=budget)
    stream = DisorderStream(seed, replica)
    state = initial_state(model.dim)
    for _ in range(t):
        if state.extinct:
            break
        state = model.step(state, stream)

    sim_support = [tuple(int(v) for v in c) for c in state.rho.coords]
    ora_support = sorted(oracle.counts)
    if sim_support != ora_support:
        diverge = None
        for site in sorted(set(sim_support) ^ set(ora_support)):
            diverge = site
            break
        return OracleComparison(
            ok=False,
            t=t,
            support_match=False,
            counts_match=None,
            max_density_error=math.inf,
            log_mass_error=math.inf,
            first_divergence=diverge,
            detail=(
                f"support mismatch: simulator has {len(sim_support)} sites, "
                f"oracle has {len(ora_support)}; first divergent site {diverge}"
            ),
        )
    if not ora_support:
        return OracleComparison(
            ok=True,
            t=t,
            support_match=True,
            counts_match=True if integer else None,
            max_density_error=0.0,
            log_mass_error=0.0,
            first_divergence=None,
            detail="both extinct",
        )

    total = oracle.total()
    kern = model.mean_kernel()
    log_total_sim = state.log_mass + t * math.log(kern.total)
    log_mass_error = abs(log_total_sim - math.log(total))
    counts_match: bool | None = None
    first_divergence = None
    max_density_error = 0.0
    rho = state.rho.as_dict()
    peak = max(float(v) / total for v in oracle.counts.values())
    if integer:
        counts_match = True
        mass = math.exp(log_total_sim)
        for site in ora_support:
            reconstructed = round(rho[site] * mass)
            if reconstructed != oracle.counts[site]:
                counts_match = False
                if first_divergence is None:
                    first_divergence = site
    for site in ora_support:
        err = abs(rho[site] - float(oracle.counts[site]) / total) / peak
        if err > max_density_error:
            max_density_error = err
            if err > rel_tol and first_divergence is None:
                first_divergence = site
    ok = (
        max_density_error <= rel_tol
        and log_mass_error <= rel_tol * max(1.0, abs(math.log(total)))
        and counts_match is not False
    )
    return OracleComparison(
        ok=ok,
        t=t,
        support_match=True,
        counts_match=counts_match,
        max_density_error=max_density_error,
        log_mass_error=log_mass_error,
        first_divergence=None if ok else first_divergence,
        detail="" if ok else "density or mass tolerance exceeded",
    )


@dataclass
class ExhaustiveLaw:
    """Exact joint outcome law over every disorder assignment."""

    kind: str
    dim: int
    t: int
    bit_count: int
    mass_law: dict[Fraction, Fraction]     # normalized mass -> probability
    overlap_law: dict[Fraction, Fraction]  # overlap (0 at extinction) -> prob
    mean_mass: Fraction

    @property
    def survival_probability(self) -> Fraction:
        return sum(p for v, p in self.mass_law.items() if v > 0)


def _unit_offsets(dim: int) -> list[SitePoint]:
    offs = []
    for axis in range(dim):
        for sign in (-1, 1):
            v = [0] * dim
            v[axis] = sign
            offs.append(tuple(v))
    return sorted(offs)


def exhaustive_distribution(
    kind: str,
    dim: int,
    t: int,
    p: Fraction,
    q: Fraction = Fraction(0),
    *,
    bit_budget: int = _BIT_BUDGET,
) -> ExhaustiveLaw:
    """Exact law of (normalized mass, overlap) for site-percolation models.

    kind "osp" (q forced to 0) or "gosp": each column carries one site bit
    (probability p, shared by all incoming neighbor entries) and, when
    q > 0, one diagonal bit (probability q). All relevant bits over the
    deterministically reachable cone are enumerated; deterministic bits
    (p or q in {0, 1}) are fixed instead of enumerated.
    """
    p, q = Fraction(p), Fraction(q)
    if kind == "osp":
        if q != 0:
            raise ValueError("the pure site model has no diagonal term")
    elif kind != "gosp":
        raise ValueError("exhaustive enumeration covers osp and gosp only")
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValueError("p and q must be probabilities")
    if t < 0:
        raise ValueError("t must be >= 0")
    units = _unit_offsets(dim)
    origin: SitePoint = (0,) * dim

    # reachable cone and the relevant bits per step
    bits: list[tuple[int, SitePoint, str, Fraction]] = []
    sources = {origin}
    cone: list[tuple[set, set]] = []  # per step: (neighbor columns, diag columns)
    for s in range(1, t + 1):
        ncols = {
            tuple(a + b for a, b in zip(x, u)) for x in sources for u in units
        }
        dcols = set(sources) if q > 0 else set()
        cone.append((ncols, dcols))
        for y in sorted(ncols):
            bits.append((s, y, "site", p))
        for y in sorted(dcols):
            bits.append((s, y, "diag", q))
        sources = ncols | dcols

    free = [i for i, b in enumerate(bits) if 0 < b[3] < 1]
    if len(free) > bit_budget:
        raise BudgetError(
            f"{len(free)} free disorder bits exceed the budget {bit_budget}"
        )

    norm = (2 * dim) * p + q  # per-step mean growth factor, exact
    if norm == 0:
        raise ValueError("degenerate model: the mean kernel vanishes")
    mass_law: dict[Fraction, Fraction] = {}
    overlap_law: dict[Fraction, Fraction] = {}
    mean_mass = Fraction(0)

    for assignment in itertools.product((0, 1), repeat=len(free)):
        values = {}
        prob = Fraction(1)
        it = iter(assignment)
        for i, (s, y, role, pr) in enumerate(bits):
            if 0 < pr < 1:
                bit = next(it)
                prob *= pr if bit else 1 - pr
            else:
                bit = 1 if pr == 1 else 0
            values[(s, y, role)] = bit
        field: dict[SitePoint, int] = {origin: 1}
        for s in range(1, t + 1):
            ncols, dcols = cone[s - 1]
            nxt: dict[SitePoint, int] = {}
            for y in ncols:
                if values[(s, y, "site")]:
                    acc = 0
                    for u in units:
                        acc += field.get(tuple(a - b for a, b in zip(y, u)), 0)
                    if acc:
                        nxt[y] = nxt.get(y, 0) + acc
            for y in dcols:
                if values[(s, y, "diag")] and y in field:
                    nxt[y] = nxt.get(y, 0) + field[y]
            field = nxt
            if not field:
                break
        size = sum(field.values())
        mass = Fraction(size) / norm**t
        overlap = (
            sum(Fraction(v) ** 2 for v in field.values()) / Fraction(size) ** 2
            if size
            else Fraction(0)
        )
        mass_law[mass] = mass_law.get(mass, Fraction(0)) + prob
        overlap_law[overlap] = overlap_law.get(overlap, Fraction(0)) + prob
        mean_mass += prob * mass

    return ExhaustiveLaw(
        kind=kind,
        dim=dim,
        t=t,
        bit_count=len(free),
        mass_law=mass_law,
        overlap_law=overlap_law,
        mean_mass=mean_mass,
    )
