"""Species diversities and the mixing state index of a particle population.

For particle ``i`` with species masses ``m_ij``::

    p_ij = m_ij / m_i                       within-particle mass fraction
    p_i  = m_i / M                          particle's share of total mass
    H_i  = -sum_j p_ij ln p_ij              per-particle entropy, D_i = exp(H_i)
    H_a  = sum_i p_i H_i                    D_alpha = exp(H_a)
    H_g  = -sum_j p_j ln p_j                D_gamma = exp(H_g), p_j bulk fractions
    chi  = (D_alpha - 1) / (D_gamma - 1)

Zero fractions contribute nothing (0 ln 0 = 0). Every sum goes through
``math.fsum``, which is exactly rounded and therefore independent of the
order of particles and species.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, FormatError, UnknownSpecies, ZeroMassParticle

DEGENERATE_TOL = 1e-12

ABUNDANCE = "abundance"
OPTICAL = "optical"
HYGROSCOPICITY = "hygroscopicity"
PRESETS = (ABUNDANCE, OPTICAL, HYGROSCOPICITY)

# Canonical species of the surrogate groupings and the spellings accepted for
# them (PartMC/MOSAIC and MAM4 names included). Matching is case-insensitive.
SPECIES_ALIASES = {
    "BC": ("bc", "black_carbon"),
    "dust": ("dust", "dst", "oin"),
    "POM": ("pom", "oc", "primary_organic"),
    "salt": ("salt", "ncl", "nacl", "sea_salt", "seasalt"),
    "SOA": ("soa", "secondary_organic"),
    "sulfate": ("sulfate", "so4"),
}
_CANONICAL = {alias: name for name, aliases in SPECIES_ALIASES.items() for alias in aliases}

OPTICAL_GROUPS = ("absorbing", "non_absorbing")
HYGROSCOPICITY_GROUPS = ("low", "high")
_LOW_HYGRO = {"BC", "dust", "POM"}


def canonical_species(name):
    """Canonical surrogate-species name for ``name``, or None if unrecognised."""
    return _CANONICAL.get(name.strip().lower())


@dataclass(frozen=True)
class ParticlePopulation:
    """Per-particle species masses, shape ``(n_particles, n_species)``."""

    species_names: tuple
    masses: np.ndarray = field(repr=False)

    def __post_init__(self):
        names = tuple(str(s) for s in self.species_names)
        masses = np.array(self.masses, dtype=np.float64, copy=True)
        if masses.ndim != 2:
            raise ValueError("masses must be a 2-D array (particles x species)")
        if masses.shape[0] < 1 or masses.shape[1] < 1:
            raise ValueError("a population needs at least one particle and one species")
        if len(names) != masses.shape[1]:
            raise ValueError(f"{len(names)} species names for {masses.shape[1]} mass columns")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate species names in {names}")
        if not np.all(np.isfinite(masses)) or np.any(masses < 0):
            raise ValueError("masses must be finite and nonnegative")
        totals = np.array([math.fsum(row) for row in masses])
        empty = np.flatnonzero(totals <= 0)
        if empty.size:
            raise ZeroMassParticle(f"particle {int(empty[0])} has zero total mass")
        masses.setflags(write=False)
        totals.setflags(write=False)
        object.__setattr__(self, "species_names", names)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "_totals", totals)

    @property
    def n_particles(self):
        return self.masses.shape[0]

    @property
    def n_species(self):
        return self.masses.shape[1]

    @property
    def particle_masses(self):
        return self._totals

    @property
    def total_mass(self):
        return math.fsum(self._totals)

    def within_particle_fractions(self):
        return self.masses / self._totals[:, None]

    def particle_fractions(self):
        return self._totals / self.total_mass

    def bulk_fractions(self):
        bulk = np.array([math.fsum(col) for col in self.masses.T])
        return bulk / self.total_mass


@dataclass(frozen=True)
class SpeciesGrouping:
    """Partition of species into surrogate groups."""

    group_names: tuple
    assignment: Mapping[str, str]

    def __post_init__(self):
        groups = tuple(self.group_names)
        assignment = dict(self.assignment)
        if len(set(groups)) != len(groups):
            raise ConfigError(f"duplicate group names in {groups}")
        stray = sorted(set(assignment.values()) - set(groups))
        if stray:
            raise ConfigError(f"species assigned to undeclared groups {stray}")
        empty = [g for g in groups if g not in assignment.values()]
        if empty:
            raise ConfigError(f"groups without species: {empty}")
        object.__setattr__(self, "group_names", groups)
        object.__setattr__(self, "assignment", assignment)

    @classmethod
    def from_mapping(cls, mapping):
        """Grouping from ``{species: group}``; groups ordered by first appearance."""
        groups = list(dict.fromkeys(mapping.values()))
        return cls(tuple(groups), dict(mapping))

    @classmethod
    def abundance(cls, species_names):
        names = tuple(species_names)
        return cls(names, {s: s for s in names})

    @classmethod
    def optical(cls, species_names):
        assignment = {}
        for s in species_names:
            assignment[s] = OPTICAL_GROUPS[0] if canonical_species(s) == "BC" else OPTICAL_GROUPS[1]
        return cls(tuple(g for g in OPTICAL_GROUPS if g in assignment.values()), assignment)

    @classmethod
    def hygroscopicity(cls, species_names):
        assignment = {}
        for s in species_names:
            canon = canonical_species(s)
            if canon is None:
                raise UnknownSpecies(
                    f"species {s!r} has no hygroscopicity class "
                    f"(known: {', '.join(SPECIES_ALIASES)})"
                )
            assignment[s] = HYGROSCOPICITY_GROUPS[0] if canon in _LOW_HYGRO else HYGROSCOPICITY_GROUPS[1]
        return cls(tuple(g for g in HYGROSCOPICITY_GROUPS if g in assignment.values()), assignment)

    @classmethod
    def preset(cls, name, species_names):
        builders = {ABUNDANCE: cls.abundance, OPTICAL: cls.optical, HYGROSCOPICITY: cls.hygroscopicity}
        try:
            return builders[name.lower()](species_names)
        except KeyError:
            raise ConfigError(f"unknown grouping preset {name!r}; expected one of {PRESETS}") from None


def resolve_grouping(grouping, species_names):
    """Accept a preset name, a ``{species: group}`` mapping or a SpeciesGrouping."""
    if isinstance(grouping, SpeciesGrouping):
        return grouping
    if isinstance(grouping, str):
        return SpeciesGrouping.preset(grouping, species_names)
    if isinstance(grouping, Mapping):
        return SpeciesGrouping.from_mapping(grouping)
    raise TypeError(f"cannot interpret {type(grouping).__name__} as a species grouping")


@dataclass(frozen=True)
class DiversityResult:
    d_alpha: float
    d_gamma: float
    chi: float | None  # None = undefined (bulk has a single effective group)
    per_particle_diversity: np.ndarray = field(repr=False)
    group_names: tuple = ()

    @property
    def defined(self):
        return self.chi is not None

    def chi_value(self, policy="undefined"):
        """``chi`` with the degenerate case resolved by ``policy`` ('undefined' or 'one')."""
        if self.chi is not None:
            return self.chi
        if policy == "one":
            return 1.0
        if policy == "undefined":
            return None
        raise ConfigError(f"unknown undefined-chi policy {policy!r}")


def group_masses(pop: ParticlePopulation, grouping) -> ParticlePopulation:
    """Sum member-species masses into one column per group."""
    g = resolve_grouping(grouping, pop.species_names)
    missing = [s for s in pop.species_names if s not in g.assignment]
    if missing:
        raise UnknownSpecies(f"species {missing} are not covered by the grouping")
    out = np.zeros((pop.n_particles, len(g.group_names)))
    column = {name: i for i, name in enumerate(g.group_names)}
    for j, s in enumerate(pop.species_names):
        out[:, column[g.assignment[s]]] += pop.masses[:, j]
    return ParticlePopulation(g.group_names, out)


def _entropy(masses, total):
    """Shannon entropy of ``masses / total``; zero masses are skipped (0 ln 0 = 0)."""
    m = masses[masses > 0]
    p = m / total
    logs = np.log(p)
    j = int(np.argmax(m))
    if p[j] > 0.5:
        # ln p loses relative accuracy as p -> 1; use the exact remainder instead
        rest = math.fsum(np.delete(m, j))
        logs[j] = math.log1p(-rest / total)
    return -math.fsum(p * logs)


def per_particle_entropy(pop: ParticlePopulation) -> np.ndarray:
    return np.array([_entropy(row, t) for row, t in zip(pop.masses, pop.particle_masses)])


def per_particle_diversity(pop: ParticlePopulation) -> np.ndarray:
    """``D_i = exp(H_i)`` for every particle; each lies in [1, n_species]."""
    return np.exp(per_particle_entropy(pop))


def alpha_entropy(pop: ParticlePopulation) -> float:
    return math.fsum(pop.particle_fractions() * per_particle_entropy(pop))


def alpha_diversity(pop: ParticlePopulation) -> float:
    """Average particle species diversity, the exponential of the mass-weighted mean entropy."""
    return math.exp(alpha_entropy(pop))


def gamma_entropy(pop: ParticlePopulation) -> float:
    bulk = np.array([math.fsum(col) for col in pop.masses.T])
    return _entropy(bulk, pop.total_mass)


def gamma_diversity(pop: ParticlePopulation) -> float:
    """Bulk population species diversity."""
    return math.exp(gamma_entropy(pop))


def mixing_state_index(pop: ParticlePopulation, grouping=ABUNDANCE) -> DiversityResult:
    """Group species, then compute ``D_alpha``, ``D_gamma`` and ``chi``."""
    grouped = group_masses(pop, grouping)
    h_i = per_particle_entropy(grouped)
    h_gamma = gamma_entropy(grouped)
    # rounding may nudge the mean past the Jensen bound h_alpha <= h_gamma
    h_alpha = min(math.fsum(grouped.particle_fractions() * h_i), h_gamma)
    # expm1 keeps D - 1 accurate when the bulk is nearly a single group
    excess_alpha = math.expm1(h_alpha)
    excess_gamma = math.expm1(h_gamma)
    if excess_gamma <= DEGENERATE_TOL:
        chi = None
    else:
        chi = min(max(excess_alpha / excess_gamma, 0.0), 1.0)
    return DiversityResult(math.exp(h_alpha), math.exp(h_gamma), chi, np.exp(h_i), grouped.species_names)


# ---------------------------------------------------------------------------
# file formats


def read_particles_csv(path) -> ParticlePopulation:
    """Read ``particle_id,<species>...`` rows of per-particle masses."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "particle_id":
            raise FormatError(f"{path} row 1: header must be 'particle_id,<species>...'")
        species = header[1:]
        if len(set(species)) != len(species) or any(not s for s in species):
            raise FormatError(f"{path} row 1: species names must be unique and non-empty")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path} row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise FormatError(f"{path} row {lineno}: {exc}") from None
            if any(not math.isfinite(v) or v < 0 for v in values):
                raise FormatError(f"{path} row {lineno}: masses must be finite and nonnegative")
            if math.fsum(values) <= 0:
                raise ZeroMassParticle(f"{path} row {lineno}: particle {row[0]!r} has zero total mass")
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no particle rows")
    return ParticlePopulation(tuple(species), np.array(rows))


def write_particles_csv(path, pop: ParticlePopulation, ids: Sequence | None = None):
    ids = range(1, pop.n_particles + 1) if ids is None else ids
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["particle_id", *pop.species_names])
        for pid, row in zip(ids, pop.masses):
            writer.writerow([pid, *(format(v, ".17g") for v in row)])


def load_grouping(spec):
    """Preset name, or path to a JSON ``{species: group}`` file."""
    if spec.lower() in PRESETS:
        return spec.lower()
    try:
        with open(spec) as fh:
            mapping = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"grouping {spec!r} is neither a preset {PRESETS} nor a readable file") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{spec}: invalid JSON ({exc})") from None
    if not isinstance(mapping, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in mapping.items()
    ):
        raise FormatError(f"{spec}: grouping JSON must map species names to group names")
    return mapping
