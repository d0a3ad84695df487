"""Domain types shared by the solvers, the run orchestration and the outputs."""
import math
from dataclasses import dataclass, field

import numpy as np

from hermite_dirac.utils.errors import ConfigError, SolverError

FM_PER_AU = 52917.7
URANIUM_R_RMS_FM = 5.8569


@dataclass(frozen=True)
class NuclearModel:
    """Charge distribution of a nucleus.

    Args:
        kind (str): 'point' or 'sphere' (uniformly charged ball)
        r_rms_fm (float): RMS charge radius in fm, used by the sphere model
    """
    kind: str = "point"
    r_rms_fm: float = URANIUM_R_RMS_FM

    def __post_init__(self):
        if self.kind not in ("point", "sphere"):
            raise ConfigError(f"system.model: unknown nuclear model '{self.kind}'")
        if not self.r_rms_fm > 0.0:
            raise ConfigError(f"system.r_rms_fm: must be positive, got {self.r_rms_fm}")

    @property
    def radius_fm(self):
        return math.sqrt(5.0 / 3.0) * self.r_rms_fm

    @property
    def radius_au(self):
        """Sphere radius R_n = sqrt(5/3) R_RMS in bohr."""
        return self.radius_fm / FM_PER_AU


@dataclass(frozen=True)
class CollisionSystem:
    """Target A (carries the electron) and bare projectile B."""
    z_a: int = 92
    z_b: int = 92
    model_a: NuclearModel = field(default_factory=NuclearModel)
    model_b: NuclearModel = field(default_factory=NuclearModel)
    energy_per_nucleon: float = 6.0

    def __post_init__(self):
        errors = []
        if self.z_a < 0:
            errors.append(f"system.z_a: must be non-negative, got {self.z_a}")
        if self.z_b < 0:
            errors.append(f"system.z_b: must be non-negative, got {self.z_b}")
        if not self.energy_per_nucleon > 0.0:
            errors.append(f"system.energy_per_nucleon: must be positive, got {self.energy_per_nucleon}")
        if errors:
            raise ConfigError(errors)

    def without_projectile(self):
        return CollisionSystem(self.z_a, 0, self.model_a, self.model_b, self.energy_per_nucleon)


@dataclass(frozen=True)
class Trajectory:
    """Straight-line projectile path with closest approach at t = 0.

    The projectile moves along +z relative to the target; its z offset is v*t,
    starting from z_start < 0 at t_start = z_start/v and ending symmetrically.
    All quantities in atomic units.
    """
    v: float
    b: float
    z_start: float

    def __post_init__(self):
        errors = []
        if not self.v > 0.0:
            errors.append(f"trajectory.v: must be positive, got {self.v}")
        if self.b < 0.0:
            errors.append(f"trajectory.b: must be non-negative, got {self.b}")
        if not self.z_start < 0.0:
            errors.append(f"trajectory.z_start: must be negative, got {self.z_start}")
        if errors:
            raise ConfigError(errors)

    @classmethod
    def from_start_distance(cls, v, b, r_start):
        """Trajectory that starts and ends at internuclear distance r_start."""
        if not r_start > b:
            raise ConfigError(f"trajectory.b: impact parameter {b} does not fit inside start distance {r_start}")
        return cls(v=v, b=b, z_start=-math.sqrt(r_start ** 2 - b ** 2))

    @property
    def t_start(self):
        return self.z_start / self.v

    @property
    def t_end(self):
        return -self.z_start / self.v

    def distance(self, t):
        return np.hypot(self.v * np.asarray(t, dtype=float), self.b)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenpairs of the unperturbed target Hamiltonian, energies ascending.

    negative_count states lie at or below -2c^2; the first state above is the
    lowest bound state of the channel.
    """
    energies: np.ndarray
    vectors: np.ndarray
    negative_count: int
    flagged: tuple = ()

    @property
    def bound_index(self):
        return self.negative_count

    @property
    def bound_energy(self):
        return float(self.energies[self.negative_count])

    @property
    def bound_vector(self):
        return self.vectors[:, self.negative_count]


@dataclass
class PropagationResult:
    """Time series and final observables of one propagation.

    energies holds <H(t)> at energy_times; observables collects the scalar
    results (E_min, P_1s, P_minus, P_bar_1s, P_ct) the run produced.
    """
    times: np.ndarray
    norms: np.ndarray
    energy_times: np.ndarray
    energies: np.ndarray
    final: np.ndarray
    observables: dict = field(default_factory=dict)
    solver_iterations: int = 0

    @property
    def norm_drift(self):
        return float(np.max(np.abs(self.norms - self.norms[0])))

    def time_series(self):
        """Rows (t, norm, <H>) with <H> left empty where it was not recorded."""
        lookup = dict(zip(self.energy_times.tolist(), self.energies.tolist()))
        return [(t, n, lookup.get(t)) for t, n in zip(self.times.tolist(), self.norms.tolist())]


@dataclass
class SpinorField2D:
    """Coefficients U^1..U^4 over the (rho, z) tensor basis, z fastest."""
    coefficients: np.ndarray
    shape: tuple

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex).reshape(4, -1)
        if self.coefficients.shape[1] != int(np.prod(self.shape)):
            raise ConfigError(f"axial.grid: field of size {self.coefficients.shape[1]} does not match basis {self.shape}")

    @property
    def vector(self):
        return self.coefficients.reshape(-1)

    def component(self, k):
        return self.coefficients[k].reshape(self.shape)


@dataclass
class SpinorField3D:
    """Coefficients of the four Dirac components over the (x, y, z) tensor basis."""
    coefficients: np.ndarray
    shape: tuple

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex).reshape(4, -1)
        if self.coefficients.shape[1] != int(np.prod(self.shape)):
            raise ConfigError(f"cartesian.grid: field of size {self.coefficients.shape[1]} does not match basis {self.shape}")

    @property
    def vector(self):
        return self.coefficients.reshape(-1)

    def component(self, k):
        return self.coefficients[k].reshape(self.shape)


RESULT_COLUMNS = ("b_fm", "model", "E_min_over_mc2_plus_1", "P_1s", "P_minus", "P_bar_1s", "P_ct")
STATIONARY_COLUMNS = ("Z", "model", "E_1s_au", "E_1s_exact_au", "E_1s_over_mc2_plus_1")


@dataclass
class ResultTable:
    """Rows of observables per impact parameter; absent columns stay None."""
    mode: str
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    columns: tuple = RESULT_COLUMNS

    def add_row(self, **values):
        unknown = set(values) - set(self.columns)
        if unknown:
            raise ConfigError(f"output.columns: unknown result columns {sorted(unknown)}")
        for name in ("P_1s", "P_minus", "P_bar_1s", "P_ct"):
            value = values.get(name)
            if value is not None and not -1e-9 <= value <= 1.0 + 1e-9:
                raise SolverError(f"{name} = {value} lies outside [0, 1]")
        self.rows.append({name: values.get(name) for name in self.columns})

    def column(self, name):
        return [row[name] for row in self.rows]

    def has_values(self, name):
        return any(row[name] is not None for row in self.rows)
