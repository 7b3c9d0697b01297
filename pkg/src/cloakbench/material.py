"""Transformation acoustics for the FSH-lined cloak.

Builds the radial blow-up map, pushes media forward through it, and assembles
both the physical cloak (what would be manufactured) and the virtual medium
(what the modal solver actually solves).  All geometry is concentric:
``Omega = B_R``, ``D = B_R1`` and the virtual lining occupies
``B_rho minus B_rho/2``.
"""

from __future__ import annotations

import cmath
import csv
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize
from scipy import special as sp

BRANCH_CONSTANT = 2 ** 0.25 * cmath.exp(1j * math.pi / 8)  # sqrt(1 + i), Im > 0

RESONANCE_GAP = 1e-6


class MaterialError(ValueError):
    """Invalid cloak parameters or map evaluation outside a branch."""


class OrientationError(MaterialError):
    """Push-forward through a map with nonpositive Jacobian determinant."""


class BranchAmbiguityError(MaterialError):
    """Point within 1e-12 of an interface of the piecewise map."""


# ---------------------------------------------------------------------------
# Neumann resonances of the ball


def _dprime(dimension: int, n: int, x):
    if dimension == 2:
        return sp.jvp(n, x)
    return sp.spherical_jn(n, x, derivative=True)


@functools.lru_cache(maxsize=256)
def neumann_zeros(dimension: int, upper: float) -> tuple[float, ...]:
    """Sorted positive zeros below ``upper`` of J'_n (2D) or j'_n (3D), all n.

    Zeros of the derivative of order ``n`` exceed ``n`` (for n >= 1), so only
    finitely many orders contribute.
    """
    zeros = []
    grid = np.linspace(1e-9, upper, max(200, int(upper * 200)))
    for n in range(0, int(math.ceil(upper)) + 2):
        vals = _dprime(dimension, n, grid)
        sign_change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
        for i in sign_change:
            zeros.append(optimize.brentq(lambda t: _dprime(dimension, n, t), grid[i], grid[i + 1], xtol=1e-15))
    return tuple(sorted(zeros))


def resonance_distance(dimension: int, x: float) -> float:
    """Distance from ``x`` to the nearest Neumann eigen-frequency of the unit ball scaling."""
    zeros = neumann_zeros(dimension, round(x + 2.0, 0))
    return min([x] + [abs(x - z) for z in zeros])


# ---------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class CloakConfig:
    """Physical and regularisation parameters of the construction.

    ``rho`` is the regularisation parameter (relative size of the virtual
    core), ``delta`` the lining exponent, ``alpha``/``beta``/``gamma`` the
    lining constants, ``sigma_a_prime``/``q_a_prime`` the cloaked content.
    ``paper_literal_3d`` switches the 3D virtual content modulus from
    ``q'_a / rho**3`` (push-forward) to ``q'_a / rho**2``.
    """

    dimension: int = 2
    rho: float = 0.01
    delta: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    omega: float = 1.0
    R: float = 2.0
    sigma_a_prime: float = 2.0
    q_a_prime: float = 3.0
    paper_literal_3d: bool = False

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise MaterialError(f"dimension must be 2 or 3, got {self.dimension}")
        for name in ("delta", "alpha", "beta", "gamma", "omega", "R", "sigma_a_prime", "q_a_prime"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise MaterialError(f"{name} must be positive and finite, got {value}")
        if not 0 < self.rho < 0.5:
            raise MaterialError(f"rho must lie in (0, 1/2), got {self.rho}")
        if not self.rho < self.R / 4:
            raise MaterialError(f"rho must be below R/4 = {self.R / 4}, got {self.rho}")
        gap = resonance_distance(self.dimension, self.omega * self.R)
        if gap < RESONANCE_GAP:
            raise MaterialError(
                f"omega*R = {self.omega * self.R} is within {gap:.2e} of a Neumann eigenvalue"
            )

    def with_(self, **changes) -> "CloakConfig":
        return replace(self, **changes)

    def derived(self) -> "DerivedParams":
        return DerivedParams.from_config(self)


@dataclass(frozen=True)
class DerivedParams:
    """Virtual-domain constants: lining (sigma_l, q_l) and core (sigma_a, q_a)."""

    omega: float
    sigma_l: float
    q_l: complex
    sigma_a: float
    q_a: complex

    @classmethod
    def from_config(cls, c: CloakConfig) -> "DerivedParams":
        n = c.dimension
        sigma_l = c.gamma * c.rho ** (2 + c.delta)
        q_l = complex(c.alpha, c.beta)
        sigma_a = c.rho ** (2 - n) * c.sigma_a_prime
        q_exp = 2 if (n == 3 and c.paper_literal_3d) else n
        q_a = c.q_a_prime / c.rho**q_exp + 0j
        return cls(c.omega, sigma_l, q_l, sigma_a, q_a)

    @classmethod
    def background(cls, omega: float) -> "DerivedParams":
        """All regions set to the free medium (I, 1): the no-cloak override."""
        return cls(omega, 1.0, 1.0 + 0j, 1.0, 1.0 + 0j)

    @property
    def omega_a(self) -> complex:
        return self.omega * cmath.sqrt(self.q_a / self.sigma_a)

    @property
    def omega_l(self) -> complex:
        return self.omega * cmath.sqrt(self.q_l / self.sigma_l)

    @property
    def A(self) -> complex:
        """Impedance contrast sqrt(sigma_a q_a / (sigma_l q_l)) at the inner interface."""
        return cmath.sqrt(self.sigma_a * self.q_a / (self.sigma_l * self.q_l))

    @property
    def kappa(self) -> complex:
        """Lining impedance sqrt(sigma_l q_l), the factor multiplying the lining flux."""
        return cmath.sqrt(self.sigma_l * self.q_l)

    @property
    def core_impedance(self) -> complex:
        return cmath.sqrt(self.sigma_a * self.q_a)


# ---------------------------------------------------------------------------
# Blow-up map


@dataclass(frozen=True)
class BlowupMap:
    """Radial map blowing ``B_rho`` up to ``B_R1`` while fixing ``|x| >= R2``.

    Inside ``B_rho`` the map is the dilation ``x * R1 / rho``.
    """

    rho: float
    R1: float
    R2: float

    def __post_init__(self):
        if not 0 < self.rho < self.R1 < self.R2:
            raise MaterialError(f"need 0 < rho < R1 < R2, got {self.rho}, {self.R1}, {self.R2}")

    @property
    def offset(self) -> float:
        return (self.R1 - self.rho) / (self.R2 - self.rho) * self.R2

    @property
    def slope(self) -> float:
        """Radial stretch (R2 - R1)/(R2 - rho) of the annulus branch."""
        return (self.R2 - self.R1) / (self.R2 - self.rho)

    def radius_forward(self, r: float) -> float:
        if r <= self.rho:
            return r * self.R1 / self.rho
        if r <= self.R2:
            return self.offset + self.slope * r
        return r

    def radius_inverse(self, s: float) -> float:
        if s <= self.R1:
            return s * self.rho / self.R1
        if s <= self.R2:
            return (s - self.offset) / self.slope
        return s

    def branch(self, r: float) -> str:
        if abs(r - self.rho) < 1e-12 or abs(r - self.R2) < 1e-12:
            raise BranchAmbiguityError(f"|x| = {r} is on a branch boundary")
        if r < self.rho:
            return "core"
        if r < self.R2:
            return "annulus"
        return "exterior"


def blowup_forward(m: BlowupMap, x, branch: str | None = None) -> np.ndarray:
    """Image of the point ``x`` under the blow-up map.

    ``branch="annulus"`` forces the affine radial formula, which is undefined
    at the origin.
    """
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if branch == "annulus":
        if r == 0:
            raise MaterialError("annulus branch is undefined at the origin")
        return (m.offset + m.slope * r) * x / r
    if r == 0:
        return np.zeros_like(x)
    return m.radius_forward(r) * x / r


def blowup_inverse(m: BlowupMap, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    s = float(np.linalg.norm(y))
    if s == 0:
        return np.zeros_like(y)
    return m.radius_inverse(s) * y / s


def blowup_jacobian(m: BlowupMap, x) -> tuple[np.ndarray, float]:
    """Jacobian matrix ``M = d F_i / d x_j`` and its determinant at ``x``."""
    x = np.asarray(x, dtype=float)
    dim = x.size
    r = float(np.linalg.norm(x))
    branch = m.branch(r)
    eye = np.eye(dim)
    if branch == "core":
        scale = m.R1 / m.rho
        return scale * eye, scale**dim
    if branch == "exterior":
        return eye, 1.0
    xhat = x / r
    proj = np.outer(xhat, xhat)
    lam_r = m.slope
    lam_t = m.radius_forward(r) / r
    M = lam_t * (eye - proj) + lam_r * proj
    return M, lam_r * lam_t ** (dim - 1)


def push_forward(sigma, q, M, J: float) -> tuple[np.ndarray, complex]:
    """Push a medium forward: ``(M sigma M^T / J, q / J)``."""
    if not J > 0:
        raise OrientationError(f"Jacobian determinant must be positive, got {J}")
    sigma = np.asarray(sigma)
    if not np.allclose(sigma, sigma.T, rtol=1e-13, atol=0):
        raise MaterialError("sigma must be symmetric")
    M = np.asarray(M, dtype=float)
    out = M @ sigma @ M.T / J
    return 0.5 * (out + out.T), q / J


# ---------------------------------------------------------------------------
# Assembly


@dataclass(frozen=True)
class RadialRegion:
    """Homogeneous (in the virtual domain) shell ``r_in < |x| < r_out``."""

    label: str
    r_in: float
    r_out: float
    sigma: complex
    q: complex


@dataclass(frozen=True)
class MaterialSample:
    r: float
    sigma_rad: float
    sigma_tan: float
    q: complex
    region: str


@dataclass(frozen=True)
class CloakMaterial:
    """Physical cloak on ``B_R`` plus its virtual counterpart."""

    config: CloakConfig
    blowup: BlowupMap
    derived: DerivedParams
    virtual: tuple[RadialRegion, ...] = field(default_factory=tuple)

    @property
    def R1(self) -> float:
        return self.blowup.R1

    @property
    def R2(self) -> float:
        return self.blowup.R2

    def _virtual_region(self, label: str) -> RadialRegion:
        return next(reg for reg in self.virtual if reg.label == label)

    def physical_at(self, s: float) -> MaterialSample:
        """Eigenvalues of the physical density tensor and the modulus at radius ``s``.

        Intervals are half-open at the outer end of each shell, so ``s = R2``
        belongs to the untouched background.
        """
        dim = self.config.dimension
        m = self.blowup
        if s < 0 or s > self.config.R:
            raise MaterialError(f"radius {s} outside Omega = B_{self.config.R}")
        if s >= m.R2:
            return MaterialSample(s, 1.0, 1.0, 1.0 + 0j, "background")
        if s > m.R1:
            r = m.radius_inverse(s)
            lam_r = m.slope
            lam_t = s / r
            J = lam_r * lam_t ** (dim - 1)
            return MaterialSample(s, lam_r**2 / J, lam_t**2 / J, 1.0 / J + 0j, "cloak")
        scale = m.R1 / m.rho
        J = scale**dim
        if s > m.R1 / 2:
            lining = self._virtual_region("lining")
            sig = (scale**2 * lining.sigma / J).real
            return MaterialSample(s, sig, sig, lining.q / J, "lining")
        sig = self.config.sigma_a_prime
        return MaterialSample(s, sig, sig, self.config.q_a_prime + 0j, "content")

    def physical_profile(self, radii) -> list[MaterialSample]:
        return [self.physical_at(float(s)) for s in radii]


def cloak_assembly(c: CloakConfig, R1: float = 1.0, R2: float | None = None) -> CloakMaterial:
    """Assemble the physical cloak and the virtual medium it is equivalent to.

    The virtual medium is ``(I, 1)`` on ``rho < |x| < R``, the lining
    ``(gamma rho**(2+delta), alpha + i beta)`` on ``rho/2 < |x| < rho`` and the
    pulled-back content inside ``B_rho/2``.  The solver uses ``R1 = 1``; other
    values rescale the content through the dilation ``x R1 / rho``.
    """
    R2 = c.R if R2 is None else R2
    if not (c.rho < R1 < R2 <= c.R):
        raise MaterialError(f"need rho < R1 < R2 <= R, got {c.rho}, {R1}, {R2}, {c.R}")
    m = BlowupMap(c.rho, R1, R2)
    derived = DerivedParams.from_config(c)
    if R1 != 1.0:
        ratio = c.rho / R1
        q_exp = 2 if (c.dimension == 3 and c.paper_literal_3d) else c.dimension
        sigma_a = ratio ** (2 - c.dimension) * c.sigma_a_prime
        derived = DerivedParams(c.omega, derived.sigma_l, derived.q_l, sigma_a, c.q_a_prime / ratio**q_exp + 0j)
    virtual = (
        RadialRegion("content", 0.0, c.rho / 2, derived.sigma_a, derived.q_a),
        RadialRegion("lining", c.rho / 2, c.rho, derived.sigma_l, derived.q_l),
        RadialRegion("exterior", c.rho, c.R, 1.0, 1.0 + 0j),
    )
    return CloakMaterial(c, m, derived, virtual)


CSV_HEADER = ("r", "sigma_rad", "sigma_tan", "q_re", "q_im", "region")


def material_map_export(material: CloakMaterial, radii) -> list[tuple]:
    """Tabulate the physical medium on a radial grid.

    Returns one record ``(r, sigma_rad, sigma_tan, q_re, q_im, region)`` per
    grid point.
    """
    rows = []
    for sample in material.physical_profile(radii):
        rows.append((sample.r, sample.sigma_rad, sample.sigma_tan, sample.q.real, sample.q.imag, sample.region))
    return rows


def write_material_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row[:5]] + [row[5]])
