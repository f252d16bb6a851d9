"""Representation theory of O(3) / E(3) for degrees l <= 1.

Degree-1 components are stored in (x, y, z) order, so the degree-1 odd
representation matrix of a group element is literally its 3x3 orthogonal
matrix. Spherical harmonics use the unnormalized "component" convention:
Y0 = 1 and Y1 = the unit direction.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateDirectionError,
    InvalidArgumentError,
    InvalidPathError,
    SpecError,
    UnsupportedDegreeError,
)

EVEN = 1
ODD = -1


@dataclass(frozen=True)
class GroupElement:
    """An element of E(3): x -> rotation @ x + translation.

    ``rotation`` may be improper (det = -1) to represent reflections.
    """

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidArgumentError("group element must be finite")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise InvalidArgumentError("rotation part is not orthogonal")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.rotation))

    @property
    def is_proper(self) -> bool:
        return self.det > 0

    def compose(self, other: GroupElement) -> GroupElement:
        """self o other: apply ``other`` first, then ``self``."""
        return GroupElement(self.rotation @ other.rotation,
                            self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: GroupElement) -> GroupElement:
        return self.compose(other)

    def inverse(self) -> GroupElement:
        Rt = self.rotation.T
        return GroupElement(Rt, -Rt @ self.translation)

    def without_translation(self) -> GroupElement:
        return GroupElement(self.rotation)

    def apply_points(self, x: np.ndarray) -> np.ndarray:
        """Positions transform as R x + t (works on (..., 3) arrays)."""
        return np.asarray(x) @ self.rotation.T + self.translation

    def apply_vectors(self, v: np.ndarray) -> np.ndarray:
        """Free vectors (velocities, actions, offsets) ignore the translation."""
        return np.asarray(v) @ self.rotation.T


def identity() -> GroupElement:
    return GroupElement(np.eye(3))


def rotation_from_euler(alpha: float, beta: float, gamma: float) -> GroupElement:
    """Rotation by ``alpha``, ``beta``, ``gamma`` about x, y, z: Rz(gamma) Ry(beta) Rx(alpha)."""
    if not all(math.isfinite(float(a)) for a in (alpha, beta, gamma)):
        raise InvalidArgumentError(f"non-finite Euler angles {(alpha, beta, gamma)}")
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    Rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    Ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    Rz = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])
    return GroupElement(Rz @ Ry @ Rx)


def rotation_z(angle: float) -> GroupElement:
    return rotation_from_euler(0.0, 0.0, angle)


def reflection_xy() -> GroupElement:
    """Mirror through the xy-plane: z -> -z."""
    return GroupElement(np.diag([1.0, 1.0, -1.0]))


def translation(t: Sequence[float]) -> GroupElement:
    return GroupElement(np.eye(3), np.asarray(t, dtype=np.float64))


def random_rotation(rng: np.random.Generator) -> GroupElement:
    # QR of a Gaussian matrix with sign fix gives a Haar-distributed orthogonal matrix
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return GroupElement(q)


def random_element(rng: np.random.Generator, *, reflect: bool | None = None,
                   translate: float = 10.0, planar: bool = False) -> GroupElement:
    """Sample an E(3) element.

    ``reflect=None`` flips a fair coin for composing with :func:`reflection_xy`.
    ``planar`` restricts to motions that keep the z=0 plane (rotations about z,
    in-plane translations, and the in-plane mirror y -> -y).
    """
    if reflect is None:
        reflect = bool(rng.integers(2))
    if planar:
        g = rotation_z(rng.uniform(0, 2 * np.pi))
        if reflect:
            g = g @ GroupElement(np.diag([1.0, -1.0, 1.0]))
        t = np.zeros(3)
        t[:2] = rng.uniform(-translate, translate, 2)
    else:
        g = random_rotation(rng)
        if reflect:
            g = g @ reflection_xy()
        t = rng.uniform(-translate, translate, 3)
    return GroupElement(g.rotation, t)


# ---------------------------------------------------------------------------
# irreps

@dataclass(frozen=True, order=True)
class Irrep:
    l: int
    parity: int  # EVEN (+1) or ODD (-1)

    def __post_init__(self):
        if self.l < 0:
            raise InvalidArgumentError(f"negative degree {self.l}")
        if self.parity not in (EVEN, ODD):
            raise InvalidArgumentError(f"parity must be +1 or -1, got {self.parity}")

    @property
    def dim(self) -> int:
        return 2 * self.l + 1

    @classmethod
    def parse(cls, text: str) -> Irrep:
        m = re.fullmatch(r"\s*(\d+)([eo])\s*", text)
        if not m:
            raise SpecError(f"cannot parse irrep {text!r}")
        return cls(int(m.group(1)), EVEN if m.group(2) == "e" else ODD)

    def __str__(self):
        return f"{self.l}{'e' if self.parity == EVEN else 'o'}"


SCALAR = Irrep(0, EVEN)
PSEUDOSCALAR = Irrep(0, ODD)
VECTOR = Irrep(1, ODD)
PSEUDOVECTOR = Irrep(1, EVEN)


def irrep_matrix(irrep: Irrep, g: GroupElement) -> np.ndarray:
    """Representation matrix D(g) of the rotation/reflection part of ``g``."""
    if irrep.l > 1:
        raise UnsupportedDegreeError(f"degree {irrep.l} not supported (l <= 1 only)")
    det = 1.0 if np.linalg.det(g.rotation) > 0 else -1.0
    sign = 1.0 if irrep.parity == EVEN else det
    if irrep.l == 0:
        return np.array([[sign]])
    # vectors (1o) get R; pseudovectors (1e) get det(R) R
    return g.rotation * (det if irrep.parity == EVEN else 1.0)


@dataclass(frozen=True)
class IrrepSpec:
    """Ordered direct sum of irreps, e.g. ``IrrepSpec.parse("2x0e+1x1o")``."""

    blocks: tuple[tuple[int, Irrep], ...]

    def __post_init__(self):
        blocks = tuple((int(m), ir if isinstance(ir, Irrep) else Irrep.parse(ir))
                       for m, ir in self.blocks)
        for m, _ in blocks:
            if m <= 0:
                raise SpecError(f"multiplicity must be positive, got {m}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def parse(cls, text: str) -> IrrepSpec:
        blocks = []
        for part in text.split("+"):
            m = re.fullmatch(r"\s*(?:(\d+)x)?(\d+[eo])\s*", part)
            if not m:
                raise SpecError(f"cannot parse irrep spec {text!r}")
            blocks.append((int(m.group(1) or 1), Irrep.parse(m.group(2))))
        return cls(tuple(blocks))

    def __str__(self):
        return "+".join(f"{m}x{ir}" for m, ir in self.blocks)

    def __add__(self, other: IrrepSpec) -> IrrepSpec:
        return IrrepSpec(self.blocks + other.blocks)

    @property
    def dim(self) -> int:
        return sum(m * ir.dim for m, ir in self.blocks)

    def offsets(self) -> list[int]:
        out, pos = [], 0
        for m, ir in self.blocks:
            out.append(pos)
            pos += m * ir.dim
        return out

    def block_slices(self) -> list[slice]:
        return [slice(o, o + m * ir.dim) for o, (m, ir) in zip(self.offsets(), self.blocks)]

    def channel_indices(self, irrep: Irrep) -> np.ndarray:
        """Flat indices of every channel of ``irrep``, shape (n_channels, 2l+1)."""
        idx = []
        for o, (m, ir) in zip(self.offsets(), self.blocks):
            if ir == irrep:
                idx.extend(np.arange(o, o + m * ir.dim).reshape(m, ir.dim))
        return np.array(idx, dtype=np.int64).reshape(-1, irrep.dim)

    def count(self, irrep: Irrep) -> int:
        return sum(m for m, ir in self.blocks if ir == irrep)

    def representation(self, g: GroupElement) -> np.ndarray:
        """Block-diagonal D(g) acting on flat data of length ``dim``."""
        D = np.zeros((self.dim, self.dim))
        for sl, (m, ir) in zip(self.block_slices(), self.blocks):
            d = irrep_matrix(ir, g)
            for k in range(m):
                a = sl.start + k * ir.dim
                D[a:a + ir.dim, a:a + ir.dim] = d
        return D


def transform_features(spec: IrrepSpec, data: np.ndarray, g: GroupElement) -> np.ndarray:
    """Apply D(g) block-wise to ``data`` of shape (..., spec.dim)."""
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-1] != spec.dim:
        raise SpecError(f"data has trailing size {data.shape[-1]}, spec {spec} needs {spec.dim}")
    out = np.array(data, copy=True)
    for sl, (m, ir) in zip(spec.block_slices(), spec.blocks):
        d = irrep_matrix(ir, g)
        if ir.l == 0:
            if d[0, 0] != 1.0:
                out[..., sl] = -data[..., sl]
            continue
        blk = data[..., sl].reshape(data.shape[:-1] + (m, 3))
        out[..., sl] = (blk @ d.T).reshape(data.shape[:-1] + (m * 3,))
    return out


@dataclass(frozen=True)
class SteerableVector:
    spec: IrrepSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64).reshape(-1)
        if data.shape[0] != self.spec.dim:
            raise SpecError(f"data length {data.shape[0]} does not match spec {self.spec} "
                            f"(dim {self.spec.dim})")
        object.__setattr__(self, "data", data)

    def transform(self, g: GroupElement) -> SteerableVector:
        return transform_steerable(self, g)

    def block(self, i: int) -> np.ndarray:
        return self.data[self.spec.block_slices()[i]]


def transform_steerable(v: SteerableVector, g: GroupElement) -> SteerableVector:
    return SteerableVector(v.spec, transform_features(v.spec, v.data, g))


SH_SPEC = IrrepSpec(((1, SCALAR), (1, VECTOR)))


def spherical_harmonics_l1(direction: Sequence[float]) -> SteerableVector:
    """(1, x/r, y/r, z/r) for a nonzero direction."""
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    r = float(np.sqrt(d @ d))
    if not r > 0:
        raise DegenerateDirectionError("zero-length direction has no spherical harmonics")
    return SteerableVector(SH_SPEC, np.concatenate([[1.0], d / r]))


def unit_directions(d: np.ndarray) -> np.ndarray:
    """Row-wise unit vectors; zero rows map to the zero vector."""
    d = np.asarray(d, dtype=np.float64)
    r = np.sqrt(np.sum(d * d, axis=-1, keepdims=True))
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, d / safe, 0.0)


# ---------------------------------------------------------------------------
# Clebsch-Gordan products for l <= 1

ALLOWED_DEGREE_PATHS = {(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)}


def check_path(a: Irrep, b: Irrep, out: Irrep) -> None:
    if (a.l, b.l, out.l) not in ALLOWED_DEGREE_PATHS:
        raise InvalidPathError(f"degree path {a}x{b}->{out} is not allowed")
    if a.parity * b.parity != out.parity:
        raise InvalidPathError(f"parity path {a}x{b}->{out} violates p_out = p_a p_b")


def _elementary_product(la: int, lb: int, lo: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if la == 0 and lb == 0:
        return x * y
    if la == 0:
        return x[0] * y
    if lb == 0:
        return x * y[0]
    if lo == 0:
        return np.array([x @ y])
    return np.cross(x, y)


def cg_tensor_product(a: SteerableVector, b: SteerableVector, out_spec: IrrepSpec,
                      weights: Mapping[tuple[int, int, int], object]) -> SteerableVector:
    """Weighted sum of Clebsch-Gordan paths between blocks of ``a`` and ``b``.

    ``weights`` maps ``(block_a, block_b, block_out)`` to either a scalar (applied
    to every channel triple) or an array of shape (mul_a, mul_b, mul_out).
    """
    out = np.zeros(out_spec.dim)
    sa, sb, so = a.spec.block_slices(), b.spec.block_slices(), out_spec.block_slices()
    for (ia, ib, io), w in weights.items():
        try:
            ma, ira = a.spec.blocks[ia]
            mb, irb = b.spec.blocks[ib]
            mo, iro = out_spec.blocks[io]
        except IndexError:
            raise InvalidPathError(f"path {(ia, ib, io)} references a missing block") from None
        check_path(ira, irb, iro)
        w = np.broadcast_to(np.asarray(w, dtype=np.float64), (ma, mb, mo))
        xa = a.data[sa[ia]].reshape(ma, ira.dim)
        xb = b.data[sb[ib]].reshape(mb, irb.dim)
        acc = np.zeros((mo, iro.dim))
        for u in range(ma):
            for v in range(mb):
                prod = _elementary_product(ira.l, irb.l, iro.l, xa[u], xb[v])
                acc += w[u, v][:, None] * prod[None, :]
        out[so[io]] += acc.reshape(-1)
    return SteerableVector(out_spec, out)
