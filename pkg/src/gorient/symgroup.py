"""Quaternion algebra, finite spherical symmetry groups and the cubic fundamental zone.

Quaternions are stored as numpy arrays ``(q1, q2, q3, q4)`` with ``q1`` the
scalar part. Any function taking a quaternion also accepts a stack of shape
``(n, 4)``. Group elements are 4x4 orthogonal matrices acting by
left-multiplication, so that ``P @ x`` is the symmetry action on ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoFZRepresentative, NotSignPaired

SQRT2 = np.sqrt(2.0)
_FZ_CHUNK = 65536


def unit_quaternion(q) -> np.ndarray:
    """Return ``q`` (or each row of ``q``) scaled to unit norm."""
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise ValueError("cannot normalise a zero or non-finite quaternion")
    return q / norm


def quat_multiply(p, q) -> np.ndarray:
    """Hamilton product ``p * q`` (broadcasts over leading axes)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a1, b1, c1, d1 = np.moveaxis(p, -1, 0)
    a2, b2, c2, d2 = np.moveaxis(q, -1, 0)
    return np.stack([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ], axis=-1)


def left_matrix(p) -> np.ndarray:
    """4x4 matrix ``L`` with ``L @ q == quat_multiply(p, q)``."""
    a, b, c, d = np.asarray(p, dtype=float)
    return np.array([
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ])


def axis_angle_quaternion(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


@dataclass(frozen=True, eq=False)
class SymmetryGroup:
    """Finite group of quaternionic actions.

    ``elements`` has shape ``(M, 4, 4)``. When ``sign_paired`` is set, the
    second half of the elements are the negatives of the first half, in the
    same order.
    """

    elements: np.ndarray
    sign_paired: bool
    name: str = field(default="custom")

    def __post_init__(self):
        els = np.array(self.elements, dtype=float)
        if els.ndim != 3 or els.shape[1:] != (4, 4):
            raise ValueError("group elements must have shape (M, 4, 4)")
        els.setflags(write=False)
        object.__setattr__(self, "elements", els)
        if self.sign_paired:
            half = len(els) // 2
            if len(els) % 2 or not np.allclose(els[half:], -els[:half], atol=1e-12):
                raise NotSignPaired("second half of the elements must negate the first half")

    def __len__(self):
        return len(self.elements)

    @property
    def order(self) -> int:
        return len(self.elements)

    def __repr__(self):
        return f"SymmetryGroup(name={self.name!r}, M={self.order}, sign_paired={self.sign_paired})"

    def index_of(self, matrix, atol=1e-9):
        """Index of the element equal to ``matrix`` (max-abs tolerance), or None."""
        diff = np.abs(self.elements - np.asarray(matrix)[None]).max(axis=(1, 2))
        k = int(np.argmin(diff))
        return k if diff[k] < atol else None

    def check(self, atol=1e-9):
        """Raise ``ValueError`` unless the elements are orthogonal and form a group."""
        eye = np.eye(4)
        for P in self.elements:
            if np.abs(P.T @ P - eye).max() >= 1e-10:
                raise ValueError("non-orthogonal group element")
        if self.index_of(eye, atol) is None:
            raise ValueError("group lacks the identity")
        for P in self.elements:
            if self.index_of(P.T, atol) is None:
                raise ValueError("group is not closed under inverses")
            prods = np.einsum("ij,mjk->mik", P, self.elements)
            for Q in prods:
                if self.index_of(Q, atol) is None:
                    raise ValueError("group is not closed under composition")
        return self


def _cubic_rotations():
    """The 24 proper rotations of the point group 432 as unit quaternions."""
    quats = [np.array([1.0, 0.0, 0.0, 0.0])]
    faces = np.eye(3)
    for axis in faces:
        for angle in (np.pi / 2, -np.pi / 2):
            quats.append(axis_angle_quaternion(axis, angle))
    for axis in faces:
        quats.append(axis_angle_quaternion(axis, np.pi))
    for sx in (1, -1):
        for sy in (1, -1):
            axis = np.array([1.0, sx, sy])
            for angle in (2 * np.pi / 3, -2 * np.pi / 3):
                quats.append(axis_angle_quaternion(axis, angle))
    for i, j in ((0, 1), (0, 2), (1, 2)):
        for s in (1, -1):
            axis = np.zeros(3)
            axis[i], axis[j] = 1.0, s
            quats.append(axis_angle_quaternion(axis, np.pi))
    return np.array(quats)


def build_cubic_group() -> SymmetryGroup:
    """48-element sign-paired cubic group: the 24 rotations of 432, then their negatives."""
    rots = _cubic_rotations()
    mats = np.array([left_matrix(q) for q in rots])
    group = SymmetryGroup(np.concatenate([mats, -mats]), sign_paired=True, name="cubic")
    return group.check()


def build_sign_group() -> SymmetryGroup:
    eye = np.eye(4)
    return SymmetryGroup(np.array([eye, -eye]), sign_paired=True, name="sign")


def build_trivial_group() -> SymmetryGroup:
    return SymmetryGroup(np.eye(4)[None], sign_paired=False, name="trivial")


def quotient_group(g: SymmetryGroup) -> SymmetryGroup:
    """Positive representatives of each ``{P, -P}`` pair (the first half of ``g``)."""
    if not g.sign_paired:
        raise NotSignPaired(f"{g!r} is not sign paired")
    half = g.order // 2
    name = "trivial" if half == 1 else f"{g.name}/sign"
    return SymmetryGroup(g.elements[:half], sign_paired=False, name=name)


def group_by_name(name: str) -> SymmetryGroup:
    builders = {"cubic": build_cubic_group, "sign": build_sign_group}
    try:
        return builders[name]()
    except KeyError:
        raise ValueError(f"unknown symmetry group {name!r}; choose from {sorted(builders)}") from None


def group_orbit(q, g: SymmetryGroup) -> np.ndarray:
    """All images ``P_m q``; shape ``(..., M, 4)``."""
    q = np.asarray(q, dtype=float)
    M = g.order
    # one GEMM: column block m of the stacked matrix is P_m^T
    return (q @ g.elements.transpose(2, 0, 1).reshape(4, M * 4)).reshape(*q.shape[:-1], M, 4)


def group_distance(a, b, g: SymmetryGroup):
    """Symmetry-aware angle ``min_P arccos(a^T P b)`` in radians.

    Broadcasts over leading axes of ``a`` and ``b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    inner = np.einsum("...i,...mi->...m", a, group_orbit(b, g))
    d = np.arccos(np.clip(inner.max(axis=-1), -1.0, 1.0))
    return float(d) if np.ndim(d) == 0 else d


def in_cubic_fz(q, tol=0.0) -> np.ndarray:
    """Whether ``q`` satisfies the 13 cubic fundamental-zone inequalities.

    Quaternions with ``q1 == 0`` are never inside.
    """
    q = np.asarray(q, dtype=float)
    q1 = q[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        r2, r3, r4 = (q[..., k] / q1 for k in (1, 2, 3))
        lim1 = SQRT2 - 1 + tol
        lim3 = SQRT2 + tol
        ok = (np.abs(r2) <= lim1) & (np.abs(r3) <= lim1) & (np.abs(r4) <= lim1)
        ok &= np.abs(r2 + r3 + r4) <= 1 + tol
        ok &= np.abs(r2 - r3 + r4) <= 1 + tol
        ok &= np.abs(r2 + r3 - r4) <= 1 + tol
        ok &= np.abs(r2 - r3 - r4) <= 1 + tol
        for u, v in ((r2, r3), (r2, r4), (r3, r4)):
            ok &= (np.abs(u - v) <= lim3) & (np.abs(u + v) <= lim3)
    return ok & (q1 != 0)


def fz_element_index(q, g: SymmetryGroup, tol=1e-12) -> np.ndarray:
    """Lowest index ``m`` such that ``P_m q`` lies in the FZ with positive scalar part."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    out = np.empty(len(q), dtype=int)
    for start in range(0, len(q), _FZ_CHUNK):
        chunk = q[start:start + _FZ_CHUNK]
        images = group_orbit(chunk, g)
        ok = in_cubic_fz(images, tol) & (images[..., 0] > 0)
        found = ok.any(axis=1)
        if not found.all():
            bad = start + int(np.flatnonzero(~found)[0])
            raise NoFZRepresentative(f"no group element maps sample {bad} into the fundamental zone")
        out[start:start + len(chunk)] = ok.argmax(axis=1)
    return out


def map_to_fundamental_zone(q, g: SymmetryGroup, tol=1e-12) -> np.ndarray:
    """Symmetry-equivalent representative of ``q`` inside the cubic FZ.

    Among all images ``P_m q`` that satisfy the FZ inequalities with a
    positive scalar part, the one with the lowest element index is returned.
    """
    q = np.asarray(q, dtype=float)
    flat = np.atleast_2d(q)
    idx = fz_element_index(flat, g, tol)
    mapped = np.einsum("nij,nj->ni", g.elements[idx], flat)
    return mapped.reshape(q.shape)


def euler_to_quaternion(phi1, Phi, phi2) -> np.ndarray:
    """Bunge (ZXZ) Euler angles in radians to a unit quaternion ``q_z(phi1) q_x(Phi) q_z(phi2)``."""
    phi1, Phi, phi2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (phi1, Phi, phi2)))
    s, d = (phi1 + phi2) / 2, (phi1 - phi2) / 2
    c, h = np.cos(Phi / 2), np.sin(Phi / 2)
    return np.stack([c * np.cos(s), h * np.cos(d), h * np.sin(d), c * np.sin(s)], axis=-1)


def quaternion_to_euler(q):
    """Inverse of :func:`euler_to_quaternion`; returns ``(phi1, Phi, phi2)``.

    ``phi1`` and ``phi2`` are wrapped to ``[0, 2*pi)``, ``Phi`` lies in ``[0, pi]``.
    """
    q = np.asarray(q, dtype=float)
    q1, q2, q3, q4 = np.moveaxis(q, -1, 0)
    Phi = 2 * np.arctan2(np.hypot(q2, q3), np.hypot(q1, q4))
    s = np.arctan2(q4, q1)
    d = np.arctan2(q3, q2)
    two_pi = 2 * np.pi
    return np.mod(s + d, two_pi), Phi, np.mod(s - d, two_pi)
